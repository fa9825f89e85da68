//! Spectral calculus of A = -V (Delta_{1,k})^{-1} on H = L^2(V^{-1} r dr):
//! Green's function of Delta_{1,k}, distorted transform a(c) = int phi v r dr,
//! reconstruction R[a] = (1/(pi k^2)) int a phi dc / |W|^2 and functions of A.
//!
//! Everything downstream works with phi~ = phi / |W|, which stays bounded
//! even where phi and W are individually exponentially large.

use crate::connection::{solve_slice, BasisSlice, SolverOptions};
use crate::error::{domain, Error, Result};
use crate::profiles::VortexProfile;
use crate::quad::{fd_weights, origin_grid_weights, interval_weights, stencil_start, GaussRule};
use crate::specfun::bessel::{i1e, k1e};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    PlainRdr,
    WeightedVinvRdr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialFunction {
    pub grid: Vec<f64>,
    pub values: Vec<Complex64>,
    pub weight_mode: WeightMode,
}

impl RadialFunction {
    pub fn new(grid: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Grid(format!(
                "{} grid nodes but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 4 {
            return Err(Error::Grid("radial functions need at least 4 nodes".into()));
        }
        if !(grid[0] > 0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("radial grid must be positive and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Grid("radial function has non-finite values".into()));
        }
        Ok(RadialFunction {
            grid,
            values,
            weight_mode: WeightMode::PlainRdr,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &[f64], f: F) -> Result<Self> {
        let values = grid.iter().map(|&r| Complex64::new(f(r), 0.0)).collect();
        Self::new(grid.to_vec(), values)
    }

    pub fn zeros(grid: &[f64]) -> Self {
        RadialFunction {
            grid: grid.to_vec(),
            values: vec![Complex64::default(); grid.len()],
            weight_mode: WeightMode::PlainRdr,
        }
    }

    fn with_values(&self, values: Vec<Complex64>) -> Self {
        RadialFunction {
            grid: self.grid.clone(),
            values,
            weight_mode: self.weight_mode,
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.with_values(self.values.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_grid(self, other)?;
        Ok(self.with_values(
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Pointwise product with a real function of r.
    pub fn mul_fn<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        self.with_values(
            self.grid.iter().zip(&self.values).map(|(&r, v)| v * f(r)).collect(),
        )
    }

    /// L^2(r dr) norm.
    pub fn norm(&self) -> f64 {
        let w = origin_grid_weights(&self.grid);
        self.grid
            .iter()
            .zip(&self.values)
            .zip(&w)
            .map(|((r, v), w)| w * r * v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

fn same_grid(a: &RadialFunction, b: &RadialFunction) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Grid("radial functions on different grids".into()));
    }
    Ok(())
}

/// Smooth cutoff: 1 for r <= r0, 0 for r >= r1, C-infinity in between.
pub fn smooth_cutoff(r: f64, r0: f64, r1: f64) -> f64 {
    if r <= r0 {
        return 1.0;
    }
    if r >= r1 {
        return 0.0;
    }
    let t = (r - r0) / (r1 - r0);
    let a = (-1.0 / (1.0 - t)).exp();
    let b = (-1.0 / t).exp();
    a / (a + b)
}

/// Grid with a node at 0 prepended, for integrals starting at the origin.
fn with_origin(grid: &[f64]) -> Vec<f64> {
    let mut g = Vec::with_capacity(grid.len() + 1);
    g.push(0.0);
    g.extend_from_slice(grid);
    g
}

/// Precomputed Green's function of Delta_{1,k} on a grid:
/// psi = -K_1(kr) int_0^r I_1(ks) w s ds - I_1(kr) int_r^inf K_1(ks) w s ds.
///
/// Both cumulative integrals are carried relative to the current node
/// (e^{-kr} and e^{kr} factored out) so nothing overflows.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    pub k: f64,
    pub grid: Vec<f64>,
    // with a node at r = 0 prepended
    i1s: Vec<f64>,
    k1s: Vec<f64>,
    inner_decay: Vec<f64>,
    inner_w: Vec<(usize, [f64; 4])>,
    outer_w: Vec<(usize, [f64; 4])>,
}

impl GreenOperator {
    pub fn new(grid: &[f64], k: f64) -> Result<Self> {
        if k == 0.0 || !k.is_finite() {
            return domain(format!("Delta_1,k inverse needs k != 0, got {k}"));
        }
        if grid.len() < 4 {
            return Err(Error::Grid("Green's function needs at least 4 nodes".into()));
        }
        let k = k.abs();
        let g = with_origin(grid);
        let n = g.len();
        let i1s: Vec<f64> = g.iter().map(|&s| i1e(k * s)).collect();
        let k1s: Vec<f64> = g.iter().map(|&s| if s > 0.0 { k1e(k * s) } else { 0.0 }).collect();
        let mut inner_decay = Vec::with_capacity(n - 1);
        let mut inner_w = Vec::with_capacity(n - 1);
        let mut outer_w = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let (s, wt) = interval_weights(&g, i);
            let (lo, hi) = (g[i], g[i + 1]);
            inner_decay.push((-k * (hi - lo)).exp());
            let mut wi = [0.0; 4];
            let mut wo = [0.0; 4];
            for j in 0..4 {
                let sj = g[s + j];
                wi[j] = wt[j] * i1s[s + j] * (k * (sj - hi)).exp() * sj;
                if sj > 0.0 {
                    wo[j] = wt[j] * k1s[s + j] * (-k * (sj - lo)).exp() * sj;
                }
            }
            inner_w.push((s, wi));
            outer_w.push((s, wo));
        }
        Ok(GreenOperator {
            k,
            grid: grid.to_vec(),
            i1s,
            k1s,
            inner_decay,
            inner_w,
            outer_w,
        })
    }

    /// Applies the inverse to samples on `grid`.
    pub fn apply(&self, w: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.len() + 1;
        let val = |j: usize| if j == 0 { Complex64::default() } else { w[j - 1] };
        let mut inner = vec![Complex64::default(); n];
        for i in 0..n - 1 {
            let (s, wt) = &self.inner_w[i];
            let acc: Complex64 = (0..4).map(|j| val(s + j) * wt[j]).sum();
            inner[i + 1] = inner[i] * self.inner_decay[i] + acc;
        }
        let mut outer = vec![Complex64::default(); n];
        for i in (0..n - 1).rev() {
            let (s, wt) = &self.outer_w[i];
            let acc: Complex64 = (0..4).map(|j| val(s + j) * wt[j]).sum();
            outer[i] = outer[i + 1] * self.inner_decay[i] + acc;
        }
        (1..n)
            .map(|i| -(inner[i] * self.k1s[i] + outer[i] * self.i1s[i]))
            .collect()
    }
}

/// (Delta_{1,k})^{-1} w through [`GreenOperator`].
pub fn delta1k_inverse(w: &RadialFunction, k: f64) -> Result<RadialFunction> {
    let g = GreenOperator::new(&w.grid, k)?;
    Ok(w.with_values(g.apply(&w.values)))
}

/// Discrete Delta_{1,k} with 5-point finite differences.
pub fn apply_delta1k(psi: &RadialFunction, k: f64) -> RadialFunction {
    let g = &psi.grid;
    let n = g.len();
    let width = 5.min(n);
    let out = (0..n)
        .map(|i| {
            let s = stencil_start(i, n, width);
            let w = fd_weights(g[i], &g[s..s + width], 2);
            let mut d1 = Complex64::default();
            let mut d2 = Complex64::default();
            for j in 0..width {
                d1 += psi.values[s + j] * w[1][j];
                d2 += psi.values[s + j] * w[2][j];
            }
            let r = g[i];
            d2 + d1 / r - psi.values[i] * (1.0 / (r * r) + k * k)
        })
        .collect();
    psi.with_values(out)
}

/// A w = -V (Delta_{1,k})^{-1} w.
pub fn apply_a(w: &RadialFunction, p: &VortexProfile, k: f64) -> Result<RadialFunction> {
    let psi = delta1k_inverse(w, k)?;
    Ok(psi.mul_fn(|r| -p.v(r)))
}

/// <u, v>_H = int u conj(v) V^{-1} r dr.
pub fn inner_h(u: &RadialFunction, v: &RadialFunction, p: &VortexProfile) -> Result<Complex64> {
    same_grid(u, v)?;
    let w = origin_grid_weights(&u.grid);
    Ok(u.grid
        .iter()
        .enumerate()
        .map(|(i, &r)| u.values[i] * v.values[i].conj() * (w[i] * r / p.v(r)))
        .sum())
}

/// Composite Gauss panels in c: uniform in sqrt(c) on [c_min, 1/2] and
/// uniform in (1-c)^{1/3} on [1/2, 1 - c_min]. When `critical` is set the
/// panels are additionally graded geometrically towards that point, where
/// |W| is not smooth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CQuadrature {
    pub c_min: f64,
    pub low_panels: usize,
    pub high_panels: usize,
    pub order: usize,
    #[serde(default)]
    pub critical: Option<f64>,
}

impl Default for CQuadrature {
    fn default() -> Self {
        CQuadrature {
            c_min: 1e-4,
            low_panels: 16,
            high_panels: 8,
            order: 8,
            critical: None,
        }
    }
}

impl CQuadrature {
    /// Same layout with every panel split in two.
    pub fn refined(&self) -> Self {
        CQuadrature {
            low_panels: 2 * self.low_panels,
            high_panels: 2 * self.high_panels,
            ..*self
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_min < 0.25) {
            return domain(format!("c_min = {} outside (0, 0.25)", self.c_min));
        }
        if self.order == 0 || self.low_panels == 0 || self.high_panels == 0 {
            return domain("c quadrature needs at least one panel and one node");
        }
        if (self.low_panels + self.high_panels) * self.order < 32 {
            return domain("c quadrature needs at least 32 nodes");
        }
        Ok(())
    }

    /// Ascending nodes and weights on [c_min, 1 - c_min].
    pub fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let rule = GaussRule::new(self.order);
        let mut out: Vec<(f64, f64)> = Vec::new();
        let crit = self
            .critical
            .filter(|&c| c > self.c_min && c < 1.0 - self.c_min);
        let (s0, s1) = (self.c_min.sqrt(), 0.5f64.sqrt());
        let low = panel_edges(s0, s1, self.low_panels, crit.filter(|&c| c < 0.5).map(f64::sqrt));
        for w in low.windows(2) {
            for (s, wt) in rule.mapped(w[0], w[1]) {
                out.push((s * s, 2.0 * s * wt));
            }
        }
        let (e0, e1) = (self.c_min.cbrt(), 0.5f64.cbrt());
        let high = panel_edges(e0, e1, self.high_panels, crit.filter(|&c| c >= 0.5).map(|c| (1.0 - c).cbrt()));
        for w in high.windows(2) {
            for (e, wt) in rule.mapped(w[0], w[1]) {
                out.push((1.0 - e * e * e, 3.0 * e * e * wt));
            }
        }
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        out.into_iter().unzip()
    }

    /// Extra panels [c_min/2, c_min] and [1 - c_min, 1 - c_min/2] used for
    /// the clip-sensitivity estimate.
    pub fn clip_nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let rule = GaussRule::new(self.order);
        let mut out: Vec<(f64, f64)> = rule.mapped(0.5 * self.c_min, self.c_min).collect();
        out.extend(rule.mapped(1.0 - self.c_min, 1.0 - 0.5 * self.c_min));
        out.into_iter().unzip()
    }
}

/// `n` uniform panels on [a, b]; with a break point, the panel holding it is
/// split there and the pieces are graded geometrically towards it.
fn panel_edges(a: f64, b: f64, n: usize, brk: Option<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    if let Some(x) = brk.filter(|&x| x > a && x < b) {
        let width = (b - a) / n as f64;
        e.push(x);
        for j in 1..=12 {
            let d = width * 0.5f64.powi(j);
            e.push(x - d);
            e.push(x + d);
        }
        e.retain(|&y| y >= a && y <= b);
        e.sort_by(f64::total_cmp);
        e.dedup_by(|u, v| (*u - *v).abs() < 1e-14 * width);
    }
    e
}

/// phi~ = phi / |W| for one k on a common radial grid and c nodes.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub k: f64,
    pub grid: Vec<f64>,
    pub quadrature: CQuadrature,
    pub c: Vec<f64>,
    pub wc: Vec<f64>,
    pub phi_tilde: Vec<Vec<f64>>,
    pub log_abs_w: Vec<f64>,
    pub clip_c: Vec<f64>,
    pub clip_wc: Vec<f64>,
    pub clip_phi_tilde: Vec<Vec<f64>>,
    pub max_w_residual: f64,
}

fn slices(
    p: &VortexProfile,
    k: f64,
    grid: &[f64],
    cs: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<BasisSlice>> {
    cs.par_iter()
        .map(|&c| solve_slice(p, c, k, grid, opts))
        .collect()
}

pub fn build_basis_table(
    p: &VortexProfile,
    k: f64,
    grid: &[f64],
    quadrature: CQuadrature,
    opts: &SolverOptions,
) -> Result<BasisTable> {
    quadrature.check()?;
    if k == 0.0 || !k.is_finite() {
        return domain(format!("basis table needs k != 0, got {k}"));
    }
    let mut quadrature = quadrature;
    if quadrature.critical.is_none() && p.v0 > 0.0 && p.v0 < 1.0 {
        quadrature.critical = Some(p.v0);
    }
    let (c, wc) = quadrature.nodes();
    let (clip_c, clip_wc) = quadrature.clip_nodes();
    let main = slices(p, k, grid, &c, opts)?;
    let clip = slices(p, k, grid, &clip_c, opts)?;
    let max_w_residual = main.iter().chain(&clip).map(|s| s.w_residual).fold(0.0, f64::max);
    Ok(BasisTable {
        k,
        grid: grid.to_vec(),
        quadrature,
        c,
        wc,
        phi_tilde: main.iter().map(|s| s.phi_tilde()).collect(),
        log_abs_w: main.iter().map(|s| s.log_abs_w).collect(),
        clip_c,
        clip_wc,
        clip_phi_tilde: clip.iter().map(|s| s.phi_tilde()).collect(),
        max_w_residual,
    })
}

/// a(c) on the c nodes with the density 1/|W|^2. `tilde` holds a / |W|,
/// which is what the reconstruction consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients {
    pub k: f64,
    pub c_nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<Complex64>,
    pub density: Vec<f64>,
    pub tilde: Vec<Complex64>,
    pub clip_tilde: Vec<Complex64>,
}

fn check_table_grid(table: &BasisTable, v: &RadialFunction) -> Result<()> {
    if table.grid != v.grid {
        return Err(Error::Grid("function grid differs from the basis grid".into()));
    }
    Ok(())
}

fn transform_rows(rows: &[Vec<f64>], rw: &[f64], v: &RadialFunction) -> Vec<Complex64> {
    rows.iter()
        .map(|row| row.iter().zip(rw).zip(&v.values).map(|((p, w), x)| x * (p * w)).sum())
        .collect()
}

/// a(c) = int phi(r, c, k) v(r) r dr.
pub fn forward_transform(table: &BasisTable, v: &RadialFunction) -> Result<SpectralCoefficients> {
    check_table_grid(table, v)?;
    let sup = v.sup();
    let edge = v.values.last().unwrap().norm().max(v.values[v.values.len() - 2].norm());
    if sup > 0.0 && edge > 1e-8 * sup {
        return domain("forward transform: function not supported inside the basis grid");
    }
    let rw: Vec<f64> = origin_grid_weights(&table.grid)
        .iter()
        .zip(&table.grid)
        .map(|(w, r)| w * r)
        .collect();
    let tilde = transform_rows(&table.phi_tilde, &rw, v);
    let clip_tilde = transform_rows(&table.clip_phi_tilde, &rw, v);
    let values = tilde
        .iter()
        .zip(&table.log_abs_w)
        .map(|(t, l)| t * l.exp())
        .collect();
    let density = table.log_abs_w.iter().map(|l| (-2.0 * l).exp()).collect();
    Ok(SpectralCoefficients {
        k: table.k,
        c_nodes: table.c.clone(),
        weights: table.wc.clone(),
        values,
        density,
        tilde,
        clip_tilde,
    })
}

fn combine(grid_len: usize, k: f64, rows: &[Vec<f64>], coef: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); grid_len];
    for (row, a) in rows.iter().zip(coef) {
        if *a == Complex64::default() {
            continue;
        }
        for (o, p) in out.iter_mut().zip(row) {
            *o += a * p;
        }
    }
    let s = 1.0 / (PI * k * k);
    out.iter_mut().for_each(|o| *o *= s);
    out
}

/// R[m a](r) = (1/(pi k^2)) sum_c w_c m(c) a~(c) phi~(r, c) for a multiplier m.
pub fn reconstruct_with<F: Fn(f64) -> Complex64>(
    table: &BasisTable,
    a: &SpectralCoefficients,
    m: F,
) -> Result<(RadialFunction, RadialFunction)> {
    if a.c_nodes != table.c {
        return Err(Error::Grid("coefficients on different c nodes".into()));
    }
    let coef: Vec<Complex64> = (0..table.c.len())
        .map(|i| a.tilde[i] * m(table.c[i]) * table.wc[i])
        .collect();
    let clip: Vec<Complex64> = (0..table.clip_c.len())
        .map(|i| a.clip_tilde[i] * m(table.clip_c[i]) * table.clip_wc[i])
        .collect();
    let n = table.grid.len();
    let main = combine(n, table.k, &table.phi_tilde, &coef);
    let extra = combine(n, table.k, &table.clip_phi_tilde, &clip);
    let mk = |values| RadialFunction {
        grid: table.grid.clone(),
        values,
        weight_mode: WeightMode::PlainRdr,
    };
    Ok((mk(main), mk(extra)))
}

/// R[a](r) = (1/(pi k^2)) int_0^1 a(c) phi(r, c, k) dc / |W|^2.
pub fn reconstruct(table: &BasisTable, a: &SpectralCoefficients) -> Result<RadialFunction> {
    Ok(reconstruct_with(table, a, |_| Complex64::new(1.0, 0.0))?.0)
}

/// Result of f(A) v with the clip-sensitivity estimate.
#[derive(Debug, Clone)]
pub struct FunctionOfA {
    pub value: RadialFunction,
    /// Relative change when c_min is halved.
    pub clip_sensitivity: f64,
    pub flagged: bool,
}

pub const CLIP_FLAG: f64 = 1e-2;

/// f(A) v = V R[(k^2/c)^2 f(c/k^2) a], given the transform of v.
pub fn apply_function_of_a_coeffs<F: Fn(f64) -> Complex64>(
    f: F,
    a: &SpectralCoefficients,
    table: &BasisTable,
    p: &VortexProfile,
) -> Result<FunctionOfA> {
    let k2 = table.k * table.k;
    let (main, extra) = reconstruct_with(table, a, |c| f(c / k2) * (k2 / c).powi(2))?;
    let value = main.mul_fn(|r| p.v(r));
    let extra = extra.mul_fn(|r| p.v(r));
    let nv = value.norm();
    let clip_sensitivity = if nv > 0.0 { extra.norm() / nv } else { 0.0 };
    Ok(FunctionOfA {
        value,
        clip_sensitivity,
        flagged: clip_sensitivity > CLIP_FLAG,
    })
}

pub fn apply_function_of_a<F: Fn(f64) -> Complex64>(
    f: F,
    v: &RadialFunction,
    table: &BasisTable,
    p: &VortexProfile,
) -> Result<FunctionOfA> {
    let a = forward_transform(table, v)?;
    apply_function_of_a_coeffs(f, &a, table, p)
}

/// |LHS - RHS| / LHS for ||Av||_H^2 = (1/(pi k^2)) int |a|^2 dc / |W|^2.
pub fn plancherel_residual(v: &RadialFunction, table: &BasisTable, p: &VortexProfile) -> Result<f64> {
    let av = apply_a(v, p, table.k)?;
    let lhs = inner_h(&av, &av, p)?.re;
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let a = forward_transform(table, v)?;
    let rhs: f64 = a
        .tilde
        .iter()
        .zip(&table.wc)
        .map(|(t, w)| t.norm_sqr() * w)
        .sum::<f64>()
        / (PI * table.k * table.k);
    Ok((lhs - rhs).abs() / lhs)
}

/// Spectral CSV: c,a_re,a_im,absW,density.
pub fn write_spectral_csv<W: Write>(out: &mut W, a: &SpectralCoefficients) -> Result<()> {
    writeln!(out, "c,a_re,a_im,absW,density")?;
    for i in 0..a.c_nodes.len() {
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?}",
            a.c_nodes[i],
            a.values[i].re,
            a.values[i].im,
            a.density[i].sqrt().recip(),
            a.density[i]
        )?;
    }
    Ok(())
}
