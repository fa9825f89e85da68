//! Two-sided connection problem for
//! phi'' + phi'/r - phi/r^2 + xi^2 Q(r,c) phi = 0:
//! the regular solution phi ~ xi r from the origin, the outgoing solution
//! f+ ~ (xi r)^{-1/2} e^{i xi r} from infinity, and their Wronskian
//! W = r (phi' f+ - phi f+').
//!
//! Both are integrated on w = r^{1/2} phi with the Magnus scheme in
//! [`magnus`]. Values are kept as mantissa plus log scale so deep
//! evanescent regions never overflow.

pub mod magnus;

use crate::error::{domain, Error, Result};
use crate::langer::{classify_regime, RegimeTag, DEFAULT_DELTA, DEFAULT_M};
use crate::profiles::{q_derivs, turning_point, VortexProfile};
use crate::quad::{adaptive, interval_weights};
use crate::specfun::{bessel, hankel_plus_with_derivative};
use magnus::{adjugate, propagate, StepControl};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Threshold on the outer-start indicator |1 - Q(R)| / (xi R).
pub const OUTER_INDICATOR_TOL: f64 = 1e-10;
/// Largest accepted relative spread of W over the selected radii.
pub const W_RESIDUAL_REJECT: f64 = 1e-4;
/// Log-magnitude above which stored samples are rescaled.
const SHIFT_THRESHOLD: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseBranch {
    Auto,
    /// e^{i xi r}
    Plain,
    /// e^{i xi int_0^r sqrt Q}
    Origin,
    /// e^{i xi int_{r_c}^r sqrt|Q|}
    TurningPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    /// Double r_max until the outer indicator passes.
    pub escalate: bool,
    pub tol: f64,
    pub m: f64,
    pub delta: f64,
    pub branch: PhaseBranch,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            r_min: None,
            r_max: None,
            escalate: true,
            tol: 1e-11,
            m: DEFAULT_M,
            delta: DEFAULT_DELTA,
            branch: PhaseBranch::Auto,
        }
    }
}

/// phi and f+ for one (c, k) on a radial grid.
///
/// Stored samples are scaled: true phi = `phi * exp(phi_shift)`, true
/// f+ = `fplus * exp(fplus_shift)`. Both shifts are zero unless the
/// solution exceeds e^600 on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSlice {
    pub c: f64,
    pub k: f64,
    pub xi: f64,
    pub grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub fplus: Vec<Complex64>,
    pub dfplus: Vec<Complex64>,
    pub phi_shift: f64,
    pub fplus_shift: f64,
    /// W / |W|.
    pub w_phase: Complex64,
    /// ln |W|.
    pub log_abs_w: f64,
    pub w_residual: f64,
    pub regime: Option<RegimeTag>,
    pub branch: PhaseBranch,
    pub r_min: f64,
    pub r_max: f64,
    pub outer_indicator: f64,
}

impl BasisSlice {
    /// The Wronskian; overflows to infinity only when ln|W| > 709.
    pub fn w(&self) -> Complex64 {
        self.w_phase * self.log_abs_w.exp()
    }

    pub fn abs_w(&self) -> f64 {
        self.log_abs_w.exp()
    }

    /// phi / |W| on the grid.
    pub fn phi_tilde(&self) -> Vec<f64> {
        let s = (self.phi_shift - self.log_abs_w).exp();
        self.phi.iter().map(|v| v * s).collect()
    }

    /// phi' / |W| on the grid.
    pub fn dphi_tilde(&self) -> Vec<f64> {
        let s = (self.phi_shift - self.log_abs_w).exp();
        self.dphi.iter().map(|v| v * s).collect()
    }

    /// Im(r f+' conj f+) at grid index i.
    pub fn flux(&self, i: usize) -> f64 {
        let f = self.fplus[i];
        let df = self.dfplus[i];
        self.grid[i] * (df * f.conj()).im * (2.0 * self.fplus_shift).exp()
    }

    /// True phi at grid index i.
    pub fn phi_at(&self, i: usize) -> f64 {
        self.phi[i] * self.phi_shift.exp()
    }

    /// True f+ at grid index i.
    pub fn fplus_at(&self, i: usize) -> Complex64 {
        self.fplus[i] * self.fplus_shift.exp()
    }
}

/// phi samples with a common log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSolution {
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub log_scale: f64,
}

/// f+ samples with a common log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSolution {
    pub f: Vec<Complex64>,
    pub df: Vec<Complex64>,
    pub log_scale: f64,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Grid("empty radial grid".into()));
    }
    if !(grid[0] > 0.0) || grid.iter().any(|r| !r.is_finite()) {
        return Err(Error::Grid("radial grid must be positive and finite".into()));
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Grid(format!("radial grid not strictly increasing at index {}", i + 1)));
    }
    Ok(())
}

fn check_ck(c: f64, k: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return domain(format!("c = {c} outside (0, 1)"));
    }
    if k == 0.0 || !k.is_finite() {
        return domain(format!("k = {k} must be finite and nonzero"));
    }
    Ok(())
}

pub fn default_r_min(xi: f64) -> f64 {
    1e-3 / xi.abs().max(1.0)
}

pub fn default_r_max(xi: f64, r_c: Option<f64>) -> f64 {
    let xi = xi.abs();
    30f64.max(30.0 / xi).max(3.0 * r_c.unwrap_or(0.0))
}

/// |1 - Q(R)| / (xi R): relative size of the neglected terms in the outer start.
pub fn outer_indicator(p: &VortexProfile, c: f64, xi: f64, r: f64) -> f64 {
    q_derivs(p, r, c).3.abs() / (xi.abs() * r)
}

struct Problem<'a> {
    p: &'a VortexProfile,
    c: f64,
    xi: f64,
}

impl Problem<'_> {
    fn pot(&self, r: f64) -> f64 {
        self.xi * self.xi * q_derivs(self.p, r, self.c).0 - 0.75 / (r * r)
    }

    /// Frobenius start (w, w') at r.
    fn phi_start(&self, r: f64) -> (f64, f64) {
        let (xi, c) = (self.xi, self.c);
        let v0 = self.p.v0;
        let v1 = self.p.dv(0.0);
        let a = xi * xi * (c - v0) / (8.0 * (1.0 - c));
        let b = -xi * xi * v1 / (15.0 * (1.0 - c));
        let phi = xi * r * (1.0 + a * r * r + b * r * r * r);
        let dphi = xi * (1.0 + 3.0 * a * r * r + 4.0 * b * r * r * r);
        let sr = r.sqrt();
        (sr * phi, sr * dphi + 0.5 * phi / sr)
    }

    /// int_R^inf (1 - sqrt Q) ds with s = R/t.
    fn phase_tail(&self, r: f64) -> f64 {
        let f = |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            let s = r / t;
            let (q, _, _, omq) = q_derivs(self.p, s, self.c);
            omq / (1.0 + q.max(0.0).sqrt()) * r / (t * t)
        };
        adaptive(&f, 0.0, 1.0, 1e-16)
    }

    /// int_a^b (sqrt|Q| - 1) ds with a square-root substitution at a.
    fn phase_excess(&self, a: f64, b: f64) -> f64 {
        let wmax = (b - a).sqrt();
        let f = |w: f64| {
            let s = a + w * w;
            let (q, _, _, omq) = q_derivs(self.p, s, self.c);
            let excess = if q > 0.0 {
                -omq / (1.0 + q.sqrt())
            } else {
                q.abs().sqrt() - 1.0
            };
            2.0 * w * excess
        };
        // split so the adaptive rule sees the oscillation-free integrand in pieces
        let n = (wmax.ceil() as usize).clamp(1, 64);
        (0..n)
            .map(|i| {
                let lo = wmax * i as f64 / n as f64;
                let hi = wmax * (i + 1) as f64 / n as f64;
                adaptive(&f, lo, hi, 1e-15)
            })
            .sum()
    }

    /// Constant unit factor converting the plain e^{i xi r} normalization
    /// at infinity to the requested branch.
    fn branch_factor(&self, branch: PhaseBranch, r_c: Option<f64>, r_max: f64) -> Complex64 {
        let phase = match branch {
            PhaseBranch::Auto | PhaseBranch::Plain => 0.0,
            PhaseBranch::Origin => {
                self.xi * (self.phase_excess(0.0, r_max) - self.phase_tail(r_max))
            }
            PhaseBranch::TurningPoint => {
                let rc = r_c.unwrap_or(0.0);
                self.xi * (self.phase_excess(rc, r_max) - self.phase_tail(r_max) - rc)
            }
        };
        Complex64::from_polar(1.0, phase)
    }

    /// (w, w') of f+ at R from the Hankel solution with WKB amplitude and
    /// phase corrections.
    fn fplus_start(&self, r: f64) -> Result<(Complex64, Complex64)> {
        let xi = self.xi;
        let (hv, hd) = hankel_plus_with_derivative(xi * r)?;
        let h = Complex64::from(hv);
        let hp = Complex64::from(hd);
        let (q, dq, _, _) = q_derivs(self.p, r, self.c);
        let theta = -xi * self.phase_tail(r);
        let norm = (PI / 2.0).sqrt() * Complex64::from_polar(1.0, 0.75 * PI);
        let f = norm * h * q.powf(-0.25) * Complex64::from_polar(1.0, theta);
        let dtheta = xi * (q.sqrt() - 1.0);
        let df = f * (xi * hp / h - dq / (4.0 * q) + Complex64::new(0.0, dtheta));
        let sr = r.sqrt();
        Ok((sr * f, sr * df + 0.5 * f / sr))
    }
}

fn select_branch(p: &VortexProfile, c: f64, xi: f64, branch: PhaseBranch) -> PhaseBranch {
    match branch {
        PhaseBranch::Auto => {
            if xi <= (1.0 - c).cbrt() {
                PhaseBranch::Plain
            } else if c <= p.v0 || p.is_degenerate() {
                PhaseBranch::Origin
            } else {
                PhaseBranch::TurningPoint
            }
        }
        b => b,
    }
}

struct Raw {
    nodes: Vec<f64>,
    node_of_stop: Vec<usize>,
    yphi: Vec<[f64; 2]>,
    lphi: Vec<f64>,
    yf: Vec<[Complex64; 2]>,
    lf: Vec<f64>,
}

fn renorm_real(y: &mut [f64; 2], l: &mut f64) {
    let n = y[0].abs().max(y[1].abs());
    if n > 1e100 || (n < 1e-100 && n > 0.0) {
        y[0] /= n;
        y[1] /= n;
        *l += n.ln();
    }
}

fn renorm_complex(y: &mut [Complex64; 2], l: &mut f64) {
    let n = y[0].norm().max(y[1].norm());
    if n > 1e100 || (n < 1e-100 && n > 0.0) {
        y[0] /= n;
        y[1] /= n;
        *l += n.ln();
    }
}

struct Setup {
    r_start: f64,
    r_max: f64,
    r_c: Option<f64>,
    indicator: f64,
}

fn setup(prob: &Problem, grid: &[f64], opts: &SolverOptions, need_outer: bool) -> Result<Setup> {
    let p = prob.p;
    if need_outer && (1.0 - p.v_inf()).abs() > 1e-8 {
        return Err(Error::Profile(format!(
            "V tends to {} instead of 1 at infinity",
            p.v_inf()
        )));
    }
    let r_c = if prob.c > p.v0 { turning_point(p, prob.c)? } else { None };
    let r_min = opts.r_min.unwrap_or_else(|| default_r_min(prob.xi));
    if !(r_min > 0.0) {
        return domain(format!("r_min = {r_min} must be positive"));
    }
    let r_start = r_min.min(grid[0]);
    let mut r_max = opts
        .r_max
        .unwrap_or_else(|| default_r_max(prob.xi, r_c))
        .max(*grid.last().unwrap());
    let mut indicator = outer_indicator(p, prob.c, prob.xi, r_max);
    if need_outer {
        while indicator > OUTER_INDICATOR_TOL {
            if !opts.escalate {
                let suggested = r_max * (indicator / OUTER_INDICATOR_TOL).powf(0.25) * 1.1;
                return Err(Error::OuterRadius {
                    r_max,
                    indicator,
                    suggested,
                });
            }
            r_max *= 2.0;
            indicator = outer_indicator(p, prob.c, prob.xi, r_max);
            if r_max > 1e9 {
                return Err(Error::OuterRadius {
                    r_max,
                    indicator,
                    suggested: f64::INFINITY,
                });
            }
        }
    }
    Ok(Setup {
        r_start,
        r_max,
        r_c,
        indicator,
    })
}

fn integrate(
    prob: &Problem,
    grid: &[f64],
    st: &Setup,
    tol: f64,
    branch: PhaseBranch,
    with_fplus: bool,
) -> Result<Raw> {
    let mut stops = grid.to_vec();
    if with_fplus && st.r_max > *grid.last().unwrap() {
        stops.push(st.r_max);
    }
    let ctl = StepControl {
        tol,
        ..StepControl::default()
    };
    let pot = |r: f64| prob.pot(r);
    let prop = propagate(&pot, st.r_start, &stops, &ctl)?;
    let n = prop.nodes.len();

    let (w0, wp0) = prob.phi_start(st.r_start);
    let mut y = [w0, wp0];
    let mut l = 0.0;
    renorm_real(&mut y, &mut l);
    let mut yphi = Vec::with_capacity(n);
    let mut lphi = Vec::with_capacity(n);
    yphi.push(y);
    lphi.push(l);
    for t in &prop.transfer {
        y = [t[0][0] * y[0] + t[0][1] * y[1], t[1][0] * y[0] + t[1][1] * y[1]];
        renorm_real(&mut y, &mut l);
        yphi.push(y);
        lphi.push(l);
    }

    let (mut yf, mut lf) = (Vec::new(), Vec::new());
    if with_fplus {
        let (f0, fp0) = prob.fplus_start(st.r_max)?;
        let bf = prob.branch_factor(branch, st.r_c, st.r_max);
        let mut z = [f0 * bf, fp0 * bf];
        let mut lz = 0.0;
        yf = vec![[Complex64::default(); 2]; n];
        lf = vec![0.0; n];
        yf[n - 1] = z;
        lf[n - 1] = lz;
        for j in (0..n - 1).rev() {
            let t = adjugate(&prop.transfer[j]);
            z = [t[0][0] * z[0] + t[0][1] * z[1], t[1][0] * z[0] + t[1][1] * z[1]];
            renorm_complex(&mut z, &mut lz);
            yf[j] = z;
            lf[j] = lz;
        }
    }
    Ok(Raw {
        nodes: prop.nodes,
        node_of_stop: prop.node_of_stop,
        yphi,
        lphi,
        yf,
        lf,
    })
}

/// Median over the best-conditioned radii; returns (ln|W|, phase, residual).
fn wronskian_from_raw(raw: &Raw) -> Result<(f64, Complex64, f64)> {
    let n = raw.nodes.len();
    let mut entries: Vec<(f64, Complex64, f64)> = (0..n)
        .map(|j| {
            let [w, wp] = raw.yphi[j];
            let [f, fp] = raw.yf[j];
            let a = f * wp;
            let b = fp * w;
            let m = a - b;
            let cond = (a.norm() + b.norm()) / m.norm();
            (if cond.is_finite() { cond } else { f64::INFINITY }, m, raw.lphi[j] + raw.lf[j])
        })
        .collect();
    entries.sort_by(|x, y| x.0.total_cmp(&y.0));
    let best = entries[0].0;
    if !best.is_finite() {
        return Err(Error::Connection(f64::INFINITY));
    }
    let take = entries
        .iter()
        .take_while(|e| e.0 <= 2.0 * best)
        .count()
        .max(10)
        .min(n);
    let lref = entries[0].2;
    let vals: Vec<Complex64> = entries[..take]
        .iter()
        .map(|e| e.1 * (e.2 - lref).exp())
        .collect();
    let med = |mut xs: Vec<f64>| {
        xs.sort_by(|a, b| a.total_cmp(b));
        let m = xs.len();
        if m % 2 == 1 {
            xs[m / 2]
        } else {
            0.5 * (xs[m / 2 - 1] + xs[m / 2])
        }
    };
    let w = Complex64::new(
        med(vals.iter().map(|v| v.re).collect()),
        med(vals.iter().map(|v| v.im).collect()),
    );
    let aw = w.norm();
    if !(aw > 0.0) {
        return Err(Error::Connection(f64::INFINITY));
    }
    let residual = vals.iter().map(|v| (v - w).norm() / aw).fold(0.0, f64::max);
    Ok((aw.ln() + lref, w / aw, residual))
}

fn shift_for(logs: impl Iterator<Item = f64>) -> f64 {
    let m = logs.fold(f64::NEG_INFINITY, f64::max);
    if m > SHIFT_THRESHOLD {
        m
    } else {
        0.0
    }
}

fn grid_phi(raw: &Raw, grid: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let logs = grid.iter().enumerate().map(|(i, &r)| {
        let j = raw.node_of_stop[i];
        let [w, wp] = raw.yphi[j];
        raw.lphi[j] + (w.abs().max(wp.abs() * r) / r.sqrt()).ln()
    });
    let shift = shift_for(logs);
    let mut phi = Vec::with_capacity(grid.len());
    let mut dphi = Vec::with_capacity(grid.len());
    for (i, &r) in grid.iter().enumerate() {
        let j = raw.node_of_stop[i];
        let [w, wp] = raw.yphi[j];
        let s = (raw.lphi[j] - shift).exp();
        let sr = r.sqrt();
        phi.push(w / sr * s);
        dphi.push((wp - 0.5 * w / r) / sr * s);
    }
    (phi, dphi, shift)
}

fn grid_fplus(raw: &Raw, grid: &[f64]) -> (Vec<Complex64>, Vec<Complex64>, f64) {
    let logs = grid.iter().enumerate().map(|(i, &r)| {
        let j = raw.node_of_stop[i];
        let [w, wp] = raw.yf[j];
        raw.lf[j] + (w.norm().max(wp.norm() * r) / r.sqrt()).ln()
    });
    let shift = shift_for(logs);
    let mut f = Vec::with_capacity(grid.len());
    let mut df = Vec::with_capacity(grid.len());
    for (i, &r) in grid.iter().enumerate() {
        let j = raw.node_of_stop[i];
        let [w, wp] = raw.yf[j];
        let s = (raw.lf[j] - shift).exp();
        let sr = r.sqrt();
        f.push(w / sr * s);
        df.push((wp - w * (0.5 / r)) / sr * s);
    }
    (f, df, shift)
}

/// Regular solution phi ~ xi r on `grid`.
pub fn solve_phi(
    p: &VortexProfile,
    c: f64,
    k: f64,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<RealSolution> {
    check_ck(c, k)?;
    check_grid(grid)?;
    let xi = k.abs() * (1.0 / c - 1.0).sqrt();
    let prob = Problem { p, c, xi };
    let st = setup(&prob, grid, opts, false)?;
    let raw = integrate(&prob, grid, &st, opts.tol, PhaseBranch::Plain, false)?;
    let (mut phi, mut dphi, shift) = grid_phi(&raw, grid);
    if k < 0.0 {
        phi.iter_mut().for_each(|v| *v = -*v);
        dphi.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(RealSolution {
        phi,
        dphi,
        log_scale: shift,
    })
}

/// Outgoing solution f+ on `grid`.
pub fn solve_fplus(
    p: &VortexProfile,
    c: f64,
    k: f64,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<ComplexSolution> {
    let s = solve_slice(p, c, k, grid, opts)?;
    Ok(ComplexSolution {
        f: s.fplus,
        df: s.dfplus,
        log_scale: s.fplus_shift,
    })
}

/// Full slice: phi, f+, W and regime for one (c, k).
pub fn solve_slice(
    p: &VortexProfile,
    c: f64,
    k: f64,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<BasisSlice> {
    check_ck(c, k)?;
    check_grid(grid)?;
    let xi = k.abs() * (1.0 / c - 1.0).sqrt();
    let prob = Problem { p, c, xi };
    let st = setup(&prob, grid, opts, true)?;
    let branch = select_branch(p, c, xi, opts.branch);
    let raw = integrate(&prob, grid, &st, opts.tol, branch, true)?;
    let (log_abs_w, w_phase, w_residual) = wronskian_from_raw(&raw)?;
    if w_residual > W_RESIDUAL_REJECT {
        return Err(Error::Connection(w_residual));
    }
    let (mut phi, mut dphi, phi_shift) = grid_phi(&raw, grid);
    let (mut fplus, mut dfplus, fplus_shift) = grid_fplus(&raw, grid);
    if k < 0.0 {
        // odd extension in xi; W is unchanged
        phi.iter_mut().for_each(|v| *v = -*v);
        dphi.iter_mut().for_each(|v| *v = -*v);
        fplus.iter_mut().for_each(|v| *v = -*v);
        dfplus.iter_mut().for_each(|v| *v = -*v);
    }
    let regime = classify_regime(p, c, xi, opts.m, opts.delta).ok();
    Ok(BasisSlice {
        c,
        k,
        xi: if k < 0.0 { -xi } else { xi },
        grid: grid.to_vec(),
        phi,
        dphi,
        fplus,
        dfplus,
        phi_shift,
        fplus_shift,
        w_phase,
        log_abs_w,
        w_residual,
        regime,
        branch,
        r_min: st.r_start,
        r_max: st.r_max,
        outer_indicator: st.indicator,
    })
}

/// (W, w_residual) of a slice: the Wronskian is evaluated once during
/// `solve_slice`; this re-evaluates r (phi' f+ - phi f+') on the grid as
/// a consistency check and reports the median and spread.
pub fn wronskian(slice: &BasisSlice) -> Result<(Complex64, f64)> {
    let scale = (slice.phi_shift + slice.fplus_shift - slice.log_abs_w).exp();
    let mut vals: Vec<(f64, Complex64)> = slice
        .grid
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let a = slice.fplus[i] * slice.dphi[i] * r;
            let b = slice.dfplus[i] * slice.phi[i] * r;
            let m = (a - b) * scale;
            let cond = (a.norm() + b.norm()) * scale / m.norm();
            (if cond.is_finite() { cond } else { f64::INFINITY }, m)
        })
        .collect();
    vals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let take = vals.iter().filter(|v| v.0 < 1e6).count().clamp(1, vals.len()).max(10.min(vals.len()));
    let sel: Vec<Complex64> = vals[..take].iter().map(|v| v.1).collect();
    let mut re: Vec<f64> = sel.iter().map(|v| v.re).collect();
    let mut im: Vec<f64> = sel.iter().map(|v| v.im).collect();
    re.sort_by(|a, b| a.total_cmp(b));
    im.sort_by(|a, b| a.total_cmp(b));
    let w_unit = Complex64::new(re[re.len() / 2], im[im.len() / 2]);
    let resid = sel.iter().map(|v| (v - w_unit).norm() / w_unit.norm()).fold(0.0, f64::max);
    Ok((w_unit * slice.abs_w(), resid))
}

/// phi / |W| and its supremum over the grid.
pub fn normalized_phi(slice: &BasisSlice) -> (Vec<f64>, f64) {
    let t = slice.phi_tilde();
    let sup = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (t, sup)
}

/// Basis CSV: r,phi,dphi,fplus_re,fplus_im,dfplus_re,dfplus_im (true values;
/// huge entries print as inf, see the metadata shifts).
pub fn write_basis_csv<W: Write>(out: &mut W, s: &BasisSlice) -> Result<()> {
    writeln!(out, "r,phi,dphi,fplus_re,fplus_im,dfplus_re,dfplus_im")?;
    let ps = s.phi_shift.exp();
    let fs = s.fplus_shift.exp();
    for i in 0..s.grid.len() {
        let f = s.fplus[i] * fs;
        let df = s.dfplus[i] * fs;
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            s.grid[i],
            s.phi[i] * ps,
            s.dphi[i] * ps,
            f.re,
            f.im,
            df.re,
            df.im
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMetadata {
    pub c: f64,
    pub k: f64,
    pub xi: f64,
    #[serde(rename = "W_re")]
    pub w_re: f64,
    #[serde(rename = "W_im")]
    pub w_im: f64,
    #[serde(rename = "absW")]
    pub abs_w: f64,
    pub log_abs_w: f64,
    pub w_residual: f64,
    pub regime: Option<String>,
    pub branch: PhaseBranch,
    pub r_min: f64,
    pub r_max: f64,
    pub phi_shift: f64,
    pub fplus_shift: f64,
}

pub fn slice_metadata(s: &BasisSlice) -> SliceMetadata {
    let w = s.w();
    SliceMetadata {
        c: s.c,
        k: s.k,
        xi: s.xi,
        w_re: w.re,
        w_im: w.im,
        abs_w: s.abs_w(),
        log_abs_w: s.log_abs_w,
        w_residual: s.w_residual,
        regime: s.regime.map(|t| t.region.to_string()),
        branch: s.branch,
        r_min: s.r_min,
        r_max: s.r_max,
        phi_shift: s.phi_shift,
        fplus_shift: s.fplus_shift,
    }
}

/// Iterated Volterra series for phi = xi r (1 + sum h_n).
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraPhi {
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    /// sum of the iterates, phi / (xi r) - 1.
    pub remainder: Vec<f64>,
    /// Majorant of the truncation error, e^kappa - sum_{m<=n} kappa^m/m!.
    pub majorant: f64,
    /// Whether the remainder and its r-derivative are positive on
    /// 0 < r < min(r_stop, r_c); `None` when c <= V(0) (no turning point).
    pub positive: Option<bool>,
}

/// Cumulative integral from r[0] with a fourth-order interval rule.
fn cumulative(r: &[f64], f: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut out = vec![0.0; n];
    for i in 0..n - 1 {
        let (s, w) = interval_weights(r, i);
        out[i + 1] = out[i] + (0..4).map(|j| w[j] * f[s + j]).sum::<f64>();
    }
    out
}

pub fn volterra_phi(p: &VortexProfile, c: f64, xi: f64, r_stop: f64, n_iter: usize) -> Result<VolterraPhi> {
    if !(c > 0.0 && c < 1.0) || !(xi > 0.0) || !(r_stop > 0.0) {
        return domain(format!("volterra_phi: bad arguments c={c}, xi={xi}, r_stop={r_stop}"));
    }
    let n = 2001;
    let r: Vec<f64> = (0..n).map(|i| r_stop * i as f64 / (n - 1) as f64).collect();
    let f: Vec<f64> = r.iter().map(|&s| xi * xi * (c - p.v(s)) / (1.0 - c)).collect();
    let abs_sf: Vec<f64> = r.iter().zip(&f).map(|(s, f)| 0.5 * s * f.abs()).collect();
    let kappa = *cumulative(&r, &abs_sf).last().unwrap();
    if kappa > 2.0 {
        return Err(Error::Window(format!(
            "kappa = int_0^r_stop s|xi^2 (c - V)/(1-c)|/2 ds = {kappa:.3e} exceeds 2"
        )));
    }
    let mut h = vec![0.0; n];
    let mut total = vec![0.0; n];
    let mut prev: Vec<f64> = vec![1.0; n];
    for _ in 0..n_iter {
        let a: Vec<f64> = (0..n).map(|i| 0.5 * r[i] * f[i] * prev[i]).collect();
        let b: Vec<f64> = (0..n).map(|i| 0.5 * r[i].powi(3) * f[i] * prev[i]).collect();
        let ca = cumulative(&r, &a);
        let cb = cumulative(&r, &b);
        for i in 0..n {
            h[i] = if r[i] > 0.0 { ca[i] - cb[i] / (r[i] * r[i]) } else { 0.0 };
            total[i] += h[i];
        }
        prev.copy_from_slice(&h);
    }
    let mut partial = 0.0;
    let mut term = 1.0;
    for m in 0..=n_iter {
        if m > 0 {
            term *= kappa / m as f64;
        }
        partial += term;
    }
    let majorant = (kappa.exp() - partial).max(0.0);
    let positive = match turning_point(p, c)? {
        Some(rc) if c > p.v0 => {
            let m = r.iter().take_while(|&&s| s < rc).count();
            Some(
                n_iter > 0
                    && total[1..m].iter().all(|&v| v > 0.0)
                    && total[..m].windows(2).skip(1).all(|w| w[1] > w[0]),
            )
        }
        _ => None,
    };
    let phi = r.iter().zip(&total).map(|(&s, t)| xi * s * (1.0 + t)).collect();
    Ok(VolterraPhi {
        r,
        phi,
        remainder: total,
        majorant,
        positive,
    })
}

/// Iterated Volterra series for f+ = N H+(xi r)(1 + f_rem) from infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraFplus {
    pub r: Vec<f64>,
    pub f: Vec<Complex64>,
    pub remainder: Vec<Complex64>,
    /// Size of the last iterate, max over r of |f_n - f_{n-1}| / |N H+|.
    pub last_increment: f64,
}

pub fn volterra_fplus(
    p: &VortexProfile,
    c: f64,
    xi: f64,
    r_start: f64,
    n_iter: usize,
) -> Result<VolterraFplus> {
    if !(c > 0.0 && c < 1.0) || !(xi > 0.0) || !(r_start > 0.0) {
        return domain(format!("volterra_fplus: bad arguments c={c}, xi={xi}, r_start={r_start}"));
    }
    if xi > (1.0 - c).cbrt() {
        return Err(Error::Window(format!(
            "xi = {xi} exceeds (1-c)^(1/3) = {}",
            (1.0 - c).cbrt()
        )));
    }
    if r_start * xi < 1.0 {
        return Err(Error::Window(format!("r_start = {r_start} below 1/xi = {}", 1.0 / xi)));
    }
    // truncate where the potential perturbation is negligible
    let mut r_end = r_start * 2.0;
    while p.eval(r_end).one_minus_v.abs() > 1e-14 && r_end < 1e7 {
        r_end *= 1.5;
    }
    let lambda = 2.0 * PI / xi;
    let mut r = vec![r_start];
    while *r.last().unwrap() < r_end {
        let s = *r.last().unwrap();
        r.push(s + (lambda / 40.0).min(0.1 * s));
    }
    let n = r.len();
    let norm = (PI / 2.0).sqrt() * Complex64::from_polar(1.0, 0.75 * PI);
    let jy: Vec<(f64, f64)> = r.iter().map(|&s| (bessel::j1(xi * s), bessel::y1(xi * s))).collect();
    let base: Vec<Complex64> = jy.iter().map(|&(j, y)| norm * Complex64::new(j, y)).collect();
    let g: Vec<f64> = r
        .iter()
        .map(|&s| PI * s / 2.0 * xi * xi * p.eval(s).one_minus_v / (1.0 - c))
        .collect();
    let mut f = base.clone();
    let mut last_increment = 0.0;
    for _ in 0..n_iter {
        // int_r^inf g(s) Y1(xi s) f(s) ds and int_r^inf g J1 f, as tails
        let re_y: Vec<f64> = (0..n).map(|i| g[i] * jy[i].1 * f[i].re).collect();
        let im_y: Vec<f64> = (0..n).map(|i| g[i] * jy[i].1 * f[i].im).collect();
        let re_j: Vec<f64> = (0..n).map(|i| g[i] * jy[i].0 * f[i].re).collect();
        let im_j: Vec<f64> = (0..n).map(|i| g[i] * jy[i].0 * f[i].im).collect();
        let tail = |v: &[f64]| {
            let cum = cumulative(&r, v);
            let tot = cum[n - 1];
            cum.iter().map(|c| tot - c).collect::<Vec<f64>>()
        };
        let (ty_re, ty_im, tj_re, tj_im) = (tail(&re_y), tail(&im_y), tail(&re_j), tail(&im_j));
        let next: Vec<Complex64> = (0..n)
            .map(|i| {
                let (j, y) = jy[i];
                let iy = Complex64::new(ty_re[i], ty_im[i]);
                let ij = Complex64::new(tj_re[i], tj_im[i]);
                base[i] + iy * j - ij * y
            })
            .collect();
        last_increment = (0..n)
            .map(|i| (next[i] - f[i]).norm() / base[i].norm())
            .fold(0.0, f64::max);
        f = next;
    }
    let remainder = (0..n).map(|i| f[i] / base[i] - 1.0).collect();
    Ok(VolterraFplus {
        r,
        f,
        remainder,
        last_increment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{make_profile, ProfileKind};

    #[test]
    fn uniform_slice_matches_bessel() {
        let p = make_profile(ProfileKind::Uniform, &[]).unwrap();
        let grid: Vec<f64> = (1..=200).map(|i| 0.1 * i as f64).collect();
        let s = solve_slice(&p, 0.5, 1.0, &grid, &SolverOptions::default()).unwrap();
        for (i, &r) in grid.iter().enumerate() {
            let j = bessel::j1(r);
            if j.abs() > 0.05 {
                assert!((s.phi[i] / (2.0 * j) - 1.0).abs() < 1e-6, "r={r}");
            }
        }
        assert!((s.abs_w() - 4.0 / (2.0 * PI).sqrt()).abs() < 1e-6, "{}", s.abs_w());
        assert!(s.w_residual < 1e-8);
    }
}
