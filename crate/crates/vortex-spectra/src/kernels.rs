//! Resolvent kernels
//!   K(r,s,z,c) = p.v. int phi~(r,xi) phi~(s,xi) e^{i xi a z} / xi d xi, a = sqrt(c/(1-c)),
//! their banded derivative variants K^L, K^H, and scans of int |d_c K| dc.
//!
//! phi~ is odd in xi, so the principal value is evaluated on (0, Xi] as
//! 2i int sin(xi a z) (...) or 2 int cos(xi a z) (...), depending on the
//! parity of the integrand. phi~ is sampled on Gauss panels in xi that resolve
//! its own oscillation; the factor e^{i xi a z} is integrated on a finer grid
//! through the panel interpolant, so large a z costs no extra ODE solves.

use crate::connection::{solve_slice, SolverOptions};
use crate::error::{domain, Error, Result};
use crate::profiles::{ProfileKind, VortexProfile};
use crate::quad::gauss_legendre;
use crate::specfun::{bessel, BesselKind};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// 0 at t <= 0, 1 at t >= 1, C-infinity and monotone in between.
fn smooth_step(t: f64) -> f64 {
    let a = bump(t);
    let b = bump(1.0 - t);
    a / (a + b)
}

/// 1 for |x| <= 1, 0 for |x| >= 2, smooth monotone bridge.
pub fn chi(x: f64) -> f64 {
    smooth_step(2.0 - x.abs())
}

/// One-sided cutoff: 1 for x <= 1, 0 for x >= 2.
pub fn chi_plus(x: f64) -> f64 {
    smooth_step(2.0 - x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    L,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// The xi-integrand is tapered by chi(2 xi / Xi), so it ends at Xi.
    pub xi_max: f64,
    /// Gauss nodes per xi panel of the family.
    pub order: usize,
    /// Fine points per period of the oscillatory factor.
    pub points_per_period: usize,
    /// M in the band cutoff chi(M^2 (1-c)^{1/2} / xi).
    pub m_cut: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            xi_max: 120.0,
            order: 16,
            points_per_period: 12,
            m_cut: 10.0,
        }
    }
}

/// phi~ and phi~' at fixed c for a set of radii, on Gauss panels in xi.
#[derive(Debug, Clone)]
pub struct XiFamily {
    pub c: f64,
    pub radii: Vec<f64>,
    pub edges: Vec<f64>,
    /// Panel-major nodes: panel j holds xi[j*order .. (j+1)*order].
    pub xi: Vec<f64>,
    /// phi[node][radius].
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<f64>>,
    order: usize,
    ref_nodes: Vec<f64>,
    bary: Vec<f64>,
}

/// sqrt(c / (1 - c)): the xi-to-k factor.
pub fn a_of_c(c: f64) -> f64 {
    (c / (1.0 - c)).sqrt()
}

/// Eigenfunctions of the uniform profile depend on (xi, r) only.
fn family_depends_on_c(p: &VortexProfile) -> bool {
    p.kind != ProfileKind::Uniform
}

pub fn build_family(
    p: &VortexProfile,
    c: f64,
    radii: &[f64],
    opts: &KernelOptions,
    solver: &SolverOptions,
) -> Result<XiFamily> {
    if !(c > 0.0 && c < 1.0) {
        return domain(format!("kernel family needs c in (0, 1), got {c}"));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return domain("kernel family needs positive radii");
    }
    if !(opts.xi_max > 0.0) || opts.order < 4 {
        return domain("kernel options need xi_max > 0 and at least 4 nodes per panel");
    }
    let mut grid = radii.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let r_top = *grid.last().unwrap();
    let n_panels = ((opts.xi_max * r_top / (2.0 * PI)).ceil() as usize).max(4);
    let edges: Vec<f64> = (0..=n_panels)
        .map(|j| opts.xi_max * j as f64 / n_panels as f64)
        .collect();
    let (x, w) = gauss_legendre(opts.order);
    let bary: Vec<f64> = (0..x.len())
        .map(|j| {
            let s = ((1.0 - x[j] * x[j]) * w[j]).sqrt();
            if j % 2 == 0 {
                s
            } else {
                -s
            }
        })
        .collect();
    let xi: Vec<f64> = edges
        .windows(2)
        .flat_map(|e| x.iter().map(move |t| 0.5 * (e[0] + e[1]) + 0.5 * (e[1] - e[0]) * t))
        .collect();
    let a = a_of_c(c);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = xi
        .par_iter()
        .map(|&x| {
            let s = solve_slice(p, c, x * a, &grid, solver)?;
            Ok((s.phi_tilde(), s.dphi_tilde()))
        })
        .collect::<Result<_>>()?;
    let (phi, dphi) = rows.into_iter().unzip();
    Ok(XiFamily {
        c,
        radii: grid,
        edges,
        xi,
        phi,
        dphi,
        order: opts.order,
        ref_nodes: x,
        bary,
    })
}

impl XiFamily {
    /// Panel width in xi.
    pub fn panel_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    fn radius_index(&self, r: f64) -> Result<usize> {
        self.radii
            .iter()
            .position(|&x| x == r)
            .ok_or_else(|| Error::Grid(format!("radius {r} is not in the kernel family")))
    }

    /// (phi~, phi~') at radius index `ir` and xi inside panel `pj`.
    fn interp(&self, pj: usize, xi: f64, ir: usize) -> (f64, f64) {
        let (a, b) = (self.edges[pj], self.edges[pj + 1]);
        let t = (2.0 * xi - a - b) / (b - a);
        let base = pj * self.order;
        let mut num0 = 0.0;
        let mut num1 = 0.0;
        let mut den = 0.0;
        for j in 0..self.order {
            let d = t - self.ref_nodes[j];
            if d == 0.0 {
                return (self.phi[base + j][ir], self.dphi[base + j][ir]);
            }
            let q = self.bary[j] / d;
            num0 += q * self.phi[base + j][ir];
            num1 += q * self.dphi[base + j][ir];
            den += q;
        }
        (num0 / den, num1 / den)
    }

    /// The same family reinterpreted at another c when phi~ does not depend on c.
    pub fn at_c(&self, p: &VortexProfile, c: f64) -> Option<XiFamily> {
        if family_depends_on_c(p) {
            return None;
        }
        let mut f = self.clone();
        f.c = c;
        Some(f)
    }
}

/// Derivative flags of a banded kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelFlags {
    pub l_prime: u8,
    pub l: u8,
    pub m: u8,
    pub band: Option<Band>,
}

impl KernelFlags {
    pub const PLAIN: KernelFlags = KernelFlags {
        l_prime: 0,
        l: 0,
        m: 0,
        band: None,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub re: f64,
    pub im: f64,
    /// Crude bound on the tapered-off part beyond Xi/2, without credit for oscillation.
    pub tail_bound: f64,
}

impl KernelValue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Radial factor (D phi~)(x) and its power of 1/xi.
#[allow(clippy::too_many_arguments)]
fn radial_factor(
    phi: f64,
    dphi: f64,
    x: f64,
    xi: f64,
    q: f64,
    dq: f64,
    l_prime: u8,
    m: u8,
) -> f64 {
    match (l_prime, m) {
        (0, 0) => phi,
        (0, 1) => dphi,
        (0, _) => -dphi / x + phi / (x * x) - xi * xi * q * phi,
        (_, 0) => dphi + phi / x,
        (_, 1) => -xi * xi * q * phi,
        (_, _) => -xi * xi * (dq * phi + q * dphi),
    }
}

const FINE_ORDER: usize = 20;

/// Banded kernel at (r, s, z) for the family's c. With `band = None` and all
/// flags zero this is K itself.
pub fn kernel(
    fam: &XiFamily,
    p: &VortexProfile,
    r: f64,
    s: f64,
    z: f64,
    flags: KernelFlags,
    opts: &KernelOptions,
) -> Result<KernelValue> {
    if flags.l_prime > 1 || flags.l > 1 || flags.m > 2 {
        return domain("kernel flags need l', l in {0, 1} and m <= 2");
    }
    if flags.band.is_none() && (flags.l_prime, flags.l, flags.m) != (0, 0, 0) {
        return domain("derivative kernels need a band (L or H)");
    }
    if !z.is_finite() {
        return domain(format!("kernel needs finite z, got {z}"));
    }
    let ir = fam.radius_index(r)?;
    let is = fam.radius_index(s)?;
    if fam.panel_width() * r.max(s) > 2.0 * PI * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!(
            "xi panels of width {} under-resolve phi~ at radius {}",
            fam.panel_width(),
            r.max(s)
        )));
    }
    let c = fam.c;
    let b = a_of_c(c) * z;
    let root = (1.0 - c).sqrt();
    let x0 = opts.m_cut * opts.m_cut * root;
    let (pr, ps) = (p.eval(r), p.eval(s));
    let (qr, dqr) = ((pr.v - c) / (1.0 - c), pr.dv / (1.0 - c));
    let (qs, dqs) = ((ps.v - c) / (1.0 - c), ps.dv / (1.0 - c));
    // powers of 1/xi carried by the two radial factors
    let n_r = match flags.band {
        Some(Band::H) => flags.m + flags.l_prime,
        _ => flags.l_prime,
    };
    let n_s = flags.l;
    // parity of phi~(r) phi~(s) / xi under xi -> -xi
    let odd = (n_r + n_s) % 2 == 0;
    let (fine_x, fine_w) = gauss_legendre(FINE_ORDER);
    let rate = b.abs() + r + s;
    let xi_max = fam.edges[fam.edges.len() - 1];
    let mut sum = 0.0;
    let mut tail = 0.0f64;
    for pj in 0..fam.edges.len() - 1 {
        let (lo, hi) = (fam.edges[pj], fam.edges[pj + 1]);
        let mut cuts = vec![lo, hi];
        for brk in [0.5 * x0, x0, 0.5 * xi_max] {
            if brk > lo && brk < hi {
                cuts.push(brk);
            }
        }
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            let len = w[1] - w[0];
            let nseg = ((opts.points_per_period as f64 * rate * len / (2.0 * PI) / FINE_ORDER as f64).ceil() as usize).max(1);
            for g in 0..nseg {
                let a = w[0] + len * g as f64 / nseg as f64;
                let h = len / nseg as f64;
                for (t, wt) in fine_x.iter().zip(&fine_w) {
                    let xi = a + 0.5 * h * (1.0 + t);
                    let (phr, dphr) = fam.interp(pj, xi, ir);
                    let (phs, dphs) = fam.interp(pj, xi, is);
                    let mut fr = radial_factor(phr, dphr, r, xi, qr, dqr, flags.l_prime, flags.m);
                    let mut fs = radial_factor(phs, dphs, s, xi, qs, dqs, flags.l, 0);
                    fr *= (root / xi).powi(n_r as i32);
                    fs *= (root / xi).powi(n_s as i32);
                    let band_w = match flags.band {
                        None => 1.0,
                        Some(Band::H) => chi(x0 / xi),
                        Some(Band::L) => 1.0 - chi(x0 / xi),
                    };
                    let g0 = fr * fs / xi * band_w;
                    if xi >= 0.5 * xi_max {
                        tail = tail.max(g0.abs());
                    }
                    let osc = if odd { (xi * b).sin() } else { (xi * b).cos() };
                    sum += 0.5 * h * wt * g0 * chi(2.0 * xi / xi_max) * osc;
                }
            }
        }
    }
    let (re, im) = if odd { (0.0, 2.0 * sum) } else { (2.0 * sum, 0.0) };
    Ok(KernelValue {
        re,
        im,
        tail_bound: tail * 0.5 * xi_max,
    })
}

/// Plain K(r, s, z, c).
pub fn kernel_k(fam: &XiFamily, p: &VortexProfile, r: f64, s: f64, z: f64, opts: &KernelOptions) -> Result<KernelValue> {
    kernel(fam, p, r, s, z, KernelFlags::PLAIN, opts)
}

/// int_0^inf f(x) dx for a slowly decaying oscillatory f with frequencies
/// at most `freq`, tapered by chi(x / length).
pub fn windowed_integral<F: Fn(f64) -> f64 + Sync>(f: F, freq: f64, length: f64) -> f64 {
    let (x, w) = gauss_legendre(FINE_ORDER);
    let end = 2.0 * length;
    let width = (2.0 * PI / freq.max(1e-3) * FINE_ORDER as f64 / 12.0).min(end);
    let n = (end / width).ceil() as usize;
    let h = end / n as f64;
    (0..n)
        .into_par_iter()
        .map(|j| {
            let a = j as f64 * h;
            x.iter()
                .zip(&w)
                .map(|(t, wt)| {
                    let xx = a + 0.5 * h * (1.0 + t);
                    0.5 * h * wt * f(xx) * chi(xx / length)
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Numerical (int_0^inf J_1(eta) sin(eta y) d eta, int_0^inf J_1(eta)/eta cos(eta y) d eta).
pub fn j1_fourier_numeric(y: f64) -> Result<(f64, f64)> {
    if !y.is_finite() || y.abs() == 1.0 {
        return domain(format!("J1 transform singular at y = {y}"));
    }
    // a taper much longer than the beat period 1/||y| - 1| keeps the truncation invisible
    let length = (400.0 / (y.abs() - 1.0).abs()).clamp(2000.0, 2e5);
    let freq = 1.0 + y.abs();
    let j1 = |x: f64| bessel(BesselKind::J1, x).unwrap_or(0.0);
    let a = windowed_integral(|x| j1(x) * (x * y).sin(), freq, length);
    let b = windowed_integral(
        |x| {
            if x < 1e-8 {
                0.5 * (x * y).cos()
            } else {
                j1(x) / x * (x * y).cos()
            }
        },
        freq,
        length,
    );
    Ok((a, b))
}

/// c nodes c = sin^2(theta) at the midpoints of n equal theta-cells of
/// [0, pi/2]; clustered quadratically at both ends.
pub fn theta_c_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let th = 0.5 * PI * (j as f64 + 0.5) / n as f64;
            th.sin().powi(2)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub r: f64,
    pub s: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleScan {
    pub triple: Triple,
    /// Im K on the c grid (K is i times a real function for real phi~).
    pub k_im: Vec<f64>,
    pub k_re_max: f64,
    /// int_0^1 |d_c K| dc; None when a value was non-finite.
    pub dc_integral: Option<f64>,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelScanReport {
    pub c_grid: Vec<f64>,
    pub delta: f64,
    pub flags: KernelFlags,
    pub options: KernelOptions,
    pub panel_width: f64,
    pub triples: Vec<TripleScan>,
    /// Smallest C with int |d_c K| dc <= C (s^-delta + s^delta) on every triple.
    pub fitted_c: f64,
}

/// d/dtheta by second-order differences on a uniform grid.
fn uniform_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            if n < 3 {
                if n == 2 {
                    (f[1] - f[0]) / h
                } else {
                    0.0
                }
            } else if i == 0 {
                (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h)
            } else {
                (f[i + 1] - f[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Kernel values on the theta c-grid of `n_c` nodes and int |d_c K| dc
/// per triple, computed as int |d_theta K| d theta.
pub fn dc_scan(
    p: &VortexProfile,
    triples: &[Triple],
    n_c: usize,
    delta: f64,
    flags: KernelFlags,
    opts: &KernelOptions,
    solver: &SolverOptions,
) -> Result<KernelScanReport> {
    if n_c < 64 {
        return domain(format!("dc scan needs at least 64 c nodes, got {n_c}"));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return domain(format!("delta must lie in (0, 0.5), got {delta}"));
    }
    if triples.is_empty() {
        return domain("dc scan needs at least one (r, s, z) triple");
    }
    let mut radii: Vec<f64> = triples.iter().flat_map(|t| [t.r, t.s]).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let c_grid = theta_c_grid(n_c);
    let shared = if family_depends_on_c(p) {
        None
    } else {
        Some(build_family(p, 0.5, &radii, opts, solver)?)
    };
    let values: Vec<Vec<Option<KernelValue>>> = c_grid
        .par_iter()
        .map(|&c| {
            let fam = match &shared {
                Some(f) => f.at_c(p, c).unwrap(),
                None => build_family(p, c, &radii, opts, solver)?,
            };
            Ok(triples
                .iter()
                .map(|t| {
                    kernel(&fam, p, t.r, t.s, t.z, flags, opts)
                        .ok()
                        .filter(|v| v.re.is_finite() && v.im.is_finite())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let h = 0.5 * PI / n_c as f64;
    let panel_width = opts.xi_max
        / ((opts.xi_max * radii.last().unwrap() / (2.0 * PI)).ceil()).max(4.0);
    let mut rows = Vec::with_capacity(triples.len());
    let mut fitted = 0.0f64;
    for (ti, t) in triples.iter().enumerate() {
        let col: Vec<Option<KernelValue>> = values.iter().map(|row| row[ti]).collect();
        let ok = col.iter().all(|v| v.is_some());
        let re: Vec<f64> = col.iter().map(|v| v.map_or(f64::NAN, |v| v.re)).collect();
        let im: Vec<f64> = col.iter().map(|v| v.map_or(f64::NAN, |v| v.im)).collect();
        let dc_integral = if ok {
            let dre = uniform_derivative(&re, h);
            let dim = uniform_derivative(&im, h);
            Some(dre.iter().zip(&dim).map(|(a, b)| a.hypot(*b) * h).sum::<f64>())
        } else {
            None
        };
        if let Some(i) = dc_integral {
            fitted = fitted.max(i / (t.s.powf(-delta) + t.s.powf(delta)));
        }
        rows.push(TripleScan {
            triple: *t,
            k_im: im,
            k_re_max: re.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            dc_integral,
            tail_bound: col.iter().flatten().fold(0.0f64, |m, v| m.max(v.tail_bound)),
        });
    }
    Ok(KernelScanReport {
        c_grid,
        delta,
        flags,
        options: *opts,
        panel_width,
        triples: rows,
        fitted_c: fitted,
    })
}

/// Scan CSV: r,s,z,c,K with K the imaginary part (K is purely imaginary).
pub fn write_scan_csv<W: Write>(out: &mut W, rep: &KernelScanReport) -> Result<()> {
    writeln!(out, "r,s,z,c,K")?;
    for row in &rep.triples {
        for (c, k) in rep.c_grid.iter().zip(&row.k_im) {
            let t = row.triple;
            writeln!(out, "{:?},{:?},{:?},{:?},{:?}", t.r, t.s, t.z, c, k)?;
        }
    }
    Ok(())
}
