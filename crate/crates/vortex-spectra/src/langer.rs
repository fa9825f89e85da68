//! Langer geometry (tau, q, phase x, error potential), regime
//! classification D1..D7 and the reference Wronskian magnitude W0.

use crate::error::{domain, Result};
use crate::profiles::{q_derivs, turning_point, VortexProfile};
use crate::quad::adaptive;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;

pub const DEFAULT_M: f64 = 10.0;
pub const DEFAULT_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangerPoint {
    pub r: f64,
    pub c: f64,
    pub xi: f64,
    pub tau: f64,
    pub q: f64,
    pub x: f64,
    pub err_pot: f64,
}

/// xi = k sqrt(1/c - 1).
pub fn xi_of(c: f64, k: f64) -> f64 {
    k * (1.0 / c - 1.0).sqrt()
}

/// Inverse of `xi_of` in c at fixed k.
pub fn c_of(xi: f64, k: f64) -> f64 {
    k * k / (k * k + xi * xi)
}

/// Lower endpoint of the tau-integral: r_c when it exists, 0 when c < V(0).
fn anchor(p: &VortexProfile, c: f64) -> Result<f64> {
    if c < p.v0 || p.is_degenerate() {
        return Ok(0.0);
    }
    match turning_point(p, c)? {
        Some(rc) => Ok(rc),
        None => domain(format!("c = {c} is not attained by V")),
    }
}

/// Signed integral of sqrt|Q| from the anchor to r, using s = a +- w^2.
fn phase_integral(p: &VortexProfile, a: f64, r: f64, c: f64) -> f64 {
    if r == a {
        return 0.0;
    }
    let sign = if r > a { 1.0 } else { -1.0 };
    let wmax = (r - a).abs().sqrt();
    let f = |w: f64| {
        let s = a + sign * w * w;
        2.0 * w * q_derivs(p, s, c).0.abs().sqrt()
    };
    sign * adaptive(&f, 0.0, wmax, 1e-15 * (1.0 + (r - a).abs()))
}

struct Geometry {
    tau: f64,
    q: f64,
    x_over_xi: f64,
}

fn geometry(p: &VortexProfile, a: f64, r: f64, c: f64) -> Geometry {
    let i = phase_integral(p, a, r, c);
    let tau = i.signum() * (1.5 * i.abs()).powf(2.0 / 3.0);
    let (qv, dq, _, _) = q_derivs(p, r, c);
    let q = if tau == 0.0 {
        dq.powf(2.0 / 3.0)
    } else {
        qv / tau
    };
    Geometry {
        tau,
        q,
        x_over_xi: 1.5 * i,
    }
}

/// Error potential from the expanded form
/// q''/(4q^2) - 5 q'^2/(16 q^3) + 3/(4 r^2 q), with analytic q', q''.
fn err_pot_at(p: &VortexProfile, a: f64, r: f64, c: f64) -> f64 {
    let g = geometry(p, a, r, c);
    let (_, dq, d2q, _) = q_derivs(p, r, c);
    let (tau, q) = (g.tau, g.q);
    let sq = q.sqrt();
    let dqq = dq / tau - q * sq / tau;
    let d2qq = d2q / tau - dq * sq / (tau * tau) - 1.5 * sq * dqq / tau + q * q / (tau * tau);
    d2qq / (4.0 * q * q) - 5.0 * dqq * dqq / (16.0 * q * q * q) + 3.0 / (4.0 * r * r * q)
}

pub fn langer_point(p: &VortexProfile, r: f64, c: f64, xi: f64) -> Result<LangerPoint> {
    if !(c > 0.0 && c < 1.0) {
        return domain(format!("c = {c} outside (0, 1)"));
    }
    if !(r > 0.0) || !r.is_finite() {
        return domain(format!("r = {r} must be positive"));
    }
    if !(xi > 0.0) {
        return domain(format!("xi = {xi} must be positive"));
    }
    let a = anchor(p, c)?;
    let g = geometry(p, a, r, c);
    let err_pot = if a > 0.0 {
        let h = 1e-3 * (1.0 + a);
        if (r - a).abs() < h {
            // the expanded form cancels near r_c; interpolate across it
            let lo = err_pot_at(p, a, a - h, c);
            let hi = err_pot_at(p, a, a + h, c);
            lo + (hi - lo) * (r - (a - h)) / (2.0 * h)
        } else {
            err_pot_at(p, a, r, c)
        }
    } else {
        err_pot_at(p, a, r, c)
    };
    Ok(LangerPoint {
        r,
        c,
        xi,
        tau: g.tau,
        q: g.q,
        x: xi * g.x_over_xi,
        err_pot,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    D7,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeTag {
    pub region: Region,
    pub m: f64,
    pub delta: f64,
    pub v0: f64,
    pub r_c: Option<f64>,
}

fn check_regime_args(p: &VortexProfile, c: f64, xi: f64, m: f64, delta: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return domain(format!("c = {c} outside (0, 1)"));
    }
    if c == p.v0 {
        return domain(format!("c = V(0) = {c} is excluded"));
    }
    if !(xi > 0.0) || !xi.is_finite() {
        return domain(format!("xi = {xi} must be positive"));
    }
    if !(m >= 2.0) {
        return domain(format!("M = {m} must be >= 2"));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return domain(format!("delta = {delta} outside (0, 0.5)"));
    }
    Ok(())
}

/// Boundary between the medium- and high-frequency regions for c > V(0):
/// xi = M (1-c)^{1/3} (c - V0)^{-3/2}.
pub fn high_frequency_threshold(c: f64, v0: f64, m: f64) -> f64 {
    m * (1.0 - c).cbrt() * (c - v0).abs().powf(-1.5)
}

/// Regime of (c, xi). Inequalities use constant 1 at the stated powers of
/// M and delta; ties go to the lower-indexed region.
pub fn classify_regime(p: &VortexProfile, c: f64, xi: f64, m: f64, delta: f64) -> Result<RegimeTag> {
    check_regime_args(p, c, xi, m, delta)?;
    let v0 = p.v0;
    let r_c = if c > v0 { turning_point(p, c)? } else { None };
    let region = if xi <= (1.0 - c).sqrt() {
        Region::D1
    } else if c < v0 {
        if xi <= (v0 - c).powf(-1.5) {
            Region::D2
        } else {
            Region::D3
        }
    } else if c < 1.0 - delta {
        if xi <= high_frequency_threshold(c, v0, m) {
            Region::D4
        } else {
            Region::D5
        }
    } else if xi <= m * (1.0 - c).cbrt() {
        Region::D7
    } else {
        Region::D6
    };
    Ok(RegimeTag {
        region,
        m,
        delta,
        v0,
        r_c,
    })
}

/// Natural log of the barrier envelope 2 xi exp(S(r_t)) for |W|, where
/// S(r) = ln r + int_0^r (kappa - 1/s) ds, kappa^2 = 1/s^2 - xi^2 Q, and
/// r_t is the zero of kappa.
pub fn log_barrier_envelope(p: &VortexProfile, c: f64, xi: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) || !(xi > 0.0) {
        return domain(format!("barrier envelope needs c in (0,1), xi > 0 (c={c}, xi={xi})"));
    }
    let g = |s: f64| xi * xi * q_derivs(p, s, c).0 * s * s - 1.0;
    // g < 0 near 0; find the first sign change
    let mut hi = 1e-3 / xi.max(1.0);
    while g(hi) < 0.0 {
        hi *= 1.5;
        if hi > 1e9 {
            return domain("barrier envelope: no turning point of the Langer potential");
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rt = 0.5 * (lo + hi);
    let kappa_excess = |s: f64| {
        let k2 = 1.0 / (s * s) - xi * xi * q_derivs(p, s, c).0;
        k2.max(0.0).sqrt() - 1.0 / s
    };
    // kappa has a square-root zero at r_t: substitute s = r_t (1 - w^2)
    let f = |w: f64| {
        let s = rt * (1.0 - w * w);
        if s <= 0.0 {
            0.0
        } else {
            2.0 * rt * w * kappa_excess(s)
        }
    };
    let integral = adaptive(&f, 0.0, 1.0, 1e-13);
    Ok((2.0 * xi).ln() + rt.ln() + integral)
}

/// Reference pair (W0, rho0), in natural-log form for W0 to survive the
/// exponential barrier factor: returns (ln W0, rho0).
pub fn w0_reference_log(p: &VortexProfile, c: f64, xi: f64, m: f64, delta: f64) -> Result<(f64, f64)> {
    let xi = xi.abs();
    let tag = classify_regime(p, c, xi, m, delta)?;
    let v0 = p.v0;
    let dv = (c - v0).abs();
    Ok(match tag.region {
        Region::D1 => (0.0, 1.0 - c),
        Region::D2 => (xi.ln() / 3.0, xi.powf(-2.0 / 3.0)),
        Region::D3 => (-0.5 * dv.ln(), v0 - c),
        // the closed form xi^{1/3} misses the tunnelling factor that sets in
        // well before the D5 boundary; the envelope reduces to it at low xi
        Region::D4 => (log_barrier_envelope(p, c, xi)?, xi.powf(-2.0 / 3.0)),
        Region::D5 | Region::D6 => (log_barrier_envelope(p, c, xi)?, (1.0 - c) * dv),
        Region::D7 => (log_barrier_envelope(p, c, xi)?, 1.0 - c),
    })
}

/// (W0, rho0); W0 may overflow to +inf deep in the barrier regions, use
/// `w0_reference_log` there.
pub fn w0_reference(p: &VortexProfile, c: f64, xi: f64, m: f64, delta: f64) -> Result<(f64, f64)> {
    let (lw, rho) = w0_reference_log(p, c, xi, m, delta)?;
    Ok((lw.exp(), rho))
}

/// Regime map CSV with columns c, xi, region, W0, rho0.
pub fn write_regime_map<W: Write>(
    out: &mut W,
    p: &VortexProfile,
    cs: &[f64],
    xis: &[f64],
    m: f64,
    delta: f64,
) -> Result<()> {
    writeln!(out, "c,xi,region,W0,rho0")?;
    for &c in cs {
        for &xi in xis {
            let tag = classify_regime(p, c, xi, m, delta)?;
            let (w0, rho0) = w0_reference(p, c, xi, m, delta)?;
            writeln!(out, "{:?},{:?},{},{:?},{:?}", c, xi, tag.region, w0, rho0)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{make_profile, ProfileKind};

    fn uniform() -> VortexProfile {
        make_profile(ProfileKind::Uniform, &[]).unwrap()
    }

    fn coriolis() -> VortexProfile {
        make_profile(ProfileKind::CoriolisExample, &[]).unwrap()
    }

    #[test]
    fn uniform_tau_closed_form() {
        let p = uniform();
        for &r in &[0.01, 0.5, 2.0, 17.0, 50.0] {
            let lp = langer_point(&p, r, 0.5, 3.0).unwrap();
            assert!((lp.tau - (1.5 * r).powf(2.0 / 3.0)).abs() < 1e-10 * lp.tau);
            assert!((lp.x - 4.5 * r).abs() < 1e-10 * lp.x);
        }
    }

    #[test]
    fn uniform_error_potential() {
        let p = uniform();
        let lp = langer_point(&p, 2.0, 0.5, 1.0).unwrap();
        let tau = 3f64.powf(2.0 / 3.0);
        let expect = 5.0 / (16.0 * tau * tau) + 3.0 * tau / 16.0;
        assert!((lp.err_pot - expect).abs() < 1e-10);
        assert!((lp.err_pot - 0.4623).abs() < 1e-4);
    }

    #[test]
    fn tau_vanishes_at_turning_point() {
        let p = coriolis();
        let rc = turning_point(&p, 0.7).unwrap().unwrap();
        let lp = langer_point(&p, rc, 0.7, 2.0).unwrap();
        assert_eq!(lp.tau, 0.0);
        assert_eq!(lp.x, 0.0);
        assert!(lp.err_pot.is_finite());
    }

    #[test]
    fn spec_regime_examples() {
        let p = coriolis();
        let tag = |c, xi| classify_regime(&p, c, xi, 10.0, 0.1).unwrap().region;
        assert_eq!(tag(0.5, 0.01), Region::D1);
        assert_eq!(tag(0.2, 5.0), Region::D2);
        assert_eq!(tag(0.2, 100.0), Region::D3);
        assert!(classify_regime(&p, 4.0 / 9.0, 1.0, 10.0, 0.1).is_err());
    }

    #[test]
    fn w0_table_examples() {
        let p = coriolis();
        let (w, _) = w0_reference(&p, 0.5, 0.01, 10.0, 0.1).unwrap();
        assert_eq!(w, 1.0);
        let (w, _) = w0_reference(&p, 0.2, 8.0, 10.0, 0.1).unwrap();
        assert!((w - 2.0).abs() < 1e-14);
        let (w, _) = w0_reference(&p, 0.2, 100.0, 10.0, 0.1).unwrap();
        assert!((w - (4.0 / 9.0 - 0.2f64).powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn barrier_envelope_on_uniform_profile() {
        // Langer-corrected WKB gives 4/e against the exact 4/sqrt(2 pi).
        let p = uniform();
        let lw = log_barrier_envelope(&p, 0.5, 3.0).unwrap();
        assert!((lw.exp() - 4.0 / std::f64::consts::E).abs() < 1e-9);
    }
}
