//! Time-domain reference for the mode system d/dt h = -i k A g,
//! d/dt g = -i k h: classical RK4 with A applied through the Green's
//! function, plus the conserved energy.

use crate::error::{domain, Error, Result};
use crate::profiles::VortexProfile;
use crate::propagator::{recover_velocity, ModeState};
use crate::quad::{derivative, origin_grid_weights};
use crate::spectral::GreenOperator;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest accepted |dt|; the spectrum of the generator lies in [-1, 1].
pub const DT_MAX: f64 = 0.5;

/// RK4 integrator with the Green's function and V cached for one (grid, k).
pub struct FdIntegrator<'a> {
    p: &'a VortexProfile,
    k: f64,
    green: GreenOperator,
    v: Vec<f64>,
}

impl<'a> FdIntegrator<'a> {
    pub fn new(p: &'a VortexProfile, grid: &[f64], k: f64) -> Result<Self> {
        Ok(FdIntegrator {
            p,
            k,
            green: GreenOperator::new(grid, k)?,
            v: grid.iter().map(|&r| p.v(r)).collect(),
        })
    }

    fn apply_a(&self, w: &[Complex64]) -> Vec<Complex64> {
        self.green
            .apply(w)
            .iter()
            .zip(&self.v)
            .map(|(x, v)| -x * v)
            .collect()
    }

    fn rhs(&self, h: &[Complex64], g: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let ag = self.apply_a(g);
        let dh = ag.iter().map(|x| -I * self.k * x).collect();
        let dg = h.iter().map(|x| -I * self.k * x).collect();
        (dh, dg)
    }

    /// One RK4 step of size dt (negative dt integrates backwards).
    pub fn step(&self, h: &mut Vec<Complex64>, g: &mut Vec<Complex64>, dt: f64) -> Result<()> {
        if !(dt.abs() <= DT_MAX) {
            return domain(format!("time step |dt| = {} exceeds {DT_MAX}", dt.abs()));
        }
        let n = h.len();
        let axpy = |x: &[Complex64], a: f64, y: &[Complex64]| -> Vec<Complex64> {
            (0..n).map(|i| x[i] + y[i] * a).collect()
        };
        let (k1h, k1g) = self.rhs(h, g);
        let (k2h, k2g) = self.rhs(&axpy(h, 0.5 * dt, &k1h), &axpy(g, 0.5 * dt, &k1g));
        let (k3h, k3g) = self.rhs(&axpy(h, 0.5 * dt, &k2h), &axpy(g, 0.5 * dt, &k2g));
        let (k4h, k4g) = self.rhs(&axpy(h, dt, &k3h), &axpy(g, dt, &k3g));
        for i in 0..n {
            h[i] += (k1h[i] + (k2h[i] + k3h[i]) * 2.0 + k4h[i]) * (dt / 6.0);
            g[i] += (k1g[i] + (k2g[i] + k3g[i]) * 2.0 + k4g[i]) * (dt / 6.0);
        }
        Ok(())
    }

    /// Advances `s` by `t` with at most `dt` per step; velocities refreshed.
    pub fn advance(&self, s: &mut ModeState, t: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return domain(format!("time step must be positive, got {dt}"));
        }
        let n = (t.abs() / dt).ceil() as usize;
        if n > 0 {
            let h = t / n as f64;
            for _ in 0..n {
                self.step(&mut s.h_hat, &mut s.g_hat, h)?;
            }
        }
        s.t += t;
        recover_velocity(s, self.p);
        Ok(())
    }
}

/// One RK4 step; builds the Green's function each call.
pub fn step_fd(s: &ModeState, dt: f64, p: &VortexProfile) -> Result<ModeState> {
    let fd = FdIntegrator::new(p, &s.grid, s.k)?;
    let mut out = s.clone();
    fd.step(&mut out.h_hat, &mut out.g_hat, dt)?;
    out.t += dt;
    recover_velocity(&mut out, p);
    Ok(out)
}

/// E = int (|Psi'|^2 + |Psi/r|^2 + k^2 |Psi|^2) r dr + int |g|^2 V^{-1} r dr, Psi = V^{-1} h.
pub fn energy(s: &ModeState, p: &VortexProfile) -> f64 {
    let g = &s.grid;
    let w = origin_grid_weights(g);
    let v: Vec<f64> = g.iter().map(|&r| p.v(r)).collect();
    let psi: Vec<Complex64> = s.h_hat.iter().zip(&v).map(|(h, v)| h / v).collect();
    let dpsi = derivative(g, &psi);
    let k2 = s.k * s.k;
    (0..g.len())
        .map(|i| {
            let r = g[i];
            let a = dpsi[i].norm_sqr() + psi[i].norm_sqr() / (r * r) + k2 * psi[i].norm_sqr();
            w[i] * r * (a + s.g_hat[i].norm_sqr() / v[i])
        })
        .sum()
}

/// Reference run sampled at given times.
#[derive(Debug, Clone)]
pub struct FdRun {
    pub k: f64,
    pub dt: f64,
    pub grid: Vec<f64>,
    pub states: Vec<ModeState>,
    pub energy: Vec<f64>,
}

/// Integrates from `s0` and records the state at each of `times` (increasing, >= s0.t).
pub fn run_fd(s0: &ModeState, times: &[f64], dt: f64, p: &VortexProfile) -> Result<FdRun> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < s0.t) {
        return domain("sample times must be increasing and not before the initial time");
    }
    let fd = FdIntegrator::new(p, &s0.grid, s0.k)?;
    let mut s = s0.clone();
    let mut states = Vec::with_capacity(times.len());
    let mut en = Vec::with_capacity(times.len());
    for &t in times {
        let gap = t - s.t;
        fd.advance(&mut s, gap, dt)?;
        s.t = t;
        en.push(energy(&s, p));
        states.push(s.clone());
    }
    Ok(FdRun {
        k: s0.k,
        dt,
        grid: s0.grid.clone(),
        states,
        energy: en,
    })
}

/// Relative L^2(r dr) errors of a spectral trajectory against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub times: Vec<f64>,
    pub err_h: Vec<f64>,
    pub err_g: Vec<f64>,
    pub err_ur: Vec<f64>,
    pub err_utheta: Vec<f64>,
    pub err_uz: Vec<f64>,
    pub max_error: f64,
}

fn rel_l2(grid: &[f64], w: &[f64], a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..grid.len() {
        num += w[i] * grid[i] * (a[i] - b[i]).norm_sqr();
        den += w[i] * grid[i] * b[i].norm_sqr();
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

pub fn compare(fd: &FdRun, spectral: &[ModeState]) -> Result<CompareReport> {
    if spectral.len() != fd.states.len() {
        return Err(Error::Grid("trajectories have different sample counts".into()));
    }
    let w = origin_grid_weights(&fd.grid);
    let mut rep = CompareReport {
        times: Vec::new(),
        err_h: Vec::new(),
        err_g: Vec::new(),
        err_ur: Vec::new(),
        err_utheta: Vec::new(),
        err_uz: Vec::new(),
        max_error: 0.0,
    };
    for (a, b) in spectral.iter().zip(&fd.states) {
        if a.grid != fd.grid {
            return Err(Error::Grid("spectral state on a different radial grid".into()));
        }
        if (a.t - b.t).abs() > 1e-9 * b.t.abs().max(1.0) {
            return Err(Error::Grid(format!("sample times differ: {} vs {}", a.t, b.t)));
        }
        let e = [
            rel_l2(&fd.grid, &w, &a.h_hat, &b.h_hat),
            rel_l2(&fd.grid, &w, &a.g_hat, &b.g_hat),
            rel_l2(&fd.grid, &w, &a.ur, &b.ur),
            rel_l2(&fd.grid, &w, &a.utheta, &b.utheta),
            rel_l2(&fd.grid, &w, &a.uz, &b.uz),
        ];
        rep.times.push(b.t);
        rep.err_h.push(e[0]);
        rep.err_g.push(e[1]);
        rep.err_ur.push(e[2]);
        rep.err_utheta.push(e[3]);
        rep.err_uz.push(e[4]);
        rep.max_error = e.iter().fold(rep.max_error, |m, x| m.max(*x));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{make_profile, ProfileKind};
    use crate::propagator::initial_mode;
    use crate::quad::uniform_grid;
    use crate::spectral::RadialFunction;

    #[test]
    fn zero_state_stays_zero() {
        let p = make_profile(ProfileKind::Uniform, &[]).unwrap();
        let grid = uniform_grid(0.1, 10.0);
        let s = ModeState::zero(&grid, 1.0);
        let out = step_fd(&s, 0.1, &p).unwrap();
        assert_eq!(energy(&out, &p), 0.0);
        assert!(step_fd(&s, 0.6, &p).is_err());
    }

    #[test]
    fn energy_is_quadratic() {
        let p = make_profile(ProfileKind::CoriolisExample, &[]).unwrap();
        let grid = uniform_grid(0.05, 15.0);
        let w = RadialFunction::from_fn(&grid, |r| r * (-r * r).exp()).unwrap();
        let s = initial_mode(&w, &w, &p, 1.0).unwrap();
        let mut s2 = s.clone();
        s2.h_hat.iter_mut().for_each(|x| *x *= 2.0);
        s2.g_hat.iter_mut().for_each(|x| *x *= 2.0);
        let (e1, e2) = (energy(&s, &p), energy(&s2, &p));
        assert!(e1 > 0.0 && (e2 / e1 - 4.0).abs() < 1e-12);
    }

    fn smooth_state(p: &VortexProfile) -> ModeState {
        let grid = uniform_grid(0.1, 12.0);
        let h = RadialFunction::from_fn(&grid, |r| r * (-r * r).exp()).unwrap();
        let g = RadialFunction::from_fn(&grid, |r| 0.5 * r * (-0.5 * r * r).exp()).unwrap();
        initial_mode(&h, &g, p, 1.0).unwrap()
    }

    fn distance(a: &ModeState, b: &ModeState) -> f64 {
        let d = |x: &[Complex64], y: &[Complex64]| {
            x.iter().zip(y).fold(0.0f64, |m, (u, v)| m.max((u - v).norm()))
        };
        d(&a.h_hat, &b.h_hat).max(d(&a.g_hat, &b.g_hat))
    }

    #[test]
    fn time_reversal() {
        let p = make_profile(ProfileKind::CoriolisExample, &[]).unwrap();
        let s0 = smooth_state(&p);
        let fd = FdIntegrator::new(&p, &s0.grid, s0.k).unwrap();
        let mut s = s0.clone();
        fd.advance(&mut s, 2.0, 0.01).unwrap();
        fd.advance(&mut s, -2.0, 0.01).unwrap();
        assert!(distance(&s, &s0) < 1e-8);
    }

    #[test]
    fn fourth_order_convergence() {
        let p = make_profile(ProfileKind::Uniform, &[]).unwrap();
        let s0 = smooth_state(&p);
        let reference = run_fd(&s0, &[2.0], 0.025, &p).unwrap();
        let err = |dt| distance(&run_fd(&s0, &[2.0], dt, &p).unwrap().states[0], &reference.states[0]);
        let ratio = err(0.2) / err(0.1);
        assert!((ratio - 16.0).abs() <= 0.3 * 16.0, "ratio {ratio}");
    }

    #[test]
    fn energy_drift() {
        let p = make_profile(ProfileKind::Uniform, &[]).unwrap();
        // the discrete energy is conserved only up to O(h^4) in space, so a fine grid
        let grid = uniform_grid(0.025, 12.0);
        let h = RadialFunction::from_fn(&grid, |r| r * (-r * r).exp()).unwrap();
        let g = RadialFunction::from_fn(&grid, |r| 0.5 * r * (-0.5 * r * r).exp()).unwrap();
        let s0 = initial_mode(&h, &g, &p, 1.0).unwrap();
        let times = [0.0, 1.0, 2.0, 5.0];
        let run = run_fd(&s0, &times, 0.01, &p).unwrap();
        for (t, e) in times.iter().zip(&run.energy).skip(1) {
            let drift = (e / run.energy[0] - 1.0).abs() / t;
            assert!(drift <= 1e-8, "drift {drift} at t = {t}");
        }
    }
}
