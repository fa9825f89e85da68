//! Spectral time evolution of one axial mode of
//! d/dt h = -i k A g, d/dt g = -i k h,
//! with velocity recovery, z-synthesis and decay fits.

use crate::error::{domain, Error, Result};
use crate::profiles::VortexProfile;
use crate::quad::{derivative, origin_grid_weights};
use crate::connection::SolverOptions;
use crate::oracle::energy;
use crate::spectral::{
    apply_delta1k, build_basis_table, forward_transform, reconstruct_with, BasisTable, CQuadrature,
    GreenOperator, RadialFunction, SpectralCoefficients, CLIP_FLAG,
};
use rayon::prelude::*;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub k: f64,
    pub t: f64,
    pub grid: Vec<f64>,
    pub h_hat: Vec<Complex64>,
    pub g_hat: Vec<Complex64>,
    pub ur: Vec<Complex64>,
    pub utheta: Vec<Complex64>,
    pub uz: Vec<Complex64>,
}

impl ModeState {
    pub fn zero(grid: &[f64], k: f64) -> Self {
        let z = vec![Complex64::default(); grid.len()];
        ModeState {
            k,
            t: 0.0,
            grid: grid.to_vec(),
            h_hat: z.clone(),
            g_hat: z.clone(),
            ur: z.clone(),
            utheta: z.clone(),
            uz: z,
        }
    }

    /// sup_r of |u| = (|u^r|^2 + |u^theta|^2 + |u^z|^2)^{1/2}.
    pub fn sup_velocity(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| (self.ur[i].norm_sqr() + self.utheta[i].norm_sqr() + self.uz[i].norm_sqr()).sqrt())
            .fold(0.0, f64::max)
    }

    /// (sup |u^r|, sup |u^theta|, sup |u^z|).
    pub fn sup_components(&self) -> (f64, f64, f64) {
        let s = |v: &[Complex64]| v.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        (s(&self.ur), s(&self.utheta), s(&self.uz))
    }

    /// The mode at -k for real physical fields: every component conjugated.
    pub fn conjugate(&self) -> Self {
        let cj = |v: &[Complex64]| v.iter().map(|x| x.conj()).collect::<Vec<_>>();
        ModeState {
            k: -self.k,
            t: self.t,
            grid: self.grid.clone(),
            h_hat: cj(&self.h_hat),
            g_hat: cj(&self.g_hat),
            ur: cj(&self.ur),
            utheta: cj(&self.utheta),
            uz: cj(&self.uz),
        }
    }
}

/// h0 = V (Delta_{1,k})^{-1} omega0, g0 = 2u u0^theta, velocities filled.
pub fn initial_mode(
    omega0: &RadialFunction,
    utheta0: &RadialFunction,
    p: &VortexProfile,
    k: f64,
) -> Result<ModeState> {
    if omega0.grid != utheta0.grid {
        return Err(Error::Grid("omega0 and utheta0 on different grids".into()));
    }
    let green = GreenOperator::new(&omega0.grid, k)?;
    let psi = green.apply(&omega0.values);
    let grid = omega0.grid.clone();
    let h_hat = grid.iter().zip(&psi).map(|(&r, v)| v * p.v(r)).collect();
    let g_hat = grid
        .iter()
        .zip(&utheta0.values)
        .map(|(&r, v)| v * (2.0 * p.u(r)))
        .collect();
    let mut s = ModeState {
        h_hat,
        g_hat,
        ..ModeState::zero(&grid, k)
    };
    recover_velocity(&mut s, p);
    Ok(s)
}

/// u^r = i k V^{-1} h, u^z = -(d/dr + 1/r)(V^{-1} h), u^theta = g / (2u).
pub fn recover_velocity(s: &mut ModeState, p: &VortexProfile) {
    let psi: Vec<Complex64> = s.grid.iter().zip(&s.h_hat).map(|(&r, h)| h / p.v(r)).collect();
    let dpsi = derivative(&s.grid, &psi);
    s.ur = psi.iter().map(|x| I * s.k * x).collect();
    s.uz = (0..s.grid.len()).map(|i| -(dpsi[i] + psi[i] / s.grid[i])).collect();
    s.utheta = s
        .grid
        .iter()
        .zip(&s.g_hat)
        .map(|(&r, g)| g / (2.0 * p.u(r)))
        .collect();
}

/// Discrete divergence (d/dr + 1/r) u^r + i k u^z, relative to sup |u^r|.
pub fn divergence_defect(s: &ModeState) -> f64 {
    let dur = derivative(&s.grid, &s.ur);
    let scale = s.ur.iter().chain(&s.uz).fold(0.0f64, |m, x| m.max(x.norm()));
    if scale == 0.0 {
        return 0.0;
    }
    (0..s.grid.len())
        .map(|i| (dur[i] + s.ur[i] / s.grid[i] + I * s.k * s.uz[i]).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Spectral data of an initial state, reusable for many times.
///
/// The data enter through b_h = F[A^{-2} h0] and b_g = F[A^{-1} g0], with
/// A^{-1} v = -Delta_{1,k}(V^{-1} v) applied by finite differences. Every
/// multiplier in `at` is then bounded at c = 0 instead of carrying the
/// (k^2/c)^2 reconstruction weight. Only one power is taken off g0: for
/// profiles with V'(0) != 0, A^{-2} of smooth data is singular at the axis.
pub struct Propagator<'a> {
    table: &'a BasisTable,
    p: &'a VortexProfile,
    s0: ModeState,
    b_h: SpectralCoefficients,
    b_g: SpectralCoefficients,
}

/// Evolved state with the clip-sensitivity estimate of the c-integrals.
#[derive(Debug, Clone)]
pub struct Evolved {
    pub state: ModeState,
    pub clip_sensitivity: f64,
    pub flagged: bool,
}

/// A^{-1} v = -Delta_{1,k}(V^{-1} v).
pub fn apply_a_inverse(v: &RadialFunction, p: &VortexProfile, k: f64) -> RadialFunction {
    apply_delta1k(&v.mul_fn(|r| 1.0 / p.v(r)), k).scale(Complex64::new(-1.0, 0.0))
}

impl<'a> Propagator<'a> {
    pub fn new(table: &'a BasisTable, p: &'a VortexProfile, s0: &ModeState) -> Result<Self> {
        if (table.k - s0.k.abs()).abs() > 1e-14 * table.k.max(1.0) {
            return Err(Error::Grid(format!(
                "basis table for k = {} but state has k = {}",
                table.k, s0.k
            )));
        }
        let pre = |v: &[Complex64], power: usize| -> Result<SpectralCoefficients> {
            let mut f = RadialFunction::new(s0.grid.clone(), v.to_vec())?;
            for _ in 0..power {
                f = apply_a_inverse(&f, p, s0.k);
            }
            forward_transform(table, &f)
        };
        Ok(Propagator {
            table,
            p,
            s0: s0.clone(),
            b_h: pre(&s0.h_hat, 2)?,
            b_g: pre(&s0.g_hat, 1)?,
        })
    }

    /// State at time t >= 0 after the initial state.
    ///
    /// h(t) = h0 + (cos(k sqrt(A) t) - 1) h0 - i sqrt(A) sin(k sqrt(A) t) g0 and
    /// g(t) = g0 + (cos(k sqrt(A) t) - 1) g0 - i sin(k sqrt(A) t) / sqrt(A) h0,
    /// so t = 0 reproduces the input exactly.
    pub fn at(&self, t: f64) -> Result<Evolved> {
        if !(t >= 0.0) || !t.is_finite() {
            return domain(format!("evolution time must be finite and >= 0, got {t}"));
        }
        let kk = self.s0.k.abs();
        // the -k mode solves the conjugate system: the sine terms flip sign
        let sgn = self.s0.k.signum();
        let cosm1 = |c: f64| {
            let s = (0.5 * c.sqrt() * t).sin();
            -2.0 * s * s
        };
        let sin = |c: f64| (c.sqrt() * t).sin();
        let k2 = kk * kk;
        // multipliers of (b_h, b_g), all bounded as c -> 0
        let mh = |c: f64| (Complex64::from(cosm1(c)), -I * sgn * (kk / c.sqrt() * sin(c)));
        let mg = |c: f64| (-I * sgn * (kk / c.sqrt() * sin(c)), Complex64::from(k2 / c * cosm1(c)));
        let mix = |bh: &[Complex64], bg: &[Complex64], cs: &[f64], m: &dyn Fn(f64) -> (Complex64, Complex64)| -> Vec<Complex64> {
            (0..cs.len())
                .map(|i| {
                    let (x, y) = m(cs[i]);
                    bh[i] * x + bg[i] * y
                })
                .collect()
        };
        let tb = self.table;
        let (bh, bg) = (&self.b_h, &self.b_g);
        let mut ch = bh.clone();
        ch.tilde = mix(&bh.tilde, &bg.tilde, &tb.c, &mh);
        ch.clip_tilde = mix(&bh.clip_tilde, &bg.clip_tilde, &tb.clip_c, &mh);
        let mut cg = bg.clone();
        cg.tilde = mix(&bh.tilde, &bg.tilde, &tb.c, &mg);
        cg.clip_tilde = mix(&bh.clip_tilde, &bg.clip_tilde, &tb.clip_c, &mg);
        let one = |_c: f64| Complex64::new(1.0, 0.0);
        let (dh, xh) = reconstruct_with(tb, &ch, one)?;
        let (dg, xg) = reconstruct_with(tb, &cg, one)?;
        let mut state = self.s0.clone();
        state.t = self.s0.t + t;
        let mut extra_h = 0.0;
        let mut extra_g = 0.0;
        let w = origin_grid_weights(&state.grid);
        for i in 0..state.grid.len() {
            let r = state.grid[i];
            let v = self.p.v(r);
            state.h_hat[i] += dh.values[i] * v;
            state.g_hat[i] += dg.values[i] * v;
            extra_h += w[i] * r * (xh.values[i] * v).norm_sqr();
            extra_g += w[i] * r * (xg.values[i] * v).norm_sqr();
        }
        recover_velocity(&mut state, self.p);
        let norm2 = |v: &[Complex64]| -> f64 {
            (0..v.len()).map(|i| w[i] * state.grid[i] * v[i].norm_sqr()).sum()
        };
        let nh = norm2(&state.h_hat).max(1e-300);
        let ng = norm2(&state.g_hat).max(1e-300);
        let clip = (extra_h / nh).sqrt().max((extra_g / ng).sqrt());
        Ok(Evolved {
            state,
            clip_sensitivity: clip,
            flagged: clip > CLIP_FLAG,
        })
    }
}

pub fn evolve_mode(s0: &ModeState, t: f64, table: &BasisTable, p: &VortexProfile) -> Result<Evolved> {
    Propagator::new(table, p, s0)?.at(t)
}

/// Real fields on an (r, z) grid; `ur[j][i]` is at z_grid[j], grid[i].
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalFields {
    pub grid: Vec<f64>,
    pub z_grid: Vec<f64>,
    pub ur: Vec<Vec<f64>>,
    pub utheta: Vec<Vec<f64>>,
    pub uz: Vec<Vec<f64>>,
}

impl PhysicalFields {
    pub fn sup_velocity(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.z_grid.len() {
            for i in 0..self.grid.len() {
                let v = (self.ur[j][i].powi(2) + self.utheta[j][i].powi(2) + self.uz[j][i].powi(2)).sqrt();
                m = m.max(v);
            }
        }
        m
    }
}

/// u(r, z) = sum over modes of u_k(r) e^{i k z}; requires the mode set to be
/// closed under k -> -k with conjugate data.
pub fn synthesize_z(modes: &[ModeState], z_grid: &[f64]) -> Result<PhysicalFields> {
    let grid = match modes.first() {
        Some(m) => m.grid.clone(),
        None => return domain("synthesize_z needs at least one mode"),
    };
    for m in modes {
        if m.grid != grid {
            return Err(Error::Grid("modes on different radial grids".into()));
        }
        let partner = modes
            .iter()
            .find(|o| (o.k + m.k).abs() <= 1e-12 * m.k.abs().max(1.0))
            .ok_or_else(|| Error::Domain(format!("mode k = {} has no -k partner", m.k)))?;
        let scale = m.sup_velocity().max(1e-300);
        let mismatch = (0..grid.len())
            .map(|i| {
                (m.ur[i] - partner.ur[i].conj()).norm()
                    + (m.utheta[i] - partner.utheta[i].conj()).norm()
                    + (m.uz[i] - partner.uz[i].conj()).norm()
            })
            .fold(0.0, f64::max);
        if mismatch > 1e-10 * scale {
            return domain(format!("mode k = {} is not conjugate to its -k partner", m.k));
        }
    }
    let n = grid.len();
    let field = |sel: &dyn Fn(&ModeState) -> &Vec<Complex64>| -> Vec<Vec<f64>> {
        z_grid
            .iter()
            .map(|&z| {
                let mut row = vec![0.0; n];
                for m in modes {
                    let e = Complex64::from_polar(1.0, m.k * z);
                    let v = sel(m);
                    for i in 0..n {
                        row[i] += (v[i] * e).re;
                    }
                }
                row
            })
            .collect()
    };
    Ok(PhysicalFields {
        grid: grid.clone(),
        z_grid: z_grid.to_vec(),
        ur: field(&|m| &m.ur),
        utheta: field(&|m| &m.utheta),
        uz: field(&|m| &m.uz),
    })
}

/// Log-log least-squares fit s(t) = C t^{-p}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub p: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Root-mean-square residual in ln s.
    pub residual: f64,
}

pub fn decay_fit(times: &[f64], sup_norms: &[f64]) -> Result<DecayFit> {
    if times.len() != sup_norms.len() || times.len() < 8 {
        return domain("decay fit needs at least 8 (t, s) samples");
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || !(times[0] > 0.0) {
        return domain("decay fit needs positive increasing times");
    }
    if sup_norms.iter().any(|s| !(*s > 0.0)) {
        return domain("decay fit needs positive sup norms");
    }
    let n = times.len() as f64;
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = sup_norms.iter().map(|s| s.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let residual = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        times: times.to_vec(),
        sup_norms: sup_norms.to_vec(),
        p: -slope,
        c: icpt.exp(),
        residual,
    })
}

/// Relative L^2 defect between evolving by t1 + t2 at once and in two legs.
pub fn semigroup_defect(
    table: &BasisTable,
    p: &VortexProfile,
    s0: &ModeState,
    t1: f64,
    t2: f64,
) -> Result<f64> {
    let direct = Propagator::new(table, p, s0)?.at(t1 + t2)?.state;
    let mid = Propagator::new(table, p, s0)?.at(t1)?.state;
    let two = Propagator::new(table, p, &mid)?.at(t2)?.state;
    let w = origin_grid_weights(&s0.grid);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..w.len() {
        let r = s0.grid[i];
        num += w[i] * r * ((two.h_hat[i] - direct.h_hat[i]).norm_sqr() + (two.g_hat[i] - direct.g_hat[i]).norm_sqr());
        den += w[i] * r * (direct.h_hat[i].norm_sqr() + direct.g_hat[i].norm_sqr());
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

/// Gaussian data scaled with |k|: omega0 = kr e^{-(kr)^2},
/// u0 = kr e^{-(kr)^2/2} / 2. Each mode then carries O(1) content in xi/k.
pub fn gaussian_data(grid: &[f64], k: f64) -> Result<(RadialFunction, RadialFunction)> {
    let a = k.abs();
    let om = RadialFunction::from_fn(grid, |r| a * r * (-(a * r).powi(2)).exp())?;
    let ut = RadialFunction::from_fn(grid, |r| 0.5 * a * r * (-(a * r).powi(2) / 2.0).exp())?;
    Ok((om, ut))
}

/// Radial extent that keeps waves away from the outer boundary up to
/// `t_max`: the group speed of mode k is at most 0.385/|k|.
pub fn decay_r_max(k: f64, t_max: f64) -> f64 {
    (0.4 * t_max / k.abs() + 25.0).max(40.0)
}

/// c panels for evolution up to `t_max` on [0, r_max]: the integrand
/// oscillates like cos(sqrt(c) t) in c and like xi r in the radius.
pub fn evolution_quadrature(t_max: f64, r_max: f64, c_min: f64) -> CQuadrature {
    CQuadrature {
        c_min,
        low_panels: ((0.4 * t_max).max(2.5 * r_max).ceil() as usize).max(16),
        high_panels: ((0.5 * t_max).max(0.8 * r_max).ceil() as usize).max(8),
        ..CQuadrature::default()
    }
}

/// Per-mode decay record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeDecay {
    pub k: f64,
    pub times: Vec<f64>,
    pub sup_ur: Vec<f64>,
    pub sup_utheta: Vec<f64>,
    pub sup_uz: Vec<f64>,
    pub energy: Vec<f64>,
    pub clip_sensitivity: f64,
    pub flagged: bool,
    pub fit: DecayFit,
}

/// Evolves Gaussian data for one k > 0 to each of `times` and fits the
/// decay of sup_r |u|. Returns the states as well.
pub fn mode_decay(
    p: &VortexProfile,
    k: f64,
    grid: &[f64],
    quadrature: CQuadrature,
    opts: &SolverOptions,
    times: &[f64],
) -> Result<(ModeDecay, Vec<ModeState>)> {
    let (om, ut) = gaussian_data(grid, k)?;
    let s0 = initial_mode(&om, &ut, p, k)?;
    let table = build_basis_table(p, k.abs(), grid, quadrature, opts)?;
    let prop = Propagator::new(&table, p, &s0)?;
    let ev: Vec<Evolved> = times.par_iter().map(|&t| prop.at(t)).collect::<Result<_>>()?;
    let sup: Vec<f64> = ev.iter().map(|e| e.state.sup_velocity()).collect();
    let comps: Vec<(f64, f64, f64)> = ev.iter().map(|e| e.state.sup_components()).collect();
    let clip = ev.iter().map(|e| e.clip_sensitivity).fold(0.0, f64::max);
    let rec = ModeDecay {
        k,
        times: times.to_vec(),
        sup_ur: comps.iter().map(|c| c.0).collect(),
        sup_utheta: comps.iter().map(|c| c.1).collect(),
        sup_uz: comps.iter().map(|c| c.2).collect(),
        energy: ev.iter().map(|e| energy(&e.state, p)).collect(),
        clip_sensitivity: clip,
        flagged: ev.iter().any(|e| e.flagged),
        fit: decay_fit(times, &sup)?,
    };
    Ok((rec, ev.into_iter().map(|e| e.state).collect()))
}

/// sup over (r, z) of the real field built from modes +-k_j, each with the
/// Gaussian data of `mode_decay`, on a common grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisDecay {
    pub ks: Vec<f64>,
    pub z_grid: Vec<f64>,
    pub sup: Vec<f64>,
    pub fit: DecayFit,
    pub modes: Vec<ModeDecay>,
}

pub fn synthesized_decay(
    p: &VortexProfile,
    ks: &[f64],
    grid: &[f64],
    quadrature: CQuadrature,
    opts: &SolverOptions,
    times: &[f64],
    z_grid: &[f64],
) -> Result<SynthesisDecay> {
    if ks.is_empty() || ks.len() > 4 || ks.iter().any(|k| !(*k > 0.0)) {
        return domain("synthesis takes one to four positive k (at most 8 modes with their -k partners)");
    }
    let mut modes = Vec::new();
    let mut states = Vec::new();
    for &k in ks {
        let (m, st) = mode_decay(p, k, grid, quadrature, opts, times)?;
        modes.push(m);
        states.push(st);
    }
    let sup: Vec<f64> = (0..times.len())
        .into_par_iter()
        .map(|j| {
            let set: Vec<ModeState> = states
                .iter()
                .flat_map(|st| [st[j].clone(), st[j].conjugate()])
                .collect();
            synthesize_z(&set, z_grid).map(|f| f.sup_velocity())
        })
        .collect::<Result<_>>()?;
    Ok(SynthesisDecay {
        ks: ks.to_vec(),
        z_grid: z_grid.to_vec(),
        fit: decay_fit(times, &sup)?,
        sup,
        modes,
    })
}

/// Trajectory CSV: t,sup_ur,sup_utheta,sup_uz,energy.
pub fn write_trajectory_csv<W: Write>(out: &mut W, rows: &[(f64, (f64, f64, f64), f64)]) -> Result<()> {
    writeln!(out, "t,sup_ur,sup_utheta,sup_uz,energy")?;
    for (t, (a, b, c), e) in rows {
        writeln!(out, "{:?},{:?},{:?},{:?},{:?}", t, a, b, c, e)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let t: Vec<f64> = (1..=10).map(|i| 10.0 * i as f64).collect();
        let s: Vec<f64> = t.iter().map(|t| 5.0 / t).collect();
        let f = decay_fit(&t, &s).unwrap();
        assert!((f.p - 1.0).abs() < 1e-12 && (f.c - 5.0).abs() < 1e-10);
        let s: Vec<f64> = t.iter().map(|t| 3.0 / (t * t)).collect();
        assert!((decay_fit(&t, &s).unwrap().p - 2.0).abs() < 1e-12);
        let s: Vec<f64> = t.iter().map(|t| (2.0 + 0.1 * t.sin()) / t).collect();
        let p = decay_fit(&t, &s).unwrap().p;
        assert!((0.95..=1.05).contains(&p));
    }

    #[test]
    fn fit_rejects_bad_input() {
        let t: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let mut s = vec![1.0; 8];
        s[3] = 0.0;
        assert!(decay_fit(&t, &s).is_err());
        assert!(decay_fit(&t[..5], &s[..5]).is_err());
    }
}
