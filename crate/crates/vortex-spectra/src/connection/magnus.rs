//! Sixth-order Magnus integrator for w'' + P(r) w = 0 written as
//! y' = A y, y = (w, w'), A = [[0, 1], [-P, 0]].
//!
//! Each accepted step is stored as a unimodular 2x2 transfer matrix, so the
//! Wronskian of any two propagated solutions is preserved to rounding.

use crate::error::{Error, Result};

pub type M2 = [[f64; 2]; 2];

const ID: M2 = [[1.0, 0.0], [0.0, 1.0]];

fn add(a: &M2, b: &M2) -> M2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

fn scale(a: &M2, s: f64) -> M2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

pub fn mul(a: &M2, b: &M2) -> M2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn comm(a: &M2, b: &M2) -> M2 {
    add(&mul(a, b), &scale(&mul(b, a), -1.0))
}

fn max_abs(a: &M2) -> f64 {
    a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Inverse of a unimodular matrix.
pub fn adjugate(a: &M2) -> M2 {
    [[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]
}

/// exp of a traceless 2x2 matrix; also returns |mu| with mu^2 = -det.
fn expm_traceless(o: &M2) -> (M2, f64) {
    let a = 0.5 * (o[0][0] - o[1][1]);
    let b = o[0][1];
    let c = o[1][0];
    let mu2 = a * a + b * c;
    let (ch, sh) = if mu2 > 0.0 {
        let mu = mu2.sqrt();
        (mu.cosh(), if mu < 1e-8 { 1.0 + mu2 / 6.0 } else { mu.sinh() / mu })
    } else {
        let nu = (-mu2).sqrt();
        (nu.cos(), if nu < 1e-8 { 1.0 + mu2 / 6.0 } else { nu.sin() / nu })
    };
    (
        [[ch + sh * a, sh * b], [sh * c, ch - sh * a]],
        mu2.abs().sqrt(),
    )
}

fn gen(p: f64) -> M2 {
    [[0.0, 1.0], [-p, 0.0]]
}

/// One Magnus step of length h from r0; returns (transfer matrix, |mu|).
pub fn magnus_step<F: Fn(f64) -> f64>(pot: &F, r0: f64, h: f64) -> (M2, f64) {
    let d = 15f64.sqrt() / 10.0;
    let a1 = gen(pot(r0 + (0.5 - d) * h));
    let a2 = gen(pot(r0 + 0.5 * h));
    let a3 = gen(pot(r0 + (0.5 + d) * h));
    let alpha1 = scale(&a2, h);
    let alpha2 = scale(&add(&a3, &scale(&a1, -1.0)), 15f64.sqrt() * h / 3.0);
    let alpha3 = scale(
        &add(&add(&a3, &scale(&a2, -2.0)), &a1),
        10.0 * h / 3.0,
    );
    let c1 = comm(&alpha1, &alpha2);
    let c2 = scale(
        &comm(&alpha1, &add(&scale(&alpha3, 2.0), &c1)),
        -1.0 / 60.0,
    );
    let left = add(&add(&scale(&alpha1, -20.0), &scale(&alpha3, -1.0)), &c1);
    let right = add(&alpha2, &c2);
    let mut omega = add(&add(&alpha1, &scale(&alpha3, 1.0 / 12.0)), &scale(&comm(&left, &right), 1.0 / 240.0));
    // enforce zero trace so that det exp(omega) = 1
    let tr = 0.5 * (omega[0][0] + omega[1][1]);
    omega[0][0] -= tr;
    omega[1][1] -= tr;
    expm_traceless(&omega)
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub tol: f64,
    /// Largest |mu| per step, bounding the growth of a single transfer matrix.
    pub mu_max: f64,
    /// Largest step as a fraction of r.
    pub rel_max: f64,
    /// Step collapse threshold as a fraction of r.
    pub rel_min: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            tol: 1e-11,
            mu_max: 3.0,
            rel_max: 0.25,
            rel_min: 1e-13,
        }
    }
}

/// Step nodes and transfer matrices from `r_start` to the last entry of
/// `stops`; every stop is hit exactly. `node_of_stop[i]` is the node index
/// of `stops[i]`.
pub struct Propagation {
    pub nodes: Vec<f64>,
    pub transfer: Vec<M2>,
    pub node_of_stop: Vec<usize>,
}

pub fn propagate<F: Fn(f64) -> f64>(
    pot: &F,
    r_start: f64,
    stops: &[f64],
    ctl: &StepControl,
) -> Result<Propagation> {
    let mut nodes = vec![r_start];
    let mut transfer = Vec::new();
    let mut node_of_stop = Vec::with_capacity(stops.len());
    let mut r = r_start;
    let mut h = ctl.rel_max * r_start;
    for &stop in stops {
        if stop < r {
            return Err(Error::Grid(format!("stops not increasing at {stop}")));
        }
        if stop == r {
            node_of_stop.push(nodes.len() - 1);
            continue;
        }
        while r < stop {
            h = h.min(ctl.rel_max * r);
            let last = h >= stop - r;
            let ht = if last { stop - r } else { h };
            let (t_full, mu) = magnus_step(pot, r, ht);
            if mu > ctl.mu_max {
                h = ht * 0.8 * ctl.mu_max / mu;
                if h < ctl.rel_min * r {
                    return Err(Error::Integration {
                        r,
                        msg: "step collapse (growth cap)".into(),
                    });
                }
                continue;
            }
            let (t_a, _) = magnus_step(pot, r, 0.5 * ht);
            let (t_b, _) = magnus_step(pot, r + 0.5 * ht, 0.5 * ht);
            let t_half = mul(&t_b, &t_a);
            let diff = add(&t_full, &scale(&t_half, -1.0));
            let err = max_abs(&diff) / max_abs(&t_half).max(1.0);
            if !err.is_finite() {
                return Err(Error::Integration {
                    r,
                    msg: "non-finite transfer matrix".into(),
                });
            }
            let fac = if err > 0.0 {
                0.9 * (ctl.tol / err).powf(1.0 / 7.0)
            } else {
                2.0
            };
            if err <= ctl.tol {
                let r_next = if last { stop } else { r + ht };
                transfer.push(t_half);
                nodes.push(r_next);
                r = r_next;
                if !last {
                    h = ht * fac.clamp(0.2, 2.0);
                }
            } else {
                h = ht * fac.clamp(0.2, 0.9);
                if h < ctl.rel_min * r {
                    return Err(Error::Integration {
                        r,
                        msg: "stiffness detected: step collapse".into(),
                    });
                }
            }
        }
        node_of_stop.push(nodes.len() - 1);
    }
    Ok(Propagation {
        nodes,
        transfer,
        node_of_stop,
    })
}

pub fn identity() -> M2 {
    ID
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_potential_is_exact() {
        let pot = |_r: f64| 4.0;
        let (t, _) = magnus_step(&pot, 1.0, 0.7);
        let w = 2.0f64;
        let expect = [[(w * 0.7).cos(), (w * 0.7).sin() / w], [-w * (w * 0.7).sin(), (w * 0.7).cos()]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unimodular_steps() {
        let pot = |r: f64| 9.0 - 0.75 / (r * r) + r.sin();
        let (t, _) = magnus_step(&pot, 0.3, 0.2);
        let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
        assert!((det - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sixth_order_convergence() {
        // Airy: w'' = r w, compare one step of size h against many small steps
        let pot = |r: f64| -r;
        let reference = {
            let mut t = ID;
            let n = 2000;
            for i in 0..n {
                let h = 0.8 / n as f64;
                t = mul(&magnus_step(&pot, 0.2 + i as f64 * h, h).0, &t);
            }
            t
        };
        let err = |n: usize| {
            let mut t = ID;
            for i in 0..n {
                let h = 0.8 / n as f64;
                t = mul(&magnus_step(&pot, 0.2 + i as f64 * h, h).0, &t);
            }
            max_abs(&add(&t, &scale(&reference, -1.0)))
        };
        let ratio = err(2) / err(4);
        assert!(ratio > 40.0, "ratio {ratio}");
    }
}
