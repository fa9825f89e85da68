//! Bessel functions of orders 0 and 1.
//!
//! J and Y: power series summed in double-double below `SERIES_MAX`, Hankel
//! asymptotic expansion above. I: positive-term series below `I_SERIES_MAX`,
//! asymptotic above. K: trapezoid rule on the integral
//! `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`, which converges
//! geometrically for analytic integrands.

use super::dd::DD;
use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, FRAC_PI_4, PI};

/// Switchover radius between the double-double series and the Hankel expansion.
pub const SERIES_MAX: f64 = 20.0;
/// Switchover radius for the modified function I.
pub const I_SERIES_MAX: f64 = 30.0;

const EULER_GAMMA: DD = DD::new(0.5772156649015329, -4.942915152430645e-18);

struct JSeries {
    j: DD,
    // sum over k of H_k * term_k (order 0) or (H_k + H_{k+1}) * term_k (order 1)
    log_sum: DD,
}

fn j_series(n: u32, x: f64) -> JSeries {
    let half = 0.5 * x;
    let y = DD::from_f64(half) * DD::from_f64(half);
    let mut term = if n == 0 {
        DD::from_f64(1.0)
    } else {
        DD::from_f64(half)
    };
    let mut j = term;
    let mut h_k = DD::default();
    let mut log_sum = if n == 0 {
        DD::default()
    } else {
        // k = 0: H_0 + H_1 = 1
        term
    };
    let mut k: u64 = 0;
    loop {
        let denom = ((k + 1) * (k + 1 + n as u64)) as f64;
        term = -(term * y).div_f64(denom);
        k += 1;
        h_k = h_k + DD::recip_int(k);
        j = j + term;
        let weight = if n == 0 {
            h_k
        } else {
            h_k + h_k + DD::recip_int(k + 1)
        };
        log_sum = log_sum + weight * term;
        let scale = j.hi.abs().max(log_sum.hi.abs()).max(1e-300);
        if (k as f64) > half && term.hi.abs() < 1e-34 * scale.max(1.0) {
            break;
        }
        if k > 500 {
            break;
        }
    }
    JSeries { j, log_sum }
}

fn hankel_asymptotic(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        a *= (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * x);
        if a.abs() >= prev || a.abs() < 1e-18 {
            break;
        }
        prev = a.abs();
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
    }
    let w = x - (0.5 * nu + 0.25) * PI;
    let amp = (FRAC_2_PI / x).sqrt();
    let (s, c) = w.sin_cos();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

/// J_0(x).
pub fn j0(x: f64) -> f64 {
    let x = x.abs();
    if x < SERIES_MAX {
        j_series(0, x).j.to_f64()
    } else {
        hankel_asymptotic(0.0, x).0
    }
}

/// J_1(x); odd in x.
pub fn j1(x: f64) -> f64 {
    let s = x.signum();
    let x = x.abs();
    if x == 0.0 {
        return 0.0;
    }
    s * if x < SERIES_MAX {
        j_series(1, x).j.to_f64()
    } else {
        hankel_asymptotic(1.0, x).0
    }
}

/// Y_0(x), x > 0.
pub fn y0(x: f64) -> f64 {
    if x < SERIES_MAX {
        let s = j_series(0, x);
        let l = (0.5 * x).ln() + EULER_GAMMA.to_f64();
        FRAC_2_PI * (l * s.j.to_f64() - s.log_sum.to_f64())
    } else {
        hankel_asymptotic(0.0, x).1
    }
}

/// Y_1(x), x > 0.
pub fn y1(x: f64) -> f64 {
    if x < SERIES_MAX {
        let s = j_series(1, x);
        let l = (0.5 * x).ln() + EULER_GAMMA.to_f64();
        -FRAC_2_PI / x + FRAC_2_PI * l * s.j.to_f64() - s.log_sum.to_f64() / PI
    } else {
        hankel_asymptotic(1.0, x).1
    }
}

/// (J_1, Y_1, J_1', Y_1') at x > 0.
pub fn jy1_with_derivatives(x: f64) -> (f64, f64, f64, f64) {
    let (j0v, y0v, j1v, y1v) = if x < SERIES_MAX {
        (j0(x), y0(x), j1(x), y1(x))
    } else {
        let (a, b) = hankel_asymptotic(0.0, x);
        let (c, d) = hankel_asymptotic(1.0, x);
        (a, b, c, d)
    };
    (j1v, y1v, j0v - j1v / x, y0v - y1v / x)
}

fn i_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let y = half * half;
    let mut term = if n == 0 { 1.0 } else { half };
    let mut sum = term;
    let mut k = 0u64;
    loop {
        term *= y / ((k + 1) * (k + 1 + n as u64)) as f64;
        sum += term;
        k += 1;
        if term < 1e-17 * sum || k > 1000 {
            break;
        }
    }
    sum
}

fn i_asymptotic_scaled(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut sum = 1.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        a *= -(mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * x);
        if a.abs() >= prev || a.abs() < 1e-18 {
            break;
        }
        prev = a.abs();
        sum += a;
    }
    sum / (2.0 * PI * x).sqrt()
}

/// e^{-x} I_0(x), x >= 0.
pub fn i0e(x: f64) -> f64 {
    let x = x.abs();
    if x < I_SERIES_MAX {
        i_series(0, x) * (-x).exp()
    } else {
        i_asymptotic_scaled(0.0, x)
    }
}

/// e^{-x} I_1(x), odd in x.
pub fn i1e(x: f64) -> f64 {
    let s = x.signum();
    let x = x.abs();
    if x == 0.0 {
        return 0.0;
    }
    s * if x < I_SERIES_MAX {
        i_series(1, x) * (-x).exp()
    } else {
        i_asymptotic_scaled(1.0, x)
    }
}

pub fn i0(x: f64) -> f64 {
    i0e(x) * x.abs().exp()
}

pub fn i1(x: f64) -> f64 {
    i1e(x) * x.abs().exp()
}

/// e^{x} K_nu(x) for x > 0 and real order nu, by the trapezoid rule on
/// int_0^inf exp(-x (cosh t - 1)) cosh(nu t) dt.
pub fn k_nu_scaled(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let h = if x > 2.25 { 0.15 / x.sqrt() } else { 0.1 };
    let mut sum = 0.5;
    let mut i = 1u64;
    loop {
        let t = h * i as f64;
        let e = -x * (t.cosh() - 1.0);
        let term = e.exp() * (nu * t).cosh();
        sum += term;
        i += 1;
        let slope = -x * t.sinh() + nu * (nu * t).tanh();
        if slope < 0.0 && term < 1e-18 * sum {
            break;
        }
        if i > 200_000 {
            break;
        }
    }
    h * sum
}

/// e^{x} K_0(x).
pub fn k0e(x: f64) -> f64 {
    k_nu_scaled(0.0, x)
}

/// e^{x} K_1(x).
pub fn k1e(x: f64) -> f64 {
    k_nu_scaled(1.0, x)
}

pub fn k0(x: f64) -> f64 {
    k0e(x) * (-x).exp()
}

pub fn k1(x: f64) -> f64 {
    k1e(x) * (-x).exp()
}

/// Leading large-argument phase of H_+ = J_1 + i Y_1: x - 3 pi / 4.
pub fn hankel_phase(x: f64) -> f64 {
    x - 3.0 * FRAC_PI_4
}

/// sqrt(pi x / 2) scale of the Hankel modulus.
pub fn hankel_scale(x: f64) -> f64 {
    (FRAC_PI_2 * x).sqrt()
}
