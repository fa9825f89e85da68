//! Special functions: Bessel orders 0 and 1, Airy, the outgoing Hankel
//! function H_+ = J_1 + i Y_1, the oscillatory Airy combination
//! Oi(-z) = Ai(-z) - i Bi(-z), and the J_1 Fourier pair.

pub mod airy;
pub mod bessel;
pub mod dd;

use crate::error::{domain, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use airy::{airy_all, AiryValues, AIRY_DOMAIN};
pub use bessel::{i0e, i1e, j0, j1, k0e, k1e, y0, y1};

/// Complex value returned by the special-function API; `im = 0` for real functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecialValue {
    pub re: f64,
    pub im: f64,
}

impl SpecialValue {
    pub fn real(re: f64) -> Self {
        SpecialValue { re, im: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

impl From<SpecialValue> for Complex64 {
    fn from(v: SpecialValue) -> Complex64 {
        Complex64::new(v.re, v.im)
    }
}

impl From<Complex64> for SpecialValue {
    fn from(z: Complex64) -> Self {
        SpecialValue { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BesselKind {
    J1,
    Y1,
    I1,
    K1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AiryKind {
    Ai,
    Bi,
}

/// Largest argument for the unscaled I_1 before overflow.
pub const I1_MAX: f64 = 700.0;

pub fn bessel(kind: BesselKind, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return domain(format!("bessel argument {x} is not finite"));
    }
    match kind {
        BesselKind::J1 if x >= 0.0 => Ok(j1(x)),
        BesselKind::I1 if (0.0..=I1_MAX).contains(&x) => Ok(bessel::i1(x)),
        BesselKind::Y1 if x > 0.0 => Ok(y1(x)),
        BesselKind::K1 if x > 0.0 => Ok(bessel::k1(x)),
        _ => domain(format!("{kind:?} undefined at x = {x}")),
    }
}

/// Value and derivative of a Bessel function.
pub fn bessel_with_derivative(kind: BesselKind, x: f64) -> Result<(f64, f64)> {
    let v = bessel(kind, x)?;
    let d = match kind {
        BesselKind::J1 => {
            if x == 0.0 {
                0.5
            } else {
                j0(x) - v / x
            }
        }
        BesselKind::Y1 => y0(x) - v / x,
        BesselKind::I1 => {
            if x == 0.0 {
                0.5
            } else {
                bessel::i0(x) - v / x
            }
        }
        BesselKind::K1 => -bessel::k0(x) - v / x,
    };
    Ok((v, d))
}

pub fn airy(kind: AiryKind, x: f64) -> Result<f64> {
    let v = airy_with_derivative(kind, x)?;
    Ok(v.0)
}

pub fn airy_with_derivative(kind: AiryKind, x: f64) -> Result<(f64, f64)> {
    if !(x.abs() <= AIRY_DOMAIN) {
        return domain(format!("airy argument {x} outside |x| <= {AIRY_DOMAIN}"));
    }
    let v = airy_all(x);
    Ok(match kind {
        AiryKind::Ai => (v.ai, v.aip),
        AiryKind::Bi => (v.bi, v.bip),
    })
}

/// H_+(z) = J_1(z) + i Y_1(z), z > 0.
pub fn hankel_plus(z: f64) -> Result<SpecialValue> {
    Ok(hankel_plus_with_derivative(z)?.0)
}

/// H_+(z) and its derivative.
pub fn hankel_plus_with_derivative(z: f64) -> Result<(SpecialValue, SpecialValue)> {
    if !(z > 0.0) || !z.is_finite() {
        return domain(format!("hankel_plus requires z > 0, got {z}"));
    }
    let (j, y, jp, yp) = bessel::jy1_with_derivatives(z);
    Ok((SpecialValue { re: j, im: y }, SpecialValue { re: jp, im: yp }))
}

/// Oi(-z) = Ai(-z) - i Bi(-z) for 0 <= z <= 30.
pub fn oscillatory_airy(z: f64) -> Result<SpecialValue> {
    if !(0.0..=AIRY_DOMAIN).contains(&z) {
        return domain(format!("oscillatory_airy requires 0 <= z <= {AIRY_DOMAIN}, got {z}"));
    }
    let v = airy_all(-z);
    Ok(SpecialValue {
        re: v.ai,
        im: -v.bi,
    })
}

/// Closed-form transforms (int_0^inf J_1(eta) sin(eta y) d eta,
/// int_0^inf J_1(eta)/eta cos(eta y) d eta).
pub fn j1_fourier_pair(y: f64) -> Result<(f64, f64)> {
    if !y.is_finite() || y.abs() == 1.0 {
        return domain(format!("j1_fourier_pair singular at y = {y}"));
    }
    if y.abs() < 1.0 {
        let s = (1.0 - y * y).sqrt();
        Ok((y / s, s))
    } else {
        Ok((0.0, 0.0))
    }
}
