//! Airy functions Ai, Bi and their derivatives on |x| <= 30.
//!
//! Maclaurin series in double-double on [`NEG_SERIES_MIN`, `POS_SERIES_MAX`],
//! the K_{1/3}, K_{2/3} integral for Ai on x > `POS_SERIES_MAX`, a positive
//! term series for Bi there, and the oscillatory asymptotic expansion for
//! x < `NEG_SERIES_MIN`.

use super::bessel::k_nu_scaled;
use super::dd::DD;
use std::f64::consts::{FRAC_PI_4, PI};

pub const NEG_SERIES_MIN: f64 = -9.0;
pub const POS_SERIES_MAX: f64 = 1.0;
pub const AIRY_DOMAIN: f64 = 30.0;

// Ai(0) and -Ai'(0).
const C1: DD = DD::new(0.3550280538878172, 2.05233632436212e-17);
const C2: DD = DD::new(0.2588194037928068, -2.522243111610832e-17);
const SQRT3: DD = DD::new(1.7320508075688772, 1.0035084221806903e-16);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AiryValues {
    pub ai: f64,
    pub aip: f64,
    pub bi: f64,
    pub bip: f64,
}

struct Maclaurin {
    f: DD,
    g: DD,
    fp: DD,
    gp: DD,
}

fn maclaurin(x: f64) -> Maclaurin {
    let x3 = DD::from_f64(x) * DD::from_f64(x) * DD::from_f64(x);
    let mut t = DD::from_f64(1.0);
    let mut s = DD::from_f64(x);
    let mut d = DD::from_f64(x) * DD::from_f64(x).mul_f64(0.5);
    let mut e = DD::from_f64(1.0);
    let mut f = t;
    let mut g = s;
    let mut fp = d;
    let mut gp = e;
    for k in 0..400u32 {
        let kf = k as f64;
        t = (t * x3).div_f64((3.0 * kf + 2.0) * (3.0 * kf + 3.0));
        s = (s * x3).div_f64((3.0 * kf + 3.0) * (3.0 * kf + 4.0));
        e = (e * x3).div_f64((3.0 * kf + 1.0) * (3.0 * kf + 3.0));
        // d runs one index ahead: d_{k+2} from d_{k+1}
        let kd = kf + 1.0;
        d = (d * x3).div_f64(3.0 * kd * (3.0 * kd + 2.0));
        f = f + t;
        g = g + s;
        fp = fp + d;
        gp = gp + e;
        let tiny = 1e-33;
        let small = |a: DD, b: DD| a.hi.abs() <= tiny * b.hi.abs().max(1.0);
        if k > 2 && small(t, f) && small(s, g) && small(d, fp) && small(e, gp) {
            break;
        }
    }
    Maclaurin { f, g, fp, gp }
}

fn from_series(x: f64) -> AiryValues {
    let m = maclaurin(x);
    AiryValues {
        ai: (C1 * m.f - C2 * m.g).to_f64(),
        aip: (C1 * m.fp - C2 * m.gp).to_f64(),
        bi: (SQRT3 * (C1 * m.f + C2 * m.g)).to_f64(),
        bip: (SQRT3 * (C1 * m.fp + C2 * m.gp)).to_f64(),
    }
}

fn oscillatory_asymptotic(x: f64) -> AiryValues {
    let z = -x;
    let zeta = 2.0 / 3.0 * z * z.sqrt();
    // sums over u_k, v_k with alternating signs on even/odd parts
    let (mut ue, mut uo, mut ve, mut vo) = (1.0, 0.0, 1.0, 0.0);
    let mut u = 1.0;
    let mut prev = f64::INFINITY;
    let mut zk = 1.0;
    for k in 1..100 {
        let kf = k as f64;
        u *= (6.0 * kf - 1.0) * (6.0 * kf - 3.0) * (6.0 * kf - 5.0) / (216.0 * kf * (2.0 * kf - 1.0));
        zk /= zeta;
        let uk = u * zk;
        let vk = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * uk;
        if uk.abs() >= prev || uk.abs() < 1e-18 {
            break;
        }
        prev = uk.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            ue += sign * uk;
            ve += sign * vk;
        } else {
            uo += sign * uk;
            vo += sign * vk;
        }
    }
    let (s, c) = (zeta - FRAC_PI_4).sin_cos();
    let amp = 1.0 / (PI.sqrt() * z.powf(0.25));
    let ampd = z.powf(0.25) / PI.sqrt();
    AiryValues {
        ai: amp * (c * ue + s * uo),
        bi: amp * (-s * ue + c * uo),
        aip: ampd * (s * ve - c * vo),
        bip: ampd * (c * ve + s * vo),
    }
}

fn positive_large(x: f64) -> AiryValues {
    let sx = x.sqrt();
    let zeta = 2.0 / 3.0 * x * sx;
    let decay = (-zeta).exp();
    let ai = (x / 3.0).sqrt() / PI * k_nu_scaled(1.0 / 3.0, zeta) * decay;
    let aip = -x / (PI * 3f64.sqrt()) * k_nu_scaled(2.0 / 3.0, zeta) * decay;
    // f and g are positive for x > 0, so the Bi combination has no cancellation.
    let m = maclaurin(x);
    AiryValues {
        ai,
        aip,
        bi: (SQRT3 * (C1 * m.f + C2 * m.g)).to_f64(),
        bip: (SQRT3 * (C1 * m.fp + C2 * m.gp)).to_f64(),
    }
}

/// Ai, Ai', Bi, Bi' at x; caller guarantees |x| <= AIRY_DOMAIN.
pub fn airy_all(x: f64) -> AiryValues {
    if x < NEG_SERIES_MIN {
        oscillatory_asymptotic(x)
    } else if x <= POS_SERIES_MAX {
        from_series(x)
    } else {
        positive_large(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn origin_values() {
        let v = airy_all(0.0);
        assert!(rel(v.ai, 0.35502805388781724) < 1e-15);
        assert!(rel(v.aip, -0.25881940379280680) < 1e-15);
    }

    // 30-digit reference values.
    #[test]
    fn reference_values() {
        let cases = [
            (-25.0, 0.16352657883042947, 0.96237885138769741, -0.19214681569037802, 0.81571971575460586),
            (-8.0, -0.052705050356386203, 0.93556093819830655, -0.33125158075113786, -0.15945049781298139),
            (-2.5, -0.11232506769296609, 0.67885273426479436, -0.43242247184070529, -0.22042015487462959),
            (0.7, 0.18916240039815008, -0.19985119158228048, 0.97332865587816591, 0.65440591917214),
            (4.0, 0.00095156385120480187, -0.0019586409502041789, 83.84707140846814, 161.9266835046134),
            (25.0, 8.1160268246913867e-38, -4.066089337243281e-37, 3.9220307780413818e35, 1.9570735083233309e36),
        ];
        for (x, ai, aip, bi, bip) in cases {
            let v = airy_all(x);
            assert!(rel(v.ai, ai) < 1e-11, "Ai({x}) {} vs {ai}", v.ai);
            assert!(rel(v.aip, aip) < 1e-11, "Ai'({x}) {} vs {aip}", v.aip);
            assert!(rel(v.bi, bi) < 1e-11, "Bi({x}) {} vs {bi}", v.bi);
            assert!(rel(v.bip, bip) < 1e-11, "Bi'({x}) {} vs {bip}", v.bip);
        }
    }

    #[test]
    fn wronskian_across_switchovers() {
        for &x in &[-30.0, -9.01, -8.99, -3.0, 0.0, 0.99, 1.01, 6.0, 20.0, 30.0] {
            let v = airy_all(x);
            let w = v.ai * v.bip - v.aip * v.bi;
            assert!(rel(w, 1.0 / PI) < 1e-12, "x={x}: {w}");
        }
    }
}
