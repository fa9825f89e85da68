//! Base-flow profiles u(r) and the derived potential V = 2 u Omega,
//! Omega = 2u + r u'.

use crate::error::{domain, Error, Result};
use crate::quad::fd_weights;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Uniform,
    CoriolisExample,
    Tabulated,
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ProfileKind::Uniform),
            "coriolis_example" | "coriolis" => Ok(ProfileKind::CoriolisExample),
            "tabulated" => Ok(ProfileKind::Tabulated),
            _ => Err(Error::Profile(format!("unknown profile kind '{s}'"))),
        }
    }
}

/// Profile quantities at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub u: f64,
    pub du: f64,
    pub omega: f64,
    pub v: f64,
    pub dv: f64,
    pub d2v: f64,
    /// 1 - V, evaluated without cancellation where a closed form exists.
    pub one_minus_v: f64,
}

/// Clamped cubic spline for u with a matched algebraic tail
/// u = u_inf - B (r+1)^{-3} beyond the last node.
#[derive(Debug, Clone, PartialEq)]
struct Spline {
    r: Vec<f64>,
    u: Vec<f64>,
    m: Vec<f64>,
    u_inf: f64,
    b: f64,
}

impl Spline {
    fn new(r: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let n = r.len();
        let end_slope = |idx: &[usize], at: usize| {
            let nodes: Vec<f64> = idx.iter().map(|&i| r[i]).collect();
            let w = fd_weights(r[at], &nodes, 1);
            idx.iter().zip(&w[1]).map(|(&i, w)| w * u[i]).sum::<f64>()
        };
        let d0 = end_slope(&[0, 1, 2, 3], 0);
        let dn = end_slope(&[n - 4, n - 3, n - 2, n - 1], n - 1);
        // Tridiagonal system for second derivatives m_i (clamped ends).
        let h: Vec<f64> = r.windows(2).map(|w| w[1] - w[0]).collect();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        b[0] = h[0] / 3.0;
        c[0] = h[0] / 6.0;
        d[0] = (u[1] - u[0]) / h[0] - d0;
        for i in 1..n - 1 {
            a[i] = h[i - 1] / 6.0;
            b[i] = (h[i - 1] + h[i]) / 3.0;
            c[i] = h[i] / 6.0;
            d[i] = (u[i + 1] - u[i]) / h[i] - (u[i] - u[i - 1]) / h[i - 1];
        }
        a[n - 1] = h[n - 2] / 6.0;
        b[n - 1] = h[n - 2] / 3.0;
        d[n - 1] = dn - (u[n - 1] - u[n - 2]) / h[n - 2];
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = d[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (d[i] - c[i] * m[i + 1]) / b[i];
        }
        let rho = r[n - 1] + 1.0;
        let bt = dn * rho.powi(4) / 3.0;
        let u_inf = u[n - 1] + bt / rho.powi(3);
        Ok(Spline {
            r,
            u,
            m,
            u_inf,
            b: bt,
        })
    }

    /// (u, u', u'', u''') at r.
    fn eval(&self, x: f64) -> [f64; 4] {
        let n = self.r.len();
        if x > self.r[n - 1] {
            let rho = x + 1.0;
            let b = self.b;
            return [
                self.u_inf - b / rho.powi(3),
                3.0 * b / rho.powi(4),
                -12.0 * b / rho.powi(5),
                60.0 * b / rho.powi(6),
            ];
        }
        let i = match self.r.partition_point(|&ri| ri <= x) {
            0 => 0,
            k => (k - 1).min(n - 2),
        };
        let h = self.r[i + 1] - self.r[i];
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let a = (self.r[i + 1] - x) / h;
        let bb = (x - self.r[i]) / h;
        let u = a * self.u[i]
            + bb * self.u[i + 1]
            + ((a.powi(3) - a) * m0 + (bb.powi(3) - bb) * m1) * h * h / 6.0;
        let du = (self.u[i + 1] - self.u[i]) / h
            + (-(3.0 * a * a - 1.0) * m0 + (3.0 * bb * bb - 1.0) * m1) * h / 6.0;
        let d2u = a * m0 + bb * m1;
        let d3u = (m1 - m0) / h;
        [u, du, d2u, d3u]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VortexProfile {
    pub kind: ProfileKind,
    pub params: Vec<f64>,
    /// V(0).
    pub v0: f64,
    /// Fitted coefficient of (1 - V) ~ a0 (r+1)^{-3}.
    pub a0: f64,
    spline: Option<Spline>,
}

/// Build a profile. Tabulated params are flattened pairs r0, u0, r1, u1, ...
pub fn make_profile(kind: ProfileKind, params: &[f64]) -> Result<VortexProfile> {
    let mut p = VortexProfile {
        kind,
        params: params.to_vec(),
        v0: 0.0,
        a0: 0.0,
        spline: None,
    };
    match kind {
        ProfileKind::Uniform | ProfileKind::CoriolisExample => {
            if !params.is_empty() {
                return Err(Error::Profile(format!(
                    "{kind:?} takes no parameters, got {}",
                    params.len()
                )));
            }
        }
        ProfileKind::Tabulated => {
            if params.len() % 2 != 0 {
                return Err(Error::Profile("tabulated params must be (r, u) pairs".into()));
            }
            let r: Vec<f64> = params.iter().step_by(2).copied().collect();
            let u: Vec<f64> = params.iter().skip(1).step_by(2).copied().collect();
            if r.len() < 4 {
                return Err(Error::Profile(format!(
                    "tabulated profile needs at least 4 points, got {}",
                    r.len()
                )));
            }
            if params.iter().any(|x| !x.is_finite()) {
                return Err(Error::Profile("tabulated profile has non-finite entries".into()));
            }
            if r[0] < 0.0 {
                return Err(Error::Profile("tabulated radii must be non-negative".into()));
            }
            if let Some(i) = r.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::Profile(format!(
                    "tabulated r-grid not strictly increasing at index {}",
                    i + 1
                )));
            }
            p.spline = Some(Spline::new(r, u)?);
        }
    }
    p.v0 = match kind {
        ProfileKind::Uniform => 1.0,
        ProfileKind::CoriolisExample => 4.0 / 9.0,
        ProfileKind::Tabulated => p.eval(0.0).v,
    };
    p.a0 = match kind {
        ProfileKind::Uniform => 0.0,
        ProfileKind::CoriolisExample => 1.0 / 6.0,
        ProfileKind::Tabulated => {
            let r_end = p.spline.as_ref().map(|s| *s.r.last().unwrap()).unwrap_or(1.0);
            fit_a0(&p, 10.0 * r_end.max(10.0), 64)
        }
    };
    Ok(p)
}

/// Read a two-column "r,u" CSV with header and build a tabulated profile.
pub fn load_tabulated(path: &Path) -> Result<VortexProfile> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut params = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Profile(format!("{}: {e}", path.display())))?;
        if rec.len() != 2 {
            return Err(Error::Profile(format!(
                "{}: row {} has {} columns, expected 2",
                path.display(),
                line + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let x: f64 = field.parse().map_err(|_| {
                Error::Profile(format!("{}: row {}: bad number '{field}'", path.display(), line + 1))
            })?;
            params.push(x);
        }
    }
    make_profile(ProfileKind::Tabulated, &params)
}

impl VortexProfile {
    pub fn is_degenerate(&self) -> bool {
        self.kind == ProfileKind::Uniform
    }

    fn u_derivs(&self, r: f64) -> [f64; 4] {
        match self.kind {
            ProfileKind::Uniform => [0.5, 0.0, 0.0, 0.0],
            ProfileKind::CoriolisExample => {
                let s = 1.0 / (r + 1.0);
                let s3 = s * s * s;
                let s4 = s3 * s;
                [
                    0.5 - s3 / 6.0,
                    0.5 * s4,
                    -2.0 * s4 * s,
                    10.0 * s4 * s * s,
                ]
            }
            ProfileKind::Tabulated => self.spline.as_ref().unwrap().eval(r),
        }
    }

    pub fn eval(&self, r: f64) -> ProfilePoint {
        let [u, du, d2u, d3u] = self.u_derivs(r);
        let omega = 2.0 * u + r * du;
        let domega = 3.0 * du + r * d2u;
        let d2omega = 4.0 * d2u + r * d3u;
        let v = 2.0 * u * omega;
        let dv = 2.0 * du * omega + 2.0 * u * domega;
        let d2v = 2.0 * d2u * omega + 4.0 * du * domega + 2.0 * u * d2omega;
        let one_minus_v = match self.kind {
            ProfileKind::Uniform => 0.0,
            ProfileKind::CoriolisExample => {
                let s = 1.0 / (r + 1.0);
                let s3 = s * s * s;
                s3 * (1.0 / 6.0 + s * (0.5 + s * s * (1.0 / 18.0 - s / 6.0)))
            }
            ProfileKind::Tabulated => 1.0 - v,
        };
        ProfilePoint {
            u,
            du,
            omega,
            v,
            dv,
            d2v,
            one_minus_v,
        }
    }

    pub fn u(&self, r: f64) -> f64 {
        self.u_derivs(r)[0]
    }

    pub fn du(&self, r: f64) -> f64 {
        self.u_derivs(r)[1]
    }

    pub fn omega(&self, r: f64) -> f64 {
        self.eval(r).omega
    }

    pub fn v(&self, r: f64) -> f64 {
        self.eval(r).v
    }

    pub fn dv(&self, r: f64) -> f64 {
        self.eval(r).dv
    }

    /// Supremum of V over r >= 0, reached at infinity under (A1).
    pub fn v_inf(&self) -> f64 {
        match &self.spline {
            Some(s) => 4.0 * s.u_inf * s.u_inf,
            None => 1.0,
        }
    }
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return domain(format!("spectral value c = {c} outside (0, 1)"));
    }
    Ok(())
}

/// Q(r, c) = (V - c) / (1 - c).
pub fn q_value(p: &VortexProfile, r: f64, c: f64) -> Result<f64> {
    check_c(c)?;
    Ok(q_derivs(p, r, c).0)
}

/// (Q, Q', Q'', 1 - Q) at r, with 1 - Q = (1 - V)/(1 - c) kept accurate
/// at large r. The caller guarantees c in (0, 1).
pub fn q_derivs(p: &VortexProfile, r: f64, c: f64) -> (f64, f64, f64, f64) {
    let pt = p.eval(r);
    let inv = 1.0 / (1.0 - c);
    let one_minus_q = pt.one_minus_v * inv;
    let q = if one_minus_q < 0.5 {
        1.0 - one_minus_q
    } else {
        (pt.v - c) * inv
    };
    (q, pt.dv * inv, pt.d2v * inv, one_minus_q)
}

/// r_c with V(r_c) = c, or None when c < V(0) or the profile never reaches c.
pub fn turning_point(p: &VortexProfile, c: f64) -> Result<Option<f64>> {
    check_c(c)?;
    if p.is_degenerate() || c < p.v0 {
        return Ok(None);
    }
    if c == p.v0 {
        return Ok(Some(0.0));
    }
    if c >= p.v_inf() {
        return Ok(None);
    }
    let mut hi = 1.0;
    while p.v(hi) <= c {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(None);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-13 {
            break;
        }
        if p.v(mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // one secant polish on the bracket
    let (vl, vh) = (p.v(lo) - c, p.v(hi) - c);
    let root = if vh != vl {
        (lo - vl * (hi - lo) / (vh - vl)).clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    };
    Ok(Some(root))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub a1: bool,
    pub a2: bool,
    pub a3: bool,
    pub a0_fit: f64,
    pub max_violation: f64,
    pub degenerate: bool,
    pub note: String,
}

/// Least-squares fit of (1 - V)(r+1)^3 = a0 + a1/(r+1) over the last
/// decade [rmax/10, rmax].
pub fn fit_a0(p: &VortexProfile, rmax: f64, n: usize) -> f64 {
    let n = n.max(4);
    let (mut s1, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let r = rmax * 10f64.powf(-1.0 + i as f64 / (n - 1) as f64);
        let rho = r + 1.0;
        let y = p.eval(r).one_minus_v * rho.powi(3);
        let x = 1.0 / rho;
        s1 += 1.0;
        sx += x;
        sxx += x * x;
        sy += y;
        sxy += x * y;
    }
    let det = s1 * sxx - sx * sx;
    (sxx * sy - sx * sxy) / det
}

pub fn check_assumptions(p: &VortexProfile, rmax: f64, n: usize) -> Result<AssumptionReport> {
    if !(rmax > 0.0) || n < 16 {
        return domain(format!("check_assumptions needs rmax > 0 and n >= 16 (got {rmax}, {n})"));
    }
    let a0_fit = fit_a0(p, rmax, n.min(256));
    if p.is_degenerate() {
        return Ok(AssumptionReport {
            a1: false,
            a2: false,
            a3: false,
            a0_fit,
            max_violation: 0.0,
            degenerate: true,
            note: "degenerate homogeneous profile: V' = 0, V = 1".into(),
        });
    }
    let mut a1_violation: f64 = 0.0;
    let mut a2_violation: f64 = 0.0;
    for i in 0..=n {
        let r = rmax * i as f64 / n as f64;
        let pt = p.eval(r);
        if i > 0 {
            a1_violation = a1_violation.max(-pt.dv);
        }
        a2_violation = a2_violation.max(p.v0 - pt.v).max(-pt.one_minus_v);
    }
    let a1 = a1_violation <= 0.0;
    let a2 = a2_violation <= 0.0;
    let tail = p.eval(rmax).one_minus_v * (rmax + 1.0).powi(3);
    let a3_dev = if a0_fit > 0.0 {
        ((tail - a0_fit) / a0_fit).abs()
    } else {
        f64::INFINITY
    };
    let a3 = a0_fit > 0.0 && a3_dev <= 0.1;
    let mut notes = Vec::new();
    if !a1 {
        notes.push(format!("A1: min V' = {:e}", -a1_violation));
    }
    if !a2 {
        notes.push(format!("A2: violation {:e}", a2_violation));
    }
    if !a3 {
        notes.push(format!("A3: tail deviation {:e}", a3_dev));
    }
    Ok(AssumptionReport {
        a1,
        a2,
        a3,
        a0_fit,
        max_violation: a1_violation.max(a2_violation),
        degenerate: false,
        note: notes.join("; "),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coriolis_closed_forms() {
        let p = make_profile(ProfileKind::CoriolisExample, &[]).unwrap();
        for &r in &[0.0, 0.3, 2.0, 17.0, 400.0] {
            let pt = p.eval(r);
            let s = 1.0 / (r + 1.0);
            let v = 1.0 - s.powi(3) / 6.0 - s.powi(4) / 2.0 - s.powi(6) / 18.0 + s.powi(7) / 6.0;
            assert!(((pt.v - v) / v).abs() < 1e-14);
            assert!(((1.0 - pt.one_minus_v) - pt.v).abs() < 1e-15);
            let dv = s.powi(4) / 2.0 + 2.0 * s.powi(5) + s.powi(7) / 3.0 - 7.0 / 6.0 * s.powi(8);
            assert!(((pt.dv - dv) / dv).abs() < 1e-13);
        }
    }

    #[test]
    fn second_derivative_matches_difference() {
        let p = make_profile(ProfileKind::CoriolisExample, &[]).unwrap();
        let r = 1.7;
        let h = 1e-4;
        let fd = (p.dv(r + h) - p.dv(r - h)) / (2.0 * h);
        assert!((p.eval(r).d2v - fd).abs() < 1e-8);
    }

    #[test]
    fn spline_reproduces_cubic() {
        let r: Vec<f64> = (0..12).map(|i| 0.5 * i as f64).collect();
        let f = |x: f64| 0.2 + 0.01 * x - 0.003 * x * x + 0.0002 * x * x * x;
        let params: Vec<f64> = r.iter().flat_map(|&x| [x, f(x)]).collect();
        let p = make_profile(ProfileKind::Tabulated, &params).unwrap();
        for &x in &[0.1, 1.33, 4.9] {
            assert!((p.u(x) - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn tabulated_rejects_bad_grids() {
        assert!(make_profile(ProfileKind::Tabulated, &[0.0, 0.1, 1.0, 0.2, 2.0, 0.3]).is_err());
        assert!(make_profile(
            ProfileKind::Tabulated,
            &[0.0, 0.1, 1.0, 0.2, 0.5, 0.3, 3.0, 0.4]
        )
        .is_err());
    }
}
