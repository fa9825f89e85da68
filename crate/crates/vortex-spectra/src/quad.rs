//! Quadrature and finite-difference helpers shared by the numerical modules.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            z = 0.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        w[0] = 2.0;
    }
    (x, w)
}

/// Fixed Gauss-Legendre rule mapped to [a, b].
pub struct GaussRule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        GaussRule { x, w }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Nodes and weights on [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        self.x.iter().zip(&self.w).map(move |(&x, &w)| (m + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Globally adaptive bisection with a 10-point Gauss rule: the interval
/// with the largest whole-vs-halves discrepancy is split until the summed
/// discrepancy drops below `tol` (or rounding level) or the budget of
/// intervals is spent.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    const MAX_INTERVALS: usize = 2000;
    let rule = GaussRule::new(10);
    let piece = |a: f64, b: f64| {
        let m = 0.5 * (a + b);
        let whole = rule.integrate(a, b, f);
        let (l, r) = (rule.integrate(a, m, f), rule.integrate(m, b, f));
        (a, b, l + r, (l + r - whole).abs())
    };
    let mut parts = vec![piece(a, b)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let scale: f64 = parts.iter().map(|p| p.2.abs()).sum();
        if err <= tol.max(1e-15 * scale) || parts.len() >= MAX_INTERVALS {
            return total;
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = parts.swap_remove(i);
        let m = 0.5 * (lo + hi);
        if !(m > lo && m < hi) {
            return total;
        }
        parts.push(piece(lo, m));
        parts.push(piece(m, hi));
    }
}

/// Fornberg finite-difference weights for derivatives 0..=m at x0.
pub fn fd_weights(x0: f64, nodes: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Index of the first node of a `width`-point stencil centred near `i`.
pub fn stencil_start(i: usize, n: usize, width: usize) -> usize {
    let half = width / 2;
    if i < half {
        0
    } else if i + width - half > n {
        n - width
    } else {
        i - half
    }
}

/// First derivative on an arbitrary grid with 5-point stencils.
pub fn derivative<T>(grid: &[f64], f: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Default,
{
    let n = grid.len();
    let width = 5.min(n);
    (0..n)
        .map(|i| {
            let s = stencil_start(i, n, width);
            let w = fd_weights(grid[i], &grid[s..s + width], 1);
            (0..width).fold(T::default(), |acc, j| acc + f[s + j] * w[1][j])
        })
        .collect()
}

/// Trapezoid weights on a grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Weights of a 4-point interpolatory rule for the integral over
/// [grid[i], grid[i+1]]; returns (first stencil index, weights).
pub fn interval_weights(grid: &[f64], i: usize) -> (usize, [f64; 4]) {
    let n = grid.len();
    assert!(n >= 4 && i + 1 < n);
    let s = if i == 0 {
        0
    } else if i + 3 > n {
        n - 4
    } else {
        i - 1
    };
    let nodes = [grid[s], grid[s + 1], grid[s + 2], grid[s + 3]];
    let (a, b) = (grid[i], grid[i + 1]);
    let g = 1.0 / 3f64.sqrt();
    let mut w = [0.0; 4];
    for &t in &[-g, g] {
        let x = 0.5 * (a + b) + 0.5 * (b - a) * t;
        for j in 0..4 {
            let mut l = 1.0;
            for k in 0..4 {
                if k != j {
                    l *= (x - nodes[k]) / (nodes[j] - nodes[k]);
                }
            }
            w[j] += 0.5 * (b - a) * l;
        }
    }
    (s, w)
}

/// Fourth-order quadrature weights on an arbitrary grid (sum of interval rules).
pub fn grid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n < 4 {
        return trapezoid_weights(grid);
    }
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let (s, iw) = interval_weights(grid, i);
        for j in 0..4 {
            w[s + j] += iw[j];
        }
    }
    w
}

/// Weights on a grid starting at r > 0 for integrals from 0 of integrands
/// that vanish at the origin (a zero node at r = 0 is implied).
pub fn origin_grid_weights(grid: &[f64]) -> Vec<f64> {
    let mut g = Vec::with_capacity(grid.len() + 1);
    g.push(0.0);
    g.extend_from_slice(grid);
    grid_weights(&g)[1..].to_vec()
}

/// Uniform grid r_i = h * (i + 1), i = 0..n.
pub fn uniform_grid(h: f64, r_end: f64) -> Vec<f64> {
    let n = (r_end / h).round() as usize;
    (1..=n).map(|i| h * i as f64).collect()
}

/// Geometric grid of n points between a and b inclusive.
pub fn geometric_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let la = a.ln();
    let lb = b.ln();
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials() {
        for n in [1, 2, 5, 10, 20] {
            let rule = GaussRule::new(n);
            let deg = 2 * n - 1;
            let v = rule.integrate(0.0, 1.0, |x| x.powi(deg as i32));
            assert!((v - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn adaptive_handles_sqrt() {
        let v = adaptive(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-13);
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fornberg_matches_central_differences() {
        let w = fd_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let d1 = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
        for j in 0..5 {
            assert!((w[1][j] - d1[j]).abs() < 1e-14);
            assert!((w[2][j] - d2[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_weights_fourth_order() {
        let err = |n: usize| {
            let g = geometric_grid(0.1, 3.0, n);
            let w = grid_weights(&g);
            let v: f64 = g.iter().zip(&w).map(|(x, w)| w * x.sin()).sum();
            (v - (0.1f64.cos() - 3f64.cos())).abs()
        };
        let ratio = err(60) / err(120);
        assert!(ratio > 12.0, "ratio {ratio}");
        assert!(err(120) < 5e-7);
    }
}
