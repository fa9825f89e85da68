use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::OnceLock;
use vortex_spectra::connection::{solve_slice, wronskian, SolverOptions};
use vortex_spectra::kernels::{build_family, chi, kernel_k, KernelOptions, XiFamily};
use vortex_spectra::langer::{classify_regime, langer_point, DEFAULT_DELTA, DEFAULT_M};
use vortex_spectra::profiles::{make_profile, q_value, turning_point, ProfileKind, VortexProfile};
use vortex_spectra::quad::uniform_grid;
use vortex_spectra::specfun::{airy_with_derivative, bessel_with_derivative, AiryKind, BesselKind};
use vortex_spectra::spectral::{apply_a, inner_h, RadialFunction};

fn coriolis() -> VortexProfile {
    make_profile(ProfileKind::CoriolisExample, &[]).unwrap()
}

fn uniform() -> VortexProfile {
    make_profile(ProfileKind::Uniform, &[]).unwrap()
}

const RADII: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

fn family() -> &'static (VortexProfile, XiFamily) {
    static F: OnceLock<(VortexProfile, XiFamily)> = OnceLock::new();
    F.get_or_init(|| {
        let p = coriolis();
        let opts = KernelOptions {
            xi_max: 40.0,
            ..KernelOptions::default()
        };
        let f = build_family(&p, 0.6, &RADII, &opts, &SolverOptions::default()).unwrap();
        (p, f)
    })
}

/// Smooth bump combination supported in [0.5, 6].
fn random_bumps(rng: &mut ChaCha8Rng, grid: &[f64]) -> RadialFunction {
    let n = rng.gen_range(1..=4);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            let c = rng.gen_range(1.5..5.0);
            let w = rng.gen_range(0.3..1.0f64).min(c - 0.5).min(6.0 - c);
            (c, w, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
        .collect();
    let values = grid
        .iter()
        .map(|&r| {
            bumps
                .iter()
                .map(|&(c, w, a, b)| {
                    let x = (r - c) / w;
                    if x.abs() < 1.0 {
                        Complex64::new(a, b) * (-1.0 / (1.0 - x * x)).exp()
                    } else {
                        Complex64::default()
                    }
                })
                .sum()
        })
        .collect();
    RadialFunction::new(grid.to_vec(), values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_identity(r in 0.0f64..60.0, coriolis_kind in any::<bool>()) {
        let p = if coriolis_kind { coriolis() } else { uniform() };
        let pt = p.eval(r);
        let v = 2.0 * pt.u * pt.omega;
        prop_assert!((pt.v - v).abs() <= 1e-12 * v.abs().max(1e-300));
    }

    #[test]
    fn turning_point_inverts_v(r_c in 0.01f64..30.0) {
        let p = coriolis();
        let c = p.v(r_c);
        let back = turning_point(&p, c).unwrap().unwrap();
        prop_assert!((back - r_c).abs() <= 1e-10 * r_c.max(1.0), "{back} vs {r_c}");
    }

    #[test]
    fn q_increases(c in 0.01f64..0.99, r in 0.0f64..40.0, dr in 1e-3f64..5.0) {
        let p = coriolis();
        prop_assert!(q_value(&p, r + dr, c).unwrap() > q_value(&p, r, c).unwrap());
    }

    #[test]
    fn special_function_wronskians(x in 0.05f64..60.0, y in -8.0f64..3.0) {
        let (j, dj) = bessel_with_derivative(BesselKind::J1, x).unwrap();
        let (yy, dy) = bessel_with_derivative(BesselKind::Y1, x).unwrap();
        let w = j * dy - dj * yy;
        let exact = 2.0 / (PI * x);
        prop_assert!((w - exact).abs() <= 1e-12 * exact, "bessel {w} vs {exact}");
        let (ai, dai) = airy_with_derivative(AiryKind::Ai, y).unwrap();
        let (bi, dbi) = airy_with_derivative(AiryKind::Bi, y).unwrap();
        let w = ai * dbi - dai * bi;
        prop_assert!((w - 1.0 / PI).abs() <= 1e-12 / PI, "airy {w}");
    }

    #[test]
    fn j1_satisfies_bessel_equation(x in 0.1f64..40.0) {
        let h = 1e-5;
        let (j, dj) = bessel_with_derivative(BesselKind::J1, x).unwrap();
        let d2 = (bessel_with_derivative(BesselKind::J1, x + h).unwrap().1
            - bessel_with_derivative(BesselKind::J1, x - h).unwrap().1) / (2.0 * h);
        let res = d2 + dj / x + (1.0 - 1.0 / (x * x)) * j;
        prop_assert!(res.abs() <= 1e-9, "residual {res}");
    }

    #[test]
    fn langer_x_is_monotone(c in 0.05f64..0.95, xi in 0.1f64..30.0) {
        let p = coriolis();
        let mut last = f64::NEG_INFINITY;
        for i in 1..=200 {
            let r = 0.05 * i as f64;
            let x = langer_point(&p, r, c, xi).unwrap().x;
            prop_assert!(x >= last, "x decreased at r = {r}");
            last = x;
        }
    }

    #[test]
    fn regime_is_locally_constant(c in 0.02f64..0.98, lx in -3.0f64..4.0) {
        let p = coriolis();
        prop_assume!((c - p.v0).abs() > 1e-6);
        let xi = 10f64.powf(lx);
        let a = classify_regime(&p, c, xi, DEFAULT_M, DEFAULT_DELTA).unwrap().region;
        let b = classify_regime(&p, c + 1e-9, xi * (1.0 + 1e-9), DEFAULT_M, DEFAULT_DELTA).unwrap().region;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn kernel_symmetry_and_parity(i in 0usize..4, j in 0usize..4, z in -3.0f64..3.0) {
        let (p, f) = family();
        let o = KernelOptions { xi_max: 40.0, ..KernelOptions::default() };
        let (r, s) = (RADII[i], RADII[j]);
        let a = kernel_k(f, p, r, s, z, &o).unwrap();
        let b = kernel_k(f, p, s, r, z, &o).unwrap();
        prop_assert_eq!(a.value(), b.value());
        prop_assert_eq!(a.re, 0.0);
        let m = kernel_k(f, p, r, s, -z, &o).unwrap();
        prop_assert_eq!(m.im, -a.im);
        prop_assert!(a.im.is_finite());
    }

    #[test]
    fn chi_is_a_cutoff(x in -5.0f64..5.0, dx in 0.0f64..1.0) {
        let v = chi(x);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, chi(-x));
        if x >= 0.0 {
            prop_assert!(chi(x + dx) <= v);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn wronskian_is_even_and_constant(lc in 0.05f64..0.95, k in 0.2f64..4.0) {
        let p = coriolis();
        prop_assume!((lc - p.v0).abs() > 1e-3);
        let grid = uniform_grid(0.25, 10.0);
        let opts = SolverOptions::default();
        let plus = solve_slice(&p, lc, k, &grid, &opts).unwrap();
        let minus = solve_slice(&p, lc, -k, &grid, &opts).unwrap();
        prop_assert!((plus.log_abs_w - minus.log_abs_w).abs() <= 1e-12 * plus.log_abs_w.abs().max(1.0));
        prop_assert!((plus.w_phase - minus.w_phase).norm() <= 1e-12);
        let (_, spread) = wronskian(&plus).unwrap();
        prop_assert!(spread <= 1e-6, "spread {spread}");
    }
}

#[test]
fn a_is_positive_and_bounded() {
    let grid = uniform_grid(0.05, 12.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for p in [uniform(), coriolis()] {
        for k in [0.5, 1.0, 2.0] {
            for _ in 0..10 {
                let v = random_bumps(&mut rng, &grid);
                let nv = inner_h(&v, &v, &p).unwrap().re;
                let av = apply_a(&v, &p, k).unwrap();
                let a = inner_h(&av, &v, &p).unwrap().re;
                assert!(a >= -1e-10 * nv, "<Av,v> = {a}");
                assert!(nv - k * k * a >= -1e-10 * nv, "<(1-k^2 A)v,v> = {}", nv - k * k * a);
            }
        }
    }
}
