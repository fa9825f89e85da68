use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use vortex_spectra::cli::{load_profile, main_with_args};
use vortex_spectra::connection::{solve_slice, SolverOptions};
use vortex_spectra::error::Error;
use vortex_spectra::kernels::{build_family, kernel_k as kernel_value, KernelOptions};
use vortex_spectra::propagator::decay_fit as fit;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Profile summary: kind, V(0), a0 and the degenerate flag.
#[pyfunction]
fn profile_info<'py>(py: Python<'py>, profile: &str) -> PyResult<Bound<'py, PyDict>> {
    let p = load_profile(profile).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("kind", format!("{:?}", p.kind))?;
    d.set_item("v0", p.v0)?;
    d.set_item("a0", p.a0)?;
    d.set_item("degenerate", p.is_degenerate())?;
    Ok(d)
}

/// phi, phi~ = phi/|W| and the Wronskian for one (c, k) on the given radii.
#[pyfunction]
fn basis_slice<'py>(py: Python<'py>, profile: &str, c: f64, k: f64, radii: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let p = load_profile(profile).map_err(py_err)?;
    let s = solve_slice(&p, c, k, &radii, &SolverOptions::default()).map_err(py_err)?;
    let scale = s.phi_shift.exp();
    let d = PyDict::new(py);
    d.set_item("xi", s.xi)?;
    d.set_item("abs_w", s.abs_w())?;
    d.set_item("log_abs_w", s.log_abs_w)?;
    d.set_item("w_residual", s.w_residual)?;
    d.set_item("regime", s.regime.map(|t| t.region.to_string()))?;
    d.set_item("phi", s.phi.iter().map(|v| v * scale).collect::<Vec<f64>>())?;
    d.set_item("phi_tilde", s.phi_tilde())?;
    Ok(d)
}

/// K(r, s, z, c) for one triple.
#[pyfunction]
#[pyo3(signature = (profile, c, r, s, z, xi_max = 120.0))]
fn kernel_k(profile: &str, c: f64, r: f64, s: f64, z: f64, xi_max: f64) -> PyResult<Complex64> {
    let p = load_profile(profile).map_err(py_err)?;
    let opts = KernelOptions {
        xi_max,
        ..KernelOptions::default()
    };
    let fam = build_family(&p, c, &[r, s], &opts, &SolverOptions::default()).map_err(py_err)?;
    let v = kernel_value(&fam, &p, r, s, z, &opts).map_err(py_err)?;
    Ok(v.value())
}

/// Least-squares fit s = C t^-p; returns (p, C, residual).
#[pyfunction]
fn decay_fit(times: Vec<f64>, sup_norms: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let f = fit(&times, &sup_norms).map_err(py_err)?;
    Ok((f.p, f.c, f.residual))
}

/// Runs the command line with the given arguments; returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("vortex-spectra".to_string()).chain(args).collect();
    py.detach(|| main_with_args(argv))
}

#[pymodule]
fn vortex_spectra_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(profile_info, m)?)?;
    m.add_function(wrap_pyfunction!(basis_slice, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_k, m)?)?;
    m.add_function(wrap_pyfunction!(decay_fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
