//! Command-line front end. Every command writes CSV data and one JSON
//! report into the output directory; the report echoes the resolved config.
//!
//! Exit codes: 0 success, 1 numerical failure or a flag escalated by
//! --strict (profile-check: assumption (A1) violated), 2 bad input.

use crate::connection::{slice_metadata, solve_slice, write_basis_csv, SliceMetadata, SolverOptions};
use crate::error::{Error, Result};
use crate::kernels::{dc_scan, write_scan_csv, KernelFlags, KernelOptions, KernelScanReport, Triple};
use crate::langer::{classify_regime, w0_reference_log, DEFAULT_DELTA, DEFAULT_M};
use crate::oracle::{compare, energy, run_fd, CompareReport};
use crate::profiles::{check_assumptions, load_tabulated, make_profile, AssumptionReport, ProfileKind, VortexProfile};
use crate::propagator::{
    decay_r_max, evolution_quadrature, gaussian_data, initial_mode, synthesized_decay, write_trajectory_csv,
    ModeState, Propagator,
};
use crate::quad::uniform_grid;
use crate::spectral::{
    apply_function_of_a, build_basis_table, forward_transform, plancherel_residual, write_spectral_csv,
    CQuadrature, RadialFunction, CLIP_FLAG,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const SCHEMA: &str = "vortex-spectra/1";
/// w_residual above this is reported as a numerical flag.
pub const W_RESIDUAL_FLAG: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "vortex-spectra", version, about = "Spectral analysis and linear evolution of columnar vortices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// uniform, coriolis_example, or tabulated:PATH (a CSV "r,u")
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// key=value file; flags override its entries
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long = "out-dir", global = true)]
    pub out_dir: Option<String>,
    /// Regime constant M
    #[arg(long = "M", global = true)]
    pub m: Option<String>,
    /// Regime constant delta in (0, 1/2)
    #[arg(long, global = true)]
    pub delta: Option<String>,
    /// Spectral cutoff c_min
    #[arg(long, global = true)]
    pub cmin: Option<String>,
    /// Exit 1 when a numerical flag is raised
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub threads: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the profile assumptions
    ProfileCheck,
    /// phi, f+ and W on a (c, k) grid
    Basis {
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        c: Option<String>,
        /// Radial grid h:R
        #[arg(long)]
        r: Option<String>,
    },
    /// |W| against the regime reference W0 on a (c, xi) grid
    WronskianScan {
        #[arg(long)]
        c: Option<String>,
        #[arg(long)]
        xi: Option<String>,
    },
    /// Distorted Fourier transform of test data
    Transform {
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        r: Option<String>,
        /// gauss or kgauss
        #[arg(long)]
        data: Option<String>,
    },
    /// Spectral evolution of one mode per k
    Evolve {
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        t: Option<String>,
        #[arg(long)]
        r: Option<String>,
        #[arg(long)]
        data: Option<String>,
    },
    /// Spectral evolution against the time-stepping reference
    OracleCompare {
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        t: Option<String>,
        #[arg(long)]
        r: Option<String>,
        #[arg(long)]
        dt: Option<String>,
        #[arg(long)]
        data: Option<String>,
    },
    /// Kernel values on a c-grid and int |d_c K| dc
    KernelScan {
        /// r:s:z entries separated by commas
        #[arg(long)]
        triples: Option<String>,
        #[arg(long)]
        nc: Option<String>,
        #[arg(long = "xi-max")]
        xi_max: Option<String>,
        /// Repeat on the doubled c-grid and compare
        #[arg(long)]
        stability: bool,
    },
    /// Decay fits per mode and for the z-synthesized field
    Decay {
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        t: Option<String>,
        #[arg(long)]
        r: Option<String>,
        /// z samples for the synthesis
        #[arg(long)]
        z: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ProfileCheck => "profile-check",
            Command::Basis { .. } => "basis",
            Command::WronskianScan { .. } => "wronskian-scan",
            Command::Transform { .. } => "transform",
            Command::Evolve { .. } => "evolve",
            Command::OracleCompare { .. } => "oracle-compare",
            Command::KernelScan { .. } => "kernel-scan",
            Command::Decay { .. } => "decay",
        }
    }

    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        let o = |s: &Option<String>| s.clone();
        let b = |x: bool| if x { Some("true".to_string()) } else { None };
        match self {
            Command::ProfileCheck => vec![],
            Command::Basis { k, c, r } => vec![("k", o(k)), ("c", o(c)), ("r", o(r))],
            Command::WronskianScan { c, xi } => vec![("c", o(c)), ("xi", o(xi))],
            Command::Transform { k, r, data } => vec![("k", o(k)), ("r", o(r)), ("data", o(data))],
            Command::Evolve { k, t, r, data } => {
                vec![("k", o(k)), ("t", o(t)), ("r", o(r)), ("data", o(data))]
            }
            Command::OracleCompare { k, t, r, dt, data } => vec![
                ("k", o(k)),
                ("t", o(t)),
                ("r", o(r)),
                ("dt", o(dt)),
                ("data", o(data)),
            ],
            Command::KernelScan {
                triples,
                nc,
                xi_max,
                stability,
            } => vec![
                ("triples", o(triples)),
                ("nc", o(nc)),
                ("xi_max", o(xi_max)),
                ("stability", b(*stability)),
            ],
            Command::Decay { k, t, r, z } => vec![("k", o(k)), ("t", o(t)), ("r", o(r)), ("z", o(z))],
        }
    }

    fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            Command::ProfileCheck => &[],
            Command::Basis { .. } => &[("k", "1"), ("c", "0.3,0.5,0.7"), ("r", "0.05:20")],
            Command::WronskianScan { .. } => &[("c", "0.05:0.95:19"), ("xi", "0.05:50:log20")],
            Command::Transform { .. } => &[("k", "1"), ("r", "0.05:20"), ("data", "gauss")],
            Command::Evolve { .. } => &[("k", "1"), ("t", "0,10,20"), ("r", "0.05:40"), ("data", "gauss")],
            Command::OracleCompare { .. } => &[
                ("k", "1"),
                ("t", "0:20:11"),
                ("r", "0.05:40"),
                ("dt", "0.01"),
                ("data", "gauss"),
            ],
            Command::KernelScan { .. } => &[
                ("triples", DEFAULT_TRIPLES),
                ("nc", "128"),
                ("xi_max", "120"),
                ("stability", "false"),
            ],
            Command::Decay { .. } => &[("k", "1,2"), ("t", "20:200:16"), ("r", "auto"), ("z", "0:12.566370614359172:128")],
        }
    }
}

const DEFAULT_TRIPLES: &str = "1:0.25:0.5,1:0.5:0.5,1:1:0.5,1:2:0.5,1:4:0.5,\
0.5:0.25:1,0.5:0.5:1,0.5:1:1,0.5:2:1,0.5:4:1,\
2:0.25:0.25,2:0.5:0.25,2:1:0.25,2:2:0.25,2:4:0.25";

const COMMON_KEYS: &[&str] = &["profile", "out_dir", "M", "delta", "cmin", "strict", "threads"];
const ALL_KEYS: &[&str] = &["k", "c", "r", "xi", "t", "dt", "data", "triples", "nc", "xi_max", "stability", "z"];

/// Resolved configuration; echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    /// Every setting as resolved (defaults, then config file, then flags).
    pub settings: BTreeMap<String, String>,
}

impl RunConfig {
    fn get(&self, key: &str) -> Result<&str> {
        self.settings
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Config(format!("missing setting '{key}'")))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(self.get(key)?, key)
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        parse_grid(self.get(key)?)
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let s = self.get(key)?;
        s.parse()
            .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{s}'")))
    }

    fn bool(&self, key: &str) -> Result<bool> {
        match self.get(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            s => Err(Error::Config(format!("{key}: expected true or false, got '{s}'"))),
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{what}: bad number '{s}'")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{what}: non-finite value '{s}'")));
    }
    Ok(x)
}

/// Comma-separated items; each a number, "a:b:n" (n points, endpoints
/// included) or "a:b:logn" (n log-spaced points).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [x] => out.push(parse_f64(x, "grid")?),
            [a, b, n] => {
                let (a, b) = (parse_f64(a, "grid")?, parse_f64(b, "grid")?);
                let (log, n) = match n.strip_prefix("log") {
                    Some(m) => (true, m),
                    None => (false, *n),
                };
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Config(format!("grid '{item}': bad count")))?;
                if n == 0 {
                    return Err(Error::Config(format!("grid '{item}': zero points")));
                }
                if log && !(a > 0.0 && b > 0.0) {
                    return Err(Error::Config(format!("grid '{item}': log spacing needs positive ends")));
                }
                for i in 0..n {
                    let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                    out.push(if log {
                        (a.ln() + (b.ln() - a.ln()) * f).exp()
                    } else {
                        a + (b - a) * f
                    });
                }
            }
            _ => return Err(Error::Config(format!("bad grid item '{item}'"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("empty grid '{spec}'")));
    }
    Ok(out)
}

/// Radial grid "h:R": r = h, 2h, ..., R.
fn parse_radial(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("radial grid must be h:R, got '{spec}'")));
    }
    let (h, r) = (parse_f64(parts[0], "r")?, parse_f64(parts[1], "r")?);
    if !(h > 0.0 && r >= 4.0 * h) {
        return Err(Error::Config(format!("radial grid '{spec}' needs h > 0 and R >= 4h")));
    }
    Ok(uniform_grid(h, r))
}

fn parse_triples(spec: &str) -> Result<Vec<Triple>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let v: Vec<&str> = item.split(':').collect();
            if v.len() != 3 {
                return Err(Error::Config(format!("triple must be r:s:z, got '{item}'")));
            }
            let t = Triple {
                r: parse_f64(v[0], "triple")?,
                s: parse_f64(v[1], "triple")?,
                z: parse_f64(v[2], "triple")?,
            };
            if !(t.r > 0.0 && t.s > 0.0) {
                return Err(Error::Config(format!("triple '{item}' needs r, s > 0")));
            }
            Ok(t)
        })
        .collect()
}

/// key=value lines, `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
        let k = k.trim().replace('-', "_");
        let k = if k == "m" { "M".to_string() } else { k };
        if !COMMON_KEYS.contains(&k.as_str()) && !ALL_KEYS.contains(&k.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key '{k}'", n + 1)));
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let cmd = &cli.command;
    let mut s: BTreeMap<String, String> = BTreeMap::new();
    for (k, v) in [
        ("profile", "coriolis_example".to_string()),
        ("out_dir", "out".to_string()),
        ("M", format!("{DEFAULT_M:?}")),
        ("delta", format!("{DEFAULT_DELTA:?}")),
        ("cmin", "0.0001".to_string()),
        ("strict", "false".to_string()),
        ("threads", "0".to_string()),
    ] {
        s.insert(k.into(), v);
    }
    for (k, v) in cmd.defaults() {
        s.insert((*k).into(), (*v).into());
    }
    if let Some(path) = &cli.common.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        for (k, v) in parse_config_file(&text)? {
            // keys belonging to other commands are accepted and ignored
            if COMMON_KEYS.contains(&k.as_str()) || s.contains_key(&k) {
                s.insert(k, v);
            }
        }
    }
    let c = &cli.common;
    let common = [
        ("profile", c.profile.clone()),
        ("out_dir", c.out_dir.clone()),
        ("M", c.m.clone()),
        ("delta", c.delta.clone()),
        ("cmin", c.cmin.clone()),
        ("threads", c.threads.clone()),
        ("strict", c.strict.then(|| "true".to_string())),
    ];
    for (k, v) in common.into_iter().chain(cmd.flags()) {
        if let Some(v) = v {
            s.insert(k.into(), v);
        }
    }
    let cfg = RunConfig {
        command: cmd.name().into(),
        settings: s,
    };
    // validate the common numeric settings early so bad input exits 2
    let m = cfg.f64("M")?;
    let d = cfg.f64("delta")?;
    let cmin = cfg.f64("cmin")?;
    if !(m >= 2.0) {
        return Err(Error::Config(format!("M must be >= 2, got {m}")));
    }
    if !(d > 0.0 && d < 0.5) {
        return Err(Error::Config(format!("delta must lie in (0, 0.5), got {d}")));
    }
    if !(cmin > 0.0 && cmin < 0.25) {
        return Err(Error::Config(format!("cmin must lie in (0, 0.25), got {cmin}")));
    }
    cfg.usize("threads")?;
    cfg.bool("strict")?;
    Ok(cfg)
}

pub fn load_profile(spec: &str) -> Result<VortexProfile> {
    if let Some(path) = spec.strip_prefix("tabulated:") {
        return load_tabulated(Path::new(path));
    }
    if spec.ends_with(".csv") {
        return load_tabulated(Path::new(spec));
    }
    let kind: ProfileKind = spec.parse()?;
    if kind == ProfileKind::Tabulated {
        return Err(Error::Profile("tabulated profiles are given as tabulated:PATH".into()));
    }
    make_profile(kind, &[])
}

/// The JSON envelope shared by every report.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema: &'static str,
    config: &'a RunConfig,
    result: T,
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{dir}: {e}")))?;
        Ok(Output { dir: PathBuf::from(dir) })
    }

    fn file(&self, name: &str) -> Result<BufWriter<fs::File>> {
        let p = self.dir.join(name);
        let f = fs::File::create(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&self, name: &str, cfg: &RunConfig, result: T) -> Result<()> {
        let rep = Report {
            schema: SCHEMA,
            config: cfg,
            result,
        };
        let text = serde_json::to_string_pretty(&rep).map_err(|e| Error::Io(e.to_string()))?;
        let mut f = self.file(name)?;
        writeln!(f, "{text}")?;
        f.flush()?;
        Ok(())
    }
}

/// Outcome of a command: whether a numerical flag was raised, and whether
/// the command failed on its own terms regardless of --strict.
struct Outcome {
    flagged: bool,
    failed: bool,
}

fn solver_options(cfg: &RunConfig) -> Result<SolverOptions> {
    Ok(SolverOptions {
        m: cfg.f64("M")?,
        delta: cfg.f64("delta")?,
        ..SolverOptions::default()
    })
}

fn test_data(cfg: &RunConfig, grid: &[f64], k: f64) -> Result<(RadialFunction, RadialFunction)> {
    match cfg.get("data")? {
        "gauss" => gaussian_data(grid, 1.0),
        "kgauss" => gaussian_data(grid, k),
        s => Err(Error::Config(format!("data must be gauss or kgauss, got '{s}'"))),
    }
}

fn nonzero_ks(ks: &[f64]) -> Result<()> {
    if ks.iter().any(|k| *k == 0.0) {
        return Err(Error::Config("k = 0 is not a dispersive mode".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct ProfileCheckResult {
    kind: ProfileKind,
    v0: f64,
    a0: f64,
    degenerate: bool,
    assumptions: AssumptionReport,
}

fn cmd_profile_check(cfg: &RunConfig, p: &VortexProfile, out: &Output) -> Result<Outcome> {
    let rep = check_assumptions(p, 100.0, 4000)?;
    let failed = !rep.degenerate && !rep.a1;
    out.json(
        "profile_check.json",
        cfg,
        ProfileCheckResult {
            kind: p.kind,
            v0: p.v0,
            a0: rep.a0_fit,
            degenerate: rep.degenerate,
            assumptions: rep,
        },
    )?;
    Ok(Outcome { flagged: false, failed })
}

#[derive(Serialize)]
struct BasisEntry {
    file: String,
    meta: SliceMetadata,
    flagged: bool,
}

fn cmd_basis(cfg: &RunConfig, p: &VortexProfile, out: &Output) -> Result<Outcome> {
    let ks = cfg.list("k")?;
    nonzero_ks(&ks)?;
    let cs = cfg.list("c")?;
    let grid = parse_radial(cfg.get("r")?)?;
    let opts = solver_options(cfg)?;
    let points: Vec<(usize, f64, usize, f64)> = ks
        .iter()
        .enumerate()
        .flat_map(|(j, &k)| cs.iter().enumerate().map(move |(i, &c)| (j, k, i, c)))
        .collect();
    let slices = points
        .par_iter()
        .map(|&(_, k, _, c)| solve_slice(p, c, k, &grid, &opts))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::new();
    for (&(j, _, i, _), s) in points.iter().zip(&slices) {
        let name = format!("basis_k{j}_c{i}.csv");
        let mut f = out.file(&name)?;
        write_basis_csv(&mut f, s)?;
        f.flush()?;
        entries.push(BasisEntry {
            file: name,
            meta: slice_metadata(s),
            flagged: s.w_residual > W_RESIDUAL_FLAG,
        });
    }
    let flagged = entries.iter().any(|e| e.flagged);
    out.json("basis.json", cfg, &entries)?;
    Ok(Outcome { flagged, failed: false })
}

#[derive(Serialize)]
struct WronskianSummary {
    points: usize,
    admissible: usize,
    ratio_min: f64,
    ratio_max: f64,
    #[serde(rename = "C")]
    c_fit: f64,
    regime_law_ok: bool,
    max_w_residual: f64,
    flagged: bool,
}

fn cmd_wronskian_scan(cfg: &RunConfig, p: &VortexProfile, out: &Output) -> Result<Outcome> {
    let cs = cfg.list("c")?;
    let xis = cfg.list("xi")?;
    if cs.iter().any(|c| !(*c > 0.0 && *c < 1.0)) || xis.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Config("wronskian-scan needs c in (0, 1) and xi > 0".into()));
    }
    let opts = solver_options(cfg)?;
    let (m, delta) = (opts.m, opts.delta);
    let points: Vec<(f64, f64)> = cs.iter().flat_map(|&c| xis.iter().map(move |&x| (c, x))).collect();
    let grid = [0.5, 1.0, 2.0];
    let rows: Vec<String> = points
        .par_iter()
        .map(|&(c, xi)| {
            let k = xi * (c / (1.0 - c)).sqrt();
            let tag = classify_regime(p, c, xi, m, delta);
            let w0 = w0_reference_log(p, c, xi, m, delta);
            let region = tag.as_ref().map_or("-".to_string(), |t| t.region.to_string());
            match (w0, solve_slice(p, c, k, &grid, &opts)) {
                (Ok((lw0, _)), Ok(s)) => format!(
                    "{c:?},{xi:?},{k:?},{region},{:?},{lw0:?},{:?},{:?},ok",
                    s.log_abs_w,
                    (s.log_abs_w - lw0).exp(),
                    s.w_residual
                ),
                (Err(_), _) => format!("{c:?},{xi:?},{k:?},{region},,,,,excluded"),
                (_, Err(e)) => format!("{c:?},{xi:?},{k:?},{region},,,,,failed: {}", e.to_string().replace(',', ";")),
            }
        })
        .collect();
    let mut f = out.file("wronskian_scan.csv")?;
    writeln!(f, "c,xi,k,region,log_abs_w,log_W0,ratio,w_residual,status")?;
    let mut sum = WronskianSummary {
        points: rows.len(),
        admissible: 0,
        ratio_min: f64::INFINITY,
        ratio_max: 0.0,
        c_fit: 0.0,
        regime_law_ok: true,
        max_w_residual: 0.0,
        flagged: false,
    };
    let mut failures = 0;
    for row in &rows {
        writeln!(f, "{row}")?;
        let cols: Vec<&str> = row.split(',').collect();
        if cols[8] == "ok" {
            let ratio: f64 = cols[6].parse().unwrap_or(f64::NAN);
            let wr: f64 = cols[7].parse().unwrap_or(f64::NAN);
            sum.admissible += 1;
            sum.ratio_min = sum.ratio_min.min(ratio);
            sum.ratio_max = sum.ratio_max.max(ratio);
            sum.max_w_residual = sum.max_w_residual.max(wr);
        } else if cols[8].starts_with("failed") {
            failures += 1;
        }
    }
    f.flush()?;
    sum.c_fit = sum.ratio_max.max(1.0 / sum.ratio_min);
    sum.regime_law_ok = sum.admissible > 0 && sum.c_fit <= 10.0;
    sum.flagged = sum.max_w_residual > W_RESIDUAL_FLAG;
    out.json("wronskian_scan.json", cfg, &sum)?;
    Ok(Outcome {
        flagged: sum.flagged,
        failed: failures > 0,
    })
}

#[derive(Serialize)]
struct TransformEntry {
    k: f64,
    file: String,
    plancherel_residual: f64,
    /// ||v - V R[(k^2/c)^2 (c/k^2)^2 F v]|| / ||v||.
    reconstruction_error: f64,
    clip_sensitivity: f64,
    max_w_residual: f64,
    flagged: bool,
}

fn cmd_transform(cfg: &RunConfig, p: &VortexProfile, out: &Output) -> Result<Outcome> {
    let ks = cfg.list("k")?;
    nonzero_ks(&ks)?;
    let grid = parse_radial(cfg.get("r")?)?;
    let opts = solver_options(cfg)?;
    let r_max = *grid.last().unwrap();
    let quad = evolution_quadrature(0.0, r_max, cfg.f64("cmin")?);
    let mut entries = Vec::new();
    for (j, &k) in ks.iter().enumerate() {
        let table = build_basis_table(p, k.abs(), &grid, quad, &opts)?;
        let (v, _) = test_data(cfg, &grid, k)?;
        let a = forward_transform(&table, &v)?;
        let name = format!("spectral_k{j}.csv");
        let mut f = out.file(&name)?;
        write_spectral_csv(&mut f, &a)?;
        f.flush()?;
        let id = apply_function_of_a(|x| num_complex::Complex64::from(x * x), &v, &table, p)?;
        let a2v = crate::spectral::apply_a(&crate::spectral::apply_a(&v, p, k)?, p, k)?;
        let nv = a2v.norm();
        let err = id.value.sub(&a2v)?.norm() / nv;
        let flagged = id.flagged || table.max_w_residual > W_RESIDUAL_FLAG;
        entries.push(TransformEntry {
            k,
            file: name,
            plancherel_residual: plancherel_residual(&v, &table, p)?,
            reconstruction_error: err,
            clip_sensitivity: id.clip_sensitivity,
            max_w_residual: table.max_w_residual,
            flagged,
        });
    }
    let flagged = entries.iter().any(|e| e.flagged);
    out.json("transform.json", cfg, &entries)?;
    Ok(Outcome { flagged, failed: false })
}

fn write_state_csv<W: Write>(f: &mut W, s: &ModeState) -> Result<()> {
    writeln!(f, "r,h_re,h_im,g_re,g_im,ur_re,ur_im,utheta_re,utheta_im,uz_re,uz_im")?;
    for i in 0..s.grid.len() {
        writeln!(
            f,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            s.grid[i],
            s.h_hat[i].re,
            s.h_hat[i].im,
            s.g_hat[i].re,
            s.g_hat[i].im,
            s.ur[i].re,
            s.ur[i].im,
            s.utheta[i].re,
            s.utheta[i].im,
            s.uz[i].re,
            s.uz[i].im
        )?;
    }
    Ok(())
}

fn state_distance(a: &ModeState, b: &ModeState) -> f64 {
    let d = |x: &[num_complex::Complex64], y: &[num_complex::Complex64]| {
        x.iter().zip(y).fold(0.0f64, |m, (u, v)| m.max((u - v).norm()))
    };
    [
        d(&a.h_hat, &b.h_hat),
        d(&a.g_hat, &b.g_hat),
        d(&a.ur, &b.ur),
        d(&a.utheta, &b.utheta),
        d(&a.uz, &b.uz),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn check_times(ts: &[f64]) -> Result<()> {
    if ts.iter().any(|t| *t < 0.0) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("times must be non-negative and increasing".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct EvolveEntry {
    k: f64,
    trajectory: String,
    states: Vec<String>,
    /// max |state(t) - initial state| at t = 0 samples
    initial_defect: Option<f64>,
    clip_sensitivity: f64,
    max_w_residual: f64,
    quadrature: CQuadrature,
    flagged: bool,
}

fn cmd_evolve(cfg: &RunConfig, p: &VortexProfile, out: &Output) -> Result<Outcome> {
    let ks = cfg.list("k")?;
    nonzero_ks(&ks)?;
    let ts = cfg.list("t")?;
    check_times(&ts)?;
    let grid = parse_radial(cfg.get("r")?)?;
    let opts = solver_options(cfg)?;
    let t_max = *ts.last().unwrap();
    let quad = evolution_quadrature(t_max, *grid.last().unwrap(), cfg.f64("cmin")?);
    let mut entries = Vec::new();
    for (j, &k) in ks.iter().enumerate() {
        let (om, ut) = test_data(cfg, &grid, k)?;
        let s0 = initial_mode(&om, &ut, p, k)?;
        let table = build_basis_table(p, k.abs(), &grid, quad, &opts)?;
        let prop = Propagator::new(&table, p, &s0)?;
        let ev = ts.par_iter().map(|&t| prop.at(t)).collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        let mut states = Vec::new();
        let mut defect: Option<f64> = None;
        for (i, e) in ev.iter().enumerate() {
            rows.push((ts[i], e.state.sup_components(), energy(&e.state, p)));
            let name = format!("state_k{j}_t{i}.csv");
            let mut f = out.file(&name)?;
            write_state_csv(&mut f, &e.state)?;
            f.flush()?;
            states.push(name);
            if ts[i] == 0.0 {
                let d = state_distance(&e.state, &s0);
                defect = Some(defect.map_or(d, |x| x.max(d)));
            }
        }
        let name = format!("trajectory_k{j}.csv");
        let mut f = out.file(&name)?;
        write_trajectory_csv(&mut f, &rows)?;
        f.flush()?;
        let clip = ev.iter().map(|e| e.clip_sensitivity).fold(0.0, f64::max);
        entries.push(EvolveEntry {
            k,
            trajectory: name,
            states,
            initial_defect: defect,
            clip_sensitivity: clip,
            max_w_residual: table.max_w_residual,
            quadrature: table.quadrature,
            flagged: clip > CLIP_FLAG || table.max_w_residual > W_RESIDUAL_FLAG,
        });
    }
    let flagged = entries.iter().any(|e| e.flagged);
    out.json("evolve.json", cfg, &entries)?;
    Ok(Outcome { flagged, failed: false })
}

#[derive(Serialize)]
struct OracleEntry {
    k: f64,
    file: String,
    oracle_trajectory: String,
    report: CompareReport,
    /// max |E(t)/E(0) - 1| of the time-stepping reference
    oracle_energy_drift: f64,
    spectral_energy_drift: f64,
    clip_sensitivity: f64,
    max_w_residual: f64,
    flagged: bool,
}

fn cmd_oracle_compare(cfg: &RunConfig, p: &VortexProfile, out: &Output) -> Result<Outcome> {
    let ks = cfg.list("k")?;
    nonzero_ks(&ks)?;
    let ts = cfg.list("t")?;
    check_times(&ts)?;
    let dt = cfg.f64("dt")?;
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let grid = parse_radial(cfg.get("r")?)?;
    let opts = solver_options(cfg)?;
    let t_max = *ts.last().unwrap();
    let quad = evolution_quadrature(t_max, *grid.last().unwrap(), cfg.f64("cmin")?);
    let mut entries = Vec::new();
    for (j, &k) in ks.iter().enumerate() {
        let (om, ut) = test_data(cfg, &grid, k)?;
        let s0 = initial_mode(&om, &ut, p, k)?;
        let table = build_basis_table(p, k.abs(), &grid, quad, &opts)?;
        let prop = Propagator::new(&table, p, &s0)?;
        let ev = ts.par_iter().map(|&t| prop.at(t)).collect::<Result<Vec<_>>>()?;
        let fd = run_fd(&s0, &ts, dt, p)?;
        let spectral: Vec<ModeState> = ev.iter().map(|e| e.state.clone()).collect();
        let rep = compare(&fd, &spectral)?;
        let e0 = energy(&s0, p);
        let drift = |es: &mut dyn Iterator<Item = f64>| es.map(|e| (e / e0 - 1.0).abs()).fold(0.0, f64::max);
        let spectral_energy: Vec<f64> = spectral.iter().map(|s| energy(s, p)).collect();
        let name = format!("compare_k{j}.csv");
        let mut f = out.file(&name)?;
        writeln!(f, "t,err_h,err_g,err_ur,err_utheta,err_uz,energy_oracle,energy_spectral")?;
        for i in 0..rep.times.len() {
            writeln!(
                f,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                rep.times[i],
                rep.err_h[i],
                rep.err_g[i],
                rep.err_ur[i],
                rep.err_utheta[i],
                rep.err_uz[i],
                fd.energy[i],
                spectral_energy[i]
            )?;
        }
        f.flush()?;
        let oname = format!("oracle_trajectory_k{j}.csv");
        let rows: Vec<_> = fd
            .states
            .iter()
            .zip(&fd.energy)
            .map(|(s, e)| (s.t, s.sup_components(), *e))
            .collect();
        let mut f = out.file(&oname)?;
        write_trajectory_csv(&mut f, &rows)?;
        f.flush()?;
        let clip = ev.iter().map(|e| e.clip_sensitivity).fold(0.0, f64::max);
        entries.push(OracleEntry {
            k,
            file: name,
            oracle_trajectory: oname,
            oracle_energy_drift: drift(&mut fd.energy.iter().copied()),
            spectral_energy_drift: drift(&mut spectral_energy.iter().copied()),
            report: rep,
            clip_sensitivity: clip,
            max_w_residual: table.max_w_residual,
            flagged: clip > CLIP_FLAG || table.max_w_residual > W_RESIDUAL_FLAG,
        });
    }
    let flagged = entries.iter().any(|e| e.flagged);
    out.json("oracle_compare.json", cfg, &entries)?;
    Ok(Outcome { flagged, failed: false })
}

#[derive(Serialize)]
struct KernelScanResult {
    scan: KernelScanReport,
    /// Per-triple relative change of int |d_c K| dc on the doubled grid.
    stability: Option<Vec<Option<f64>>>,
    stable: Option<bool>,
    skipped: usize,
    flagged: bool,
}

/// Relative change of each triple's integral between two scans.
pub fn scan_changes(a: &KernelScanReport, b: &KernelScanReport) -> Vec<Option<f64>> {
    a.triples
        .iter()
        .zip(&b.triples)
        .map(|(x, y)| match (x.dc_integral, y.dc_integral) {
            (Some(u), Some(v)) if v != 0.0 => Some((u - v).abs() / v.abs()),
            (Some(u), Some(v)) if u == v => Some(0.0),
            _ => None,
        })
        .collect()
}

fn cmd_kernel_scan(cfg: &RunConfig, p: &VortexProfile, out: &Output) -> Result<Outcome> {
    let triples = parse_triples(cfg.get("triples")?)?;
    let nc = cfg.usize("nc")?;
    let xi_max = cfg.f64("xi_max")?;
    let delta = cfg.f64("delta")?;
    let opts = KernelOptions {
        xi_max,
        m_cut: cfg.f64("M")?,
        ..KernelOptions::default()
    };
    let solver = solver_options(cfg)?;
    let scan = dc_scan(p, &triples, nc, delta, KernelFlags::PLAIN, &opts, &solver)?;
    let (stability, stable) = if cfg.bool("stability")? {
        let fine = dc_scan(p, &triples, 2 * nc, delta, KernelFlags::PLAIN, &opts, &solver)?;
        let ch = scan_changes(&scan, &fine);
        let ok = ch.iter().all(|c| c.is_some_and(|x| x <= 0.1));
        (Some(ch), Some(ok))
    } else {
        (None, None)
    };
    let mut f = out.file("kernel_scan.csv")?;
    write_scan_csv(&mut f, &scan)?;
    f.flush()?;
    let skipped = scan.triples.iter().filter(|t| t.dc_integral.is_none()).count();
    let flagged = skipped > 0 || stable == Some(false);
    out.json(
        "kernel_scan.json",
        cfg,
        KernelScanResult {
            scan,
            stability,
            stable,
            skipped,
            flagged,
        },
    )?;
    Ok(Outcome { flagged, failed: false })
}

#[derive(Serialize)]
struct DecayModeEntry {
    k: f64,
    file: String,
    p: f64,
    #[serde(rename = "C")]
    c: f64,
    residual: f64,
    t_window: [f64; 2],
    clip_sensitivity: f64,
    flagged: bool,
}

#[derive(Serialize)]
struct DecayResult {
    h: f64,
    r_max: f64,
    quadrature: CQuadrature,
    modes: Vec<DecayModeEntry>,
    synthesis: DecaySynthEntry,
    flagged: bool,
}

#[derive(Serialize)]
struct DecaySynthEntry {
    ks: Vec<f64>,
    modes: usize,
    file: String,
    p: f64,
    #[serde(rename = "C")]
    c: f64,
    residual: f64,
    t_window: [f64; 2],
}

fn cmd_decay(cfg: &RunConfig, p: &VortexProfile, out: &Output) -> Result<Outcome> {
    let ks = cfg.list("k")?;
    if ks.is_empty() || ks.len() > 4 || ks.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::Config(
            "decay takes one to four positive k (synthesized with their -k partners)".into(),
        ));
    }
    let ts = cfg.list("t")?;
    check_times(&ts)?;
    if ts.len() < 8 || ts[0] <= 0.0 {
        return Err(Error::Config("decay needs at least 8 positive times".into()));
    }
    let t_max = *ts.last().unwrap();
    let grid = match cfg.get("r")? {
        "auto" => {
            let k_min = ks.iter().copied().fold(f64::INFINITY, f64::min);
            uniform_grid(0.05, decay_r_max(k_min, t_max))
        }
        s => parse_radial(s)?,
    };
    let h = grid[0];
    let r_max = *grid.last().unwrap();
    let z = cfg.list("z")?;
    let opts = solver_options(cfg)?;
    let quad = evolution_quadrature(t_max, r_max, cfg.f64("cmin")?);
    let syn = synthesized_decay(p, &ks, &grid, quad, &opts, &ts, &z)?;
    let window = [ts[0], t_max];
    let mut modes = Vec::new();
    for (j, m) in syn.modes.iter().enumerate() {
        let name = format!("decay_k{j}.csv");
        let rows: Vec<_> = (0..m.times.len())
            .map(|i| (m.times[i], (m.sup_ur[i], m.sup_utheta[i], m.sup_uz[i]), m.energy[i]))
            .collect();
        let mut f = out.file(&name)?;
        write_trajectory_csv(&mut f, &rows)?;
        f.flush()?;
        modes.push(DecayModeEntry {
            k: m.k,
            file: name,
            p: m.fit.p,
            c: m.fit.c,
            residual: m.fit.residual,
            t_window: window,
            clip_sensitivity: m.clip_sensitivity,
            flagged: m.flagged,
        });
    }
    let mut f = out.file("decay_synthesis.csv")?;
    writeln!(f, "t,sup")?;
    for (t, s) in ts.iter().zip(&syn.sup) {
        writeln!(f, "{t:?},{s:?}")?;
    }
    f.flush()?;
    let flagged = modes.iter().any(|m| m.flagged);
    out.json(
        "decay.json",
        cfg,
        DecayResult {
            h,
            r_max,
            quadrature: quad,
            modes,
            synthesis: DecaySynthEntry {
                ks: syn.ks.clone(),
                modes: 2 * syn.ks.len(),
                file: "decay_synthesis.csv".into(),
                p: syn.fit.p,
                c: syn.fit.c,
                residual: syn.fit.residual,
                t_window: window,
            },
            flagged,
        },
    )?;
    Ok(Outcome { flagged, failed: false })
}

/// Exit code of an error: 2 for bad input, 1 for numerical failure.
pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Profile(_) | Error::Domain(_) => 2,
        _ => 1,
    }
}

fn run_resolved(cfg: &RunConfig) -> Result<Outcome> {
    let p = load_profile(cfg.get("profile")?)?;
    let out = Output::new(cfg.get("out_dir")?)?;
    match cfg.command.as_str() {
        "profile-check" => cmd_profile_check(cfg, &p, &out),
        "basis" => cmd_basis(cfg, &p, &out),
        "wronskian-scan" => cmd_wronskian_scan(cfg, &p, &out),
        "transform" => cmd_transform(cfg, &p, &out),
        "evolve" => cmd_evolve(cfg, &p, &out),
        "oracle-compare" => cmd_oracle_compare(cfg, &p, &out),
        "kernel-scan" => cmd_kernel_scan(cfg, &p, &out),
        "decay" => cmd_decay(cfg, &p, &out),
        c => Err(Error::Config(format!("unknown command '{c}'"))),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match resolve_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    let threads = cfg.usize("threads").unwrap_or(0);
    let strict = cfg.bool("strict").unwrap_or(false);
    let go = || run_resolved(&cfg);
    let res = if threads > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(go),
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                return 2;
            }
        }
    } else {
        go()
    };
    match res {
        Ok(o) => {
            let dir = cfg.settings.get("out_dir").map_or("", |s| s.as_str());
            if o.failed {
                eprintln!("{}: failed, see {dir}", cfg.command);
                1
            } else if o.flagged && strict {
                eprintln!("{}: numerical flag raised (--strict), see {dir}", cfg.command);
                1
            } else {
                if o.flagged {
                    eprintln!("{}: numerical flag raised, see {dir}", cfg.command);
                }
                println!("{}: wrote {dir}", cfg.command);
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            error_code(&e)
        }
    }
}

/// Parses `args` (including the program name) and runs; clap usage errors exit 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1,2").unwrap(), vec![1.0, 2.0]);
        let g = parse_grid("0.05:0.95:19").unwrap();
        assert_eq!(g.len(), 19);
        assert!((g[1] - 0.1).abs() < 1e-15 && g[18] == 0.95);
        let g = parse_grid("0.05:50:log20").unwrap();
        assert_eq!(g.len(), 20);
        assert!((g[19] - 50.0).abs() < 1e-12);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("0:2:log3").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn config_file() {
        let m = parse_config_file("# run\nprofile = uniform  # inline\nM=12\n\nout-dir=x\n").unwrap();
        assert_eq!(m["profile"], "uniform");
        assert_eq!(m["M"], "12");
        assert_eq!(m["out_dir"], "x");
        assert!(parse_config_file("bogus=1").is_err());
        assert!(parse_config_file("novalue").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from(["vs", "basis", "--k", "2", "--M", "12", "--profile", "uniform"]).unwrap();
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.settings["k"], "2");
        assert_eq!(cfg.settings["M"], "12");
        assert_eq!(cfg.settings["c"], "0.3,0.5,0.7");
        let cli = Cli::try_parse_from(["vs", "basis", "--delta", "0.7"]).unwrap();
        assert_eq!(resolve_config(&cli).map_err(|e| error_code(&e)), Err(2));
    }

    #[test]
    fn triples() {
        let t = parse_triples(DEFAULT_TRIPLES).unwrap();
        assert_eq!(t.len(), 15);
        assert!(parse_triples("1:2").is_err());
        assert!(parse_triples("0:1:1").is_err());
    }
}
