use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vortex-spectra")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("vortex-spectra-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str], out: &Path) -> i32 {
    Command::new(bin())
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_bytes(d: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(d)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn profile_check_exit_codes() {
    let d = scratch("pc");
    assert_eq!(run(&["profile-check", "--profile", "coriolis_example"], &d.join("a")), 0);
    let r = json(&d.join("a/profile_check.json"));
    assert_eq!(r["schema"], "vortex-spectra/1");
    assert!((r["result"]["a0"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-3);
    assert_eq!(r["config"]["settings"]["profile"], "coriolis_example");

    assert_eq!(run(&["profile-check", "--profile", "uniform"], &d.join("b")), 0);
    assert_eq!(json(&d.join("b/profile_check.json"))["result"]["degenerate"], true);

    let bad = d.join("bad.csv");
    fs::write(&bad, "r,u\n0,0.3\n1\n").unwrap();
    let spec = format!("tabulated:{}", bad.display());
    assert_eq!(run(&["profile-check", "--profile", &spec], &d.join("c")), 2);
    assert_eq!(run(&["profile-check", "--delta", "0.9"], &d.join("c")), 2);
    assert_eq!(run(&["no-such-command"], &d.join("c")), 2);
}

#[test]
fn config_file_and_flags() {
    let d = scratch("cfg");
    let cfg = d.join("run.cfg");
    fs::write(&cfg, "# small scan\nprofile = uniform\nc = 0.3,0.6\nxi = 1,2 # two points\n").unwrap();
    let cfg_s = cfg.to_str().unwrap();
    assert_eq!(run(&["wronskian-scan", "--config", cfg_s, "--xi", "3"], &d.join("o")), 0);
    let r = json(&d.join("o/wronskian_scan.json"));
    assert_eq!(r["config"]["settings"]["xi"], "3");
    assert_eq!(r["config"]["settings"]["c"], "0.3,0.6");
    assert_eq!(r["result"]["points"], 2);
    let csv = fs::read_to_string(d.join("o/wronskian_scan.csv")).unwrap();
    assert!(csv.starts_with("c,xi,k,region,log_abs_w,log_W0,ratio,w_residual,status\n"));

    fs::write(&cfg, "nonsense = 1\n").unwrap();
    assert_eq!(run(&["wronskian-scan", "--config", cfg_s], &d.join("o")), 2);
}

#[test]
fn evolve_at_time_zero_is_identity() {
    let d = scratch("ev");
    assert_eq!(run(&["evolve", "--profile", "uniform", "--k", "1", "--t", "0", "--r", "0.1:15"], &d), 0);
    let r = json(&d.join("evolve.json"));
    assert!(r["result"][0]["initial_defect"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn outputs_are_deterministic() {
    let d = scratch("det");
    let args = [
        "kernel-scan",
        "--profile",
        "uniform",
        "--triples",
        "1:2:0.5,1:0.5:0",
        "--nc",
        "64",
        "--xi-max",
        "40",
    ];
    assert_eq!(run(&args, &d.join("a")), 0);
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "2"]);
    assert_eq!(run(&threaded, &d.join("b")), 0);
    let a = dir_bytes(&d.join("a"));
    let b = dir_bytes(&d.join("b"));
    assert_eq!(a.len(), b.len());
    // the JSON echoes out_dir and threads; the data files must match byte for byte
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        if na.ends_with(".csv") {
            assert!(ba == bb, "{na} differs");
        }
    }
    assert_eq!(run(&args, &d.join("a2")), 0);
    let a2 = dir_bytes(&d.join("a2"));
    for ((na, ba), (_, bb)) in a.iter().zip(&a2) {
        if na.ends_with(".csv") {
            assert!(ba == bb, "{na} differs on rerun");
        }
    }
    let r = json(&d.join("a/kernel_scan.json"));
    let zcol = &r["result"]["scan"]["triples"][1]["k_im"];
    assert!(zcol.as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));
}
