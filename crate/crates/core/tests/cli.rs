use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Parser;
use mueller::cli::{
    kernel_config_from, run, solver_config_from, Cli, KeyValueFile, RunManifest, EXIT_CAPACITY, EXIT_INPUT,
    EXIT_MAX_ITER, EXIT_OK,
};
use mueller::mueller_energy::{hydrogenic_1s, Checkpoint, DensityMatrix1P};
use mueller::radial_core::{build_grid, GridScheme};
use mueller::Error;
use tempfile::TempDir;

fn mueller(args: &[&str]) -> i32 {
    let mut v = vec!["mueller"];
    v.extend_from_slice(args);
    run(Cli::try_parse_from(v).expect("valid arguments"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Rank-one 1s state written as a checkpoint.
fn hydrogenic_checkpoint(dir: &Path, z: f64, q: usize, mu: Option<f64>) -> PathBuf {
    let g = Arc::new(build_grid(400, 40.0 / z, GridScheme::LogStretched).unwrap());
    let gamma = DensityMatrix1P::rank_one(g.clone(), q, 0, 1.0, hydrogenic_1s(&g, z)).unwrap();
    let mut ck = Checkpoint::from_gamma(&gamma, z, q as f64);
    ck.chemical_potential = mu;
    let p = dir.join("state.json");
    ck.save(&p).unwrap();
    p
}

const HYDROGEN: &str = "z = 1\nelectrons = 1\nq = 1\nl_max = 0\nbands = 2\ngrid_points = 200\nr_max = 20\nenergy_tol = 1e-9\n";

#[test]
fn config_errors_name_line_and_field() {
    let kv = KeyValueFile::parse("a.conf", "z = 2\nbogus = 1\n").unwrap();
    match solver_config_from(&kv) {
        Err(Error::Config { path, line, field, .. }) => {
            assert_eq!((path.as_str(), line, field.as_str()), ("a.conf", 2, "bogus"));
        }
        other => panic!("{other:?}"),
    }
    let kv = KeyValueFile::parse("a.conf", "# atom\n\nz = two\n").unwrap();
    assert!(matches!(solver_config_from(&kv), Err(Error::Config { line: 3, .. })));
    let kv = KeyValueFile::parse("a.conf", "electrons = 2\n").unwrap();
    assert!(matches!(solver_config_from(&kv), Err(Error::Config { ref field, .. }) if field == "z"));
    assert!(matches!(KeyValueFile::parse("a.conf", "z 2\n"), Err(Error::Config { line: 1, .. })));
    assert!(matches!(KeyValueFile::parse("a.conf", "z = 1\nz = 2\n"), Err(Error::Config { line: 2, .. })));
    let kv = KeyValueFile::parse("k.conf", "n = 12\nprofile = square\n").unwrap();
    assert!(matches!(kernel_config_from(&kv), Err(Error::Config { line: 2, .. })));
}

#[test]
fn config_values_are_applied() {
    let kv = KeyValueFile::parse("h.conf", HYDROGEN).unwrap();
    let c = solver_config_from(&kv).unwrap();
    assert_eq!((c.z, c.n_electrons, c.q, c.l_max, c.bands), (1.0, 1.0, 1, 0, 2));
    assert_eq!((c.grid.n_points, c.grid.r_max), (200, 20.0));
    assert_eq!(c.energy_tol, 1e-9);
    let k = kernel_config_from(&KeyValueFile::parse("k.conf", "").unwrap()).unwrap();
    assert_eq!((k.grid.n, k.grid.half_width, k.singular_values), (24, 2.5, 256));
}

#[test]
fn missing_files_exit_one() {
    let dir = TempDir::new().unwrap();
    let nothing = dir.path().join("absent.conf");
    assert_eq!(mueller(&["solve", "--config", s(&nothing)]), EXIT_INPUT);
    assert_eq!(mueller(&["analyze", s(&nothing)]), EXIT_INPUT);
    assert_eq!(mueller(&["kernel-test", "--config", s(&nothing)]), EXIT_INPUT);
    let junk = write(dir.path(), "junk.json", "{ not json");
    assert_eq!(mueller(&["probe", s(&junk)]), EXIT_INPUT);
}

#[test]
fn solve_writes_checkpoint_report_and_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "h.conf", HYDROGEN);
    let out = dir.path().join("run");
    assert_eq!(mueller(&["solve", "--config", s(&cfg), "--out", s(&out)]), EXIT_OK);
    let rep = json(&out.join("report.json"));
    assert_eq!(rep["converged"], true);
    assert!(rep["final_energy"].as_f64().unwrap() <= -0.5 + 1e-4);
    let ck = Checkpoint::load(&out.join("checkpoint.json")).unwrap();
    assert_eq!(ck.z, 1.0);
    let m = manifest(&out);
    assert_eq!(m.command, "solve");
    assert_eq!(m.outputs, vec!["checkpoint.json", "report.json"]);
    assert_eq!(m.config_hash.len(), 64);
    assert!(!out.join("manifest.json.tmp").exists());

    // Warm start continues the same energy history.
    let out2 = dir.path().join("resumed");
    let code = mueller(&[
        "solve",
        "--config",
        s(&cfg),
        "--resume",
        s(&out.join("checkpoint.json")),
        "--out",
        s(&out2),
    ]);
    assert_eq!(code, EXIT_OK);
    let first = ck.energy_history.len();
    let hist = Checkpoint::load(&out2.join("checkpoint.json")).unwrap().energy_history;
    assert!(hist.len() > first);
    assert_eq!(&hist[..first], &ck.energy_history[..]);
    assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{hist:?}");
}

#[test]
fn iteration_limit_exits_two_with_best_iterate() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "he.conf", "z = 2\nl_max = 1\nbands = 3\ngrid_points = 200\nr_max = 20\nmax_outer = 2\n");
    let out = dir.path().join("run");
    assert_eq!(mueller(&["solve", "--config", s(&cfg), "--out", s(&out)]), EXIT_MAX_ITER);
    assert!(Checkpoint::load(&out.join("checkpoint.json")).is_ok());
    assert_eq!(json(&out.join("report.json"))["converged"], false);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn capacity_exits_three() {
    let dir = TempDir::new().unwrap();
    // Two s bands hold four electrons.
    let cfg = write(dir.path(), "big.conf", "z = 20\nl_max = 0\nbands = 2\ngrid_points = 200\n");
    assert_eq!(mueller(&["solve", "--config", s(&cfg), "--out", s(dir.path())]), EXIT_CAPACITY);
    let kcfg = write(dir.path(), "k.conf", "n = 40\n");
    assert_eq!(mueller(&["kernel-test", "--config", s(&kcfg), "--out", s(dir.path())]), EXIT_CAPACITY);
}

#[test]
fn analyze_hydrogenic_checkpoint() {
    let dir = TempDir::new().unwrap();
    let ck = hydrogenic_checkpoint(dir.path(), 1.0, 1, Some(-0.5));
    let out = dir.path().join("a");
    assert_eq!(mueller(&["analyze", s(&ck), "--tail", "--out", s(&out)]), EXIT_OK);
    let tail = json(&out.join("tail.json"));
    // One occupied state cannot be fitted, but the prediction is still reported.
    assert!(tail["error"].is_string());
    assert!((tail["predicted"].as_f64().unwrap() - 0.3557).abs() < 1e-4);
    assert_eq!(manifest(&out).outputs, vec!["tail.json"]);
}

#[test]
fn analyze_flags_a_fully_occupied_state() {
    let dir = TempDir::new().unwrap();
    let ck = hydrogenic_checkpoint(dir.path(), 3.0, 2, None);
    let out = dir.path().join("a");
    assert_eq!(mueller(&["analyze", s(&ck), "--mu", "--out", s(&out)]), EXIT_OK);
    let mu = json(&out.join("mu.json"));
    assert_eq!(mu["truncated"], true);
    assert_eq!(mu["j"], 3);
    assert!(mu["bound"].as_f64().unwrap() < mu["sigma_j"].as_f64().unwrap());
    assert!(mu["solver_mu"].is_number());
}

#[test]
fn decay_is_inapplicable_above_minus_one_half() {
    let dir = TempDir::new().unwrap();
    let ck = hydrogenic_checkpoint(dir.path(), 1.0, 1, Some(-0.3));
    let out = dir.path().join("a");
    assert_eq!(mueller(&["analyze", s(&ck), "--decay", "--out", s(&out)]), EXIT_OK);
    let d = json(&out.join("decay.json"));
    assert_eq!(d["applicable"], false);
    assert!(d["kappa_max"].is_null());
    assert_eq!(manifest(&out).outputs, vec!["decay.json", "decay.csv"]);
}

#[test]
fn analyze_without_flags_runs_everything() {
    let dir = TempDir::new().unwrap();
    let ck = hydrogenic_checkpoint(dir.path(), 3.0, 2, Some(-1.0));
    let out = dir.path().join("a");
    assert_eq!(mueller(&["analyze", s(&ck), "--out", s(&out)]), EXIT_OK);
    let m = manifest(&out);
    for f in ["tail.json", "decay.json", "decay.csv", "mu.json"] {
        assert!(m.outputs.iter().any(|o| o == f), "{f} missing from {:?}", m.outputs);
        assert!(out.join(f).exists());
    }
    assert_eq!(m.input_checkpoint.as_deref(), Some(s(&ck)));
}

#[test]
fn probe_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let ck = hydrogenic_checkpoint(dir.path(), 1.0, 1, None);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(mueller(&["probe", s(&ck), "--slices", "2", "--out", s(&a)]), EXIT_OK);
    assert_eq!(mueller(&["probe", s(&ck), "--slices", "2", "--out", s(&b)]), EXIT_OK);
    let outputs = manifest(&a).outputs;
    assert_eq!(outputs.len(), 5);
    for f in &outputs {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let p = json(&a.join("probe.json"));
    assert!(p["difference"].is_number());
    assert!(p["phi"]["warning"].is_string());
}

#[test]
fn probe_rejects_zero_slices() {
    let dir = TempDir::new().unwrap();
    let ck = hydrogenic_checkpoint(dir.path(), 1.0, 1, None);
    assert_eq!(mueller(&["probe", s(&ck), "--slices", "0", "--out", s(dir.path())]), EXIT_INPUT);
}

#[test]
fn kernel_test_disjoint_profile_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "d.conf", "n = 10\nsingular_values = 64\nprofile = disjoint\n");
    let out = dir.path().join("k");
    assert_eq!(mueller(&["kernel-test", "--config", s(&cfg), "--out", s(&out)]), EXIT_OK);
    let r = json(&out.join("schatten.json"));
    assert_eq!(r["pass"], true);
    assert_eq!(r["predicted"], 0.0);
    assert_eq!(manifest(&out).outputs, vec!["schatten.json", "schatten.csv"]);
}

#[test]
fn kernel_test_failure_exits_one() {
    let dir = TempDir::new().unwrap();
    // A coarse grid with a tight tolerance cannot match the closed form.
    let cfg = write(dir.path(), "g.conf", "n = 8\nsingular_values = 48\ntolerance = 1e-6\n");
    let out = dir.path().join("k");
    assert_eq!(mueller(&["kernel-test", "--config", s(&cfg), "--out", s(&out)]), EXIT_INPUT);
    assert_eq!(json(&out.join("schatten.json"))["pass"], false);
}

#[test]
fn unknown_subcommand_is_rejected() {
    assert!(Cli::try_parse_from(["mueller", "optimize"]).is_err());
    assert!(Cli::try_parse_from(["mueller", "solve"]).is_err());
}
