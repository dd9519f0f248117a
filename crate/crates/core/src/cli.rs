//! Command-line front end: `solve`, `analyze`, `probe`, `kernel-test`.
//!
//! Exit codes: 0 success, 1 input/output or configuration problem (and a
//! failed kernel check), 2 iteration limit reached with the best iterate
//! saved, 3 capacity exceeded.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel_oracle::{
    build_kernel_operator, gaussian_prediction, predicted_g34, schatten_report, top_singular_values, CubicGrid,
    FitWindow, DEFAULT_POINT_CAP,
};
use crate::minimizer::{chemical_potential, solve_from, OccupationMethod, SolverConfig};
use crate::mueller_energy::{density_from_gamma, Checkpoint};
use crate::radial_core::{GridScheme, GridSpec};
use crate::regularity_probe::{default_slices, probe_kernel_regularity, JastrowSpec, ProbeTarget, RegularityReport};
use crate::spectral_analysis::{
    chemical_potential_bound, decay_fit, eigenvalue_tail, predicted_constant, tail_fit, TailWindow,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_MAX_ITER: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "MUELLER_THREADS";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "mueller", version, about = "Mueller functional solver and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the functional for the configured atom.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Warm start from a checkpoint; its grid and bands are kept.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Occupation tail, density decay and chemical-potential bound.
    Analyze {
        checkpoint: PathBuf,
        #[arg(long)]
        tail: bool,
        #[arg(long)]
        decay: bool,
        #[arg(long)]
        mu: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regularity exponents of Φ and Ψ along slices through the diagonal.
    Probe {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 4)]
        slices: usize,
        /// Radius of the slice base points (Bohr); defaults to 1/√Z.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Singular-value law of the homogeneous kernel on a cubic grid.
    KernelTest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `key = value` lines; `#` starts a comment.
#[derive(Debug)]
pub struct KeyValueFile {
    path: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValueFile {
    pub fn parse(path: &str, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config {
                    path: path.into(),
                    line: i + 1,
                    field: line.into(),
                    message: "expected `key = value`".into(),
                });
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if entries.insert(k.clone(), (i + 1, v)).is_some() {
                return Err(Error::Config {
                    path: path.into(),
                    line: i + 1,
                    field: k,
                    message: "duplicate key".into(),
                });
            }
        }
        Ok(KeyValueFile {
            path: path.into(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Config {
            path: path.display().to_string(),
            line: 0,
            field: String::new(),
            message: "not valid UTF-8".into(),
        })?;
        Ok((Self::parse(&path.display().to_string(), &text)?, bytes))
    }

    fn error(&self, key: &str, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line: self.entries.get(key).map_or(0, |e| e.0),
            field: key.into(),
            message: message.into(),
        }
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((_, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| self.error(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| self.error(key, "required key missing"))
    }

    /// Rejects keys outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        for k in self.entries.keys() {
            if !known.contains(&k.as_str()) {
                return Err(self.error(k, "unknown key"));
            }
        }
        Ok(())
    }
}

const SOLVE_KEYS: &[&str] = &[
    "z",
    "electrons",
    "q",
    "l_max",
    "bands",
    "grid_points",
    "r_max",
    "grid_scheme",
    "grid_scale",
    "r_first",
    "energy_tol",
    "max_outer",
    "occupation_step",
    "mixing",
    "occupation_method",
    "seed_rounds",
];

/// Solver settings from a config file (Hartree atomic units).
pub fn solver_config_from(kv: &KeyValueFile) -> Result<SolverConfig> {
    kv.check_keys(SOLVE_KEYS)?;
    let z: f64 = kv.require("z")?;
    let n: f64 = kv.get("electrons")?.unwrap_or(z);
    let q: usize = kv.get("q")?.unwrap_or(2);
    let mut c = SolverConfig::new(z, n, q);
    if let Some(v) = kv.get("l_max")? {
        c.l_max = v;
    }
    if let Some(v) = kv.get("bands")? {
        c.bands = v;
    }
    let points = kv.get("grid_points")?.unwrap_or(c.grid.n_points);
    let r_max = kv.get("r_max")?.unwrap_or(c.grid.r_max);
    let scheme: GridScheme = kv.get("grid_scheme")?.unwrap_or(c.grid.scheme);
    let mut grid = GridSpec::new(points, r_max, scheme).with_first_node(kv.get("r_first")?.unwrap_or(c.grid.r_first));
    if let Some(s) = kv.get("grid_scale")? {
        grid = grid.with_scale(s);
    }
    c.grid = grid;
    if let Some(v) = kv.get("energy_tol")? {
        c.energy_tol = v;
    }
    if let Some(v) = kv.get("max_outer")? {
        c.max_outer = v;
    }
    if let Some(v) = kv.get("occupation_step")? {
        c.occupation_step = v;
    }
    if let Some(v) = kv.get("mixing")? {
        c.mixing = v;
    }
    if let Some(v) = kv.get::<OccupationMethod>("occupation_method")? {
        c.occupation_method = v;
    }
    if let Some(v) = kv.get("seed_rounds")? {
        c.seed_rounds = v;
    }
    // Attribute validation failures to the file.
    c.validate().map_err(|e| match e {
        Error::Capacity(_) => e,
        other => kv.error("", other.to_string()),
    })?;
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelProfile {
    /// `A = B = e^{−|x|²/2}`.
    Gaussian,
    /// Two separated bumps with `AB = 0`.
    Disjoint,
}

impl std::str::FromStr for KernelProfile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" => Ok(KernelProfile::Gaussian),
            "disjoint" => Ok(KernelProfile::Disjoint),
            other => Err(format!("unknown profile `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub grid: CubicGrid,
    pub singular_values: usize,
    pub tolerance: f64,
    pub profile: KernelProfile,
    pub point_cap: usize,
}

const KERNEL_KEYS: &[&str] = &["n", "half_width", "singular_values", "tolerance", "profile", "point_cap"];

/// Defaults: `n = 24`, `L = 2.5` (the Gaussian integrand `(AB)^{3/4}` is
/// 1% of its peak at the faces), 256 values, 15% tolerance.
pub fn kernel_config_from(kv: &KeyValueFile) -> Result<KernelConfig> {
    kv.check_keys(KERNEL_KEYS)?;
    let n = kv.get("n")?.unwrap_or(24);
    let l = kv.get("half_width")?.unwrap_or(2.5);
    if !(l > 0.0) {
        return Err(kv.error("half_width", "must be positive"));
    }
    Ok(KernelConfig {
        grid: CubicGrid::new(n, l),
        singular_values: kv.get("singular_values")?.unwrap_or(256),
        tolerance: kv.get("tolerance")?.unwrap_or(0.15),
        profile: kv.get("profile")?.unwrap_or(KernelProfile::Gaussian),
        point_cap: kv.get("point_cap")?.unwrap_or(DEFAULT_POINT_CAP),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub input_checkpoint: Option<String>,
    pub output_dir: String,
    pub started: String,
    pub finished: String,
    pub tool_version: String,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    started: String,
}

impl Outputs {
    fn new(dir: Option<PathBuf>) -> Result<Self> {
        let dir = dir.unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        // A stale manifest would mark this run complete.
        let _ = fs::remove_file(dir.join("manifest.json"));
        Ok(Outputs {
            dir,
            files: Vec::new(),
            started: now(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, content).map_err(|e| Error::io(p.display().to_string(), e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(self, command: &str, hash: String, input: Option<&Path>) -> Result<()> {
        let m = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.into(),
            config_hash: hash,
            input_checkpoint: input.map(|p| p.display().to_string()),
            output_dir: self.dir.display().to_string(),
            started: self.started,
            finished: now(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: self.files,
        };
        let tmp = self.dir.join("manifest.json.tmp");
        let dst = self.dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&m).expect("serializable manifest");
        fs::write(&tmp, body).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        fs::rename(&tmp, &dst).map_err(|e| Error::io(dst.display().to_string(), e))
    }
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Checkpoint("not valid UTF-8".into()))?;
    Ok((Checkpoint::from_json(text)?, bytes))
}

fn cmd_solve(config: &Path, resume: Option<&Path>, out: Option<PathBuf>) -> Result<i32> {
    let (kv, bytes) = KeyValueFile::read(config)?;
    let mut cfg = solver_config_from(&kv)?;
    let mut hasher_input = bytes;
    let (start, history) = match resume {
        Some(p) => {
            let (ck, raw) = load_checkpoint(p)?;
            hasher_input.extend_from_slice(&raw);
            let gamma = ck.to_gamma()?;
            cfg.grid = ck.grid.clone();
            cfg.l_max = gamma.l_max();
            (Some(gamma), ck.energy_history)
        }
        None => (None, Vec::new()),
    };
    let mut outputs = Outputs::new(out)?;
    let (result, code) = match solve_from(&cfg, start.as_ref(), history) {
        Ok(r) => (r, EXIT_OK),
        Err(Error::Convergence { best, iterations, .. }) => {
            warn!("no convergence after {iterations} iterations; saving the best iterate");
            (*best, EXIT_MAX_ITER)
        }
        Err(e) => return Err(e),
    };
    let (gamma, report) = result;
    let mut ck = Checkpoint::from_gamma(&gamma, cfg.z, cfg.n_electrons);
    ck.chemical_potential = Some(report.chemical_potential);
    ck.energy_history = report.energy_history.clone();
    outputs.write("checkpoint.json", &ck.to_json())?;
    outputs.write("report.json", &serde_json::to_string_pretty(&report).expect("serializable report"))?;
    info!("E = {:.10} Ha, μ = {:.6} Ha", report.final_energy, report.chemical_potential);
    outputs.finish("solve", sha256_hex(&hasher_input), resume)?;
    Ok(code)
}

fn cmd_analyze(path: &Path, tail: bool, decay: bool, mu: bool, out: Option<PathBuf>) -> Result<i32> {
    let all = !(tail || decay || mu);
    let (ck, bytes) = load_checkpoint(path)?;
    let gamma = ck.to_gamma()?;
    let mut outputs = Outputs::new(out)?;
    let mu_value = match ck.chemical_potential {
        Some(m) => m,
        None => chemical_potential(&gamma, ck.z)?,
    };
    if all || tail {
        let t = eigenvalue_tail(&gamma);
        let c_star = predicted_constant(&density_from_gamma(&gamma), ck.q);
        let bands = gamma.channels().iter().map(Vec::len).max().unwrap_or(0);
        match tail_fit(&t, TailWindow::default_for(&t)) {
            Ok(rep) => {
                let rep = rep.with_prediction(c_star).with_cutoffs(gamma.l_max(), bands);
                outputs.write("tail.json", &rep.to_json())?;
                outputs.write("tail.csv", &rep.to_csv())?;
            }
            Err(e) => {
                warn!("tail fit skipped: {e}");
                let note = serde_json::json!({
                    "schema_version": 1,
                    "eigenvalues": t,
                    "predicted": c_star,
                    "error": e.to_string(),
                });
                outputs.write("tail.json", &serde_json::to_string_pretty(&note).expect("json"))?;
            }
        }
    }
    if all || decay {
        let rep = decay_fit(&density_from_gamma(&gamma), mu_value)?;
        if !rep.applicable {
            warn!("μ = {mu_value} ≥ −1/2: decay bound not applicable");
        }
        outputs.write("decay.json", &rep.to_json())?;
        outputs.write("decay.csv", &rep.to_csv())?;
    }
    if all || mu {
        let rep = chemical_potential_bound(&gamma, ck.z, ck.n_electrons, ck.q)?.with_solver_mu(mu_value);
        if rep.truncated {
            warn!("all occupations equal 1 within the band set; J set to {}", rep.j);
        }
        outputs.write("mu.json", &rep.to_json())?;
    }
    outputs.finish("analyze", sha256_hex(&bytes), Some(path))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ProbeSummary<'a> {
    schema_version: u32,
    phi: &'a RegularityReport,
    psi: &'a RegularityReport,
    /// `ŝ(Ψ) − ŝ(Φ)`.
    difference: f64,
}

fn cmd_probe(path: &Path, slices: usize, radius: Option<f64>, out: Option<PathBuf>) -> Result<i32> {
    if slices == 0 {
        return Err(Error::Parameter("--slices must be at least 1".into()));
    }
    let (ck, bytes) = load_checkpoint(path)?;
    let gamma = ck.to_gamma()?;
    let r0 = radius.unwrap_or(1.0 / ck.z.sqrt());
    let specs = default_slices(slices, r0);
    let jastrow = JastrowSpec::new(ck.z);
    let phi = probe_kernel_regularity(&gamma, &jastrow, ProbeTarget::Phi, &specs)?;
    let psi = probe_kernel_regularity(&gamma, &jastrow, ProbeTarget::Psi, &specs)?;
    if let Some(w) = &phi.warning {
        warn!("{w}");
    }
    let mut outputs = Outputs::new(out)?;
    let summary = ProbeSummary {
        schema_version: 1,
        phi: &phi,
        psi: &psi,
        difference: psi.s_hat - phi.s_hat,
    };
    outputs.write("probe.json", &serde_json::to_string_pretty(&summary).expect("json"))?;
    for (tag, rep) in [("phi", &phi), ("psi", &psi)] {
        for i in 0..rep.slices.len() {
            if let Some(csv) = rep.slice_csv(i) {
                outputs.write(&format!("probe_{tag}_{i}.csv"), &csv)?;
            }
        }
    }
    outputs.finish("probe", sha256_hex(&bytes), Some(path))?;
    Ok(EXIT_OK)
}

fn cmd_kernel_test(config: &Path, out: Option<PathBuf>) -> Result<i32> {
    let (kv, bytes) = KeyValueFile::read(config)?;
    let cfg = kernel_config_from(&kv)?;
    let grid = cfg.grid;
    let (rep, closed) = match cfg.profile {
        KernelProfile::Gaussian => {
            let g = |x: [f64; 3]| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp();
            let op = build_kernel_operator(g, g, grid, cfg.point_cap)?;
            let s = top_singular_values(&op, cfg.singular_values)?;
            let rep = schatten_report(grid, s, FitWindow::default_for(cfg.singular_values), predicted_g34(g, g, grid, 1))?;
            (rep, Some(gaussian_prediction()))
        }
        KernelProfile::Disjoint => {
            let c = grid.half_width / 2.0;
            let bump = move |x: [f64; 3], s: f64| {
                let d2 = (x[0] - s * c).powi(2) + x[1] * x[1] + x[2] * x[2];
                let r2 = (0.4 * c).powi(2);
                if d2 < r2 {
                    (-1.0 / (1.0 - d2 / r2)).exp()
                } else {
                    0.0
                }
            };
            let a = move |x: [f64; 3]| bump(x, -1.0);
            let b = move |x: [f64; 3]| bump(x, 1.0);
            let op = build_kernel_operator(a, b, grid, cfg.point_cap)?;
            let s = top_singular_values(&op, cfg.singular_values)?;
            (schatten_report(grid, s, FitWindow::default_for(cfg.singular_values), predicted_g34(a, b, grid, 1))?, None)
        }
    };
    let reference = closed.unwrap_or(rep.predicted);
    let pass = if reference > 0.0 {
        (rep.g_hat - reference).abs() <= cfg.tolerance * reference
    } else {
        rep.g_hat <= cfg.tolerance
    };
    let mut outputs = Outputs::new(out)?;
    let mut value = serde_json::to_value(&rep).expect("json");
    value["reference"] = serde_json::json!(reference);
    value["pass"] = serde_json::json!(pass);
    outputs.write("schatten.json", &serde_json::to_string_pretty(&value).expect("json"))?;
    outputs.write("schatten.csv", &rep.to_csv())?;
    outputs.finish("kernel-test", sha256_hex(&bytes), None)?;
    info!("Ĝ = {:.4}, reference {:.4}, pass = {pass}", rep.g_hat, reference);
    Ok(if pass { EXIT_OK } else { EXIT_INPUT })
}

/// Exit status for an error: 3 for capacity, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Capacity(_) => EXIT_CAPACITY,
        Error::Convergence { .. } => EXIT_MAX_ITER,
        _ => EXIT_INPUT,
    }
}

/// Runs one command; errors are reported on stderr.
pub fn run(cli: Cli) -> i32 {
    if let Ok(t) = std::env::var(THREADS_ENV) {
        match t.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => warn!("ignoring {THREADS_ENV}={t}"),
        }
    }
    let result = match cli.command {
        Command::Solve { config, resume, out } => cmd_solve(&config, resume.as_deref(), out),
        Command::Analyze {
            checkpoint,
            tail,
            decay,
            mu,
            out,
        } => cmd_analyze(&checkpoint, tail, decay, mu, out),
        Command::Probe {
            checkpoint,
            slices,
            radius,
            out,
        } => cmd_probe(&checkpoint, slices, radius, out),
        Command::KernelTest { config, out } => cmd_kernel_test(&config, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
