//! Config-driven command-line front end: `run` executes a named pipeline and
//! writes artifacts, `validate` dry-checks a config.
//!
//! All frequencies in config files are ordinary frequencies in Hz (fields
//! carry a `_hz` suffix); conversion to angular units happens exactly once
//! at load time. Delays in configs are microseconds (`_us`).

use std::f64::consts::TAU;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{phase_grid, run_interferometry, run_ringdown};
use crate::hilbert;
use crate::lindblad::{EvolveOptions, SystemConfig};
use crate::montecarlo::{resample_pn, ResampleConfig};
use crate::readout::{
    fit_double_exp, fit_interference, fit_ramsey, fit_t2m, PhononDistribution, RamseyHints,
    RamseySignal,
};
use crate::tlsparams::{
    bvd_admittance, elastic_dipole, estimate_tls_count, sample_tls_distributions,
    tls_coupling_rate, zero_point_displacement, zero_point_strain, BvdParams, MaterialConstants,
    ModeField, TlsSampleConfig, HBAR,
};
use crate::C64;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "PHONON_TLS_OUT_DIR";

const EXPERIMENTS: &[&str] = &[
    "ringdown",
    "interferometry",
    "ramsey-fit",
    "tls-params",
    "mc-report",
    "bvd-sweep",
];

#[derive(Parser, Debug)]
#[command(name = "phonon-tls", version, about = "Phononic-crystal TLS decoherence toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute the pipeline named in the config and write artifacts.
    Run(RunArgs),
    /// Check a config (schema, truncation safety, dimension guard) without
    /// computing anything.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: $PHONON_TLS_OUT_DIR, then the working dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread budget; pipelines in this build run sequentially, the
    /// value is recorded in the manifest.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory of previously written artifacts to check against this
    /// config's hash.
    #[arg(long)]
    check_artifacts: Option<PathBuf>,
}

// exit codes: 2 config/schema, 3 numerical, 4 I/O
fn error_exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Serialization(_) => 4,
        Error::StepSizeUnderflow { .. }
        | Error::MaxStepsExceeded(_)
        | Error::FitNonConvergence(_)
        | Error::RankDeficientJacobian(_)
        | Error::Numerical(_) => 3,
        _ => 2,
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(&args),
        Command::Validate(args) => validate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e))
        }
    }
}

// ---------------------------------------------------------------------------
// config schema

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: Option<u64>,
    pub system: Option<SystemSection>,
    pub sweep: Option<SweepSection>,
    pub tolerances: Option<ToleranceSection>,
    pub io: Option<IoSection>,
    pub ramsey: Option<RamseySection>,
    pub material: Option<MaterialSection>,
    pub bvd: Option<BvdSection>,
    pub mc: Option<McSection>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n_tls: usize,
    pub g_tls_hz: f64,
    pub delta_tls_hz: f64,
    pub gamma1_hz: f64,
    pub gamma2_hz: f64,
    pub n_th: f64,
    pub n_max: usize,
}

impl SystemSection {
    pub fn to_angular(self) -> SystemConfig {
        SystemConfig {
            n_tls: self.n_tls,
            g_tls: TAU * self.g_tls_hz,
            delta_tls: TAU * self.delta_tls_hz,
            gamma1: TAU * self.gamma1_hz,
            gamma2: TAU * self.gamma2_hz,
            n_th: self.n_th,
            n_max: self.n_max,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Displacement amplitude |α| (real, phase 0).
    pub alpha: Option<f64>,
    /// Explicit delay list (µs), strictly increasing.
    pub taus_us: Option<Vec<f64>>,
    /// Alternative to `taus_us`: n_taus points evenly spaced on [0, tau_max_us].
    pub tau_max_us: Option<f64>,
    pub n_taus: Option<usize>,
    /// Fringe phase count for interferometry (default 24).
    pub n_phis: Option<usize>,
}

impl SweepSection {
    fn taus_seconds(&self) -> Result<Vec<f64>> {
        if let Some(us) = &self.taus_us {
            return Ok(us.iter().map(|t| t * 1e-6).collect());
        }
        match (self.tau_max_us, self.n_taus) {
            (Some(max_us), Some(n)) if n >= 2 => {
                let step = max_us * 1e-6 / (n - 1) as f64;
                Ok((0..n).map(|i| i as f64 * step).collect())
            }
            _ => Err(Error::Config(
                "sweep needs either taus_us or (tau_max_us, n_taus >= 2)".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub max_steps: Option<usize>,
}

impl ToleranceSection {
    fn to_options(self) -> EvolveOptions {
        let mut opts = EvolveOptions::default();
        if let Some(r) = self.rtol {
            opts.rtol = r;
        }
        if let Some(a) = self.atol {
            opts.atol = a;
        }
        if let Some(m) = self.max_steps {
            opts.max_steps = m;
        }
        opts
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    /// Input data file (experiment-specific meaning).
    pub input: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseySection {
    pub n_max: usize,
    pub omega0_hz: Option<f64>,
    pub chi_hz: Option<f64>,
    pub kappa_hz: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub rho: f64,
    pub v: f64,
    pub p0: f64,
    pub delta0: f64,
    /// Resonator volume (m³) for the TLS-count estimate.
    pub volume_m3: f64,
    pub gamma2_hz: f64,
    /// Zero-point strain, unless derived from a mode-field file.
    pub xi_zpf: Option<f64>,
    pub mode_field_csv: Option<PathBuf>,
    /// Mode frequency, required with `mode_field_csv`.
    pub omega_m_hz: Option<f64>,
    pub n_samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvdSection {
    pub c0_f: Option<f64>,
    pub cm_f: Option<f64>,
    pub lm_h: Option<f64>,
    pub rm_ohm: Option<f64>,
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub n_points: usize,
}

impl BvdSection {
    fn params(&self) -> BvdParams {
        let d = BvdParams::default();
        BvdParams {
            c0: self.c0_f.unwrap_or(d.c0),
            cm: self.cm_f.unwrap_or(d.cm),
            lm: self.lm_h.unwrap_or(d.lm),
            rm: self.rm_ohm.unwrap_or(d.rm),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub probs: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub n_iterations: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<(RunConfig, String)> {
    let bytes = fs::read(path)?;
    let hash = hex_digest(&bytes);
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Config("config file is not valid UTF-8".into()))?;
    let cfg: RunConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
    if !EXPERIMENTS.contains(&cfg.experiment.as_str()) {
        return Err(Error::Config(format!(
            "unknown experiment `{}`; expected one of {}",
            cfg.experiment,
            EXPERIMENTS.join(", ")
        )));
    }
    Ok((cfg, hash))
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// artifacts

struct Artifacts {
    config_hash: String,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new(config_hash: &str) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            files: Vec::new(),
        }
    }

    /// CSV artifact; the config hash rides in a leading comment line.
    fn add_csv(&mut self, name: &str, body: Vec<u8>) {
        let mut out = format!("# config_hash={}\n", self.config_hash).into_bytes();
        out.extend(body);
        self.files.push((name.to_string(), out));
    }

    fn add_json(&mut self, name: &str, mut value: serde_json::Value) -> Result<()> {
        value["config_hash"] = serde_json::Value::String(self.config_hash.clone());
        let text = serde_json::to_string_pretty(&value)?;
        self.files.push((name.to_string(), text.into_bytes()));
        Ok(())
    }

    /// Write everything at once, so a failed pipeline leaves no partial set.
    fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }

    fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }
}

fn resolve_out_dir(flag: &Option<PathBuf>) -> PathBuf {
    if let Some(p) = flag {
        return p.clone();
    }
    if let Ok(env) = std::env::var(OUT_DIR_ENV) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from(".")
}

// ---------------------------------------------------------------------------
// run

fn run(args: &RunArgs) -> Result<()> {
    let started = Instant::now();
    let (mut cfg, hash) = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    let seed = cfg.seed.unwrap_or(0);
    let out_dir = resolve_out_dir(&args.out_dir);

    let mut artifacts = Artifacts::new(&hash);
    match cfg.experiment.as_str() {
        "ringdown" => pipeline_ringdown(&cfg, &mut artifacts)?,
        "interferometry" => pipeline_interferometry(&cfg, &mut artifacts)?,
        "ramsey-fit" => pipeline_ramsey_fit(&cfg, &mut artifacts)?,
        "tls-params" => pipeline_tls_params(&cfg, seed, &mut artifacts)?,
        "mc-report" => pipeline_mc_report(&cfg, seed, &mut artifacts)?,
        "bvd-sweep" => pipeline_bvd_sweep(&cfg, &mut artifacts)?,
        other => return Err(Error::Config(format!("unknown experiment `{other}`"))),
    }

    let manifest = serde_json::json!({
        "experiment": cfg.experiment,
        "config_hash": hash,
        "seed": seed,
        "threads": args.threads,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "artifacts": artifacts.names(),
        "config": serde_json::to_value(&cfg)?,
    });
    artifacts
        .files
        .push(("manifest.json".into(), serde_json::to_string_pretty(&manifest)?.into_bytes()));
    artifacts.write_all(&out_dir)?;
    println!(
        "{}: wrote {} artifact(s) to {}",
        cfg.experiment,
        artifacts.files.len(),
        out_dir.display()
    );
    Ok(())
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing required [{name}] section")))
}

fn pipeline_ringdown(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<()> {
    let system = require(&cfg.system, "system")?.to_angular();
    let sweep = require(&cfg.sweep, "sweep")?;
    let alpha = sweep
        .alpha
        .ok_or_else(|| Error::Config("sweep.alpha is required for ringdown".into()))?;
    let taus = sweep.taus_seconds()?;
    let opts = cfg.tolerances.map(|t| t.to_options()).unwrap_or_default();

    let ds = run_ringdown(&system, C64::new(alpha, 0.0), &taus, &opts)?;
    let fit = fit_double_exp(&ds.taus, &ds.nbar, None)?;

    let mut csv = Vec::new();
    ds.write_csv(&mut csv)?;
    artifacts.add_csv("ringdown.csv", csv);
    artifacts.add_json(
        "double_exp_fit.json",
        serde_json::json!({ "fit": fit.to_json() }),
    )?;
    Ok(())
}

fn pipeline_interferometry(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<()> {
    let system = require(&cfg.system, "system")?.to_angular();
    let sweep = require(&cfg.sweep, "sweep")?;
    let alpha = sweep
        .alpha
        .ok_or_else(|| Error::Config("sweep.alpha is required for interferometry".into()))?;
    let taus = sweep.taus_seconds()?;
    let phis = phase_grid(sweep.n_phis.unwrap_or(24));
    let opts = cfg.tolerances.map(|t| t.to_options()).unwrap_or_default();

    let ds = run_interferometry(&system, C64::new(alpha, 0.0), &taus, &phis, &opts)?;

    let mut fringe_fits = Vec::new();
    let mut amps = Vec::new();
    for (i, &tau) in ds.taus.iter().enumerate() {
        let fit = fit_interference(&ds.phis, &ds.fringe(i))?;
        amps.push(fit.value("amplitude").unwrap());
        fringe_fits.push(serde_json::json!({ "tau_s": tau, "fit": fit.to_json() }));
    }
    let t2m = fit_t2m(&ds.taus, &amps)?;

    let mut csv = Vec::new();
    ds.write_csv(&mut csv)?;
    artifacts.add_csv("interferometry.csv", csv);
    artifacts.add_json(
        "interference_fits.json",
        serde_json::json!({ "fits": fringe_fits }),
    )?;
    artifacts.add_json("t2m_fit.json", serde_json::json!({ "fit": t2m.to_json() }))?;
    Ok(())
}

/// Read a two-column `time_s,signal` CSV; lines starting with `#` are
/// skipped.
fn read_signal_csv(path: &Path) -> Result<RamseySignal> {
    let file = fs::File::open(path)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut saw_header = false;
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            if trimmed.replace(' ', "") != "time_s,signal" {
                return Err(Error::Config(format!(
                    "signal file header must be `time_s,signal`, got `{trimmed}`"
                )));
            }
            saw_header = true;
            continue;
        }
        let mut cols = trimmed.split(',');
        let t: f64 = cols
            .next()
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Config("bad time value in signal file".into()))?;
        let v: f64 = cols
            .next()
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Config("bad signal value in signal file".into()))?;
        times.push(t);
        values.push(v);
    }
    RamseySignal::new(times, values)
}

fn pipeline_ramsey_fit(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<()> {
    let ramsey = cfg
        .ramsey
        .ok_or_else(|| Error::Config("missing required [ramsey] section".into()))?;
    let io = require(&cfg.io, "io")?;
    let input = io
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("io.input is required for ramsey-fit".into()))?;
    let signal = read_signal_csv(input)?;
    let hints = RamseyHints {
        omega0: ramsey.omega0_hz.map(|f| TAU * f),
        chi: ramsey.chi_hz.map(|f| TAU * f),
        kappa: ramsey.kappa_hz.map(|f| TAU * f),
    };
    let (pn, fit) = fit_ramsey(&signal, ramsey.n_max, &hints)?;
    artifacts.add_json(
        "ramsey_fit.json",
        serde_json::json!({
            "pn": pn.probs,
            "pn_sigmas": pn.sigmas,
            "nbar": pn.mean(),
            "fit": fit.to_json(),
        }),
    )?;
    Ok(())
}

fn pipeline_tls_params(cfg: &RunConfig, seed: u64, artifacts: &mut Artifacts) -> Result<()> {
    let m = require(&cfg.material, "material")?;
    let mat = MaterialConstants {
        rho: m.rho,
        v: m.v,
        p0: m.p0,
        delta0: m.delta0,
        hbar: HBAR,
    };
    mat.validate()?;

    let (m_eff, x_zpf, xi_zpf) = if let Some(path) = &m.mode_field_csv {
        let omega_m = TAU * m.omega_m_hz.ok_or_else(|| {
            Error::Config("material.omega_m_hz is required with mode_field_csv".into())
        })?;
        let field = ModeField::from_csv(fs::File::open(path)?, omega_m)?;
        let m_eff = crate::tlsparams::effective_mass(&field, mat.rho)?;
        let x_zpf = zero_point_displacement(m_eff, omega_m)?;
        let xi = zero_point_strain(&field, x_zpf)?;
        (Some(m_eff), Some(x_zpf), xi)
    } else {
        let xi = m.xi_zpf.ok_or_else(|| {
            Error::Config("material needs either xi_zpf or mode_field_csv".into())
        })?;
        (None, None, xi)
    };

    let gamma = elastic_dipole(&mat)?;
    let g_tls = tls_coupling_rate(gamma, xi_zpf, HBAR)?;
    let delta_omega = g_tls.max(TAU * m.gamma2_hz);
    let n_est = estimate_tls_count(mat.p0, m.volume_m3, delta_omega, HBAR)?;

    let sample_cfg = TlsSampleConfig {
        n_samples: m.n_samples.unwrap_or(10_000),
        rho: mat.rho,
        v: mat.v,
        xi_zpf,
        ..TlsSampleConfig::default()
    };
    let samples = sample_tls_distributions(&sample_cfg, seed)?;

    artifacts.add_json(
        "tls_params.json",
        serde_json::json!({
            "m_eff_kg": m_eff,
            "x_zpf_m": x_zpf,
            "xi_zpf": xi_zpf,
            "gamma_j": gamma,
            "g_tls_rad_per_s": g_tls,
            "g_tls_hz": g_tls / TAU,
            "delta_omega_rad_per_s": delta_omega,
            "n_tls_estimate": n_est,
            "sampled_median_g_tls_hz": samples.median_g_tls() / TAU,
        }),
    )?;

    let mut csv = String::from("gamma_j,g_tls_rad_per_s\n");
    for (g, r) in samples.gamma.iter().zip(&samples.g_tls) {
        csv.push_str(&format!("{g},{r}\n"));
    }
    artifacts.add_csv("tls_samples.csv", csv.into_bytes());
    Ok(())
}

fn pipeline_mc_report(cfg: &RunConfig, seed: u64, artifacts: &mut Artifacts) -> Result<()> {
    let mc = require(&cfg.mc, "mc")?;
    let pn = PhononDistribution {
        probs: mc.probs.clone(),
        sigmas: mc.sigmas.clone(),
    };
    let rcfg = ResampleConfig {
        n_iterations: mc.n_iterations.unwrap_or(2000),
        seed,
    };
    let report = resample_pn(&pn, &rcfg)?;
    artifacts.add_json("mc_report.json", serde_json::to_value(&report)?)?;
    Ok(())
}

fn pipeline_bvd_sweep(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<()> {
    let section = require(&cfg.bvd, "bvd")?;
    if section.n_points < 2 || !(section.f_stop_hz > section.f_start_hz) || section.f_start_hz <= 0.0
    {
        return Err(Error::Config(
            "bvd sweep needs 0 < f_start_hz < f_stop_hz and n_points >= 2".into(),
        ));
    }
    let p = section.params();
    p.validate()?;
    let step = (section.f_stop_hz - section.f_start_hz) / (section.n_points - 1) as f64;
    let mut csv = String::from("freq_hz,re_Y,im_Y\n");
    let mut any_pole = false;
    for i in 0..section.n_points {
        let f = section.f_start_hz + i as f64 * step;
        let y = bvd_admittance(TAU * f, &p)?;
        any_pole |= y.at_pole;
        csv.push_str(&format!("{},{},{}\n", f, y.value.re, y.value.im));
    }
    artifacts.add_csv("bvd_sweep.csv", csv.into_bytes());
    artifacts.add_json(
        "bvd_summary.json",
        serde_json::json!({
            "series_resonance_hz": p.series_resonance_hz(),
            "lossless_pole_sampled": any_pole,
            "params": serde_json::to_value(p)?,
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// validate

fn validate(args: &ValidateArgs) -> Result<()> {
    let (cfg, hash) = load_config(&args.config)?;

    if let Some(system) = cfg.system {
        let angular = system.to_angular();
        angular.validate()?;
        if let Some(sweep) = &cfg.sweep {
            sweep.taus_seconds()?;
            if let Some(alpha) = sweep.alpha {
                let worst = if cfg.experiment == "interferometry" {
                    2.0 * alpha
                } else {
                    alpha
                };
                hilbert::check_truncation_safety(worst.abs(), system.n_max)?;
            }
        }
    }
    match cfg.experiment.as_str() {
        "mc-report" => {
            let mc = require(&cfg.mc, "mc")?;
            if mc.probs.len() != mc.sigmas.len() {
                return Err(Error::Config("mc.probs and mc.sigmas differ in length".into()));
            }
        }
        "tls-params" => {
            require(&cfg.material, "material")?;
        }
        "bvd-sweep" => {
            require(&cfg.bvd, "bvd")?;
        }
        "ramsey-fit" => {
            require(&cfg.ramsey, "ramsey")?;
            require(&cfg.io, "io")?;
        }
        _ => {}
    }

    if let Some(dir) = &args.check_artifacts {
        check_artifacts(dir, &hash)?;
    }

    println!("OK");
    println!("config_hash = {hash}");
    print!("{}", toml::to_string_pretty(&cfg).map_err(|e| Error::Config(e.to_string()))?);
    Ok(())
}

/// Verify that every CSV/JSON artifact in `dir` embeds `hash`.
fn check_artifacts(dir: &Path, hash: &str) -> Result<()> {
    let mut checked = 0usize;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        let embedded = if name.ends_with(".csv") {
            let text = fs::read_to_string(&path)?;
            text.lines()
                .next()
                .and_then(|l| l.strip_prefix("# config_hash="))
                .map(str::to_string)
        } else if name.ends_with(".json") {
            let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
            v.get("config_hash")
                .and_then(|h| h.as_str())
                .map(str::to_string)
        } else {
            continue;
        };
        match embedded {
            Some(h) if h == hash => checked += 1,
            Some(h) => {
                return Err(Error::Config(format!(
                    "stale artifact {name}: config_hash {h} != {hash}"
                )))
            }
            None => {
                return Err(Error::Config(format!(
                    "artifact {name} carries no config_hash"
                )))
            }
        }
    }
    println!("checked {checked} artifact(s) against config hash");
    Ok(())
}
