//! Command-line driver.
//!
//! Exit codes: 0 success, 1 config or input error, 2 only inconclusive
//! results, 3 every certificate fails, 4 an issued envelope was violated or
//! the blow-up oracles disagree.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};

use crate::certificates::{
    check_bounded, check_decay, check_global_bound, check_lyapunov, check_small_data, check_zeta_certificate,
    default_small_data_constant, perturbation_budget_check, search_omega, search_q, Certificate, Envelope, Failure,
    Verdict, CSV_HEADER,
};
use crate::coefficients::config::{load_config, CertificateParams, Config};
use crate::coefficients::{Problem, ProblemSpec};
use crate::comparison::{integrate_comparison, verify_oracle_agreement, OracleAgreement};
use crate::error::{Error, Result};
use crate::ode::IntegratorConfig;
use crate::systems::{build_sharp_system, check_envelope, integrate_system, SystemOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_ALL_FAIL: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

/// Default `eps` for the Lyapunov check when the config does not set one.
pub const DEFAULT_EPS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    /// Run every certificate check and write the report and CSV.
    Check,
    /// Integrate the scalar oracle and a sharp test system and check envelopes.
    Simulate,
    /// Estimate the blow-up time and cross-check it with the integrator.
    Blowup,
    /// Check and simulate in one run.
    Report,
}

impl Subcommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Check => "check",
            Subcommand::Simulate => "simulate",
            Subcommand::Blowup => "blowup",
            Subcommand::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "evostab", version, about = "Stability certificates and numerical oracles for nonlinear evolution equations")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Subcommand,
    /// Profile config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub quad_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Dimension of the sharp test system.
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use G = alpha |u|^(p-1) u (requires p >= 2).
    #[arg(long)]
    pub worst_case: bool,
    /// Align the forcing with the state.
    #[arg(long)]
    pub adversarial_forcing: bool,
    /// Run every config file in this directory, one worker per file.
    #[arg(long)]
    pub batch: Option<PathBuf>,
    /// Multiply issued envelopes by this factor (fault injection).
    #[arg(long, hide = true)]
    pub corrupt_envelope: Option<f64>,
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub subcommand: Subcommand,
    pub config: PathBuf,
    pub out: PathBuf,
    pub horizon: Option<f64>,
    pub quad_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub dim: usize,
    pub seed: u64,
    pub worst_case: bool,
    pub adversarial_forcing: bool,
    pub corrupt_envelope: Option<f64>,
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(subcommand: Subcommand, config: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunManifest {
            subcommand,
            config: config.into(),
            out: out.into(),
            horizon: None,
            quad_tol: None,
            rel_tol: None,
            dim: 4,
            seed: 0,
            worst_case: false,
            adversarial_forcing: false,
            corrupt_envelope: None,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    fn from_cli(cli: &Cli, config: PathBuf, out: PathBuf) -> Self {
        RunManifest {
            horizon: cli.horizon,
            quad_tol: cli.quad_tol,
            rel_tol: cli.rel_tol,
            dim: cli.dim,
            seed: cli.seed,
            worst_case: cli.worst_case,
            adversarial_forcing: cli.adversarial_forcing,
            corrupt_envelope: cli.corrupt_envelope,
            ..RunManifest::new(cli.command, config, out)
        }
    }

    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("default".to_string(), |x| x.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "subcommand = {}", self.subcommand.as_str());
        let _ = writeln!(s, "config = {}", self.config.display());
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "horizon = {}", opt(self.horizon));
        let _ = writeln!(s, "quad_tol = {}", opt(self.quad_tol));
        let _ = writeln!(s, "rel_tol = {}", opt(self.rel_tol));
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "worst_case = {}", self.worst_case);
        let _ = writeln!(s, "adversarial_forcing = {}", self.adversarial_forcing);
        if let Some(f) = self.corrupt_envelope {
            let _ = writeln!(s, "corrupt_envelope = {f}");
        }
        let _ = writeln!(s, "timestamp = {}", self.timestamp);
        s
    }

    fn integrator(&self) -> IntegratorConfig {
        let cfg = IntegratorConfig::default();
        match self.rel_tol {
            Some(r) => cfg.with_rel_tol(r),
            None => cfg,
        }
    }
}

/// Loads the config and applies the manifest overrides.
pub fn load_run_config(m: &RunManifest) -> Result<Config> {
    let text = fs::read_to_string(&m.config).map_err(|e| Error::Io(format!("{}: {e}", m.config.display())))?;
    let mut cfg = load_config(&text)?;
    if m.horizon.is_some() || m.quad_tol.is_some() {
        let s = &cfg.spec;
        let mut numerics = s.numerics;
        if let Some(q) = m.quad_tol {
            numerics.quad_tol = q;
        }
        cfg.spec = ProblemSpec::new(
            s.profile.clone(),
            s.g0,
            m.horizon.unwrap_or(s.horizon),
            s.tail,
            numerics,
        )?;
    }
    Ok(cfg)
}

/// Results of running every checker on one problem.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub certificates: Vec<Certificate>,
    pub notes: Vec<String>,
}

impl CheckOutcome {
    /// Whether a certificate supports a stability conclusion. The zeta
    /// envelope only counts when zeta itself stays bounded; the perturbation
    /// budget is a side condition, not a conclusion.
    fn counts(c: &Certificate) -> bool {
        match c {
            Certificate::PerturbationBudget(_) => false,
            Certificate::Zeta(z) => z.bounded_flag,
            _ => true,
        }
    }

    pub fn exit_code(&self) -> i32 {
        let counted: Vec<&Certificate> = self.certificates.iter().filter(|c| Self::counts(c)).collect();
        if counted.iter().any(|c| c.verdict().is_positive()) {
            EXIT_OK
        } else if !self.notes.is_empty()
            || counted
                .iter()
                .any(|c| matches!(c.verdict(), Verdict::Inconclusive | Verdict::Marginal))
        {
            EXIT_INCONCLUSIVE
        } else {
            EXIT_ALL_FAIL
        }
    }

    pub fn find(&self, id: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.id() == id)
    }

    /// Envelopes from certificates whose verdict holds.
    pub fn held_envelopes(&self) -> Vec<(&'static str, &Envelope)> {
        self.certificates
            .iter()
            .filter(|c| c.verdict() == Verdict::Holds)
            .filter_map(|c| c.envelope().map(|e| (c.id(), e)))
            .collect()
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        for c in &self.certificates {
            s.push_str(&c.report());
            s.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(s, "note = {n}");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(CSV_HEADER)?;
        for c in &self.certificates {
            w.write_record(c.csv_record())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the Lyapunov, perturbation-budget, global-bound, small-data, zeta,
/// boundedness and decay checks. Free parameters not fixed in `params` are
/// searched.
pub fn run_checks(problem: &Problem, params: &CertificateParams) -> Result<CheckOutcome> {
    let eps = params.eps.unwrap_or(DEFAULT_EPS);
    let mut certificates = vec![
        Certificate::Lyapunov(check_lyapunov(problem, eps)?),
        Certificate::PerturbationBudget(perturbation_budget_check(problem, eps)?),
    ];
    let global = match params.omega {
        Some(w) => check_global_bound(problem, w)?,
        None => search_omega(problem)?.certificate,
    };
    certificates.push(Certificate::GlobalBound(global));
    let c = params.small_data_c.unwrap_or_else(|| default_small_data_constant(problem));
    certificates.push(Certificate::SmallData(check_small_data(problem, c)?));

    let mut notes = Vec::new();
    if problem.g0() == 0.0 {
        notes.push("zeta, bounded and decay checks skipped: they require g0 > 0".into());
        return Ok(CheckOutcome { certificates, notes });
    }
    let zeta = match params.q {
        Some(q) => check_zeta_certificate(problem, q)?,
        None => search_q(problem)?.certificate,
    };
    let precondition = zeta.verdict == Verdict::Holds;
    let q = zeta.q;
    certificates.push(Certificate::Zeta(zeta));

    let unmet = |caveats: &mut Vec<String>| {
        caveats.push(format!("zeta inequality fails (best q = {q}); conclusion does not apply"));
    };
    let mut bounded = check_bounded(problem)?;
    if !precondition {
        bounded.verdict = Verdict::Fails;
        unmet(&mut bounded.caveats);
    }
    certificates.push(Certificate::Bounded(bounded));
    match check_decay(problem) {
        Ok(mut d) => {
            if !precondition {
                d.verdict = Verdict::Fails;
                unmet(&mut d.caveats);
                d.failure.get_or_insert(Failure::NotDecaying("zeta inequality fails".into()));
            }
            certificates.push(Certificate::Decay(d));
        }
        Err(e) if precondition => notes.push(format!("decay check not applicable: {e}")),
        Err(_) => {}
    }
    Ok(CheckOutcome { certificates, notes })
}

fn prepare_out(m: &RunManifest) -> Result<()> {
    fs::create_dir_all(&m.out)?;
    fs::write(m.out.join("manifest.txt"), m.render())?;
    Ok(())
}

fn report_header(m: &RunManifest, cfg: &Config) -> String {
    let s = &cfg.spec;
    let mut h = String::new();
    let _ = writeln!(h, "[run]");
    let _ = writeln!(h, "subcommand = {}", m.subcommand.as_str());
    let _ = writeln!(h, "profile = {}", s.profile);
    let _ = writeln!(h, "g0 = {}", s.g0);
    let _ = writeln!(h, "horizon = {}", s.horizon);
    let _ = writeln!(h, "tail = {}", s.tail);
    h.push('\n');
    h
}

fn check_core(m: &RunManifest, cfg: &Config, problem: &Problem) -> Result<(i32, String)> {
    let outcome = run_checks(problem, &cfg.params)?;
    outcome.write_csv(&m.out.join("certificates.csv"))?;
    let code = outcome.exit_code();
    let mut text = outcome.report();
    let _ = writeln!(text, "check_exit_code = {code}");
    Ok((code, text))
}

fn simulate_core(m: &RunManifest, cfg: &Config, problem: &Problem) -> Result<(i32, String)> {
    let icfg = m.integrator();
    let opts = SystemOptions {
        worst_case: m.worst_case,
        adversarial_forcing: m.adversarial_forcing,
    };
    let system = build_sharp_system(&cfg.spec, m.dim, m.seed, opts)?;
    let scalar = integrate_comparison(&cfg.spec, &icfg)?;
    let vector = integrate_system(&system, &icfg)?;
    scalar.write_csv(fs::File::create(m.out.join("trajectory_scalar.csv"))?)?;
    vector.write_csv(fs::File::create(m.out.join("trajectory_vector.csv"))?)?;
    let mut manifest = m.render();
    manifest.push_str("\n[system]\n");
    manifest.push_str(&system.manifest());
    fs::write(m.out.join("manifest.txt"), manifest)?;

    let outcome = run_checks(problem, &cfg.params)?;
    let mut text = String::from("[simulation]\n");
    let _ = writeln!(text, "dim = {}", m.dim);
    let _ = writeln!(text, "seed = {}", m.seed);
    let _ = writeln!(text, "scalar_final = {}", scalar.last());
    let _ = writeln!(text, "vector_final_norm = {}", vector.norms.last().unwrap());
    for (name, b) in [("scalar", &scalar.blowup), ("vector", &vector.blowup)] {
        match b {
            Some(ev) => {
                let _ = writeln!(
                    text,
                    "{name}_blowup = {} (bracket [{}, {}], step_collapse = {})",
                    ev.time, ev.bracket.0, ev.bracket.1, ev.step_collapse
                );
            }
            None => {
                let _ = writeln!(text, "{name}_blowup = none");
            }
        }
    }
    let mut violated = false;
    let envelopes = outcome.held_envelopes();
    if envelopes.is_empty() {
        let _ = writeln!(text, "envelopes = none issued");
    }
    for (id, env) in envelopes {
        let env = match m.corrupt_envelope {
            Some(f) => env.clone().scaled(f),
            None => env.clone(),
        };
        for (name, times, norms) in [
            ("vector", &vector.times, &vector.norms),
            ("scalar", &scalar.times, &scalar.values),
        ] {
            let chk = check_envelope(times, norms, &env)?;
            violated |= !chk.holds;
            let _ = writeln!(
                text,
                "envelope.{id}.{name} = {} (worst_margin = {}, worst_time = {})",
                if chk.holds { "respected" } else { "VIOLATED" },
                chk.worst_margin,
                chk.worst_time
            );
        }
    }
    let code = if violated { EXIT_VIOLATION } else { EXIT_OK };
    let _ = writeln!(text, "simulate_exit_code = {code}");
    Ok((code, text))
}

fn blowup_core(m: &RunManifest, cfg: &Config, problem: &Problem) -> Result<(i32, String)> {
    if !cfg.spec.profile.beta_is_zero() {
        return Err(Error::ProfileHasBeta);
    }
    let est = crate::certificates::estimate_blowup_time(problem)?;
    let icfg = m.integrator();
    let scalar = integrate_comparison(&cfg.spec, &icfg)?;
    scalar.write_csv(fs::File::create(m.out.join("trajectory_scalar.csv"))?)?;

    let mut text = String::from("[blowup]\n");
    match est.t0 {
        Some(t0) => {
            let (a, b) = est.bracket.unwrap();
            let _ = writeln!(text, "t0 = {t0}");
            let _ = writeln!(text, "bracket = [{a}, {b}]");
        }
        None => {
            let _ = writeln!(text, "t0 = no blow-up within horizon");
        }
    }
    let _ = writeln!(text, "residual = {}", est.residual);
    for c in &est.caveats {
        let _ = writeln!(text, "caveat = {c}");
    }
    let code = match verify_oracle_agreement(problem, &icfg) {
        Ok(OracleAgreement::BlowUp { integrator, .. }) => {
            let _ = writeln!(text, "integrator_blowup = {integrator}");
            let _ = writeln!(text, "agreement = yes");
            EXIT_OK
        }
        Ok(OracleAgreement::Trajectory { max_rel_error, .. }) => {
            let _ = writeln!(text, "integrator_blowup = none");
            let _ = writeln!(text, "max_rel_error = {max_rel_error}");
            let _ = writeln!(text, "agreement = yes");
            EXIT_OK
        }
        Err(e @ Error::BlowUpDisagreement { .. }) => {
            let _ = writeln!(text, "agreement = no ({e})");
            EXIT_VIOLATION
        }
        Err(e) => return Err(e),
    };
    Ok((code, text))
}

fn execute(m: &RunManifest) -> Result<(i32, String)> {
    let cfg = load_run_config(m)?;
    let problem = cfg.spec.clone().prepare()?;
    prepare_out(m)?;
    let mut text = report_header(m, &cfg);
    let code = match m.subcommand {
        Subcommand::Check => {
            let (c, t) = check_core(m, &cfg, &problem)?;
            text.push_str(&t);
            c
        }
        Subcommand::Simulate => {
            let (c, t) = simulate_core(m, &cfg, &problem)?;
            text.push_str(&t);
            c
        }
        Subcommand::Blowup => {
            let (c, t) = blowup_core(m, &cfg, &problem)?;
            text.push_str(&t);
            c
        }
        Subcommand::Report => {
            let (c1, t1) = check_core(m, &cfg, &problem)?;
            let (c2, t2) = simulate_core(m, &cfg, &problem)?;
            text.push_str(&t1);
            text.push('\n');
            text.push_str(&t2);
            if c2 == EXIT_VIOLATION {
                c2
            } else {
                c1
            }
        }
    };
    fs::write(m.out.join("report.txt"), &text)?;
    Ok((code, text))
}

/// Runs one manifest; errors go to standard error and give exit code 1.
pub fn run_manifest(m: &RunManifest) -> i32 {
    match execute(m) {
        Ok((code, text)) => {
            print!("{text}");
            code
        }
        Err(e) => {
            eprintln!("error: {}: {e}", m.config.display());
            EXIT_INPUT
        }
    }
}

pub fn cmd_check(m: &RunManifest) -> i32 {
    run_manifest(&RunManifest {
        subcommand: Subcommand::Check,
        ..m.clone()
    })
}

pub fn cmd_simulate(m: &RunManifest) -> i32 {
    run_manifest(&RunManifest {
        subcommand: Subcommand::Simulate,
        ..m.clone()
    })
}

pub fn cmd_blowup(m: &RunManifest) -> i32 {
    run_manifest(&RunManifest {
        subcommand: Subcommand::Blowup,
        ..m.clone()
    })
}

pub fn cmd_report(m: &RunManifest) -> i32 {
    run_manifest(&RunManifest {
        subcommand: Subcommand::Report,
        ..m.clone()
    })
}

fn batch_configs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// Entry point used by the binary.
pub fn run(cli: &Cli) -> i32 {
    if let Some(dir) = &cli.batch {
        let files = match batch_configs(dir) {
            Ok(f) if !f.is_empty() => f,
            Ok(_) => {
                eprintln!("error: no config files in {}", dir.display());
                return EXIT_INPUT;
            }
            Err(e) => {
                eprintln!("error: {}: {e}", dir.display());
                return EXIT_INPUT;
            }
        };
        let manifests: Vec<RunManifest> = files
            .iter()
            .map(|f| {
                let stem = f.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
                RunManifest::from_cli(cli, f.clone(), cli.out.join(stem))
            })
            .collect();
        return std::thread::scope(|s| {
            let handles: Vec<_> = manifests.iter().map(|m| s.spawn(|| run_manifest(m))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or(EXIT_INPUT))
                .max()
                .unwrap_or(EXIT_OK)
        });
    }
    let Some(config) = &cli.config else {
        eprintln!("error: --config or --batch is required");
        return EXIT_INPUT;
    };
    run_manifest(&RunManifest::from_cli(cli, config.clone(), cli.out.clone()))
}
