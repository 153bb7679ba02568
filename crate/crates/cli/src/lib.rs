//! Pipeline commands behind the `boost-dhp` binary.
//!
//! Every command writes into the run's output directory and reports each file
//! it writes through a callback, tagged with its kind.

pub mod config;
pub mod svg;

use boost_dhp::converter;
use boost_dhp::dhp::{DhpAgent, DhpController};
use boost_dhp::harness::{self, FixedDuty, LqrPlant, LqrTraining, Metrics, PiPolicy, Policy, Scenario};
use boost_dhp::identifier;
use boost_dhp::training::{self, TrainError};
use config::{ConfigError, ControllerKind, RunConfig};
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const PRETRAINED_DIR: &str = "pretrained";
pub const TRAINED_DIR: &str = "trained";
pub const DATASET_FILE: &str = "dataset.csv";
pub const CONFIG_ECHO_FILE: &str = "config.resolved";

/// LQR oracle tolerances: critic slope and policy gain.
pub const LQR_LAMBDA_TOLERANCE: f64 = 0.05;
pub const LQR_GAIN_TOLERANCE: f64 = 0.10;
pub const LQR_SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Simulate,
    Pretrain,
    Train,
    Evaluate,
    Compare,
    Validate,
}

impl Verb {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "simulate" => Verb::Simulate,
            "pretrain" => Verb::Pretrain,
            "train" => Verb::Train,
            "evaluate" => Verb::Evaluate,
            "compare" => Verb::Compare,
            "validate" => Verb::Validate,
            _ => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("missing {what}: {}", path.display())]
    Missing { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Numerical(String),
    #[error("{}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Missing { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Missing { .. } => "missing",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    /// Single-line `key=value` form for standard error.
    pub fn machine_line(&self) -> String {
        format!("error kind={} exit={} message={:?}", self.kind(), self.exit_code(), self.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<harness::HarnessError> for CliError {
    fn from(e: harness::HarnessError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub kind: &'static str,
    pub path: PathBuf,
}

impl std::fmt::Display for Artifact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.path.display())
    }
}

struct Writer<'a> {
    out: &'a Path,
    emit: &'a mut dyn FnMut(Artifact),
}

impl Writer<'_> {
    fn io(path: &Path, e: impl ToString) -> CliError {
        CliError::Io { path: path.to_path_buf(), msg: e.to_string() }
    }

    fn text(&mut self, kind: &'static str, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        fs::write(&path, body).map_err(|e| Self::io(&path, e))?;
        (self.emit)(Artifact { kind, path: path.clone() });
        Ok(path)
    }

    fn trace(&mut self, name: &str, trace: &[harness::TraceRow]) -> Result<(), CliError> {
        let path = self.out.join(name);
        let file = fs::File::create(&path).map_err(|e| Self::io(&path, e))?;
        harness::write_trace_csv(BufWriter::new(file), trace).map_err(|e| Self::io(&path, e))?;
        (self.emit)(Artifact { kind: "trace", path });
        Ok(())
    }

    fn bundle(&mut self, controller: &DhpController, dir: &str) -> Result<(), CliError> {
        let files = controller.save(&self.out.join(dir)).map_err(|e| CliError::Io { path: self.out.join(dir), msg: e.to_string() })?;
        for path in files {
            (self.emit)(Artifact { kind: "bundle", path });
        }
        Ok(())
    }
}

fn scenarios(cfg: &RunConfig) -> Result<Vec<Scenario>, CliError> {
    match &cfg.scenario {
        None => Ok(harness::builtin_scenarios(&cfg.params)?),
        Some(name) => harness::find_scenario(&cfg.params, name).map(|s| vec![s]).map_err(|e| CliError::Usage(e.to_string())),
    }
}

fn require_seed(cfg: &RunConfig, verb: &str) -> Result<u64, CliError> {
    cfg.seed.ok_or_else(|| CliError::Usage(format!("`{verb}` needs a seed (--seed or run.seed)")))
}

fn load_bundle(cfg: &RunConfig, dir: &str, what: &'static str) -> Result<DhpController, CliError> {
    let path = cfg.out.join(dir);
    if !path.join(boost_dhp::dhp::META_FILE).is_file() {
        return Err(CliError::Missing { what, path });
    }
    DhpController::load(&path, &cfg.plan.dhp).map_err(|e| CliError::Io { path, msg: e.to_string() })
}

fn load_dataset(cfg: &RunConfig) -> Result<Vec<identifier::TransitionSample>, CliError> {
    let path = cfg.out.join(DATASET_FILE);
    if !path.is_file() {
        return Err(CliError::Missing { what: "dataset (run `pretrain` first)", path });
    }
    let file = fs::File::open(&path).map_err(|e| Writer::io(&path, e))?;
    identifier::read_dataset_csv(std::io::BufReader::new(file)).map_err(|e| Writer::io(&path, e))
}

fn policy_for(kind: ControllerKind, scenario: &Scenario, cfg: &RunConfig, dhp: Option<&DhpController>) -> Result<Box<dyn Policy>, CliError> {
    Ok(match kind {
        ControllerKind::Pi => Box::new(PiPolicy::for_scenario(scenario, &cfg.params)?),
        ControllerKind::OpenLoop => {
            let plant = scenario.plant_at(&cfg.params, 0.0);
            let duty = converter::duty_for_voltage(scenario.v_ref.value_at(0.0), &plant).map_err(|e| CliError::Numerical(e.to_string()))?;
            Box::new(FixedDuty(duty))
        }
        ControllerKind::Dhp => {
            let c = dhp.ok_or_else(|| CliError::Usage("dhp controller requested without a bundle".into()))?;
            Box::new(DhpAgent::new(c.clone(), false))
        }
    })
}

fn run_one(scenario: &Scenario, policy: &mut dyn Policy, cfg: &RunConfig) -> Result<(harness::RunOutcome, Metrics), CliError> {
    let (run, metrics) = harness::run_scenario(scenario, policy, &cfg.params)?;
    if let Some(f) = &run.failure {
        return Err(CliError::Numerical(format!("{}: {f}", scenario.name)));
    }
    Ok((run, metrics))
}

/// Run `verb`, calling `emit` for every file written.
pub fn run_command(verb: Verb, cfg: &RunConfig, emit: &mut dyn FnMut(Artifact)) -> Result<(), CliError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| Writer::io(&cfg.out, e))?;
    let mut w = Writer { out: &cfg.out, emit };
    w.text("config", CONFIG_ECHO_FILE, &cfg.render())?;
    match verb {
        Verb::Simulate => simulate(cfg, &mut w),
        Verb::Pretrain => pretrain(cfg, &mut w),
        Verb::Train => train(cfg, &mut w),
        Verb::Evaluate => evaluate(cfg, &mut w),
        Verb::Compare => compare(cfg, &mut w),
        Verb::Validate => validate(&mut w),
    }
}

fn simulate(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let bundle = match cfg.controller {
        ControllerKind::Dhp => Some(load_bundle(cfg, TRAINED_DIR, "trained bundle (run `train` first)")?),
        _ => None,
    };
    let tag = cfg.controller.name();
    for s in scenarios(cfg)? {
        let mut policy = policy_for(cfg.controller, &s, cfg, bundle.as_ref())?;
        let (run, m) = run_one(&s, policy.as_mut(), cfg)?;
        w.trace(&format!("simulate_{}_{tag}.csv", s.name), &run.trace)?;
        w.text("metrics", &format!("simulate_{}_{tag}.metrics", s.name), &harness::metrics_summary(&s.name, tag, &m))?;
    }
    Ok(())
}

fn pretrain(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let seed = require_seed(cfg, "pretrain")?;
    let plan = cfg.plan.seeded(seed);
    let dataset = training::collect(&plan, &cfg.params)?;
    let path = w.out.join(DATASET_FILE);
    let file = fs::File::create(&path).map_err(|e| Writer::io(&path, e))?;
    identifier::write_dataset_csv(BufWriter::new(file), &dataset.samples).map_err(|e| Writer::io(&path, e))?;
    (w.emit)(Artifact { kind: "dataset", path });

    let fit = training::identify(&plan, &dataset)?;
    let mut log = String::new();
    let _ = writeln!(log, "dataset_samples = {}", dataset.samples.len());
    let _ = writeln!(log, "dataset_sha256 = {}", identifier::dataset_checksum(&dataset.samples));
    let _ = writeln!(log, "flagged_episodes = {:?}", dataset.flagged_episodes);
    let _ = writeln!(log, "holdout_rms_current = {:?}", fit.holdout_rms[0]);
    let _ = writeln!(log, "holdout_rms_voltage = {:?}", fit.holdout_rms[1]);
    let _ = writeln!(log, "meets_gate = {}", fit.meets_gate());
    let _ = writeln!(log, "final_loss = {:?}", fit.epoch_losses.last().copied().unwrap_or(f64::NAN));
    w.text("log", "model_fit.txt", &log)?;

    let (controller, report) = training::pretrain(&plan, &dataset, &fit, &cfg.params, seed)?;
    let mut csv = String::from("epoch,residual\n");
    for (k, r) in report.epoch_residuals.iter().enumerate() {
        let _ = writeln!(csv, "{},{r:.17e}", k + 1);
    }
    w.text("log", "pretrain_residuals.csv", &csv)?;
    w.bundle(&controller, PRETRAINED_DIR)
}

fn train(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let seed = require_seed(cfg, "train")?;
    let plan = cfg.plan.seeded(seed);
    let controller = load_bundle(cfg, PRETRAINED_DIR, "pretrained bundle (run `pretrain` first)")?;
    let samples = load_dataset(cfg)?;
    let guard = training::guard_subset(&samples, plan.online.guard_samples);
    let (controller, episodes) = training::train_online(&plan, controller, &guard, &cfg.params, seed)?;
    let mut csv = String::from("episode,residual_before,residual_after,accepted,skipped_updates,extrapolated,failure\n");
    for (k, e) in episodes.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{k},{:.17e},{:.17e},{},{},{},{}",
            e.residual_before,
            e.residual_after,
            e.accepted,
            e.skipped_updates,
            e.extrapolated,
            e.failure.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    w.text("log", "episodes.csv", &csv)?;
    w.bundle(&controller, TRAINED_DIR)
}

fn evaluate(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let controller = load_bundle(cfg, TRAINED_DIR, "trained bundle (run `train` first)")?;
    let seed = cfg.seed.unwrap_or(controller.seed);
    let mut summary = String::new();
    for s in scenarios(cfg)? {
        let (run, m) = run_one(&s, &mut DhpAgent::new(controller.clone(), false), cfg)?;
        w.trace(&format!("evaluate_{}_dhp_seed{seed}.csv", s.name), &run.trace)?;
        summary += &harness::metrics_summary(&s.name, "dhp", &m);
        summary.push('\n');
    }
    w.text("metrics", &format!("evaluate_dhp_seed{seed}.metrics"), &summary)?;
    Ok(())
}

fn compare(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let controller = load_bundle(cfg, TRAINED_DIR, "trained bundle (run `train` first)")?;
    let seed = cfg.seed.unwrap_or(controller.seed);
    for s in scenarios(cfg)? {
        let mut results = Vec::new();
        let mut traces = Vec::new();
        for kind in [ControllerKind::Pi, ControllerKind::Dhp] {
            let mut policy = policy_for(kind, &s, cfg, Some(&controller))?;
            let (run, m) = run_one(&s, policy.as_mut(), cfg)?;
            w.trace(&format!("compare_{}_{}_seed{seed}.csv", s.name, kind.name()), &run.trace)?;
            results.push((kind.name().to_string(), s.name.clone(), m));
            traces.push((kind.name(), run.trace));
        }
        let report = harness::compare_report(&s.name, &results)?;
        w.text("report", &format!("compare_{}_seed{seed}.txt", s.name), &report.to_text())?;
        let series: Vec<(&str, &[harness::TraceRow])> = traces.iter().map(|(k, t)| (*k, t.as_slice())).collect();
        w.text("plot", &format!("compare_{}_seed{seed}.svg", s.name), &svg::overlay(&format!("{} (seed {seed})", s.name), &series))?;
    }
    Ok(())
}

/// One LQR oracle run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrCheck {
    pub seed: u64,
    pub lambda_error: f64,
    pub gain_error: f64,
}

impl LqrCheck {
    pub fn passed(&self) -> bool {
        self.lambda_error <= LQR_LAMBDA_TOLERANCE && self.gain_error <= LQR_GAIN_TOLERANCE
    }
}

pub fn lqr_suite() -> Result<Vec<LqrCheck>, CliError> {
    let plant = LqrPlant::default();
    let settings = LqrTraining::default();
    let runs = boost_dhp::par::map(LQR_SEEDS.to_vec(), |seed| harness::train_lqr_dhp(&plant, &settings, seed).map(|r| (seed, r)));
    runs.into_iter()
        .map(|r| {
            let (seed, r) = r?;
            Ok(LqrCheck { seed, lambda_error: r.lambda_error, gain_error: r.gain_error })
        })
        .collect()
}

fn validate(w: &mut Writer) -> Result<(), CliError> {
    let plant = LqrPlant::default();
    let (p, k) = harness::riccati_solve(&plant)?;
    let mut report = format!("riccati_p = {p:.6}\nriccati_k = {k:.6}\n");
    let checks = lqr_suite()?;
    for c in &checks {
        let _ = writeln!(
            report,
            "seed {}: lambda_error = {:.4} gain_error = {:.4} {}",
            c.seed,
            c.lambda_error,
            c.gain_error,
            if c.passed() { "pass" } else { "fail" }
        );
    }
    let passed = checks.iter().filter(|c| c.passed()).count();
    let _ = writeln!(report, "passed = {passed}/{}", checks.len());
    w.text("report", "validate.txt", &report)?;
    if passed == checks.len() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("LQR oracle passed for {passed} of {} seeds", checks.len())))
    }
}
