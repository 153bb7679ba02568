//! Layered run configuration: defaults, then a key-value file, then flags.
//!
//! File format: one `dotted.key = value` per line, `#` starts a comment.

use boost_dhp::converter::ConverterParams;
use boost_dhp::dhp::JacobianSource;
use boost_dhp::nnet::{Optimizer, TrainingConfig};
use boost_dhp::training::TrainPlan;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{origin}:{line}: {msg}")]
    Malformed { origin: String, line: usize, msg: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: String, key: String },
    #[error("{key} = {value} is outside the allowed range {lo}..={hi}")]
    OutOfRange { key: String, value: f64, lo: f64, hi: f64 },
    #[error("{key} = `{value}`: {msg}")]
    BadValue { key: String, value: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Pi,
    Dhp,
    /// Fixed duty at the averaged operating point.
    OpenLoop,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Pi => "pi",
            ControllerKind::Dhp => "dhp",
            ControllerKind::OpenLoop => "open-loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ConverterParams,
    pub plan: TrainPlan,
    pub seed: Option<u64>,
    /// None runs every built-in scenario.
    pub scenario: Option<String>,
    pub controller: ControllerKind,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ConverterParams::default(),
            plan: TrainPlan::default(),
            seed: None,
            scenario: None,
            controller: ControllerKind::Pi,
            out: PathBuf::from("out"),
        }
    }
}

fn number(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse::<f64>().map_err(|e| ConfigError::BadValue { key: key.into(), value: value.into(), msg: e.to_string() })
}

fn ranged(key: &str, value: &str, lo: f64, hi: f64) -> Result<f64, ConfigError> {
    let v = number(key, value)?;
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(ConfigError::OutOfRange { key: key.into(), value: v, lo, hi })
    }
}

fn count(key: &str, value: &str, lo: usize, hi: usize) -> Result<usize, ConfigError> {
    let v = value.parse::<usize>().map_err(|e| ConfigError::BadValue { key: key.into(), value: value.into(), msg: e.to_string() })?;
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(ConfigError::OutOfRange { key: key.into(), value: v as f64, lo: lo as f64, hi: hi as f64 })
    }
}

fn set_training(cfg: &mut TrainingConfig, field: &str, key: &str, value: &str) -> Result<bool, ConfigError> {
    match field {
        "optimizer" => {
            cfg.optimizer = match value {
                "momentum" => Optimizer::Momentum,
                "adam" => Optimizer::Adam,
                _ => return Err(ConfigError::BadValue { key: key.into(), value: value.into(), msg: "expected momentum or adam".into() }),
            }
        }
        "learning_rate" => cfg.learning_rate = ranged(key, value, 0.0, 1.0)?,
        "momentum" => cfg.momentum = ranged(key, value, 0.0, 0.999)?,
        "max_gradient_norm" => cfg.max_gradient_norm = ranged(key, value, 1e-6, 1e6)?,
        "epochs" => cfg.epochs = count(key, value, 1, 100_000)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn optimizer_name(o: Optimizer) -> &'static str {
    match o {
        Optimizer::Momentum => "momentum",
        Optimizer::Adam => "adam",
    }
}

impl RunConfig {
    /// Apply one `key = value` setting; `origin` names its source for error messages.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let p = &mut self.params;
        let plan = &mut self.plan;
        let ex = &mut plan.excitation;
        let on = &mut plan.online;
        let d = &mut plan.dhp;
        match key {
            "converter.inductance" => p.inductance = ranged(key, value, 1e-6, 1e-1)?,
            "converter.capacitance" => p.capacitance = ranged(key, value, 1e-6, 1e-1)?,
            "converter.load_resistance" => p.load_resistance = ranged(key, value, 50.0, 200.0)?,
            "converter.inductor_resistance" => p.inductor_resistance = ranged(key, value, 0.0, 5.0)?,
            "converter.source_voltage" => p.source_voltage = ranged(key, value, 10.0, 100.0)?,
            "converter.switching_frequency" => *p = p.with_switching_frequency(ranged(key, value, 1e3, 1e6)?),
            "converter.substeps_per_period" => p.substeps_per_period = count(key, value, 1, 10_000)?,

            "dhp.gamma" => d.gamma = ranged(key, value, 1e-6, 0.999_999)?,
            "dhp.horizon" => d.horizon = ranged(key, value, 1e-3, 10.0)?,
            "dhp.duty_min" => d.duty_min = ranged(key, value, 0.0, 1.0)?,
            "dhp.duty_max" => d.duty_max = ranged(key, value, 0.0, 1.0)?,
            "dhp.i_base" => d.bases.current = ranged(key, value, 1e-3, 1e3)?,
            "dhp.v_base" => d.bases.voltage = ranged(key, value, 1e-3, 1e4)?,
            "dhp.k_v" => d.utility.k_v = ranged(key, value, 1e-6, 1e6)?,
            "dhp.jacobians" => {
                d.jacobians = match value {
                    "learned" => JacobianSource::Learned,
                    "analytic" => JacobianSource::Analytic,
                    _ => return Err(ConfigError::BadValue { key: key.into(), value: value.into(), msg: "expected learned or analytic".into() }),
                }
            }

            "excitation.v_ref_min" => ex.v_ref_range.0 = ranged(key, value, 1.0, 400.0)?,
            "excitation.v_ref_max" => ex.v_ref_range.1 = ranged(key, value, 1.0, 400.0)?,
            "excitation.load_min" => ex.load_range.0 = ranged(key, value, 50.0, 200.0)?,
            "excitation.load_max" => ex.load_range.1 = ranged(key, value, 50.0, 200.0)?,
            "excitation.source_min" => ex.source_range.0 = ranged(key, value, 10.0, 100.0)?,
            "excitation.source_max" => ex.source_range.1 = ranged(key, value, 10.0, 100.0)?,
            "excitation.episode_length" => ex.episode_length = ranged(key, value, 1e-3, 10.0)?,
            "excitation.hold_time" => ex.hold_time = ranged(key, value, 1e-4, 10.0)?,
            "excitation.episodes" => ex.episode_count = count(key, value, 1, 10_000)?,
            "excitation.collection_v_ref" => plan.collection_v_ref = ranged(key, value, 1.0, 400.0)?,

            "model.iterations" => plan.model_fit.lm.iterations = count(key, value, 1, 100_000)?,
            "model.max_train_samples" => plan.model_fit.max_train_samples = count(key, value, 10, 10_000_000)?,

            "pretrain.stride" => plan.pretrain_stride = count(key, value, 1, 10_000)?,

            "online.episodes" => on.episodes = count(key, value, 0, 100_000)?,
            "online.hold_time" => on.hold_time = ranged(key, value, 1e-4, 10.0)?,
            "online.v_ref_min" => on.v_ref.0 = ranged(key, value, 1.0, 400.0)?,
            "online.v_ref_max" => on.v_ref.1 = ranged(key, value, 1.0, 400.0)?,
            "online.load_min" => on.load.0 = ranged(key, value, 50.0, 200.0)?,
            "online.load_max" => on.load.1 = ranged(key, value, 50.0, 200.0)?,
            "online.source_min" => on.source.0 = ranged(key, value, 10.0, 100.0)?,
            "online.source_max" => on.source.1 = ranged(key, value, 10.0, 100.0)?,
            "online.guard_tolerance" => {
                on.guard_tolerance = if value == "none" { None } else { Some(ranged(key, value, 1.0, 1e6)?) }
            }
            "online.guard_samples" => on.guard_samples = count(key, value, 1, 1_000_000)?,

            "run.seed" => {
                self.seed = Some(value.parse().map_err(|e: std::num::ParseIntError| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    msg: e.to_string(),
                })?)
            }
            "run.scenario" => self.scenario = if value == "all" { None } else { Some(value.to_string()) },
            "run.controller" => {
                self.controller = match value {
                    "pi" => ControllerKind::Pi,
                    "dhp" => ControllerKind::Dhp,
                    "open-loop" => ControllerKind::OpenLoop,
                    _ => return Err(ConfigError::BadValue { key: key.into(), value: value.into(), msg: "expected pi, dhp or open-loop".into() }),
                }
            }
            "run.out" => self.out = PathBuf::from(value),
            _ => {
                let handled = if let Some(field) = key.strip_prefix("dhp.critic.") {
                    set_training(&mut d.critic, field, key, value)?
                } else if let Some(field) = key.strip_prefix("dhp.action.") {
                    set_training(&mut d.action, field, key, value)?
                } else if let Some(field) = key.strip_prefix("dhp.pretrain.") {
                    set_training(&mut d.pretrain, field, key, value)?
                } else {
                    false
                };
                if !handled {
                    return Err(ConfigError::UnknownKey { origin: origin.into(), key: key.into() });
                }
            }
        }
        Ok(())
    }

    /// Apply a config file's settings in order.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                origin: origin.into(),
                line: n + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Malformed { origin: origin.into(), line: n + 1, msg: "empty key or value".into() });
            }
            self.set(key, value, &format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), msg: e.to_string() })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Cross-field checks that single keys cannot catch.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(|e| ConfigError::BadValue { key: "converter".into(), value: String::new(), msg: e.to_string() })?;
        self.plan.validate().map_err(|e| ConfigError::BadValue { key: "plan".into(), value: String::new(), msg: e.to_string() })
    }

    /// Every key with its resolved value, in `apply_text` format.
    pub fn render(&self) -> String {
        let p = &self.params;
        let plan = &self.plan;
        let ex = &plan.excitation;
        let on = &plan.online;
        let d = &plan.dhp;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("converter.inductance", format!("{:?}", p.inductance));
        put("converter.capacitance", format!("{:?}", p.capacitance));
        put("converter.load_resistance", format!("{:?}", p.load_resistance));
        put("converter.inductor_resistance", format!("{:?}", p.inductor_resistance));
        put("converter.source_voltage", format!("{:?}", p.source_voltage));
        put("converter.switching_frequency", format!("{:?}", p.switching_frequency));
        put("converter.substeps_per_period", p.substeps_per_period.to_string());
        put("dhp.gamma", format!("{:?}", d.gamma));
        put("dhp.horizon", format!("{:?}", d.horizon));
        put("dhp.duty_min", format!("{:?}", d.duty_min));
        put("dhp.duty_max", format!("{:?}", d.duty_max));
        put("dhp.i_base", format!("{:?}", d.bases.current));
        put("dhp.v_base", format!("{:?}", d.bases.voltage));
        put("dhp.k_v", format!("{:?}", d.utility.k_v));
        put("dhp.jacobians", match d.jacobians {
            JacobianSource::Learned => "learned".into(),
            JacobianSource::Analytic => "analytic".into(),
        });
        for (name, t) in [("pretrain", &d.pretrain), ("critic", &d.critic), ("action", &d.action)] {
            put(&format!("dhp.{name}.optimizer"), optimizer_name(t.optimizer).into());
            put(&format!("dhp.{name}.learning_rate"), format!("{:?}", t.learning_rate));
            put(&format!("dhp.{name}.momentum"), format!("{:?}", t.momentum));
            put(&format!("dhp.{name}.max_gradient_norm"), format!("{:?}", t.max_gradient_norm));
            put(&format!("dhp.{name}.epochs"), t.epochs.to_string());
        }
        put("excitation.v_ref_min", format!("{:?}", ex.v_ref_range.0));
        put("excitation.v_ref_max", format!("{:?}", ex.v_ref_range.1));
        put("excitation.load_min", format!("{:?}", ex.load_range.0));
        put("excitation.load_max", format!("{:?}", ex.load_range.1));
        put("excitation.source_min", format!("{:?}", ex.source_range.0));
        put("excitation.source_max", format!("{:?}", ex.source_range.1));
        put("excitation.episode_length", format!("{:?}", ex.episode_length));
        put("excitation.hold_time", format!("{:?}", ex.hold_time));
        put("excitation.episodes", ex.episode_count.to_string());
        put("excitation.collection_v_ref", format!("{:?}", plan.collection_v_ref));
        put("model.iterations", plan.model_fit.lm.iterations.to_string());
        put("model.max_train_samples", plan.model_fit.max_train_samples.to_string());
        put("pretrain.stride", plan.pretrain_stride.to_string());
        put("online.episodes", on.episodes.to_string());
        put("online.hold_time", format!("{:?}", on.hold_time));
        put("online.v_ref_min", format!("{:?}", on.v_ref.0));
        put("online.v_ref_max", format!("{:?}", on.v_ref.1));
        put("online.load_min", format!("{:?}", on.load.0));
        put("online.load_max", format!("{:?}", on.load.1));
        put("online.source_min", format!("{:?}", on.source.0));
        put("online.source_max", format!("{:?}", on.source.1));
        put("online.guard_tolerance", on.guard_tolerance.map_or("none".into(), |t| format!("{t:?}")));
        put("online.guard_samples", on.guard_samples.to_string());
        if let Some(seed) = self.seed {
            put("run.seed", seed.to_string());
        }
        put("run.scenario", self.scenario.clone().unwrap_or_else(|| "all".into()));
        put("run.controller", self.controller.name().into());
        put("run.out", self.out.display().to_string());
        out
    }
}
