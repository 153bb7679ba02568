//! Dual heuristic programming controller.
//!
//! The critic estimates λ = ∂J/∂X, the gradient of the discounted cost-to-go
//! with respect to the feature vector; the action network emits the duty cycle
//! through a logistic squashing map. The generic pieces (targets, updates) work
//! on plain slices so the scalar LQR validation plant can drive them as well.

use crate::converter::{ConverterError, ConverterParams, ConverterState};
use crate::harness::{Observation, Policy, PolicyError};
use crate::identifier::{self, ModelJacobians, TrainingBox, TransitionModel, TransitionSample};
use crate::nnet::{apply_update, logistic, Activation, Matrix, NetError, Network, Optimizer, TrainingConfig, Velocity};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const FEATURE_DIM: usize = 4;
pub const CRITIC_HIDDEN: [usize; 2] = [8, 8];
pub const ACTION_HIDDEN: [usize; 2] = [8, 8];

#[derive(Debug, Error)]
pub enum DhpError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Converter(#[from] ConverterError),
    #[error("critic pretraining diverged at epoch {epoch}: residual {residual:.3e} > 10x initial {initial:.3e}")]
    Diverged { epoch: usize, residual: f64, initial: f64 },
    #[error("invalid DHP config: {0}")]
    InvalidConfig(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("bundle {path}: {msg}")]
    Bundle { path: PathBuf, msg: String },
}

/// Normalization bases for the feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bases {
    pub current: f64,
    pub voltage: f64,
}

impl Default for Bases {
    fn default() -> Self {
        Self { current: 10.0, voltage: 200.0 }
    }
}

/// X = [i_L/I_base, v_o/V_base, (v_ref − v_o)/V_base, v_s/V_base].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub current: f64,
    pub voltage: f64,
    pub error: f64,
    pub source: f64,
}

impl FeatureVector {
    pub fn new(state: ConverterState, v_ref: f64, v_s: f64, bases: &Bases) -> Self {
        Self {
            current: state.inductor_current / bases.current,
            voltage: state.output_voltage / bases.voltage,
            error: (v_ref - state.output_voltage) / bases.voltage,
            source: v_s / bases.voltage,
        }
    }

    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        [self.current, self.voltage, self.error, self.source]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityWeights {
    pub k_v: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        Self { k_v: 1.0 }
    }
}

/// U = K_v·e_n² and its gradient over the feature coordinates.
///
/// The features are treated as independent coordinates (the reference is
/// recovered as e_n + v_n), so the gradient lives entirely in the error slot.
pub fn utility(x: &FeatureVector, w: &UtilityWeights) -> (f64, [f64; FEATURE_DIM]) {
    (w.k_v * x.error * x.error, [0.0, 0.0, 2.0 * w.k_v * x.error, 0.0])
}

/// Critic output: ∂J/∂X per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda(pub Vec<f64>);

impl Lambda {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Map from the action network's raw output to the control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionMap {
    /// u = min + (max − min)·σ(raw)
    Logistic { min: f64, max: f64 },
    Identity,
}

impl ActionMap {
    pub fn apply(&self, raw: f64) -> f64 {
        match *self {
            ActionMap::Logistic { min, max } => min + (max - min) * logistic(raw),
            ActionMap::Identity => raw,
        }
    }

    pub fn slope(&self, raw: f64) -> f64 {
        match *self {
            ActionMap::Logistic { min, max } => {
                let s = logistic(raw);
                (max - min) * s * (1.0 - s)
            }
            ActionMap::Identity => 1.0,
        }
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<(), NetError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NetError::NonFinite(what))
    }
}

/// Control from the action network.
pub fn act(action: &Network, x: &[f64], map: ActionMap) -> Result<f64, NetError> {
    let raw = action.forward(x)?;
    check_finite(&raw, "action output")?;
    Ok(map.apply(raw[0]))
}

/// Control and its gradient with respect to the inputs.
pub fn act_with_gradient(action: &Network, x: &[f64], map: ActionMap) -> Result<(f64, Vec<f64>), NetError> {
    let pass = action.forward_pass(x)?;
    let raw = pass.output()[0];
    check_finite(&[raw], "action output")?;
    let jac = action.jacobian_from_pass(&pass);
    let slope = map.slope(raw);
    Ok((map.apply(raw), (0..x.len()).map(|j| slope * jac.get(0, j)).collect()))
}

/// Bellman-gradient target for the critic, treated as a constant by the update.
///
/// target_j = ∂U/∂X_j + ∂U/∂u·∂u/∂X_j + γ·Σ_i λ'_i·(∂X'_i/∂X_j + ∂X'_i/∂u·∂u/∂X_j)
#[allow(clippy::too_many_arguments)]
pub fn critic_target(
    lambda_next: &[f64],
    du_dx: &[f64],
    dxn_dx: &Matrix,
    dxn_du: &[f64],
    du_du: f64,
    da_dx: &[f64],
    gamma: f64,
) -> Lambda {
    let n = du_dx.len();
    debug_assert_eq!(dxn_dx.rows, lambda_next.len());
    debug_assert_eq!(dxn_dx.cols, n);
    let through_control: f64 = lambda_next.iter().zip(dxn_du).map(|(l, b)| l * b).sum();
    Lambda(
        (0..n)
            .map(|j| {
                let direct: f64 = (0..lambda_next.len()).map(|i| lambda_next[i] * dxn_dx.get(i, j)).sum();
                du_dx[j] + du_du * da_dx[j] + gamma * (direct + through_control * da_dx[j])
            })
            .collect(),
    )
}

/// ∂[U + γ·J(X')]/∂u for one cycle with the critic held fixed.
pub fn control_gradient(lambda_next: &[f64], dxn_du: &[f64], du_du: f64, gamma: f64) -> f64 {
    du_du + gamma * lambda_next.iter().zip(dxn_du).map(|(l, b)| l * b).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Squared residual before the step.
    Applied { residual_sq: f64 },
    Skipped,
}

/// One descent step of ‖critic(x) − target‖² / 2.
pub fn update_critic(
    critic: &mut Network,
    velocity: &mut Velocity,
    x: &[f64],
    target: &Lambda,
    config: &TrainingConfig,
) -> Result<StepOutcome, NetError> {
    let pass = critic.forward_pass(x)?;
    let resid: Vec<f64> = pass.output().iter().zip(&target.0).map(|(y, t)| y - t).collect();
    if !resid.iter().all(|r| r.is_finite()) {
        return Ok(StepOutcome::Skipped);
    }
    let residual_sq = resid.iter().map(|r| r * r).sum();
    let (grads, _) = critic.backward(&pass, &resid)?;
    match apply_update(critic, &grads, config, velocity) {
        Ok(_) => Ok(StepOutcome::Applied { residual_sq }),
        Err(NetError::NonFinite(_)) => Ok(StepOutcome::Skipped),
        Err(e) => Err(e),
    }
}

/// One descent step on the control gradient, backpropagated through the action map.
#[allow(clippy::too_many_arguments)]
pub fn update_action(
    action: &mut Network,
    velocity: &mut Velocity,
    x: &[f64],
    lambda_next: &[f64],
    dxn_du: &[f64],
    du_du: f64,
    gamma: f64,
    map: ActionMap,
    config: &TrainingConfig,
) -> Result<StepOutcome, NetError> {
    let pass = action.forward_pass(x)?;
    let dj_du = control_gradient(lambda_next, dxn_du, du_du, gamma);
    let cot = dj_du * map.slope(pass.output()[0]);
    if !cot.is_finite() {
        return Ok(StepOutcome::Skipped);
    }
    let (grads, _) = action.backward(&pass, &[cot])?;
    match apply_update(action, &grads, config, velocity) {
        Ok(_) => Ok(StepOutcome::Applied { residual_sq: dj_du * dj_du }),
        Err(NetError::NonFinite(_)) => Ok(StepOutcome::Skipped),
        Err(e) => Err(e),
    }
}

/// Which Jacobians feed the chain rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianSource {
    #[default]
    Learned,
    /// Finite differences of the exact simulator at the configured plant, with
    /// the source voltage taken from the observation.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhpConfig {
    pub gamma: f64,
    /// Offline critic sweeps over the collected dataset.
    pub pretrain: TrainingConfig,
    /// Per-cycle online critic step.
    pub critic: TrainingConfig,
    pub action: TrainingConfig,
    /// Seconds per online training episode.
    pub horizon: f64,
    pub duty_min: f64,
    pub duty_max: f64,
    pub bases: Bases,
    pub utility: UtilityWeights,
    pub jacobians: JacobianSource,
}

impl Default for DhpConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            pretrain: TrainingConfig { optimizer: Optimizer::Adam, learning_rate: 3e-4, momentum: 0.0, max_gradient_norm: 1.0, epochs: 40, batch_size: 1, rng_seed: 0 },
            critic: TrainingConfig { optimizer: Optimizer::Adam, learning_rate: 1e-3, momentum: 0.0, max_gradient_norm: 1.0, epochs: 1, batch_size: 1, rng_seed: 0 },
            action: TrainingConfig { optimizer: Optimizer::Adam, learning_rate: 1e-4, momentum: 0.0, max_gradient_norm: 1.0, epochs: 1, batch_size: 1, rng_seed: 0 },
            horizon: 0.1,
            duty_min: crate::pi::DEFAULT_DUTY_MIN,
            duty_max: crate::pi::DEFAULT_DUTY_MAX,
            bases: Bases::default(),
            utility: UtilityWeights::default(),
            jacobians: JacobianSource::Learned,
        }
    }
}

impl DhpConfig {
    pub fn validate(&self) -> Result<(), DhpError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(DhpError::InvalidConfig(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.horizon > 0.0) {
            return Err(DhpError::InvalidConfig(format!("horizon {} must be positive", self.horizon)));
        }
        if !(0.0 <= self.duty_min && self.duty_min < self.duty_max && self.duty_max <= 1.0) {
            return Err(DhpError::InvalidConfig(format!("duty bounds ({}, {}) invalid", self.duty_min, self.duty_max)));
        }
        if !(self.bases.current > 0.0 && self.bases.voltage > 0.0) {
            return Err(DhpError::InvalidConfig("bases must be positive".into()));
        }
        if !(self.utility.k_v > 0.0) {
            return Err(DhpError::InvalidConfig(format!("k_v {} must be positive", self.utility.k_v)));
        }
        self.pretrain.validate()?;
        self.critic.validate()?;
        self.action.validate()?;
        Ok(())
    }

    pub fn action_map(&self) -> ActionMap {
        ActionMap::Logistic { min: self.duty_min, max: self.duty_max }
    }
}

pub fn new_critic(rng: &mut ChaCha8Rng) -> Network {
    Network::random(&[FEATURE_DIM, CRITIC_HIDDEN[0], CRITIC_HIDDEN[1], FEATURE_DIM], Activation::Tanh, Activation::Identity, rng)
}

pub fn new_action(rng: &mut ChaCha8Rng) -> Network {
    Network::random(&[FEATURE_DIM, ACTION_HIDDEN[0], ACTION_HIDDEN[1], 1], Activation::Tanh, Activation::Identity, rng)
}

/// Everything the critic target needs for one transition, minus λ'.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTransition {
    pub x: [f64; FEATURE_DIM],
    pub x_next: [f64; FEATURE_DIM],
    pub du_dx: [f64; FEATURE_DIM],
    pub dxn_dx: Matrix,
    pub dxn_du: Vec<f64>,
    pub da_dx: Vec<f64>,
}

impl PreparedTransition {
    pub fn target(&self, critic: &Network, gamma: f64) -> Result<Lambda, NetError> {
        let lambda_next = critic.forward(&self.x_next)?;
        Ok(critic_target(&lambda_next, &self.du_dx, &self.dxn_dx, &self.dxn_du, 0.0, &self.da_dx, gamma))
    }

    /// Squared critic residual at this transition.
    pub fn residual_sq(&self, critic: &Network, gamma: f64) -> Result<f64, NetError> {
        let target = self.target(critic, gamma)?;
        let y = critic.forward(&self.x)?;
        Ok(y.iter().zip(&target.0).map(|(a, b)| (a - b).powi(2)).sum())
    }
}

fn plant_jacobians(
    model: &TransitionModel,
    config: &DhpConfig,
    x: &FeatureVector,
    state: ConverterState,
    duty: f64,
    plant: &ConverterParams,
) -> Result<ModelJacobians, DhpError> {
    match config.jacobians {
        JacobianSource::Learned => Ok(model.jacobians(x, duty)?),
        JacobianSource::Analytic => {
            let p = ConverterParams { source_voltage: x.source * config.bases.voltage, ..*plant };
            Ok(ModelJacobians {
                jacobians: identifier::analytic_jacobians(state, duty, &p, &config.bases)?,
                extrapolated: !TrainingBox::default().contains(state, duty),
            })
        }
    }
}

/// Precompute targets' ingredients for a dataset under a frozen model and action.
///
/// `plant` supplies L, C, R_L for the analytic route; the per-sample source
/// voltage comes from the sample. The load is not recorded in the dataset,
/// so the analytic route uses the nominal load.
pub fn prepare_dataset(
    samples: &[TransitionSample],
    model: &TransitionModel,
    action: &Network,
    config: &DhpConfig,
    plant: &ConverterParams,
) -> Result<Vec<PreparedTransition>, DhpError> {
    let map = config.action_map();
    samples
        .iter()
        .map(|s| {
            let x = s.features_now(&config.bases);
            let (_, du_dx) = utility(&x, &config.utility);
            let jac = plant_jacobians(model, config, &x, s.state, s.duty, plant)?;
            let (dxn_dx, dxn_du) = jac.jacobians.features();
            let (_, da_dx) = act_with_gradient(action, &x.to_array(), map)?;
            Ok(PreparedTransition {
                x: x.to_array(),
                x_next: s.features_next(&config.bases).to_array(),
                du_dx,
                dxn_dx,
                dxn_du,
                da_dx,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PretrainReport {
    /// Epoch-averaged critic residual norm ‖Er‖ (RMS over samples, measured during the sweep).
    pub epoch_residuals: Vec<f64>,
    pub skipped: usize,
}

impl PretrainReport {
    pub fn reduction(&self) -> f64 {
        match (self.epoch_residuals.first(), self.epoch_residuals.last()) {
            (Some(a), Some(b)) if *b > 0.0 => a / b,
            _ => f64::INFINITY,
        }
    }
}

/// Critic pretraining over prepared transitions, action frozen.
///
/// Each sample's target is recomputed from the current critic at the next
/// features. Aborts once an epoch's residual exceeds 10× the first epoch's.
pub fn pretrain_critic_prepared(
    data: &[PreparedTransition],
    critic: &mut Network,
    gamma: f64,
    config: &TrainingConfig,
) -> Result<PretrainReport, DhpError> {
    if data.is_empty() {
        return Err(DhpError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = Velocity::new(critic);
    let mut report = PretrainReport::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut counted) = (0.0, 0usize);
        for &k in &order {
            let target = data[k].target(critic, gamma)?;
            match update_critic(critic, &mut velocity, &data[k].x, &target, config)? {
                StepOutcome::Applied { residual_sq } => {
                    total += residual_sq;
                    counted += 1;
                }
                StepOutcome::Skipped => report.skipped += 1,
            }
        }
        let residual = (total / counted.max(1) as f64).sqrt();
        report.epoch_residuals.push(residual);
        let initial = report.epoch_residuals[0];
        if !residual.is_finite() || residual > 10.0 * initial {
            return Err(DhpError::Diverged { epoch: epoch + 1, residual, initial });
        }
    }
    Ok(report)
}

/// Boost critic pretraining on a PI dataset with the DHP action signal disabled.
pub fn pretrain_critic(
    samples: &[TransitionSample],
    model: &TransitionModel,
    critic: &mut Network,
    action: &Network,
    config: &DhpConfig,
    plant: &ConverterParams,
) -> Result<PretrainReport, DhpError> {
    let data = prepare_dataset(samples, model, action, config, plant)?;
    pretrain_critic_prepared(&data, critic, config.gamma, &config.pretrain)
}

/// RMS critic residual over a set of transitions.
pub fn residual_norm(data: &[PreparedTransition], critic: &Network, gamma: f64) -> Result<f64, NetError> {
    let mut total = 0.0;
    for d in data {
        total += d.residual_sq(critic, gamma)?;
    }
    Ok((total / data.len().max(1) as f64).sqrt())
}

/// A trained (or in-training) boost controller: model, critic, action and settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DhpController {
    pub model: TransitionModel,
    pub critic: Network,
    pub action: Network,
    pub config: DhpConfig,
    pub seed: u64,
}

impl DhpController {
    pub fn duty(&self, x: &FeatureVector) -> Result<f64, NetError> {
        act(&self.action, &x.to_array(), self.config.action_map())
    }
}

/// Online agent: the controller plus optimizer state, updated every control cycle when `learning`.
#[derive(Debug, Clone)]
pub struct DhpAgent {
    pub controller: DhpController,
    pub learning: bool,
    pub skipped: usize,
    pub extrapolated: usize,
    critic_velocity: Velocity,
    action_velocity: Velocity,
    last_lambda: Option<Vec<f64>>,
}

impl DhpAgent {
    pub fn new(controller: DhpController, learning: bool) -> Self {
        let critic_velocity = Velocity::new(&controller.critic);
        let action_velocity = Velocity::new(&controller.action);
        Self { controller, learning, skipped: 0, extrapolated: 0, critic_velocity, action_velocity, last_lambda: None }
    }

    fn learn(&mut self, obs: &Observation, duty: f64, next: ConverterState, plant: &ConverterParams) -> Result<(), DhpError> {
        let c = &mut self.controller;
        let cfg = c.config;
        let x = FeatureVector::new(obs.state, obs.v_ref, obs.v_s, &cfg.bases);
        let x_next = FeatureVector::new(next, obs.v_ref, obs.v_s, &cfg.bases);
        let jac = plant_jacobians(&c.model, &cfg, &x, obs.state, duty, plant)?;
        if jac.extrapolated {
            self.extrapolated += 1;
        }
        let (dxn_dx, dxn_du) = jac.jacobians.features();
        let (_, du_dx) = utility(&x, &cfg.utility);
        let xa = x.to_array();
        let (_, da_dx) = act_with_gradient(&c.action, &xa, cfg.action_map())?;
        let lambda_next = c.critic.forward(&x_next.to_array())?;
        let target = critic_target(&lambda_next, &du_dx, &dxn_dx, &dxn_du, 0.0, &da_dx, cfg.gamma);
        if update_critic(&mut c.critic, &mut self.critic_velocity, &xa, &target, &cfg.critic)? == StepOutcome::Skipped {
            self.skipped += 1;
        }
        let step = update_action(
            &mut c.action,
            &mut self.action_velocity,
            &xa,
            &lambda_next,
            &dxn_du,
            0.0,
            cfg.gamma,
            cfg.action_map(),
            &cfg.action,
        )?;
        if step == StepOutcome::Skipped {
            self.skipped += 1;
        }
        Ok(())
    }
}

impl Policy for DhpAgent {
    fn duty(&mut self, obs: &Observation) -> Result<f64, PolicyError> {
        let x = FeatureVector::new(obs.state, obs.v_ref, obs.v_s, &self.controller.config.bases);
        let fail = |e: NetError| PolicyError(e.to_string());
        self.last_lambda = Some(self.controller.critic.forward(&x.to_array()).map_err(fail)?);
        self.controller.duty(&x).map_err(fail)
    }

    fn observe(&mut self, obs: &Observation, duty: f64, next: ConverterState, plant: &ConverterParams) -> Result<(), PolicyError> {
        if self.learning {
            self.learn(obs, duty, next, plant).map_err(|e| PolicyError(e.to_string()))?;
        }
        Ok(())
    }

    fn lambda(&self) -> Option<Vec<f64>> {
        self.last_lambda.clone()
    }
}

pub const MODEL_FILE: &str = "model.bdnn";
pub const CRITIC_FILE: &str = "critic.bdnn";
pub const ACTION_FILE: &str = "action.bdnn";
pub const META_FILE: &str = "bundle.meta";

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

impl DhpController {
    fn metadata(&self) -> BTreeMap<&'static str, String> {
        let c = &self.config;
        let m = &self.model;
        let b = &m.training_box;
        BTreeMap::from([
            ("gamma", format!("{:?}", c.gamma)),
            ("seed", self.seed.to_string()),
            ("duty_min", format!("{:?}", c.duty_min)),
            ("duty_max", format!("{:?}", c.duty_max)),
            ("i_base", format!("{:?}", c.bases.current)),
            ("v_base", format!("{:?}", c.bases.voltage)),
            ("k_v", format!("{:?}", c.utility.k_v)),
            ("model.input_mean", fmt_list(&m.input_mean)),
            ("model.input_scale", fmt_list(&m.input_scale)),
            ("model.delta_scale", fmt_list(&m.delta_scale)),
            ("model.box", fmt_list(&[b.current.0, b.current.1, b.voltage.0, b.voltage.1, b.duty.0, b.duty.1])),
        ])
    }

    /// Write the three networks and the metadata file into `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>, DhpError> {
        let io = |path: &Path, e: std::io::Error| DhpError::Bundle { path: path.to_path_buf(), msg: e.to_string() };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut written = Vec::new();
        for (name, net) in [(MODEL_FILE, &self.model.net), (CRITIC_FILE, &self.critic), (ACTION_FILE, &self.action)] {
            let path = dir.join(name);
            fs::write(&path, net.to_bytes()).map_err(|e| io(&path, e))?;
            written.push(path);
        }
        let meta: String = self.metadata().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let path = dir.join(META_FILE);
        fs::write(&path, meta).map_err(|e| io(&path, e))?;
        written.push(path);
        Ok(written)
    }

    /// Load a bundle; settings not stored in the metadata come from `base`.
    pub fn load(dir: &Path, base: &DhpConfig) -> Result<Self, DhpError> {
        let meta_path = dir.join(META_FILE);
        let bad = |msg: String| DhpError::Bundle { path: meta_path.clone(), msg };
        let text = fs::read_to_string(&meta_path).map_err(|e| bad(e.to_string()))?;
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line {}: expected `key = value`", n + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<f64, DhpError> {
            kv.get(k).ok_or_else(|| bad(format!("missing key `{k}`")))?.parse::<f64>().map_err(|e| bad(format!("{k}: {e}")))
        };
        let list = |k: &str, n: usize| -> Result<Vec<f64>, DhpError> {
            let raw = kv.get(k).ok_or_else(|| bad(format!("missing key `{k}`")))?;
            let v: Vec<f64> = raw.split(',').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| bad(format!("{k}: {e}")))?;
            if v.len() != n {
                return Err(bad(format!("{k}: expected {n} values, found {}", v.len())));
            }
            Ok(v)
        };
        let net = |name: &str| -> Result<Network, DhpError> {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| DhpError::Bundle { path: path.clone(), msg: e.to_string() })?;
            Network::from_bytes(&bytes).map_err(|e| DhpError::Bundle { path, msg: e.to_string() })
        };
        let bases = Bases { current: get("i_base")?, voltage: get("v_base")? };
        let config = DhpConfig {
            gamma: get("gamma")?,
            duty_min: get("duty_min")?,
            duty_max: get("duty_max")?,
            bases,
            utility: UtilityWeights { k_v: get("k_v")? },
            ..*base
        };
        let mean = list("model.input_mean", 4)?;
        let scale = list("model.input_scale", 4)?;
        let delta = list("model.delta_scale", 2)?;
        let bx = list("model.box", 6)?;
        let seed = kv.get("seed").ok_or_else(|| bad("missing key `seed`".into()))?.parse::<u64>().map_err(|e| bad(format!("seed: {e}")))?;
        let model = TransitionModel {
            net: net(MODEL_FILE)?,
            input_mean: [mean[0], mean[1], mean[2], mean[3]],
            input_scale: [scale[0], scale[1], scale[2], scale[3]],
            delta_scale: [delta[0], delta[1]],
            bases,
            training_box: TrainingBox { current: (bx[0], bx[1]), voltage: (bx[2], bx[3]), duty: (bx[4], bx[5]) },
        };
        Ok(Self { model, critic: net(CRITIC_FILE)?, action: net(ACTION_FILE)?, config, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Layer;

    fn scalar_linear(w: f64) -> Network {
        Network::from_layers(
            vec![Layer { inputs: 1, outputs: 1, weights: vec![w], biases: vec![0.0] }],
            Activation::Tanh,
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn utility_examples() {
        let w = UtilityWeights::default();
        let x = FeatureVector::new(ConverterState::new(5.0, 200.0), 200.0, 60.0, &Bases::default());
        let (u, g) = utility(&x, &w);
        assert_eq!(u, 0.0);
        assert_eq!(g, [0.0; 4]);
        let x = FeatureVector { current: 0.0, voltage: 0.9, error: 0.1, source: 0.3 };
        assert!((utility(&x, &w).0 - 0.01).abs() < 1e-15);
    }

    #[test]
    fn utility_gradient_matches_finite_differences() {
        let w = UtilityWeights { k_v: 2.5 };
        let x = [0.4, 0.8, -0.13, 0.3];
        let f = |x: [f64; 4]| utility(&FeatureVector { current: x[0], voltage: x[1], error: x[2], source: x[3] }, &w).0;
        let (_, g) = utility(&FeatureVector { current: x[0], voltage: x[1], error: x[2], source: x[3] }, &w);
        for j in 0..4 {
            let h = 1e-6;
            let (mut a, mut b) = (x, x);
            a[j] += h;
            b[j] -= h;
            let fd = (f(a) - f(b)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-8 * g[j].abs().max(1e-8) + 1e-10, "slot {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn action_map_limits() {
        let map = ActionMap::Logistic { min: 0.05, max: 0.95 };
        assert!((map.apply(0.0) - 0.5).abs() < 1e-15);
        assert!((map.apply(50.0) - 0.95).abs() < 1e-12);
        assert!(map.apply(30.0) < 0.95);
        assert!((map.apply(-50.0) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn action_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = new_action(&mut rng);
        let map = ActionMap::Logistic { min: 0.05, max: 0.95 };
        let x = [0.7, 0.9, 0.05, 0.3];
        let (_, g) = act_with_gradient(&net, &x, map).unwrap();
        for j in 0..4 {
            let h = 1e-6;
            let (mut a, mut b) = (x, x);
            a[j] += h;
            b[j] -= h;
            let fd = (act(&net, &a, map).unwrap() - act(&net, &b, map).unwrap()) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1e-6), "slot {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn critic_target_examples() {
        let m = Matrix { rows: 1, cols: 1, data: vec![0.9] };
        let t = critic_target(&[1.0], &[1.0], &m, &[0.5], 0.0, &[-0.6], 0.9);
        assert!((t.0[0] - 1.54).abs() < 1e-12);
        let t0 = critic_target(&[3.0], &[1.0], &m, &[0.5], 0.0, &[-0.6], 0.0);
        assert_eq!(t0.0, vec![1.0]);
    }

    #[test]
    fn critic_target_matches_independent_evaluation() {
        // Recompute the Bellman-gradient from the total derivative of X' = A X + B a(X).
        let a = Matrix { rows: 2, cols: 2, data: vec![0.9, 0.1, -0.2, 0.8] };
        let b = [0.3, -0.5];
        let da = [0.2, -0.7];
        let lam = [1.5, -0.4];
        let du = [0.2, 0.6];
        let gamma = 0.95;
        let t = critic_target(&lam, &du, &a, &b, 0.0, &da, gamma);
        let mut total = Matrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                total.set(i, j, a.get(i, j) + b[i] * da[j]);
            }
        }
        for j in 0..2 {
            let expected = du[j] + gamma * (lam[0] * total.get(0, j) + lam[1] * total.get(1, j));
            assert!((t.0[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn control_gradient_example() {
        assert!((control_gradient(&[2.0], &[0.5], 0.0, 0.9) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn critic_at_target_takes_zero_step() {
        let mut net = scalar_linear(0.7);
        let before = net.clone();
        let mut v = Velocity::new(&net);
        let target = Lambda(net.forward(&[0.4]).unwrap());
        let out = update_critic(&mut net, &mut v, &[0.4], &target, &TrainingConfig::default()).unwrap();
        assert_eq!(out, StepOutcome::Applied { residual_sq: 0.0 });
        assert_eq!(net, before);
    }

    #[test]
    fn critic_converges_on_point_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = new_critic(&mut rng);
        let mut v = Velocity::new(&net);
        let cfg = TrainingConfig { learning_rate: 0.05, momentum: 0.0, ..Default::default() };
        let x = [0.5, 1.0, 0.02, 0.3];
        let target = Lambda(vec![0.3, -1.2, 0.8, 0.05]);
        let mut last = f64::INFINITY;
        for _ in 0..10_000 {
            if let StepOutcome::Applied { residual_sq } = update_critic(&mut net, &mut v, &x, &target, &cfg).unwrap() {
                last = residual_sq;
            }
        }
        assert!(last < 1e-6, "{last}");
    }

    #[test]
    fn non_finite_target_is_skipped() {
        let mut net = scalar_linear(0.7);
        let before = net.clone();
        let mut v = Velocity::new(&net);
        let out = update_critic(&mut net, &mut v, &[0.4], &Lambda(vec![f64::NAN]), &TrainingConfig::default()).unwrap();
        assert_eq!(out, StepOutcome::Skipped);
        assert_eq!(net, before);
    }

    #[test]
    fn zero_lambda_leaves_action_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = new_action(&mut rng);
        let before = net.clone();
        let mut v = Velocity::new(&net);
        let map = ActionMap::Logistic { min: 0.05, max: 0.95 };
        update_action(&mut net, &mut v, &[0.1, 0.9, 0.1, 0.3], &[0.0; 4], &[1.0, 2.0, -2.0, 0.0], 0.0, 0.95, map, &TrainingConfig::default())
            .unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn action_gradient_matches_rollout_finite_differences() {
        // Scalar plant x' = a x + b u, U = x² + u², critic λ(x) = c·x frozen.
        let (a, b, c, gamma) = (0.9, 0.5, 3.0, 0.95);
        let x = 0.7;
        let cost = |u: f64| x * x + u * u + gamma * 0.5 * c * (a * x + b * u).powi(2);
        let u = -0.2;
        let lam_next = c * (a * x + b * u);
        let analytic = control_gradient(&[lam_next], &[b], 2.0 * u, gamma);
        let h = 1e-6;
        let fd = (cost(u + h) - cost(u - h)) / (2.0 * h);
        assert!((fd - analytic).abs() <= 1e-4 * analytic.abs());
    }

    #[test]
    fn config_validation() {
        assert!(DhpConfig::default().validate().is_ok());
        assert!(DhpConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(DhpConfig { horizon: 0.0, ..Default::default() }.validate().is_err());
    }
}
