//! Plant identification.
//!
//! A small network learns the one-period transition of the converter from
//! closed-loop PI data. It predicts the normalized next state
//! `(i_L', v_o')` as the current state plus a learned, rescaled increment, so the
//! identity part of the transition is exact and the network only carries the
//! per-period change. The finite-difference Jacobians of the exact simulator
//! serve as the reference the learned Jacobians are checked against.

use crate::converter::{self, ConverterError, ConverterParams, ConverterState};
use crate::dhp::{Bases, FeatureVector};
use crate::nnet::{apply_update, Activation, Gradients, Matrix, NetError, Network, TrainingConfig, Velocity};
use crate::par;
use nalgebra::{DMatrix, DVector};
use crate::pi::{self, PiGains, PiState};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::io::{self, BufRead, Write};
use thiserror::Error;

/// Hidden layout of the model network.
pub const MODEL_HIDDEN: [usize; 2] = [5, 5];
/// Model inputs: normalized i_L, v_o, v_s and the duty cycle.
pub const MODEL_INPUTS: usize = 4;
pub const DATASET_HEADER: &str = "i_L,v_o,v_ref,v_s,duty,i_L_next,v_o_next";

/// Held-out RMS gate per state component, as a fraction of its base.
pub const MODEL_RMS_GATE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum IdentError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Converter(#[from] ConverterError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid excitation spec: {0}")]
    InvalidSpec(String),
    #[error("dataset line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Training box of the model: inputs outside it are flagged as extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingBox {
    pub voltage: (f64, f64),
    pub current: (f64, f64),
    pub duty: (f64, f64),
}

impl Default for TrainingBox {
    fn default() -> Self {
        Self { voltage: (0.0, 260.0), current: (0.0, 25.0), duty: (0.05, 0.95) }
    }
}

impl TrainingBox {
    pub fn contains(&self, state: ConverterState, duty: f64) -> bool {
        let within = |x: f64, (lo, hi): (f64, f64)| x >= lo && x <= hi;
        within(state.output_voltage, self.voltage) && within(state.inductor_current, self.current) && within(duty, self.duty)
    }
}

/// One recorded control period, in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample {
    pub state: ConverterState,
    pub v_ref: f64,
    pub v_s: f64,
    pub duty: f64,
    pub next: ConverterState,
}

impl TransitionSample {
    pub fn features_now(&self, bases: &Bases) -> FeatureVector {
        FeatureVector::new(self.state, self.v_ref, self.v_s, bases)
    }

    /// Next features with the exogenous inputs held over the period.
    pub fn features_next(&self, bases: &Bases) -> FeatureVector {
        FeatureVector::new(self.next, self.v_ref, self.v_s, bases)
    }

    fn values(&self) -> [f64; 7] {
        [
            self.state.inductor_current,
            self.state.output_voltage,
            self.v_ref,
            self.v_s,
            self.duty,
            self.next.inductor_current,
            self.next.output_voltage,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Randomized closed-loop excitation for data collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationSpec {
    pub v_ref_range: (f64, f64),
    pub load_range: (f64, f64),
    pub source_range: (f64, f64),
    /// Seconds per episode.
    pub episode_length: f64,
    /// Seconds between redraws of v_ref, R and v_s.
    pub hold_time: f64,
    pub episode_count: usize,
    pub rng_seed: u64,
}

impl Default for ExcitationSpec {
    fn default() -> Self {
        Self {
            v_ref_range: (160.0, 240.0),
            load_range: (50.0, 200.0),
            source_range: (54.0, 66.0),
            episode_length: 0.2,
            hold_time: 0.05,
            episode_count: 8,
            rng_seed: 1,
        }
    }
}

impl ExcitationSpec {
    pub fn validate(&self) -> Result<(), IdentError> {
        let ordered = |name: &str, (lo, hi): (f64, f64), min: f64, max: f64| {
            if lo <= hi && lo >= min && hi <= max {
                Ok(())
            } else {
                Err(IdentError::InvalidSpec(format!("{name} range ({lo}, {hi}) must be ordered and within [{min}, {max}]")))
            }
        };
        ordered("v_ref", self.v_ref_range, 0.0, 260.0)?;
        ordered("load", self.load_range, 50.0, 200.0)?;
        ordered("source", self.source_range, 54.0, 66.0)?;
        if !(self.episode_length > 0.0) || !(self.hold_time > 0.0) {
            return Err(IdentError::InvalidSpec("episode_length and hold_time must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<TransitionSample>,
    /// Episodes aborted on a non-finite state and excluded from `samples`.
    pub flagged_episodes: Vec<usize>,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn run_episode(
    index: usize,
    spec: &ExcitationSpec,
    gains: &PiGains,
    params: &ConverterParams,
) -> Result<Vec<TransitionSample>, ConverterError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(index as u64);
    let dt = params.control_period;
    let steps = (spec.episode_length / dt).round() as usize;
    let hold = ((spec.hold_time / dt).round() as usize).max(1);
    let mut plant = *params;
    let mut v_ref = 0.0;
    let mut x = ConverterState::default();
    let mut pi_state = PiState::default();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        if k % hold == 0 {
            v_ref = draw(&mut rng, spec.v_ref_range);
            plant.load_resistance = draw(&mut rng, spec.load_range);
            plant.source_voltage = draw(&mut rng, spec.source_range);
        }
        let (duty, next_pi) = pi::pi_step(pi_state, gains, v_ref - x.output_voltage, dt);
        pi_state = next_pi;
        let next = converter::step_period(x, duty, &plant)?;
        out.push(TransitionSample { state: x, v_ref, v_s: plant.source_voltage, duty, next });
        x = next;
    }
    Ok(out)
}

/// Closed-loop PI episodes from rest with piecewise-constant random v_ref, R and v_s.
///
/// Episodes run independently (in parallel with the `parallel` feature); each
/// draws from its own ChaCha stream so the result does not depend on scheduling.
pub fn generate_dataset(spec: &ExcitationSpec, gains: &PiGains, params: &ConverterParams) -> Result<Dataset, IdentError> {
    spec.validate()?;
    params.validate()?;
    let runs = par::map((0..spec.episode_count).collect(), |k| (k, run_episode(k, spec, gains, params)));
    let mut dataset = Dataset::default();
    for (k, run) in runs {
        match run {
            Ok(samples) if samples.iter().all(TransitionSample::is_finite) => dataset.samples.extend(samples),
            _ => dataset.flagged_episodes.push(k),
        }
    }
    Ok(dataset)
}

/// SHA-256 over the little-endian bytes of every sample field.
pub fn dataset_checksum(samples: &[TransitionSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        for v in s.values() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_dataset_csv<W: Write>(mut w: W, samples: &[TransitionSample]) -> io::Result<()> {
    writeln!(w, "{DATASET_HEADER}")?;
    for s in samples {
        let row: Vec<String> = s.values().iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_dataset_csv<R: BufRead>(r: R) -> Result<Vec<TransitionSample>, IdentError> {
    let mut samples = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if n == 0 {
            if line.trim() != DATASET_HEADER {
                return Err(IdentError::Parse { line: 1, msg: format!("expected header `{DATASET_HEADER}`") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| IdentError::Parse { line: lineno, msg: e.to_string() })?;
        if vals.len() != 7 {
            return Err(IdentError::Parse { line: lineno, msg: format!("expected 7 fields, found {}", vals.len()) });
        }
        samples.push(TransitionSample {
            state: ConverterState::new(vals[0], vals[1]),
            v_ref: vals[2],
            v_s: vals[3],
            duty: vals[4],
            next: ConverterState::new(vals[5], vals[6]),
        });
    }
    Ok(samples)
}

/// One-period Jacobians of the normalized plant.
///
/// Rows are (i_L', v_o'); `state` columns are (i_L, v_o), `source` is the
/// column for v_s and `control` the column for the duty cycle. All in the
/// normalized units of [`Bases`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantJacobians {
    pub state: [[f64; 2]; 2],
    pub source: [f64; 2],
    pub control: [f64; 2],
}

impl PlantJacobians {
    pub fn state_matrix(&self) -> Matrix {
        Matrix { rows: 2, cols: 2, data: vec![self.state[0][0], self.state[0][1], self.state[1][0], self.state[1][1]] }
    }

    pub fn control_matrix(&self) -> Matrix {
        Matrix { rows: 2, cols: 1, data: self.control.to_vec() }
    }

    /// Jacobians over the physical coordinates z = (i_L, v_o, v_ref, v_s).
    ///
    /// The exogenous rows pass through: ∂v_ref'/∂v_ref = 1, ∂v_s'/∂v_s = 1, zero elsewhere.
    pub fn physical(&self) -> (Matrix, Vec<f64>) {
        let mut m = Matrix::zeros(4, 4);
        for r in 0..2 {
            m.set(r, 0, self.state[r][0]);
            m.set(r, 1, self.state[r][1]);
            m.set(r, 3, self.source[r]);
        }
        m.set(2, 2, 1.0);
        m.set(3, 3, 1.0);
        (m, vec![self.control[0], self.control[1], 0.0, 0.0])
    }

    /// Jacobians over the feature coordinates X = (i_n, v_n, e_n, vs_n).
    ///
    /// Composes the physical map with X ↔ z, where v_ref = e + v_o. Since
    /// e' = v_ref − v_o' the error row is (−∂v'/∂i, 1 − ∂v'/∂v, 1, −∂v'/∂s).
    pub fn features(&self) -> (Matrix, Vec<f64>) {
        let [[fi_i, fi_v], [fv_i, fv_v]] = self.state;
        let [fi_s, fv_s] = self.source;
        let [fi_u, fv_u] = self.control;
        let m = Matrix {
            rows: 4,
            cols: 4,
            data: vec![
                fi_i, fi_v, 0.0, fi_s, //
                fv_i, fv_v, 0.0, fv_s, //
                -fv_i, 1.0 - fv_v, 1.0, -fv_s, //
                0.0, 0.0, 0.0, 1.0,
            ],
        };
        (m, vec![fi_u, fv_u, -fv_u, 0.0])
    }
}

/// Central-difference Jacobians of the exact simulator.
///
/// Steps are `h·max(|x|, 1)` in physical units (one-sided at the duty limits
/// and at i_L = 0). Results are in normalized units.
pub fn analytic_jacobians_with_step(
    state: ConverterState,
    duty: f64,
    params: &ConverterParams,
    bases: &Bases,
    h: f64,
) -> Result<PlantJacobians, ConverterError> {
    let eval = |x: ConverterState, d: f64, vs: f64| -> Result<[f64; 2], ConverterError> {
        let p = ConverterParams { source_voltage: vs, ..*params };
        let n = converter::step_period(x, d, &p)?;
        if !n.is_finite() {
            return Err(ConverterError::NonFinite { current: n.inductor_current, voltage: n.output_voltage });
        }
        Ok([n.inductor_current / bases.current, n.output_voltage / bases.voltage])
    };
    let diff = |plus: [f64; 2], minus: [f64; 2], width: f64, base: f64| -> [f64; 2] {
        [(plus[0] - minus[0]) / width * base, (plus[1] - minus[1]) / width * base]
    };
    let vs = params.source_voltage;

    let hi = h * state.inductor_current.abs().max(1.0);
    let (i_lo, i_hi) = ((state.inductor_current - hi).max(0.0), state.inductor_current + hi);
    let d_i = diff(
        eval(ConverterState { inductor_current: i_hi, ..state }, duty, vs)?,
        eval(ConverterState { inductor_current: i_lo, ..state }, duty, vs)?,
        i_hi - i_lo,
        bases.current,
    );

    let hv = h * state.output_voltage.abs().max(1.0);
    let (v_lo, v_hi) = ((state.output_voltage - hv).max(0.0), state.output_voltage + hv);
    let d_v = diff(
        eval(ConverterState { output_voltage: v_hi, ..state }, duty, vs)?,
        eval(ConverterState { output_voltage: v_lo, ..state }, duty, vs)?,
        v_hi - v_lo,
        bases.voltage,
    );

    let hs = h * vs.abs().max(1.0);
    let (s_lo, s_hi) = ((vs - hs).max(0.0), vs + hs);
    let d_s = diff(eval(state, duty, s_hi)?, eval(state, duty, s_lo)?, s_hi - s_lo, bases.voltage);

    let hd = h;
    let (u_lo, u_hi) = ((duty - hd).max(0.0), (duty + hd).min(1.0));
    let d_u = diff(eval(state, u_hi, vs)?, eval(state, u_lo, vs)?, u_hi - u_lo, 1.0);

    Ok(PlantJacobians {
        state: [[d_i[0], d_v[0]], [d_i[1], d_v[1]]],
        source: [d_s[0], d_s[1]],
        control: [d_u[0], d_u[1]],
    })
}

/// Ground-truth one-period Jacobians with the default relative step 1e-6.
pub fn analytic_jacobians(
    state: ConverterState,
    duty: f64,
    params: &ConverterParams,
    bases: &Bases,
) -> Result<PlantJacobians, ConverterError> {
    analytic_jacobians_with_step(state, duty, params, bases, 1e-6)
}

/// Learned one-period transition model.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    /// Standardized inputs → standardized increments.
    pub net: Network,
    pub input_mean: [f64; MODEL_INPUTS],
    pub input_scale: [f64; MODEL_INPUTS],
    /// Normalized-unit size of one standardized output step, per state component.
    pub delta_scale: [f64; 2],
    pub bases: Bases,
    pub training_box: TrainingBox,
}

/// Model output with its extrapolation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelJacobians {
    pub jacobians: PlantJacobians,
    pub extrapolated: bool,
}

impl TransitionModel {
    fn raw_inputs(features: &FeatureVector, duty: f64) -> [f64; MODEL_INPUTS] {
        [features.current, features.voltage, features.source, duty]
    }

    fn standardized(&self, raw: &[f64; MODEL_INPUTS]) -> [f64; MODEL_INPUTS] {
        let mut z = [0.0; MODEL_INPUTS];
        for k in 0..MODEL_INPUTS {
            z[k] = (raw[k] - self.input_mean[k]) / self.input_scale[k];
        }
        z
    }

    /// Predicted normalized next state (i_n', v_n').
    pub fn predict(&self, features: &FeatureVector, duty: f64) -> Result<[f64; 2], NetError> {
        let z = self.standardized(&Self::raw_inputs(features, duty));
        let out = self.net.forward(&z)?;
        Ok([features.current + self.delta_scale[0] * out[0], features.voltage + self.delta_scale[1] * out[1]])
    }

    pub fn jacobians(&self, features: &FeatureVector, duty: f64) -> Result<ModelJacobians, NetError> {
        let z = self.standardized(&Self::raw_inputs(features, duty));
        let jac = self.net.input_jacobian(&z)?;
        // d(next_r)/d(raw_c) = [r == c] + delta_scale_r · J_rc / input_scale_c
        let entry = |r: usize, c: usize| self.delta_scale[r] * jac.get(r, c) / self.input_scale[c];
        let jacobians = PlantJacobians {
            state: [[1.0 + entry(0, 0), entry(0, 1)], [entry(1, 0), 1.0 + entry(1, 1)]],
            source: [entry(0, 2), entry(1, 2)],
            control: [entry(0, 3), entry(1, 3)],
        };
        let physical = ConverterState::new(features.current * self.bases.current, features.voltage * self.bases.voltage);
        Ok(ModelJacobians { jacobians, extrapolated: !self.training_box.contains(physical, duty) })
    }
}

/// Outcome of [`train_model`].
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub model: TransitionModel,
    /// Mean standardized squared error per iteration on the training split.
    pub epoch_losses: Vec<f64>,
    /// Held-out RMS error in normalized units, per state component.
    pub holdout_rms: [f64; 2],
    pub holdout: Vec<TransitionSample>,
}

impl ModelFit {
    pub fn meets_gate(&self) -> bool {
        self.holdout_rms.iter().all(|&r| r <= MODEL_RMS_GATE)
    }
}

/// Minibatch momentum regression of `net` onto `(inputs, targets)` under mean squared error.
///
/// Returns the mean loss of each epoch (accumulated before each minibatch step).
pub fn fit_regression(
    net: &mut Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    config: &TrainingConfig,
) -> Result<Vec<f64>, NetError> {
    config.validate()?;
    if inputs.len() != targets.len() {
        return Err(NetError::DimensionMismatch { what: "regression targets", expected: inputs.len(), found: targets.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut velocity = Velocity::new(net);
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(net);
            for &k in batch {
                let pass = net.forward_pass(&inputs[k])?;
                let resid: Vec<f64> = pass.output().iter().zip(&targets[k]).map(|(y, t)| y - t).collect();
                total += resid.iter().map(|r| r * r).sum::<f64>();
                let (g, _) = net.backward(&pass, &resid)?;
                grads.add_scaled(&g, 2.0 / batch.len() as f64);
            }
            apply_update(net, &grads, config, &mut velocity)?;
        }
        losses.push(total / inputs.len().max(1) as f64);
    }
    Ok(losses)
}

/// Levenberg–Marquardt settings for [`fit_regression_lm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub iterations: usize,
    pub initial_damping: f64,
    /// Rows of the parameter Jacobian accumulated per block.
    pub block_rows: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { iterations: 200, initial_damping: 1e-3, block_rows: 256 }
    }
}

fn mean_sq_error(net: &Network, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64, NetError> {
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        total += net.forward(x)?.iter().zip(t).map(|(y, t)| (y - t).powi(2)).sum::<f64>();
    }
    Ok(total / inputs.len().max(1) as f64)
}

/// Levenberg–Marquardt least squares of `net` onto `(inputs, targets)`.
///
/// Steps are only accepted when they lower the loss, so the returned
/// per-iteration losses never increase. Stops early once the damping saturates.
pub fn fit_regression_lm(
    net: &mut Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    config: &LmConfig,
) -> Result<Vec<f64>, NetError> {
    if inputs.len() != targets.len() {
        return Err(NetError::DimensionMismatch { what: "regression targets", expected: inputs.len(), found: targets.len() });
    }
    let n_params = net.param_count();
    let n_out = net.output_dim();
    let mut damping = config.initial_damping;
    let mut loss = mean_sq_error(net, inputs, targets)?;
    let mut losses = Vec::with_capacity(config.iterations);
    let block = config.block_rows.max(n_out);
    for _ in 0..config.iterations {
        let mut jtj = DMatrix::<f64>::zeros(n_params, n_params);
        let mut jtr = DVector::<f64>::zeros(n_params);
        let mut rows = DMatrix::<f64>::zeros(block, n_params);
        let mut resid = DVector::<f64>::zeros(block);
        let mut filled = 0;
        let flush = |rows: &DMatrix<f64>, resid: &DVector<f64>, filled: usize, jtj: &mut DMatrix<f64>, jtr: &mut DVector<f64>| {
            let r = rows.rows(0, filled);
            jtj.gemm_tr(1.0, &r, &r, 1.0);
            jtr.gemv_tr(1.0, &r, &resid.rows(0, filled), 1.0);
        };
        for (x, t) in inputs.iter().zip(targets) {
            let pass = net.forward_pass(x)?;
            for k in 0..n_out {
                let mut cot = vec![0.0; n_out];
                cot[k] = 1.0;
                let (g, _) = net.backward(&pass, &cot)?;
                for (c, v) in g.flatten().into_iter().enumerate() {
                    rows[(filled, c)] = v;
                }
                resid[filled] = pass.output()[k] - t[k];
                filled += 1;
                if filled == block {
                    flush(&rows, &resid, filled, &mut jtj, &mut jtr);
                    filled = 0;
                }
            }
        }
        if filled > 0 {
            flush(&rows, &resid, filled, &mut jtj, &mut jtr);
        }
        let params = net.params();
        let mut accepted = false;
        while damping < 1e12 {
            let mut a = jtj.clone();
            for d in 0..n_params {
                a[(d, d)] += damping * (jtj[(d, d)] + 1e-9);
            }
            if let Some(chol) = a.cholesky() {
                let step = chol.solve(&jtr);
                let candidate: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p - d).collect();
                net.set_params(&candidate)?;
                let trial = mean_sq_error(net, inputs, targets)?;
                if trial.is_finite() && trial < loss {
                    loss = trial;
                    damping = (damping / 10.0).max(1e-12);
                    accepted = true;
                    break;
                }
            }
            damping *= 10.0;
        }
        if !accepted {
            net.set_params(&params)?;
            losses.push(loss);
            break;
        }
        losses.push(loss);
    }
    Ok(losses)
}

fn mean_and_scale(rows: &[[f64; MODEL_INPUTS]]) -> ([f64; MODEL_INPUTS], [f64; MODEL_INPUTS]) {
    let n = rows.len() as f64;
    let mut mean = [0.0; MODEL_INPUTS];
    let mut scale = [1.0; MODEL_INPUTS];
    for k in 0..MODEL_INPUTS {
        mean[k] = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
        scale[k] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    }
    (mean, scale)
}

/// Fraction of the (shuffled) dataset held out from model training.
pub const HOLDOUT_FRACTION: f64 = 0.1;

/// Settings for [`train_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFitConfig {
    pub lm: LmConfig,
    /// Training rows are subsampled to at most this many.
    pub max_train_samples: usize,
    pub rng_seed: u64,
}

impl Default for ModelFitConfig {
    fn default() -> Self {
        Self { lm: LmConfig::default(), max_train_samples: 8000, rng_seed: 0 }
    }
}

/// Fit the 2×5 model network on a PI dataset; reports held-out RMS per state.
pub fn train_model(samples: &[TransitionSample], bases: &Bases, config: &ModelFitConfig) -> Result<ModelFit, IdentError> {
    if samples.is_empty() {
        return Err(IdentError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(&mut rng);
    let n_hold = if shuffled.len() >= 10 { (shuffled.len() as f64 * HOLDOUT_FRACTION).round() as usize } else { 0 };
    let holdout = shuffled.split_off(shuffled.len() - n_hold);
    let mut train = shuffled;
    train.truncate(config.max_train_samples.max(1));

    let raw: Vec<[f64; MODEL_INPUTS]> =
        train.iter().map(|s| TransitionModel::raw_inputs(&s.features_now(bases), s.duty)).collect();
    let (input_mean, input_scale) = mean_and_scale(&raw);
    let deltas: Vec<[f64; 2]> = train
        .iter()
        .map(|s| {
            let (a, b) = (s.features_now(bases), s.features_next(bases));
            [b.current - a.current, b.voltage - a.voltage]
        })
        .collect();
    let mut delta_scale = [1.0; 2];
    for k in 0..2 {
        let rms = (deltas.iter().map(|d| d[k] * d[k]).sum::<f64>() / deltas.len() as f64).sqrt();
        delta_scale[k] = if rms > 1e-12 { rms } else { 1.0 };
    }

    let mut model = TransitionModel {
        net: Network::random(
            &[MODEL_INPUTS, MODEL_HIDDEN[0], MODEL_HIDDEN[1], 2],
            Activation::Tanh,
            Activation::Identity,
            &mut rng,
        ),
        input_mean,
        input_scale,
        delta_scale,
        bases: *bases,
        training_box: TrainingBox::default(),
    };
    let inputs: Vec<Vec<f64>> = raw.iter().map(|r| model.standardized(r).to_vec()).collect();
    let targets: Vec<Vec<f64>> = deltas.iter().map(|d| vec![d[0] / delta_scale[0], d[1] / delta_scale[1]]).collect();
    let epoch_losses = fit_regression_lm(&mut model.net, &inputs, &targets, &config.lm)?;

    let eval_set = if holdout.is_empty() { &train } else { &holdout };
    let holdout_rms = prediction_rms(&model, eval_set, bases)?;
    Ok(ModelFit { model, epoch_losses, holdout_rms, holdout })
}

/// Normalized RMS one-step prediction error per state component.
pub fn prediction_rms(model: &TransitionModel, samples: &[TransitionSample], bases: &Bases) -> Result<[f64; 2], NetError> {
    let mut sq = [0.0; 2];
    for s in samples {
        let pred = model.predict(&s.features_now(bases), s.duty)?;
        let next = s.features_next(bases);
        sq[0] += (pred[0] - next.current).powi(2);
        sq[1] += (pred[1] - next.voltage).powi(2);
    }
    let n = samples.len().max(1) as f64;
    Ok([(sq[0] / n).sqrt(), (sq[1] / n).sqrt()])
}

/// Relative Frobenius errors (state block, control block) of learned vs. reference Jacobians.
pub fn jacobian_errors(learned: &PlantJacobians, reference: &PlantJacobians) -> (f64, f64) {
    let rel = |a: Matrix, b: Matrix| {
        let diff = Matrix { rows: a.rows, cols: a.cols, data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect() };
        diff.frobenius() / b.frobenius().max(1e-12)
    };
    (
        rel(learned.state_matrix(), reference.state_matrix()),
        rel(learned.control_matrix(), reference.control_matrix()),
    )
}

/// Nominal-point PI gains used for data collection.
pub fn collection_gains(params: &ConverterParams, v_ref: f64) -> Result<PiGains, IdentError> {
    let duty = converter::duty_for_voltage(v_ref, params)?;
    pi::small_signal_design(params, duty, v_ref).map_err(|e| IdentError::InvalidSpec(e.to_string()))
}
