//! Scenarios, closed-loop runs, trace metrics and the scalar LQR validation plant.

use crate::converter::{self, ConverterError, ConverterParams, ConverterState};
use crate::dhp::{self, ActionMap, Bases, Lambda, StepOutcome, UtilityWeights};
use crate::nnet::{Activation, Layer, Matrix, NetError, Network, TrainingConfig, Velocity};
use crate::pi::{self, PiGains, PiState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::io::{self, Write};
use thiserror::Error;

/// Settling band half-width as a fraction of the reference.
pub const SETTLING_BAND: f64 = 0.02;
pub const TRACE_HEADER: &str = "t,i_L,v_o,duty,v_ref,v_s,R,U,lambda_i,lambda_v,lambda_e,lambda_s";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Converter(#[from] ConverterError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("comparison needs at least two results, got {0}")]
    TooFewResults(usize),
    #[error("comparison mixes scenarios `{0}` and `{1}`")]
    MismatchedScenarios(String, String),
    #[error("riccati iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("plant not stabilizable: b = 0")]
    NotStabilizable,
    #[error("pi design failed: {0}")]
    Pi(#[from] pi::PiError),
}

/// Piecewise-constant signal: `initial` until the first breakpoint, then each step's value.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub initial: f64,
    pub steps: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn constant(v: f64) -> Self {
        Self { initial: v, steps: Vec::new() }
    }

    pub fn step(initial: f64, at: f64, value: f64) -> Self {
        Self { initial, steps: vec![(at, value)] }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.steps.iter().take_while(|(at, _)| *at <= t).last().map_or(self.initial, |&(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub initial_state: ConverterState,
    pub v_ref: Schedule,
    pub load: Schedule,
    pub source: Schedule,
    /// Time the metrics are measured from (the disturbance instant).
    pub reference_time: f64,
    /// Controllers with memory start in equilibrium with the initial state.
    pub presettled: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.duration > 0.0) {
            return Err(HarnessError::InvalidScenario(format!("{}: duration must be positive", self.name)));
        }
        for (what, s) in [("v_ref", &self.v_ref), ("load", &self.load), ("source", &self.source)] {
            let mut last = 0.0;
            for &(at, _) in &s.steps {
                if !(at > last && at <= self.duration) {
                    return Err(HarnessError::InvalidScenario(format!(
                        "{}: {what} breakpoints must increase strictly within (0, duration]",
                        self.name
                    )));
                }
                last = at;
            }
        }
        Ok(())
    }

    /// Plant parameters in force at time `t`.
    pub fn plant_at(&self, params: &ConverterParams, t: f64) -> ConverterParams {
        ConverterParams { load_resistance: self.load.value_at(t), source_voltage: self.source.value_at(t), ..*params }
    }
}

/// Periodic steady state at the duty that holds `v_ref` on average.
pub fn presettled_state(params: &ConverterParams, v_ref: f64) -> Result<(ConverterState, f64), ConverterError> {
    let duty = converter::duty_for_voltage(v_ref, params)?;
    let mut x = converter::steady_state(duty, params)?;
    for _ in 0..4000 {
        x = converter::step_period(x, duty, params)?;
    }
    Ok((x, duty))
}

pub const STEP_TIME: f64 = 0.025;

/// Load after the load step, ohms.
pub const STEPPED_LOAD: f64 = 200.0;
/// Source after the input step, as a fraction of the nominal source.
pub const STEPPED_SOURCE_FRACTION: f64 = 0.9;

/// Start-up, load step and input step around the nominal load and source of `params`.
pub fn builtin_scenarios(params: &ConverterParams) -> Result<Vec<Scenario>, HarnessError> {
    let v_ref = 200.0;
    let (load, source) = (params.load_resistance, params.source_voltage);
    let (settled, _) = presettled_state(params, v_ref)?;
    Ok(vec![
        Scenario {
            name: "startup".into(),
            duration: 0.1,
            initial_state: ConverterState::default(),
            v_ref: Schedule::constant(v_ref),
            load: Schedule::constant(load),
            source: Schedule::constant(source),
            reference_time: 0.0,
            presettled: false,
        },
        Scenario {
            name: "load_step".into(),
            duration: 0.075,
            initial_state: settled,
            v_ref: Schedule::constant(v_ref),
            load: Schedule::step(load, STEP_TIME, STEPPED_LOAD),
            source: Schedule::constant(source),
            reference_time: STEP_TIME,
            presettled: true,
        },
        Scenario {
            name: "input_step".into(),
            duration: 0.075,
            initial_state: settled,
            v_ref: Schedule::constant(v_ref),
            load: Schedule::constant(load),
            source: Schedule::step(source, STEP_TIME, STEPPED_SOURCE_FRACTION * source),
            reference_time: STEP_TIME,
            presettled: true,
        },
    ])
}

pub fn find_scenario(params: &ConverterParams, name: &str) -> Result<Scenario, HarnessError> {
    builtin_scenarios(params)?
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| HarnessError::InvalidScenario(format!("unknown scenario `{name}` (startup, load_step, input_step)")))
}

/// What a controller sees at the start of a control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub state: ConverterState,
    pub v_ref: f64,
    pub v_s: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct PolicyError(pub String);

pub trait Policy {
    fn duty(&mut self, obs: &Observation) -> Result<f64, PolicyError>;

    /// Called after the plant advanced one period under `duty`.
    fn observe(&mut self, _obs: &Observation, _duty: f64, _next: ConverterState, _plant: &ConverterParams) -> Result<(), PolicyError> {
        Ok(())
    }

    fn lambda(&self) -> Option<Vec<f64>> {
        None
    }
}

/// PI baseline as a [`Policy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiPolicy {
    pub gains: PiGains,
    pub state: PiState,
    pub dt: f64,
}

impl PiPolicy {
    /// Recipe gains at the nominal operating point; integrator pre-settled when the scenario asks for it.
    pub fn for_scenario(scenario: &Scenario, params: &ConverterParams) -> Result<Self, HarnessError> {
        let v_ref = scenario.v_ref.initial;
        let nominal = scenario.plant_at(params, 0.0);
        let duty = converter::duty_for_voltage(v_ref, &nominal)?;
        let gains = pi::small_signal_design(&nominal, duty, v_ref)?;
        let state = if scenario.presettled { PiState::presettled(&gains, duty) } else { PiState::default() };
        Ok(Self { gains, state, dt: params.control_period })
    }
}

impl Policy for PiPolicy {
    fn duty(&mut self, obs: &Observation) -> Result<f64, PolicyError> {
        let (duty, next) = pi::pi_step(self.state, &self.gains, obs.v_ref - obs.state.output_voltage, self.dt);
        self.state = next;
        Ok(duty)
    }
}

/// Fixed duty, for open-loop runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedDuty(pub f64);

impl Policy for FixedDuty {
    fn duty(&mut self, _obs: &Observation) -> Result<f64, PolicyError> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub i_l: f64,
    pub v_o: f64,
    pub duty: f64,
    pub v_ref: f64,
    pub v_s: f64,
    pub load: f64,
    pub utility: f64,
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutcome {
    pub trace: Vec<TraceRow>,
    /// Set when the run stopped early; the trace is partial.
    pub failure: Option<String>,
}

/// Step `scenario` one control period at a time under `policy`.
///
/// Each row holds the state at the start of a period and the duty applied over it.
pub fn run_policy(scenario: &Scenario, policy: &mut dyn Policy, params: &ConverterParams) -> Result<RunOutcome, HarnessError> {
    scenario.validate()?;
    let dt = params.control_period;
    let steps = (scenario.duration / dt).round() as usize;
    let bases = Bases::default();
    let weights = UtilityWeights::default();
    let mut x = scenario.initial_state;
    let mut out = RunOutcome { trace: Vec::with_capacity(steps), failure: None };
    for k in 0..steps {
        let t = k as f64 * dt;
        let plant = scenario.plant_at(params, t);
        let obs = Observation { t, state: x, v_ref: scenario.v_ref.value_at(t), v_s: plant.source_voltage };
        let duty = match policy.duty(&obs) {
            Ok(d) => d,
            Err(e) => {
                out.failure = Some(format!("controller failed at t = {t:.6} s: {e}"));
                break;
            }
        };
        let next = match converter::step_period(x, duty, &plant) {
            Ok(n) if n.is_finite() => n,
            Ok(n) => {
                out.failure = Some(format!("plant diverged at t = {t:.6} s: ({}, {})", n.inductor_current, n.output_voltage));
                break;
            }
            Err(e) => {
                out.failure = Some(format!("plant diverged at t = {t:.6} s: {e}"));
                break;
            }
        };
        let learn = policy.observe(&obs, duty, next, &plant);
        let features = dhp::FeatureVector::new(x, obs.v_ref, obs.v_s, &bases);
        out.trace.push(TraceRow {
            t,
            i_l: x.inductor_current,
            v_o: x.output_voltage,
            duty,
            v_ref: obs.v_ref,
            v_s: obs.v_s,
            load: plant.load_resistance,
            utility: dhp::utility(&features, &weights).0,
            lambda: policy.lambda(),
        });
        if let Err(e) = learn {
            out.failure = Some(format!("learning update failed at t = {t:.6} s: {e}"));
            break;
        }
        x = next;
    }
    Ok(out)
}

/// Run a scenario and score it.
pub fn run_scenario(scenario: &Scenario, policy: &mut dyn Policy, params: &ConverterParams) -> Result<(RunOutcome, Metrics), HarnessError> {
    let run = run_policy(scenario, policy, params)?;
    let mut m = compute_metrics(&run.trace, scenario.reference_time);
    let complete = run.failure.is_none();
    if !complete {
        m.settling_time = None;
    }
    Ok((run, m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Seconds from the reference time until v_o enters the band for good; None if never.
    pub settling_time: Option<f64>,
    /// Peak excursion above the reference after the reference time, percent.
    pub overshoot: f64,
    /// Mean |v_ref − v_o| over the final 10% of the trace, volts.
    pub steady_state_error: f64,
    /// Peak-to-peak of the final quarter is not decaying against the quarter before.
    pub oscillation: bool,
}

fn peak_to_peak(rows: &[TraceRow]) -> f64 {
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.v_o), hi.max(r.v_o)));
    if rows.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Final-quarter ripple below this fraction of the reference counts as settled flat.
pub const OSCILLATION_FLOOR: f64 = 0.0025;

/// Metrics over the rows at or after `reference_time`.
pub fn compute_metrics(trace: &[TraceRow], reference_time: f64) -> Metrics {
    let rows: Vec<&TraceRow> = trace.iter().filter(|r| r.t >= reference_time - 1e-12).collect();
    if rows.is_empty() {
        return Metrics { settling_time: None, overshoot: 0.0, steady_state_error: 0.0, oscillation: false };
    }
    let outside = |r: &TraceRow| (r.v_o - r.v_ref).abs() > SETTLING_BAND * r.v_ref.abs();
    let settling_time = match rows.iter().rposition(|r| outside(r)) {
        None => Some(0.0),
        Some(k) if k + 1 == rows.len() => None,
        Some(k) => {
            // interpolate the band crossing between the last outside row and the next one
            let (a, b) = (rows[k], rows[k + 1]);
            let edge = |r: &TraceRow| {
                let band = SETTLING_BAND * r.v_ref.abs();
                if r.v_o > r.v_ref {
                    r.v_ref + band
                } else {
                    r.v_ref - band
                }
            };
            let target = edge(a);
            let frac = if (b.v_o - a.v_o).abs() > 0.0 { ((target - a.v_o) / (b.v_o - a.v_o)).clamp(0.0, 1.0) } else { 1.0 };
            Some(a.t + frac * (b.t - a.t) - reference_time)
        }
    };
    let overshoot = rows
        .iter()
        .map(|r| if r.v_ref.abs() > 0.0 { (r.v_o - r.v_ref) / r.v_ref * 100.0 } else { 0.0 })
        .fold(0.0, f64::max);
    let tail = (rows.len() / 10).max(1);
    let steady_state_error = rows[rows.len() - tail..].iter().map(|r| (r.v_ref - r.v_o).abs()).sum::<f64>() / tail as f64;
    let quarter = rows.len() / 4;
    let oscillation = if quarter >= 2 {
        let owned = |s: &[&TraceRow]| s.iter().map(|r| (*r).clone()).collect::<Vec<_>>();
        let last = peak_to_peak(&owned(&rows[rows.len() - quarter..]));
        let prev = peak_to_peak(&owned(&rows[rows.len() - 2 * quarter..rows.len() - quarter]));
        let v_ref = rows[rows.len() - 1].v_ref.abs();
        last >= 0.9 * prev && last > OSCILLATION_FLOOR * v_ref
    } else {
        false
    };
    Metrics { settling_time, overshoot, steady_state_error, oscillation }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in trace {
        let vals = [r.t, r.i_l, r.v_o, r.duty, r.v_ref, r.v_s, r.load, r.utility];
        let mut cells: Vec<String> = vals.iter().map(|v| fmt_f64(*v)).collect();
        // controllers without a critic leave the λ columns empty
        let lambda = r.lambda.as_deref().unwrap_or(&[]);
        cells.extend((0..4).map(|k| lambda.get(k).map_or(String::new(), |v| fmt_f64(*v))));
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Key-value summary of one run.
pub fn metrics_summary(scenario: &str, controller: &str, m: &Metrics) -> String {
    let settling = m.settling_time.map_or("unsettled".to_string(), |t| format!("{t:.9}"));
    format!(
        "scenario = {scenario}\ncontroller = {controller}\nsettling_time_s = {settling}\novershoot_pct = {:.6}\nsteady_state_error_v = {:.6}\noscillation = {}\n",
        m.overshoot, m.steady_state_error, m.oscillation
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Winner {
    Tag(String),
    Tie,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub scenario: String,
    pub rows: Vec<(String, Metrics)>,
    pub settling_winner: Winner,
    pub overshoot_winner: Winner,
}

fn winner_by(rows: &[(String, Metrics)], key: impl Fn(&Metrics) -> f64) -> Winner {
    let best = rows.iter().map(|(_, m)| key(m)).fold(f64::INFINITY, f64::min);
    let at_best: Vec<&String> = rows.iter().filter(|(_, m)| key(m) == best).map(|(t, _)| t).collect();
    if at_best.len() == 1 {
        Winner::Tag(at_best[0].clone())
    } else {
        Winner::Tie
    }
}

/// Side-by-side metrics on one scenario with the winner per metric (lower is better).
pub fn compare_report(scenario: &str, results: &[(String, String, Metrics)]) -> Result<Comparison, HarnessError> {
    if results.len() < 2 {
        return Err(HarnessError::TooFewResults(results.len()));
    }
    if let Some((_, other, _)) = results.iter().find(|(_, s, _)| s != scenario) {
        return Err(HarnessError::MismatchedScenarios(scenario.to_string(), other.clone()));
    }
    let rows: Vec<(String, Metrics)> = results.iter().map(|(t, _, m)| (t.clone(), *m)).collect();
    Ok(Comparison {
        scenario: scenario.to_string(),
        settling_winner: winner_by(&rows, |m| m.settling_time.unwrap_or(f64::INFINITY)),
        overshoot_winner: winner_by(&rows, |m| m.overshoot),
        rows,
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = format!("scenario = {}\n", self.scenario);
        let _ = writeln!(s, "{:<12} {:>14} {:>14} {:>14} {:>12}", "controller", "settling_ms", "overshoot_pct", "sse_v", "oscillation");
        for (tag, m) in &self.rows {
            let settling = m.settling_time.map_or("unsettled".to_string(), |t| format!("{:.3}", t * 1e3));
            let _ = writeln!(s, "{tag:<12} {settling:>14} {:>14.3} {:>14.4} {:>12}", m.overshoot, m.steady_state_error, m.oscillation);
        }
        let name = |w: &Winner| match w {
            Winner::Tag(t) => t.clone(),
            Winner::Tie => "tie".to_string(),
        };
        let _ = writeln!(s, "settling_winner = {}", name(&self.settling_winner));
        let _ = writeln!(s, "overshoot_winner = {}", name(&self.overshoot_winner));
        s
    }
}

/// Scalar plant x' = a·x + b·u with cost q·x² + r·u² and discount γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrPlant {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    pub gamma: f64,
}

impl Default for LqrPlant {
    fn default() -> Self {
        Self { a: 0.9, b: 0.5, q: 1.0, r: 1.0, gamma: 1.0 }
    }
}

impl LqrPlant {
    pub fn riccati_residual(&self, p: f64) -> f64 {
        let g = self.gamma;
        self.q + g * self.a * self.a * p - (g * self.a * self.b * p).powi(2) / (self.r + g * self.b * self.b * p) - p
    }
}

pub const RICCATI_MAX_ITER: usize = 1_000_000;

/// Discounted scalar Riccati fixed point: returns (p, k) with u* = −k·x and J*(x) = p·x².
pub fn riccati_solve(plant: &LqrPlant) -> Result<(f64, f64), HarnessError> {
    if plant.b == 0.0 {
        return Err(HarnessError::NotStabilizable);
    }
    let LqrPlant { a, b, q, r, gamma: g } = *plant;
    let mut p = q;
    for _ in 0..RICCATI_MAX_ITER {
        let next = q + g * a * a * p - (g * a * b * p).powi(2) / (r + g * b * b * p);
        if (next - p).abs() <= 1e-12 {
            let k = g * a * b * next / (r + g * b * b * next);
            return Ok((next, k));
        }
        p = next;
    }
    Err(HarnessError::NoConvergence(RICCATI_MAX_ITER))
}

/// Settings of the scalar DHP validation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrTraining {
    pub hidden: usize,
    pub pretrain: TrainingConfig,
    pub critic: TrainingConfig,
    pub action: TrainingConfig,
    pub pretrain_samples: usize,
    pub episodes: usize,
    pub episode_steps: usize,
}

impl Default for LqrTraining {
    fn default() -> Self {
        Self {
            hidden: 6,
            pretrain: TrainingConfig { learning_rate: 0.01, momentum: 0.9, max_gradient_norm: 10.0, epochs: 60, batch_size: 1, ..Default::default() },
            critic: TrainingConfig { learning_rate: 0.005, momentum: 0.0, max_gradient_norm: 10.0, epochs: 1, batch_size: 1, ..Default::default() },
            action: TrainingConfig { learning_rate: 0.002, momentum: 0.0, max_gradient_norm: 10.0, epochs: 1, batch_size: 1, ..Default::default() },
            pretrain_samples: 400,
            episodes: 3000,
            episode_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrResult {
    pub critic: Network,
    pub action: Network,
    pub p: f64,
    pub k: f64,
    /// max |λ̂(x) − 2px| / max |2px| over the grid on [−1, 1].
    pub lambda_error: f64,
    /// Least-squares slope of −u(x) on the grid.
    pub gain: f64,
    pub gain_error: f64,
    pub skipped: usize,
}

fn lqr_targets(plant: &LqrPlant, critic: &Network, action: &Network, x: f64) -> Result<(Lambda, f64, f64, f64), NetError> {
    let (u, da) = dhp::act_with_gradient(action, &[x], ActionMap::Identity)?;
    let x_next = plant.a * x + plant.b * u;
    let lambda_next = critic.forward(&[x_next])?;
    let dxn_dx = Matrix { rows: 1, cols: 1, data: vec![plant.a] };
    let target = dhp::critic_target(&lambda_next, &[2.0 * plant.q * x], &dxn_dx, &[plant.b], 2.0 * plant.r * u, &da, plant.gamma);
    Ok((target, lambda_next[0], u, x_next))
}

/// Full DHP run on the scalar plant: critic pretraining under the initial
/// (zero) policy, then per-step online critic and action updates on episodes
/// from random initial states.
pub fn train_lqr_dhp(plant: &LqrPlant, settings: &LqrTraining, seed: u64) -> Result<LqrResult, HarnessError> {
    let (p, k) = riccati_solve(plant)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut critic = Network::random(&[1, settings.hidden, 1], Activation::Tanh, Activation::Identity, &mut rng);
    let mut action = Network::from_layers(
        vec![Layer { inputs: 1, outputs: 1, weights: vec![0.0], biases: vec![0.0] }],
        Activation::Identity,
        Activation::Identity,
    )?;
    let mut skipped = 0;

    let xs: Vec<f64> = (0..settings.pretrain_samples).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut velocity = Velocity::new(&critic);
    for _ in 0..settings.pretrain.epochs {
        for &x in &xs {
            let (target, ..) = lqr_targets(plant, &critic, &action, x)?;
            if dhp::update_critic(&mut critic, &mut velocity, &[x], &target, &settings.pretrain)? == StepOutcome::Skipped {
                skipped += 1;
            }
        }
    }

    let mut cv = Velocity::new(&critic);
    let mut av = Velocity::new(&action);
    for _ in 0..settings.episodes {
        let mut x: f64 = rng.gen_range(-1.0..1.0);
        for _ in 0..settings.episode_steps {
            let (target, lambda_next, u, x_next) = lqr_targets(plant, &critic, &action, x)?;
            if dhp::update_critic(&mut critic, &mut cv, &[x], &target, &settings.critic)? == StepOutcome::Skipped {
                skipped += 1;
            }
            let step = dhp::update_action(
                &mut action,
                &mut av,
                &[x],
                &[lambda_next],
                &[plant.b],
                2.0 * plant.r * u,
                plant.gamma,
                ActionMap::Identity,
                &settings.action,
            )?;
            if step == StepOutcome::Skipped {
                skipped += 1;
            }
            x = x_next;
        }
    }

    let grid: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 * 0.05).collect();
    let mut worst: f64 = 0.0;
    let (mut sxu, mut sxx) = (0.0, 0.0);
    for &x in &grid {
        let lam = critic.forward(&[x])?[0];
        worst = worst.max((lam - 2.0 * p * x).abs());
        let u = dhp::act(&action, &[x], ActionMap::Identity)?;
        sxu += x * u;
        sxx += x * x;
    }
    let gain = -sxu / sxx;
    Ok(LqrResult {
        critic,
        action,
        p,
        k,
        lambda_error: worst / (2.0 * p),
        gain,
        gain_error: (gain - k).abs() / k.abs(),
        skipped,
    })
}
