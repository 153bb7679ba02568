//! Switching-level boost converter.
//!
//! The plant is piecewise affine: between switching events each topology is a
//! linear system with a constant input, so every segment is advanced with its
//! closed-form solution instead of an ODE stepper. The state vector is the
//! inductor current and the output (capacitor) voltage.
//!
//! Three topologies exist:
//!
//! * switch on: the inductor charges from the source, the capacitor feeds the load;
//! * switch off, diode conducting: inductor current flows into the output;
//! * switch off, diode blocking: inductor current is zero and the capacitor
//!   discharges into the load (discontinuous conduction).

use thiserror::Error;

/// Tolerance on the inductor current when locating a diode turn-off instant.
pub const ZERO_CROSSING_TOL: f64 = 1e-9;

/// Sample count used to bracket the first current zero inside an off segment.
const CROSSING_SCAN_POINTS: usize = 32;

/// Upper bound on segment transitions inside a single off phase.
const MAX_OFF_SEGMENTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConverterError {
    #[error("duty cycle {0} outside [0, 1]")]
    InvalidDuty(f64),
    #[error("non-finite converter state (i_L = {current}, v_o = {voltage})")]
    NonFinite { current: f64, voltage: f64 },
    #[error("switch mode {mode:?} requires zero inductor current, got {current} A")]
    InconsistentMode { mode: SwitchMode, current: f64 },
    #[error("operating point at duty {duty} is in discontinuous conduction; averaged CCM model does not apply")]
    Discontinuous { duty: f64 },
    #[error("invalid converter parameter: {0}")]
    InvalidParams(String),
}

/// Physical constants and integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams {
    /// L, henries.
    pub inductance: f64,
    /// C, farads.
    pub capacitance: f64,
    /// R, ohms.
    pub load_resistance: f64,
    /// R_L, series resistance of the inductor, ohms.
    pub inductor_resistance: f64,
    /// v_s, volts.
    pub source_voltage: f64,
    /// f_sw, hertz.
    pub switching_frequency: f64,
    /// Control update interval, seconds. One duty update per switching period.
    pub control_period: f64,
    /// Trace-recording resolution inside a period. Does not affect accuracy.
    pub substeps_per_period: usize,
}

impl Default for ConverterParams {
    fn default() -> Self {
        let switching_frequency = 20e3;
        Self {
            inductance: 860e-6,
            capacitance: 860e-6,
            load_resistance: 80.0,
            inductor_resistance: 0.5,
            source_voltage: 60.0,
            switching_frequency,
            control_period: 1.0 / switching_frequency,
            substeps_per_period: 100,
        }
    }
}

impl ConverterParams {
    pub fn validate(&self) -> Result<(), ConverterError> {
        let positive = [
            ("inductance", self.inductance),
            ("capacitance", self.capacitance),
            ("load_resistance", self.load_resistance),
            ("switching_frequency", self.switching_frequency),
            ("control_period", self.control_period),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConverterError::InvalidParams(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.inductor_resistance.is_finite() && self.inductor_resistance >= 0.0) {
            return Err(ConverterError::InvalidParams(format!(
                "inductor_resistance must be non-negative, got {}",
                self.inductor_resistance
            )));
        }
        if !(self.source_voltage.is_finite() && self.source_voltage >= 0.0) {
            return Err(ConverterError::InvalidParams(format!(
                "source_voltage must be non-negative, got {}",
                self.source_voltage
            )));
        }
        if self.substeps_per_period == 0 {
            return Err(ConverterError::InvalidParams("substeps_per_period must be positive".into()));
        }
        let period = 1.0 / self.switching_frequency;
        if ((self.control_period - period) / period).abs() > 1e-9 {
            return Err(ConverterError::InvalidParams(format!(
                "control_period {} must equal the switching period {}",
                self.control_period, period
            )));
        }
        Ok(())
    }

    /// Copy with a new switching frequency; the control period follows it.
    pub fn with_switching_frequency(mut self, f_sw: f64) -> Self {
        self.switching_frequency = f_sw;
        self.control_period = 1.0 / f_sw;
        self
    }

    /// RC time constant of the output stage.
    pub fn rc(&self) -> f64 {
        self.load_resistance * self.capacitance
    }
}

/// x(t) = [i_L, v_o].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConverterState {
    pub inductor_current: f64,
    pub output_voltage: f64,
}

impl ConverterState {
    pub fn new(inductor_current: f64, output_voltage: f64) -> Self {
        Self { inductor_current, output_voltage }
    }

    pub fn is_finite(&self) -> bool {
        self.inductor_current.is_finite() && self.output_voltage.is_finite()
    }

    fn check(&self) -> Result<(), ConverterError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(ConverterError::NonFinite { current: self.inductor_current, voltage: self.output_voltage })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SwitchMode {
    SwitchOn,
    SwitchOffConducting,
    SwitchOffIdle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConductionMode {
    Ccm,
    Dcm,
    Boundary,
}

/// State rate (di_L/dt, dv_o/dt) for the given topology.
pub fn derivative(
    state: ConverterState,
    mode: SwitchMode,
    params: &ConverterParams,
) -> Result<(f64, f64), ConverterError> {
    state.check()?;
    let ConverterState { inductor_current: i, output_voltage: v } = state;
    let l = params.inductance;
    let c = params.capacitance;
    let rc = params.rc();
    let rl = params.inductor_resistance;
    let vs = params.source_voltage;
    Ok(match mode {
        SwitchMode::SwitchOn => ((-rl * i + vs) / l, -v / rc),
        SwitchMode::SwitchOffConducting => ((-rl * i - v + vs) / l, i / c - v / rc),
        SwitchMode::SwitchOffIdle => {
            if i != 0.0 {
                return Err(ConverterError::InconsistentMode { mode, current: i });
            }
            (0.0, -v / rc)
        }
    })
}

/// (e^{λt} − 1)/λ, continuous at λ = 0.
fn phi(lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        t
    } else {
        (lambda * t).exp_m1() / lambda
    }
}

/// Exponential of a 2×2 matrix times t, via the Cayley–Hamilton closed form.
fn expm2(a: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let s = 0.5 * (a[0][0] + a[1][1]);
    let half_diff = 0.5 * (a[0][0] - a[1][1]);
    let delta = half_diff * half_diff + a[0][1] * a[1][0];
    // e^{At} = e^{st} [c0 I + c1 (A - sI)]
    let arg = delta * t * t;
    let (c0, c1) = if arg.abs() < 1e-8 {
        (1.0 + arg / 2.0 + arg * arg / 24.0, t * (1.0 + arg / 6.0 + arg * arg / 120.0))
    } else if delta > 0.0 {
        let q = delta.sqrt();
        ((q * t).cosh(), (q * t).sinh() / q)
    } else {
        let w = (-delta).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    };
    let e = (s * t).exp();
    [
        [e * (c0 + c1 * half_diff), e * c1 * a[0][1]],
        [e * c1 * a[1][0], e * (c0 - c1 * half_diff)],
    ]
}

/// One affine segment x' = A x + b started from `initial`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub mode: SwitchMode,
    /// Offset of the segment start inside the period, seconds.
    pub start: f64,
    pub duration: f64,
    pub initial: ConverterState,
}

impl Segment {
    /// Closed-form state `tau` seconds into the segment.
    pub fn state_at(&self, params: &ConverterParams, tau: f64) -> ConverterState {
        propagate(self.initial, self.mode, params, tau)
    }

    pub fn end_state(&self, params: &ConverterParams) -> ConverterState {
        self.state_at(params, self.duration)
    }
}

fn propagate(x0: ConverterState, mode: SwitchMode, params: &ConverterParams, t: f64) -> ConverterState {
    let l = params.inductance;
    let c = params.capacitance;
    let rl = params.inductor_resistance;
    let vs = params.source_voltage;
    let decay = -1.0 / params.rc();
    let i0 = x0.inductor_current;
    let v0 = x0.output_voltage;
    match mode {
        SwitchMode::SwitchOn => {
            let li = -rl / l;
            ConverterState::new(i0 + (vs - rl * i0) / l * phi(li, t), v0 * (decay * t).exp())
        }
        SwitchMode::SwitchOffIdle => ConverterState::new(0.0, v0 * (decay * t).exp()),
        SwitchMode::SwitchOffConducting => {
            let a = [[-rl / l, -1.0 / l], [1.0 / c, decay]];
            // A is always invertible here: det = rl/(l·R·c) + 1/(l·c) > 0.
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let b0 = vs / l;
            // x_eq = -A^{-1} b with b = (vs/l, 0)
            let eq_i = -(a[1][1] * b0) / det;
            let eq_v = (a[1][0] * b0) / det;
            let m = expm2(a, t);
            let di = i0 - eq_i;
            let dv = v0 - eq_v;
            ConverterState::new(eq_i + m[0][0] * di + m[0][1] * dv, eq_v + m[1][0] * di + m[1][1] * dv)
        }
    }
}

/// Exact trajectory of one switching period as a list of affine segments.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTrajectory {
    pub segments: Vec<Segment>,
    pub end: ConverterState,
}

impl PeriodTrajectory {
    /// State at offset `t` inside the period.
    pub fn state_at(&self, params: &ConverterParams, t: f64) -> ConverterState {
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.start <= t)
            .unwrap_or(&self.segments[0]);
        seg.state_at(params, (t - seg.start).clamp(0.0, seg.duration))
    }

    /// True when any part of the period ran with the diode blocking.
    pub fn entered_dcm(&self) -> bool {
        self.segments.iter().any(|s| s.mode == SwitchMode::SwitchOffIdle && s.duration > 0.0)
    }
}

fn validate_step_inputs(state: ConverterState, duty: f64) -> Result<(), ConverterError> {
    if !(0.0..=1.0).contains(&duty) {
        return Err(ConverterError::InvalidDuty(duty));
    }
    state.check()
}

/// Full segment decomposition of one PWM period.
pub fn simulate_period(
    state: ConverterState,
    duty: f64,
    params: &ConverterParams,
) -> Result<PeriodTrajectory, ConverterError> {
    validate_step_inputs(state, duty)?;
    let period = params.control_period;
    let on_time = duty * period;
    let mut segments = Vec::with_capacity(3);
    let mut x = ConverterState::new(state.inductor_current.max(0.0), state.output_voltage);

    if on_time > 0.0 {
        let seg = Segment { mode: SwitchMode::SwitchOn, start: 0.0, duration: on_time, initial: x };
        x = seg.end_state(params);
        segments.push(seg);
    }

    let mut t = on_time;
    let mut resume_conduction = false;
    for _ in 0..MAX_OFF_SEGMENTS {
        if t >= period {
            break;
        }
        let remaining = period - t;
        let blocking = !resume_conduction
            && x.inductor_current <= 0.0
            && x.output_voltage > params.source_voltage;
        if blocking {
            x.inductor_current = 0.0;
            // diode stays off until the capacitor sags below the source
            let exit = if params.source_voltage > 0.0 {
                params.rc() * (x.output_voltage / params.source_voltage).ln()
            } else {
                f64::INFINITY
            };
            let duration = exit.min(remaining);
            let seg = Segment { mode: SwitchMode::SwitchOffIdle, start: t, duration, initial: x };
            x = seg.end_state(params);
            segments.push(seg);
            t += duration;
            resume_conduction = true;
        } else {
            x.inductor_current = x.inductor_current.max(0.0);
            let seg = conducting_segment(x, t, remaining, params);
            x = seg.end_state(params);
            t += seg.duration;
            if seg.duration < remaining {
                // diode turn-off: project exactly onto the i_L = 0 manifold
                x.inductor_current = 0.0;
            }
            segments.push(seg);
            resume_conduction = false;
        }
    }
    x.inductor_current = x.inductor_current.max(0.0);
    x.check()?;
    Ok(PeriodTrajectory { segments, end: x })
}

/// Conducting off-segment truncated at the first inductor-current zero, if any.
fn conducting_segment(x: ConverterState, start: f64, max_duration: f64, params: &ConverterParams) -> Segment {
    let mode = SwitchMode::SwitchOffConducting;
    let current = |tau: f64| propagate(x, mode, params, tau).inductor_current;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=CROSSING_SCAN_POINTS {
        let tau = max_duration * k as f64 / CROSSING_SCAN_POINTS as f64;
        if current(tau) <= 0.0 {
            hi = Some(tau);
            break;
        }
        lo = tau;
    }
    let duration = match hi {
        None => max_duration,
        Some(mut hi) => {
            let mut mid = hi;
            for _ in 0..200 {
                mid = 0.5 * (lo + hi);
                let i = current(mid);
                if i.abs() <= ZERO_CROSSING_TOL || hi - lo <= f64::EPSILON * max_duration {
                    break;
                }
                if i > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            mid
        }
    };
    Segment { mode, start, duration, initial: x }
}

/// Advance exactly one switching period at the given duty cycle.
pub fn step_period(state: ConverterState, duty: f64, params: &ConverterParams) -> Result<ConverterState, ConverterError> {
    simulate_period(state, duty, params).map(|p| p.end)
}

/// Uniformly resampled states within one period (`substeps_per_period + 1` points, both ends included).
pub fn sample_period(
    state: ConverterState,
    duty: f64,
    params: &ConverterParams,
) -> Result<Vec<(f64, ConverterState)>, ConverterError> {
    let traj = simulate_period(state, duty, params)?;
    let n = params.substeps_per_period;
    Ok((0..=n)
        .map(|k| {
            let t = params.control_period * k as f64 / n as f64;
            if k == n {
                (t, traj.end)
            } else {
                (t, traj.state_at(params, t))
            }
        })
        .collect())
}

fn averaged_equilibrium(duty: f64, params: &ConverterParams) -> ConverterState {
    let off = 1.0 - duty;
    let r = params.load_resistance;
    let v = params.source_voltage * off * r / (off * off * r + params.inductor_resistance);
    ConverterState::new(v / (r * off), v)
}

/// Peak-to-peak inductor ripple v_s·D/(L·f_sw).
pub fn ripple_peak_to_peak(duty: f64, params: &ConverterParams) -> f64 {
    params.source_voltage * duty / (params.inductance * params.switching_frequency)
}

/// Cycle-averaged CCM equilibrium at a fixed duty cycle.
pub fn steady_state(duty: f64, params: &ConverterParams) -> Result<ConverterState, ConverterError> {
    if !(0.0..1.0).contains(&duty) {
        return Err(ConverterError::InvalidDuty(duty));
    }
    if duty > 0.0 && conduction_mode(duty, params) == ConductionMode::Dcm {
        return Err(ConverterError::Discontinuous { duty });
    }
    Ok(averaged_equilibrium(duty, params))
}

/// CCM iff the averaged inductor current exceeds half the ripple.
pub fn conduction_mode(duty: f64, params: &ConverterParams) -> ConductionMode {
    let mean = averaged_equilibrium(duty, params).inductor_current;
    let half_ripple = 0.5 * ripple_peak_to_peak(duty, params);
    let scale = mean.abs().max(half_ripple.abs()).max(f64::MIN_POSITIVE);
    if ((mean - half_ripple) / scale).abs() <= 1e-12 {
        ConductionMode::Boundary
    } else if mean > half_ripple {
        ConductionMode::Ccm
    } else {
        ConductionMode::Dcm
    }
}

/// Duty cycle at which the averaged CCM model settles at `v_target`.
///
/// Solves R(1−D)²·v − v_s·R(1−D) + R_L·v = 0 for the large root of (1−D).
pub fn duty_for_voltage(v_target: f64, params: &ConverterParams) -> Result<f64, ConverterError> {
    let r = params.load_resistance;
    let a = r * v_target;
    let b = -params.source_voltage * r;
    let c = params.inductor_resistance * v_target;
    if a == 0.0 {
        return Err(ConverterError::InvalidParams("target voltage must be positive".into()));
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(ConverterError::InvalidParams(format!(
            "{v_target} V is above the maximum averaged output for these losses"
        )));
    }
    let off = (-b + disc.sqrt()) / (2.0 * a);
    let duty = 1.0 - off;
    if !(0.0..1.0).contains(&duty) {
        return Err(ConverterError::InvalidDuty(duty));
    }
    Ok(duty)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal() -> ConverterParams {
        ConverterParams::default()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn derivative_switch_on_from_rest() {
        let (di, dv) = derivative(ConverterState::new(0.0, 0.0), SwitchMode::SwitchOn, &nominal()).unwrap();
        assert!((di - 69767.44).abs() < 0.01, "{di}");
        assert_eq!(dv, 0.0);
    }

    #[test]
    fn derivative_zero_input_zero_state() {
        let p = ConverterParams { source_voltage: 0.0, ..nominal() };
        for mode in [SwitchMode::SwitchOn, SwitchMode::SwitchOffConducting, SwitchMode::SwitchOffIdle] {
            assert_eq!(derivative(ConverterState::default(), mode, &p).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn derivative_off_conducting_row_by_row() {
        let (di, dv) =
            derivative(ConverterState::new(9.01, 200.0), SwitchMode::SwitchOffConducting, &nominal()).unwrap();
        assert!((di + 168029.07).abs() < 0.1, "{di}");
        assert!((dv - 7569.77).abs() < 0.1, "{dv}");
    }

    #[test]
    fn derivative_rejects_idle_with_current() {
        let err = derivative(ConverterState::new(1.0, 10.0), SwitchMode::SwitchOffIdle, &nominal()).unwrap_err();
        assert!(matches!(err, ConverterError::InconsistentMode { .. }));
    }

    #[test]
    fn rc_decay_over_one_period() {
        let p = ConverterParams { source_voltage: 0.0, ..nominal() };
        let x = step_period(ConverterState::new(0.0, 200.0), 0.0, &p).unwrap();
        assert_eq!(x.inductor_current, 0.0);
        let expected = 200.0 * (-p.control_period / p.rc()).exp();
        assert!(rel(x.output_voltage, expected) < 1e-14);
        assert!((x.output_voltage - 199.8547).abs() < 1e-4);
    }

    #[test]
    fn rl_charge_with_switch_held_on() {
        let p = nominal();
        let x = step_period(ConverterState::default(), 1.0, &p).unwrap();
        let expected = 60.0 / 0.5 * (1.0 - (-0.5 * p.control_period / p.inductance).exp());
        assert!(rel(x.inductor_current, expected) < 1e-12);
        assert!((x.inductor_current - 3.4385).abs() < 1e-3);
        assert_eq!(x.output_voltage, 0.0);
    }

    #[test]
    fn rejects_bad_duty_and_state() {
        let p = nominal();
        assert!(matches!(step_period(ConverterState::default(), 1.2, &p), Err(ConverterError::InvalidDuty(_))));
        assert!(matches!(step_period(ConverterState::default(), -0.1, &p), Err(ConverterError::InvalidDuty(_))));
        assert!(matches!(
            step_period(ConverterState::new(f64::NAN, 0.0), 0.5, &p),
            Err(ConverterError::NonFinite { .. })
        ));
    }

    #[test]
    fn expm2_matches_series() {
        let a = [[-581.0, -1162.0], [1162.0, -14.5]];
        let t = 3e-5;
        let m = expm2(a, t);
        // truncated Taylor series
        let mut term = [[1.0, 0.0], [0.0, 1.0]];
        let mut sum = term;
        for k in 1..30 {
            let mut next = [[0.0; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    next[r][c] = (term[r][0] * a[0][c] + term[r][1] * a[1][c]) * t / k as f64;
                }
            }
            term = next;
            for r in 0..2 {
                for c in 0..2 {
                    sum[r][c] += term[r][c];
                }
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                assert!((m[r][c] - sum[r][c]).abs() < 1e-14, "{r}{c}: {} vs {}", m[r][c], sum[r][c]);
            }
        }
    }

    #[test]
    fn steady_state_examples() {
        let ideal = ConverterParams { inductor_resistance: 0.0, ..nominal() };
        let x = steady_state(0.7, &ideal).unwrap();
        assert!(rel(x.output_voltage, 200.0) < 1e-12);

        let off = (24.0 + (576.0f64 - 160.0).sqrt()) / 160.0;
        let x = steady_state(1.0 - off, &nominal()).unwrap();
        assert!(rel(x.output_voltage, 200.0) < 1e-9);
        assert!((x.inductor_current - 9.01).abs() < 0.005);

        let x = steady_state(0.0, &nominal()).unwrap();
        assert!((x.output_voltage - 59.63).abs() < 0.005);
        assert!(rel(x.output_voltage, 60.0 * 80.0 / 80.5) < 1e-12);
    }

    #[test]
    fn duty_for_voltage_inverts_steady_state() {
        let p = nominal();
        let d = duty_for_voltage(200.0, &p).unwrap();
        assert!((d - 0.7225).abs() < 1e-3);
        assert!(rel(steady_state(d, &p).unwrap().output_voltage, 200.0) < 1e-12);
    }

    #[test]
    fn steady_state_rejects_dcm() {
        let p = ConverterParams { load_resistance: 2000.0, ..nominal() };
        assert!(matches!(steady_state(0.7225, &p), Err(ConverterError::Discontinuous { .. })));
        assert!(matches!(steady_state(1.0, &p), Err(ConverterError::InvalidDuty(_))));
    }

    #[test]
    fn conduction_mode_examples() {
        let p = nominal();
        assert_eq!(conduction_mode(0.7225, &p), ConductionMode::Ccm);
        assert!((ripple_peak_to_peak(0.7225, &p) - 2.52).abs() < 0.005);
        let light = ConverterParams { load_resistance: 2000.0, ..p };
        assert_eq!(conduction_mode(0.7225, &light), ConductionMode::Dcm);
    }

    #[test]
    fn conduction_mode_boundary() {
        // Choose R so that mean current equals half the ripple at D = 0.5, R_L = 0:
        // v_s / (R (1-D)^2) = v_s D / (2 L f)  =>  R = 2 L f / (D (1-D)^2)
        let base = ConverterParams { inductor_resistance: 0.0, ..nominal() };
        let d: f64 = 0.5;
        let r = 2.0 * base.inductance * base.switching_frequency / (d * (1.0 - d).powi(2));
        let p = ConverterParams { load_resistance: r, ..base };
        assert_eq!(conduction_mode(d, &p), ConductionMode::Boundary);
    }

    #[test]
    fn dcm_zero_crossing_is_projected_exactly() {
        let p = ConverterParams { load_resistance: 2000.0, ..nominal() };
        let traj = simulate_period(ConverterState::new(0.0, 215.0), 0.3, &p).unwrap();
        assert!(traj.entered_dcm());
        assert_eq!(traj.end.inductor_current, 0.0);
        let idle = traj.segments.iter().find(|s| s.mode == SwitchMode::SwitchOffIdle).unwrap();
        assert_eq!(idle.initial.inductor_current, 0.0);
    }

    #[test]
    fn startup_from_rest_conducts_through_diode() {
        // v_o < v_s with the switch off: the diode conducts and charges the output
        let x = step_period(ConverterState::default(), 0.0, &nominal()).unwrap();
        assert!(x.inductor_current > 0.0);
        assert!(x.output_voltage > 0.0);
    }

    #[test]
    fn sample_period_endpoints() {
        let p = nominal();
        let x0 = ConverterState::new(9.0, 200.0);
        let samples = sample_period(x0, 0.72, &p).unwrap();
        assert_eq!(samples.len(), p.substeps_per_period + 1);
        assert_eq!(samples[0].1, x0);
        assert_eq!(samples.last().unwrap().1, step_period(x0, 0.72, &p).unwrap());
    }

    #[test]
    fn validate_rejects_mismatched_control_period() {
        let p = ConverterParams { control_period: 1e-4, ..nominal() };
        assert!(p.validate().is_err());
        assert!(nominal().validate().is_ok());
        assert!(nominal().with_switching_frequency(40e3).validate().is_ok());
    }
}
