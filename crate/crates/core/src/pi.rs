//! PI output-voltage controller tuned on the averaged small-signal model.
//!
//! Tuning recipe: crossover at one tenth of the right-half-plane zero, the PI
//! corner one decade below crossover, and the proportional gain chosen so the
//! loop gain magnitude is exactly one at crossover. The plant magnitude is taken
//! from the averaged control-to-output transfer function including the inductor
//! resistance.

use crate::converter::{self, ConductionMode, ConverterParams};
use thiserror::Error;

pub const DEFAULT_DUTY_MIN: f64 = 0.05;
pub const DEFAULT_DUTY_MAX: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PiError {
    #[error("operating duty {0} is not a CCM point; small-signal design rejected")]
    NotCcm(f64),
    #[error("operating duty {0} outside [0, 1)")]
    InvalidDuty(f64),
    #[error("reference voltage must be positive, got {0}")]
    InvalidReference(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    /// Duty per volt.
    pub k_p: f64,
    /// Duty per volt-second.
    pub k_i: f64,
    pub duty_min: f64,
    pub duty_max: f64,
    pub feedforward_duty: f64,
}

/// Integrator of the voltage error, volt-seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    pub integrator: f64,
}

/// Frequency-domain landmarks of the averaged plant at an operating point, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmarks {
    /// RHP zero (1−D)²R/L.
    pub rhp_zero: f64,
    /// LC resonance (1−D)/√(LC).
    pub resonance: f64,
    pub crossover: f64,
    pub integrator_corner: f64,
    /// |G_vd(jω_c)| in volts per unit duty.
    pub plant_gain_at_crossover: f64,
}

pub fn landmarks(params: &ConverterParams, duty: f64) -> Result<Landmarks, PiError> {
    if !(0.0..1.0).contains(&duty) {
        return Err(PiError::InvalidDuty(duty));
    }
    let off = 1.0 - duty;
    let l = params.inductance;
    let c = params.capacitance;
    let r = params.load_resistance;
    let rl = params.inductor_resistance;
    let rhp_zero = off * off * r / l;
    let resonance = off / (l * c).sqrt();
    let crossover = rhp_zero / 10.0;
    let integrator_corner = crossover / 10.0;

    let op = converter::steady_state(duty, params).map_err(|_| PiError::NotCcm(duty))?;
    let (i_op, v_op) = (op.inductor_current, op.output_voltage);
    // G(s) = (D'V − I·R_L − s·I·L) / (LC s² + (L/R + R_L C) s + R_L/R + D'²)
    let w = crossover;
    let (num_re, num_im) = (off * v_op - i_op * rl, -w * i_op * l);
    let (den_re, den_im) = (rl / r + off * off - l * c * w * w, (l / r + rl * c) * w);
    let gain = (num_re.hypot(num_im)) / den_re.hypot(den_im);
    Ok(Landmarks { rhp_zero, resonance, crossover, integrator_corner, plant_gain_at_crossover: gain })
}

/// PI gains for `params` linearized at `operating_duty`, regulating to `v_ref`.
pub fn small_signal_design(params: &ConverterParams, operating_duty: f64, v_ref: f64) -> Result<PiGains, PiError> {
    if !(v_ref > 0.0) {
        return Err(PiError::InvalidReference(v_ref));
    }
    if !(0.0..1.0).contains(&operating_duty) {
        return Err(PiError::InvalidDuty(operating_duty));
    }
    if operating_duty > 0.0 && converter::conduction_mode(operating_duty, params) == ConductionMode::Dcm {
        return Err(PiError::NotCcm(operating_duty));
    }
    let lm = landmarks(params, operating_duty)?;
    let pi_mag = (1.0 + (lm.integrator_corner / lm.crossover).powi(2)).sqrt();
    let k_p = 1.0 / (lm.plant_gain_at_crossover * pi_mag);
    let k_i = k_p * lm.integrator_corner;
    let feedforward_duty = (1.0 - params.source_voltage / v_ref).clamp(DEFAULT_DUTY_MIN, DEFAULT_DUTY_MAX);
    Ok(PiGains { k_p, k_i, duty_min: DEFAULT_DUTY_MIN, duty_max: DEFAULT_DUTY_MAX, feedforward_duty })
}

/// One control update. Conditional anti-windup: the integrator holds while the
/// unclamped output is saturated and the error pushes further into saturation.
pub fn pi_step(state: PiState, gains: &PiGains, error_v: f64, dt: f64) -> (f64, PiState) {
    debug_assert!(dt > 0.0, "pi_step needs a positive time step");
    let unclamped = gains.feedforward_duty + gains.k_p * error_v + gains.k_i * state.integrator;
    let winding_up = (unclamped > gains.duty_max && error_v > 0.0) || (unclamped < gains.duty_min && error_v < 0.0);
    let integrator = if winding_up { state.integrator } else { state.integrator + error_v * dt };
    let duty = (gains.feedforward_duty + gains.k_p * error_v + gains.k_i * integrator).clamp(gains.duty_min, gains.duty_max);
    (duty, PiState { integrator })
}

impl PiState {
    /// Integrator value that makes the controller output `duty` at zero error.
    pub fn presettled(gains: &PiGains, duty: f64) -> Self {
        if gains.k_i == 0.0 {
            return Self::default();
        }
        Self { integrator: (duty - gains.feedforward_duty) / gains.k_i }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal_duty() -> f64 {
        1.0 - (24.0 + (576.0f64 - 160.0).sqrt()) / 160.0
    }

    #[test]
    fn landmark_examples() {
        let p = ConverterParams::default();
        let lm = landmarks(&p, 0.7225).unwrap();
        assert!((lm.rhp_zero - 7163.0).abs() < 1.0, "{}", lm.rhp_zero);
        assert!((lm.resonance - 322.7).abs() < 0.05, "{}", lm.resonance);
        let lm0 = landmarks(&p, 0.0).unwrap();
        assert!((lm0.rhp_zero - p.load_resistance / p.inductance).abs() < 1e-9);
    }

    #[test]
    fn design_hits_unity_loop_gain_at_crossover() {
        let p = ConverterParams::default();
        let d = nominal_duty();
        let g = small_signal_design(&p, d, 200.0).unwrap();
        let lm = landmarks(&p, d).unwrap();
        let loop_gain = g.k_p * (1.0 + (g.k_i / (g.k_p * lm.crossover)).powi(2)).sqrt() * lm.plant_gain_at_crossover;
        assert!((loop_gain - 1.0).abs() < 1e-12);
        assert!((g.k_i / g.k_p - lm.crossover / 10.0).abs() < 1e-9);
        assert!((g.feedforward_duty - 0.7).abs() < 1e-12);
    }

    #[test]
    fn design_rejects_dcm() {
        let p = ConverterParams { load_resistance: 2000.0, ..Default::default() };
        assert_eq!(small_signal_design(&p, 0.7225, 200.0), Err(PiError::NotCcm(0.7225)));
    }

    #[test]
    fn zero_error_gives_feedforward() {
        let g = small_signal_design(&ConverterParams::default(), nominal_duty(), 200.0).unwrap();
        let (duty, s) = pi_step(PiState::default(), &g, 0.0, 50e-6);
        assert!((duty - 0.7).abs() < 1e-12);
        assert_eq!(s.integrator, 0.0);
    }

    #[test]
    fn huge_error_saturates_and_freezes() {
        let g = small_signal_design(&ConverterParams::default(), nominal_duty(), 200.0).unwrap();
        let start = PiState { integrator: 0.01 };
        let (duty, s) = pi_step(start, &g, 1e6, 50e-6);
        assert_eq!(duty, g.duty_max);
        assert_eq!(s, start);
        let (duty, s) = pi_step(start, &g, -1e6, 50e-6);
        assert_eq!(duty, g.duty_min);
        assert_eq!(s, start);
    }

    #[test]
    fn zero_gains_hold_feedforward() {
        let g = PiGains { k_p: 0.0, k_i: 0.0, duty_min: 0.05, duty_max: 0.95, feedforward_duty: 0.6 };
        let mut s = PiState::default();
        for e in [-50.0, 0.0, 10.0, 300.0] {
            let (duty, next) = pi_step(s, &g, e, 50e-6);
            assert_eq!(duty, 0.6);
            s = next;
        }
    }

    #[test]
    fn presettled_integrator_reproduces_duty() {
        let g = small_signal_design(&ConverterParams::default(), nominal_duty(), 200.0).unwrap();
        let s = PiState::presettled(&g, nominal_duty());
        let (duty, _) = pi_step(s, &g, 0.0, 50e-6);
        assert!((duty - nominal_duty()).abs() < 1e-12);
    }
}
