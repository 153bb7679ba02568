//! Boost converter simulation and dual heuristic programming (DHP) voltage control.
//!
//! * [`converter`]: exact piecewise-affine simulation of the switched boost stage.
//! * [`nnet`]: small feedforward networks with backpropagation and input Jacobians.
//! * [`identifier`]: learned one-step plant model and finite-difference reference Jacobians.
//! * [`pi`]: small-signal-tuned PI baseline with conditional anti-windup.
//! * [`dhp`]: critic/action training and the online control loop.
//! * [`harness`]: scenarios, trace metrics, comparison reports and the scalar LQR oracle.
//! * [`training`]: the seeded collect, identify, pretrain and online protocol.
//! * [`par`]: data-parallel map with a sequential fallback (feature `parallel`).

pub mod converter;
pub mod dhp;
pub mod harness;
pub mod identifier;
pub mod nnet;
pub mod par;
pub mod pi;
pub mod training;

pub use converter::{ConverterParams, ConverterState};
