use boost_dhp::dhp::{self, ActionMap, Bases, DhpAgent, DhpConfig, DhpController, FeatureVector, JacobianSource, UtilityWeights};
use boost_dhp::harness::{self, compute_metrics, TraceRow};
use boost_dhp::identifier::{TrainingBox, TransitionModel};
use boost_dhp::nnet::{Activation, Matrix, Network, TrainingConfig};
use boost_dhp::{ConverterParams, ConverterState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn controller(seed: u64, config: DhpConfig) -> DhpController {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = TransitionModel {
        net: Network::random(&[4, 5, 5, 2], Activation::Tanh, Activation::Identity, &mut rng),
        input_mean: [0.0; 4],
        input_scale: [1.0; 4],
        delta_scale: [1.0; 2],
        bases: Bases::default(),
        training_box: TrainingBox::default(),
    };
    DhpController { model, critic: dhp::new_critic(&mut rng), action: dhp::new_action(&mut rng), config, seed }
}

fn frozen_config() -> DhpConfig {
    let zero = |c: TrainingConfig| TrainingConfig { learning_rate: 0.0, ..c };
    let d = DhpConfig::default();
    DhpConfig { critic: zero(d.critic), action: zero(d.action), jacobians: JacobianSource::Analytic, ..d }
}

fn trace_row(t: f64, v_o: f64) -> TraceRow {
    TraceRow { t, i_l: 0.0, v_o, duty: 0.5, v_ref: 200.0, v_s: 60.0, load: 80.0, utility: 0.0, lambda: None }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn emitted_duty_stays_inside_bounds(
        seed in 0u64..1000, i in 0.0..25.0f64, v in 0.0..260.0f64, v_ref in 150.0..250.0f64, v_s in 50.0..70.0f64,
    ) {
        let c = controller(seed, DhpConfig::default());
        let x = FeatureVector::new(ConverterState::new(i, v), v_ref, v_s, &Bases::default());
        let d = c.duty(&x).unwrap();
        prop_assert!(d > c.config.duty_min && d < c.config.duty_max, "duty {d}");
    }

    #[test]
    fn undiscounted_target_is_the_utility_gradient(
        x in prop::array::uniform4(-1.0..1.0f64), lambda in prop::array::uniform4(-5.0..5.0f64),
        jac in prop::collection::vec(-2.0..2.0f64, 16), b in prop::array::uniform4(-1.0..1.0f64),
        da in prop::array::uniform4(-1.0..1.0f64),
    ) {
        let f = FeatureVector { current: x[0], voltage: x[1], error: x[2], source: x[3] };
        let (_, du_dx) = dhp::utility(&f, &UtilityWeights::default());
        let m = Matrix { rows: 4, cols: 4, data: jac };
        let target = dhp::critic_target(&lambda, &du_dx, &m, &b, 0.0, &da, 0.0);
        prop_assert_eq!(target.0, du_dx.to_vec());
    }

    #[test]
    fn logistic_map_is_strict_for_finite_raw_outputs(raw in -30.0..30.0f64) {
        let u = ActionMap::Logistic { min: 0.05, max: 0.95 }.apply(raw);
        prop_assert!(u > 0.05 && u < 0.95);
    }

    #[test]
    fn metrics_ignore_rows_before_the_reference_time(
        before in prop::collection::vec(0.0..400.0f64, 1..50), after in prop::collection::vec(150.0..250.0f64, 1..200),
    ) {
        let dt = 50e-6;
        let t0 = before.len() as f64 * dt;
        let tail: Vec<TraceRow> = after.iter().enumerate().map(|(k, v)| trace_row(t0 + k as f64 * dt, *v)).collect();
        let mut full: Vec<TraceRow> = before.iter().enumerate().map(|(k, v)| trace_row(k as f64 * dt, *v)).collect();
        full.extend(tail.iter().cloned());
        let m = compute_metrics(&full, t0);
        prop_assert_eq!(m, compute_metrics(&full, t0));
        let mut other = full.clone();
        for r in other.iter_mut().take(before.len()) {
            r.v_o = 0.0;
        }
        prop_assert_eq!(m, compute_metrics(&other, t0));
    }
}

#[test]
fn zero_learning_rates_leave_networks_bit_identical() {
    let p = ConverterParams::default();
    let start = controller(3, frozen_config());
    let scenario = harness::find_scenario(&p, "startup").unwrap();
    let mut agent = DhpAgent::new(start.clone(), true);
    let first = harness::run_policy(&scenario, &mut agent, &p).unwrap();
    assert!(first.failure.is_none());
    assert_eq!(agent.controller.critic, start.critic);
    assert_eq!(agent.controller.action, start.action);

    let mut again = DhpAgent::new(start.clone(), true);
    let second = harness::run_policy(&scenario, &mut again, &p).unwrap();
    assert_eq!(first.trace, second.trace);
}

#[test]
fn frozen_agent_is_a_pure_function_of_its_inputs() {
    let p = ConverterParams::default();
    let c = controller(11, DhpConfig::default());
    let scenario = harness::find_scenario(&p, "load_step").unwrap();
    let run = |c: &DhpController| harness::run_policy(&scenario, &mut DhpAgent::new(c.clone(), false), &p).unwrap().trace;
    assert_eq!(run(&c), run(&c));
}
