//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use boost_dhp::converter::{self, ConverterParams, ConverterState, SwitchMode};
use boost_dhp::dhp::{DhpAgent, DhpController, PretrainReport};
use boost_dhp::harness::{self, Metrics, PiPolicy, Scenario};
use boost_dhp::identifier::{self, ModelFit, TrainingBox};
use boost_dhp::nnet::{check_gradients, Activation, Network};
use boost_dhp::training::{self, TrainPlan};
use boost_dhp_cli::config::RunConfig;
use boost_dhp_cli::{lqr_suite, run_command, Verb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

const TRAINING_SEEDS: [u64; 3] = [1, 2, 3];

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: usize, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, name, pass, detail }
}

fn plant_exactness() -> Verdict {
    let start = Instant::now();
    let p = ConverterParams { source_voltage: 0.0, ..Default::default() };
    let v0 = 200.0;
    let mut s = ConverterState::new(0.0, v0);
    let mut worst_decay = 0.0f64;
    for k in 1..=200 {
        s = converter::step_period(s, 0.0, &p).unwrap();
        let expected = v0 * (-(k as f64) * p.control_period / p.rc()).exp();
        worst_decay = worst_decay.max(((s.output_voltage - expected) / expected).abs());
    }

    // lossless balance over a CCM start-up
    let p = ConverterParams { inductor_resistance: 0.0, ..Default::default() };
    let stored = |x: ConverterState| 0.5 * p.inductance * x.inductor_current.powi(2) + 0.5 * p.capacitance * x.output_voltage.powi(2);
    let simpson = |f: &dyn Fn(f64) -> f64, b: f64| {
        let n = 400;
        let h = b / n as f64;
        (0..=n).map(|k| f(k as f64 * h) * if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 }).sum::<f64>() * h / 3.0
    };
    let mut x = ConverterState::default();
    let mut worst_energy = 0.0f64;
    for _ in 0..400 {
        let traj = converter::simulate_period(x, 0.7, &p).unwrap();
        let (mut e_in, mut e_load) = (0.0, 0.0);
        for seg in &traj.segments {
            if seg.duration <= 0.0 {
                continue;
            }
            if seg.mode != SwitchMode::SwitchOffIdle {
                e_in += simpson(&|t| p.source_voltage * seg.state_at(&p, t).inductor_current, seg.duration);
            }
            e_load += simpson(&|t| seg.state_at(&p, t).output_voltage.powi(2) / p.load_resistance, seg.duration);
        }
        let gap = stored(traj.end) - stored(x) - (e_in - e_load);
        worst_energy = worst_energy.max(gap.abs() / e_in.max(e_load));
        x = traj.end;
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        1,
        "plant exactness",
        worst_decay <= 1e-9 && worst_energy <= 1e-6 && elapsed < 1.0,
        format!("decay rel err {worst_decay:.2e} (<= 1e-9), energy rel gap {worst_energy:.2e} (<= 1e-6), {elapsed:.2} s"),
    )
}

fn steady_state_oracle() -> Verdict {
    let start = Instant::now();
    let p = ConverterParams::default();
    let off = (24.0 + (576.0f64 - 160.0).sqrt()) / 160.0;
    let duty = 1.0 - off;
    let mut s = ConverterState::default();
    for _ in 0..4000 {
        s = converter::step_period(s, duty, &p).unwrap();
    }
    let samples = converter::sample_period(s, duty, &p).unwrap();
    let n = samples.len() as f64;
    let v = samples.iter().map(|(_, x)| x.output_voltage).sum::<f64>() / n;
    let i = samples.iter().map(|(_, x)| x.inductor_current).sum::<f64>() / n;
    let half_ripple = 0.5 * converter::ripple_peak_to_peak(duty, &p);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        2,
        "steady-state oracle",
        (v - 200.0).abs() <= 2.0 && (i - 9.01).abs() <= half_ripple && elapsed < 5.0,
        format!("D = {duty:.6}, period-mean v_o = {v:.3} V (200 +/- 2), i_L = {i:.3} A (9.01 +/- {half_ripple:.3}), {elapsed:.2} s"),
    )
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let acts = [Activation::Identity, Activation::Tanh, Activation::Sigmoid];
    let (mut worst_p, mut worst_j) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let mut sizes = vec![rng.gen_range(1..=6)];
        for _ in 0..rng.gen_range(1..=3) {
            sizes.push(rng.gen_range(1..=10));
        }
        let net = Network::random(&sizes, acts[rng.gen_range(1..3)], acts[rng.gen_range(0..3)], &mut rng);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = check_gradients(&net, &x, &c, 1e-6).unwrap();
        worst_p = worst_p.max(g.params);
        worst_j = worst_j.max(g.input_jacobian);
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        3,
        "gradient suite",
        worst_p <= 1e-5 && worst_j <= 1e-5 && elapsed < 10.0,
        format!("100 nets, worst backprop gap {worst_p:.2e}, worst input-Jacobian gap {worst_j:.2e} (<= 1e-5), {elapsed:.2} s"),
    )
}

fn model_fidelity(fit: &ModelFit, plan: &TrainPlan, params: &ConverterParams) -> Verdict {
    let bases = plan.dhp.bases;
    let bx = TrainingBox::default();
    let points: Vec<_> = fit.holdout.iter().filter(|s| bx.contains(s.state, s.duty)).take(50).collect();
    let mut errors = Vec::new();
    for s in &points {
        let learned = fit.model.jacobians(&s.features_now(&bases), s.duty).unwrap().jacobians;
        let plant = ConverterParams { source_voltage: s.v_s, ..*params };
        let reference = identifier::analytic_jacobians(s.state, s.duty, &plant, &bases).unwrap();
        let (state_err, control_err) = identifier::jacobian_errors(&learned, &reference);
        errors.push(state_err.max(control_err));
    }
    let within = errors.iter().filter(|e| **e <= 0.10).count();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(f64::NAN);
    let worst = sorted.last().copied().unwrap_or(f64::NAN);
    let rms_ok = fit.meets_gate();
    verdict(
        4,
        "model fidelity",
        rms_ok && points.len() == 50 && within == points.len(),
        format!(
            "held-out RMS i {:.4}, v {:.5} (<= 0.02); Jacobians within 10% at {within}/{} in-box points (median {median:.3}, worst {worst:.3})",
            fit.holdout_rms[0],
            fit.holdout_rms[1],
            points.len()
        ),
    )
}

fn lqr_oracle() -> Verdict {
    let start = Instant::now();
    let checks = lqr_suite().unwrap();
    let passed = checks.iter().filter(|c| c.passed()).count();
    let detail: Vec<String> = checks.iter().map(|c| format!("seed {}: lambda {:.3} gain {:.3}", c.seed, c.lambda_error, c.gain_error)).collect();
    let elapsed = start.elapsed().as_secs_f64();
    verdict(5, "LQR end-to-end oracle", passed == 3 && elapsed < 60.0, format!("{passed}/3 seeds; {}; {elapsed:.1} s", detail.join("; ")))
}

fn pretraining(report: &PretrainReport) -> Verdict {
    let r = report.reduction();
    verdict(
        6,
        "pretraining convergence",
        r >= 10.0,
        format!(
            "seed 1 residual {:.3e} -> {:.3e}, reduction {r:.1}x (>= 10x)",
            report.epoch_residuals.first().copied().unwrap_or(f64::NAN),
            report.epoch_residuals.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

fn fmt_ms(t: Option<f64>) -> String {
    t.map_or("unsettled".into(), |t| format!("{:.1} ms", t * 1e3))
}

struct ScenarioResults {
    pi: Metrics,
    dhp: Vec<Metrics>,
}

fn run_scenarios(controllers: &[DhpController], params: &ConverterParams) -> BTreeMap<String, ScenarioResults> {
    let mut out = BTreeMap::new();
    for s in harness::builtin_scenarios(params).unwrap() {
        let pi = score(&s, &mut PiPolicy::for_scenario(&s, params).unwrap(), params);
        let dhp = controllers.iter().map(|c| score(&s, &mut DhpAgent::new(c.clone(), false), params)).collect();
        out.insert(s.name.clone(), ScenarioResults { pi, dhp });
    }
    out
}

fn score(s: &Scenario, policy: &mut dyn harness::Policy, params: &ConverterParams) -> Metrics {
    let (run, m) = harness::run_scenario(s, policy, params).unwrap();
    if run.failure.is_some() {
        Metrics { settling_time: None, ..m }
    } else {
        m
    }
}

fn startup(r: &ScenarioResults) -> Verdict {
    let pi_settle = r.pi.settling_time.unwrap_or(f64::INFINITY);
    let good = r
        .dhp
        .iter()
        .filter(|m| {
            let t = m.settling_time.unwrap_or(f64::INFINITY);
            t <= 0.010 && m.overshoot <= 10.0 && t < pi_settle && m.overshoot < r.pi.overshoot
        })
        .count();
    let per_seed: Vec<String> = r.dhp.iter().map(|m| format!("{} / {:.1}%", fmt_ms(m.settling_time), m.overshoot)).collect();
    verdict(
        7,
        "start-up",
        good >= 2 && pi_settle >= 0.015,
        format!(
            "PI {} / {:.1}%; DHP seeds {}; {good}/3 seeds meet <= 10 ms, <= 10% and beat PI",
            fmt_ms(r.pi.settling_time),
            r.pi.overshoot,
            per_seed.join(", ")
        ),
    )
}

fn load_step(r: &ScenarioResults) -> Verdict {
    let pi_t = r.pi.settling_time.unwrap_or(f64::INFINITY);
    let good = r
        .dhp
        .iter()
        .filter(|m| {
            let t = m.settling_time.unwrap_or(f64::INFINITY);
            t <= 0.020 && !m.oscillation && (pi_t > t || r.pi.oscillation)
        })
        .count();
    let per_seed: Vec<String> = r.dhp.iter().map(|m| format!("{}{}", fmt_ms(m.settling_time), if m.oscillation { " osc" } else { "" })).collect();
    verdict(
        8,
        "load step",
        good >= 2,
        format!(
            "PI {}{}; DHP seeds {}; {good}/3 seeds recover within 20 ms and beat PI",
            fmt_ms(r.pi.settling_time),
            if r.pi.oscillation { " osc" } else { "" },
            per_seed.join(", ")
        ),
    )
}

fn input_step(r: &ScenarioResults) -> Verdict {
    let pi_t = r.pi.settling_time.unwrap_or(f64::INFINITY);
    let good = r.dhp.iter().filter(|m| m.settling_time.is_some_and(|t| t <= 0.020 && t <= pi_t)).count();
    let per_seed: Vec<String> = r.dhp.iter().map(|m| fmt_ms(m.settling_time)).collect();
    verdict(
        9,
        "input step",
        good >= 2,
        format!("PI {}; DHP seeds {}; {good}/3 seeds recover within 20 ms and no slower than PI", fmt_ms(r.pi.settling_time), per_seed.join(", ")),
    )
}

const SMALL_PLAN: &str = "\
excitation.episodes = 2
excitation.episode_length = 0.05
model.iterations = 20
model.max_train_samples = 1000
dhp.pretrain.epochs = 3
online.episodes = 2
online.guard_samples = 100
";

fn run_everything(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(SMALL_PLAN, "plan").unwrap();
    cfg.seed = Some(7);
    cfg.out = dir.to_path_buf();
    let mut files = Vec::new();
    for verb in [Verb::Simulate, Verb::Pretrain, Verb::Train, Verb::Evaluate, Verb::Compare] {
        run_command(verb, &cfg, &mut |a| files.push(a.path)).unwrap();
    }
    files
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_everything(a.path());
    let second = run_everything(b.path());
    let differing: Vec<&String> = first.iter().filter(|(k, v)| second.get(*k) != Some(v)).map(|(k, _)| k).collect();
    verdict(
        10,
        "determinism",
        differing.is_empty() && first.len() == second.len() && !first.is_empty(),
        format!("{} CSVs from simulate/pretrain/train/evaluate/compare, {} differ", first.len(), differing.len()),
    )
}

fn main() {
    // libtest-style flags from `cargo test` are ignored.
    let params = ConverterParams::default();
    let plan = TrainPlan::default();
    let mut verdicts = vec![plant_exactness(), steady_state_oracle(), gradient_suite()];

    let trained: Vec<_> = boost_dhp::par::map(TRAINING_SEEDS.to_vec(), |seed| {
        let plan = plan.seeded(seed);
        let dataset = training::collect(&plan, &params).unwrap();
        let fit = training::identify(&plan, &dataset).unwrap();
        let (controller, report) = training::pretrain(&plan, &dataset, &fit, &params, seed).unwrap();
        let guard = training::guard_subset(&dataset.samples, plan.online.guard_samples);
        let (controller, _) = training::train_online(&plan, controller, &guard, &params, seed).unwrap();
        (fit, report, controller)
    });
    verdicts.push(model_fidelity(&trained[0].0, &plan.seeded(TRAINING_SEEDS[0]), &params));
    verdicts.push(lqr_oracle());
    verdicts.push(pretraining(&trained[0].1));

    let controllers: Vec<DhpController> = trained.into_iter().map(|(_, _, c)| c).collect();
    let results = run_scenarios(&controllers, &params);
    verdicts.push(startup(&results["startup"]));
    verdicts.push(load_step(&results["load_step"]));
    verdicts.push(input_step(&results["input_step"]));
    verdicts.push(determinism());

    for v in &verdicts {
        println!("criterion {:>2} {:<26} {}  {}", v.id, v.name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed", verdicts.len());
    if passed != verdicts.len() {
        std::process::exit(1);
    }
}
