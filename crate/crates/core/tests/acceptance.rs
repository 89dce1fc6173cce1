//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! The run always completes and exits 0 so that the report is produced in
//! full; set `AMPC_ACCEPTANCE_STRICT=1` to exit nonzero on any FAIL.
//! Latency thresholds: `AMPC_LATENCY_ONESTEP_US` (default 10) and
//! `AMPC_LATENCY_PRECOMPUTED_US` (default 2).

mod common;

use std::time::{Duration, Instant};

use ampc_core::converters::{
    inverter_steady_state, leg_phase, BRIDGE_PATTERNS, INVERTER_COS, INVERTER_SIN,
    INVERTER_STATES,
};
use ampc_core::fitting::{draw_samples, sample_values};
use ampc_core::ocp::DEFAULT_NODE_BUDGET;
use ampc_core::{
    build_boost, build_inverter, closed_loop, decide_general, decide_precomputed, fit_quadratic,
    precompute_quadratic_forms, solve_bnb, solve_exhaustive, value_sample, BoostParams,
    ClosedLoop, ConverterModel, DesiredMap, EnergyPrior, FcsMpcPolicy, FitOptions, InputIndex,
    InverterParams, OcpInstance, OcpMethod, OneStepPolicy, Policy, PolicyConfig,
    PrecomputedPolicy, QuadraticValueFunction, SampleBox, SamplingOptions, StageCost,
    StateVector, SwitchingCost, TailCost, ValueSample,
};
use common::*;
use nalgebra::{DMatrix, DVector};

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} criterion {id:>2} ({name}): {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn env_f64(key: &str, default: f64) -> f64 {
    std::env::var(key)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

const BOOST_STEPS: usize = 800; // 40 ms at 50 µs
const BOOST_SEED: u64 = 1;

fn boost() -> ConverterModel {
    build_boost(&BoostParams::default()).unwrap()
}

fn boost_box(count: usize) -> SampleBox {
    SampleBox::new(
        DVector::from_vec(vec![0.0, 0.0]),
        DVector::from_vec(vec![10.0, 50.0]),
        count,
        BOOST_SEED,
    )
    .unwrap()
}

fn run(cm: &ConverterModel, policy: &mut dyn Policy, x0: &StateVector, steps: usize, sw: Option<&SwitchingCost>) -> ClosedLoop {
    closed_loop(&cm.model, policy, x0, steps, InputIndex::FIRST, &cm.stage, sw).unwrap()
}

fn boost_fit(cm: &ConverterModel, samples: &[ValueSample]) -> (QuadraticValueFunction, f64) {
    let opts = FitOptions {
        lambda: 100.0,
        psd: true,
        ..FitOptions::default()
    };
    let fit = fit_quadratic(samples, &cm.energy, &opts, &cm.desired).unwrap();
    (fit.vf, fit.mse)
}

fn ampc_boost(cm: &ConverterModel, vf: QuadraticValueFunction) -> PrecomputedPolicy {
    let cfg = PolicyConfig::ampc(1, vf, cm.stage.clone(), None).unwrap();
    PrecomputedPolicy::new(&cm.model, &cfg).unwrap()
}

fn criterion_1(rep: &mut Report) {
    let cm = boost();
    let t0 = Instant::now();
    let mut p = FcsMpcPolicy::new(
        cm.model.clone(),
        cm.stage.clone(),
        cm.stage.clone(),
        None,
        1,
        OcpMethod::BranchAndBound {
            rel_gap: 0.01,
            node_budget: DEFAULT_NODE_BUDGET,
        },
    )
    .unwrap();
    let cl = run(&cm, &mut p, &DVector::zeros(2), BOOST_STEPS, None);
    let secs = t0.elapsed().as_secs_f64();
    let v = cl.states.last().unwrap()[1];
    rep.line(
        1,
        "boost myopic failure",
        v < 28.0 && secs < 1.0,
        format!("final v_C = {v:.3} V (< 28), runtime {secs:.3} s (< 1)"),
    );
}

/// Sequential probe at the full remaining horizon; stops at the first sample
/// whose solve runs out of nodes.
fn probe_horizon(cm: &ConverterModel, points: &[StateVector], h: usize) -> (bool, usize, Duration) {
    let t0 = Instant::now();
    for (i, x) in points.iter().enumerate() {
        let sol = value_sample(&cm.model, &cm.stage, &cm.stage, x, h, 0.01, DEFAULT_NODE_BUDGET).unwrap();
        if sol.budget_exceeded || sol.certified_gap > 0.01 {
            return (false, i + 1, t0.elapsed());
        }
    }
    (true, points.len(), t0.elapsed())
}

fn tail_deviation(cl: &ClosedLoop) -> f64 {
    let start = cl.states.len() - 1 - (cl.states.len() - 1) / 4;
    let tail = &cl.states[start..];
    tail.iter().map(|x| (x[1] - 30.0).abs()).sum::<f64>() / tail.len() as f64
}

fn criterion_2(rep: &mut Report) {
    let cm = boost();
    let t0 = Instant::now();
    let points = draw_samples(&boost_box(100));
    let (full_ok, probed, probe_time) = probe_horizon(&cm, &points, 29);
    let h = if full_ok { 29 } else { 14 };
    let opts = SamplingOptions {
        remaining_horizon: h,
        rel_gap: 0.01,
        node_budget: DEFAULT_NODE_BUDGET,
    };
    let samples = sample_values(&points, &cm.model, &cm.stage, &cm.stage, &opts).unwrap();
    let certified = samples.iter().filter(|s| s.is_certified()).count();
    let (vf, mse) = boost_fit(&cm, &samples);
    let synth = t0.elapsed().as_secs_f64();
    let mut p = ampc_boost(&cm, vf);
    let cl = run(&cm, &mut p, &DVector::zeros(2), BOOST_STEPS, None);
    let dev = tail_deviation(&cl);
    let note = if full_ok {
        "all 100 samples certified at horizon 29".to_string()
    } else {
        format!(
            "horizon 29 ran out of nodes on probe sample {probed} after {:.1} s; fell back to 14",
            probe_time.as_secs_f64()
        )
    };
    rep.line(
        2,
        "boost A-MPC success",
        dev <= 0.6 && synth <= 1800.0,
        format!(
            "mean |v - 30| over final 25% = {dev:.3} V (<= 0.6); {note}; {certified}/100 certified, \
             fit MSE {mse:.1}, synthesis {synth:.1} s (<= 1800)"
        ),
    );
}

fn criterion_3(rep: &mut Report) {
    let cm = boost();
    let horizon = 14;
    let mut exact = FcsMpcPolicy::new(
        cm.model.clone(),
        cm.stage.clone(),
        cm.stage.clone(),
        None,
        horizon,
        OcpMethod::Exhaustive,
    )
    .unwrap();
    let mpc = run(&cm, &mut exact, &DVector::zeros(2), BOOST_STEPS, None);

    let points = draw_samples(&boost_box(100));
    let opts = SamplingOptions {
        remaining_horizon: horizon - 1,
        rel_gap: 0.01,
        node_budget: DEFAULT_NODE_BUDGET,
    };
    let samples = sample_values(&points, &cm.model, &cm.stage, &cm.stage, &opts).unwrap();
    let (vf, _) = boost_fit(&cm, &samples);
    let mut p = ampc_boost(&cm, vf);
    let ampc = run(&cm, &mut p, &DVector::zeros(2), BOOST_STEPS, None);
    let ratio = ampc.total_cost() / mpc.total_cost();
    rep.line(
        3,
        "long-horizon parity, T = 14",
        ratio <= 1.3,
        format!(
            "A-MPC cumulative {:.1} / exhaustive MPC cumulative {:.1} = {ratio:.3} (<= 1.3)",
            ampc.total_cost(),
            mpc.total_cost()
        ),
    );
}

fn criterion_4(rep: &mut Report) {
    let t0 = Instant::now();
    let mut worst = 0.0_f64;
    let mut seq_mismatch = 0;
    for i in 0..100u64 {
        let mut r = rng(1000 + i);
        let k = 2 + (i % 2) as usize;
        let horizon = 4 + (i % 7) as usize;
        let n = 2 + (i % 2) as usize;
        let model = if i % 3 == 0 {
            random_guarded_model(&mut r, n, k)
        } else {
            random_affine_model(&mut r, n, k, false)
        };
        let stage = if i % 2 == 0 { random_l1_cost(&mut r, n) } else { random_quadratic_cost(&mut r, n) };
        let terminal = random_quadratic_cost(&mut r, n);
        let sw = (i % 4 == 0).then(|| SwitchingCost::constant(k, 0.3, InputIndex::FIRST).unwrap());
        let inst = OcpInstance::new(&model, &stage, &terminal, sw.as_ref(), horizon, uniform_vec(&mut r, n, -2.0, 2.0)).unwrap();
        let ex = solve_exhaustive(&inst).unwrap();
        let bb = solve_bnb(&inst, 0.0, usize::MAX).unwrap();
        worst = worst.max((bb.optimal_cost - ex.optimal_cost).abs() / ex.optimal_cost.abs().max(1e-300));
        if bb.inputs != ex.inputs {
            seq_mismatch += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    rep.line(
        4,
        "solver oracle equivalence",
        worst <= 1e-9 && seq_mismatch == 0 && secs < 60.0,
        format!("max relative cost difference {worst:.2e} (<= 1e-9), {seq_mismatch} sequence mismatches, {secs:.2} s (< 60)"),
    );
}

/// Simulated A-MPC score of one input sequence.
fn sequence_score(model: &ampc_core::SwitchedModel, cfg: &PolicyConfig, z: &StateVector, seq: &[InputIndex], prev: InputIndex) -> f64 {
    let mut x = z.clone();
    let mut total = 0.0;
    let mut last = prev;
    for &u in seq {
        total += cfg.stage.eval(&x);
        if let Some(s) = &cfg.switching {
            total += s.cost(last, u);
        }
        x = model.step(&x, u).unwrap();
        last = u;
    }
    total + cfg.tail.eval_slice(x.as_slice())
}

fn criterion_5(rep: &mut Report) {
    let t0 = Instant::now();
    let mut mismatches = 0;
    let mut decisions = 0;
    let mut worst_offset_spread = 0.0_f64;
    for m in 0..20u64 {
        let mut r = rng(2000 + m);
        let n = 2 + (m % 3) as usize;
        let k = 2 + (m % 2) as usize;
        let tau = 1 + (m % 3) as usize;
        let common_a = m % 2 == 0;
        let model = random_affine_model(&mut r, n, k, common_a);
        let stage = random_quadratic_cost(&mut r, n);
        let tail = random_quadratic_cost(&mut r, n);
        let vf = QuadraticValueFunction::new(tail.quadratic_weight().unwrap(), 0.3, tail.target().clone(), 0.0).unwrap();
        let sw = (m % 4 < 2).then(|| SwitchingCost::constant(k, 0.5, InputIndex::FIRST).unwrap());
        let cfg = PolicyConfig::ampc(tau, vf, stage, sw.clone()).unwrap();
        let forms = precompute_quadratic_forms(&model, &cfg).unwrap();
        for s in 0..1000 {
            let z = uniform_vec(&mut r, n, -3.0, 3.0);
            let prev = InputIndex::from_zero_based(s % k);
            decisions += 1;
            if decide_general(&model, &cfg, &z, prev).unwrap() != decide_precomputed(&forms, &z, prev, sw.as_ref()).unwrap() {
                mismatches += 1;
            }
            if common_a && s < 50 {
                // The dropped zᵀ P̃ z term must be the same for every sequence.
                let offsets: Vec<f64> = forms
                    .iter()
                    .map(|f| {
                        let full = sequence_score(&model, &cfg, &z, &f.inputs, prev);
                        let sw0 = sw.as_ref().map_or(0.0, |s| s.cost(prev, f.inputs[0]) + f.internal_switching);
                        full - f.evaluate(z.as_slice()) - sw0
                    })
                    .collect();
                let lo = offsets.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let scale = offsets.iter().map(|o| o.abs()).fold(1.0, f64::max);
                worst_offset_spread = worst_offset_spread.max((hi - lo) / scale);
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    rep.line(
        5,
        "precomputation equivalence",
        mismatches == 0 && worst_offset_spread <= 1e-9 && secs < 60.0,
        format!(
            "{mismatches}/{decisions} decision mismatches; common-A dropped-term spread {worst_offset_spread:.2e} (<= 1e-9); {secs:.2} s (< 60)"
        ),
    );
}

fn criterion_6(rep: &mut Report) {
    let mut r = rng(6);
    let n = 3;
    let p = random_spd(&mut r, n);
    let map = DesiredMap::constant(uniform_vec(&mut r, n, -1.0, 1.0));
    let truth = QuadraticValueFunction::new(p.clone(), 1.5, map.clone(), 0.0).unwrap();
    let samples: Vec<ValueSample> = (0..200)
        .map(|_| {
            let x = uniform_vec(&mut r, n, -3.0, 3.0);
            let v = truth.evaluate(&x);
            ValueSample::new(x, v)
        })
        .collect();
    let prior = EnergyPrior::diagonal(&[0.5, 1.0, 2.0]).unwrap();
    let exact = fit_quadratic(&samples, &prior, &FitOptions { lambda: 0.0, ..FitOptions::default() }, &map).unwrap();
    let p_err = (exact.vf.p() - &p).amax();
    let r_err = (exact.vf.r() - 1.5).abs();
    let heavy = fit_quadratic(&samples, &prior, &FitOptions { lambda: 1e12, ..FitOptions::default() }, &map).unwrap();
    let pull = (heavy.vf.p() - prior.matrix() * heavy.vf.alpha()).norm() / heavy.vf.p().norm();
    rep.line(
        6,
        "fit recovery",
        p_err <= 1e-8 && r_err <= 1e-8 && pull <= 1e-4,
        format!("lambda = 0: |P err| {p_err:.1e}, |r err| {r_err:.1e} (<= 1e-8); lambda = 1e12: ||P - alpha P_energy|| / ||P|| = {pull:.1e} (<= 1e-4)"),
    );
}

fn criterion_7(rep: &mut Report) {
    let inv = build_inverter(&InverterParams::default()).unwrap();
    let c = &inv.continuous;
    let model = &inv.converter.model;
    let m = &c.projector;
    let idem = (m * m - m).amax();
    let ft = c.f_dae.transpose();
    let annih = ((&ft * &c.a_proj).amax() / c.a.amax()).max((&ft * &c.b_in_proj).amax() / c.b_in.amax());

    let mut x = DVector::zeros(INVERTER_STATES);
    x[INVERTER_COS] = 1.0;
    let mut drift = 0.0_f64;
    for t in 0..10_000 {
        x = model.step(&x, InputIndex::from_zero_based(t % 7)).unwrap();
        drift = drift.max((x[INVERTER_SIN].powi(2) + x[INVERTER_COS].powi(2) - 1.0).abs());
    }

    let mut shift = DMatrix::zeros(INVERTER_STATES, INVERTER_STATES);
    for g in 0..3 {
        for k in 0..3 {
            shift[(g * 3 + (k + 1) % 3, g * 3 + k)] = 1.0;
        }
    }
    let (s, co) = leg_phase(1).sin_cos();
    shift[(INVERTER_SIN, INVERTER_SIN)] = co;
    shift[(INVERTER_SIN, INVERTER_COS)] = s;
    shift[(INVERTER_COS, INVERTER_SIN)] = -s;
    shift[(INVERTER_COS, INVERTER_COS)] = co;
    let sigma: Vec<usize> = BRIDGE_PATTERNS
        .iter()
        .map(|p| BRIDGE_PATTERNS.iter().position(|q| *q == [p[2], p[0], p[1]]).unwrap())
        .collect();
    let mut r = rng(7);
    let mut equiv = 0.0_f64;
    let mut rk = 0.0_f64;
    for _ in 0..20 {
        let mut z = uniform_vec(&mut r, INVERTER_STATES, -10.0, 10.0);
        let th: f64 = rand::Rng::random_range(&mut r, 0.0..6.3);
        z[INVERTER_SIN] = th.sin();
        z[INVERTER_COS] = th.cos();
        for (k, &sk) in sigma.iter().enumerate() {
            let u = InputIndex::from_zero_based(k);
            let a = &shift * model.step(&z, u).unwrap();
            let b = model.step(&(&shift * &z), InputIndex::from_zero_based(sk)).unwrap();
            equiv = equiv.max((&a - &b).amax() / a.amax().max(1.0));
            let drive = &c.b_aug * &inv.bridge_voltages[k];
            let approx = rk4(&c.a_aug, &drive, &z, InverterParams::default().timestep_s, 4000);
            rk = rk.max(rel_err(&model.step(&z, u).unwrap(), &approx));
        }
    }
    rep.line(
        7,
        "inverter structural suite",
        idem <= 1e-12 && annih <= 1e-9 && drift <= 1e-9 && equiv <= 1e-12 && rk <= 1e-8,
        format!(
            "idempotence {idem:.1e} (<= 1e-12), annihilation {annih:.1e} (<= 1e-9), sin^2+cos^2 drift {drift:.1e} (<= 1e-9), \
             permutation {equiv:.1e} (<= 1e-12), RK4 {rk:.1e} (<= 1e-8)"
        ),
    );
}

fn inverter_box(count: usize, seed: u64) -> SampleBox {
    let mut lo = vec![-20.0; 3];
    lo.extend([-300.0; 3]);
    lo.extend([-20.0; 3]);
    lo.extend([-1.0; 2]);
    let hi: Vec<f64> = lo.iter().map(|v| -v).collect();
    SampleBox::new(DVector::from_vec(lo), DVector::from_vec(hi), count, seed).unwrap()
}

fn criterion_8(rep: &mut Report) {
    let p = InverterParams::default();
    let inv = build_inverter(&p).unwrap();
    let cm = &inv.converter;
    let t0 = Instant::now();
    let points = draw_samples(&inverter_box(1000, 8));
    let opts = SamplingOptions {
        remaining_horizon: 4,
        rel_gap: 0.01,
        node_budget: DEFAULT_NODE_BUDGET,
    };
    let samples = sample_values(&points, &cm.model, &cm.stage, &cm.stage, &opts).unwrap();
    let fit = fit_quadratic(&samples, &cm.energy, &FitOptions { lambda: 1.0, ..FitOptions::default() }, &cm.desired).unwrap();

    let sw = SwitchingCost::constant(7, 1.0, InputIndex::FIRST).unwrap();
    let x0 = inverter_steady_state(&inv, 0.0);
    let period_steps = (2.0 * std::f64::consts::PI / p.omega / p.timestep_s).ceil() as usize;
    let steps = 2 * period_steps;
    let mut ampc = OneStepPolicy::new(&cm.model, &fit.vf, Some(sw.clone())).unwrap();
    let a = run(cm, &mut ampc, &x0, steps, Some(&sw));
    let bound = 10.0 * 300.0;
    let stable = a.states.iter().all(|x| x.iter().all(|v| v.is_finite()) && x.rows(0, 9).amax() <= bound);

    let window = 200.min(steps);
    let mut fcs = FcsMpcPolicy::new(
        cm.model.clone(),
        cm.stage.clone(),
        cm.stage.clone(),
        Some(sw.clone()),
        5,
        OcpMethod::BranchAndBound {
            rel_gap: 0.01,
            node_budget: DEFAULT_NODE_BUDGET,
        },
    )
    .unwrap();
    let f = run(cm, &mut fcs, &x0, window, Some(&sw));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let a_stage = mean(&a.stage_costs[..window]);
    let a_sw = mean(&a.switching_costs[..window]);
    let f_stage = f.average_stage_cost();
    let f_sw = f.average_switching_cost();
    let ratio = a_stage / f_stage;
    let in_band = |v: f64| (0.2..=1.0).contains(&v);
    let secs = t0.elapsed().as_secs_f64();
    rep.line(
        8,
        "inverter cost shape",
        stable && ratio <= 3.0 && in_band(a_sw) && in_band(f_sw) && secs <= 1200.0,
        format!(
            "A-MPC {steps} steps ({} periods) stable = {stable}; first {window} decisions: stage A-MPC {a_stage:.3} vs FCS-MPC T=5 {f_stage:.3} \
             (ratio {ratio:.2} <= 3), switching A-MPC {a_sw:.3}, FCS-MPC {f_sw:.3} (both in [0.2, 1]); {secs:.1} s (<= 1200)",
            steps / period_steps
        ),
    );
}

fn criterion_9(rep: &mut Report) {
    let mut mismatches = 0;
    let mut total = 0;
    for i in 0..10u64 {
        let mut r = rng(9000 + i);
        let (k, horizon) = [(2, 8), (3, 6), (4, 5), (7, 4), (2, 13)][i as usize % 5];
        let n = 2;
        let model = if i % 2 == 0 { random_guarded_model(&mut r, n, k) } else { random_affine_model(&mut r, n, k, false) };
        let stage = random_l1_cost(&mut r, n);
        let terminal: StageCost = random_quadratic_cost(&mut r, n);
        let prev = InputIndex::FIRST;
        let sw = SwitchingCost::constant(k, 0.2, prev).unwrap();
        let cfg = PolicyConfig::new(horizon, TailCost::Stage(terminal.clone()), stage.clone(), Some(sw.clone())).unwrap();
        for _ in 0..10 {
            let z = uniform_vec(&mut r, n, -2.0, 2.0);
            let inst = OcpInstance::new(&model, &stage, &terminal, Some(&sw), horizon, z.clone()).unwrap();
            total += 1;
            if decide_general(&model, &cfg, &z, prev).unwrap() != solve_exhaustive(&inst).unwrap().first_input() {
                mismatches += 1;
            }
        }
    }
    rep.line(
        9,
        "perfect-approximation recovery",
        mismatches == 0,
        format!("{mismatches}/{total} first-input mismatches between A-MPC (tau = T, tail = h) and exact MPC"),
    );
}

fn median_latency_us(policy: &mut dyn Policy, states: &[StateVector]) -> f64 {
    let mut u = InputIndex::FIRST;
    let mut times: Vec<f64> = states
        .iter()
        .map(|z| {
            let t = Instant::now();
            u = policy.decide(z, u).unwrap();
            t.elapsed().as_secs_f64() * 1e6
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

fn criterion_10(rep: &mut Report) {
    let onestep_max = env_f64("AMPC_LATENCY_ONESTEP_US", 10.0);
    let pre_max = env_f64("AMPC_LATENCY_PRECOMPUTED_US", 2.0);

    let inv = build_inverter(&InverterParams::default()).unwrap();
    let cm = &inv.converter;
    let vf = QuadraticValueFunction::new(cm.energy.matrix().clone(), 0.0, cm.desired.clone(), 1.0).unwrap();
    let sw = SwitchingCost::constant(7, 1.0, InputIndex::FIRST).unwrap();
    let mut one = OneStepPolicy::new(&cm.model, &vf, Some(sw)).unwrap();
    let states = draw_samples(&inverter_box(10_000, 10));
    median_latency_us(&mut one, &states[..1000]);
    let one_us = median_latency_us(&mut one, &states);

    let b = boost();
    let bvf = QuadraticValueFunction::new(b.energy.matrix() * 100.0, 0.0, b.desired.clone(), 1.0).unwrap();
    let mut pre = ampc_boost(&b, bvf);
    let bstates = draw_samples(&boost_box(10_000));
    median_latency_us(&mut pre, &bstates[..1000]);
    let pre_us = median_latency_us(&mut pre, &bstates);
    rep.line(
        10,
        "decision latency",
        one_us <= onestep_max && pre_us <= pre_max,
        format!(
            "inverter one-step median {one_us:.3} us (<= {onestep_max}), boost precomputed median {pre_us:.3} us (<= {pre_max}); \
             10^4 decisions each"
        ),
    );
}

fn main() {
    let mut rep = Report { failures: 0 };
    criterion_1(&mut rep);
    criterion_2(&mut rep);
    criterion_3(&mut rep);
    criterion_4(&mut rep);
    criterion_5(&mut rep);
    criterion_6(&mut rep);
    criterion_7(&mut rep);
    criterion_8(&mut rep);
    criterion_9(&mut rep);
    criterion_10(&mut rep);
    println!("acceptance: {} of 10 criteria failed", rep.failures);
    if rep.failures > 0 && std::env::var_os("AMPC_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
