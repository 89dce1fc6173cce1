use ampc_bench::{boost, inverter, Fixture};
use ampc_core::{
    GeneralPolicy, InputIndex, OneStepPolicy, Policy, PolicyConfig, PrecomputedPolicy,
    SwitchingCost,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn run_all(policy: &mut dyn Policy, f: &Fixture) -> usize {
    let mut u = InputIndex::FIRST;
    let mut acc = 0;
    for z in &f.states {
        u = policy.decide(z, u).unwrap();
        acc += u.get();
    }
    acc
}

fn decision_paths(c: &mut Criterion) {
    for f in [boost(), inverter()] {
        let model = &f.converter.model;
        let k = model.input_count();
        let switching = Some(SwitchingCost::constant(k, 1.0, InputIndex::FIRST).unwrap());
        let mut group = c.benchmark_group(format!("decide/{}", f.name));
        for tau in [1usize, 2] {
            let cfg = PolicyConfig::ampc(
                tau,
                f.vf.clone(),
                f.converter.stage.clone(),
                switching.clone(),
            )
            .unwrap();
            let mut general = GeneralPolicy::new(model.clone(), cfg.clone()).unwrap();
            group.bench_function(BenchmarkId::new("general", tau), |b| {
                b.iter(|| run_all(&mut general, &f))
            });
            if let Ok(mut pre) = PrecomputedPolicy::new(model, &cfg) {
                group.bench_function(BenchmarkId::new("precomputed", tau), |b| {
                    b.iter(|| run_all(&mut pre, &f))
                });
            }
            if tau == 1 && model.has_common_a() {
                let mut one = OneStepPolicy::new(model, &f.vf, switching.clone()).unwrap();
                group.bench_function(BenchmarkId::new("onestep", tau), |b| {
                    b.iter(|| run_all(&mut one, &f))
                });
            }
        }
        group.finish();
    }
}

criterion_group!(benches, decision_paths);
criterion_main!(benches);
