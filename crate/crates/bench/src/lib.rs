//! Benchmark fixtures.
//!
//! The value functions here are the converters' stored-energy forms, not
//! fitted ones: decision timing does not depend on the coefficients.

use ampc_core::converters::{INVERTER_COS, INVERTER_SIN};
use ampc_core::{
    build_boost, build_inverter, BoostParams, ConverterModel, InverterParams,
    QuadraticValueFunction, StateVector,
};

pub struct Fixture {
    pub name: &'static str,
    pub converter: ConverterModel,
    pub vf: QuadraticValueFunction,
    pub states: Vec<StateVector>,
}

fn vf_for(c: &ConverterModel) -> QuadraticValueFunction {
    QuadraticValueFunction::new(c.energy.matrix().clone(), 0.0, c.desired.clone(), 1.0)
        .expect("energy form is a valid value function")
}

/// Deterministic spread of states: a fixed linear-congruential walk.
fn spread(n: usize, count: usize, scale: &[f64]) -> Vec<StateVector> {
    let mut s: u64 = 0x2545_f491_4f6c_dd1d;
    (0..count)
        .map(|_| {
            StateVector::from_fn(n, |i, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = (s >> 11) as f64 / (1u64 << 53) as f64;
                (2.0 * u - 1.0) * scale[i]
            })
        })
        .collect()
}

pub fn boost() -> Fixture {
    let converter = build_boost(&BoostParams::default()).expect("default boost builds");
    let vf = vf_for(&converter);
    let states = spread(2, 256, &[10.0, 50.0])
        .into_iter()
        .map(|x| x.abs())
        .collect();
    Fixture { name: "boost", converter, vf, states }
}

pub fn inverter() -> Fixture {
    let inv = build_inverter(&InverterParams::default()).expect("default inverter builds");
    let converter = inv.converter;
    let vf = vf_for(&converter);
    let mut scale = vec![20.0; 9];
    for k in 3..6 {
        scale[k] = 300.0;
    }
    scale.extend([1.0, 1.0]);
    let states = spread(11, 256, &scale)
        .into_iter()
        .enumerate()
        .map(|(i, mut x)| {
            let th = i as f64 * 0.1;
            x[INVERTER_SIN] = th.sin();
            x[INVERTER_COS] = th.cos();
            x
        })
        .collect();
    Fixture { name: "inverter", converter, vf, states }
}
