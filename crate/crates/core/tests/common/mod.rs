#![allow(dead_code)]

use ampc_core::{AffineMode, DesiredMap, GuardedMode, Mode, StageCost, SwitchedModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.random_range(lo..hi))
}

pub fn uniform_mat(r: &mut ChaCha8Rng, n: usize, m: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| r.random_range(lo..hi))
}

/// Contractive-ish random `A` (spectral scale ≈ `0.9`).
pub fn random_a(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = uniform_mat(r, n, n, -1.0, 1.0);
    let s = a.norm() / (n as f64).sqrt();
    a * (0.9 / s.max(1e-9))
}

pub fn random_affine_model(r: &mut ChaCha8Rng, n: usize, k: usize, common_a: bool) -> SwitchedModel {
    let shared = random_a(r, n);
    let modes = (0..k)
        .map(|_| {
            let a = if common_a { shared.clone() } else { random_a(r, n) };
            AffineMode::new(a, uniform_vec(r, n, -1.0, 1.0)).unwrap()
        })
        .collect();
    SwitchedModel::switched_affine(modes).unwrap()
}

/// Random affine modes with the last one guarded on a random hyperplane.
pub fn random_guarded_model(r: &mut ChaCha8Rng, n: usize, k: usize) -> SwitchedModel {
    let mut modes: Vec<Mode> = (0..k - 1)
        .map(|_| Mode::Affine(AffineMode::new(random_a(r, n), uniform_vec(r, n, -1.0, 1.0)).unwrap()))
        .collect();
    let ge = AffineMode::new(random_a(r, n), uniform_vec(r, n, -1.0, 1.0)).unwrap();
    let lt = AffineMode::new(random_a(r, n), uniform_vec(r, n, -1.0, 1.0)).unwrap();
    let g = GuardedMode::new(uniform_vec(r, n, -1.0, 1.0), r.random_range(-0.5..0.5), ge, lt).unwrap();
    modes.push(Mode::Guarded(g));
    SwitchedModel::new(modes).unwrap()
}

pub fn random_spd(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let l = uniform_mat(r, n, n, -1.0, 1.0);
    &l * l.transpose() + DMatrix::identity(n, n) * 0.1
}

pub fn random_quadratic_cost(r: &mut ChaCha8Rng, n: usize) -> StageCost {
    StageCost::quadratic(random_spd(r, n), DesiredMap::constant(uniform_vec(r, n, -1.0, 1.0))).unwrap()
}

pub fn random_l1_cost(r: &mut ChaCha8Rng, n: usize) -> StageCost {
    StageCost::weighted_l1(uniform_vec(r, n, 0.1, 1.0), DesiredMap::constant(uniform_vec(r, n, -1.0, 1.0)))
        .unwrap()
}

/// Classical RK4 for `ẋ = A x + b` over `h` with `steps` substeps.
pub fn rk4(a: &DMatrix<f64>, b: &DVector<f64>, x0: &DVector<f64>, h: f64, steps: usize) -> DVector<f64> {
    let dt = h / steps as f64;
    let f = |x: &DVector<f64>| a * x + b;
    let mut x = x0.clone();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt / 2.0)));
        let k3 = f(&(&x + &k2 * (dt / 2.0)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    x
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
