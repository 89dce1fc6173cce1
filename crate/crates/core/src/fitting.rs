//! Value-function sampling and quadratic approximate value function fitting.
//!
//! The fit minimizes
//! `(1/N) Σ (v_i − V̂(x_i))² + λ ‖P − α P_energy‖²_F`
//! over symmetric `P`, offset `r` and prior scale `α`, where
//! `V̂(x) = (x − x_des)ᵀ P (x − x_des) + r`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cost::{quad_form, DesiredMap, StageCost};
use crate::dynamics::{StateVector, SwitchedModel};
use crate::error::{Error, Result};
use crate::ocp::{value_sample, DEFAULT_NODE_BUDGET};

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
    count: usize,
    seed: u64,
}

impl SampleBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>, count: usize, seed: u64) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                context: "sample box bounds",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        for (lo, hi) in lower.iter().zip(upper.iter()) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "sample box bound [{lo}, {hi}] is not a finite interval"
                )));
            }
        }
        Ok(SampleBox {
            lower,
            upper,
            count,
            seed,
        })
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// `count` points drawn i.i.d. uniformly from the box; deterministic per seed.
pub fn draw_samples(b: &SampleBox) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(b.seed);
    (0..b.count)
        .map(|_| {
            DVector::from_iterator(
                b.dim(),
                b.lower.iter().zip(b.upper.iter()).map(|(&lo, &hi)| {
                    let u: f64 = rng.random();
                    if lo == hi {
                        lo
                    } else {
                        (lo + (hi - lo) * u).min(hi)
                    }
                }),
            )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum SampleStatus {
    /// Solved to the requested relative gap.
    Certified,
    /// Node budget ran out; `v` is the incumbent and `gap` what was proven.
    BudgetExceeded,
    /// Solver error; `v` is NaN.
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueSample {
    pub x: StateVector,
    pub v: f64,
    pub gap: f64,
    pub status: SampleStatus,
}

impl ValueSample {
    pub fn new(x: StateVector, v: f64) -> Self {
        ValueSample {
            x,
            v,
            gap: 0.0,
            status: SampleStatus::Certified,
        }
    }

    pub fn is_certified(&self) -> bool {
        self.status == SampleStatus::Certified
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingOptions {
    pub remaining_horizon: usize,
    pub rel_gap: f64,
    pub node_budget: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            remaining_horizon: 29,
            rel_gap: 0.01,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

/// One value sample per point, order preserved. Runs on the current rayon
/// pool; each worker owns its solver state.
pub fn sample_values(
    points: &[StateVector],
    model: &SwitchedModel,
    stage: &StageCost,
    terminal: &StageCost,
    opts: &SamplingOptions,
) -> Result<Vec<ValueSample>> {
    if opts.remaining_horizon == 0 {
        return Err(Error::InvalidArgument(
            "remaining horizon must be at least 1".into(),
        ));
    }
    Ok(points
        .par_iter()
        .map(|x| {
            match value_sample(
                model,
                stage,
                terminal,
                x,
                opts.remaining_horizon,
                opts.rel_gap,
                opts.node_budget,
            ) {
                Ok(sol) => ValueSample {
                    x: x.clone(),
                    v: sol.optimal_cost,
                    gap: sol.certified_gap,
                    status: if sol.budget_exceeded || sol.certified_gap > opts.rel_gap {
                        SampleStatus::BudgetExceeded
                    } else {
                        SampleStatus::Certified
                    },
                },
                Err(e) => ValueSample {
                    x: x.clone(),
                    v: f64::NAN,
                    gap: f64::INFINITY,
                    status: SampleStatus::Failed(e.to_string()),
                },
            }
        })
        .collect())
}

/// Quadratic form whose value is the energy stored in the converter.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyPrior {
    p_energy: DMatrix<f64>,
}

impl EnergyPrior {
    pub fn new(p_energy: DMatrix<f64>) -> Result<Self> {
        if p_energy.nrows() != p_energy.ncols() {
            return Err(Error::Dimension {
                context: "energy prior (square)",
                expected: p_energy.nrows(),
                actual: p_energy.ncols(),
            });
        }
        if p_energy.iter().any(|v| !v.is_finite()) || p_energy != p_energy.transpose() {
            return Err(Error::InvalidArgument(
                "energy prior must be finite and symmetric".into(),
            ));
        }
        let min_eig = SymmetricEigen::new(p_energy.clone()).eigenvalues.min();
        if min_eig < -1e-12 * p_energy.amax().max(1e-300) {
            return Err(Error::InvalidArgument("energy prior must be PSD".into()));
        }
        Ok(EnergyPrior { p_energy })
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p_energy
    }

    pub fn dim(&self) -> usize {
        self.p_energy.nrows()
    }
}

/// `V̂(x) = (x − x_des)ᵀ P (x − x_des) + r` with `x_des = C_des x + d_des`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticValueFunction {
    p: DMatrix<f64>,
    r: f64,
    map: DesiredMap,
    alpha: f64,
}

impl QuadraticValueFunction {
    pub fn new(p: DMatrix<f64>, r: f64, map: DesiredMap, alpha: f64) -> Result<Self> {
        let n = map.dim();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::Dimension {
                context: "value function P",
                expected: n,
                actual: p.nrows().max(p.ncols()),
            });
        }
        if p.iter().any(|v| !v.is_finite()) || !r.is_finite() {
            return Err(Error::non_finite("value function parameters"));
        }
        let asym = (&p - p.transpose()).amax();
        if asym > 1e-12 * p.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "value function P is not symmetric ({asym:e})"
            )));
        }
        // Store exactly symmetric.
        let p = (&p + p.transpose()) * 0.5;
        Ok(QuadraticValueFunction { p, r, map, alpha })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn map(&self) -> &DesiredMap {
        &self.map
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    #[inline]
    pub fn evaluate_slice(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut stack = [0.0; 32];
        let mut heap;
        let e: &mut [f64] = if n <= 32 {
            &mut stack[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        self.map.residual_into(x, e);
        quad_form(&self.p, e) + self.r
    }

    pub fn evaluate(&self, x: &StateVector) -> f64 {
        self.evaluate_slice(x.as_slice())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.p.clone()).eigenvalues.min()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(self.p.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        e.sort_by(f64::total_cmp);
        e
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub lambda: f64,
    pub psd: bool,
    pub alpha_nonneg: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lambda: 1.0,
            psd: false,
            alpha_nonneg: false,
            max_iterations: 100_000,
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub vf: QuadraticValueFunction,
    /// Mean squared error over the samples used in the regression.
    pub mse: f64,
    pub objective: f64,
    pub used: usize,
    pub excluded: usize,
    /// Normal equations were rank deficient; minimum-norm solution returned.
    pub rank_deficient: bool,
    pub iterations: usize,
    /// Scaled projected-gradient norm at the returned point (0 when unconstrained).
    pub stationarity: f64,
}

/// Least-squares design with unknowns `(P upper triangle row-major, r, α)`.
struct Design {
    n: usize,
    np: usize,
    a: DMatrix<f64>,
    y: DVector<f64>,
    with_alpha: bool,
}

impl Design {
    fn cols(&self) -> usize {
        self.np + 1 + usize::from(self.with_alpha)
    }

    fn build(
        residuals: &[DVector<f64>],
        values: &[f64],
        prior: &DMatrix<f64>,
        lambda: f64,
    ) -> Design {
        let n = prior.nrows();
        let np = n * (n + 1) / 2;
        let with_alpha = lambda > 0.0;
        let cols = np + 1 + usize::from(with_alpha);
        let rows = values.len() + if lambda > 0.0 { np } else { 0 };
        let mut a = DMatrix::zeros(rows, cols);
        let mut y = DVector::zeros(rows);
        let inv_sqrt_n = 1.0 / (values.len() as f64).sqrt();
        for (row, (e, &v)) in residuals.iter().zip(values).enumerate() {
            let mut col = 0;
            for i in 0..n {
                for j in i..n {
                    let f = if i == j { e[i] * e[i] } else { 2.0 * e[i] * e[j] };
                    a[(row, col)] = f * inv_sqrt_n;
                    col += 1;
                }
            }
            a[(row, np)] = inv_sqrt_n;
            y[row] = v * inv_sqrt_n;
        }
        if lambda > 0.0 {
            let base = values.len();
            let mut col = 0;
            for i in 0..n {
                for j in i..n {
                    let w = if i == j { lambda.sqrt() } else { (2.0 * lambda).sqrt() };
                    a[(base + col, col)] = w;
                    a[(base + col, np + 1)] = -w * prior[(i, j)];
                    col += 1;
                }
            }
        }
        Design {
            n,
            np,
            a,
            y,
            with_alpha,
        }
    }

    fn unpack(&self, theta: &DVector<f64>) -> (DMatrix<f64>, f64, f64) {
        let n = self.n;
        let mut p = DMatrix::zeros(n, n);
        let mut col = 0;
        for i in 0..n {
            for j in i..n {
                p[(i, j)] = theta[col];
                p[(j, i)] = theta[col];
                col += 1;
            }
        }
        let alpha = if self.with_alpha { theta[self.np + 1] } else { 0.0 };
        (p, theta[self.np], alpha)
    }

    fn objective(&self, theta: &DVector<f64>) -> f64 {
        (&self.a * theta - &self.y).norm_squared()
    }
}

/// Column-equilibrated SVD least squares; minimum-norm when rank deficient.
fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let scale: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let nrm = c.norm();
            if nrm > 0.0 {
                nrm
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = a.clone();
    for (j, s) in scale.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * (a.nrows().max(a.ncols()) as f64);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let deficient = rank < a.ncols();
    let theta = if deficient {
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * 1e-12 * (a.nrows().max(a.ncols()) as f64);
        svd.solve(y, tol).map_err(|e| Error::Fit(e.to_string()))?
    } else {
        let t = svd.solve(y, tol).map_err(|e| Error::Fit(e.to_string()))?;
        DVector::from_iterator(t.len(), t.iter().zip(&scale).map(|(v, s)| v / s))
    };
    Ok((theta, deficient))
}

fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.min() >= 0.0 {
        return m.clone();
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (&out + out.transpose()) * 0.5
}

/// Projected accelerated gradient in coordinates where `P̃ = D P D` (a
/// congruence, so PSD is preserved) and `r`, `α` are column-normalized.
fn solve_constrained(
    design: &Design,
    residual_rms: &[f64],
    start: &DVector<f64>,
    opts: &FitOptions,
) -> Result<(DVector<f64>, usize, f64)> {
    let n = design.n;
    let np = design.np;
    let cols = design.cols();
    let sqrt2 = std::f64::consts::SQRT_2;

    // theta = T * z  (T diagonal).
    let mut t = DVector::zeros(cols);
    let mut col = 0;
    for i in 0..n {
        for j in i..n {
            let s = residual_rms[i] * residual_rms[j];
            t[col] = if i == j { 1.0 / s } else { 1.0 / (s * sqrt2) };
            col += 1;
        }
    }
    for j in np..cols {
        let c = design.a.column(j).norm();
        t[j] = if c > 0.0 { 1.0 / c } else { 1.0 };
    }
    let at = {
        let mut m = design.a.clone();
        for j in 0..cols {
            m.column_mut(j).scale_mut(t[j]);
        }
        m
    };
    let hess = at.transpose() * &at * 2.0;
    let lin = at.transpose() * &design.y * 2.0;
    let yy = design.y.norm_squared();
    let lipschitz = SymmetricEigen::new(hess.clone()).eigenvalues.max();
    if !(lipschitz > 0.0) {
        return Err(Error::Fit("degenerate objective curvature".into()));
    }
    let objective = |z: &DVector<f64>| 0.5 * z.dot(&(&hess * z)) - lin.dot(z) + yy;
    let gradient = |z: &DVector<f64>| &hess * z - &lin;

    let project = |z: &DVector<f64>| -> DVector<f64> {
        let mut out = z.clone();
        let mut m = DMatrix::zeros(n, n);
        let mut col = 0;
        for i in 0..n {
            for j in i..n {
                let v = if i == j { z[col] } else { z[col] / sqrt2 };
                m[(i, j)] = v;
                m[(j, i)] = v;
                col += 1;
            }
        }
        if opts.psd {
            let m = project_psd(&m);
            let mut col = 0;
            for i in 0..n {
                for j in i..n {
                    out[col] = if i == j { m[(i, j)] } else { m[(i, j)] * sqrt2 };
                    col += 1;
                }
            }
        }
        if opts.alpha_nonneg && design.with_alpha {
            out[np + 1] = out[np + 1].max(0.0);
        }
        out
    };

    let scale = lin.norm().max(1e-300);
    let stationarity = |z: &DVector<f64>| {
        let g = gradient(z);
        let step = project(&(z - &g / lipschitz));
        (z - step).norm() * lipschitz / scale
    };

    let z0 = DVector::from_iterator(cols, start.iter().zip(t.iter()).map(|(th, ti)| th / ti));
    let mut x = project(&z0);
    let mut x_prev = x.clone();
    let mut best = x.clone();
    let mut best_obj = objective(&x);
    let mut f_prev = best_obj;
    let mut momentum_k = 1.0f64;
    let mut iterations = 0;
    let mut stat = stationarity(&x);
    while stat > opts.tolerance && iterations < opts.max_iterations {
        iterations += 1;
        let k_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum_k * momentum_k).sqrt());
        let yk = &x + (&x - &x_prev) * ((momentum_k - 1.0) / k_next);
        let g = gradient(&yk);
        let next = project(&(&yk - &g / lipschitz));
        let f_next = objective(&next);
        x_prev = std::mem::replace(&mut x, next);
        momentum_k = k_next;
        if f_next > f_prev {
            momentum_k = 1.0;
            x_prev = x.clone();
        }
        f_prev = f_next;
        if f_next < best_obj {
            best_obj = f_next;
            best = x.clone();
        }
        if iterations % 16 == 0 {
            stat = stationarity(&x);
        }
    }
    let stat_best = stationarity(&best);
    let stat = stat.min(stat_best);
    if stat > opts.tolerance {
        return Err(Error::Fit(format!(
            "projected gradient did not converge in {iterations} iterations \
             (stationarity {stat:.3e})"
        )));
    }
    let theta = DVector::from_iterator(cols, best.iter().zip(t.iter()).map(|(z, ti)| z * ti));
    Ok((theta, iterations, stat_best))
}

/// Fits `V̂` to the certified samples; other samples are excluded and counted.
pub fn fit_quadratic(
    samples: &[ValueSample],
    prior: &EnergyPrior,
    opts: &FitOptions,
    map: &DesiredMap,
) -> Result<FitReport> {
    let n = prior.dim();
    if map.dim() != n {
        return Err(Error::Dimension {
            context: "fit desired-state map",
            expected: n,
            actual: map.dim(),
        });
    }
    if !(opts.lambda >= 0.0 && opts.lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {}",
            opts.lambda
        )));
    }
    let used: Vec<&ValueSample> = samples
        .iter()
        .filter(|s| s.is_certified() && s.v.is_finite())
        .collect();
    if used.is_empty() {
        return Err(Error::Fit("no certified samples to fit".into()));
    }
    for s in &used {
        if s.x.len() != n {
            return Err(Error::Dimension {
                context: "fit sample state",
                expected: n,
                actual: s.x.len(),
            });
        }
    }
    let residuals: Vec<DVector<f64>> = used
        .iter()
        .map(|s| {
            let mut e = DVector::zeros(n);
            map.residual_into(s.x.as_slice(), e.as_mut_slice());
            e
        })
        .collect();
    let values: Vec<f64> = used.iter().map(|s| s.v).collect();
    let design = Design::build(&residuals, &values, prior.matrix(), opts.lambda);

    let (mut theta, rank_deficient) = least_squares(&design.a, &design.y)?;
    let mut iterations = 0;
    let mut stationarity = 0.0;

    if opts.psd || (opts.alpha_nonneg && design.with_alpha) {
        let (p, _, alpha) = design.unpack(&theta);
        let feasible = (!opts.psd || SymmetricEigen::new(p).eigenvalues.min() >= 0.0)
            && (!opts.alpha_nonneg || alpha >= 0.0);
        if !feasible {
            let rms: Vec<f64> = (0..n)
                .map(|i| {
                    let m = residuals.iter().map(|e| e[i] * e[i]).sum::<f64>()
                        / residuals.len() as f64;
                    if m > 0.0 {
                        m.sqrt()
                    } else {
                        1.0
                    }
                })
                .collect();
            let (t, it, st) = solve_constrained(&design, &rms, &theta, opts)?;
            theta = t;
            iterations = it;
            stationarity = st;
        }
    }

    let (p, r, alpha) = design.unpack(&theta);
    let objective = design.objective(&theta);
    let vf = QuadraticValueFunction::new(p, r, map.clone(), alpha)?;
    let mse = used
        .iter()
        .map(|s| (s.v - vf.evaluate(&s.x)).powi(2))
        .sum::<f64>()
        / used.len() as f64;
    Ok(FitReport {
        vf,
        mse,
        objective,
        used: used.len(),
        excluded: samples.len() - used.len(),
        rank_deficient,
        iterations,
        stationarity,
    })
}

/// `(1/N) Σ (v_i − V̂(x_i))² + λ ‖P − α P_energy‖²_F` over certified samples.
pub fn fit_objective(
    samples: &[ValueSample],
    prior: &EnergyPrior,
    lambda: f64,
    vf: &QuadraticValueFunction,
) -> f64 {
    let used: Vec<&ValueSample> = samples.iter().filter(|s| s.is_certified()).collect();
    let data = used
        .iter()
        .map(|s| (s.v - vf.evaluate(&s.x)).powi(2))
        .sum::<f64>()
        / used.len() as f64;
    data + lambda * (vf.p() - prior.matrix() * vf.alpha()).norm_squared()
}
