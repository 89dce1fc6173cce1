//! Stage, terminal and switching costs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dynamics::{InputIndex, StateVector};
use crate::error::{Error, Result};

const STACK_DIM: usize = 32;

/// Affine desired state `x_des = C x + d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesiredMap {
    c: DMatrix<f64>,
    d: DVector<f64>,
    c_is_zero: bool,
}

impl DesiredMap {
    pub fn constant(d: DVector<f64>) -> Self {
        let n = d.len();
        DesiredMap {
            c: DMatrix::zeros(n, n),
            d,
            c_is_zero: true,
        }
    }

    pub fn affine(c: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        if c.nrows() != d.len() || c.ncols() != d.len() {
            return Err(Error::Dimension {
                context: "DesiredMap C",
                expected: d.len(),
                actual: c.nrows().max(c.ncols()),
            });
        }
        if c.iter().chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("DesiredMap"));
        }
        let c_is_zero = c.iter().all(|&v| v == 0.0);
        Ok(DesiredMap { c, d, c_is_zero })
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn with_offset(&self, d: DVector<f64>) -> Result<Self> {
        Self::affine(self.c.clone(), d)
    }

    pub fn desired(&self, x: &StateVector) -> StateVector {
        &self.c * x + &self.d
    }

    /// `I − C`.
    pub fn residual_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - &self.c
    }

    /// Component `i` of `x − C x − d`.
    #[inline]
    pub fn residual_at(&self, x: &[f64], i: usize) -> f64 {
        let mut r = x[i] - self.d[i];
        if !self.c_is_zero {
            let n = self.d.len();
            let c = self.c.as_slice();
            for (j, &xj) in x.iter().enumerate() {
                r -= c[j * n + i] * xj;
            }
        }
        r
    }

    #[inline]
    pub fn residual_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.residual_at(x, i);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostKind {
    /// `Σ w_i |x_i − x_des,i|`; entries with zero weight are not penalized.
    WeightedL1 { weights: DVector<f64> },
    /// `(x − x_des)ᵀ Q (x − x_des)`.
    Quadratic { q: DMatrix<f64> },
    /// Identically zero.
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageCost {
    kind: CostKind,
    target: DesiredMap,
    active: Vec<(usize, f64)>,
}

impl StageCost {
    pub fn weighted_l1(weights: DVector<f64>, target: DesiredMap) -> Result<Self> {
        if weights.len() != target.dim() {
            return Err(Error::Dimension {
                context: "weighted-L1 weights",
                expected: target.dim(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "weighted-L1 weights must be finite and nonnegative".into(),
            ));
        }
        let active = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| (i, w))
            .collect();
        Ok(StageCost {
            kind: CostKind::WeightedL1 { weights },
            target,
            active,
        })
    }

    pub fn quadratic(q: DMatrix<f64>, target: DesiredMap) -> Result<Self> {
        let n = target.dim();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::Dimension {
                context: "quadratic cost Q",
                expected: n,
                actual: q.nrows().max(q.ncols()),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("quadratic cost Q"));
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * q.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "quadratic cost Q is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let min_eig = SymmetricEigen::new(q.clone()).eigenvalues.min();
        if min_eig < -1e-10 {
            return Err(Error::InvalidArgument(format!(
                "quadratic cost Q is not PSD (min eigenvalue {min_eig:e})"
            )));
        }
        let active = (0..n).map(|i| (i, 1.0)).collect();
        Ok(StageCost {
            kind: CostKind::Quadratic { q },
            target,
            active,
        })
    }

    pub fn zero(n: usize) -> Self {
        StageCost {
            kind: CostKind::Zero,
            target: DesiredMap::constant(DVector::zeros(n)),
            active: Vec::new(),
        }
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn target(&self) -> &DesiredMap {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, CostKind::Quadratic { .. } | CostKind::Zero)
    }

    /// Weight matrix of the quadratic form, `0` for the zero cost.
    pub fn quadratic_weight(&self) -> Option<DMatrix<f64>> {
        match &self.kind {
            CostKind::Quadratic { q } => Some(q.clone()),
            CostKind::Zero => Some(DMatrix::zeros(self.dim(), self.dim())),
            CostKind::WeightedL1 { .. } => None,
        }
    }

    #[inline]
    pub fn eval_slice(&self, x: &[f64]) -> f64 {
        match &self.kind {
            CostKind::Zero => 0.0,
            CostKind::WeightedL1 { .. } => self
                .active
                .iter()
                .map(|&(i, w)| w * self.target.residual_at(x, i).abs())
                .sum(),
            CostKind::Quadratic { q } => {
                let n = x.len();
                let mut stack = [0.0; STACK_DIM];
                let mut heap;
                let e: &mut [f64] = if n <= STACK_DIM {
                    &mut stack[..n]
                } else {
                    heap = vec![0.0; n];
                    &mut heap
                };
                self.target.residual_into(x, e);
                quad_form(q, e)
            }
        }
    }

    pub fn eval(&self, x: &StateVector) -> f64 {
        self.eval_slice(x.as_slice())
    }

    /// Whether [`StageCost::box_lower_bound`] can be positive.
    pub fn has_box_bound(&self) -> bool {
        matches!(self.kind, CostKind::WeightedL1 { .. }) && !self.active.is_empty()
    }

    /// Lower bound of the cost over the box `center ± radius`.
    ///
    /// Exact for weighted L1 (each residual is an interval); `0` for the
    /// quadratic and zero costs.
    pub fn box_lower_bound(&self, center: &[f64], radius: &[f64]) -> f64 {
        if !self.has_box_bound() {
            return 0.0;
        }
        let n = center.len();
        let c = self.target.c().as_slice();
        let c_is_zero = self.target.c_is_zero;
        self.active
            .iter()
            .map(|&(i, w)| {
                let mid = self.target.residual_at(center, i);
                let spread = if c_is_zero {
                    radius[i]
                } else {
                    radius
                        .iter()
                        .enumerate()
                        .map(|(j, &rj)| {
                            let m = if i == j { 1.0 } else { 0.0 } - c[j * n + i];
                            m.abs() * rj
                        })
                        .sum()
                };
                w * (mid.abs() - spread).max(0.0)
            })
            .sum()
    }
}

/// `eᵀ M e` for a column-major square matrix.
#[inline]
pub(crate) fn quad_form(m: &DMatrix<f64>, e: &[f64]) -> f64 {
    let n = e.len();
    let s = m.as_slice();
    let mut total = 0.0;
    for (j, &ej) in e.iter().enumerate() {
        let col = &s[j * n..(j + 1) * n];
        let dot: f64 = col.iter().zip(e).map(|(a, b)| a * b).sum();
        total += ej * dot;
    }
    total
}

/// Pairwise transition penalty `ℓ(i, j)` plus the input assumed applied before
/// the first decision.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingCost {
    table: DMatrix<f64>,
    initial: InputIndex,
}

impl SwitchingCost {
    pub fn from_table(table: DMatrix<f64>, initial: InputIndex) -> Result<Self> {
        let k = table.nrows();
        if table.ncols() != k {
            return Err(Error::Dimension {
                context: "switching cost table (square)",
                expected: k,
                actual: table.ncols(),
            });
        }
        if initial.get() > k {
            return Err(Error::InvalidInput {
                index: initial.get(),
                count: k,
            });
        }
        for i in 0..k {
            if table[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(
                    "switching cost diagonal must be zero".into(),
                ));
            }
        }
        if table.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "switching costs must be finite and nonnegative".into(),
            ));
        }
        Ok(SwitchingCost { table, initial })
    }

    /// `ℓ(i, j) = cost` for `i ≠ j`.
    pub fn constant(k: usize, cost: f64, initial: InputIndex) -> Result<Self> {
        let table = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { cost });
        Self::from_table(table, initial)
    }

    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    pub fn initial(&self) -> InputIndex {
        self.initial
    }

    pub fn input_count(&self) -> usize {
        self.table.nrows()
    }

    /// Same table, different assumed previous input.
    pub fn with_initial(&self, initial: InputIndex) -> Result<Self> {
        Self::from_table(self.table.clone(), initial)
    }

    /// `ℓ(prev, next)` with zero-based indices.
    #[inline]
    pub fn cost0(&self, prev: usize, next: usize) -> f64 {
        self.table[(prev, next)]
    }

    pub fn cost(&self, prev: InputIndex, next: InputIndex) -> f64 {
        self.cost0(prev.zero_based(), next.zero_based())
    }
}

/// `Σ_{t<T} (g(x_t) + ℓ(u_{t−1}, u_t)) + h(x_T)`, with the first transition
/// charged against the switching cost's initial input.
pub fn trajectory_cost(
    states: &[StateVector],
    inputs: &[InputIndex],
    stage: &StageCost,
    terminal: &StageCost,
    switching: Option<&SwitchingCost>,
) -> Result<f64> {
    if states.len() != inputs.len() + 1 {
        return Err(Error::Dimension {
            context: "trajectory_cost states (inputs + 1)",
            expected: inputs.len() + 1,
            actual: states.len(),
        });
    }
    let mut acc = 0.0;
    let mut prev = switching.map(|s| s.initial().zero_based());
    for (x, &u) in states.iter().zip(inputs) {
        let l = match (switching, prev) {
            (Some(s), Some(p)) => s.cost0(p, u.zero_based()),
            _ => 0.0,
        };
        acc += stage.eval(x) + l;
        prev = Some(u.zero_based());
    }
    Ok(acc + terminal.eval(&states[states.len() - 1]))
}
