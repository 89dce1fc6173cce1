//! Discrete-time switched dynamics `x⁺ = f(x, u)` with finitely many inputs.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expm::matrix_exponential;

pub type StateVector = DVector<f64>;

/// One-based input index `u ∈ {1, …, K}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InputIndex(u32);

impl InputIndex {
    pub const FIRST: InputIndex = InputIndex(1);

    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k > u32::MAX as usize {
            return Err(Error::InvalidInput { index: k, count: 0 });
        }
        Ok(InputIndex(k as u32))
    }

    pub fn from_zero_based(i: usize) -> Self {
        InputIndex(i as u32 + 1)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn zero_based(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for InputIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `x⁺ = A x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMode {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl AffineMode {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension {
                context: "AffineMode A (square)",
                expected: a.nrows(),
                actual: a.ncols(),
            });
        }
        if b.len() != a.nrows() {
            return Err(Error::Dimension {
                context: "AffineMode b",
                expected: a.nrows(),
                actual: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("AffineMode coefficients"));
        }
        Ok(AffineMode { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Writes `A x + b` into `out`. Slices must have length `n`.
    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.b.len();
        out.copy_from_slice(self.b.as_slice());
        let a = self.a.as_slice();
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = &a[j * n..(j + 1) * n];
            for (o, &aij) in out.iter_mut().zip(col) {
                *o += aij * xj;
            }
        }
    }
}

/// Affine mode chosen by a linear threshold on the pre-step state:
/// `mode_if_ge` applies iff `guard_row · x ≥ guard_offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct GuardedMode {
    guard_row: DVector<f64>,
    guard_offset: f64,
    mode_if_ge: AffineMode,
    mode_if_lt: AffineMode,
}

impl GuardedMode {
    pub fn new(
        guard_row: DVector<f64>,
        guard_offset: f64,
        mode_if_ge: AffineMode,
        mode_if_lt: AffineMode,
    ) -> Result<Self> {
        let n = mode_if_ge.dim();
        if mode_if_lt.dim() != n || guard_row.len() != n {
            return Err(Error::Dimension {
                context: "GuardedMode",
                expected: n,
                actual: if guard_row.len() != n {
                    guard_row.len()
                } else {
                    mode_if_lt.dim()
                },
            });
        }
        if !guard_offset.is_finite() || guard_row.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("GuardedMode guard"));
        }
        Ok(GuardedMode {
            guard_row,
            guard_offset,
            mode_if_ge,
            mode_if_lt,
        })
    }

    pub fn guard_row(&self) -> &DVector<f64> {
        &self.guard_row
    }

    pub fn guard_offset(&self) -> f64 {
        self.guard_offset
    }

    pub fn mode_if_ge(&self) -> &AffineMode {
        &self.mode_if_ge
    }

    pub fn mode_if_lt(&self) -> &AffineMode {
        &self.mode_if_lt
    }

    #[inline]
    pub fn guard_holds(&self, x: &[f64]) -> bool {
        let s: f64 = self
            .guard_row
            .iter()
            .zip(x)
            .map(|(c, xi)| c * xi)
            .sum();
        s >= self.guard_offset
    }

    #[inline]
    pub fn select(&self, x: &[f64]) -> &AffineMode {
        if self.guard_holds(x) {
            &self.mode_if_ge
        } else {
            &self.mode_if_lt
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    Affine(AffineMode),
    Guarded(GuardedMode),
}

impl Mode {
    fn dim(&self) -> usize {
        match self {
            Mode::Affine(m) => m.dim(),
            Mode::Guarded(g) => g.mode_if_ge.dim(),
        }
    }

    #[inline]
    pub fn resolve(&self, x: &[f64]) -> &AffineMode {
        match self {
            Mode::Affine(m) => m,
            Mode::Guarded(g) => g.select(x),
        }
    }
}

impl From<AffineMode> for Mode {
    fn from(m: AffineMode) -> Self {
        Mode::Affine(m)
    }
}

impl From<GuardedMode> for Mode {
    fn from(g: GuardedMode) -> Self {
        Mode::Guarded(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchedModel {
    n: usize,
    modes: Vec<Mode>,
    pure_affine: bool,
    common_a: bool,
}

impl SwitchedModel {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::Model("a switched model needs at least one input".into()))?;
        let n = first.dim();
        if n == 0 {
            return Err(Error::Model("state dimension must be positive".into()));
        }
        for m in &modes {
            if m.dim() != n {
                return Err(Error::Dimension {
                    context: "SwitchedModel modes",
                    expected: n,
                    actual: m.dim(),
                });
            }
        }
        let pure_affine = modes.iter().all(|m| matches!(m, Mode::Affine(_)));
        let common_a = pure_affine && {
            let a0 = match &modes[0] {
                Mode::Affine(m) => &m.a,
                Mode::Guarded(_) => unreachable!(),
            };
            modes.iter().all(|m| match m {
                Mode::Affine(m) => &m.a == a0,
                Mode::Guarded(_) => false,
            })
        };
        Ok(SwitchedModel {
            n,
            modes,
            pure_affine,
            common_a,
        })
    }

    /// Convenience constructor for a pure switched-affine model.
    pub fn switched_affine(modes: Vec<AffineMode>) -> Result<Self> {
        Self::new(modes.into_iter().map(Mode::Affine).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn input_count(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn is_pure_switched_affine(&self) -> bool {
        self.pure_affine
    }

    pub fn has_common_a(&self) -> bool {
        self.common_a
    }

    /// The unguarded mode for input `u`, if it is unguarded.
    pub fn affine_mode(&self, u: InputIndex) -> Option<&AffineMode> {
        match self.modes.get(u.zero_based())? {
            Mode::Affine(m) => Some(m),
            Mode::Guarded(_) => None,
        }
    }

    pub fn check_input(&self, u: InputIndex) -> Result<()> {
        if u.get() > self.modes.len() {
            return Err(Error::InvalidInput {
                index: u.get(),
                count: self.modes.len(),
            });
        }
        Ok(())
    }

    /// Unchecked hot-path step: zero-based input, slices of length `n`.
    #[inline]
    pub fn step_into(&self, x: &[f64], u0: usize, out: &mut [f64]) {
        self.modes[u0].resolve(x).apply_into(x, out);
    }

    pub fn step(&self, x: &StateVector, u: InputIndex) -> Result<StateVector> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                context: "step state",
                expected: self.n,
                actual: x.len(),
            });
        }
        self.check_input(u)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("step input state"));
        }
        let mut out = DVector::zeros(self.n);
        self.step_into(x.as_slice(), u.zero_based(), out.as_mut_slice());
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("step result"));
        }
        Ok(out)
    }

    /// States `x_0 … x_T` for the given input sequence.
    pub fn simulate(&self, x0: &StateVector, inputs: &[InputIndex]) -> Result<Vec<StateVector>> {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        if x0.len() != self.n {
            return Err(Error::Dimension {
                context: "simulate initial state",
                expected: self.n,
                actual: x0.len(),
            });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("simulate initial state"));
        }
        states.push(x0.clone());
        for (t, &u) in inputs.iter().enumerate() {
            let next = self
                .step(&states[t], u)
                .map_err(|e| Error::Simulation {
                    step: t,
                    source: Box::new(e),
                })?;
            states.push(next);
        }
        Ok(states)
    }
}

/// Exact zero-order-hold discretization of `ẋ = A_c x + b_c` over `h` seconds:
/// `exp(h [[A_c, b_c], [0, 0]]) = [[A, b], [0, 1]]`.
pub fn discretize_affine(a_c: &DMatrix<f64>, b_c: &DVector<f64>, h: f64) -> Result<AffineMode> {
    let n = a_c.nrows();
    if a_c.ncols() != n {
        return Err(Error::Dimension {
            context: "discretize_affine A_c (square)",
            expected: n,
            actual: a_c.ncols(),
        });
    }
    if b_c.len() != n {
        return Err(Error::Dimension {
            context: "discretize_affine b_c",
            expected: n,
            actual: b_c.len(),
        });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("timestep must be positive, got {h}")));
    }
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_c * h));
    aug.view_mut((0, n), (n, 1)).copy_from(&(b_c * h));
    let e = matrix_exponential(&aug)?;
    AffineMode::new(
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, 1)).column(0).into_owned(),
    )
}

/// Exact discretization of `ẋ = A_c x + B_c v` with `v` held constant:
/// returns `(A, B)` from `exp(h [[A_c, B_c], [0, 0]])`.
pub fn discretize_input_map(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_c.nrows();
    let m = b_c.ncols();
    if a_c.ncols() != n || b_c.nrows() != n {
        return Err(Error::Dimension {
            context: "discretize_input_map",
            expected: n,
            actual: b_c.nrows(),
        });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("timestep must be positive, got {h}")));
    }
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_c * h));
    aug.view_mut((0, n), (n, m)).copy_from(&(b_c * h));
    let e = matrix_exponential(&aug)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}
