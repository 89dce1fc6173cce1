//! Online A-MPC decision rules and the closed-loop driver.
//!
//! [`decide_general`] enumerates all `K^τ` input sequences by simulation and
//! is the reference for every specialized path. [`PrecomputedPolicy`] folds
//! each sequence into a quadratic form of the current state, and
//! [`OneStepForm`] reduces the common-`A`, `τ = 1` case to `F z + g`.
//!
//! Scores are compared with plain `<`; ties go to the lexicographically
//! smallest sequence.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::cost::{quad_form, DesiredMap, StageCost, SwitchingCost};
use crate::dynamics::{InputIndex, Mode, StateVector, SwitchedModel};
use crate::error::{Error, Result};
use crate::fitting::QuadraticValueFunction;
use crate::ocp::{solve_bnb, solve_exhaustive, OcpInstance};

/// Largest `K^τ` a policy will enumerate or materialize.
pub const DEFAULT_POLICY_BUDGET: u128 = 1_000_000;

/// Cost charged on the state reached after `τ` steps.
#[derive(Clone, Debug, PartialEq)]
pub enum TailCost {
    Value(QuadraticValueFunction),
    /// Plain stage-style cost; with `τ = 1` and the stage cost this is the
    /// greedy one-step policy.
    Stage(StageCost),
}

impl TailCost {
    #[inline]
    pub fn eval_slice(&self, x: &[f64]) -> f64 {
        match self {
            TailCost::Value(vf) => vf.evaluate_slice(x),
            TailCost::Stage(s) => s.eval_slice(x),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TailCost::Value(vf) => vf.dim(),
            TailCost::Stage(s) => s.dim(),
        }
    }

    /// `(W, map, r)` such that the cost is `(Mx − d)ᵀ W (Mx − d) + r`.
    fn quadratic_parts(&self) -> Option<(DMatrix<f64>, &DesiredMap, f64)> {
        match self {
            TailCost::Value(vf) => Some((vf.p().clone(), vf.map(), vf.r())),
            TailCost::Stage(s) => s.quadratic_weight().map(|q| (q, s.target(), 0.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub tau: usize,
    pub tail: TailCost,
    pub stage: StageCost,
    pub switching: Option<SwitchingCost>,
}

impl PolicyConfig {
    pub fn new(
        tau: usize,
        tail: TailCost,
        stage: StageCost,
        switching: Option<SwitchingCost>,
    ) -> Result<Self> {
        if tau == 0 {
            return Err(Error::InvalidArgument("policy horizon τ must be ≥ 1".into()));
        }
        if tail.dim() != stage.dim() {
            return Err(Error::Dimension {
                context: "policy tail cost",
                expected: stage.dim(),
                actual: tail.dim(),
            });
        }
        Ok(PolicyConfig {
            tau,
            tail,
            stage,
            switching,
        })
    }

    /// A-MPC with a fitted value function.
    pub fn ampc(
        tau: usize,
        vf: QuadraticValueFunction,
        stage: StageCost,
        switching: Option<SwitchingCost>,
    ) -> Result<Self> {
        Self::new(tau, TailCost::Value(vf), stage, switching)
    }

    fn check(&self, model: &SwitchedModel) -> Result<()> {
        if self.stage.dim() != model.n() {
            return Err(Error::Dimension {
                context: "policy stage cost",
                expected: model.n(),
                actual: self.stage.dim(),
            });
        }
        let k = model.input_count();
        if let Some(s) = &self.switching {
            if s.input_count() != k {
                return Err(Error::Dimension {
                    context: "policy switching cost",
                    expected: k,
                    actual: s.input_count(),
                });
            }
        }
        if k > u8::MAX as usize {
            return Err(Error::Unsupported(format!("{k} inputs (max 255)")));
        }
        let count = (k as u128).checked_pow(self.tau as u32);
        match count {
            Some(c) if c <= DEFAULT_POLICY_BUDGET => Ok(()),
            _ => Err(Error::EnumerationBudget {
                required: count.unwrap_or(u128::MAX),
                budget: DEFAULT_POLICY_BUDGET,
            }),
        }
    }

    #[inline]
    fn switch_cost(&self, prev: usize, next: usize) -> f64 {
        match &self.switching {
            Some(s) => s.cost0(prev, next),
            None => 0.0,
        }
    }
}

fn check_state(model: &SwitchedModel, z: &StateVector, u_prev: InputIndex) -> Result<()> {
    if z.len() != model.n() {
        return Err(Error::Dimension {
            context: "policy state",
            expected: model.n(),
            actual: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("policy state"));
    }
    model.check_input(u_prev)
}

/// Reusable buffers for [`decide_general`].
#[derive(Clone, Debug, Default)]
struct Enumerator {
    states: Vec<f64>,
    acc: Vec<f64>,
    seq: Vec<u8>,
}

impl Enumerator {
    /// Lexicographic enumeration with prefix sharing; returns the first input
    /// of the best sequence.
    fn run(
        &mut self,
        model: &SwitchedModel,
        cfg: &PolicyConfig,
        z: &[f64],
        u_prev: usize,
    ) -> Result<(usize, f64)> {
        let n = model.n();
        let k = model.input_count() as u8;
        let tau = cfg.tau;
        self.states.resize((tau + 1) * n, 0.0);
        self.acc.resize(tau + 1, 0.0);
        self.seq.clear();
        self.seq.resize(tau, 0);
        self.states[..n].copy_from_slice(z);
        self.acc[0] = 0.0;

        let mut best = f64::INFINITY;
        let mut best_first = 0usize;
        // Depth from which states must be recomputed.
        let mut dirty = 0usize;
        loop {
            for d in dirty..tau {
                let (head, tail) = self.states.split_at_mut((d + 1) * n);
                let x = &head[d * n..];
                let u = self.seq[d] as usize;
                let prev = if d == 0 { u_prev } else { self.seq[d - 1] as usize };
                self.acc[d + 1] = self.acc[d] + (cfg.stage.eval_slice(x) + cfg.switch_cost(prev, u));
                model.step_into(x, u, &mut tail[..n]);
            }
            let score = self.acc[tau] + cfg.tail.eval_slice(&self.states[tau * n..]);
            if score.is_nan() {
                return Err(Error::non_finite("policy sequence score"));
            }
            if score < best {
                best = score;
                best_first = self.seq[0] as usize;
            }
            // Advance the odometer.
            let mut d = tau;
            loop {
                if d == 0 {
                    if best.is_finite() {
                        return Ok((best_first, best));
                    }
                    return Err(Error::non_finite("all policy sequence scores"));
                }
                d -= 1;
                self.seq[d] += 1;
                if self.seq[d] < k {
                    break;
                }
                self.seq[d] = 0;
            }
            dirty = d;
        }
    }
}

/// Enumerate every `τ`-step input sequence from `z`, score
/// `Σ_{t<τ} (g(x_t) + ℓ(u_{t−1}, u_t)) + V̂(x_τ)` and return the first input
/// of the best one. The first transition is charged against `u_prev`.
pub fn decide_general(
    model: &SwitchedModel,
    cfg: &PolicyConfig,
    z: &StateVector,
    u_prev: InputIndex,
) -> Result<InputIndex> {
    cfg.check(model)?;
    check_state(model, z, u_prev)?;
    let (u, _) = Enumerator::default().run(model, cfg, z.as_slice(), u_prev.zero_based())?;
    Ok(InputIndex::from_zero_based(u))
}

/// `zᵀ P z + qᵀ z + r`, with `P` optional.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadForm {
    pub p: Option<DMatrix<f64>>,
    pub q: DVector<f64>,
    pub r: f64,
}

impl QuadForm {
    #[inline]
    pub fn eval_slice(&self, z: &[f64]) -> f64 {
        let lin: f64 = self.q.iter().zip(z).map(|(a, b)| a * b).sum();
        match &self.p {
            Some(p) => quad_form(p, z) + lin + self.r,
            None => lin + self.r,
        }
    }
}

/// Guard-dependent alternative for a `τ = 1` form on a guarded input.
#[derive(Clone, Debug, PartialEq)]
pub struct GuardedBranch {
    pub guard_row: DVector<f64>,
    pub guard_offset: f64,
    /// Form used when the guard does not hold.
    pub if_lt: QuadForm,
}

/// One input sequence folded into a quadratic function of the initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceForm {
    pub inputs: Vec<InputIndex>,
    /// `P̃`, `q̃`, `r̃`; `P̃` is `None` when every mode shares `A` (it is then
    /// input independent and kept once in the policy).
    pub form: QuadForm,
    /// Switching cost of the transitions inside the sequence.
    pub internal_switching: f64,
    pub branch: Option<GuardedBranch>,
}

impl SequenceForm {
    #[inline]
    fn active(&self, z: &[f64]) -> &QuadForm {
        match &self.branch {
            Some(b) => {
                let s: f64 = b.guard_row.iter().zip(z).map(|(a, x)| a * x).sum();
                if s >= b.guard_offset {
                    &self.form
                } else {
                    &b.if_lt
                }
            }
            None => &self.form,
        }
    }

    /// Quadratic part of the sequence score (switching excluded).
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.active(z).eval_slice(z)
    }
}

/// Accumulates `Σ_t (G_t z + e_t)ᵀ W_t (G_t z + e_t)` into `(P̃, q̃, r̃)`.
struct FormBuilder {
    p: DMatrix<f64>,
    q: DVector<f64>,
    r: f64,
}

impl FormBuilder {
    fn new(n: usize) -> Self {
        FormBuilder {
            p: DMatrix::zeros(n, n),
            q: DVector::zeros(n),
            r: 0.0,
        }
    }

    /// Adds the term for `x = Φ z + β` under residual map `(M, d)`.
    fn add(
        &mut self,
        w: &DMatrix<f64>,
        map: &DesiredMap,
        phi: &DMatrix<f64>,
        beta: &DVector<f64>,
        r: f64,
    ) {
        let m = map.residual_matrix();
        let g = &m * phi;
        let e = &m * beta - map.d();
        let wg = w * &g;
        self.p += g.transpose() * &wg;
        self.q += (wg.transpose() * &e) * 2.0;
        self.r += e.dot(&(w * &e)) + r;
    }

    fn finish(self, keep_p: bool) -> QuadForm {
        let p = keep_p.then(|| (&self.p + self.p.transpose()) * 0.5);
        QuadForm {
            p,
            q: self.q,
            r: self.r,
        }
    }
}

fn affine_parts(model: &SwitchedModel) -> Result<Vec<(DMatrix<f64>, DVector<f64>)>> {
    model
        .modes()
        .iter()
        .map(|m| match m {
            Mode::Affine(a) => Ok((a.a().clone(), a.b().clone())),
            Mode::Guarded(_) => Err(Error::Unsupported(
                "precomputed forms need unguarded modes; use decide_general".into(),
            )),
        })
        .collect()
}

/// `P̃`, `q̃`, `r̃` for every sequence, in lexicographic order.
///
/// With `x_t = Φ_t z + β_t`, each cost term is a quadratic in `z`; the stage
/// weight `Q` is used for `t < τ` and the value function `P` at `t = τ`.
pub fn precompute_quadratic_forms(
    model: &SwitchedModel,
    cfg: &PolicyConfig,
) -> Result<Vec<SequenceForm>> {
    cfg.check(model)?;
    let modes = affine_parts(model)?;
    let q_stage = cfg.stage.quadratic_weight().ok_or_else(|| {
        Error::Unsupported("precomputed forms need a quadratic stage cost".into())
    })?;
    let (w_tail, tail_map, tail_r) = cfg
        .tail
        .quadratic_parts()
        .ok_or_else(|| Error::Unsupported("precomputed forms need a quadratic tail cost".into()))?;
    let n = model.n();
    let k = model.input_count();
    let tau = cfg.tau;
    let keep_p = !model.has_common_a();
    let total = k.pow(tau as u32);
    let mut forms = Vec::with_capacity(total);
    let mut seq = vec![0usize; tau];
    for idx in 0..total {
        let mut rem = idx;
        for d in (0..tau).rev() {
            seq[d] = rem % k;
            rem /= k;
        }
        let mut builder = FormBuilder::new(n);
        let mut phi = DMatrix::identity(n, n);
        let mut beta = DVector::zeros(n);
        for &u in &seq {
            builder.add(&q_stage, cfg.stage.target(), &phi, &beta, 0.0);
            let (a, b) = &modes[u];
            phi = a * &phi;
            beta = a * &beta + b;
        }
        builder.add(&w_tail, tail_map, &phi, &beta, tail_r);
        let internal_switching = seq
            .windows(2)
            .map(|w| cfg.switch_cost(w[0], w[1]))
            .sum();
        forms.push(SequenceForm {
            inputs: seq.iter().map(|&u| InputIndex::from_zero_based(u)).collect(),
            form: builder.finish(keep_p),
            internal_switching,
            branch: None,
        });
    }
    Ok(forms)
}

/// `τ = 1` forms for models that may have guarded modes or a non-quadratic
/// stage cost. The root stage cost `g(z)` is input independent and left out.
fn one_step_branch_forms(model: &SwitchedModel, cfg: &PolicyConfig) -> Result<Vec<SequenceForm>> {
    let (w, map, r) = cfg
        .tail
        .quadratic_parts()
        .ok_or_else(|| Error::Unsupported("precomputed forms need a quadratic tail cost".into()))?;
    let n = model.n();
    let build = |a: &DMatrix<f64>, b: &DVector<f64>| {
        let mut f = FormBuilder::new(n);
        f.add(&w, map, a, b, r);
        f.finish(true)
    };
    Ok(model
        .modes()
        .iter()
        .enumerate()
        .map(|(u, m)| {
            let (form, branch) = match m {
                Mode::Affine(a) => (build(a.a(), a.b()), None),
                Mode::Guarded(g) => (
                    build(g.mode_if_ge().a(), g.mode_if_ge().b()),
                    Some(GuardedBranch {
                        guard_row: g.guard_row().clone(),
                        guard_offset: g.guard_offset(),
                        if_lt: build(g.mode_if_lt().a(), g.mode_if_lt().b()),
                    }),
                ),
            };
            SequenceForm {
                inputs: vec![InputIndex::from_zero_based(u)],
                form,
                internal_switching: 0.0,
                branch,
            }
        })
        .collect())
}

/// Minimizer of the form scores plus switching cost from `u_prev`.
pub fn decide_precomputed(
    forms: &[SequenceForm],
    z: &StateVector,
    u_prev: InputIndex,
    switching: Option<&SwitchingCost>,
) -> Result<InputIndex> {
    best_form(forms, z.as_slice(), u_prev.zero_based(), switching)
        .map(|i| forms[i].inputs[0])
}

#[inline]
fn best_form(
    forms: &[SequenceForm],
    z: &[f64],
    u_prev: usize,
    switching: Option<&SwitchingCost>,
) -> Result<usize> {
    let mut best = f64::INFINITY;
    let mut best_i = None;
    for (i, f) in forms.iter().enumerate() {
        let mut s = f.evaluate(z);
        if let Some(sw) = switching {
            s += sw.cost0(u_prev, f.inputs[0].zero_based()) + f.internal_switching;
        }
        if s < best {
            best = s;
            best_i = Some(i);
        }
    }
    best_i.ok_or_else(|| Error::non_finite("precomputed policy scores"))
}

/// Precomputed A-MPC: one quadratic form per input sequence.
#[derive(Clone, Debug)]
pub struct PrecomputedPolicy {
    forms: Vec<SequenceForm>,
    switching: Option<SwitchingCost>,
    n: usize,
    k: usize,
}

impl PrecomputedPolicy {
    /// Uses [`precompute_quadratic_forms`] when the model is pure switched
    /// affine with a quadratic stage cost; otherwise falls back to guard-aware
    /// one-step forms, which require `τ = 1`.
    pub fn new(model: &SwitchedModel, cfg: &PolicyConfig) -> Result<Self> {
        cfg.check(model)?;
        let forms = if model.is_pure_switched_affine() && cfg.stage.is_quadratic() {
            precompute_quadratic_forms(model, cfg)?
        } else if cfg.tau == 1 {
            one_step_branch_forms(model, cfg)?
        } else {
            return Err(Error::Unsupported(
                "precomputed forms for guarded models or non-quadratic stage costs need τ = 1"
                    .into(),
            ));
        };
        Ok(PrecomputedPolicy {
            forms,
            switching: cfg.switching.clone(),
            n: model.n(),
            k: model.input_count(),
        })
    }

    pub fn forms(&self) -> &[SequenceForm] {
        &self.forms
    }
}

/// `τ = 1` on a common-`A` model: `score_k = F_k z + g_k`.
///
/// With residual map `M x − d`, `F_k = 2 (M b^k)ᵀ P M A` and
/// `g_k = (M b^k − d)ᵀ P (M b^k − d)`; the dropped terms do not depend on `k`.
/// `F` is independent of `d`, so a new offset only touches `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneStepForm {
    pub f: DMatrix<f64>,
    pub g_vec: DVector<f64>,
    /// `M b^k` per input, kept for [`OneStepForm::update_offset`].
    mb: Vec<DVector<f64>>,
    p: DMatrix<f64>,
}

impl OneStepForm {
    pub fn input_count(&self) -> usize {
        self.g_vec.len()
    }

    pub fn update_offset(&mut self, d_des: &DVector<f64>) -> Result<()> {
        if d_des.len() != self.p.nrows() {
            return Err(Error::Dimension {
                context: "one-step offset",
                expected: self.p.nrows(),
                actual: d_des.len(),
            });
        }
        for (k, mb) in self.mb.iter().enumerate() {
            let e = mb - d_des;
            self.g_vec[k] = e.dot(&(&self.p * &e));
        }
        Ok(())
    }

    /// Row-wise scores `F z + g`.
    pub fn scores(&self, z: &StateVector) -> DVector<f64> {
        &self.f * z + &self.g_vec
    }

    #[inline]
    fn best(&self, z: &[f64], u_prev: usize, switching: Option<&SwitchingCost>) -> Result<usize> {
        let k = self.g_vec.len();
        let f = self.f.as_slice();
        let mut scores = [0.0f64; 256];
        let scores = &mut scores[..k];
        scores.copy_from_slice(self.g_vec.as_slice());
        // Column-major accumulation.
        for (j, &zj) in z.iter().enumerate() {
            let col = &f[j * k..(j + 1) * k];
            for (s, &fij) in scores.iter_mut().zip(col) {
                *s += fij * zj;
            }
        }
        let mut best = f64::INFINITY;
        let mut best_k = None;
        for (i, &s) in scores.iter().enumerate() {
            let s = match switching {
                Some(sw) => s + sw.cost0(u_prev, i),
                None => s,
            };
            if s < best {
                best = s;
                best_k = Some(i);
            }
        }
        best_k.ok_or_else(|| Error::non_finite("one-step scores"))
    }

    pub fn decide(
        &self,
        z: &StateVector,
        u_prev: InputIndex,
        switching: Option<&SwitchingCost>,
    ) -> Result<InputIndex> {
        self.best(z.as_slice(), u_prev.zero_based(), switching)
            .map(InputIndex::from_zero_based)
    }
}

pub fn build_one_step(model: &SwitchedModel, vf: &QuadraticValueFunction) -> Result<OneStepForm> {
    if !model.has_common_a() {
        return Err(Error::Unsupported(
            "one-step form needs every mode to share the same A".into(),
        ));
    }
    if vf.dim() != model.n() {
        return Err(Error::Dimension {
            context: "one-step value function",
            expected: model.n(),
            actual: vf.dim(),
        });
    }
    let modes = affine_parts(model)?;
    let k = modes.len();
    let n = model.n();
    let m = vf.map().residual_matrix();
    let p = vf.p().clone();
    let pma = &p * &m * &modes[0].0;
    let mut f = DMatrix::zeros(k, n);
    let mut mb = Vec::with_capacity(k);
    for (i, (_, b)) in modes.iter().enumerate() {
        let mbi = &m * b;
        f.set_row(i, &((pma.transpose() * &mbi) * 2.0).transpose());
        mb.push(mbi);
    }
    let mut form = OneStepForm {
        f,
        g_vec: DVector::zeros(k),
        mb,
        p,
    };
    form.update_offset(vf.map().d())?;
    Ok(form)
}

/// A decision rule usable in [`closed_loop`].
pub trait Policy {
    fn decide(&mut self, z: &StateVector, u_prev: InputIndex) -> Result<InputIndex>;
    fn label(&self) -> String;
}

/// [`decide_general`] with reusable buffers.
#[derive(Clone, Debug)]
pub struct GeneralPolicy {
    model: SwitchedModel,
    cfg: PolicyConfig,
    scratch: Enumerator,
}

impl GeneralPolicy {
    pub fn new(model: SwitchedModel, cfg: PolicyConfig) -> Result<Self> {
        cfg.check(&model)?;
        Ok(GeneralPolicy {
            model,
            cfg,
            scratch: Enumerator::default(),
        })
    }

    /// `τ = 1`, tail = stage cost.
    pub fn greedy(
        model: SwitchedModel,
        stage: StageCost,
        switching: Option<SwitchingCost>,
    ) -> Result<Self> {
        let cfg = PolicyConfig::new(1, TailCost::Stage(stage.clone()), stage, switching)?;
        Self::new(model, cfg)
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }
}

impl Policy for GeneralPolicy {
    fn decide(&mut self, z: &StateVector, u_prev: InputIndex) -> Result<InputIndex> {
        check_state(&self.model, z, u_prev)?;
        let (u, _) = self
            .scratch
            .run(&self.model, &self.cfg, z.as_slice(), u_prev.zero_based())?;
        Ok(InputIndex::from_zero_based(u))
    }

    fn label(&self) -> String {
        match self.cfg.tail {
            TailCost::Value(_) => format!("ampc-general:{}", self.cfg.tau),
            TailCost::Stage(_) => format!("greedy:{}", self.cfg.tau),
        }
    }
}

impl Policy for PrecomputedPolicy {
    fn decide(&mut self, z: &StateVector, u_prev: InputIndex) -> Result<InputIndex> {
        if z.len() != self.n {
            return Err(Error::Dimension {
                context: "policy state",
                expected: self.n,
                actual: z.len(),
            });
        }
        if u_prev.get() > self.k {
            return Err(Error::InvalidInput {
                index: u_prev.get(),
                count: self.k,
            });
        }
        decide_precomputed(&self.forms, z, u_prev, self.switching.as_ref())
    }

    fn label(&self) -> String {
        format!("ampc-precomputed:{}", self.forms[0].inputs.len())
    }
}

#[derive(Clone, Debug)]
pub struct OneStepPolicy {
    form: OneStepForm,
    switching: Option<SwitchingCost>,
}

impl OneStepPolicy {
    pub fn new(
        model: &SwitchedModel,
        vf: &QuadraticValueFunction,
        switching: Option<SwitchingCost>,
    ) -> Result<Self> {
        let form = build_one_step(model, vf)?;
        if let Some(s) = &switching {
            if s.input_count() != form.input_count() {
                return Err(Error::Dimension {
                    context: "policy switching cost",
                    expected: form.input_count(),
                    actual: s.input_count(),
                });
            }
        }
        Ok(OneStepPolicy { form, switching })
    }

    pub fn form(&self) -> &OneStepForm {
        &self.form
    }
}

impl Policy for OneStepPolicy {
    fn decide(&mut self, z: &StateVector, u_prev: InputIndex) -> Result<InputIndex> {
        if z.len() != self.form.f.ncols() {
            return Err(Error::Dimension {
                context: "policy state",
                expected: self.form.f.ncols(),
                actual: z.len(),
            });
        }
        if u_prev.get() > self.form.input_count() {
            return Err(Error::InvalidInput {
                index: u_prev.get(),
                count: self.form.input_count(),
            });
        }
        self.form.decide(z, u_prev, self.switching.as_ref())
    }

    fn label(&self) -> String {
        "ampc-onestep:1".into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OcpMethod {
    Exhaustive,
    BranchAndBound { rel_gap: f64, node_budget: usize },
}

/// Receding-horizon FCS-MPC: solve the full-horizon problem every step.
#[derive(Clone, Debug)]
pub struct FcsMpcPolicy {
    model: SwitchedModel,
    stage: StageCost,
    terminal: StageCost,
    switching: Option<SwitchingCost>,
    horizon: usize,
    method: OcpMethod,
}

impl FcsMpcPolicy {
    pub fn new(
        model: SwitchedModel,
        stage: StageCost,
        terminal: StageCost,
        switching: Option<SwitchingCost>,
        horizon: usize,
        method: OcpMethod,
    ) -> Result<Self> {
        // Validates the dimensions once.
        OcpInstance::new(
            &model,
            &stage,
            &terminal,
            switching.as_ref(),
            horizon,
            DVector::zeros(model.n()),
        )?;
        Ok(FcsMpcPolicy {
            model,
            stage,
            terminal,
            switching,
            horizon,
            method,
        })
    }
}

impl Policy for FcsMpcPolicy {
    fn decide(&mut self, z: &StateVector, u_prev: InputIndex) -> Result<InputIndex> {
        let switching = match &self.switching {
            Some(s) => Some(s.with_initial(u_prev)?),
            None => None,
        };
        let inst = OcpInstance::new(
            &self.model,
            &self.stage,
            &self.terminal,
            switching.as_ref(),
            self.horizon,
            z.clone(),
        )?;
        // A budget-limited B&B still returns its incumbent.
        let sol = match self.method {
            OcpMethod::Exhaustive => solve_exhaustive(&inst)?,
            OcpMethod::BranchAndBound {
                rel_gap,
                node_budget,
            } => solve_bnb(&inst, rel_gap, node_budget)?,
        };
        Ok(sol.first_input())
    }

    fn label(&self) -> String {
        format!("fcs-mpc:{}", self.horizon)
    }
}

/// Closed-loop record. `stage_costs[t] = g(x_t)` and
/// `switching_costs[t] = ℓ(u_{t−1}, u_t)` for the decision epochs
/// `t = 0..steps`; `u_{−1}` is the initial input.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoop {
    pub states: Vec<StateVector>,
    pub inputs: Vec<InputIndex>,
    pub latencies: Vec<Duration>,
    pub stage_costs: Vec<f64>,
    pub switching_costs: Vec<f64>,
}

impl ClosedLoop {
    pub fn average_stage_cost(&self) -> f64 {
        mean(&self.stage_costs)
    }

    pub fn average_switching_cost(&self) -> f64 {
        mean(&self.switching_costs)
    }

    pub fn total_cost(&self) -> f64 {
        self.stage_costs.iter().sum::<f64>() + self.switching_costs.iter().sum::<f64>()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Alternate decide/step for `steps` epochs on `truth`.
pub fn closed_loop(
    truth: &SwitchedModel,
    policy: &mut dyn Policy,
    x0: &StateVector,
    steps: usize,
    u_init: InputIndex,
    stage: &StageCost,
    switching: Option<&SwitchingCost>,
) -> Result<ClosedLoop> {
    if steps == 0 {
        return Err(Error::InvalidArgument("closed loop needs steps ≥ 1".into()));
    }
    truth.check_input(u_init)?;
    let mut out = ClosedLoop {
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps),
        latencies: Vec::with_capacity(steps),
        stage_costs: Vec::with_capacity(steps),
        switching_costs: Vec::with_capacity(steps),
    };
    out.states.push(x0.clone());
    let mut prev = u_init;
    for t in 0..steps {
        let x = &out.states[t];
        let start = Instant::now();
        let u = policy
            .decide(x, prev)
            .map_err(|e| Error::Simulation {
                step: t,
                source: Box::new(e),
            })?;
        out.latencies.push(start.elapsed());
        let next = truth.step(x, u).map_err(|e| Error::Simulation {
            step: t,
            source: Box::new(e),
        })?;
        out.stage_costs.push(stage.eval(x));
        out.switching_costs
            .push(switching.map_or(0.0, |s| s.cost(prev, u)));
        out.inputs.push(u);
        out.states.push(next);
        prev = u;
    }
    Ok(out)
}
