//! Finite-horizon finite-control-set optimal control.
//!
//! Two solvers share one cost-accumulation order, so they produce
//! bit-identical costs for the same input sequence:
//! `acc_{t+1} = acc_t + (g(x_t) + ℓ(u_{t−1}, u_t))`, total `acc_T + h(x_T)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::cost::{StageCost, SwitchingCost};
use nalgebra::{DMatrix, DVector};

use crate::dynamics::{AffineMode, InputIndex, Mode, StateVector, SwitchedModel};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_BUDGET: u128 = 10_000_000;
pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;
const GAP_DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct OcpInstance<'a> {
    pub model: &'a SwitchedModel,
    pub stage: &'a StageCost,
    pub terminal: &'a StageCost,
    pub switching: Option<&'a SwitchingCost>,
    pub horizon: usize,
    pub initial: StateVector,
}

impl<'a> OcpInstance<'a> {
    pub fn new(
        model: &'a SwitchedModel,
        stage: &'a StageCost,
        terminal: &'a StageCost,
        switching: Option<&'a SwitchingCost>,
        horizon: usize,
        initial: StateVector,
    ) -> Result<Self> {
        let inst = OcpInstance {
            model,
            stage,
            terminal,
            switching,
            horizon,
            initial,
        };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<()> {
        let n = self.model.n();
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        for (ctx, dim) in [
            ("OCP initial state", self.initial.len()),
            ("OCP stage cost", self.stage.dim()),
            ("OCP terminal cost", self.terminal.dim()),
        ] {
            if dim != n {
                return Err(Error::Dimension {
                    context: ctx,
                    expected: n,
                    actual: dim,
                });
            }
        }
        if let Some(s) = self.switching {
            if s.input_count() != self.model.input_count() {
                return Err(Error::Dimension {
                    context: "OCP switching cost",
                    expected: self.model.input_count(),
                    actual: s.input_count(),
                });
            }
        }
        if self.model.input_count() > u8::MAX as usize {
            return Err(Error::Unsupported("more than 255 inputs".into()));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("OCP initial state"));
        }
        Ok(())
    }

    fn switch_cost(&self, prev: Option<usize>, next: usize) -> f64 {
        match (self.switching, prev) {
            (Some(s), Some(p)) => s.cost0(p, next),
            _ => 0.0,
        }
    }

    fn initial_prev(&self) -> Option<usize> {
        self.switching.map(|s| s.initial().zero_based())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcpSolution {
    pub optimal_cost: f64,
    pub inputs: Vec<InputIndex>,
    /// Relative distance between `optimal_cost` and a proven lower bound.
    pub certified_gap: f64,
    pub nodes_explored: u64,
    pub solve_time: Duration,
    /// Set when the node budget ran out before the requested gap was proven.
    pub budget_exceeded: bool,
}

impl OcpSolution {
    pub fn first_input(&self) -> InputIndex {
        self.inputs[0]
    }
}

fn sequence_count(k: usize, t: usize) -> Option<u128> {
    (k as u128).checked_pow(t as u32)
}

fn to_inputs(seq: &[u8]) -> Vec<InputIndex> {
    seq.iter()
        .map(|&u| InputIndex::from_zero_based(u as usize))
        .collect()
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::non_finite(what.to_string()))
    }
}

/// All `K^T` sequences, depth-first in lexicographic order, budget
/// [`DEFAULT_ENUMERATION_BUDGET`].
pub fn solve_exhaustive(inst: &OcpInstance<'_>) -> Result<OcpSolution> {
    solve_exhaustive_with_budget(inst, DEFAULT_ENUMERATION_BUDGET)
}

pub fn solve_exhaustive_with_budget(inst: &OcpInstance<'_>, budget: u128) -> Result<OcpSolution> {
    inst.validate()?;
    let start = Instant::now();
    let model = inst.model;
    let (n, k, horizon) = (model.n(), model.input_count(), inst.horizon);
    match sequence_count(k, horizon) {
        Some(c) if c <= budget => {}
        other => {
            return Err(Error::EnumerationBudget {
                required: other.unwrap_or(u128::MAX),
                budget,
            })
        }
    }

    // states[d] = x_d, acc[d] = accumulated cost before stage d, stage[d] = g(x_d).
    let mut states = vec![0.0; (horizon + 1) * n];
    states[..n].copy_from_slice(inst.initial.as_slice());
    let mut acc = vec![0.0; horizon + 1];
    let mut stage = vec![0.0; horizon];
    stage[0] = inst.stage.eval_slice(&states[..n]);
    let mut seq = vec![0u8; horizon];
    let mut best_seq = vec![0u8; horizon];
    let mut best = f64::INFINITY;
    let mut nodes: u64 = 0;
    let mut depth = 0usize;
    let mut next_choice = vec![0usize; horizon];

    loop {
        if next_choice[depth] == k {
            if depth == 0 {
                break;
            }
            next_choice[depth] = 0;
            depth -= 1;
            continue;
        }
        let u = next_choice[depth];
        next_choice[depth] += 1;
        seq[depth] = u as u8;
        let prev = if depth == 0 {
            inst.initial_prev()
        } else {
            Some(seq[depth - 1] as usize)
        };
        let (head, tail) = states.split_at_mut((depth + 1) * n);
        let x = &head[depth * n..];
        let x_next = &mut tail[..n];
        model.step_into(x, u, x_next);
        acc[depth + 1] = acc[depth] + (stage[depth] + inst.switch_cost(prev, u));
        nodes += 1;
        if depth + 1 == horizon {
            let total = acc[horizon] + inst.terminal.eval_slice(x_next);
            check_finite(total, "exhaustive trajectory cost")?;
            if total < best {
                best = total;
                best_seq.copy_from_slice(&seq);
            }
        } else {
            stage[depth + 1] = inst.stage.eval_slice(x_next);
            depth += 1;
        }
    }

    Ok(OcpSolution {
        optimal_cost: best,
        inputs: to_inputs(&best_seq),
        certified_gap: 0.0,
        nodes_explored: nodes,
        solve_time: start.elapsed(),
        budget_exceeded: false,
    })
}

struct Node {
    bound: f64,
    acc: f64,
    stage: f64,
    seq: Box<[u8]>,
    state: Box<[f64]>,
}

impl Node {
    fn depth(&self) -> usize {
        self.seq.len()
    }

    fn priority_cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.depth().cmp(&self.depth()))
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.priority_cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Reversed so the max-heap pops the smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other.priority_cmp(self)
    }
}

/// Lower bound on every completion of a node: the cost paid so far, the
/// current stage term, and a reachability bound on the remaining terms
/// (switching costs are nonnegative and ignored).
#[inline]
fn node_bound(acc: f64, stage_here: f64, tail: f64) -> f64 {
    acc + stage_here + tail
}

/// Interval over-approximation of the states reachable in `j` steps, used to
/// bound the remaining stage costs from below.
///
/// Each step maps the box `c ± r` through every mode (both branches of a
/// guarded one) and takes the hull. Radii are inflated slightly to cover
/// rounding, and the final sum is shrunk by a relative margin, so the bound
/// stays admissible in floating point.
struct ReachBound {
    modes: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)>,
    center: Vec<f64>,
    radius: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    tmp_c: Vec<f64>,
    tmp_r: Vec<f64>,
}

const REACH_INFLATE: f64 = 8.0 * f64::EPSILON;
const REACH_SHRINK: f64 = 1e-9;

impl ReachBound {
    /// `None` when neither cost can be bounded above zero on a box.
    fn new(inst: &OcpInstance<'_>) -> Option<Self> {
        if !(inst.stage.has_box_bound() || inst.terminal.has_box_bound()) {
            return None;
        }
        let mut modes = Vec::new();
        for m in inst.model.modes() {
            let branches: Vec<&AffineMode> = match m {
                Mode::Affine(a) => vec![a],
                Mode::Guarded(g) => vec![g.mode_if_ge(), g.mode_if_lt()],
            };
            for a in branches {
                modes.push((a.a().clone(), a.a().abs(), a.b().clone()));
            }
        }
        let n = inst.model.n();
        Some(ReachBound {
            modes,
            center: vec![0.0; n],
            radius: vec![0.0; n],
            lo: vec![0.0; n],
            hi: vec![0.0; n],
            tmp_c: vec![0.0; n],
            tmp_r: vec![0.0; n],
        })
    }

    /// Lower bound on `Σ_{j=1}^{steps-1} g(x_j) + h(x_steps)` from `x_0 = x`.
    fn tail(&mut self, inst: &OcpInstance<'_>, x: &[f64], steps: usize) -> f64 {
        let n = x.len();
        self.center.copy_from_slice(x);
        self.radius.iter_mut().for_each(|r| *r = 0.0);
        let mut total = 0.0;
        for j in 1..=steps {
            self.lo.iter_mut().for_each(|v| *v = f64::INFINITY);
            self.hi.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            for (a, abs_a, b) in &self.modes {
                let (a, abs_a) = (a.as_slice(), abs_a.as_slice());
                self.tmp_c.copy_from_slice(b.as_slice());
                self.tmp_r.iter_mut().for_each(|v| *v = 0.0);
                for col in 0..n {
                    let (cj, rj) = (self.center[col], self.radius[col]);
                    for row in 0..n {
                        self.tmp_c[row] += a[col * n + row] * cj;
                        self.tmp_r[row] += abs_a[col * n + row] * rj;
                    }
                }
                for row in 0..n {
                    let c = self.tmp_c[row];
                    let r = self.tmp_r[row] * (1.0 + REACH_INFLATE)
                        + REACH_INFLATE * (c.abs() + b[row].abs());
                    self.lo[row] = self.lo[row].min(c - r);
                    self.hi[row] = self.hi[row].max(c + r);
                }
            }
            for i in 0..n {
                self.center[i] = 0.5 * (self.lo[i] + self.hi[i]);
                self.radius[i] = (0.5 * (self.hi[i] - self.lo[i])) * (1.0 + REACH_INFLATE);
            }
            let cost = if j == steps { inst.terminal } else { inst.stage };
            total += cost.box_lower_bound(&self.center, &self.radius);
        }
        if total.is_finite() {
            total * (1.0 - REACH_SHRINK)
        } else {
            // Overflowing boxes carry no information.
            0.0
        }
    }
}

struct Incumbent {
    cost: f64,
    seq: Vec<u8>,
}

impl Incumbent {
    fn offer(&mut self, cost: f64, seq: &[u8]) {
        if cost < self.cost || (cost == self.cost && seq < self.seq.as_slice()) {
            self.cost = cost;
            self.seq.clear();
            self.seq.extend_from_slice(seq);
        }
    }

    /// Whether a node can be discarded without losing the optimum or a
    /// lexicographically smaller tie.
    fn dominates(&self, node: &Node) -> bool {
        if node.bound > self.cost {
            return true;
        }
        node.bound == self.cost && node.seq[..] > self.seq[..node.depth()]
    }

    fn gap_to(&self, lower: f64) -> f64 {
        ((self.cost - lower) / self.cost.abs().max(GAP_DENOMINATOR_FLOOR)).max(0.0)
    }
}

/// Input minimizing `g(next) + ℓ(prev, u)` at each step, lowest index on ties.
fn greedy_rollout(inst: &OcpInstance<'_>) -> Result<(f64, Vec<u8>)> {
    let model = inst.model;
    let n = model.n();
    let mut x = inst.initial.as_slice().to_vec();
    let mut cand = vec![0.0; n];
    let mut best_next = vec![0.0; n];
    let mut prev = inst.initial_prev();
    let mut acc = 0.0;
    let mut seq = Vec::with_capacity(inst.horizon);
    for _ in 0..inst.horizon {
        let g_here = inst.stage.eval_slice(&x);
        let mut best = (f64::INFINITY, 0usize);
        for u in 0..model.input_count() {
            model.step_into(&x, u, &mut cand);
            let score = inst.stage.eval_slice(&cand) + inst.switch_cost(prev, u);
            if score < best.0 {
                best = (score, u);
                best_next.copy_from_slice(&cand);
            }
        }
        if !best.0.is_finite() {
            return Err(Error::non_finite("greedy rollout"));
        }
        let u = best.1;
        acc += g_here + inst.switch_cost(prev, u);
        prev = Some(u);
        seq.push(u as u8);
        std::mem::swap(&mut x, &mut best_next);
    }
    let total = acc + inst.terminal.eval_slice(&x);
    check_finite(total, "greedy rollout cost")?;
    Ok((total, seq))
}

/// Best-first branch-and-bound over the depth-`T` decision tree.
///
/// Stops once the incumbent is proven within `rel_gap` (relative) of the
/// optimum. When `node_budget` expansions are used up the incumbent is
/// returned with `budget_exceeded` set and its achieved gap.
pub fn solve_bnb(inst: &OcpInstance<'_>, rel_gap: f64, node_budget: usize) -> Result<OcpSolution> {
    inst.validate()?;
    if !(rel_gap >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "relative gap must be nonnegative, got {rel_gap}"
        )));
    }
    let start = Instant::now();
    let model = inst.model;
    let (n, k, horizon) = (model.n(), model.input_count(), inst.horizon);

    let (greedy_cost, greedy_seq) = greedy_rollout(inst)?;
    let mut inc = Incumbent {
        cost: greedy_cost,
        seq: greedy_seq,
    };

    let mut reach = ReachBound::new(inst);
    let mut tail_bound = |x: &[f64], depth: usize| match reach.as_mut() {
        Some(r) => r.tail(inst, x, horizon - depth),
        None => 0.0,
    };

    let mut heap = BinaryHeap::new();
    let root_stage = inst.stage.eval_slice(inst.initial.as_slice());
    heap.push(Node {
        bound: node_bound(0.0, root_stage, tail_bound(inst.initial.as_slice(), 0)),
        acc: 0.0,
        stage: root_stage,
        seq: Box::new([]),
        state: inst.initial.as_slice().into(),
    });

    let mut expansions: u64 = 0;
    let mut child_state = vec![0.0; n];
    let mut child_seq = Vec::with_capacity(horizon);
    let mut lower = inc.cost;
    let mut budget_exceeded = false;

    while let Some(node) = heap.pop() {
        if inc.dominates(&node) {
            continue;
        }
        if rel_gap > 0.0 && inc.gap_to(node.bound) <= rel_gap {
            lower = node.bound;
            break;
        }
        if expansions as usize >= node_budget {
            lower = node.bound;
            budget_exceeded = true;
            break;
        }
        expansions += 1;
        let depth = node.depth();
        let prev = match node.seq.last() {
            Some(&u) => Some(u as usize),
            None => inst.initial_prev(),
        };
        for u in 0..k {
            model.step_into(&node.state, u, &mut child_state);
            let acc = node.acc + (node.stage + inst.switch_cost(prev, u));
            child_seq.clear();
            child_seq.extend_from_slice(&node.seq);
            child_seq.push(u as u8);
            if depth + 1 == horizon {
                let total = acc + inst.terminal.eval_slice(&child_state);
                check_finite(total, "branch-and-bound trajectory cost")?;
                inc.offer(total, &child_seq);
            } else {
                let stage = inst.stage.eval_slice(&child_state);
                let child = Node {
                    bound: node_bound(acc, stage, tail_bound(&child_state, depth + 1)),
                    acc,
                    stage,
                    seq: child_seq.as_slice().into(),
                    state: child_state.as_slice().into(),
                };
                check_finite(child.bound, "branch-and-bound node bound")?;
                if !inc.dominates(&child) {
                    heap.push(child);
                }
            }
        }
    }

    let certified_gap = inc.gap_to(lower.min(inc.cost));
    Ok(OcpSolution {
        optimal_cost: inc.cost,
        inputs: to_inputs(&inc.seq),
        certified_gap,
        nodes_explored: expansions,
        solve_time: start.elapsed(),
        budget_exceeded,
    })
}

/// Optimal cost-to-go `V_τ(z)` over the remaining horizon, switching cost excluded.
pub fn value_sample(
    model: &SwitchedModel,
    stage: &StageCost,
    terminal: &StageCost,
    z: &StateVector,
    remaining_horizon: usize,
    rel_gap: f64,
    node_budget: usize,
) -> Result<OcpSolution> {
    let inst = OcpInstance::new(model, stage, terminal, None, remaining_horizon, z.clone())?;
    solve_bnb(&inst, rel_gap, node_budget)
}
