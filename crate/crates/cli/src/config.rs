//! Run configuration: TOML text with one section per pipeline stage.
//!
//! ```toml
//! [model]
//! kind = "boost"
//! topology = "as_printed"
//!
//! [sampling]
//! count = 100
//! remaining_horizon = 29
//!
//! [fit]
//! lambda = 100.0
//! psd = true
//! ```
//!
//! Unknown keys are rejected. Omitted values take the case-study defaults of
//! the selected model.

use ampc_core::converters::{
    build_boost, build_inverter, BoostParams, BoostTopology, ConverterModel, InverterParams,
    INVERTER_STATES,
};
use ampc_core::fitting::{EnergyPrior, FitOptions, SampleBox, SamplingOptions};
use ampc_core::ocp::DEFAULT_NODE_BUDGET;
use ampc_core::{
    AffineMode, DesiredMap, GuardedMode, InputIndex, Mode, StageCost, SwitchedModel,
    SwitchingCost,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSection {
    Boost(BoostSection),
    Inverter(InverterSection),
    Custom(CustomSection),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    #[default]
    AsPrinted,
    Standard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostSection {
    pub v_dc: f64,
    pub inductance: f64,
    pub r_inductor: f64,
    pub capacitance: f64,
    pub r_load: f64,
    pub v_des: f64,
    pub timestep_s: f64,
    pub topology: TopologyName,
}

impl Default for BoostSection {
    fn default() -> Self {
        let p = BoostParams::default();
        BoostSection {
            v_dc: p.v_dc,
            inductance: p.inductance,
            r_inductor: p.r_inductor,
            capacitance: p.capacitance,
            r_load: p.r_load,
            v_des: p.v_des,
            timestep_s: p.timestep_s,
            topology: TopologyName::AsPrinted,
        }
    }
}

impl BoostSection {
    pub fn params(&self) -> BoostParams {
        BoostParams {
            v_dc: self.v_dc,
            inductance: self.inductance,
            r_inductor: self.r_inductor,
            capacitance: self.capacitance,
            r_load: self.r_load,
            v_des: self.v_des,
            timestep_s: self.timestep_s,
            topology: match self.topology {
                TopologyName::AsPrinted => BoostTopology::AsPrinted,
                TopologyName::Standard => BoostTopology::Standard,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InverterSection {
    pub v_dc: f64,
    pub l1: f64,
    pub l2: f64,
    pub capacitance: f64,
    pub v_load: f64,
    pub i_des: f64,
    pub omega: f64,
    pub timestep_s: f64,
}

impl Default for InverterSection {
    fn default() -> Self {
        let p = InverterParams::default();
        InverterSection {
            v_dc: p.v_dc,
            l1: p.l1,
            l2: p.l2,
            capacitance: p.capacitance,
            v_load: p.v_load,
            i_des: p.i_des,
            omega: p.omega,
            timestep_s: p.timestep_s,
        }
    }
}

impl InverterSection {
    pub fn params(&self) -> InverterParams {
        InverterParams {
            v_dc: self.v_dc,
            l1: self.l1,
            l2: self.l2,
            capacitance: self.capacitance,
            v_load: self.v_load,
            i_des: self.i_des,
            omega: self.omega,
            timestep_s: self.timestep_s,
        }
    }
}

/// Discrete-time modes given directly; `a` is row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSection {
    pub modes: Vec<CustomMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_names: Option<Vec<String>>,
    #[serde(default = "one")]
    pub timestep_s: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomMode {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// When present, `(a, b)` applies if `guard_row·x ≥ guard_offset` and
    /// `(a_lt, b_lt)` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<CustomGuard>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomGuard {
    pub row: Vec<f64>,
    pub offset: f64,
    pub a_lt: Vec<Vec<f64>>,
    pub b_lt: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKindName {
    /// The model's own tracking cost (custom models must override).
    #[default]
    Model,
    WeightedL1,
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalName {
    /// `h = g`.
    #[default]
    Stage,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub kind: CostKindName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Row-major quadratic weight.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    /// Constant part of the desired state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    /// State-dependent part of the desired state, row-major.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_des: Option<Vec<Vec<f64>>>,
    pub terminal: TerminalName,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    pub seed: u64,
    pub remaining_horizon: usize,
    pub rel_gap: f64,
    pub node_budget: usize,
    /// Largest tolerated fraction of uncertified samples before the
    /// artifact is refused.
    pub max_failed_fraction: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let o = SamplingOptions::default();
        SamplingSection {
            lower: None,
            upper: None,
            count: None,
            seed: 0,
            remaining_horizon: o.remaining_horizon,
            rel_gap: o.rel_gap,
            node_budget: DEFAULT_NODE_BUDGET,
            max_failed_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psd: Option<bool>,
    pub alpha_nonneg: bool,
    /// Diagonal of the energy prior; defaults to the converter's stored
    /// energy, or zero for custom models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_diag: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathName {
    /// Fastest path the model supports.
    #[default]
    Auto,
    General,
    Precomputed,
    OneStep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcpMethodName {
    Exhaustive,
    #[default]
    BranchAndBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub tau: usize,
    pub path: PathName,
    /// Constant `ℓ(i, j)` for `i ≠ j`; exclusive with `switching_table`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switching_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switching_table: Option<Vec<Vec<f64>>>,
    pub u_init: usize,
    pub fcs_method: OcpMethodName,
    pub fcs_rel_gap: f64,
    pub fcs_node_budget: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            tau: 1,
            path: PathName::Auto,
            switching_cost: None,
            switching_table: None,
            u_init: 1,
            fcs_method: OcpMethodName::BranchAndBound,
            fcs_rel_gap: 0.01,
            fcs_node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartName {
    #[default]
    X0,
    /// `x_des(x0)`: the steady state the cost tracks.
    Desired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub start: StartName,
    pub steps: usize,
    /// Overrides the model's discretization timestep when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestep_s: Option<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            x0: None,
            start: StartName::X0,
            steps: 800,
            timestep_s: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Everything the commands need, built and cross-checked.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub converter: ConverterModel,
    pub terminal: StageCost,
    pub sample_box: SampleBox,
    pub sampling: SamplingOptions,
    pub max_failed_fraction: f64,
    pub fit: FitOptions,
    pub tau: usize,
    pub path: PathName,
    pub switching: Option<SwitchingCost>,
    pub u_init: InputIndex,
    pub fcs: ampc_core::OcpMethod,
    pub x0: DVector<f64>,
    pub steps: usize,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(cfg_err(format!("{what} must be {n}×{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>, CliError> {
    if v.len() != n {
        return Err(cfg_err(format!("{what} must have {n} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn custom_model(c: &CustomSection, timestep: f64) -> Result<(SwitchedModel, usize), CliError> {
    let n = c
        .modes
        .first()
        .map(|m| m.b.len())
        .ok_or_else(|| cfg_err("custom model needs at least one mode"))?;
    let affine = |a: &[Vec<f64>], b: &[f64]| -> Result<AffineMode, CliError> {
        Ok(AffineMode::new(matrix(a, n, "mode matrix")?, vector(b, n, "mode offset")?)?)
    };
    let modes = c
        .modes
        .iter()
        .map(|m| {
            let ge = affine(&m.a, &m.b)?;
            Ok(match &m.guard {
                None => Mode::Affine(ge),
                Some(g) => Mode::Guarded(GuardedMode::new(
                    vector(&g.row, n, "guard row")?,
                    g.offset,
                    ge,
                    affine(&g.a_lt, &g.b_lt)?,
                )?),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let _ = timestep;
    Ok((SwitchedModel::new(modes)?, n))
}

fn finite_positive(v: f64, what: &str) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(cfg_err(format!("{what} must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let sim_dt = self.simulation.timestep_s;
        if let Some(dt) = sim_dt {
            finite_positive(dt, "simulation.timestep_s")?;
        }
        let (mut converter, default_box, default_count, default_lambda, default_psd) =
            match &self.model {
                ModelSection::Boost(b) => {
                    let mut p = b.params();
                    if let Some(dt) = sim_dt {
                        p.timestep_s = dt;
                    }
                    (
                        build_boost(&p)?,
                        Some((vec![0.0, 0.0], vec![10.0, 50.0])),
                        100,
                        100.0,
                        true,
                    )
                }
                ModelSection::Inverter(s) => {
                    let mut p = s.params();
                    if let Some(dt) = sim_dt {
                        p.timestep_s = dt;
                    }
                    let inv = build_inverter(&p)?;
                    let mut lo = vec![-20.0; 3];
                    lo.extend([-300.0; 3]);
                    lo.extend([-20.0; 3]);
                    lo.extend([-1.0; 2]);
                    let hi: Vec<f64> = lo.iter().map(|v| -v).collect();
                    debug_assert_eq!(lo.len(), INVERTER_STATES);
                    (inv.converter, Some((lo, hi)), 1000, 1.0, false)
                }
                ModelSection::Custom(c) => {
                    let dt = sim_dt.unwrap_or(c.timestep_s);
                    finite_positive(dt, "model.timestep_s")?;
                    let (model, n) = custom_model(c, dt)?;
                    let names = match &c.state_names {
                        Some(names) if names.len() == n => names.clone(),
                        Some(_) => return Err(cfg_err("state_names must have one entry per state")),
                        None => (1..=n).map(|i| format!("x{i}")).collect(),
                    };
                    let zero = StageCost::zero(n);
                    (
                        ConverterModel {
                            model,
                            stage: zero.clone(),
                            desired: zero.target().clone(),
                            energy: EnergyPrior::diagonal(&vec![0.0; n])?,
                            state_names: names,
                            timestep_s: dt,
                        },
                        None,
                        100,
                        1.0,
                        false,
                    )
                }
            };
        let n = converter.model.n();

        // Cost section.
        let c = &self.cost;
        if c.kind != CostKindName::Model || c.target.is_some() || c.c_des.is_some() {
            let d = match &c.target {
                Some(t) => vector(t, n, "cost.target")?,
                None => DVector::zeros(n),
            };
            let map = match &c.c_des {
                Some(rows) => DesiredMap::affine(matrix(rows, n, "cost.c_des")?, d)?,
                None => DesiredMap::constant(d),
            };
            let stage = match c.kind {
                CostKindName::WeightedL1 => {
                    let w = c
                        .weights
                        .as_ref()
                        .ok_or_else(|| cfg_err("weighted_l1 cost needs `weights`"))?;
                    StageCost::weighted_l1(vector(w, n, "cost.weights")?, map.clone())?
                }
                CostKindName::Quadratic => {
                    let q = c.q.as_ref().ok_or_else(|| cfg_err("quadratic cost needs `q`"))?;
                    StageCost::quadratic(matrix(q, n, "cost.q")?, map.clone())?
                }
                CostKindName::Model => {
                    return Err(cfg_err("cost.target/c_des need an explicit cost.kind"))
                }
            };
            converter.stage = stage;
            converter.desired = map;
        } else if matches!(self.model, ModelSection::Custom(_)) {
            return Err(cfg_err("custom models need an explicit cost.kind"));
        }
        let terminal = match c.terminal {
            TerminalName::Stage => converter.stage.clone(),
            TerminalName::Zero => StageCost::zero(n),
        };

        // Sampling.
        let s = &self.sampling;
        let (lo, hi) = match (&s.lower, &s.upper, default_box) {
            (Some(l), Some(u), _) => (l.clone(), u.clone()),
            (None, None, Some(b)) => b,
            _ => return Err(cfg_err("sampling.lower and sampling.upper must be given together")),
        };
        let count = s.count.unwrap_or(default_count);
        if count == 0 {
            return Err(cfg_err("sampling.count must be positive"));
        }
        let sample_box = SampleBox::new(
            vector(&lo, n, "sampling.lower")?,
            vector(&hi, n, "sampling.upper")?,
            count,
            s.seed,
        )?;
        if s.remaining_horizon == 0 {
            return Err(cfg_err("sampling.remaining_horizon must be ≥ 1"));
        }
        if !(0.0..=1.0).contains(&s.max_failed_fraction) {
            return Err(cfg_err("sampling.max_failed_fraction must be in [0, 1]"));
        }
        let sampling = SamplingOptions {
            remaining_horizon: s.remaining_horizon,
            rel_gap: s.rel_gap,
            node_budget: s.node_budget,
        };

        // Fit.
        if let Some(diag) = &self.fit.energy_diag {
            vector(diag, n, "fit.energy_diag")?;
            converter.energy = EnergyPrior::diagonal(diag)?;
        }
        let fit = FitOptions {
            lambda: self.fit.lambda.unwrap_or(default_lambda),
            psd: self.fit.psd.unwrap_or(default_psd),
            alpha_nonneg: self.fit.alpha_nonneg,
            ..FitOptions::default()
        };
        if !(fit.lambda.is_finite() && fit.lambda >= 0.0) {
            return Err(cfg_err("fit.lambda must be nonnegative"));
        }

        // Policy.
        let p = &self.policy;
        if p.tau == 0 {
            return Err(cfg_err("policy.tau must be ≥ 1"));
        }
        let k = converter.model.input_count();
        let u_init = InputIndex::new(p.u_init)?;
        converter.model.check_input(u_init)?;
        let switching = match (p.switching_cost, &p.switching_table) {
            (Some(_), Some(_)) => {
                return Err(cfg_err("switching_cost and switching_table are exclusive"))
            }
            (Some(c), None) => Some(SwitchingCost::constant(k, c, u_init)?),
            (None, Some(rows)) => Some(SwitchingCost::from_table(
                matrix(rows, k, "policy.switching_table")?,
                u_init,
            )?),
            (None, None) => None,
        };
        let fcs = match p.fcs_method {
            OcpMethodName::Exhaustive => ampc_core::OcpMethod::Exhaustive,
            OcpMethodName::BranchAndBound => ampc_core::OcpMethod::BranchAndBound {
                rel_gap: p.fcs_rel_gap,
                node_budget: p.fcs_node_budget,
            },
        };

        // Simulation.
        let sim = &self.simulation;
        if sim.steps == 0 {
            return Err(cfg_err("simulation.steps must be ≥ 1"));
        }
        let x = match &sim.x0 {
            Some(x) => vector(x, n, "simulation.x0")?,
            None => DVector::zeros(n),
        };
        let x0 = match sim.start {
            StartName::X0 => x,
            StartName::Desired => converter.desired.desired(&x),
        };

        Ok(Resolved {
            converter,
            terminal,
            sample_box,
            sampling,
            max_failed_fraction: s.max_failed_fraction,
            fit,
            tau: p.tau,
            path: p.path,
            switching,
            u_init,
            fcs,
            x0,
            steps: sim.steps,
        })
    }
}
