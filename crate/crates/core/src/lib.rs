//! Approximate model predictive control (A-MPC) for switched-mode power
//! converters.
//!
//! The offline pipeline samples a long-horizon optimal cost over a state box
//! ([`ocp`]), fits a quadratic approximate value function ([`fitting`]), and
//! the online policy evaluates a short-horizon problem with that value
//! function as terminal cost ([`policy`]). [`converters`] builds the boost and
//! three-phase inverter models.

pub mod artifact;
pub mod converters;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod expm;
pub mod fitting;
pub mod ocp;
pub mod policy;

pub use artifact::{ArtifactMeta, VfArtifact};
pub use converters::{
    build_boost, build_inverter, BoostParams, BoostTopology, ConverterModel, Inverter,
    InverterParams,
};
pub use cost::{trajectory_cost, CostKind, DesiredMap, StageCost, SwitchingCost};
pub use dynamics::{
    discretize_affine, discretize_input_map, AffineMode, GuardedMode, InputIndex, Mode,
    StateVector, SwitchedModel,
};
pub use error::{Error, Result};
pub use expm::matrix_exponential;
pub use fitting::{
    fit_quadratic, EnergyPrior, FitOptions, FitReport, QuadraticValueFunction, SampleBox,
    SamplingOptions, ValueSample,
};
pub use ocp::{solve_bnb, solve_exhaustive, value_sample, OcpInstance, OcpSolution};
pub use policy::{
    build_one_step, closed_loop, decide_general, decide_precomputed, precompute_quadratic_forms,
    ClosedLoop, FcsMpcPolicy, GeneralPolicy, OcpMethod, OneStepForm, OneStepPolicy, Policy,
    PolicyConfig, PrecomputedPolicy, SequenceForm, TailCost,
};
