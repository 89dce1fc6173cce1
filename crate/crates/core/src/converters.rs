//! Boost converter and three-phase LCL inverter models.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::cost::{DesiredMap, StageCost};
use crate::dynamics::{
    discretize_affine, discretize_input_map, AffineMode, GuardedMode, Mode, SwitchedModel,
};
use crate::error::{Error, Result};
use crate::fitting::EnergyPrior;

/// A converter case study ready for synthesis and simulation.
#[derive(Clone, Debug)]
pub struct ConverterModel {
    pub model: SwitchedModel,
    pub stage: StageCost,
    pub desired: DesiredMap,
    pub energy: EnergyPrior,
    pub state_names: Vec<String>,
    pub timestep_s: f64,
}

fn check_positive(fields: &[(&str, f64)]) -> Result<()> {
    for (name, v) in fields {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    Ok(())
}

/// Which continuous matrix drives the guarded ("off") input.
///
/// `AsPrinted` is the reference parameterization: input 1 uses the matrix with
/// the inductor/capacitor coupling and input 2 (guarded by the CCM/DCM
/// threshold) uses the decoupled one. `Standard` swaps them so the guard
/// sits on the diode-conducting topology of a textbook boost converter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BoostTopology {
    #[default]
    AsPrinted,
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoostParams {
    pub v_dc: f64,
    pub inductance: f64,
    pub r_inductor: f64,
    pub capacitance: f64,
    pub r_load: f64,
    pub v_des: f64,
    pub timestep_s: f64,
    pub topology: BoostTopology,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            v_dc: 10.0,
            inductance: 450e-6,
            r_inductor: 0.3,
            capacitance: 220e-6,
            r_load: 73.0,
            v_des: 30.0,
            timestep_s: 50e-6,
            topology: BoostTopology::AsPrinted,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        check_positive(&[
            ("v_dc", self.v_dc),
            ("inductance", self.inductance),
            ("r_inductor", self.r_inductor),
            ("capacitance", self.capacitance),
            ("r_load", self.r_load),
            ("v_des", self.v_des),
            ("timestep_s", self.timestep_s),
        ])
    }

    /// `(v_des / R_load, v_des)`.
    pub fn desired_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&[self.v_des / self.r_load, self.v_des])
    }
}

/// Continuous-time boost matrices with state `(i_L, v_C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoostContinuous {
    /// Inductor and capacitor coupled through the diode path.
    pub coupled: DMatrix<f64>,
    /// Inductor charged from the source, capacitor discharging into the load.
    pub decoupled: DMatrix<f64>,
    /// Input column shared by both topologies.
    pub source: DVector<f64>,
    /// DCM: inductor current frozen, capacitor discharging.
    pub dcm: DMatrix<f64>,
}

pub fn boost_continuous(p: &BoostParams) -> BoostContinuous {
    let (l, c, rl, r) = (p.inductance, p.capacitance, p.r_inductor, p.r_load);
    BoostContinuous {
        coupled: DMatrix::from_row_slice(2, 2, &[-rl / l, -1.0 / l, 1.0 / c, -1.0 / (r * c)]),
        decoupled: DMatrix::from_row_slice(2, 2, &[-rl / l, 0.0, 0.0, -1.0 / (r * c)]),
        source: DVector::from_column_slice(&[p.v_dc / l, 0.0]),
        dcm: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0 / (r * c)]),
    }
}

/// Discrete boost modes: `on_ccm` drives input 1, `off_ccm`/`off_dcm` the
/// guarded input 2.
#[derive(Clone, Debug, PartialEq)]
pub struct BoostModes {
    pub on_ccm: AffineMode,
    pub off_ccm: AffineMode,
    pub off_dcm: AffineMode,
}

pub fn boost_modes(p: &BoostParams) -> Result<BoostModes> {
    p.validate()?;
    let cont = boost_continuous(p);
    let h = p.timestep_s;
    let (on_matrix, off_matrix) = match p.topology {
        BoostTopology::AsPrinted => (&cont.coupled, &cont.decoupled),
        BoostTopology::Standard => (&cont.decoupled, &cont.coupled),
    };
    let on_ccm = discretize_affine(on_matrix, &cont.source, h)?;
    let off_ccm = discretize_affine(off_matrix, &cont.source, h)?;
    let off_dcm = discretize_affine(&cont.dcm, &DVector::zeros(2), h)?;
    Ok(BoostModes {
        on_ccm,
        off_ccm,
        off_dcm,
    })
}

/// Two-input boost model with stage cost `|v_C − v_des|`.
///
/// The guard on input 2 predicts whether the CCM step would drive the
/// inductor current negative: `c_g = e₁ᵀ A_off,ccm`, `d_g = −e₁ᵀ b_off,ccm`.
pub fn build_boost(p: &BoostParams) -> Result<ConverterModel> {
    let modes = boost_modes(p)?;
    let guard_row = modes.off_ccm.a().row(0).transpose();
    let guard_offset = -modes.off_ccm.b()[0];
    let off = GuardedMode::new(
        guard_row,
        guard_offset,
        modes.off_ccm.clone(),
        modes.off_dcm.clone(),
    )?;
    let model = SwitchedModel::new(vec![Mode::Affine(modes.on_ccm), Mode::Guarded(off)])?;
    let desired = DesiredMap::constant(p.desired_state());
    let stage = StageCost::weighted_l1(DVector::from_column_slice(&[0.0, 1.0]), desired.clone())?;
    Ok(ConverterModel {
        model,
        stage,
        desired,
        energy: boost_energy_prior(p)?,
        state_names: vec!["i_l".into(), "v_c".into()],
        timestep_s: p.timestep_s,
    })
}

pub fn boost_energy_prior(p: &BoostParams) -> Result<EnergyPrior> {
    p.validate()?;
    EnergyPrior::diagonal(&[p.inductance / 2.0, p.capacitance / 2.0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverterParams {
    pub v_dc: f64,
    pub l1: f64,
    pub l2: f64,
    pub capacitance: f64,
    pub v_load: f64,
    pub i_des: f64,
    pub omega: f64,
    pub timestep_s: f64,
}

impl Default for InverterParams {
    fn default() -> Self {
        InverterParams {
            v_dc: 700.0,
            l1: 6.5e-6,
            l2: 1.5e-6,
            capacitance: 15e-6,
            v_load: 300.0,
            i_des: 10.0,
            omega: 2.0 * PI * 50.0,
            timestep_s: 25e-6,
        }
    }
}

impl InverterParams {
    pub fn validate(&self) -> Result<()> {
        check_positive(&[
            ("v_dc", self.v_dc),
            ("l1", self.l1),
            ("l2", self.l2),
            ("capacitance", self.capacitance),
            ("v_load", self.v_load),
            ("i_des", self.i_des),
            ("omega", self.omega),
            ("timestep_s", self.timestep_s),
        ])
    }
}

/// Physical state count: `(i₁, i₂, i₃, v₁, v₂, v₃, i₄, i₅, i₆)`.
pub const INVERTER_PHYSICAL_STATES: usize = 9;
/// Physical states plus `(sin θ, cos θ)`.
pub const INVERTER_STATES: usize = 11;
pub const INVERTER_LOAD_CURRENTS: [usize; 3] = [6, 7, 8];
pub const INVERTER_SIN: usize = 9;
pub const INVERTER_COS: usize = 10;

/// Bridge voltage patterns in input order; `(V_dc, V_dc, V_dc)` is not used.
pub const BRIDGE_PATTERNS: [[u8; 3]; 7] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, 0, 1],
    [0, 1, 1],
];

/// Phase offset of leg `k`: quantities of leg `k` follow `sin(θ − 2πk/3)`.
pub fn leg_phase(k: usize) -> f64 {
    2.0 * PI * k as f64 / 3.0
}

/// Continuous-time pieces of the inverter model, kept for verification.
#[derive(Clone, Debug, PartialEq)]
pub struct InverterContinuous {
    pub a: DMatrix<f64>,
    pub b_in: DMatrix<f64>,
    pub b_load: DMatrix<f64>,
    pub f_dae: DMatrix<f64>,
    /// `M = F (Fᵀ F)⁻¹ Fᵀ`.
    pub projector: DMatrix<f64>,
    pub a_proj: DMatrix<f64>,
    pub b_in_proj: DMatrix<f64>,
    pub b_load_proj: DMatrix<f64>,
    /// `v_load = load_map · (sin θ, cos θ)`.
    pub load_map: DMatrix<f64>,
    /// 11-state augmented drift, `d/dt (x, s, c) = a_aug (x, s, c) + b_aug v_in`.
    pub a_aug: DMatrix<f64>,
    pub b_aug: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct Inverter {
    pub converter: ConverterModel,
    pub continuous: InverterContinuous,
    /// Bridge voltage vector for each input.
    pub bridge_voltages: Vec<DVector<f64>>,
    /// Steady-state bridge voltages `v_in = phasor_bridge · (sin θ, cos θ)`.
    pub phasor_bridge: DMatrix<f64>,
}

fn inverter_continuous(p: &InverterParams) -> Result<InverterContinuous> {
    let n = INVERTER_PHYSICAL_STATES;
    let (il1, il2, ic) = (1.0 / p.l1, 1.0 / p.l2, 1.0 / p.capacitance);
    let mut a = DMatrix::zeros(n, n);
    let mut b_in = DMatrix::zeros(n, 3);
    let mut b_load = DMatrix::zeros(n, 3);
    let mut f_dae = DMatrix::zeros(n, 2);
    for k in 0..3 {
        a[(k, 3 + k)] = -il1;
        a[(3 + k, k)] = ic;
        a[(3 + k, 6 + k)] = -ic;
        // Printed as −1/L₂, which makes the C–L₂ loop exponentially
        // unstable; L₂ di/dt = v_C − v_load is the physical sign.
        a[(6 + k, 3 + k)] = il2;
        b_in[(k, k)] = il1;
        b_load[(6 + k, k)] = -il2;
        f_dae[(k, 0)] = -il1;
        f_dae[(k, 1)] = -il1;
        f_dae[(6 + k, 1)] = -il2;
    }

    let gram = f_dae.transpose() * &f_dae;
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Model("DAE incidence FᵀF is singular".into()))?;
    let projector = &f_dae * gram_inv * f_dae.transpose();
    let keep = DMatrix::<f64>::identity(n, n) - &projector;
    let a_proj = &keep * &a;
    let b_in_proj = &keep * &b_in;
    let b_load_proj = &keep * &b_load;

    let mut load_map = DMatrix::zeros(3, 2);
    for k in 0..3 {
        let phi = leg_phase(k);
        load_map[(k, 0)] = p.v_load * phi.cos();
        load_map[(k, 1)] = -p.v_load * phi.sin();
    }

    let m = INVERTER_STATES;
    let mut a_aug = DMatrix::zeros(m, m);
    a_aug.view_mut((0, 0), (n, n)).copy_from(&a_proj);
    a_aug
        .view_mut((0, n), (n, 2))
        .copy_from(&(&b_load_proj * &load_map));
    a_aug[(INVERTER_SIN, INVERTER_COS)] = -p.omega;
    a_aug[(INVERTER_COS, INVERTER_SIN)] = p.omega;
    let mut b_aug = DMatrix::zeros(m, 3);
    b_aug.view_mut((0, 0), (n, 3)).copy_from(&b_in_proj);

    Ok(InverterContinuous {
        a,
        b_in,
        b_load,
        f_dae,
        projector,
        a_proj,
        b_in_proj,
        b_load_proj,
        load_map,
        a_aug,
        b_aug,
    })
}

/// Single-frequency steady state of the projected network.
///
/// With `w = (sin θ, cos θ)` and `ẇ = W w`, a periodic solution
/// `x = X w`, `v_in = V_b w` satisfies `X W = A X + B_in V_b + B_load L`.
/// The load-current rows of `X` are fixed to the reference; the remaining
/// rows and `V_b` are solved (minimum norm, the common mode of `V_b` is
/// annihilated by the projection).
fn phasor_steady_state(
    cont: &InverterContinuous,
    p: &InverterParams,
    load_currents: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = INVERTER_PHYSICAL_STATES;
    let w = DMatrix::from_row_slice(2, 2, &[0.0, -p.omega, p.omega, 0.0]);
    let free_rows = 6;
    let unknowns = free_rows * 2 + 6;

    let residual = |u: &DVector<f64>| -> DVector<f64> {
        let mut x = DMatrix::zeros(n, 2);
        for r in 0..free_rows {
            for c in 0..2 {
                x[(r, c)] = u[r * 2 + c];
            }
        }
        x.view_mut((6, 0), (3, 2)).copy_from(load_currents);
        let mut vb = DMatrix::zeros(3, 2);
        for r in 0..3 {
            for c in 0..2 {
                vb[(r, c)] = u[free_rows * 2 + r * 2 + c];
            }
        }
        let res = &x * &w - &cont.a_proj * &x - &cont.b_in_proj * &vb
            - &cont.b_load_proj * &cont.load_map;
        DVector::from_iterator(n * 2, res.iter().copied())
    };

    // Extra rows pin the bridge common mode (invisible to the network) to zero.
    let rows = n * 2 + 2;
    let r0 = residual(&DVector::zeros(unknowns));
    let mut jac = DMatrix::zeros(rows, unknowns);
    for j in 0..unknowns {
        let mut e = DVector::zeros(unknowns);
        e[j] = 1.0;
        jac.view_mut((0, j), (n * 2, 1))
            .copy_from(&(residual(&e) - &r0));
    }
    for c in 0..2 {
        for r in 0..3 {
            jac[(n * 2 + c, free_rows * 2 + r * 2 + c)] = 1.0 / p.l1;
        }
    }
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, n * 2).copy_from(&(-&r0));

    let scale = DVector::from_iterator(unknowns, jac.column_iter().map(|c| 1.0 / c.norm()));
    let scaled = &jac * DMatrix::from_diagonal(&scale);
    let qr = scaled.clone().qr();
    let solve = |b: &DVector<f64>| -> Result<DVector<f64>> {
        let qtb = qr.q().transpose() * b;
        qr.r()
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::Model("phasor system is singular".into()))
    };
    let mut y = solve(&rhs)?;
    let correction = solve(&(&rhs - &scaled * &y))?;
    y += correction;
    let u = y.component_mul(&scale);
    let r = residual(&u);
    if r.amax() > 1e-9 * r0.amax().max(1.0) {
        return Err(Error::Model(format!(
            "no single-frequency steady state (residual {:e})",
            r.amax()
        )));
    }
    let mut x = DMatrix::zeros(n, 2);
    for row in 0..free_rows {
        for c in 0..2 {
            x[(row, c)] = u[row * 2 + c];
        }
    }
    x.view_mut((6, 0), (3, 2)).copy_from(load_currents);
    let mut vb = DMatrix::zeros(3, 2);
    for row in 0..3 {
        for c in 0..2 {
            vb[(row, c)] = u[free_rows * 2 + row * 2 + c];
        }
    }
    Ok((x, vb))
}

/// Seven-input, 11-state inverter with load-current tracking cost.
pub fn build_inverter(p: &InverterParams) -> Result<Inverter> {
    p.validate()?;
    let cont = inverter_continuous(p)?;
    let (mut a_d, b_d) = discretize_input_map(&cont.a_aug, &cont.b_aug, p.timestep_s)?;
    // The oscillator rows are decoupled; write their exact rotation so
    // sin² + cos² does not drift with the rounding of the full exponential.
    let (s, c) = (p.omega * p.timestep_s).sin_cos();
    a_d.rows_mut(INVERTER_SIN, 2).fill(0.0);
    a_d[(INVERTER_SIN, INVERTER_SIN)] = c;
    a_d[(INVERTER_SIN, INVERTER_COS)] = -s;
    a_d[(INVERTER_COS, INVERTER_SIN)] = s;
    a_d[(INVERTER_COS, INVERTER_COS)] = c;

    let bridge_voltages: Vec<DVector<f64>> = BRIDGE_PATTERNS
        .iter()
        .map(|pat| DVector::from_iterator(3, pat.iter().map(|&on| on as f64 * p.v_dc)))
        .collect();
    let modes = bridge_voltages
        .iter()
        .map(|v| AffineMode::new(a_d.clone(), &b_d * v).map(Mode::Affine))
        .collect::<Result<Vec<_>>>()?;
    let model = SwitchedModel::new(modes)?;

    let mut load_currents = DMatrix::zeros(3, 2);
    for k in 0..3 {
        let phi = leg_phase(k);
        load_currents[(k, 0)] = p.i_des * phi.cos();
        load_currents[(k, 1)] = -p.i_des * phi.sin();
    }
    let (x_phasor, vb) = phasor_steady_state(&cont, p, &load_currents)?;

    let m = INVERTER_STATES;
    let mut c_des = DMatrix::zeros(m, m);
    c_des
        .view_mut((0, INVERTER_SIN), (INVERTER_PHYSICAL_STATES, 2))
        .copy_from(&x_phasor);
    // The oscillator states are their own desired value.
    c_des[(INVERTER_SIN, INVERTER_SIN)] = 1.0;
    c_des[(INVERTER_COS, INVERTER_COS)] = 1.0;
    let desired = DesiredMap::affine(c_des, DVector::zeros(m))?;
    let mut weights = DVector::zeros(m);
    for &i in &INVERTER_LOAD_CURRENTS {
        weights[i] = 1.0;
    }
    let stage = StageCost::weighted_l1(weights, desired.clone())?;

    let names = [
        "i1", "i2", "i3", "v1", "v2", "v3", "i4", "i5", "i6", "sin", "cos",
    ];
    Ok(Inverter {
        converter: ConverterModel {
            model,
            stage,
            desired,
            energy: inverter_energy_prior(p)?,
            state_names: names.iter().map(|s| s.to_string()).collect(),
            timestep_s: p.timestep_s,
        },
        continuous: cont,
        bridge_voltages,
        phasor_bridge: vb,
    })
}

pub fn inverter_energy_prior(p: &InverterParams) -> Result<EnergyPrior> {
    p.validate()?;
    let mut d = vec![0.0; INVERTER_STATES];
    for k in 0..3 {
        d[k] = p.l1 / 2.0;
        d[3 + k] = p.capacitance / 2.0;
        d[6 + k] = p.l2 / 2.0;
    }
    EnergyPrior::diagonal(&d)
}

/// Steady-state initial condition on the phasor trajectory at angle `theta`.
pub fn inverter_steady_state(inv: &Inverter, theta: f64) -> DVector<f64> {
    let mut w = DVector::zeros(INVERTER_STATES);
    w[INVERTER_SIN] = theta.sin();
    w[INVERTER_COS] = theta.cos();
    inv.converter.desired.desired(&w)
}
