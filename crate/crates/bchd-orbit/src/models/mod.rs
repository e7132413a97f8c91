//! Built-in analytic model library: two nonisothermal stirred-tank reactor
//! systems plus synthetic test systems with closed-form oracles. Parameter
//! sets live in bundled data files so they can be perturbed without
//! recompiling.

mod units;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::{
    ConstField, DomainBox, FieldHandle, FnField, Jet, LieError, LinearField, VectorField,
};
use crate::linalg::DMat;
use crate::scalar::{r, Real};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown built-in model '{0}'")]
    UnknownBuiltin(String),
    #[error("model file: {0}")]
    Parse(String),
    #[error("control vector has {got} channels, system has {expected}")]
    ControlDimension { expected: usize, got: usize },
    #[error("control value {value} outside channel {channel} bounds [{lo}, {hi}]")]
    ControlOutOfBounds {
        channel: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("inconsistent model definition: {0}")]
    Invalid(String),
}

/// Human-facing naming of states and controls.
#[derive(Clone, Debug, Default)]
pub struct ModelLabels {
    pub name: String,
    pub states: Vec<String>,
    pub state_units: Vec<String>,
    pub controls: Vec<String>,
    pub control_units: Vec<String>,
}

/// Control-affine system `xdot = f0(x) + sum_j u_j g_j(x)` with a box of
/// admissible controls and a physical state domain.
pub struct ControlAffineSystem<R: Real> {
    pub n: usize,
    pub m: usize,
    pub f0: FieldHandle<R>,
    pub g: Vec<FieldHandle<R>>,
    pub control_box: Vec<(R, R)>,
    pub domain_box: DomainBox<R>,
    pub labels: ModelLabels,
    /// true when every g_j is constant, so state Jacobians are u-independent
    pub constant_controls: bool,
}

impl<R: Real> ControlAffineSystem<R> {
    pub fn validate_control(&self, u: &[R]) -> Result<(), ModelError> {
        if u.len() != self.m {
            return Err(ModelError::ControlDimension {
                expected: self.m,
                got: u.len(),
            });
        }
        for (j, (&v, &(lo, hi))) in u.iter().zip(&self.control_box).enumerate() {
            if v < lo || v > hi {
                return Err(ModelError::ControlOutOfBounds {
                    channel: j,
                    value: v.to_f64().unwrap_or(f64::NAN),
                    lo: lo.to_f64().unwrap_or(f64::NAN),
                    hi: hi.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    /// The frozen field `f0 + sum_j u_j g_j` for one switching interval.
    pub fn frozen(&self, u: &[R]) -> FieldHandle<R> {
        assert_eq!(u.len(), self.m);
        Arc::new(FrozenField {
            f0: Arc::clone(&self.f0),
            g: self.g.clone(),
            u: u.to_vec(),
            domain: Some(self.domain_box.clone()),
        })
    }

    pub fn control_min(&self) -> Vec<R> {
        self.control_box.iter().map(|&(lo, _)| lo).collect()
    }

    pub fn control_max(&self) -> Vec<R> {
        self.control_box.iter().map(|&(_, hi)| hi).collect()
    }

    /// All 2^m vertices of the control box, in a fixed order.
    pub fn control_vertices(&self) -> Vec<Vec<R>> {
        let m = self.m;
        (0..(1usize << m))
            .map(|mask| {
                (0..m)
                    .map(|j| {
                        let (lo, hi) = self.control_box[j];
                        if mask >> j & 1 == 1 {
                            hi
                        } else {
                            lo
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

struct FrozenField<R: Real> {
    f0: FieldHandle<R>,
    g: Vec<FieldHandle<R>>,
    u: Vec<R>,
    domain: Option<DomainBox<R>>,
}

impl<R: Real> VectorField<R> for FrozenField<R> {
    fn dim(&self) -> usize {
        self.f0.dim()
    }

    fn eval_jets(&self, x: &[Jet<R>]) -> Result<Vec<Jet<R>>, LieError> {
        let mut out = self.f0.eval_jets(x)?;
        for (gj, &uj) in self.g.iter().zip(&self.u) {
            if uj == R::zero() {
                continue;
            }
            let gv = gj.eval_jets(x)?;
            for (o, v) in out.iter_mut().zip(gv) {
                *o = &*o + &v.scale(uj);
            }
        }
        Ok(out)
    }

    fn domain(&self) -> Option<&DomainBox<R>> {
        self.domain.as_ref()
    }
}

/// Dimensionless first-order reaction model, deviation coordinates.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Cstr2Params {
    pub n_bar: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub k1: f64,
    pub k2: f64,
    pub kappa: f64,
    pub u1_max: f64,
    pub u2_max: f64,
}

impl Default for Cstr2Params {
    fn default() -> Self {
        Cstr2Params {
            n_bar: 1.0,
            phi1: 1.0,
            phi2: 1.0,
            k1: 5.819e7,
            k2: -8.99e5,
            kappa: 17.77,
            u1_max: 1.798,
            u2_max: 0.06663,
        }
    }
}

/// Two-reaction nonisothermal tank model in physical units
/// (concentrations mol/L, temperature K, time min).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Cstr3Params {
    pub flow_rate: f64,
    pub volume: f64,
    pub gas_constant: f64,
    pub k1_0: f64,
    pub k2_0: f64,
    pub e1: f64,
    pub e2: f64,
    pub dh1: f64,
    pub dh2: f64,
    pub rho_cp: f64,
    pub u1_ref: f64,
    pub u2_ref: f64,
    pub u1_min: f64,
    pub u1_max: f64,
    pub u2_min: f64,
    pub u2_max: f64,
}

impl Default for Cstr3Params {
    fn default() -> Self {
        Cstr3Params {
            flow_rate: 100.0,
            volume: 100.0,
            gas_constant: 8.314,
            k1_0: 7.2e10,
            k2_0: 1e10,
            e1: 7.275e4,
            e2: 8e4,
            dh1: -5e4,
            dh2: -7e4,
            rho_cp: 4.2e3,
            u1_ref: 1.0,
            u2_ref: 350.0,
            u1_min: 0.5,
            u1_max: 1.5,
            u2_min: 300.0,
            u2_max: 400.0,
        }
    }
}

/// Build the 2-state reactor. The drift is evaluated in the regrouped form
/// `k_i e^{-kappa} (1 - (x1+1)^n e^{kappa x2/(x2+1)})`, which pins the
/// trivial equilibrium at the origin to full precision despite the large
/// rate constants.
pub fn build_cstr2<R: Real>(p: &Cstr2Params) -> ControlAffineSystem<R> {
    assert!(p.kappa > 0.0, "activation parameter must be positive");
    assert!(
        [p.n_bar, p.phi1, p.phi2, p.k1, p.k2, p.kappa, p.u1_max, p.u2_max]
            .iter()
            .all(|v| v.is_finite()),
        "parameters must be finite"
    );
    let n_bar = r::<R>(p.n_bar);
    let phi1 = r::<R>(p.phi1);
    let phi2 = r::<R>(p.phi2);
    let kappa = r::<R>(p.kappa);
    let k1_scaled = r::<R>(p.k1) * (-kappa).exp();
    let k2_scaled = r::<R>(p.k2) * (-kappa).exp();
    let domain = DomainBox::new(
        vec![-R::one(), -R::one()],
        vec![R::infinity(), R::infinity()],
    );
    let drift_domain = domain.clone();
    let f0 = FnField::with_domain(2, drift_domain, move |x: &[Jet<R>]| {
        let x1p = &x[0] + R::one();
        let x2p = &x[1] + R::one();
        let boost = ((&x[1] / &x2p).scale(kappa)).exp();
        let kinetic = Jet::constant(R::one()) - x1p.powf(n_bar) * boost;
        vec![
            x[0].scale(-phi1) + kinetic.scale(k1_scaled),
            x[1].scale(-phi2) + kinetic.scale(k2_scaled),
        ]
    });
    ControlAffineSystem {
        n: 2,
        m: 2,
        f0: Arc::new(f0),
        g: vec![
            Arc::new(ConstField::new(vec![R::one(), R::zero()])),
            Arc::new(ConstField::new(vec![R::zero(), R::one()])),
        ],
        control_box: vec![(r(-p.u1_max), r(p.u1_max)), (r(-p.u2_max), r(p.u2_max))],
        domain_box: domain,
        labels: ModelLabels {
            name: "cstr2".into(),
            states: vec!["x1".into(), "x2".into()],
            state_units: vec!["-".into(), "-".into()],
            controls: vec!["u1".into(), "u2".into()],
            control_units: vec!["-".into(), "-".into()],
        },
        constant_controls: true,
    }
}

/// Build the 3-state reactor (two sequential reactions, adiabatic energy
/// balance). Unit consistency of the drift is audited once here.
pub fn build_cstr3<R: Real>(p: &Cstr3Params) -> ControlAffineSystem<R> {
    assert!(
        p.flow_rate > 0.0 && p.volume > 0.0,
        "flow rate and volume must be positive"
    );
    assert!(
        p.gas_constant > 0.0
            && p.k1_0 > 0.0
            && p.k2_0 > 0.0
            && p.e1 > 0.0
            && p.e2 > 0.0
            && p.rho_cp > 0.0,
        "rate and energy parameters must be positive"
    );
    assert!(
        p.dh1 < 0.0 && p.dh2 < 0.0,
        "reaction enthalpies are exothermic (negative)"
    );
    units::audit_cstr3().expect("unit audit of the 3-state reactor drift");
    let fv = r::<R>(p.flow_rate / p.volume);
    let k1_0 = r::<R>(p.k1_0);
    let k2_0 = r::<R>(p.k2_0);
    let a1 = r::<R>(p.e1 / p.gas_constant);
    let a2 = r::<R>(p.e2 / p.gas_constant);
    let h1 = r::<R>(p.dh1 / p.rho_cp);
    let h2 = r::<R>(p.dh2 / p.rho_cp);
    let domain = DomainBox::new(
        vec![r(-1e6), r(-1e6), R::one()],
        vec![R::infinity(), R::infinity(), R::infinity()],
    );
    let drift_domain = domain.clone();
    let f0 = FnField::with_domain(3, drift_domain, move |x: &[Jet<R>]| {
        let rate1 = (x[2].recip().scale(-a1)).exp().scale(k1_0);
        let rate2 = (x[2].recip().scale(-a2)).exp().scale(k2_0);
        let c1 = &x[0];
        let c2 = &x[1];
        let conv1 = &rate1 * c1;
        let conv2 = &rate2 * c2;
        vec![
            -(c1.scale(fv) + &conv1),
            -(c2.scale(fv) + &conv2 - &conv1),
            -(x[2].scale(fv) + conv1.scale(h1) + conv2.scale(h2)),
        ]
    });
    ControlAffineSystem {
        n: 3,
        m: 2,
        f0: Arc::new(f0),
        g: vec![
            Arc::new(ConstField::new(vec![fv, R::zero(), R::zero()])),
            Arc::new(ConstField::new(vec![R::zero(), R::zero(), fv])),
        ],
        control_box: vec![(r(p.u1_min), r(p.u1_max)), (r(p.u2_min), r(p.u2_max))],
        domain_box: domain,
        labels: ModelLabels {
            name: "cstr3".into(),
            states: vec!["c_a".into(), "c_b".into(), "temperature".into()],
            state_units: vec!["mol/L".into(), "mol/L".into(), "K".into()],
            controls: vec!["inlet_concentration".into(), "inlet_temperature".into()],
            control_units: vec!["mol/L".into(), "K".into()],
        },
        constant_controls: true,
    }
}

/// Linear test system `xdot = A x + B u`; every downstream quantity has a
/// closed-form oracle. Control box defaults to [-1, 1] per channel.
pub fn synthetic_linear<R: Real>(a: DMat<R>, b: DMat<R>) -> ControlAffineSystem<R> {
    assert!(a.is_square());
    assert_eq!(a.rows(), b.rows(), "B must have one row per state");
    let n = a.rows();
    let m = b.cols();
    let g = (0..m)
        .map(|j| {
            let col: Vec<R> = (0..n).map(|i| b[(i, j)]).collect();
            Arc::new(ConstField::new(col)) as FieldHandle<R>
        })
        .collect();
    ControlAffineSystem {
        n,
        m,
        f0: Arc::new(LinearField::new(a)),
        g,
        control_box: vec![(-R::one(), R::one()); m],
        domain_box: DomainBox::unbounded(n),
        labels: ModelLabels {
            name: "linear".into(),
            ..Default::default()
        },
        constant_controls: true,
    }
}

// ---------------------------------------------------------------------------
// model definition files

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    system: SystemSection,
    params: toml::Value,
    #[serde(default)]
    controls: Option<ControlsSection>,
    #[serde(default)]
    domain: Option<DomainSection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    kind: String,
    #[serde(default)]
    name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlsSection {
    u_min: Vec<f64>,
    u_max: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSection {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

pub const CSTR2_TOML: &str = include_str!("../../assets/cstr2.toml");
pub const CSTR3_TOML: &str = include_str!("../../assets/cstr3.toml");

pub fn builtin_model_names() -> &'static [&'static str] {
    &["cstr2", "cstr3"]
}

pub fn builtin_model<R: Real>(name: &str) -> Result<ControlAffineSystem<R>, ModelError> {
    match name {
        "cstr2" => parse_model(CSTR2_TOML),
        "cstr3" => parse_model(CSTR3_TOML),
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

/// Parse a model definition file (TOML text with `[system]`, `[params]`,
/// optional `[controls]` and `[domain]` sections).
pub fn parse_model<R: Real>(text: &str) -> Result<ControlAffineSystem<R>, ModelError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    if file.schema_version != 1 {
        return Err(ModelError::Parse(format!(
            "unsupported model schema_version {}",
            file.schema_version
        )));
    }
    let mut system = match file.system.kind.as_str() {
        "cstr2" => {
            let p: Cstr2Params = file
                .params
                .try_into()
                .map_err(|e| ModelError::Parse(format!("[params]: {e}")))?;
            build_cstr2::<R>(&p)
        }
        "cstr3" => {
            let p: Cstr3Params = file
                .params
                .try_into()
                .map_err(|e| ModelError::Parse(format!("[params]: {e}")))?;
            build_cstr3::<R>(&p)
        }
        "linear" => {
            let p: LinearParams = file
                .params
                .try_into()
                .map_err(|e| ModelError::Parse(format!("[params]: {e}")))?;
            let a = DMat::from_rows(
                &p.a.iter()
                    .map(|row| row.iter().map(|&v| r::<R>(v)).collect())
                    .collect::<Vec<_>>(),
            );
            let b = DMat::from_rows(
                &p.b.iter()
                    .map(|row| row.iter().map(|&v| r::<R>(v)).collect())
                    .collect::<Vec<_>>(),
            );
            synthetic_linear(a, b)
        }
        other => return Err(ModelError::Parse(format!("unknown system kind '{other}'"))),
    };
    if let Some(name) = file.system.name {
        system.labels.name = name;
    }
    if let Some(controls) = file.controls {
        if controls.u_min.len() != system.m || controls.u_max.len() != system.m {
            return Err(ModelError::Invalid(format!(
                "[controls] must have {} channels",
                system.m
            )));
        }
        system.control_box = controls
            .u_min
            .iter()
            .zip(&controls.u_max)
            .map(|(&lo, &hi)| (r::<R>(lo), r::<R>(hi)))
            .collect();
    }
    for (j, &(lo, hi)) in system.control_box.iter().enumerate() {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(ModelError::Invalid(format!(
                "control channel {j} bounds not finite/ordered"
            )));
        }
    }
    if let Some(domain) = file.domain {
        if domain.lower.len() != system.n || domain.upper.len() != system.n {
            return Err(ModelError::Invalid(format!(
                "[domain] must have {} entries",
                system.n
            )));
        }
        system.domain_box = DomainBox::new(
            domain.lower.iter().map(|&v| r::<R>(v)).collect(),
            domain.upper.iter().map(|&v| r::<R>(v)).collect(),
        );
    }
    Ok(system)
}
