//! Serializable result documents.

use conigrate::dtn::{ellipticity_check, mode_matrix, EllipticityReport};
use conigrate::params::{anomalous_set, rayleigh_exponent, wood_distance, DerivedParams, IncidenceParams, RayleighSpectrum};
use conigrate::validation::{ConvergenceReport, CrossValidation, EnergyReport};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{Complex, RunConfig};

pub fn c2(z: Complex64) -> Complex {
    [z.re, z.im]
}

#[derive(Debug, Serialize)]
pub struct ParamsEcho {
    pub omega: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub lambda: f64,
    pub theta_rad: f64,
    pub phi_rad: f64,
    pub p3: Complex,
    pub q3: Complex,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub b: f64,
    pub gamma_max: f64,
    #[serde(rename = "dtn_N")]
    pub dtn_n: usize,
    pub wood_distance: f64,
    pub anomalous_set: Vec<i64>,
}

impl ParamsEcho {
    pub fn new(p: &IncidenceParams, d: &DerivedParams, b: f64, gamma_max: f64, n: usize) -> Self {
        ParamsEcho {
            omega: p.omega,
            epsilon: p.epsilon,
            mu: p.mu,
            lambda: p.lambda,
            theta_rad: p.theta,
            phi_rad: p.phi,
            p3: c2(p.p3),
            q3: c2(p.q3),
            k: d.k,
            alpha: d.alpha,
            beta: d.beta,
            gamma: d.gamma,
            kappa: d.kappa,
            b,
            gamma_max,
            dtn_n: n,
            wood_distance: wood_distance(d, n),
            anomalous_set: anomalous_set(d, p),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SpectrumRow {
    pub n: i64,
    pub alpha_n: f64,
    pub beta_n: Complex,
    pub u_n: Complex,
    pub v_n: Complex,
    pub kind: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Efficiency {
    pub n: i64,
    pub eta: f64,
}

#[derive(Debug, Serialize)]
pub struct EnergyOut {
    pub lhs: f64,
    pub gamma_term: f64,
    pub incident_term: f64,
    pub residual: f64,
}

impl From<&EnergyReport> for EnergyOut {
    fn from(e: &EnergyReport) -> Self {
        EnergyOut {
            lhs: e.lhs,
            gamma_term: e.gamma_term,
            incident_term: e.incident_term,
            residual: e.residual,
        }
    }
}

pub fn spectrum_rows(s: &RayleighSpectrum) -> Vec<SpectrumRow> {
    s.entries
        .iter()
        .map(|e| SpectrumRow {
            n: e.order.n,
            alpha_n: e.order.alpha_n,
            beta_n: c2(e.order.beta_n),
            u_n: c2(e.u),
            v_n: c2(e.v),
            kind: e.order.kind.as_str(),
        })
        .collect()
}

pub fn efficiencies(s: &RayleighSpectrum, p: &IncidenceParams, d: &DerivedParams) -> Vec<Efficiency> {
    s.efficiencies(p, d).into_iter().map(|(n, eta)| Efficiency { n, eta }).collect()
}

/// Results of one solver.
#[derive(Debug, Serialize)]
pub struct SolverOut {
    pub method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<SpectrumRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiencies: Option<Vec<Efficiency>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyOut>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    /// Scalar unknowns per field (FEM) or boundary nodes (BIE).
    pub unknowns: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Serialize)]
pub struct Discrepancy {
    pub max: f64,
    pub orders: Vec<OrderOut>,
}

#[derive(Debug, Serialize)]
pub struct OrderOut {
    pub n: i64,
    pub du: f64,
    pub dv: f64,
}

impl From<&CrossValidation> for Discrepancy {
    fn from(c: &CrossValidation) -> Self {
        Discrepancy {
            max: c.max_discrepancy,
            orders: c.orders.iter().map(|o| OrderOut { n: o.n, du: o.du, dv: o.dv }).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolveDoc<'a> {
    pub config: &'a RunConfig,
    pub params: ParamsEcho,
    pub method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<SpectrumRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiencies: Option<Vec<Efficiency>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyOut>,
    pub diagnostics: Diagnostics,
    /// Second solver when both were run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bie: Option<SolverOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrepancy: Option<Discrepancy>,
}

#[derive(Debug, Serialize)]
pub struct EnergyDoc<'a> {
    pub config: &'a RunConfig,
    pub params: ParamsEcho,
    pub energy: Vec<MethodEnergy>,
}

#[derive(Debug, Serialize)]
pub struct MethodEnergy {
    pub method: &'static str,
    #[serde(flatten)]
    pub energy: EnergyOut,
    /// `gamma_term <= 0` and `lhs <= incident_term (1 + 5e-2)`.
    pub inequality_holds: bool,
}

#[derive(Debug, Serialize)]
pub struct CrossDoc<'a> {
    pub config: &'a RunConfig,
    pub params: ParamsEcho,
    pub h_target: f64,
    pub bie_nodes: usize,
    pub discrepancy: Discrepancy,
    pub fem_energy: EnergyOut,
    pub bie_energy: EnergyOut,
}

#[derive(Debug, Serialize)]
pub struct LevelOut {
    pub h: f64,
    pub dofs: usize,
    pub err_h1: Option<f64>,
    pub err_l2: Option<f64>,
    pub step_h1: Option<f64>,
    pub coeff_err: Option<f64>,
    pub energy_residual: f64,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceDoc<'a> {
    pub config: &'a RunConfig,
    pub params: ParamsEcho,
    pub reference: &'static str,
    pub levels: Vec<LevelOut>,
    pub rate_h1: Option<f64>,
    pub rate_l2: Option<f64>,
    pub self_rate_h1: Option<f64>,
    pub rate_coeff: Option<f64>,
    pub monotone: bool,
}

impl<'a> ConvergenceDoc<'a> {
    pub fn new(config: &'a RunConfig, params: ParamsEcho, r: &ConvergenceReport) -> Self {
        ConvergenceDoc {
            config,
            params,
            reference: match r.reference {
                conigrate::validation::ReferenceKind::Exact => "exact",
                conigrate::validation::ReferenceKind::FinestLevel => "finest_level",
            },
            levels: r
                .levels
                .iter()
                .map(|l| LevelOut {
                    h: l.h,
                    dofs: l.dofs,
                    err_h1: l.err_h1,
                    err_l2: l.err_l2,
                    step_h1: l.step_h1,
                    coeff_err: l.coeff_err,
                    energy_residual: l.energy_residual,
                })
                .collect(),
            rate_h1: r.rate_h1,
            rate_l2: r.rate_l2,
            self_rate_h1: r.self_rate_h1,
            rate_coeff: r.rate_coeff,
            monotone: r.monotone,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ModeOut {
    pub n: i64,
    pub alpha_n: f64,
    pub beta_n: Complex,
    pub kind: &'static str,
    #[serde(rename = "M_n")]
    pub m_n: [[Complex; 2]; 2],
}

#[derive(Debug, Serialize)]
pub struct EllipticityOut {
    pub delta: f64,
    pub theta: Complex,
    pub eig_plus: [f64; 2],
    pub eig_minus: [f64; 2],
    pub lambda_1: f64,
    pub c_n: f64,
    pub anomalous: Vec<i64>,
    pub skipped: Vec<i64>,
    pub min_mode_eigenvalue: Option<f64>,
    pub passed: bool,
}

impl From<&EllipticityReport> for EllipticityOut {
    fn from(r: &EllipticityReport) -> Self {
        EllipticityOut {
            delta: r.delta,
            theta: c2(r.theta),
            eig_plus: [r.eig_plus.0, r.eig_plus.1],
            eig_minus: [r.eig_minus.0, r.eig_minus.1],
            lambda_1: r.lambda_1,
            c_n: r.c_n,
            anomalous: r.anomalous.clone(),
            skipped: r.skipped.clone(),
            min_mode_eigenvalue: r.mode_floors.iter().map(|m| m.1).reduce(f64::min),
            passed: r.passed,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DtnDoc<'a> {
    pub config: &'a RunConfig,
    pub params: ParamsEcho,
    pub modes: Vec<ModeOut>,
    pub ellipticity: EllipticityOut,
}

pub fn modes(p: &IncidenceParams, d: &DerivedParams, n: usize) -> Vec<ModeOut> {
    let nn = n as i64;
    (-nn..=nn)
        .map(|k| {
            let o = rayleigh_exponent(k, d);
            let m = mode_matrix(k, p, d).m;
            ModeOut {
                n: k,
                alpha_n: o.alpha_n,
                beta_n: c2(o.beta_n),
                kind: o.kind.as_str(),
                m_n: [[c2(m[0][0]), c2(m[0][1])], [c2(m[1][0]), c2(m[1][1])]],
            }
        })
        .collect()
}

pub fn ellipticity(p: &IncidenceParams, d: &DerivedParams, delta: f64, n: usize) -> EllipticityOut {
    EllipticityOut::from(&ellipticity_check(d, p, delta, n))
}
