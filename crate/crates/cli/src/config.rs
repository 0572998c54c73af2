//! JSON run configuration.

use std::f64::consts::PI;

use conigrate::bie::BieOptions;
use conigrate::params::{derive_params, polarization_from_vector, IncidenceParams};
use conigrate::profile::{build_profile, ProfileSpec};
use conigrate::validation::Problem;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub type Complex = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physics: Physics,
    pub profile: ProfileConfig,
    pub numerics: Numerics,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub omega: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub lambda: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub polarization: Polarization,
}

/// Either a full polarization vector or the longitudinal amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polarization {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_vector: Option<[Complex; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p3: Option<Complex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q3: Option<Complex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Flat {
        #[serde(default)]
        height: f64,
    },
    Fourier {
        #[serde(default)]
        a0: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
    PiecewiseLinear {
        nodes: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Truncation {
    Auto(Auto),
    Fixed(usize),
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Auto(Auto::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub b: f64,
    #[serde(default = "default_h")]
    pub h_target: f64,
    #[serde(rename = "dtn_N", default)]
    pub dtn_n: Truncation,
    #[serde(default = "default_nodes")]
    pub bie_nodes: usize,
    #[serde(default = "default_wood")]
    pub wood_tolerance: f64,
}

fn default_h() -> f64 {
    0.05
}

fn default_nodes() -> usize {
    256
}

fn default_wood() -> f64 {
    conigrate::params::DEFAULT_WOOD_TOLERANCE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fem,
    Bie,
    Both,
}

/// Artifacts written next to the result file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Spectrum,
    Efficiencies,
    Energy,
    /// FEM nodal values as CSV.
    Field,
    /// Boundary densities as CSV.
    Densities,
    Mesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
}

fn default_method() -> Method {
    Method::Fem
}

fn default_outputs() -> Vec<Output> {
    vec![Output::Spectrum, Output::Efficiencies, Output::Energy]
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            method: default_method(),
            outputs: default_outputs(),
        }
    }
}

fn cx(z: Complex) -> Complex64 {
    Complex64::new(z[0], z[1])
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{field}`: {msg}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("cannot parse configuration: {e}")))
    }

    pub fn outputs(&self, o: Output) -> bool {
        self.run.outputs.contains(&o)
    }

    /// Physical parameters in radians with the polarization resolved to `(p3, q3)`.
    pub fn incidence(&self) -> Result<IncidenceParams, CliError> {
        let ph = &self.physics;
        let mut p = IncidenceParams {
            omega: ph.omega,
            epsilon: ph.epsilon,
            mu: ph.mu,
            lambda: ph.lambda,
            theta: ph.theta_deg * PI / 180.0,
            phi: ph.phi_deg * PI / 180.0,
            p3: Complex64::ZERO,
            q3: Complex64::ZERO,
        };
        let pol = &ph.polarization;
        match (pol.p_vector, pol.p3, pol.q3) {
            (Some(v), None, None) => {
                p.validate()?;
                let d = derive_params(&p)?;
                let (p3, q3) = polarization_from_vector([cx(v[0]), cx(v[1]), cx(v[2])], &d, p.omega, p.mu)?;
                p.p3 = p3;
                p.q3 = q3;
            }
            (None, None, None) => {
                return Err(config_err("polarization", "give either p_vector or p3/q3"));
            }
            (None, p3, q3) => {
                p.p3 = p3.map(cx).unwrap_or_default();
                p.q3 = q3.map(cx).unwrap_or_default();
            }
            (Some(_), _, _) => {
                return Err(config_err("polarization", "p_vector and p3/q3 are mutually exclusive"));
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn profile_spec(&self) -> ProfileSpec {
        match &self.profile {
            ProfileConfig::Flat { height } => ProfileSpec::Flat { height: *height },
            ProfileConfig::Fourier { a0, cos, sin } => ProfileSpec::Fourier {
                a0: *a0,
                cos: cos.clone(),
                sin: sin.clone(),
            },
            ProfileConfig::PiecewiseLinear { nodes } => ProfileSpec::PiecewiseLinear {
                nodes: nodes.iter().map(|n| (n[0], n[1])).collect(),
            },
        }
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let p = self.incidence()?;
        let profile = build_profile(&self.profile_spec())?;
        let n = &self.numerics;
        if !(n.h_target.is_finite() && n.h_target > 0.0) {
            return Err(config_err("h_target", format!("must be positive, got {}", n.h_target)));
        }
        if !(n.wood_tolerance.is_finite() && n.wood_tolerance >= 0.0) {
            return Err(config_err("wood_tolerance", format!("must be non-negative, got {}", n.wood_tolerance)));
        }
        if n.bie_nodes < 8 || n.bie_nodes % 2 == 1 {
            return Err(config_err("bie_nodes", format!("must be even and at least 8, got {}", n.bie_nodes)));
        }
        if let Truncation::Fixed(0) = n.dtn_n {
            return Err(config_err("dtn_N", "must be positive or \"auto\""));
        }
        let mut problem = Problem::new(p, profile, n.b);
        problem.truncation = match n.dtn_n {
            Truncation::Auto(_) => None,
            Truncation::Fixed(k) => Some(k),
        };
        problem.wood_tolerance = n.wood_tolerance;
        problem.bie_options = BieOptions {
            wood_tolerance: n.wood_tolerance,
            ..BieOptions::default()
        };
        problem.derived()?;
        Ok(problem)
    }
}
