//! Oracles: flat-interface closed form, energy balance, convergence studies and
//! cross-validation of the two solvers.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::bie::{assemble_bie_with, rayleigh_from_densities, solve_densities, BieOptions, BoundaryDensities};
use crate::dtn::default_truncation;
use crate::error::{invalid, Error, Result};
use crate::fem::{self, FemSolution};
use crate::mesh::{triangulate_with, MeshOptions};
use crate::params::{derive_params, DerivedParams, IncidenceParams, RayleighSpectrum, DEFAULT_WOOD_TOLERANCE};
use crate::profile::GratingProfile;

type C = Complex64;

/// Total-field trace on the grating surface.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaTrace {
    /// `(length, [u_a, u_b], [v_a, v_b])` per straight edge, linear in between.
    PiecewiseLinear(Vec<(f64, [C; 2], [C; 2])>),
    /// Quadrature weights (arc length included) and nodal values.
    Nodal { weights: Vec<f64>, u: Vec<C>, v: Vec<C> },
}

impl GammaTrace {
    /// `(int |u|^2 ds, int |v|^2 ds)`.
    pub fn square_integrals(&self) -> (f64, f64) {
        match self {
            GammaTrace::PiecewiseLinear(edges) => {
                let lin = |l: f64, a: C, b: C| l / 3.0 * (a.norm_sqr() + b.norm_sqr() + (a * b.conj()).re);
                edges.iter().fold((0.0, 0.0), |acc, (l, u, v)| {
                    (acc.0 + lin(*l, u[0], u[1]), acc.1 + lin(*l, v[0], v[1]))
                })
            }
            GammaTrace::Nodal { weights, u, v } => weights
                .iter()
                .zip(u.iter().zip(v))
                .fold((0.0, 0.0), |acc, (w, (a, b))| (acc.0 + w * a.norm_sqr(), acc.1 + w * b.norm_sqr())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub lhs: f64,
    pub gamma_term: f64,
    pub incident_term: f64,
    pub residual: f64,
}

pub fn incident_power(p: &IncidenceParams, d: &DerivedParams) -> f64 {
    2.0 * PI * p.omega * d.beta / d.kappa2 * (p.epsilon * p.p3.norm_sqr() + p.mu * p.q3.norm_sqr())
}

pub fn energy_check(
    spectrum: &RayleighSpectrum,
    trace: &GammaTrace,
    p: &IncidenceParams,
    d: &DerivedParams,
) -> EnergyReport {
    let lhs = spectrum.radiated_power(p, d);
    let (iu, iv) = trace.square_integrals();
    let gamma_term = iu / p.lambda + p.lambda * iv;
    let incident_term = incident_power(p, d);
    let gap = (lhs - gamma_term - incident_term).abs();
    let residual = if incident_term > 0.0 { gap / incident_term } else { gap };
    EnergyReport {
        lhs,
        gamma_term,
        incident_term,
        residual,
    }
}

/// Reflection coefficients `(u_0, v_0)` for the flat surface `x2 = c`.
pub fn flat_reflection(p: &IncidenceParams, d: &DerivedParams, c: f64) -> Result<(C, C)> {
    let i = C::I;
    let (sp, cp) = p.phi.sin_cos();
    let big_a = p.omega * p.mu * cp * cp;
    let big_b = p.lambda * p.omega * p.epsilon * cp * cp;
    let s_mu = sp * (p.mu / p.epsilon).sqrt();
    let s_eps = sp * (p.epsilon / p.mu).sqrt();
    let (lam, al, be) = (p.lambda, d.alpha, d.beta);
    let up = C::from_polar(1.0, be * c);
    let dn = C::from_polar(1.0, -be * c);
    let m = Matrix2::new(
        up * i * (big_a - lam * be),
        up * i * lam * s_mu * al,
        -up * i * s_eps * al,
        up * i * (big_b - be),
    );
    let r = Vector2::new(
        -dn * (p.p3 * i * (lam * be + big_a) + i * lam * s_mu * al * p.q3),
        -dn * (p.q3 * i * (be + big_b) - i * s_eps * al * p.p3),
    );
    let x = m
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Solver("singular flat-interface system".into()))?;
    Ok((x[0], x[1]))
}

/// Closed-form spectrum of a flat grating at height `c`.
pub fn flat_oracle(p: &IncidenceParams, d: &DerivedParams, c: f64, truncation: usize) -> Result<RayleighSpectrum> {
    let (u0, v0) = flat_reflection(p, d, c)?;
    Ok(RayleighSpectrum::from_fn(d, truncation, |o| {
        if o.n == 0 {
            (u0, v0)
        } else {
            (C::ZERO, C::ZERO)
        }
    }))
}

/// Exact total field of the flat problem: value and gradient.
pub fn flat_field(p: &IncidenceParams, d: &DerivedParams, c: f64) -> Result<impl Fn([f64; 2]) -> crate::fem::FieldSample> {
    let (u0, v0) = flat_reflection(p, d, c)?;
    let (p3, q3, al, be) = (p.p3, p.q3, d.alpha, d.beta);
    Ok(move |x: [f64; 2]| {
        let down = C::from_polar(1.0, al * x[0] - be * x[1]);
        let up = C::from_polar(1.0, al * x[0] + be * x[1]);
        let i = C::I;
        crate::fem::FieldSample {
            u: p3 * down + u0 * up,
            v: q3 * down + v0 * up,
            grad_u: [i * al * (p3 * down + u0 * up), i * be * (-p3 * down + u0 * up)],
            grad_v: [i * al * (q3 * down + v0 * up), i * be * (-q3 * down + v0 * up)],
        }
    })
}

/// Analytic trace on a flat surface for the energy check: `|u|^2` and `|v|^2` are
/// constant along `x2 = c`.
pub fn flat_trace(p: &IncidenceParams, d: &DerivedParams, c: f64) -> Result<GammaTrace> {
    let f = flat_field(p, d, c)?;
    let s = f([0.0, c]);
    Ok(GammaTrace::Nodal {
        weights: vec![2.0 * PI],
        u: vec![s.u],
        v: vec![s.v],
    })
}

/// A complete problem: physics, surface and numerical settings shared by both solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub params: IncidenceParams,
    pub profile: GratingProfile,
    /// Height of the transparent boundary.
    pub b: f64,
    /// DtN truncation; `None` selects the default rule.
    pub truncation: Option<usize>,
    pub wood_tolerance: f64,
    pub mesh_options: MeshOptions,
    pub bie_options: BieOptions,
}

#[derive(Debug, Clone)]
pub struct FemRun {
    pub solution: FemSolution,
    pub spectrum: RayleighSpectrum,
    pub energy: EnergyReport,
    pub truncation: usize,
}

#[derive(Debug, Clone)]
pub struct BieRun {
    pub densities: BoundaryDensities,
    pub spectrum: RayleighSpectrum,
    pub energy: EnergyReport,
    pub truncation: usize,
}

impl Problem {
    pub fn new(params: IncidenceParams, profile: GratingProfile, b: f64) -> Self {
        Problem {
            params,
            profile,
            b,
            truncation: None,
            wood_tolerance: DEFAULT_WOOD_TOLERANCE,
            mesh_options: MeshOptions::default(),
            bie_options: BieOptions::default(),
        }
    }

    pub fn derived(&self) -> Result<DerivedParams> {
        self.params.validate()?;
        if !(self.b.is_finite() && self.b > self.profile.gamma_max) {
            return Err(invalid(
                "b",
                format!("must exceed the profile maximum {}, got {}", self.profile.gamma_max, self.b),
            ));
        }
        derive_params(&self.params)
    }

    pub fn resolved_truncation(&self, d: &DerivedParams) -> usize {
        self.truncation
            .unwrap_or_else(|| default_truncation(d, self.b, self.profile.gamma_max))
    }

    pub fn solve_fem(&self, h: f64) -> Result<FemRun> {
        let d = self.derived()?;
        let n = self.resolved_truncation(&d);
        let mesh = Arc::new(triangulate_with(&self.profile, self.b, h, &self.mesh_options)?);
        let sys = fem::assemble(mesh, &self.params, &d, n, self.wood_tolerance)?;
        let solution = fem::solve(&sys)?;
        let spectrum = fem::extract_rayleigh(&solution, &self.params, &d, n);
        let energy = energy_check(&spectrum, &solution.gamma_trace(), &self.params, &d);
        Ok(FemRun {
            solution,
            spectrum,
            energy,
            truncation: n,
        })
    }

    pub fn solve_bie(&self, q_nodes: usize) -> Result<BieRun> {
        let d = self.derived()?;
        let n = self.resolved_truncation(&d);
        let opts = BieOptions {
            wood_tolerance: self.wood_tolerance,
            ..self.bie_options
        };
        let sys = assemble_bie_with(&self.profile, &self.params, &d, q_nodes, &opts)?;
        let densities = solve_densities(&sys)?;
        let spectrum = rayleigh_from_densities(&densities, &d, n)?;
        let energy = energy_check(&spectrum, &densities.gamma_trace(&self.params, &d), &self.params, &d);
        Ok(BieRun {
            densities,
            spectrum,
            energy,
            truncation: n,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub h: f64,
    pub dofs: usize,
    /// Errors against the reference field; `None` for the level used as reference.
    pub err_h1: Option<f64>,
    pub err_l2: Option<f64>,
    /// H1 norm of the difference to the next finer level.
    pub step_h1: Option<f64>,
    /// Largest propagating-coefficient error against the reference spectrum.
    pub coeff_err: Option<f64>,
    pub energy_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Closed-form flat-surface fields.
    Exact,
    /// Finest FEM level for fields, boundary integral spectrum for coefficients.
    FinestLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub reference: ReferenceKind,
    pub levels: Vec<LevelResult>,
    pub rate_h1: Option<f64>,
    pub rate_l2: Option<f64>,
    /// Rate of the successive-difference H1 norms.
    pub self_rate_h1: Option<f64>,
    pub rate_coeff: Option<f64>,
    /// Whether every error sequence decreases under refinement.
    pub monotone: bool,
}

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_rate(h: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(e)
        .filter(|(_, &e)| e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn collect(levels: &[LevelResult], f: impl Fn(&LevelResult) -> Option<f64>) -> (Vec<f64>, Vec<f64>) {
    levels.iter().filter_map(|l| f(l).map(|e| (l.h, e))).unzip()
}

fn decreasing(e: &[f64]) -> bool {
    e.windows(2).all(|w| w[1] <= w[0])
}

/// Number of boundary nodes used for the coefficient reference on curved surfaces.
pub const REFERENCE_BIE_NODES: usize = 256;

pub fn convergence_study(problem: &Problem, h_levels: &[f64]) -> Result<ConvergenceReport> {
    if h_levels.len() < 3 {
        return Err(invalid("levels", format!("at least 3 levels are required, got {}", h_levels.len())));
    }
    if !h_levels.windows(2).all(|w| w[1] < w[0]) || h_levels.iter().any(|&h| !(h > 0.0)) {
        return Err(invalid("levels", "mesh sizes must be positive and strictly decreasing"));
    }
    let d = problem.derived()?;
    let runs: Vec<FemRun> = h_levels.iter().map(|&h| problem.solve_fem(h)).collect::<Result<_>>()?;
    let flat = problem.profile.flat_height();
    let reference = if flat.is_some() { ReferenceKind::Exact } else { ReferenceKind::FinestLevel };
    let ref_spec = match flat {
        Some(c) => flat_oracle(&problem.params, &d, c, runs[0].truncation)?,
        None => match problem.solve_bie(REFERENCE_BIE_NODES) {
            Ok(r) => r.spectrum,
            Err(_) => runs[runs.len() - 1].spectrum.clone(),
        },
    };
    let last = runs.len() - 1;
    let mut levels = Vec::with_capacity(runs.len());
    for (k, run) in runs.iter().enumerate() {
        let (err_l2, err_h1) = match flat {
            Some(c) => {
                let f = flat_field(&problem.params, &d, c)?;
                let (l2, h1) = fem::error_norms(&run.solution, |x| Some(f(x)))?;
                (Some(l2), Some(h1))
            }
            None if k < last => {
                let (l2, h1) = fem::difference_norms(&runs[last].solution, &run.solution)?;
                (Some(l2), Some(h1))
            }
            None => (None, None),
        };
        let step_h1 = if k < last {
            Some(fem::difference_norms(&runs[k + 1].solution, &run.solution)?.1)
        } else {
            None
        };
        let coeff_err = if flat.is_none() && k == last && ref_spec == run.spectrum {
            None
        } else {
            Some(run.spectrum.max_propagating_difference(&ref_spec))
        };
        levels.push(LevelResult {
            h: h_levels[k],
            dofs: run.solution.mesh.n_dofs,
            err_h1,
            err_l2,
            step_h1,
            coeff_err,
            energy_residual: run.energy.residual,
        });
    }
    let (h1x, h1e) = collect(&levels, |l| l.err_h1);
    let (l2x, l2e) = collect(&levels, |l| l.err_l2);
    let (sx, se) = collect(&levels, |l| l.step_h1);
    let (cx, ce) = collect(&levels, |l| l.coeff_err);
    Ok(ConvergenceReport {
        reference,
        rate_h1: fitted_rate(&h1x, &h1e),
        rate_l2: fitted_rate(&l2x, &l2e),
        self_rate_h1: fitted_rate(&sx, &se),
        rate_coeff: fitted_rate(&cx, &ce),
        monotone: decreasing(&h1e) && decreasing(&l2e) && decreasing(&se) && decreasing(&ce),
        levels,
    })
}

impl ConvergenceReport {
    /// CSV with columns `level,h,err_H1,err_L2,rate_H1,rate_L2`, local rates between
    /// consecutive levels and a final `fit` row with the least-squares slopes.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "level,h,err_H1,err_L2,rate_H1,rate_L2")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        let local = |a: Option<f64>, b: Option<f64>, ha: f64, hb: f64| match (a, b) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).ln() / (ha / hb).ln()),
            _ => None,
        };
        for (k, l) in self.levels.iter().enumerate() {
            let (rh, rl) = if k == 0 {
                (None, None)
            } else {
                let p = &self.levels[k - 1];
                (local(p.err_h1, l.err_h1, p.h, l.h), local(p.err_l2, l.err_l2, p.h, l.h))
            };
            writeln!(
                w,
                "{k},{:.10e},{},{},{},{}",
                l.h,
                opt(l.err_h1),
                opt(l.err_l2),
                opt(rh),
                opt(rl)
            )?;
        }
        writeln!(w, "fit,,,,{},{}", opt(self.rate_h1), opt(self.rate_l2))
    }
}

/// Per-order discrepancy between the two solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderDiscrepancy {
    pub n: i64,
    pub du: f64,
    pub dv: f64,
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub orders: Vec<OrderDiscrepancy>,
    pub max_discrepancy: f64,
    pub fem: FemRun,
    pub bie: BieRun,
}

pub fn cross_validate(problem: &Problem, h: f64, q_nodes: usize) -> Result<CrossValidation> {
    let fem = problem.solve_fem(h)?;
    let bie = problem.solve_bie(q_nodes)?;
    let orders: Vec<OrderDiscrepancy> = fem
        .spectrum
        .propagating()
        .filter_map(|a| {
            bie.spectrum.get(a.order.n).map(|b| OrderDiscrepancy {
                n: a.order.n,
                du: (a.u - b.u).norm(),
                dv: (a.v - b.v).norm(),
            })
        })
        .collect();
    let max_discrepancy = orders.iter().map(|o| o.du.max(o.dv)).fold(0.0, f64::max);
    Ok(CrossValidation {
        orders,
        max_discrepancy,
        fem,
        bie,
    })
}
