//! P1 finite elements on the truncated cell with the DtN map on `x2 = b`.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dtn::{hat_transform, mode_matrix};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Factorization, LowRank, SolveReport};
use crate::mesh::{PeriodicMesh, PointLocator};
use crate::params::{check_wood, DerivedParams, IncidenceParams, RayleighSpectrum};
use crate::profile::TWO_PI;
use crate::validation::GammaTrace;

type C = Complex64;

/// Discrete system in the block layout `[u-block | v-block]`.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub mesh: Arc<PeriodicMesh>,
    /// Sparse volume and surface terms, size `2m x 2m`.
    pub matrix: CsrMatrix,
    /// Dense DtN term `W^H C W` on the `x2 = b` trace unknowns.
    pub dtn: LowRank,
    pub rhs: Vec<C>,
    /// Scalar DOF count.
    pub m: usize,
    pub alpha: f64,
    pub truncation: usize,
    order: Vec<usize>,
    n_border: usize,
}

impl AssembledSystem {
    /// Entry of the full matrix, including the DtN term.
    pub fn entry(&self, i: usize, j: usize) -> C {
        self.matrix.get(i, j) + self.dtn.entry(i, j)
    }

    /// Frobenius norms of the `(u, v)` and `(v, u)` blocks, DtN term included.
    pub fn coupling_norms(&self) -> (f64, f64) {
        let m = self.m;
        let sparse = (self.matrix.block_norm(0..m, m..2 * m), self.matrix.block_norm(m..2 * m, 0..m));
        let mut dense = (0.0, 0.0);
        for &i in &self.dtn.rows {
            for &j in &self.dtn.rows {
                let e = self.dtn.entry(i, j).norm_sqr();
                if i < m && j >= m {
                    dense.0 += e;
                } else if i >= m && j < m {
                    dense.1 += e;
                }
            }
        }
        (
            (sparse.0 * sparse.0 + dense.0).sqrt(),
            (sparse.1 * sparse.1 + dense.1).sqrt(),
        )
    }
}

/// Nodal solution `(u_h, v_h)` per scalar DOF.
#[derive(Debug, Clone)]
pub struct FemSolution {
    pub mesh: Arc<PeriodicMesh>,
    pub alpha: f64,
    pub u: Vec<C>,
    pub v: Vec<C>,
    pub report: SolveReport,
}

struct Element {
    dofs: [usize; 3],
    phase: [C; 3],
    stiff: [[f64; 3]; 3],
    mass: [[f64; 3]; 3],
    /// `<grad phi_j, grad_perp phi_i>` at `[i][j]`.
    perp: [[f64; 3]; 3],
}

fn p1_gradients(v: &[[f64; 2]], t: &[usize; 3]) -> (f64, [[f64; 2]; 3]) {
    let p = [v[t[0]], v[t[1]], v[t[2]]];
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        g[i] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    (0.5 * det, g)
}

fn element(mesh: &PeriodicMesh, phases: &[C], t: &[usize; 3]) -> Element {
    let (area, g) = p1_gradients(&mesh.vertices, t);
    let mut e = Element {
        dofs: t.map(|v| mesh.dof_map[v]),
        phase: t.map(|v| phases[v]),
        stiff: [[0.0; 3]; 3],
        mass: [[0.0; 3]; 3],
        perp: [[0.0; 3]; 3],
    };
    for i in 0..3 {
        for j in 0..3 {
            e.stiff[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            e.mass[i][j] = area / if i == j { 6.0 } else { 12.0 };
            // grad_perp = (-d2, d1)
            e.perp[i][j] = area * (-g[j][0] * g[i][1] + g[j][1] * g[i][0]);
        }
    }
    e
}

/// Trace coefficients `g_n(Phi_d)` for `n = -N..=N` of the basis functions on `x2 = b`.
/// Returns the trace DOFs and a `(2N+1) x ntrace` matrix.
fn trace_transform(mesh: &PeriodicMesh, phases: &[C], alpha: f64, truncation: usize) -> (Vec<usize>, DMatrix<C>) {
    let mut dofs: Vec<usize> = mesh
        .gammab_edges
        .iter()
        .flat_map(|e| e.iter().map(|&v| mesh.dof_map[v]))
        .collect();
    dofs.sort_unstable();
    dofs.dedup();
    let pos = |d: usize| dofs.binary_search(&d).unwrap();
    let nn = truncation as i64;
    let mut g = DMatrix::<C>::zeros(2 * truncation + 1, dofs.len());
    for e in &mesh.gammab_edges {
        let (xa, xb) = (mesh.vertices[e[0]][0], mesh.vertices[e[1]][0]);
        let (ja, jb) = (pos(mesh.dof_map[e[0]]), pos(mesh.dof_map[e[1]]));
        for n in -nn..=nn {
            let h = hat_transform(xa, xb, n as f64 + alpha);
            let r = (n + nn) as usize;
            g[(r, ja)] += phases[e[0]] * h[0];
            g[(r, jb)] += phases[e[1]] * h[1];
        }
    }
    (dofs, g)
}

pub fn assemble(
    mesh: Arc<PeriodicMesh>,
    p: &IncidenceParams,
    d: &DerivedParams,
    truncation: usize,
    wood_tolerance: f64,
) -> Result<AssembledSystem> {
    p.validate()?;
    check_wood(d, truncation, wood_tolerance)?;
    let m = mesh.n_dofs;
    let phases = mesh.vertex_phases(d.alpha);
    let k2 = d.kappa2;
    let (we, wm) = (p.omega * p.epsilon, p.omega * p.mu);
    let g = d.gamma / k2;

    let elements: Vec<Element> = mesh
        .triangles
        .par_iter()
        .map(|t| element(&mesh, &phases, t))
        .collect();
    let mut trip: Vec<(usize, usize, C)> = Vec::with_capacity(elements.len() * 36);
    for e in &elements {
        for i in 0..3 {
            for j in 0..3 {
                let s = e.phase[j] * e.phase[i].conj();
                let (di, dj) = (e.dofs[i], e.dofs[j]);
                let (k, ms, c) = (e.stiff[i][j], e.mass[i][j], e.perp[i][j]);
                trip.push((di, dj, s * (we / k2 * k - we * ms)));
                trip.push((m + di, m + dj, s * (wm / k2 * k - wm * ms)));
                if g != 0.0 {
                    trip.push((di, m + dj, s * (g * c)));
                    trip.push((m + di, dj, s * (-g * c)));
                }
            }
        }
    }
    for e in &mesh.gamma_edges {
        let l = e.length;
        for a in 0..2 {
            for b in 0..2 {
                let (va, vb) = (e.v[a], e.v[b]);
                let mass = l / if a == b { 3.0 } else { 6.0 };
                let s = phases[vb] * phases[va].conj() * mass;
                let (di, dj) = (mesh.dof_map[va], mesh.dof_map[vb]);
                trip.push((di, dj, s * C::new(0.0, 1.0 / p.lambda)));
                trip.push((m + di, m + dj, s * C::new(0.0, p.lambda)));
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(2 * m, &trip);

    let (tdofs, gt) = trace_transform(&mesh, &phases, d.alpha, truncation);
    let nt = tdofs.len();
    let nmodes = 2 * truncation + 1;
    let r = 2 * nmodes;
    let mut w = DMatrix::<C>::zeros(r, 2 * nt);
    let mut cm = DMatrix::<C>::zeros(r, r);
    for k in 0..nmodes {
        for j in 0..nt {
            w[(2 * k, j)] = gt[(k, j)];
            w[(2 * k + 1, nt + j)] = gt[(k, j)];
        }
        let mn = mode_matrix(k as i64 - truncation as i64, p, d).m;
        for a in 0..2 {
            for b in 0..2 {
                cm[(2 * k + a, 2 * k + b)] = 2.0 * PI * mn[a][b];
            }
        }
    }
    let mut rows = tdofs.clone();
    rows.extend(tdofs.iter().map(|&x| m + x));
    let dtn = LowRank { rows, w, c: cm };

    let phase_b = C::from_polar(1.0, -d.beta * mesh.b);
    let fu = C::new(0.0, -2.0 * we * d.beta / k2) * p.p3 * phase_b * (2.0 * PI);
    let fv = C::new(0.0, -2.0 * wm * d.beta / k2) * p.q3 * phase_b * (2.0 * PI);
    let mut rhs = vec![C::ZERO; 2 * m];
    let n0 = truncation;
    for (j, &dof) in tdofs.iter().enumerate() {
        let c = gt[(n0, j)].conj();
        rhs[dof] = fu * c;
        rhs[m + dof] = fv * c;
    }

    // left-column DOFs form the border; the rest is banded in x1-major order
    let n_left = mesh
        .dof_map
        .iter()
        .zip(&mesh.vertices)
        .filter(|(_, x)| x[0] == 0.0)
        .count();
    let mut order = Vec::with_capacity(2 * m);
    for dof in (n_left..m).chain(0..n_left) {
        order.push(dof);
        order.push(m + dof);
    }
    Ok(AssembledSystem {
        mesh,
        matrix,
        dtn,
        rhs,
        m,
        alpha: d.alpha,
        truncation,
        order,
        n_border: 2 * n_left,
    })
}

/// Factorisation reusable for several right-hand sides.
pub struct FemFactorization {
    mesh: Arc<PeriodicMesh>,
    alpha: f64,
    m: usize,
    fact: Factorization,
}

pub fn factorize(system: &AssembledSystem) -> Result<FemFactorization> {
    let fact = Factorization::new(
        system.matrix.clone(),
        Some(system.dtn.clone()),
        system.order.clone(),
        system.n_border,
    )?;
    Ok(FemFactorization {
        mesh: system.mesh.clone(),
        alpha: system.alpha,
        m: system.m,
        fact,
    })
}

impl FemFactorization {
    pub fn solve_rhs(&self, rhs: &[C]) -> Result<FemSolution> {
        let (x, report) = self.fact.solve(rhs);
        if !(report.residual <= 1e-10) {
            return Err(Error::Solver(format!(
                "relative residual {:.3e} above 1e-10 after {} refinement steps",
                report.residual, report.refinement_steps
            )));
        }
        Ok(FemSolution {
            mesh: self.mesh.clone(),
            alpha: self.alpha,
            u: x[..self.m].to_vec(),
            v: x[self.m..].to_vec(),
            report,
        })
    }
}

pub fn solve(system: &AssembledSystem) -> Result<FemSolution> {
    factorize(system)?.solve_rhs(&system.rhs)
}

/// Rayleigh coefficients from the exact Fourier coefficients of the P1 trace on `x2 = b`.
pub fn extract_rayleigh(
    sol: &FemSolution,
    p: &IncidenceParams,
    d: &DerivedParams,
    truncation: usize,
) -> RayleighSpectrum {
    let mesh = &sol.mesh;
    let phases = mesh.vertex_phases(d.alpha);
    let (tdofs, gt) = trace_transform(mesh, &phases, d.alpha, truncation);
    let b = mesh.b;
    let nn = truncation as i64;
    let inc = C::from_polar(1.0, -d.beta * b);
    RayleighSpectrum::from_fn(d, truncation, |o| {
        let row = (o.n + nn) as usize;
        let (mut uh, mut vh) = (C::ZERO, C::ZERO);
        for (j, &dof) in tdofs.iter().enumerate() {
            uh += gt[(row, j)] * sol.u[dof];
            vh += gt[(row, j)] * sol.v[dof];
        }
        if o.n == 0 {
            uh -= p.p3 * inc;
            vh -= p.q3 * inc;
        }
        let back = (-C::I * o.beta_n * b).exp();
        (back * uh, back * vh)
    })
}

/// Rayleigh coefficients from a discrete Fourier transform of the trace sampled at
/// `M` equispaced points, `M` being the number of edges on `x2 = b`.
pub fn extract_rayleigh_sampled(
    sol: &FemSolution,
    p: &IncidenceParams,
    d: &DerivedParams,
    truncation: usize,
) -> Result<RayleighSpectrum> {
    let mesh = &sol.mesh;
    let mut top: Vec<(f64, C, C)> = Vec::new();
    let vals = sol.vertex_values();
    for e in &mesh.gammab_edges {
        top.push((mesh.vertices[e[0]][0], vals[e[0]].0, vals[e[0]].1));
    }
    let last = mesh.gammab_edges.last().ok_or_else(|| Error::Precondition("no top edges".into()))?[1];
    top.push((TWO_PI, vals[last].0, vals[last].1));
    let mcount = mesh.gammab_edges.len();
    let mut su = Vec::with_capacity(mcount);
    let mut sv = Vec::with_capacity(mcount);
    let mut k = 0;
    for j in 0..mcount {
        let x = TWO_PI * j as f64 / mcount as f64;
        while k + 1 < top.len() - 1 && top[k + 1].0 <= x {
            k += 1;
        }
        let (x0, x1) = (top[k].0, top[k + 1].0);
        let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        su.push(top[k].1 * (1.0 - t) + top[k + 1].1 * t);
        sv.push(top[k].2 * (1.0 - t) + top[k + 1].2 * t);
    }
    let uh = crate::dtn::boundary_fourier(&su, d.alpha, truncation)?;
    let vh = crate::dtn::boundary_fourier(&sv, d.alpha, truncation)?;
    let b = mesh.b;
    let inc = C::from_polar(1.0, -d.beta * b);
    let nn = truncation as i64;
    Ok(RayleighSpectrum::from_fn(d, truncation, |o| {
        let i = (o.n + nn) as usize;
        let (mut a, mut c) = (uh[i], vh[i]);
        if o.n == 0 {
            a -= p.p3 * inc;
            c -= p.q3 * inc;
        }
        let back = (-C::I * o.beta_n * b).exp();
        (back * a, back * c)
    }))
}

impl FemSolution {
    /// `(u, v)` at every mesh vertex, phase factors applied.
    pub fn vertex_values(&self) -> Vec<(C, C)> {
        let ph = self.mesh.vertex_phases(self.alpha);
        self.mesh
            .dof_map
            .iter()
            .zip(&ph)
            .map(|(&d, &f)| (f * self.u[d], f * self.v[d]))
            .collect()
    }

    /// Piecewise-linear trace on the grating surface.
    pub fn gamma_trace(&self) -> GammaTrace {
        let vals = self.vertex_values();
        GammaTrace::PiecewiseLinear(
            self.mesh
                .gamma_edges
                .iter()
                .map(|e| (e.length, [vals[e.v[0]].0, vals[e.v[1]].0], [vals[e.v[0]].1, vals[e.v[1]].1]))
                .collect(),
        )
    }

    /// Value and gradient of `(u_h, v_h)` at `x`; `x1` may lie outside `[0, 2 pi]`.
    pub fn eval(&self, loc: &PointLocator<'_>, vals: &[(C, C)], x: [f64; 2]) -> Option<FieldSample> {
        let shift = (x[0] / TWO_PI).floor();
        let mut xl = [x[0] - shift * TWO_PI, x[1]];
        if xl[0] >= TWO_PI {
            xl[0] = 0.0;
        }
        let (t, lam) = loc.locate(xl)?;
        let tri = self.mesh.triangles[t];
        let (_, g) = p1_gradients(&self.mesh.vertices, &tri);
        let f = C::from_polar(1.0, TWO_PI * self.alpha * shift);
        let mut s = FieldSample::default();
        for i in 0..3 {
            let (u, v) = vals[tri[i]];
            s.u += f * lam[i] * u;
            s.v += f * lam[i] * v;
            for k in 0..2 {
                s.grad_u[k] += f * g[i][k] * u;
                s.grad_v[k] += f * g[i][k] * v;
            }
        }
        Some(s)
    }

    /// CSV with columns `vertex_index,x1,x2,u_re,u_im,v_re,v_im`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "vertex_index,x1,x2,u_re,u_im,v_re,v_im")?;
        for (i, (p, (u, v))) in self.mesh.vertices.iter().zip(self.vertex_values()).enumerate() {
            writeln!(
                w,
                "{i},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                p[0], p[1], u.re, u.im, v.re, v.im
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldSample {
    pub u: C,
    pub v: C,
    pub grad_u: [C; 2],
    pub grad_v: [C; 2],
}

// Seven-point degree-5 rule on the reference triangle: (l1, l2, weight).
const RADON7: [(f64, f64, f64); 7] = [
    (1.0 / 3.0, 1.0 / 3.0, 0.225),
    (0.059_715_871_789_769_82, 0.470_142_064_105_115_1, 0.132_394_152_788_506_18),
    (0.470_142_064_105_115_1, 0.059_715_871_789_769_82, 0.132_394_152_788_506_18),
    (0.470_142_064_105_115_1, 0.470_142_064_105_115_1, 0.132_394_152_788_506_18),
    (0.797_426_985_353_087_3, 0.101_286_507_323_456_34, 0.125_939_180_544_827_15),
    (0.101_286_507_323_456_34, 0.797_426_985_353_087_3, 0.125_939_180_544_827_15),
    (0.101_286_507_323_456_34, 0.101_286_507_323_456_34, 0.125_939_180_544_827_15),
];

/// `(||e||_{L2}, ||e||_{H1})` of `(u_h - u, v_h - v)` over the mesh, with `reference`
/// returning the comparison field at a point.
pub fn error_norms(sol: &FemSolution, reference: impl Fn([f64; 2]) -> Option<FieldSample> + Sync) -> Result<(f64, f64)> {
    let mesh = &sol.mesh;
    let vals = sol.vertex_values();
    let parts: Result<Vec<(f64, f64)>> = mesh
        .triangles
        .par_iter()
        .map(|t| {
            let (area, g) = p1_gradients(&mesh.vertices, t);
            let p = t.map(|v| mesh.vertices[v]);
            let mut gu = [C::ZERO; 2];
            let mut gv = [C::ZERO; 2];
            for i in 0..3 {
                for k in 0..2 {
                    gu[k] += g[i][k] * vals[t[i]].0;
                    gv[k] += g[i][k] * vals[t[i]].1;
                }
            }
            let (mut l2, mut h1) = (0.0, 0.0);
            for &(a, b, w) in &RADON7 {
                let l = [1.0 - a - b, a, b];
                let x = [
                    l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                    l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                ];
                let r = reference(x).ok_or_else(|| Error::Precondition(format!("reference undefined at {x:?}")))?;
                let uh: C = (0..3).map(|i| l[i] * vals[t[i]].0).sum();
                let vh: C = (0..3).map(|i| l[i] * vals[t[i]].1).sum();
                let e0 = (uh - r.u).norm_sqr() + (vh - r.v).norm_sqr();
                let e1: f64 = (0..2)
                    .map(|k| (gu[k] - r.grad_u[k]).norm_sqr() + (gv[k] - r.grad_v[k]).norm_sqr())
                    .sum();
                l2 += w * area * e0;
                h1 += w * area * e1;
            }
            Ok((l2, h1))
        })
        .collect();
    let (l2, semi) = parts?.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((l2.sqrt(), (l2 + semi).sqrt()))
}

/// `(||e||_{L2}, ||e||_{H1})` between a solution and one on a different mesh.
pub fn difference_norms(fine: &FemSolution, coarse: &FemSolution) -> Result<(f64, f64)> {
    let loc = coarse.mesh.locator();
    let vals = coarse.vertex_values();
    error_norms(fine, |x| coarse.eval(&loc, &vals, x))
}

/// Interpolates `field` at the vertices; useful for synthetic traces.
pub fn interpolate(
    mesh: Arc<PeriodicMesh>,
    alpha: f64,
    field: impl Fn([f64; 2]) -> (C, C),
) -> FemSolution {
    let m = mesh.n_dofs;
    let mut u = vec![C::ZERO; m];
    let mut v = vec![C::ZERO; m];
    for (i, x) in mesh.vertices.iter().enumerate() {
        if !mesh.shifted[i] {
            let (a, b) = field(*x);
            u[mesh.dof_map[i]] = a;
            v[mesh.dof_map[i]] = b;
        }
    }
    FemSolution {
        mesh,
        alpha,
        u,
        v,
        report: SolveReport {
            residual: 0.0,
            refinement_steps: 0,
            bandwidth: (0, 0),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::triangulate;
    use crate::params::derive_params;
    use crate::profile::{build_profile, ProfileSpec};
    use crate::validation::{energy_check, flat_reflection};

    fn conical(phi: f64) -> IncidenceParams {
        IncidenceParams {
            omega: 1.0,
            epsilon: 1.0,
            mu: 1.0,
            lambda: -2.0,
            theta: 0.3,
            phi,
            p3: C::new(1.0, 0.0),
            q3: C::new(0.5, -0.25),
        }
    }

    fn flat_mesh(h: f64) -> Arc<PeriodicMesh> {
        let prof = build_profile(&ProfileSpec::Flat { height: 0.0 }).unwrap();
        Arc::new(triangulate(&prof, 1.0, h).unwrap())
    }

    #[test]
    fn flat_conical_against_closed_form() {
        let p = conical(0.4);
        let d = derive_params(&p).unwrap();
        let mesh = flat_mesh(0.05);
        let sys = assemble(mesh, &p, &d, 12, 1e-6).unwrap();
        let sol = solve(&sys).unwrap();
        assert!(sol.report.residual < 1e-10);
        let s = extract_rayleigh(&sol, &p, &d, 12);
        let (u0, v0) = flat_reflection(&p, &d, 0.0).unwrap();
        let e = s.get(0).unwrap();
        assert!((e.u - u0).norm() < 1e-2, "{} vs {u0}", e.u);
        assert!((e.v - v0).norm() < 1e-2, "{} vs {v0}", e.v);
        let r = energy_check(&s, &sol.gamma_trace(), &p, &d);
        assert!(r.residual < 1e-10, "{r:?}");
    }
}
