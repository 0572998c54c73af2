//! Single-layer boundary integral solver on one period of the grating surface.
//!
//! Both scattered fields are single-layer potentials `S g = 2 int G g ds`. The
//! densities solve the 2x2 operator system built from `S`, `K'` and `H'`, discretised
//! by a Nystrom method with logarithmic splitting on an equispaced parameter grid.
//! Piecewise-linear profiles use a sigmoidal parameter grading that clusters nodes
//! at the corners.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::green::{GreenEval, QuasiGreen};
use crate::params::{check_wood, DerivedParams, IncidenceParams, RayleighSpectrum, DEFAULT_WOOD_TOLERANCE};
use crate::profile::{GratingProfile, ProfileKind, TWO_PI};
use crate::special::{bessel_j01, EULER_GAMMA};
use crate::validation::GammaTrace;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BieOptions {
    pub wood_tolerance: f64,
    pub h_switch: f64,
    /// Exponent of the sigmoidal corner grading.
    pub grading_exponent: f64,
    /// Minimum number of nodes between consecutive corners.
    pub min_panel_nodes: usize,
}

impl Default for BieOptions {
    fn default() -> Self {
        BieOptions {
            wood_tolerance: DEFAULT_WOOD_TOLERANCE,
            h_switch: 0.05,
            grading_exponent: 3.0,
            min_panel_nodes: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ParamMap {
    Identity,
    /// Parameter breakpoints `s` mapped onto corner abscissae `c`; both close with `+ 2 pi`.
    Graded { s: Vec<f64>, c: Vec<f64>, p: f64 },
}

impl ParamMap {
    /// `(x1(t), x1'(t))`.
    fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            ParamMap::Identity => (t, 1.0),
            ParamMap::Graded { s, c, p } => {
                let tw = s[0] + (t - s[0]).rem_euclid(TWO_PI);
                let shift = t - tw;
                let k = s.partition_point(|&v| v <= tw).clamp(1, s.len() - 1) - 1;
                let ls = s[k + 1] - s[k];
                let lc = c[k + 1] - c[k];
                let sig = ((tw - s[k]) / ls).clamp(0.0, 1.0);
                let (a, b) = (sig.powf(*p), (1.0 - sig).powf(*p));
                let den = a + b;
                let w = a / den;
                let dw = p * (sig * (1.0 - sig)).powf(p - 1.0) / (den * den);
                (c[k] + lc * w + shift, lc / ls * dw)
            }
        }
    }
}

/// Geometry at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub t: f64,
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    /// `|x'(t)|`.
    pub speed: f64,
    /// `x1'(t)`.
    pub dx1: f64,
    /// `nu . x'' / |x'|^2`.
    pub curvature: f64,
}

/// Equispaced parameter grid covering one period of the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub nodes: Vec<BoundaryNode>,
    /// Trapezoid weights `(2 pi / q) |x'(t_j)|`.
    pub weights: Vec<f64>,
    pub step: f64,
    profile: GratingProfile,
    map: ParamMap,
    slope: f64,
}

impl BoundaryGrid {
    pub fn new(profile: &GratingProfile, q: usize, opts: &BieOptions) -> Result<Self> {
        if q < 8 || q % 2 == 1 {
            return Err(crate::error::invalid("bie_nodes", format!("node count must be even and at least 8, got {q}")));
        }
        let step = TWO_PI / q as f64;
        let (map, t0) = if profile.kind == ProfileKind::PiecewiseLinear && !profile.corners.is_empty() {
            let mut c = profile.corners.clone();
            c.sort_by(|a, b| a.total_cmp(b));
            c.push(c[0] + TWO_PI);
            let m = c.len() - 1;
            let lens: Vec<f64> = c.windows(2).map(|w| w[1] - w[0]).collect();
            let counts = allot(q, &lens);
            if let Some(k) = counts.iter().position(|&n| n < opts.min_panel_nodes) {
                return Err(Error::Mesh(format!(
                    "corner panel {k} of length {:.3e} gets {} nodes; at least {} are required",
                    lens[k], counts[k], opts.min_panel_nodes
                )));
            }
            let mut s = vec![c[0]];
            let mut acc = 0;
            for &n in &counts[..m] {
                acc += n;
                s.push(c[0] + step * acc as f64);
            }
            (
                ParamMap::Graded {
                    s,
                    c: c.clone(),
                    p: opts.grading_exponent,
                },
                c[0] + 0.5 * step,
            )
        } else {
            (ParamMap::Identity, 0.0)
        };
        let mut slope: f64 = 0.0;
        for j in 0..4096 {
            slope = slope.max(profile.df(TWO_PI * j as f64 / 4096.0).abs());
        }
        let mut g = BoundaryGrid {
            nodes: Vec::new(),
            weights: Vec::new(),
            step,
            profile: profile.clone(),
            map,
            slope,
        };
        g.nodes = (0..q).map(|j| g.node_at(t0 + step * j as f64)).collect();
        g.weights = g.nodes.iter().map(|n| step * n.speed).collect();
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_at(&self, t: f64) -> BoundaryNode {
        let (x1, w1) = self.map.eval(t);
        let f1 = self.profile.df(x1);
        let f2 = self.profile.d2f(x1);
        let n = (1.0 + f1 * f1).sqrt();
        BoundaryNode {
            t,
            point: [x1, self.profile.f(x1)],
            normal: [f1 / n, -1.0 / n],
            tangent: [1.0 / n, f1 / n],
            speed: w1 * n,
            dx1: w1,
            curvature: -f2 / (n * n * n),
        }
    }

    /// Lower bound for the distance from `x` to the surface, signed positive above it.
    pub fn signed_distance_bound(&self, x: [f64; 2]) -> f64 {
        (x[1] - self.profile.f(x[0])) / (1.0 + self.slope * self.slope).sqrt()
    }
}

/// Splits `q` nodes over panels proportionally to their lengths.
fn allot(q: usize, lens: &[f64]) -> Vec<usize> {
    let total: f64 = lens.iter().sum();
    let raw: Vec<f64> = lens.iter().map(|l| q as f64 * l / total).collect();
    let mut n: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..lens.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let mut left = q - n.iter().sum::<usize>();
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        n[k] += 1;
        left -= 1;
    }
    n
}

/// Smooth cutoff equal to 1 near `sigma = 0` and vanishing to all orders at `|sigma| = pi`.
fn cutoff(sigma: f64) -> f64 {
    let psi = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
    let u = 1.0 - sigma.abs() / PI;
    let a = psi(u);
    let b = psi(1.0 - u);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Weights `R_k` of the product rule for `int ln(4 sin^2((t - s)/2)) f(s) ds` on `2Q`
/// equispaced nodes, indexed by `k = |i - j|`.
fn log_weights(q: usize) -> Vec<f64> {
    let half = q / 2;
    let qf = half as f64;
    (0..q)
        .map(|k| {
            let mut s = 0.0;
            for m in 1..half {
                s += (m as f64 * k as f64 * PI / qf).cos() / m as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * PI / qf * s - PI / (qf * qf) * sign
        })
        .collect()
}

/// Assembled Nystrom system for the densities `(g1, g2)`.
#[derive(Debug, Clone)]
pub struct BieSystem {
    pub grid: BoundaryGrid,
    pub green: QuasiGreen,
    /// `[[lambda (K' + I) + i a S, d H'], [-c H', K' + I + i b S]]`.
    pub matrix: DMatrix<C>,
    pub rhs: Vec<C>,
    pub s: DMatrix<C>,
    pub k_prime: DMatrix<C>,
    pub h_prime: DMatrix<C>,
    /// `(a, b, c, d)`.
    pub coefficients: [f64; 4],
    pub lambda: f64,
}

pub fn assemble_bie(
    profile: &GratingProfile,
    p: &IncidenceParams,
    d: &DerivedParams,
    q_nodes: usize,
) -> Result<BieSystem> {
    assemble_bie_with(profile, p, d, q_nodes, &BieOptions::default())
}

pub fn assemble_bie_with(
    profile: &GratingProfile,
    p: &IncidenceParams,
    d: &DerivedParams,
    q_nodes: usize,
    opts: &BieOptions,
) -> Result<BieSystem> {
    p.validate()?;
    let mut green = QuasiGreen::new(d, opts.wood_tolerance)?;
    green.h_switch = opts.h_switch;
    let grid = BoundaryGrid::new(profile, q_nodes, opts)?;
    let (s, k_prime) = layer_matrices(&grid, &green);
    let h_prime = tangential_matrix(&grid, d.alpha, &s);

    let (sp, cp) = p.phi.sin_cos();
    let a = p.omega * p.mu * cp * cp;
    let b = p.lambda * p.omega * p.epsilon * cp * cp;
    let c = sp * (p.epsilon / p.mu).sqrt();
    let dd = p.lambda * sp * (p.mu / p.epsilon).sqrt();
    let q = grid.len();
    let mut m = DMatrix::<C>::zeros(2 * q, 2 * q);
    for j in 0..q {
        for i in 0..q {
            let id = if i == j { C::ONE } else { C::ZERO };
            let kp = k_prime[(i, j)] + id;
            m[(i, j)] = p.lambda * kp + C::new(0.0, a) * s[(i, j)];
            m[(q + i, q + j)] = kp + C::new(0.0, b) * s[(i, j)];
            if dd != 0.0 {
                m[(i, q + j)] = dd * h_prime[(i, j)];
            }
            if c != 0.0 {
                m[(q + i, j)] = -c * h_prime[(i, j)];
            }
        }
    }
    let (h1, h2) = incident_trace(p, d, &grid);
    let rhs = h1.into_iter().chain(h2).collect();
    Ok(BieSystem {
        grid,
        green,
        matrix: m,
        rhs,
        s,
        k_prime,
        h_prime,
        coefficients: [a, b, c, dd],
        lambda: p.lambda,
    })
}

/// Nystrom matrices of `S` and `K'`.
fn layer_matrices(grid: &BoundaryGrid, green: &QuasiGreen) -> (DMatrix<C>, DMatrix<C>) {
    let q = grid.len();
    let r = log_weights(q);
    let h = grid.step;
    let rest = green.regular_part_at_origin();
    let kappa = green.kappa;
    let diag_s = rest.value + C::new(-((kappa / 2.0).ln() + EULER_GAMMA) / (2.0 * PI), 0.25);
    let rows: Vec<(Vec<C>, Vec<C>)> = (0..q)
        .into_par_iter()
        .map(|i| {
            let xi = &grid.nodes[i];
            let mut srow = vec![C::ZERO; q];
            let mut krow = vec![C::ZERO; q];
            for (j, yj) in grid.nodes.iter().enumerate() {
                let w = 2.0 * yj.speed;
                if i == j {
                    let k2s = diag_s - (xi.speed * xi.speed).ln() / (4.0 * PI);
                    let k2k = xi.normal[0] * rest.grad[0]
                        + xi.normal[1] * rest.grad[1]
                        + xi.curvature / (4.0 * PI);
                    srow[j] = w * (r[0] * (-1.0 / (4.0 * PI)) + h * k2s);
                    krow[j] = w * h * k2k;
                    continue;
                }
                let dt = yj.t - xi.t;
                let n_img = (dt / TWO_PI).round();
                let sigma = dt - TWO_PI * n_img;
                let chi = cutoff(sigma);
                let log = (4.0 * (0.5 * sigma).sin().powi(2)).ln();
                let dx = [xi.point[0] - yj.point[0], xi.point[1] - yj.point[1]];
                let g: GreenEval = green.eval_diff(dx);
                let (mut k1s, mut k1k) = (C::ZERO, C::ZERO);
                if chi > 0.0 {
                    let dn = [dx[0] + TWO_PI * n_img, dx[1]];
                    let rr = (dn[0] * dn[0] + dn[1] * dn[1]).sqrt();
                    let (j0, j1) = bessel_j01(kappa * rr);
                    let ph = C::from_polar(chi, -TWO_PI * green.alpha * n_img);
                    k1s = ph * (-j0 / (4.0 * PI));
                    let proj = (xi.normal[0] * dn[0] + xi.normal[1] * dn[1]) / rr;
                    k1k = ph * (kappa / (4.0 * PI) * j1 * proj);
                }
                let gn = xi.normal[0] * g.grad[0] + xi.normal[1] * g.grad[1];
                let k = r[i.abs_diff(j)];
                srow[j] = w * (k * k1s + h * (g.value - k1s * log));
                krow[j] = w * (k * k1k + h * (gn - k1k * log));
            }
            (srow, krow)
        })
        .collect();
    let mut s = DMatrix::<C>::zeros(q, q);
    let mut k = DMatrix::<C>::zeros(q, q);
    for (i, (sr, kr)) in rows.into_iter().enumerate() {
        for j in 0..q {
            s[(i, j)] = sr[j];
            k[(i, j)] = kr[j];
        }
    }
    (s, k)
}

/// `H' = diag(1/|x'|) E (i alpha diag(x1') + D) E^-1 S` with the trigonometric
/// differentiation matrix `D` and `E = diag(exp(i alpha x1))`.
fn tangential_matrix(grid: &BoundaryGrid, alpha: f64, s: &DMatrix<C>) -> DMatrix<C> {
    let q = grid.len();
    let e: Vec<C> = grid.nodes.iter().map(|n| C::from_polar(1.0, alpha * n.point[0])).collect();
    let mut dm = DMatrix::<C>::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            if i == j {
                dm[(i, j)] = C::new(0.0, alpha * grid.nodes[i].dx1);
            } else {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let x = 0.5 * (i as f64 - j as f64) * grid.step;
                dm[(i, j)] = C::new(0.5 * sign / x.tan(), 0.0);
            }
        }
    }
    let mut es = s.clone();
    for i in 0..q {
        let f = e[i].conj();
        for j in 0..q {
            es[(i, j)] *= f;
        }
    }
    let mut h = dm * es;
    for i in 0..q {
        let f = e[i] / grid.nodes[i].speed;
        for j in 0..q {
            h[(i, j)] *= f;
        }
    }
    h
}

impl BieSystem {
    /// Frobenius norms of the two coupling blocks.
    pub fn off_diagonal_norms(&self) -> (f64, f64) {
        let q = self.grid.len();
        let upper = self.matrix.view((0, q), (q, q)).norm();
        let lower = self.matrix.view((q, 0), (q, q)).norm();
        (upper, lower)
    }

    /// Solves with an arbitrary right-hand side `(h1, h2)` stacked.
    pub fn solve_rhs(&self, rhs: &[C]) -> Result<BoundaryDensities> {
        let n = self.matrix.nrows();
        if rhs.len() != n {
            return Err(Error::Precondition(format!("rhs has length {}, expected {n}", rhs.len())));
        }
        let lu = self.matrix.clone().lu();
        let b = nalgebra::DVector::from_column_slice(rhs);
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Solver("boundary integral matrix is singular".into()))?;
        let mut x = x;
        let bn = b.norm();
        let mut residual = 0.0;
        for _ in 0..3 {
            let r = &b - &self.matrix * &x;
            residual = if bn > 0.0 { r.norm() / bn } else { r.norm() };
            if residual <= 1e-14 {
                break;
            }
            if let Some(dx) = lu.solve(&r) {
                x += dx;
            }
        }
        let r = &b - &self.matrix * &x;
        residual = if bn > 0.0 { r.norm() / bn } else { residual.min(r.norm()) };
        if residual > 1e-10 {
            return Err(Error::Solver(format!("boundary integral residual {residual:.3e} exceeds 1e-10")));
        }
        let q = self.grid.len();
        let g1: Vec<C> = x.as_slice()[..q].to_vec();
        let g2: Vec<C> = x.as_slice()[q..].to_vec();
        let su = &self.s * nalgebra::DVector::from_column_slice(&g1);
        let sv = &self.s * nalgebra::DVector::from_column_slice(&g2);
        Ok(BoundaryDensities {
            grid: self.grid.clone(),
            green: self.green,
            g1,
            g2,
            scattered_u: su.as_slice().to_vec(),
            scattered_v: sv.as_slice().to_vec(),
            residual,
        })
    }

    /// 1-norm condition number of the system matrix.
    pub fn condition(&self) -> Result<f64> {
        let inv = self
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Solver("boundary integral matrix is singular".into()))?;
        let norm1 = |m: &DMatrix<C>| {
            (0..m.ncols())
                .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        Ok(norm1(&self.matrix) * norm1(&inv))
    }
}

/// Boundary data `(h1, h2)` generated by the incident wave.
pub fn incident_trace(p: &IncidenceParams, d: &DerivedParams, grid: &BoundaryGrid) -> (Vec<C>, Vec<C>) {
    let (sp, cp) = p.phi.sin_cos();
    let a = p.omega * p.mu * cp * cp;
    let b = p.lambda * p.omega * p.epsilon * cp * cp;
    let c = sp * (p.epsilon / p.mu).sqrt();
    let dd = p.lambda * sp * (p.mu / p.epsilon).sqrt();
    let i = C::I;
    grid.nodes
        .iter()
        .map(|n| {
            let e = C::from_polar(1.0, d.alpha * n.point[0] - d.beta * n.point[1]);
            let dn = i * (d.alpha * n.normal[0] - d.beta * n.normal[1]);
            let dt = i * (d.alpha * n.tangent[0] - d.beta * n.tangent[1]);
            let (u, v) = (p.p3 * e, p.q3 * e);
            let h1 = -(p.lambda * dn * u + i * a * u + dd * dt * v);
            let h2 = -(dn * v + i * b * v - c * dt * u);
            (h1, h2)
        })
        .unzip()
}

/// Solves the assembled system for its incident-wave right-hand side.
pub fn solve_densities(sys: &BieSystem) -> Result<BoundaryDensities> {
    sys.solve_rhs(&sys.rhs)
}

/// Densities at the quadrature nodes together with the scattered traces `S g`.
#[derive(Debug, Clone)]
pub struct BoundaryDensities {
    pub grid: BoundaryGrid,
    pub green: QuasiGreen,
    pub g1: Vec<C>,
    pub g2: Vec<C>,
    pub scattered_u: Vec<C>,
    pub scattered_v: Vec<C>,
    /// Relative residual of the dense solve.
    pub residual: f64,
}

impl BoundaryDensities {
    /// Total-field trace on the surface with the native quadrature weights.
    pub fn gamma_trace(&self, p: &IncidenceParams, d: &DerivedParams) -> GammaTrace {
        let (mut u, mut v) = (Vec::new(), Vec::new());
        for (k, n) in self.grid.nodes.iter().enumerate() {
            let e = C::from_polar(1.0, d.alpha * n.point[0] - d.beta * n.point[1]);
            u.push(p.p3 * e + self.scattered_u[k]);
            v.push(p.q3 * e + self.scattered_v[k]);
        }
        GammaTrace::Nodal {
            weights: self.grid.weights.clone(),
            u,
            v,
        }
    }

    /// CSV with columns `node_index,x1,x2,g1_re,g1_im,g2_re,g2_im`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "node_index,x1,x2,g1_re,g1_im,g2_re,g2_im")?;
        for (k, n) in self.grid.nodes.iter().enumerate() {
            writeln!(
                w,
                "{k},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                n.point[0], n.point[1], self.g1[k].re, self.g1[k].im, self.g2[k].re, self.g2[k].im
            )?;
        }
        Ok(())
    }
}

/// Largest upsampled grid used for field evaluation.
const MAX_FINE_NODES: usize = 1 << 20;

/// Value and gradient of `S g` at arbitrary points off the surface, on either side.
///
/// The periodic part of the density is interpolated trigonometrically onto a grid
/// fine enough for the trapezoid rule at the distance of each point.
pub fn single_layer(grid: &BoundaryGrid, green: &QuasiGreen, density: &[C], points: &[[f64; 2]]) -> Result<Vec<GreenEval>> {
    let q = grid.len();
    let alpha = green.alpha;
    let periodic: Vec<C> = grid
        .nodes
        .iter()
        .zip(density)
        .map(|(n, g)| g * n.speed * C::from_polar(1.0, -alpha * n.point[0]))
        .collect();
    let mut spec = periodic.clone();
    FftPlanner::new().plan_fft_forward(q).process(&mut spec);
    let max_speed = grid.nodes.iter().map(|n| n.speed).fold(0.0, f64::max);

    let mut levels: Vec<usize> = Vec::with_capacity(points.len());
    for x in points {
        let dist = grid.signed_distance_bound(*x).abs();
        if dist < 1e-6 {
            return Err(Error::Precondition(format!(
                "point ({:.6}, {:.6}) lies within 1e-6 of the surface",
                x[0], x[1]
            )));
        }
        let need = 4.0 * max_speed * grid.step / dist;
        let l = (need.max(1.0).ceil() as usize).next_power_of_two();
        if q * l > MAX_FINE_NODES {
            return Err(Error::Precondition(format!(
                "point ({:.6}, {:.6}) is too close to the surface for field evaluation",
                x[0], x[1]
            )));
        }
        levels.push(l);
    }

    let mut cache: Vec<(usize, Vec<([f64; 2], C)>)> = Vec::new();
    let mut out = Vec::with_capacity(points.len());
    for (x, &l) in points.iter().zip(&levels) {
        if !cache.iter().any(|(k, _)| *k == l) {
            cache.push((l, fine_sources(grid, alpha, &spec, l)));
        }
        let src = &cache.iter().find(|(k, _)| *k == l).expect("cached level").1;
        let terms: Vec<GreenEval> = src
            .par_iter()
            .map(|(y, w)| {
                let g = green.eval_diff([x[0] - y[0], x[1] - y[1]]);
                GreenEval {
                    value: g.value * w,
                    grad: [g.grad[0] * w, g.grad[1] * w],
                }
            })
            .collect();
        let acc = terms.iter().fold(GreenEval::default(), |a, b| GreenEval {
            value: a.value + b.value,
            grad: [a.grad[0] + b.grad[0], a.grad[1] + b.grad[1]],
        });
        out.push(acc);
    }
    Ok(out)
}

/// Source points and weights `2 (2 pi / (q L)) g |x'|` on the refined grid.
fn fine_sources(grid: &BoundaryGrid, alpha: f64, spec: &[C], l: usize) -> Vec<([f64; 2], C)> {
    let q = spec.len();
    let m = q * l;
    let mut buf = vec![C::ZERO; m];
    let half = q / 2;
    for k in 0..q {
        let c = spec[k] / q as f64;
        if k < half {
            buf[k] = c;
        } else if k == half {
            buf[half] += 0.5 * c;
            buf[m - half] += 0.5 * c;
        } else {
            buf[m - (q - k)] = c;
        }
    }
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    let t0 = grid.nodes[0].t;
    let h = TWO_PI / m as f64;
    buf.iter()
        .enumerate()
        .map(|(k, &pv)| {
            let n = grid.node_at(t0 + h * k as f64);
            (n.point, 2.0 * h * pv * C::from_polar(1.0, alpha * n.point[0]))
        })
        .collect()
}

/// Scattered fields `(S g1, S g2)` at points strictly above the surface.
pub fn scattered_field(dens: &BoundaryDensities, points: &[[f64; 2]], d: &DerivedParams) -> Result<Vec<(C, C)>> {
    if (dens.green.alpha - d.alpha).abs() > 1e-14 || (dens.green.kappa - d.kappa).abs() > 1e-14 {
        return Err(Error::Precondition("densities were computed for different wave numbers".into()));
    }
    for x in points {
        if dens.grid.signed_distance_bound(*x) <= 0.0 {
            return Err(Error::Precondition(format!(
                "point ({:.6}, {:.6}) is not above the surface",
                x[0], x[1]
            )));
        }
    }
    let u = single_layer(&dens.grid, &dens.green, &dens.g1, points)?;
    let v = single_layer(&dens.grid, &dens.green, &dens.g2, points)?;
    Ok(u.into_iter().zip(v).map(|(a, b)| (a.value, b.value)).collect())
}

/// Rayleigh coefficients from the plane-wave expansion of the single layer above the surface.
pub fn rayleigh_from_densities(dens: &BoundaryDensities, d: &DerivedParams, truncation: usize) -> Result<RayleighSpectrum> {
    check_wood(d, truncation, DEFAULT_WOOD_TOLERANCE)?;
    let grid = &dens.grid;
    Ok(RayleighSpectrum::from_fn(d, truncation, |o| {
        let (mut u, mut v) = (C::ZERO, C::ZERO);
        for (k, n) in grid.nodes.iter().enumerate() {
            let e = (C::new(0.0, -o.alpha_n * n.point[0]) - C::I * o.beta_n * n.point[1]).exp() * grid.weights[k];
            u += e * dens.g1[k];
            v += e * dens.g2[k];
        }
        let f = C::I / (2.0 * PI * o.beta_n);
        (f * u, f * v)
    }))
}

/// Extrapolated one-sided limits of `grad S g` at a surface node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpReport {
    pub point: [f64; 2],
    pub density: C,
    /// Limit of `d/dnu (S g)` from above minus the limit from below.
    pub normal_jump: C,
    /// Same difference for the tangential derivative.
    pub tangential_jump: C,
    /// Extrapolated normal derivative from above.
    pub normal_above: C,
    /// Extrapolated tangential derivative from above.
    pub tangential_above: C,
    /// Extrapolated limit of `S g` from above minus that from below.
    pub value_jump: C,
}

impl JumpReport {
    /// `|normal_jump - 2 g| / |2 g|`.
    pub fn normal_error(&self) -> f64 {
        (self.normal_jump - 2.0 * self.density).norm() / (2.0 * self.density.norm())
    }

    /// `|tangential_jump|` relative to the tangential derivative.
    pub fn tangential_error(&self) -> f64 {
        self.tangential_jump.norm() / self.tangential_above.norm().max(self.density.norm())
    }
}

/// Evaluates `S g` off the surface along the normal through node `k` at distances
/// `h0, h0/2, h0/4` on both sides and extrapolates the differences to `h = 0`.
pub fn jump_relations(grid: &BoundaryGrid, green: &QuasiGreen, density: &[C], k: usize, h0: f64) -> Result<JumpReport> {
    let n = grid.nodes[k];
    let hs = [h0, 0.5 * h0, 0.25 * h0];
    let mut pts = Vec::new();
    for &h in &hs {
        pts.push([n.point[0] - h * n.normal[0], n.point[1] - h * n.normal[1]]);
        pts.push([n.point[0] + h * n.normal[0], n.point[1] + h * n.normal[1]]);
    }
    let f = single_layer(grid, green, density, &pts)?;
    let dn = |e: &GreenEval| n.normal[0] * e.grad[0] + n.normal[1] * e.grad[1];
    let dt = |e: &GreenEval| n.tangent[0] * e.grad[0] + n.tangent[1] * e.grad[1];
    // Richardson for an expansion in h and h^2
    let extrap = |v: [C; 3]| (8.0 * v[2] - 6.0 * v[1] + v[0]) / 3.0;
    let diff = |g: &dyn Fn(&GreenEval) -> C| [0, 1, 2].map(|i| g(&f[2 * i]) - g(&f[2 * i + 1]));
    Ok(JumpReport {
        point: n.point,
        density: density[k],
        normal_jump: extrap(diff(&dn)),
        tangential_jump: extrap(diff(&dt)),
        normal_above: extrap([0, 1, 2].map(|i| dn(&f[2 * i]))),
        tangential_above: extrap([0, 1, 2].map(|i| dt(&f[2 * i]))),
        value_jump: extrap(diff(&|e: &GreenEval| e.value)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_params;
    use crate::profile::{build_profile, ProfileSpec};

    fn cosine() -> GratingProfile {
        build_profile(&ProfileSpec::Fourier {
            a0: 0.0,
            cos: vec![0.3],
            sin: vec![0.0],
        })
        .unwrap()
    }

    fn params(phi: f64) -> IncidenceParams {
        IncidenceParams {
            omega: 2.0,
            epsilon: 1.0,
            mu: 1.0,
            lambda: -1.0,
            theta: PI / 6.0,
            phi,
            p3: C::ONE,
            q3: C::ONE,
        }
    }

    #[test]
    fn log_weights_integrate_cosines() {
        // int_0^{2pi} ln(4 sin^2(s/2)) cos(m s) ds = -2 pi / m
        let q = 32;
        let r = log_weights(q);
        for m in 1..10 {
            let s: f64 = (0..q).map(|j| r[j] * (m as f64 * TWO_PI * j as f64 / q as f64).cos()).sum();
            assert!((s + TWO_PI / m as f64).abs() < 1e-12, "{m}: {s}");
        }
        assert!(r.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn grading_map_is_monotone_and_periodic() {
        let prof = build_profile(&ProfileSpec::PiecewiseLinear {
            nodes: vec![(0.0, 0.0), (PI, 0.5), (TWO_PI, 0.0)],
        })
        .unwrap();
        let g = BoundaryGrid::new(&prof, 64, &BieOptions::default()).unwrap();
        for w in g.nodes.windows(2) {
            assert!(w[1].point[0] > w[0].point[0]);
        }
        let first = g.nodes[0].point[0];
        let last = g.nodes[63].point[0];
        assert!(last - first < TWO_PI && last - first > TWO_PI - 0.2);
        assert!(BoundaryGrid::new(&prof, 8, &BieOptions { min_panel_nodes: 6, ..Default::default() }).is_err());
    }

    /// Scattered fields equal to sources below the surface are recovered exactly.
    #[test]
    fn manufactured_point_sources() {
        let p = params(PI / 6.0);
        let d = derive_params(&p).unwrap();
        let sys = assemble_bie(&cosine(), &p, &d, 128).unwrap();
        let g = sys.green;
        let ys = [[1.0, -0.9], [4.0, -0.7]];
        let amp = [C::new(1.0, 0.5), C::new(-0.3, 0.8)];
        let [a, b, c, dd] = sys.coefficients;
        let (mut h1, mut h2) = (Vec::new(), Vec::new());
        for n in &sys.grid.nodes {
            let gu = g.eval(n.point, ys[0]).unwrap();
            let gv = g.eval(n.point, ys[1]).unwrap();
            let dn = |e: &GreenEval| n.normal[0] * e.grad[0] + n.normal[1] * e.grad[1];
            let dt = |e: &GreenEval| n.tangent[0] * e.grad[0] + n.tangent[1] * e.grad[1];
            h1.push(p.lambda * amp[0] * dn(&gu) + C::I * a * amp[0] * gu.value + dd * amp[1] * dt(&gv));
            h2.push(amp[1] * dn(&gv) + C::I * b * amp[1] * gv.value - c * amp[0] * dt(&gu));
        }
        let rhs: Vec<C> = h1.into_iter().chain(h2).collect();
        let dens = sys.solve_rhs(&rhs).unwrap();
        let spec = rayleigh_from_densities(&dens, &d, 6).unwrap();
        for e in &spec.entries {
            let o = e.order;
            let exact = |y: [f64; 2], s: C| {
                s * C::I / (4.0 * PI * o.beta_n) * (C::new(0.0, -o.alpha_n * y[0]) - C::I * o.beta_n * y[1]).exp()
            };
            assert!((e.u - exact(ys[0], amp[0])).norm() < 1e-9, "u_{}: {} vs {}", o.n, e.u, exact(ys[0], amp[0]));
            assert!((e.v - exact(ys[1], amp[1])).norm() < 1e-9, "v_{}", o.n);
        }
        let x = [[0.5, 0.6], [3.0, 0.35]];
        let f = scattered_field(&dens, &x, &d).unwrap();
        for (k, xk) in x.iter().enumerate() {
            assert!((f[k].0 - amp[0] * g.eval(*xk, ys[0]).unwrap().value).norm() < 1e-8);
            assert!((f[k].1 - amp[1] * g.eval(*xk, ys[1]).unwrap().value).norm() < 1e-8);
        }
    }

    #[test]
    fn decoupled_at_normal_plane() {
        let p = IncidenceParams { theta: 0.4, ..params(0.0) };
        let d = derive_params(&p).unwrap();
        let sys = assemble_bie(&cosine(), &p, &d, 32).unwrap();
        assert_eq!(sys.off_diagonal_norms(), (0.0, 0.0));
    }
}
