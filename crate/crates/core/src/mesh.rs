//! Triangulation of the truncated cell `{f(x1) < x2 < b, 0 < x1 < 2 pi}` with
//! quasiperiodic identification of the lateral sides.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::profile::{GratingProfile, TWO_PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    /// Smallest admissible interior angle in degrees.
    pub min_angle_deg: f64,
    pub max_dofs: usize,
    /// Number of corner refinement layers.
    pub grading_layers: usize,
    /// Size ratio between consecutive layers.
    pub grading_ratio: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions {
            min_angle_deg: 20.0,
            max_dofs: 2_000_000,
            grading_layers: 3,
            grading_ratio: 0.5,
        }
    }
}

/// An edge on the grating surface, oriented with increasing `x1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaEdge {
    pub v: [usize; 2],
    /// Unit normal pointing below the graph.
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Vertex to scalar DOF. Vertices on `x1 = 2 pi` share the DOF of their partner.
    pub dof_map: Vec<usize>,
    /// True for vertices on `x1 = 2 pi`; their basis contribution carries `exp(2 i alpha pi)`.
    pub shifted: Vec<bool>,
    pub n_dofs: usize,
    pub gamma_edges: Vec<GammaEdge>,
    /// Edges on `x2 = b`, oriented with increasing `x1`.
    pub gammab_edges: Vec<[usize; 2]>,
    /// `(left, right)` vertex pairs.
    pub periodic_pairs: Vec<(usize, usize)>,
    /// Largest element diameter.
    pub h: f64,
    pub b: f64,
}

pub fn triangulate(profile: &GratingProfile, b: f64, h_target: f64) -> Result<PeriodicMesh> {
    triangulate_with(profile, b, h_target, &MeshOptions::default())
}

pub fn triangulate_with(
    profile: &GratingProfile,
    b: f64,
    h_target: f64,
    opts: &MeshOptions,
) -> Result<PeriodicMesh> {
    if !(h_target.is_finite() && h_target > 0.0) {
        return Err(invalid("h_target", format!("must be positive, got {h_target}")));
    }
    if !(b.is_finite() && b > profile.gamma_max) {
        return Err(invalid(
            "b",
            format!(
                "truncation height {b} must exceed the profile maximum {}",
                profile.gamma_max
            ),
        ));
    }

    let bp = profile.breakpoints();
    let mut xs = vec![0.0];
    for w in bp.windows(2) {
        let len = w[1] - w[0];
        let n = ((len / h_target) - 1e-9).ceil().max(1.0) as usize;
        for i in 1..=n {
            xs.push(if i == n { w[1] } else { w[0] + len * i as f64 / n as f64 });
        }
    }
    *xs.last_mut().unwrap() = TWO_PI;
    let nx = xs.len() - 1;
    if nx < 3 {
        return Err(Error::Mesh("at least 3 cells across the period are required".into()));
    }
    let f0 = profile.f(0.0);
    let heights: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| if i == nx { f0 } else { profile.f(x) })
        .collect();
    let counts: Vec<usize> = heights
        .iter()
        .map(|&fx| (((b - fx) / h_target) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let estimate = counts.iter().map(|&n| n + 1).fold(0usize, usize::saturating_add);
    if estimate > opts.max_dofs {
        return Err(Error::Mesh(format!(
            "h_target {h_target} yields about {estimate} vertices, above the limit {}",
            opts.max_dofs
        )));
    }

    let mut b0 = Builder::default();
    let mut columns: Vec<Vec<usize>> = Vec::with_capacity(nx + 1);
    for (i, &x) in xs.iter().enumerate() {
        let (fx, ny) = (heights[i], counts[i]);
        let col = (0..=ny)
            .map(|j| {
                let y = if j == ny { b } else { fx + (b - fx) * j as f64 / ny as f64 };
                b0.push_vertex([x, y], j == 0, j == ny)
            })
            .collect();
        columns.push(col);
    }
    for j in 0..=counts[0] {
        b0.pair(columns[0][j], columns[nx][j]);
    }
    // zip neighbouring columns together, preferring the shorter diagonal
    let mut tris = Vec::new();
    for w in columns.windows(2) {
        let (l, r) = (&w[0], &w[1]);
        let (mut a, mut c) = (0, 0);
        while a + 1 < l.len() || c + 1 < r.len() {
            let up_left = if a + 1 == l.len() {
                false
            } else if c + 1 == r.len() {
                true
            } else {
                b0.dist(l[a + 1], r[c]) < b0.dist(l[a], r[c + 1])
            };
            if up_left {
                tris.push([l[a], r[c], l[a + 1]]);
                a += 1;
            } else {
                tris.push([l[a], r[c], r[c + 1]]);
                c += 1;
            }
        }
    }
    for t in tris {
        let t = b0.mark_longest(t);
        b0.push_triangle(t);
    }

    if !profile.corners.is_empty() && opts.grading_layers > 0 {
        let corners: Vec<[f64; 2]> = profile.corners.iter().map(|&c| [c, profile.f(c)]).collect();
        let mut radius = 2.0 * h_target;
        for _ in 0..opts.grading_layers {
            for _ in 0..2 {
                b0.refine_near(&corners, radius);
            }
            radius *= opts.grading_ratio;
        }
    }

    b0.finish(b, opts)
}

#[derive(Default)]
struct Builder {
    verts: Vec<[f64; 2]>,
    on_gamma: Vec<bool>,
    on_top: Vec<bool>,
    /// Canonical vertex for edge identification (left partner for right-side vertices).
    canon: Vec<usize>,
    right_of: HashMap<usize, usize>,
    tris: Vec<[usize; 3]>,
    active: Vec<bool>,
    edges: HashMap<(usize, usize), Vec<usize>>,
    mids: HashMap<(usize, usize), usize>,
}

fn sorted(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Builder {
    fn push_vertex(&mut self, p: [f64; 2], gamma: bool, top: bool) -> usize {
        let id = self.verts.len();
        self.verts.push(p);
        self.on_gamma.push(gamma);
        self.on_top.push(top);
        self.canon.push(id);
        id
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.verts[a], self.verts[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }

    /// Rotates `t` so that its longest edge comes first; ties are broken by the
    /// identified vertex pair so that both sides of an edge agree.
    fn mark_longest(&self, t: [usize; 3]) -> [usize; 3] {
        let key = |k: usize| (self.dist(t[k], t[(k + 1) % 3]), self.ekey(t[k], t[(k + 1) % 3]));
        let best = (0..3)
            .max_by(|&i, &j| {
                let (a, b) = (key(i), key(j));
                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
            })
            .unwrap();
        [t[best], t[(best + 1) % 3], t[(best + 2) % 3]]
    }

    fn pair(&mut self, left: usize, right: usize) {
        self.canon[right] = left;
        self.right_of.insert(left, right);
    }

    fn ekey(&self, a: usize, b: usize) -> (usize, usize) {
        sorted(self.canon[a], self.canon[b])
    }

    fn push_triangle(&mut self, t: [usize; 3]) -> usize {
        let id = self.tris.len();
        self.tris.push(t);
        self.active.push(true);
        for k in 0..3 {
            let e = self.ekey(t[k], t[(k + 1) % 3]);
            self.edges.entry(e).or_default().push(id);
        }
        id
    }

    fn retire(&mut self, t: usize) {
        self.active[t] = false;
        let tri = self.tris[t];
        for k in 0..3 {
            let e = self.ekey(tri[k], tri[(k + 1) % 3]);
            if let Some(list) = self.edges.get_mut(&e) {
                list.retain(|&x| x != t);
            }
        }
    }

    fn side(&self, v: usize) -> i8 {
        let x = self.verts[v][0];
        if x == 0.0 {
            -1
        } else if x == TWO_PI {
            1
        } else {
            0
        }
    }

    fn partner(&self, v: usize) -> usize {
        match self.side(v) {
            1 => self.canon[v],
            -1 => self.right_of[&v],
            _ => v,
        }
    }

    fn midpoint(&mut self, a: usize, b: usize) -> usize {
        if let Some(&m) = self.mids.get(&sorted(a, b)) {
            return m;
        }
        let (pa, pb) = (self.verts[a], self.verts[b]);
        let p = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        let gamma = self.on_gamma[a] && self.on_gamma[b];
        let top = self.on_top[a] && self.on_top[b];
        let m = self.push_vertex(p, gamma, top);
        self.mids.insert(sorted(a, b), m);
        let (sa, sb) = (self.side(a), self.side(b));
        if sa != 0 && sa == sb {
            let (qa, qb) = (self.partner(a), self.partner(b));
            let (qa_p, qb_p) = (self.verts[qa], self.verts[qb]);
            let q = [0.5 * (qa_p[0] + qb_p[0]), 0.5 * (qa_p[1] + qb_p[1])];
            let m2 = self.push_vertex(q, gamma, top);
            self.mids.insert(sorted(qa, qb), m2);
            if sa < 0 {
                self.pair(m, m2);
            } else {
                self.pair(m2, m);
            }
        }
        m
    }

    fn neighbour(&self, t: usize) -> Option<usize> {
        let [a, b, _] = self.tris[t];
        self.edges[&self.ekey(a, b)].iter().copied().find(|&x| x != t)
    }

    fn split(&mut self, t: usize) {
        let [a, b, c] = self.tris[t];
        let m = self.midpoint(a, b);
        self.retire(t);
        self.push_triangle([c, a, m]);
        self.push_triangle([b, c, m]);
    }

    /// Conforming newest-vertex bisection.
    fn bisect(&mut self, t: usize) {
        if !self.active[t] {
            return;
        }
        loop {
            let [a, b, _] = self.tris[t];
            let e = self.ekey(a, b);
            match self.neighbour(t) {
                None => {
                    self.split(t);
                    return;
                }
                Some(n) => {
                    let [na, nb, _] = self.tris[n];
                    if self.ekey(na, nb) == e {
                        self.split(t);
                        self.split(n);
                        return;
                    }
                    self.bisect(n);
                }
            }
        }
    }

    fn refine_near(&mut self, corners: &[[f64; 2]], radius: f64) {
        let dist = |p: [f64; 2], c: [f64; 2]| {
            let dx = (p[0] - c[0]).abs();
            let dx = dx.min(TWO_PI - dx);
            (dx * dx + (p[1] - c[1]).powi(2)).sqrt()
        };
        let marked: Vec<usize> = (0..self.tris.len())
            .filter(|&t| {
                self.active[t]
                    && self.tris[t].iter().any(|&v| {
                        corners.iter().any(|&c| dist(self.verts[v], c) < radius)
                    })
            })
            .collect();
        for t in marked {
            self.bisect(t);
        }
    }

    fn finish(self, b: f64, opts: &MeshOptions) -> Result<PeriodicMesh> {
        // compact the vertex and triangle lists
        let triangles: Vec<[usize; 3]> = self
            .tris
            .iter()
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|(t, _)| *t)
            .collect();
        let vertices = self.verts;
        let nv = vertices.len();

        for t in &triangles {
            if signed_area(&vertices, t) <= 0.0 {
                return Err(Error::Mesh("degenerate or inverted triangle".into()));
            }
        }

        let mut periodic_pairs: Vec<(usize, usize)> =
            self.right_of.iter().map(|(&l, &r)| (l, r)).collect();
        periodic_pairs.sort_unstable_by(|a, b| vertices[a.0][1].total_cmp(&vertices[b.0][1]));
        for &(l, r) in &periodic_pairs {
            let (yl, yr) = (vertices[l][1], vertices[r][1]);
            if (yl - yr).abs() > 1e-12 * (1.0 + yl.abs()) {
                return Err(Error::Mesh(format!("periodic partners differ in height: {yl} vs {yr}")));
            }
        }

        let shifted: Vec<bool> = vertices.iter().map(|p| p[0] == TWO_PI).collect();
        let mut order: Vec<usize> = (0..nv).filter(|&v| !shifted[v]).collect();
        order.sort_by(|&i, &j| {
            vertices[i][0]
                .total_cmp(&vertices[j][0])
                .then(vertices[i][1].total_cmp(&vertices[j][1]))
        });
        let mut dof_map = vec![usize::MAX; nv];
        for (d, &v) in order.iter().enumerate() {
            dof_map[v] = d;
        }
        for v in 0..nv {
            if shifted[v] {
                dof_map[v] = dof_map[self.canon[v]];
            }
        }
        let n_dofs = order.len();
        if 2 * n_dofs > opts.max_dofs {
            return Err(Error::Mesh(format!(
                "{} unknowns exceed the limit {}",
                2 * n_dofs,
                opts.max_dofs
            )));
        }

        // identified edge incidence
        let mut count: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
        for t in &triangles {
            for k in 0..3 {
                let (a, c) = (t[k], t[(k + 1) % 3]);
                let key = sorted(dof_map[a], dof_map[c]);
                count.entry(key).or_insert((0, [a, c])).0 += 1;
            }
        }
        let euler = n_dofs as i64 - count.len() as i64 + triangles.len() as i64;
        if euler != 0 {
            return Err(Error::Mesh(format!("identified strip has Euler characteristic {euler}")));
        }
        let mut gamma_edges = Vec::new();
        let mut gammab_edges = Vec::new();
        for &(c, [a, e]) in count.values() {
            if c > 2 {
                return Err(Error::Mesh("non-manifold edge".into()));
            }
            if c != 1 {
                continue;
            }
            let (a, e) = if vertices[a][0] <= vertices[e][0] { (a, e) } else { (e, a) };
            if self.on_gamma[a] && self.on_gamma[e] {
                let (pa, pe) = (vertices[a], vertices[e]);
                let d = [pe[0] - pa[0], pe[1] - pa[1]];
                let len = d[0].hypot(d[1]);
                let normal = [d[1] / len, -d[0] / len];
                gamma_edges.push(GammaEdge {
                    v: [a, e],
                    normal,
                    tangent: [-normal[1], normal[0]],
                    length: len,
                });
            } else if self.on_top[a] && self.on_top[e] {
                gammab_edges.push([a, e]);
            } else {
                return Err(Error::Mesh("unexpected boundary edge".into()));
            }
        }
        gamma_edges.sort_by(|p, q| vertices[p.v[0]][0].total_cmp(&vertices[q.v[0]][0]));
        gammab_edges.sort_by(|p, q| vertices[p[0]][0].total_cmp(&vertices[q[0]][0]));

        let floor = opts.min_angle_deg * PI / 180.0;
        let mut h = 0.0f64;
        for t in &triangles {
            let (ang, diam) = angle_and_diameter(&vertices, t);
            if ang < floor - 1e-12 {
                return Err(Error::Mesh(format!(
                    "minimum angle {:.2} deg below the floor {:.2} deg",
                    ang * 180.0 / PI,
                    opts.min_angle_deg
                )));
            }
            h = h.max(diam);
        }

        Ok(PeriodicMesh {
            vertices,
            triangles,
            dof_map,
            shifted,
            n_dofs,
            gamma_edges,
            gammab_edges,
            periodic_pairs,
            h,
            b,
        })
    }
}

fn signed_area(v: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn angle_and_diameter(v: &[[f64; 2]], t: &[usize; 3]) -> (f64, f64) {
    let p = [v[t[0]], v[t[1]], v[t[2]]];
    let mut min_angle = PI;
    let mut diam = 0.0f64;
    for k in 0..3 {
        let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
        let u = [b[0] - a[0], b[1] - a[1]];
        let w = [c[0] - a[0], c[1] - a[1]];
        let cross = u[0] * w[1] - u[1] * w[0];
        let dot = u[0] * w[0] + u[1] * w[1];
        min_angle = min_angle.min(cross.abs().atan2(dot));
        diam = diam.max(u[0].hypot(u[1]));
    }
    (min_angle, diam)
}

/// Factor `exp(2 i alpha pi)` attached to each identified `(left, right)` pair.
pub fn quasiperiodic_phase(mesh: &PeriodicMesh, alpha: f64) -> Vec<(usize, usize, Complex64)> {
    let f = Complex64::from_polar(1.0, 2.0 * PI * alpha);
    mesh.periodic_pairs.iter().map(|&(l, r)| (l, r, f)).collect()
}

impl PeriodicMesh {
    /// Per-vertex basis factor: 1, or `exp(2 i alpha pi)` on `x1 = 2 pi`.
    pub fn vertex_phases(&self, alpha: f64) -> Vec<Complex64> {
        let f = Complex64::from_polar(1.0, 2.0 * PI * alpha);
        self.shifted
            .iter()
            .map(|&s| if s { f } else { Complex64::ONE })
            .collect()
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn min_angle_deg(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| angle_and_diameter(&self.vertices, t).0)
            .fold(PI, f64::min)
            * 180.0
            / PI
    }

    /// Number of identified edges.
    pub fn edge_count(&self) -> usize {
        let mut set = std::collections::HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                set.insert(sorted(self.dof_map[t[k]], self.dof_map[t[(k + 1) % 3]]));
            }
        }
        set.len()
    }

    pub fn gamma_length(&self) -> f64 {
        self.gamma_edges.iter().map(|e| e.length).sum()
    }

    /// Writes the plain-text export format.
    pub fn write_export<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "VERTICES {}", self.vertices.len())?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(w, "{i} {:.17e} {:.17e}", p[0], p[1])?;
        }
        writeln!(w, "TRIANGLES {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "GAMMA_EDGES {}", self.gamma_edges.len())?;
        for e in &self.gamma_edges {
            writeln!(
                w,
                "{} {} {:.17e} {:.17e}",
                e.v[0], e.v[1], e.normal[0], e.normal[1]
            )?;
        }
        writeln!(w, "GAMMAB_EDGES {}", self.gammab_edges.len())?;
        for e in &self.gammab_edges {
            writeln!(w, "{} {}", e[0], e[1])?;
        }
        writeln!(w, "PERIODIC_PAIRS {}", self.periodic_pairs.len())?;
        for (l, r) in &self.periodic_pairs {
            writeln!(w, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn locator(&self) -> PointLocator<'_> {
        PointLocator::new(self)
    }
}

/// Bucket grid for point-in-triangle queries.
pub struct PointLocator<'a> {
    mesh: &'a PeriodicMesh,
    origin: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    fn new(mesh: &'a PeriodicMesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &mesh.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let n = (mesh.triangles.len() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [n, n];
        let cell = [
            ((hi[0] - lo[0]) / n as f64).max(1e-300),
            ((hi[1] - lo[1]) / n as f64).max(1e-300),
        ];
        let mut buckets = vec![Vec::new(); n * n];
        let clamp = |v: f64, k: usize| ((v - lo[k]) / cell[k]).floor().clamp(0.0, (n - 1) as f64) as usize;
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let xs = t.map(|v| mesh.vertices[v][0]);
            let ys = t.map(|v| mesh.vertices[v][1]);
            let (x0, x1) = (clamp(xs.iter().cloned().fold(f64::INFINITY, f64::min), 0), clamp(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 0));
            let (y0, y1) = (clamp(ys.iter().cloned().fold(f64::INFINITY, f64::min), 1), clamp(ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1));
            for i in x0..=x1 {
                for j in y0..=y1 {
                    buckets[i * n + j].push(ti);
                }
            }
        }
        PointLocator {
            mesh,
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    /// Triangle containing `p` and its barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let idx = |k: usize| {
            let r = ((p[k] - self.origin[k]) / self.cell[k]).floor();
            if r < -1.0 || r > self.dims[k] as f64 {
                None
            } else {
                Some(r.clamp(0.0, (self.dims[k] - 1) as f64) as usize)
            }
        };
        let (i, j) = (idx(0)?, idx(1)?);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[i * self.dims[1] + j] {
            let l = barycentric(&self.mesh.vertices, &self.mesh.triangles[t], p);
            let m = l[0].min(l[1]).min(l[2]);
            if best.as_ref().is_none_or(|b| m > b.2) {
                best = Some((t, l, m));
            }
        }
        match best {
            Some((t, l, m)) if m > -1e-9 => Some((t, l)),
            _ => None,
        }
    }
}

pub fn barycentric(v: &[[f64; 2]], t: &[usize; 3], p: [f64; 2]) -> [f64; 3] {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}
