//! Periodic grating profiles `x2 = f(x1)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// User-facing description of a profile.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    Flat {
        height: f64,
    },
    /// `f(x) = a0 + sum_k cos[k-1] cos(k x) + sin[k-1] sin(k x)`.
    Fourier {
        a0: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// Node list spanning `[0, 2 pi]` with equal end heights.
    PiecewiseLinear {
        nodes: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    SmoothGraph,
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Fourier {
        a0: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    Linear {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

/// A validated 2 pi-periodic profile.
#[derive(Debug, Clone, PartialEq)]
pub struct GratingProfile {
    shape: Shape,
    pub kind: ProfileKind,
    /// `x1` positions in `[0, 2 pi)` where `f'` jumps.
    pub corners: Vec<f64>,
    pub gamma_max: f64,
    pub gamma_min: f64,
}

pub fn build_profile(spec: &ProfileSpec) -> Result<GratingProfile> {
    match spec {
        ProfileSpec::Flat { height } => {
            if !height.is_finite() {
                return Err(Error::InvalidProfile("flat height must be finite".into()));
            }
            Ok(fourier(*height, vec![], vec![]))
        }
        ProfileSpec::Fourier { a0, cos, sin } => {
            if !a0.is_finite() || cos.iter().chain(sin.iter()).any(|c| !c.is_finite()) {
                return Err(Error::InvalidProfile("Fourier coefficients must be finite".into()));
            }
            Ok(fourier(*a0, cos.clone(), sin.clone()))
        }
        ProfileSpec::PiecewiseLinear { nodes } => piecewise_linear(nodes),
    }
}

fn fourier(a0: f64, mut cos: Vec<f64>, mut sin: Vec<f64>) -> GratingProfile {
    let m = cos.len().max(sin.len());
    cos.resize(m, 0.0);
    sin.resize(m, 0.0);
    let mut p = GratingProfile {
        shape: Shape::Fourier { a0, cos, sin },
        kind: ProfileKind::SmoothGraph,
        corners: vec![],
        gamma_max: a0,
        gamma_min: a0,
    };
    if !p.is_flat() {
        p.gamma_max = p.extremum(1.0);
        p.gamma_min = p.extremum(-1.0);
    }
    p
}

fn piecewise_linear(nodes: &[(f64, f64)]) -> Result<GratingProfile> {
    if nodes.len() < 2 {
        return Err(Error::InvalidProfile(
            "piecewise-linear profile needs at least 2 nodes".into(),
        ));
    }
    if nodes.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidProfile("node coordinates must be finite".into()));
    }
    if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidProfile("node x1 values must be strictly increasing".into()));
    }
    let first = nodes[0];
    let last = nodes[nodes.len() - 1];
    if first.0.abs() > 1e-9 || (last.0 - TWO_PI).abs() > 1e-9 {
        return Err(Error::InvalidProfile(
            "nodes must span exactly one period [0, 2 pi]".into(),
        ));
    }
    if (first.1 - last.1).abs() > 1e-12 * (1.0 + first.1.abs()) {
        return Err(Error::InvalidProfile(
            "non-periodic node list: first and last heights differ".into(),
        ));
    }
    let mut xs: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let mut ys: Vec<f64> = nodes.iter().map(|n| n.1).collect();
    xs[0] = 0.0;
    *xs.last_mut().unwrap() = TWO_PI;
    *ys.last_mut().unwrap() = ys[0];

    let slopes: Vec<f64> = (0..xs.len() - 1)
        .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
        .collect();
    let scale = 1.0 + slopes.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    let kink = |a: f64, b: f64| (a - b).abs() > 1e-12 * scale;
    let mut corners = Vec::new();
    if kink(slopes[0], slopes[slopes.len() - 1]) {
        corners.push(0.0);
    }
    for i in 1..xs.len() - 1 {
        if kink(slopes[i - 1], slopes[i]) {
            corners.push(xs[i]);
        }
    }
    let gamma_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gamma_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(GratingProfile {
        shape: Shape::Linear { xs, ys },
        kind: ProfileKind::PiecewiseLinear,
        corners,
        gamma_max,
        gamma_min,
    })
}

fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

impl GratingProfile {
    /// Height of a flat profile, `None` otherwise.
    pub fn flat_height(&self) -> Option<f64> {
        match &self.shape {
            Shape::Fourier { a0, cos, sin } if cos.iter().chain(sin).all(|&c| c == 0.0) => {
                Some(*a0)
            }
            _ => None,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.flat_height().is_some()
    }

    pub fn f(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Fourier { a0, cos, sin } => {
                let mut s = *a0;
                for (k, (c, sn)) in cos.iter().zip(sin).enumerate() {
                    let (sk, ck) = (((k + 1) as f64) * x).sin_cos();
                    s += c * ck + sn * sk;
                }
                s
            }
            Shape::Linear { xs, ys } => {
                let x = wrap(x);
                let i = segment(xs, x);
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + t * (ys[i + 1] - ys[i])
            }
        }
    }

    /// Derivative; on a piecewise-linear profile the slope of the segment to the right of `x`.
    pub fn df(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Fourier { cos, sin, .. } => {
                let mut s = 0.0;
                for (k, (c, sn)) in cos.iter().zip(sin).enumerate() {
                    let kf = (k + 1) as f64;
                    let (sk, ck) = (kf * x).sin_cos();
                    s += kf * (-c * sk + sn * ck);
                }
                s
            }
            Shape::Linear { xs, ys } => {
                let i = segment(xs, wrap(x));
                (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
            }
        }
    }

    pub fn d2f(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Fourier { cos, sin, .. } => {
                let mut s = 0.0;
                for (k, (c, sn)) in cos.iter().zip(sin).enumerate() {
                    let kf = (k + 1) as f64;
                    let (sk, ck) = (kf * x).sin_cos();
                    s -= kf * kf * (c * ck + sn * sk);
                }
                s
            }
            Shape::Linear { .. } => 0.0,
        }
    }

    /// Node abscissae of a piecewise-linear profile (including 0 and 2 pi).
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Linear { xs, .. } => xs.clone(),
            Shape::Fourier { .. } => vec![0.0, TWO_PI],
        }
    }

    pub fn point(&self, x: f64) -> [f64; 2] {
        [x, self.f(x)]
    }

    /// Unit normal pointing out of the region above the graph.
    pub fn normal(&self, x: f64) -> [f64; 2] {
        let s = self.df(x);
        let n = (1.0 + s * s).sqrt();
        [s / n, -1.0 / n]
    }

    /// Unit tangent `(-nu_2, nu_1)`.
    pub fn tangent(&self, x: f64) -> [f64; 2] {
        let nu = self.normal(x);
        [-nu[1], nu[0]]
    }

    /// Arc length over one period.
    pub fn arc_length(&self) -> f64 {
        match &self.shape {
            Shape::Linear { xs, ys } => xs
                .windows(2)
                .zip(ys.windows(2))
                .map(|(x, y)| ((x[1] - x[0]).powi(2) + (y[1] - y[0]).powi(2)).sqrt())
                .sum(),
            Shape::Fourier { .. } => {
                // Periodic integrand: the trapezoid rule converges geometrically.
                let m = 4096;
                let h = TWO_PI / m as f64;
                (0..m)
                    .map(|i| {
                        let s = self.df(i as f64 * h);
                        (1.0 + s * s).sqrt()
                    })
                    .sum::<f64>()
                    * h
            }
        }
    }

    // value of f where sign * f is largest
    fn extremum(&self, sign: f64) -> f64 {
        let m = 4096;
        let h = TWO_PI / m as f64;
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..m {
            let x = i as f64 * h;
            let v = sign * self.f(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        let mut x = best.0;
        for _ in 0..30 {
            let d2 = self.d2f(x);
            if d2 == 0.0 {
                break;
            }
            let step = self.df(x) / d2;
            if !step.is_finite() || step.abs() > h {
                break;
            }
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        (sign * self.f(x)).max(best.1) * sign
    }
}

fn segment(xs: &[f64], x: f64) -> usize {
    match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i.saturating_sub(1).min(xs.len() - 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_profile() {
        let p = build_profile(&ProfileSpec::Flat { height: 0.0 }).unwrap();
        assert_eq!(p.gamma_max, 0.0);
        assert!(p.corners.is_empty());
        assert_eq!(p.normal(1.0), [0.0, -1.0]);
        assert!((p.arc_length() - TWO_PI).abs() < 1e-14);
    }

    #[test]
    fn triangle_wave() {
        let p = build_profile(&ProfileSpec::PiecewiseLinear {
            nodes: vec![(0.0, 0.0), (PI, 0.5), (TWO_PI, 0.0)],
        })
        .unwrap();
        assert_eq!(p.kind, ProfileKind::PiecewiseLinear);
        assert_eq!(p.corners, vec![0.0, PI]);
        assert_eq!(p.gamma_max, 0.5);
        assert!((p.f(PI / 2.0) - 0.25).abs() < 1e-15);
        assert!((p.f(TWO_PI + PI / 2.0) - 0.25).abs() < 1e-15);
        assert!((p.df(4.0) + 0.5 / PI).abs() < 1e-15);
        let expected = 2.0 * (PI * PI + 0.25f64).sqrt();
        assert!((p.arc_length() - expected).abs() < 1e-14);
    }

    #[test]
    fn cosine_profile() {
        let p = build_profile(&ProfileSpec::Fourier {
            a0: 0.0,
            cos: vec![0.3],
            sin: vec![],
        })
        .unwrap();
        assert!((p.f(0.0) - 0.3).abs() < 1e-15);
        assert!((p.f(TWO_PI) - 0.3).abs() < 1e-15);
        assert!((p.gamma_max - 0.3).abs() < 1e-15);
        assert!((p.gamma_min + 0.3).abs() < 1e-15);
        let nu = p.normal(1.0);
        let tau = p.tangent(1.0);
        assert!((nu[0] * tau[0] + nu[1] * tau[1]).abs() < 1e-15);
        assert!(tau[0] > 0.0 && nu[1] < 0.0);
    }

    #[test]
    fn rejects_bad_node_lists() {
        let bad = |nodes: Vec<(f64, f64)>| {
            build_profile(&ProfileSpec::PiecewiseLinear { nodes }).unwrap_err()
        };
        assert!(matches!(bad(vec![(0.0, 0.0)]), Error::InvalidProfile(_)));
        assert!(matches!(
            bad(vec![(0.0, 0.0), (PI, 0.5), (TWO_PI, 0.1)]),
            Error::InvalidProfile(m) if m.contains("non-periodic")
        ));
        assert!(matches!(
            bad(vec![(0.0, 0.0), (PI, 0.5), (PI, 0.2), (TWO_PI, 0.0)]),
            Error::InvalidProfile(m) if m.contains("increasing")
        ));
    }
}
