//! Physical inputs, derived wave numbers and Rayleigh-order bookkeeping.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Relative threshold below which an order is classified as grazing.
pub const CUTOFF_RELATIVE: f64 = 1e-10;

/// Default rejection threshold for [`wood_distance`] used by the solvers.
pub const DEFAULT_WOOD_TOLERANCE: f64 = 1e-6;

/// Physical description of the incident wave and the grating material.
///
/// Angles are in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidenceParams {
    pub omega: f64,
    pub epsilon: f64,
    pub mu: f64,
    /// Impedance coefficient, strictly negative.
    pub lambda: f64,
    pub theta: f64,
    pub phi: f64,
    /// Amplitude of the longitudinal electric component.
    pub p3: Complex64,
    /// Amplitude of the longitudinal magnetic component.
    pub q3: Complex64,
}

impl IncidenceParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be a positive finite number, got {x}")))
            }
        };
        positive("omega", self.omega)?;
        positive("epsilon", self.epsilon)?;
        positive("mu", self.mu)?;
        if !(self.lambda.is_finite() && self.lambda < 0.0) {
            return Err(invalid(
                "lambda",
                format!("impedance coefficient must satisfy lambda < 0, got {}", self.lambda),
            ));
        }
        if !(self.theta.is_finite() && self.theta.abs() < FRAC_PI_2) {
            return Err(invalid("theta", format!("|theta| must be < pi/2, got {}", self.theta)));
        }
        if !(self.phi.is_finite() && self.phi.abs() < FRAC_PI_2) {
            return Err(invalid("phi", format!("|phi| must be < pi/2, got {}", self.phi)));
        }
        let finite = |z: Complex64| z.re.is_finite() && z.im.is_finite();
        if !finite(self.p3) {
            return Err(invalid("p3", "amplitude must be finite"));
        }
        if !finite(self.q3) {
            return Err(invalid("q3", "amplitude must be finite"));
        }
        Ok(())
    }

    pub fn with_amplitudes(mut self, p3: Complex64, q3: Complex64) -> Self {
        self.p3 = p3;
        self.q3 = q3;
        self
    }
}

/// Wave numbers derived from [`IncidenceParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa2: f64,
    pub kappa: f64,
}

pub fn derive_params(p: &IncidenceParams) -> Result<DerivedParams> {
    p.validate()?;
    let k = p.omega * (p.epsilon * p.mu).sqrt();
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let alpha = k * st * cp;
    let beta = k * ct * cp;
    let gamma = k * sp;
    // k^2 - gamma^2 = k^2 cos^2(phi), written without cancellation.
    let kappa = k * cp;
    let kappa2 = kappa * kappa;
    if !(kappa2 > 0.0) {
        return Err(invalid("phi", "reduced wavenumber kappa^2 must be positive"));
    }
    Ok(DerivedParams {
        k,
        alpha,
        beta,
        gamma,
        kappa2,
        kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderKind {
    Propagating,
    Evanescent,
    Cutoff,
}

impl OrderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrderKind::Propagating => "propagating",
            OrderKind::Evanescent => "evanescent",
            OrderKind::Cutoff => "cutoff",
        }
    }

    /// Orders with real exponent carry power; cutoff orders count as propagating.
    pub fn is_radiating(&self) -> bool {
        !matches!(self, OrderKind::Evanescent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighOrder {
    pub n: i64,
    pub alpha_n: f64,
    pub beta_n: Complex64,
    pub kind: OrderKind,
}

/// Exponent `beta_n` of the order `n`, with the outgoing branch of the square root.
pub fn rayleigh_exponent(n: i64, d: &DerivedParams) -> RayleighOrder {
    let alpha_n = n as f64 + d.alpha;
    let a = alpha_n.abs();
    let (beta_n, mut kind) = if a <= d.kappa {
        let b = ((d.kappa - a) * (d.kappa + a)).sqrt();
        (Complex64::new(b, 0.0), OrderKind::Propagating)
    } else {
        let b = ((a - d.kappa) * (a + d.kappa)).sqrt();
        (Complex64::new(0.0, b), OrderKind::Evanescent)
    };
    if beta_n.norm() < CUTOFF_RELATIVE * d.kappa {
        kind = OrderKind::Cutoff;
    }
    RayleighOrder {
        n,
        alpha_n,
        beta_n,
        kind,
    }
}

/// Complex Rayleigh coefficients of one order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub order: RayleighOrder,
    pub u: Complex64,
    pub v: Complex64,
}

/// Coefficients `u_n, v_n` for `n = -N..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayleighSpectrum {
    pub truncation: usize,
    pub entries: Vec<SpectrumEntry>,
}

impl RayleighSpectrum {
    pub fn from_fn(
        d: &DerivedParams,
        truncation: usize,
        mut coeff: impl FnMut(&RayleighOrder) -> (Complex64, Complex64),
    ) -> Self {
        let nn = truncation as i64;
        let entries = (-nn..=nn)
            .map(|n| {
                let order = rayleigh_exponent(n, d);
                let (u, v) = coeff(&order);
                SpectrumEntry { order, u, v }
            })
            .collect();
        RayleighSpectrum {
            truncation,
            entries,
        }
    }

    pub fn zeros(d: &DerivedParams, truncation: usize) -> Self {
        Self::from_fn(d, truncation, |_| (Complex64::ZERO, Complex64::ZERO))
    }

    pub fn get(&self, n: i64) -> Option<&SpectrumEntry> {
        let idx = n + self.truncation as i64;
        if idx < 0 {
            return None;
        }
        self.entries.get(idx as usize)
    }

    pub fn propagating(&self) -> impl Iterator<Item = &SpectrumEntry> {
        self.entries.iter().filter(|e| e.order.kind.is_radiating())
    }

    /// Power carried upward: `(2 pi omega / kappa^2) sum beta_n (eps |u_n|^2 + mu |v_n|^2)`.
    pub fn radiated_power(&self, p: &IncidenceParams, d: &DerivedParams) -> f64 {
        let s: f64 = self
            .propagating()
            .map(|e| e.order.beta_n.re * (p.epsilon * e.u.norm_sqr() + p.mu * e.v.norm_sqr()))
            .sum();
        2.0 * std::f64::consts::PI * p.omega / d.kappa2 * s
    }

    /// Diffraction efficiencies of the propagating orders.
    pub fn efficiencies(&self, p: &IncidenceParams, d: &DerivedParams) -> Vec<(i64, f64)> {
        let incident = d.beta * (p.epsilon * p.p3.norm_sqr() + p.mu * p.q3.norm_sqr());
        self.propagating()
            .map(|e| {
                let flux =
                    e.order.beta_n.re * (p.epsilon * e.u.norm_sqr() + p.mu * e.v.norm_sqr());
                let eta = if incident > 0.0 { flux / incident } else { 0.0 };
                (e.order.n, eta)
            })
            .collect()
    }

    /// Largest coefficient difference over the propagating orders of `self`.
    pub fn max_propagating_difference(&self, other: &RayleighSpectrum) -> f64 {
        self.propagating()
            .map(|e| match other.get(e.order.n) {
                Some(o) => (e.u - o.u).norm().max((e.v - o.v).norm()),
                None => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

// Boundary comparisons are made with a relative slack so that orders sitting
// exactly on |alpha_n| = kappa are classified the same way by both forms.
const SET_SLACK: f64 = 1e-12;

/// Orders with `kappa <= |alpha_n| < k`.
pub fn anomalous_set(d: &DerivedParams, _p: &IncidenceParams) -> Vec<i64> {
    let tol = SET_SLACK * d.k;
    let nmax = d.k.ceil() as i64 + 1 + d.alpha.abs().ceil() as i64;
    (-nmax..=nmax)
        .filter(|&n| {
            let a = (n as f64 + d.alpha).abs();
            d.kappa <= a + tol && a < d.k - tol
        })
        .collect()
}

/// The same index set written as two integer intervals in terms of `k`, `theta`, `phi`.
pub fn anomalous_set_intervals(d: &DerivedParams, p: &IncidenceParams) -> Vec<i64> {
    let (st, cp) = (p.theta.sin(), p.phi.cos());
    let k = d.k;
    let tol = SET_SLACK * k;
    let lo1 = -k * (1.0 + st * cp) + tol;
    let hi1 = -k * cp * (1.0 + st) + tol;
    let lo2 = k * cp * (1.0 - st) - tol;
    let hi2 = k * (1.0 - st * cp) - tol;
    let mut out = Vec::new();
    let mut n = lo1.floor() as i64;
    while (n as f64) <= hi1 {
        if (n as f64) > lo1 {
            out.push(n);
        }
        n += 1;
    }
    let mut n = lo2.ceil() as i64;
    while (n as f64) < hi2 {
        if (n as f64) >= lo2 && !out.contains(&n) {
            out.push(n);
        }
        n += 1;
    }
    out.sort_unstable();
    out
}

/// `min_{|n| <= N} ||alpha_n| - kappa|`.
pub fn wood_distance(d: &DerivedParams, truncation: usize) -> f64 {
    nearest_wood_order(d, truncation).1
}

/// The order attaining [`wood_distance`] together with the distance.
pub fn nearest_wood_order(d: &DerivedParams, truncation: usize) -> (i64, f64) {
    let nn = truncation as i64;
    let mut best = (0, f64::INFINITY);
    for n in -nn..=nn {
        let dist = ((n as f64 + d.alpha).abs() - d.kappa).abs();
        if dist < best.1 {
            best = (n, dist);
        }
    }
    best
}

/// Rejects configurations closer than `tolerance` to a Wood anomaly.
pub fn check_wood(d: &DerivedParams, truncation: usize, tolerance: f64) -> Result<()> {
    let (order, distance) = nearest_wood_order(d, truncation);
    if distance < tolerance {
        return Err(Error::WoodAnomaly {
            order,
            distance,
            tolerance,
        });
    }
    Ok(())
}

/// Longitudinal amplitudes `(p3, q3)` from a full polarization vector.
///
/// `q = (omega mu)^{-1} k x p` with `k = (alpha, -beta, gamma)`.
pub fn polarization_from_vector(
    p_vec: [Complex64; 3],
    d: &DerivedParams,
    omega: f64,
    mu: f64,
) -> Result<(Complex64, Complex64)> {
    let kv = [d.alpha, -d.beta, d.gamma];
    let dot = p_vec[0] * kv[0] + p_vec[1] * kv[1] + p_vec[2] * kv[2];
    let pnorm = p_vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if dot.norm() > 1e-10 * pnorm * d.k {
        return Err(invalid(
            "p_vector",
            format!(
                "polarization must be orthogonal to the wave vector (|p.k| = {:.3e})",
                dot.norm()
            ),
        ));
    }
    let q3 = (p_vec[1] * kv[0] - p_vec[0] * kv[1]) / (omega * mu);
    Ok((p_vec[2], q3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(omega: f64, eps: f64, mu: f64, theta: f64, phi: f64) -> IncidenceParams {
        IncidenceParams {
            omega,
            epsilon: eps,
            mu,
            lambda: -1.0,
            theta,
            phi,
            p3: Complex64::ONE,
            q3: Complex64::ZERO,
        }
    }

    #[test]
    fn normal_incidence() {
        let d = derive_params(&params(1.0, 1.0, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!((d.k, d.alpha, d.beta, d.gamma, d.kappa), (1.0, 0.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn conical_substitution() {
        let d = derive_params(&params(1.0, 1.0, 1.0, 0.0, PI / 6.0)).unwrap();
        assert!((d.gamma - 0.5).abs() < 1e-15);
        assert!((d.kappa2 - 0.75).abs() < 1e-15);
        let d = derive_params(&params(2.0, 1.0, 4.0, PI / 6.0, PI / 3.0)).unwrap();
        assert!((d.k - 4.0).abs() < 1e-15);
        assert!((d.alpha - 1.0).abs() < 1e-14);
        assert!((d.gamma - 2.0 * 3f64.sqrt()).abs() < 1e-14);
        assert!((d.kappa2 - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut p = params(1.0, 1.0, 1.0, 0.0, 0.0);
        p.lambda = 0.5;
        assert!(matches!(
            derive_params(&p),
            Err(Error::InvalidParameter { field: "lambda", .. })
        ));
        p.lambda = 0.0;
        assert!(derive_params(&p).is_err());
        let p = params(1.0, 1.0, 1.0, PI / 2.0, 0.0);
        assert!(matches!(
            derive_params(&p),
            Err(Error::InvalidParameter { field: "theta", .. })
        ));
        let p = params(1.0, 1.0, 1.0, 0.0, -PI / 2.0);
        assert!(matches!(
            derive_params(&p),
            Err(Error::InvalidParameter { field: "phi", .. })
        ));
    }

    #[test]
    fn exponents() {
        let d = derive_params(&params(1.0, 1.0, 1.0, 0.0, 0.0)).unwrap();
        let o = rayleigh_exponent(0, &d);
        assert_eq!(o.beta_n, Complex64::new(1.0, 0.0));
        assert_eq!(o.kind, OrderKind::Propagating);
        let o = rayleigh_exponent(2, &d);
        assert!((o.beta_n - Complex64::new(0.0, 3f64.sqrt())).norm() < 1e-15);
        assert_eq!(o.kind, OrderKind::Evanescent);
        let o = rayleigh_exponent(-1, &d);
        assert_eq!(o.beta_n.norm(), 0.0);
        assert_eq!(o.kind, OrderKind::Cutoff);
    }

    #[test]
    fn anomalous_examples() {
        let d = derive_params(&params(1.0, 1.0, 1.0, 0.4, 0.0)).unwrap();
        assert!(anomalous_set(&d, &params(1.0, 1.0, 1.0, 0.4, 0.0)).is_empty());
        let p = params(2.0, 1.0, 1.0, 0.0, PI / 3.0);
        let d = derive_params(&p).unwrap();
        assert_eq!(anomalous_set(&d, &p), vec![-1, 1]);
        assert_eq!(anomalous_set_intervals(&d, &p), vec![-1, 1]);
        let p = params(1.0, 1.0, 1.0, 0.0, PI / 3.0);
        let d = derive_params(&p).unwrap();
        assert!(anomalous_set(&d, &p).is_empty());
    }

    #[test]
    fn wood_examples() {
        let mut d = derive_params(&params(1.0, 1.0, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(wood_distance(&d, 3), 0.0);
        d.alpha = 0.3;
        assert!((wood_distance(&d, 2) - 0.3).abs() < 1e-15);
        d.alpha = 0.0;
        d.kappa = 0.5;
        d.kappa2 = 0.25;
        assert_eq!(wood_distance(&d, 0), 0.5);
        assert!(check_wood(&d, 0, 1e-6).is_ok());
        d.kappa = 1.0;
        assert!(matches!(
            check_wood(&d, 2, 1e-6),
            Err(Error::WoodAnomaly { .. })
        ));
    }

    #[test]
    fn polarization() {
        let d = derive_params(&params(1.0, 1.0, 1.0, 0.0, 0.0)).unwrap();
        let z = Complex64::ZERO;
        let one = Complex64::ONE;
        let (p3, q3) = polarization_from_vector([z, z, one], &d, 1.0, 1.0).unwrap();
        assert_eq!((p3, q3), (one, z));
        let (p3, q3) = polarization_from_vector([one, z, z], &d, 1.0, 1.0).unwrap();
        assert_eq!(p3, z);
        assert!((q3 - one).norm() < 1e-15);
        assert!(polarization_from_vector([z, one, z], &d, 1.0, 1.0).is_err());
    }
}
