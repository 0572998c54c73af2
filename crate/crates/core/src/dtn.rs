//! Dirichlet-to-Neumann map on `x2 = b` as a Fourier multiplier with 2x2 symbols.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::params::{anomalous_set, rayleigh_exponent, DerivedParams, IncidenceParams};

pub type C2 = [Complex64; 2];
pub type Mat2 = [[Complex64; 2]; 2];

/// `N = ceil(kappa) + 10 + ceil(kappa / (b - gamma_max))`.
pub fn default_truncation(d: &DerivedParams, b: f64, gamma_max: f64) -> usize {
    let gap = (b - gamma_max).max(f64::MIN_POSITIVE);
    d.kappa.ceil() as usize + 10 + (d.kappa / gap).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMatrix {
    pub n: i64,
    pub m: Mat2,
}

/// `M_n = kappa^-2 [[-i w eps beta_n, i gamma alpha_n], [-i gamma alpha_n, -i w mu beta_n]]`.
pub fn mode_matrix(n: i64, p: &IncidenceParams, d: &DerivedParams) -> ModeMatrix {
    let o = rayleigh_exponent(n, d);
    let b = o.beta_n;
    // -i z = (Im z, -Re z)
    let minus_i = |s: f64| Complex64::new(s * b.im, -s * b.re);
    let we = p.omega * p.epsilon / d.kappa2;
    let wm = p.omega * p.mu / d.kappa2;
    let off = d.gamma * o.alpha_n / d.kappa2;
    ModeMatrix {
        n,
        m: [
            [minus_i(we), Complex64::new(0.0, off)],
            [Complex64::new(0.0, -off), minus_i(wm)],
        ],
    }
}

impl ModeMatrix {
    pub fn apply(&self, x: C2) -> C2 {
        mat_vec(&self.m, x)
    }

    /// Hermitian imaginary part `(M - M^*) / 2i`.
    pub fn imag_part(&self) -> Mat2 {
        hermitian_part(&self.m, Complex64::new(0.0, -1.0))
    }
}

pub fn mat_vec(m: &Mat2, x: C2) -> C2 {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

/// `(s A + (s A)^*) / 2`.
fn hermitian_part(a: &Mat2, s: Complex64) -> Mat2 {
    let mut r = [[Complex64::ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = 0.5 * (s * a[i][j] + (s * a[j][i]).conj());
        }
    }
    r
}

/// Eigenvalues `(max, min)` of a 2x2 Hermitian matrix.
pub fn hermitian_eigs(m: &Mat2) -> (f64, f64) {
    let (a, dd) = (m[0][0].re, m[1][1].re);
    let c2 = 0.5 * (m[0][1].norm_sqr() + m[1][0].norm_sqr());
    let mean = 0.5 * (a + dd);
    let rad = (0.25 * (a - dd) * (a - dd) + c2).sqrt();
    let hi = mean + rad;
    let lo = if mean > 0.0 { (a * dd - c2) / hi } else { mean - rad };
    (hi, lo)
}

/// Applies `M_n` to the coefficient pairs indexed by `n = -N..=N`.
pub fn apply_dtn(coeffs: &[C2], p: &IncidenceParams, d: &DerivedParams) -> Vec<C2> {
    let nn = (coeffs.len() / 2) as i64;
    coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| mode_matrix(i as i64 - nn, p, d).apply(c))
        .collect()
}

/// Coefficients `(1/2pi) int w(x) exp(-i alpha_n x) dx` for `n = -N..=N` from samples at
/// `x_j = 2 pi j / M`.
pub fn boundary_fourier(samples: &[Complex64], alpha: f64, truncation: usize) -> Result<Vec<Complex64>> {
    let m = samples.len();
    if m < 4 * truncation.max(1) {
        return Err(Error::Precondition(format!(
            "{m} trace samples are too few for truncation {truncation} (need at least {})",
            4 * truncation.max(1)
        )));
    }
    let mut buf: Vec<Complex64> = samples
        .iter()
        .enumerate()
        .map(|(j, &w)| w * Complex64::from_polar(1.0, -alpha * 2.0 * PI * j as f64 / m as f64))
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let nn = truncation as i64;
    Ok((-nn..=nn)
        .map(|n| buf[n.rem_euclid(m as i64) as usize] / m as f64)
        .collect())
}

/// `(1/2pi) int_{xa}^{xb} phi(x) exp(-i a x) dx` for the two linear hat pieces on `[xa, xb]`,
/// `phi_a = (xb - x)/L` and `phi_b = (x - xa)/L`.
pub fn hat_transform(xa: f64, xb: f64, a: f64) -> C2 {
    let l = xb - xa;
    let z = Complex64::new(0.0, -a * l);
    let (i0, i1) = if z.norm() < 0.5 {
        let (mut s0, mut s1) = (Complex64::ZERO, Complex64::ZERO);
        let mut t = Complex64::ONE; // z^k / k!
        for k in 0..20 {
            s0 += t / (k + 1) as f64;
            s1 += t / (k + 2) as f64;
            t = t * z / (k + 1) as f64;
        }
        (s0, s1)
    } else {
        let ez = z.exp();
        ((ez - 1.0) / z, (ez * (z - 1.0) + 1.0) / (z * z))
    };
    let pre = Complex64::from_polar(l / (2.0 * PI), -a * xa);
    [pre * (i0 - i1), pre * i1]
}

/// Diagnostics of the matrices entering the Garding inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityReport {
    pub delta: f64,
    pub theta: Complex64,
    pub n_plus: Mat2,
    pub n_minus: Mat2,
    /// Eigenvalues `(lambda_1, lambda_2)` of `Re(theta N+)` and `Re(theta N-)`.
    pub eig_plus: (f64, f64),
    pub eig_minus: (f64, f64),
    /// Closed-form constant `C_N`.
    pub c_n: f64,
    /// Closed-form larger eigenvalue.
    pub lambda_1: f64,
    pub anomalous: Vec<i64>,
    /// `(n, smallest eigenvalue of Re(theta M_n))` for checked orders.
    pub mode_floors: Vec<(i64, f64)>,
    /// Orders skipped because they lie in the anomalous set.
    pub skipped: Vec<i64>,
    pub passed: bool,
}

pub fn ellipticity_theta(delta: f64) -> Complex64 {
    let t = Complex64::new(delta, 1.0);
    t / t.norm()
}

pub fn ellipticity_check(
    d: &DerivedParams,
    p: &IncidenceParams,
    delta: f64,
    truncation: usize,
) -> EllipticityReport {
    let theta = ellipticity_theta(delta);
    let k2 = d.kappa2;
    let np = [
        [Complex64::new(p.omega * p.epsilon / k2, 0.0), Complex64::new(0.0, d.gamma / k2)],
        [Complex64::new(0.0, -d.gamma / k2), Complex64::new(p.omega * p.mu / k2, 0.0)],
    ];
    let nm = [[np[0][0], np[1][0]], [np[0][1], np[1][1]]];
    let eig_plus = hermitian_eigs(&hermitian_part(&np, theta));
    let eig_minus = hermitian_eigs(&hermitian_part(&nm, theta));

    let (e, mu, w) = (p.epsilon, p.mu, p.omega);
    let (sp, cp) = p.phi.sin_cos();
    let root = ((e - mu).powi(2) + 4.0 * e * mu * sp * sp).sqrt();
    let scale = theta.re / (2.0 * w * e * mu * cp * cp);
    let lambda_1 = scale * ((e + mu) + root);
    // (e + mu) - root, rationalised
    let c_n = scale * 4.0 * e * mu * cp * cp / ((e + mu) + root);

    let anomalous = anomalous_set(d, p);
    let nn = truncation as i64;
    let mut mode_floors = Vec::new();
    let mut skipped = Vec::new();
    let mut passed = eig_plus.1 >= -1e-12 * eig_plus.0 && eig_minus.1 >= -1e-12 * eig_minus.0;
    for n in -nn..=nn {
        if anomalous.contains(&n) {
            skipped.push(n);
            continue;
        }
        let m = mode_matrix(n, p, d);
        let (hi, lo) = hermitian_eigs(&hermitian_part(&m.m, theta));
        if lo < -1e-12 * hi.abs().max(1.0) {
            passed = false;
        }
        mode_floors.push((n, lo));
    }
    EllipticityReport {
        delta,
        theta,
        n_plus: np,
        n_minus: nm,
        eig_plus,
        eig_minus,
        c_n,
        lambda_1,
        anomalous,
        mode_floors,
        skipped,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_params;

    fn params(omega: f64, theta: f64, phi: f64) -> IncidenceParams {
        IncidenceParams {
            omega,
            epsilon: 1.0,
            mu: 1.0,
            lambda: -1.0,
            theta,
            phi,
            p3: Complex64::ONE,
            q3: Complex64::ZERO,
        }
    }

    #[test]
    fn mode_matrix_examples() {
        let p = params(1.0, 0.0, 0.0);
        let d = derive_params(&p).unwrap();
        let m = mode_matrix(0, &p, &d).m;
        assert_eq!(m[0][0], Complex64::new(0.0, -1.0));
        assert_eq!(m[1][1], Complex64::new(0.0, -1.0));
        assert_eq!(m[0][1].norm() + m[1][0].norm(), 0.0);
        let m = mode_matrix(2, &p, &d).m;
        assert!((m[0][0] - 3f64.sqrt()).norm() < 1e-15);
        assert!((m[1][1] - 3f64.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn hat_transform_matches_quadrature() {
        for &(xa, xb, a) in &[(0.3, 0.5, 2.7), (1.0, 1.001, -4.2), (0.0, 2.0, 0.1), (5.0, 6.2, 13.5)] {
            let n = 20000;
            let h = (xb - xa) / n as f64;
            let mut q = [Complex64::ZERO; 2];
            for i in 0..n {
                let x = xa + (i as f64 + 0.5) * h;
                let e = Complex64::from_polar(h / (2.0 * PI), -a * x);
                q[0] += e * (xb - x) / (xb - xa);
                q[1] += e * (x - xa) / (xb - xa);
            }
            let t = hat_transform(xa, xb, a);
            for k in 0..2 {
                assert!((t[k] - q[k]).norm() < 1e-9 * (xb - xa), "{xa} {xb} {a}");
            }
        }
    }

    #[test]
    fn fourier_single_mode() {
        let alpha = 0.37;
        let m = 64;
        let s: Vec<Complex64> = (0..m)
            .map(|j| Complex64::from_polar(1.0, (3.0 + alpha) * 2.0 * PI * j as f64 / m as f64))
            .collect();
        let c = boundary_fourier(&s, alpha, 8).unwrap();
        for (i, z) in c.iter().enumerate() {
            let want = if i == 11 { 1.0 } else { 0.0 };
            assert!((z - want).norm() < 1e-13);
        }
        assert!(boundary_fourier(&s, alpha, 17).is_err());
    }

    #[test]
    fn ellipticity_flat_phi() {
        let p = params(1.3, 0.2, 0.0);
        let d = derive_params(&p).unwrap();
        let r = ellipticity_check(&d, &p, 1e-3, 10);
        assert!(r.passed && r.skipped.is_empty());
        // at gamma = 0 both eigenvalues equal Re(theta)/(omega)
        let want = r.theta.re / p.omega;
        assert!((r.c_n - want).abs() < 1e-15 && (r.lambda_1 - want).abs() < 1e-15);
    }
}
