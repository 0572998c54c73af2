//! Quasiperiodic Green's function of `Delta + kappa^2` with period `2 pi` in `x1`.
//!
//! Two representations are available: the plane-wave series, which converges
//! quickly away from `x2 = y2`, and an Ewald splitting that converges everywhere.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{check_wood, DerivedParams, DEFAULT_WOOD_TOLERANCE};
use crate::profile::TWO_PI;
use crate::special::{erfcx, expint_range, EULER_GAMMA};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Spectral,
    Spatial,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiGreen {
    pub alpha: f64,
    pub kappa: f64,
    pub representation: Representation,
    /// Vertical separation above which the hybrid rule uses the plane-wave series.
    pub h_switch: f64,
    /// Ewald splitting parameter.
    pub split: f64,
}

/// Value and gradient with respect to the first argument.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GreenEval {
    pub value: C,
    pub grad: [C; 2],
}

const TAIL: f64 = 1e-17;

impl QuasiGreen {
    pub fn new(d: &DerivedParams, wood_tolerance: f64) -> Result<Self> {
        let reach = d.kappa.ceil() as usize + d.alpha.abs().ceil() as usize + 2;
        check_wood(d, reach, wood_tolerance)?;
        Ok(QuasiGreen {
            alpha: d.alpha,
            kappa: d.kappa,
            representation: Representation::Hybrid,
            h_switch: 0.05,
            split: (0.5 / PI.sqrt()).max(d.kappa / 4.0),
        })
    }

    pub fn with_representation(mut self, r: Representation) -> Self {
        self.representation = r;
        self
    }

    fn beta(&self, a: f64) -> C {
        let k = self.kappa;
        if a.abs() <= k {
            C::new(((k - a) * (k + a)).sqrt(), 0.0)
        } else {
            C::new(0.0, ((a - k) * (a + k)).sqrt())
        }
    }

    /// `G(x, y)` and `grad_x G(x, y)`.
    pub fn eval(&self, x: [f64; 2], y: [f64; 2]) -> Result<GreenEval> {
        let dx = [x[0] - y[0], x[1] - y[1]];
        let wrapped = dx[0] - TWO_PI * (dx[0] / TWO_PI).round();
        if dx[1].abs() < 1e-14 && wrapped.abs() < 1e-14 {
            return Err(Error::Precondition(format!(
                "Green's function evaluated at a lattice point: x - y = {dx:?}"
            )));
        }
        Ok(self.eval_diff(dx))
    }

    /// Evaluation at `x - y = dx`, which must not be a lattice point.
    pub fn eval_diff(&self, dx: [f64; 2]) -> GreenEval {
        match self.representation {
            Representation::Spectral => self.spectral(dx),
            Representation::Spatial => self.ewald(dx),
            Representation::Hybrid => {
                if dx[1].abs() >= self.h_switch {
                    self.spectral(dx)
                } else {
                    self.ewald(dx)
                }
            }
        }
    }

    /// `(i / 4 pi) sum_n exp(i alpha_n X + i beta_n |Y|) / beta_n`.
    pub fn spectral(&self, dx: [f64; 2]) -> GreenEval {
        let (x, y) = (dx[0], dx[1]);
        let ay = y.abs();
        let sy = if y >= 0.0 { 1.0 } else { -1.0 };
        let step = C::from_polar(1.0, x);
        let base = C::from_polar(1.0, self.alpha * x);
        let mut out = GreenEval::default();
        let mut add = |n: i64, ph: C| -> f64 {
            let a = n as f64 + self.alpha;
            let b = self.beta(a);
            let e = if b.im == 0.0 {
                ph * C::from_polar(1.0, b.re * ay)
            } else {
                ph * (-b.im * ay).exp()
            };
            let t = e / b;
            out.value += t;
            out.grad[0] += C::I * a * t;
            out.grad[1] += C::I * sy * e;
            if a.abs() > self.kappa {
                e.norm() * (1.0 + 1.0 / b.norm())
            } else {
                f64::INFINITY
            }
        };
        add(0, base);
        let (mut fwd, mut bwd) = (base, base);
        let back = step.conj();
        let mut n = 1i64;
        loop {
            fwd *= step;
            bwd *= back;
            let m = add(n, fwd).max(add(-n, bwd));
            if m < TAIL || n > 200_000 {
                break;
            }
            n += 1;
        }
        let f = C::new(0.0, 1.0 / (4.0 * PI));
        GreenEval {
            value: f * out.value,
            grad: [f * out.grad[0], f * out.grad[1]],
        }
    }

    fn coeffs(&self) -> Vec<f64> {
        let r = (self.kappa / (2.0 * self.split)).powi(2);
        let mut c = vec![1.0];
        loop {
            let q = c.len();
            let next = c[q - 1] * r / q as f64;
            if next < 1e-18 * c.iter().sum::<f64>() {
                break;
            }
            c.push(next);
        }
        c
    }

    /// Lattice part of the Ewald splitting for image `n`, with the image included.
    fn spatial_term(&self, c: &[f64], n: i64, dx: [f64; 2], out: &mut GreenEval, skip_value: bool) {
        let e2 = self.split * self.split;
        let xn = dx[0] - TWO_PI * n as f64;
        let r2 = xn * xn + dx[1] * dx[1];
        let arg = r2 * e2;
        if arg > 45.0 {
            return;
        }
        let en = expint_range(arg, c.len());
        let (mut v, mut g) = (0.0, 0.0);
        for (q, &cq) in c.iter().enumerate() {
            v += cq * en[q + 1];
            g += cq * en[q];
        }
        let ph = C::from_polar(1.0 / (4.0 * PI), TWO_PI * self.alpha * n as f64);
        if !skip_value {
            out.value += ph * v;
        }
        let s = -2.0 * e2 * g;
        out.grad[0] += ph * (s * xn);
        out.grad[1] += ph * (s * dx[1]);
    }

    fn spectral_ewald(&self, dx: [f64; 2], out: &mut GreenEval) {
        let e = self.split;
        let (x, y) = (dx[0], dx[1]);
        let ay = y.abs();
        let sy = if y >= 0.0 { 1.0 } else { -1.0 };
        let gauss_y = (ay * e) * (ay * e);
        let mut add = |m: i64| -> f64 {
            let a = m as f64 + self.alpha;
            // gamma_m = sqrt(alpha_m^2 - kappa^2) = -i beta_m
            let g = -C::I * self.beta(a);
            let base = (-(g * g) / (4.0 * e * e) - gauss_y).exp();
            let z1 = g / (2.0 * e) + ay * e;
            let z2 = g / (2.0 * e) - ay * e;
            let part = |z: C, sgn: f64| -> C {
                // exp(sgn gamma |Y|) erfc(z)
                if z.re >= 0.0 {
                    base * erfcx(z)
                } else {
                    2.0 * (sgn * g * ay).exp() - base * erfcx(-z)
                }
            };
            let p1 = part(z1, 1.0);
            let p2 = part(z2, -1.0);
            let ph = C::from_polar(1.0, a * x) / (8.0 * PI);
            out.value += ph * (p1 + p2) / g;
            out.grad[0] += ph * C::I * a * (p1 + p2) / g;
            out.grad[1] += ph * sy * (p1 - p2);
            if a.abs() > self.kappa {
                base.norm() * (1.0 + 1.0 / g.norm()) + (p1.norm() + p2.norm()) * 1e-300
            } else {
                f64::INFINITY
            }
        };
        add(0);
        let mut m = 1;
        while add(m).max(add(-m)) > TAIL {
            m += 1;
        }
    }

    /// Ewald evaluation.
    pub fn ewald(&self, dx: [f64; 2]) -> GreenEval {
        let c = self.coeffs();
        let mut out = GreenEval::default();
        let n0 = (dx[0] / TWO_PI).round() as i64;
        let reach = (45f64.sqrt() / self.split / TWO_PI).ceil() as i64 + 1;
        for n in n0 - reach..=n0 + reach {
            self.spatial_term(&c, n, dx, &mut out, false);
        }
        self.spectral_ewald(dx, &mut out);
        out
    }

    /// Limit of `G(x) - (i/4) H0(kappa |x|)` and of its gradient at `x = 0`.
    pub fn regular_part_at_origin(&self) -> GreenEval {
        let c = self.coeffs();
        let e = self.split;
        let s: f64 = c.iter().enumerate().skip(1).map(|(q, &cq)| cq / q as f64).sum();
        let mut out = GreenEval {
            value: C::new(
                (EULER_GAMMA + 2.0 * (self.kappa / (2.0 * e)).ln() + s) / (4.0 * PI),
                -0.25,
            ),
            grad: [C::ZERO; 2],
        };
        let reach = (45f64.sqrt() / e / TWO_PI).ceil() as i64 + 1;
        for n in -reach..=reach {
            if n != 0 {
                self.spatial_term(&c, n, [0.0, 0.0], &mut out, false);
            }
        }
        self.spectral_ewald([0.0, 0.0], &mut out);
        out
    }
}

/// `G(x, y)` with the default hybrid evaluation and Wood tolerance.
pub fn green(x: [f64; 2], y: [f64; 2], d: &DerivedParams) -> Result<C> {
    Ok(QuasiGreen::new(d, DEFAULT_WOOD_TOLERANCE)?.eval(x, y)?.value)
}
