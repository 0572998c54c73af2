//! Special functions needed by the Green's function and the Nystrom kernels.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `(J0(x), J1(x))` for real `x`.
pub fn bessel_j01(x: f64) -> (f64, f64) {
    let ax = x.abs();
    let (j0, j1) = if ax < 0.25 {
        series_j01(ax)
    } else if ax <= 200.0 {
        miller_j01(ax)
    } else {
        asymptotic_j01(ax)
    };
    (j0, if x < 0.0 { -j1 } else { j1 })
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j01(x).0
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_j01(x).1
}

fn series_j01(x: f64) -> (f64, f64) {
    let q = -0.25 * x * x;
    let (mut t0, mut t1) = (1.0, 0.5 * x);
    let (mut j0, mut j1) = (t0, t1);
    for k in 1..12 {
        let kf = k as f64;
        t0 *= q / (kf * kf);
        t1 *= q / (kf * (kf + 1.0));
        j0 += t0;
        j1 += t1;
    }
    (j0, j1)
}

// Downward recurrence normalised by J0 + 2 sum J_{2k} = 1.
fn miller_j01(x: f64) -> (f64, f64) {
    let mut m = (x + 30.0 + 6.0 * x.sqrt()) as usize;
    m += m % 2;
    let mut jp1 = 0.0;
    let mut j = 1e-300;
    let mut sum = 2.0 * j;
    let mut j1 = 0.0;
    let mut k = m;
    while k > 0 {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        k -= 1;
        if k == 1 {
            j1 = j;
        }
        if k > 0 && k.is_multiple_of(2) {
            sum += 2.0 * j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            sum *= 1e-250;
            j1 *= 1e-250;
        }
    }
    sum += j;
    (j / sum, j1 / sum)
}

fn asymptotic_j01(x: f64) -> (f64, f64) {
    let one = |nu: f64| {
        let mu = 4.0 * nu * nu;
        let (mut p, mut q) = (1.0, 0.0);
        let mut term = 1.0;
        let mut prev = f64::INFINITY;
        for k in 1..40 {
            let odd = (2 * k - 1) as f64;
            term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
            if term.abs() > prev || term.abs() < 1e-18 {
                break;
            }
            prev = term.abs();
            match k % 4 {
                1 => q += term,
                2 => p -= term,
                3 => q -= term,
                _ => p += term,
            }
        }
        let chi = x - (0.5 * nu + 0.25) * PI;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    };
    (one(0.0), one(1.0))
}

const WEIDEMAN_N: usize = 40;

struct Weideman {
    l: f64,
    coeffs: [f64; WEIDEMAN_N],
}

fn weideman() -> &'static Weideman {
    static TABLE: OnceLock<Weideman> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = WEIDEMAN_N;
        let m = 2 * n;
        let l = (n as f64 / 2f64.sqrt()).sqrt();
        let mut samples = Vec::with_capacity(2 * m - 1);
        for k in -(m as i64) + 1..m as i64 {
            let th = k as f64 * PI / m as f64;
            let t = l * (0.5 * th).tan();
            samples.push((k, (-t * t).exp() * (l * l + t * t)));
        }
        let mut coeffs = [0.0; WEIDEMAN_N];
        for (i, c) in coeffs.iter_mut().enumerate() {
            let nn = (i + 1) as f64;
            let s: f64 = samples
                .iter()
                .map(|&(k, g)| g * (PI * nn * k as f64 / m as f64).cos())
                .sum();
            *c = s / (2 * m) as f64;
        }
        Weideman { l, coeffs }
    })
}

/// Faddeeva function `w(z) = exp(-z^2) erfc(-i z)`.
pub fn faddeeva(z: Complex64) -> Complex64 {
    if z.im < 0.0 {
        return 2.0 * (-z * z).exp() - faddeeva(-z);
    }
    let tab = weideman();
    let i = Complex64::I;
    let denom = tab.l - i * z;
    let zz = (tab.l + i * z) / denom;
    let mut p = Complex64::ZERO;
    for &c in tab.coeffs.iter().rev() {
        p = p * zz + c;
    }
    2.0 * p / (denom * denom) + 1.0 / (PI.sqrt() * denom)
}

/// Scaled complementary error function `exp(z^2) erfc(z)`.
pub fn erfcx(z: Complex64) -> Complex64 {
    faddeeva(Complex64::I * z)
}

/// Complementary error function of a complex argument.
pub fn erfc(z: Complex64) -> Complex64 {
    if z.re >= 0.0 {
        (-z * z).exp() * erfcx(z)
    } else {
        2.0 - (-z * z).exp() * erfcx(-z)
    }
}

/// Exponential integrals `E_0(x), ..., E_nmax(x)` for `x > 0`.
pub fn expint_range(x: f64, nmax: usize) -> Vec<f64> {
    assert!(x > 0.0, "expint_range requires x > 0");
    let ex = (-x).exp();
    let mut e = vec![0.0; nmax + 1];
    e[0] = ex / x;
    if nmax == 0 {
        return e;
    }
    if x < 1.0 {
        e[1] = e1_series(x);
        for n in 1..nmax {
            e[n + 1] = (ex - x * e[n]) / n as f64;
        }
        return e;
    }
    let m = (x.ceil() as usize).clamp(1, nmax);
    e[m] = en_continued_fraction(m, x);
    for n in m..nmax {
        e[n + 1] = (ex - x * e[n]) / n as f64;
    }
    for n in (1..m).rev() {
        e[n] = (ex - n as f64 * e[n + 1]) / x;
    }
    e
}

fn e1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..60 {
        term *= -x / k as f64;
        let add = -term / k as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + sum
}

fn en_continued_fraction(n: usize, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let nf = n as f64;
    let mut b = x + nf;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let fi = i as f64;
        let an = -fi * (nf - 1.0 + fi);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}
