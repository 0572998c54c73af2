use std::f64::consts::PI;

use conigrate::params::{
    anomalous_set, anomalous_set_intervals, derive_params, polarization_from_vector, rayleigh_exponent,
    wood_distance, IncidenceParams, OrderKind, RayleighSpectrum,
};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn params(omega: f64, epsilon: f64, mu: f64, theta: f64, phi: f64) -> IncidenceParams {
    IncidenceParams {
        omega,
        epsilon,
        mu,
        lambda: -1.0,
        theta,
        phi,
        p3: C::ONE,
        q3: C::ZERO,
    }
}

fn arb_params() -> impl Strategy<Value = IncidenceParams> {
    (0.05f64..20.0, 0.1f64..10.0, 0.1f64..10.0, -1.55f64..1.55, -1.55f64..1.55)
        .prop_map(|(w, e, m, t, p)| params(w, e, m, t, p))
}

/// `{n : kappa^2 <= alpha_n^2 < k^2}` by enumeration.
fn brute_anomalous(p: &IncidenceParams) -> Vec<i64> {
    let d = derive_params(p).unwrap();
    let r = d.k.ceil() as i64 + d.alpha.abs().ceil() as i64 + 2;
    (-r..=r)
        .filter(|&n| {
            let a = n as f64 + d.alpha;
            d.kappa2 <= a * a && a * a < d.k * d.k
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn wave_vector_norm(p in arb_params()) {
        let d = derive_params(&p).unwrap();
        let s = d.alpha * d.alpha + d.beta * d.beta + d.gamma * d.gamma;
        prop_assert!((s - d.k * d.k).abs() <= 1e-12 * d.k * d.k);
        prop_assert!(d.kappa2 > 0.0);
        prop_assert!((d.kappa2 - (d.k * d.k - d.gamma * d.gamma)).abs() <= 1e-12 * d.k * d.k);
        let omega = d.k / (p.epsilon * p.mu).sqrt();
        prop_assert!((omega - p.omega).abs() <= 1e-12 * p.omega);
    }

    #[test]
    fn rayleigh_dispersion_and_branch(p in arb_params(), n in -40i64..40) {
        let d = derive_params(&p).unwrap();
        let o = rayleigh_exponent(n, &d);
        prop_assert_eq!(o.alpha_n, n as f64 + d.alpha);
        let lhs = C::new(o.alpha_n * o.alpha_n, 0.0) + o.beta_n * o.beta_n;
        prop_assert!((lhs - d.kappa2).norm() <= 1e-12 * (d.kappa2 + o.alpha_n * o.alpha_n));
        if o.alpha_n.abs() <= d.kappa {
            prop_assert!(o.beta_n.im == 0.0 && o.beta_n.re >= 0.0);
        } else {
            prop_assert!(o.beta_n.re == 0.0 && o.beta_n.im > 0.0);
        }
        if o.beta_n.norm() < 1e-10 * d.kappa {
            prop_assert_eq!(o.kind, OrderKind::Cutoff);
        } else if o.alpha_n.abs() <= d.kappa {
            prop_assert_eq!(o.kind, OrderKind::Propagating);
        } else {
            prop_assert_eq!(o.kind, OrderKind::Evanescent);
        }
    }

    #[test]
    fn anomalous_set_forms_agree(p in arb_params()) {
        let d = derive_params(&p).unwrap();
        let set = anomalous_set(&d, &p);
        prop_assert_eq!(&set, &anomalous_set_intervals(&d, &p));
        let brute = brute_anomalous(&p);
        // the brute-force form only differs on orders sitting exactly on a boundary
        for n in set.iter().chain(&brute) {
            if set.contains(n) != brute.contains(n) {
                let a = (*n as f64 + d.alpha).abs();
                prop_assert!((a - d.kappa).abs() < 1e-9 * d.k || (a - d.k).abs() < 1e-9 * d.k);
            }
        }
        if p.phi == 0.0 {
            prop_assert!(set.is_empty());
        }
    }

    #[test]
    fn wood_distance_is_brute_minimum(p in arb_params(), n in 0usize..30) {
        let d = derive_params(&p).unwrap();
        let brute = (-(n as i64)..=n as i64)
            .map(|k| ((k as f64 + d.alpha).abs() - d.kappa).abs())
            .fold(f64::INFINITY, f64::min);
        prop_assert_eq!(wood_distance(&d, n), brute);
    }

    #[test]
    fn spectrum_has_every_order_once(n in 0usize..50) {
        let d = derive_params(&params(1.0, 1.0, 1.0, 0.3, 0.2)).unwrap();
        let s = RayleighSpectrum::zeros(&d, n);
        prop_assert_eq!(s.entries.len(), 2 * n + 1);
        for (k, e) in s.entries.iter().enumerate() {
            prop_assert_eq!(e.order.n, k as i64 - n as i64);
        }
    }

    #[test]
    fn polarization_matches_cross_product(
        p in arb_params(),
        a in (-1.0f64..1.0, -1.0f64..1.0),
        b in (-1.0f64..1.0, -1.0f64..1.0),
    ) {
        let d = derive_params(&p).unwrap();
        let kv = [d.alpha, -d.beta, d.gamma];
        // two vectors spanning the plane orthogonal to kv
        let e1 = if kv[2].abs() < 0.9 * d.k {
            let t = [kv[1], -kv[0], 0.0];
            let n = (t[0] * t[0] + t[1] * t[1]).sqrt();
            [t[0] / n, t[1] / n, 0.0]
        } else {
            let t = [0.0, kv[2], -kv[1]];
            let n = (t[1] * t[1] + t[2] * t[2]).sqrt();
            [0.0, t[1] / n, t[2] / n]
        };
        let e2 = [
            (kv[1] * e1[2] - kv[2] * e1[1]) / d.k,
            (kv[2] * e1[0] - kv[0] * e1[2]) / d.k,
            (kv[0] * e1[1] - kv[1] * e1[0]) / d.k,
        ];
        let (ca, cb) = (C::new(a.0, a.1), C::new(b.0, b.1));
        let pv = [0, 1, 2].map(|i| ca * e1[i] + cb * e2[i]);
        let (p3, q3) = polarization_from_vector(pv, &d, p.omega, p.mu).unwrap();
        let q3_want = (pv[1] * kv[0] - pv[0] * kv[1]) / (p.omega * p.mu);
        prop_assert_eq!(p3, pv[2]);
        prop_assert!((q3 - q3_want).norm() <= 1e-12 * (1.0 + q3_want.norm()));
    }
}

#[test]
fn derived_examples() {
    let d = derive_params(&params(1.0, 1.0, 1.0, 0.0, 0.0)).unwrap();
    assert_eq!((d.k, d.alpha, d.beta, d.gamma, d.kappa), (1.0, 0.0, 1.0, 0.0, 1.0));
    let d = derive_params(&params(1.0, 1.0, 1.0, 0.0, PI / 6.0)).unwrap();
    assert!((d.gamma - 0.5).abs() < 1e-15 && (d.kappa2 - 0.75).abs() < 1e-15);
    let d = derive_params(&params(2.0, 1.0, 4.0, PI / 6.0, PI / 3.0)).unwrap();
    assert!((d.k - 4.0).abs() < 1e-15);
    assert!((d.alpha - 1.0).abs() < 1e-14);
    assert!((d.gamma - 2.0 * 3f64.sqrt()).abs() < 1e-14);
    assert!((d.kappa2 - 4.0).abs() < 1e-13);
}

#[test]
fn rejects_invalid_inputs() {
    for (field, p) in [
        ("lambda", IncidenceParams { lambda: 0.0, ..params(1.0, 1.0, 1.0, 0.0, 0.0) }),
        ("lambda", IncidenceParams { lambda: 0.5, ..params(1.0, 1.0, 1.0, 0.0, 0.0) }),
        ("theta", params(1.0, 1.0, 1.0, PI / 2.0, 0.0)),
        ("phi", params(1.0, 1.0, 1.0, 0.0, -PI / 2.0)),
        ("omega", params(0.0, 1.0, 1.0, 0.0, 0.0)),
        ("epsilon", params(1.0, -1.0, 1.0, 0.0, 0.0)),
    ] {
        match derive_params(&p) {
            Err(conigrate::Error::InvalidParameter { field: f, .. }) => assert_eq!(f, field),
            other => panic!("{field}: {other:?}"),
        }
    }
}

#[test]
fn exponent_examples() {
    let d = derive_params(&params(1.0, 1.0, 1.0, 0.0, 0.0)).unwrap();
    let o = rayleigh_exponent(0, &d);
    assert_eq!((o.beta_n, o.kind), (C::ONE, OrderKind::Propagating));
    let o = rayleigh_exponent(2, &d);
    assert!((o.beta_n - C::new(0.0, 3f64.sqrt())).norm() < 1e-15);
    assert_eq!(o.kind, OrderKind::Evanescent);
    assert_eq!(rayleigh_exponent(-1, &d).kind, OrderKind::Cutoff);
}

#[test]
fn anomalous_examples() {
    let p = params(2.0, 1.0, 1.0, 0.0, PI / 3.0);
    let d = derive_params(&p).unwrap();
    assert_eq!(anomalous_set(&d, &p), vec![-1, 1]);
    let p = params(1.0, 1.0, 1.0, 0.0, PI / 3.0);
    let d = derive_params(&p).unwrap();
    assert!(anomalous_set(&d, &p).is_empty());
    let p = params(3.7, 1.0, 1.0, 0.4, 0.0);
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
}

#[test]
fn polarization_examples() {
    let p = params(1.0, 1.0, 1.0, 0.0, 0.0);
    let d = derive_params(&p).unwrap();
    let z = C::ZERO;
    assert_eq!(polarization_from_vector([z, z, C::ONE], &d, 1.0, 1.0).unwrap(), (C::ONE, z));
    // (0, -1, 0) x (1, 0, 0) = (0, 0, 1)
    let (p3, q3) = polarization_from_vector([C::ONE, z, z], &d, 1.0, 1.0).unwrap();
    assert_eq!(p3, z);
    assert!((q3 - C::ONE).norm() < 1e-15);
    assert!(polarization_from_vector([z, C::ONE, z], &d, 1.0, 1.0).is_err());
}
