use std::collections::HashSet;
use std::f64::consts::PI;

use conigrate::mesh::{quasiperiodic_phase, triangulate, PeriodicMesh};
use conigrate::profile::{build_profile, GratingProfile, ProfileKind, ProfileSpec, TWO_PI};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn arb_fourier() -> impl Strategy<Value = GratingProfile> {
    (-0.3f64..0.3, prop::collection::vec(-0.25f64..0.25, 0..3), prop::collection::vec(-0.2f64..0.2, 0..3))
        .prop_map(|(a0, cos, sin)| build_profile(&ProfileSpec::Fourier { a0, cos, sin }).unwrap())
}

fn arb_polygon() -> impl Strategy<Value = GratingProfile> {
    (prop::collection::vec((0.2f64..1.0, -0.4f64..0.4), 1..4), -0.2f64..0.2).prop_map(|(mid, y0)| {
        let total: f64 = mid.iter().map(|m| m.0).sum::<f64>() + 0.5;
        let mut x = 0.0;
        let mut nodes = vec![(0.0, y0)];
        for (w, y) in mid {
            x += w / total * TWO_PI;
            nodes.push((x, y));
        }
        nodes.push((TWO_PI, y0));
        build_profile(&ProfileSpec::PiecewiseLinear { nodes }).unwrap()
    })
}

fn check_invariants(m: &PeriodicMesh, prof: &GratingProfile) -> Result<(), TestCaseError> {
    prop_assert!(m.b > prof.gamma_max);
    prop_assert!(m.min_angle_deg() >= 20.0 - 1e-9, "min angle {}", m.min_angle_deg());
    for t in 0..m.triangles.len() {
        prop_assert!(m.area(t) > 0.0);
    }
    // every vertex on x1 = 2 pi has a partner on x1 = 0 at the same height
    let right: HashSet<usize> = m.periodic_pairs.iter().map(|p| p.1).collect();
    for (v, p) in m.vertices.iter().enumerate() {
        if p[0] == TWO_PI {
            prop_assert!(right.contains(&v));
        }
    }
    for &(l, r) in &m.periodic_pairs {
        prop_assert_eq!(m.vertices[l][0], 0.0);
        prop_assert_eq!(m.vertices[r][0], TWO_PI);
        prop_assert!((m.vertices[l][1] - m.vertices[r][1]).abs() <= 1e-12);
        prop_assert_eq!(m.dof_map[l], m.dof_map[r]);
    }
    // identified strip: a cylinder, V - E + T = 0
    prop_assert_eq!(m.n_dofs as i64 - m.edge_count() as i64 + m.triangles.len() as i64, 0);
    for e in &m.gamma_edges {
        for &v in &e.v {
            let p = m.vertices[v];
            prop_assert!((p[1] - prof.f(p[0])).abs() < 1e-12);
        }
        let (n, t) = (e.normal, e.tangent);
        prop_assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
        prop_assert!((t[0].hypot(t[1]) - 1.0).abs() < 1e-12);
        prop_assert!((n[0] * t[0] + n[1] * t[1]).abs() < 1e-12);
        prop_assert_eq!(t, [-n[1], n[0]]);
        prop_assert!(n[1] < 0.0);
    }
    for e in &m.gammab_edges {
        prop_assert_eq!(m.vertices[e[0]][1], m.b);
        prop_assert_eq!(m.vertices[e[1]][1], m.b);
    }
    let top: f64 = m.gammab_edges.iter().map(|e| m.vertices[e[1]][0] - m.vertices[e[0]][0]).sum();
    prop_assert!((top - TWO_PI).abs() < 1e-12);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn smooth_meshes(prof in arb_fourier(), gap in 0.3f64..1.5, h in 0.08f64..0.5) {
        let m = triangulate(&prof, prof.gamma_max + gap, h).unwrap();
        check_invariants(&m, &prof)?;
        prop_assert!(m.h <= 2.0 * h);
    }

    #[test]
    fn corner_meshes(prof in arb_polygon(), gap in 0.3f64..1.5, h in 0.1f64..0.5) {
        prop_assert_eq!(prof.kind, ProfileKind::PiecewiseLinear);
        let m = triangulate(&prof, prof.gamma_max + gap, h).unwrap();
        check_invariants(&m, &prof)?;
        // vertices on every node, so the surface is reproduced exactly
        prop_assert!((m.gamma_length() - prof.arc_length()).abs() < 1e-12 * prof.arc_length());
        for &c in &prof.corners {
            prop_assert!(m.vertices.iter().any(|p| (p[0] - c).abs() < 1e-14 || (c == 0.0 && p[0] == TWO_PI)));
        }
    }

    #[test]
    fn halving_h_shrinks_elements(prof in arb_fourier(), h in 0.1f64..0.4) {
        let b = prof.gamma_max + 1.0;
        let coarse = triangulate(&prof, b, h).unwrap();
        let fine = triangulate(&prof, b, 0.5 * h).unwrap();
        prop_assert!(fine.h <= 0.6 * coarse.h, "{} vs {}", fine.h, coarse.h);
    }
}

#[test]
fn arc_length_of_smooth_surface() {
    let prof = build_profile(&ProfileSpec::Fourier {
        a0: 0.0,
        cos: vec![0.3],
        sin: vec![0.1],
    })
    .unwrap();
    // independent composite Simpson rule for int sqrt(1 + f'^2)
    let n = 20000;
    let step = TWO_PI / n as f64;
    let g = |x: f64| {
        let d = -0.3 * x.sin() + 0.1 * x.cos();
        (1.0 + d * d).sqrt()
    };
    let exact: f64 = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * g(i as f64 * step)
        })
        .sum::<f64>()
        * step
        / 3.0;
    let m = triangulate(&prof, 1.0, 0.05).unwrap();
    assert!((m.gamma_length() - exact).abs() < 1e-3 * exact);
}

#[test]
fn flat_normals_point_down() {
    let prof = build_profile(&ProfileSpec::Flat { height: 0.0 }).unwrap();
    let m = triangulate(&prof, 1.0, 0.5).unwrap();
    assert!(!m.gamma_edges.is_empty());
    for e in &m.gamma_edges {
        assert_eq!(e.normal, [0.0, -1.0]);
    }
}

#[test]
fn phase_factors() {
    let prof = build_profile(&ProfileSpec::Flat { height: 0.0 }).unwrap();
    let m = triangulate(&prof, 1.0, 0.4).unwrap();
    for (alpha, want) in [(0.0, C::ONE), (0.5, -C::ONE), (0.25, C::I)] {
        for (_, _, f) in quasiperiodic_phase(&m, alpha) {
            assert!((f - want).norm() < 1e-15);
        }
    }
}

#[test]
fn rejects_bad_heights() {
    let prof = build_profile(&ProfileSpec::Fourier {
        a0: 0.0,
        cos: vec![0.3],
        sin: vec![],
    })
    .unwrap();
    assert!(triangulate(&prof, 0.3, 0.1).is_err());
    assert!(triangulate(&prof, 0.2, 0.1).is_err());
    assert!(triangulate(&prof, 1.0, -0.1).is_err());
}

#[test]
fn export_sections() {
    let prof = build_profile(&ProfileSpec::PiecewiseLinear {
        nodes: vec![(0.0, 0.0), (PI, 0.5), (TWO_PI, 0.0)],
    })
    .unwrap();
    let m = triangulate(&prof, 1.2, 0.4).unwrap();
    let mut out = Vec::new();
    m.write_export(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let heads: Vec<&str> = text.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_uppercase())).collect();
    let names: Vec<&str> = heads.iter().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["VERTICES", "TRIANGLES", "GAMMA_EDGES", "GAMMAB_EDGES", "PERIODIC_PAIRS"]);
}
