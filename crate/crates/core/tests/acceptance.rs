//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use conigrate::bie::{assemble_bie, jump_relations, BieOptions, BoundaryGrid};
use conigrate::dtn::{default_truncation, ellipticity_check, ellipticity_theta, mode_matrix, Mat2};
use conigrate::fem;
use conigrate::green::QuasiGreen;
use conigrate::mesh::triangulate;
use conigrate::params::{
    anomalous_set, derive_params, wood_distance, IncidenceParams, RayleighSpectrum,
};
use conigrate::profile::{build_profile, GratingProfile, ProfileSpec};
use conigrate::validation::{
    convergence_study, cross_validate, energy_check, flat_oracle, flat_reflection, flat_trace, Problem,
};
use num_complex::Complex64 as C;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<(bool, String), String>;

fn cosine() -> GratingProfile {
    build_profile(&ProfileSpec::Fourier {
        a0: 0.0,
        cos: vec![0.3],
        sin: vec![],
    })
    .unwrap()
}

fn flat() -> GratingProfile {
    build_profile(&ProfileSpec::Flat { height: 0.0 }).unwrap()
}

/// k = 2, theta = phi = pi/6, lambda = -1.
fn benchmark() -> IncidenceParams {
    IncidenceParams {
        omega: 2.0,
        epsilon: 1.0,
        mu: 1.0,
        lambda: -1.0,
        theta: PI / 6.0,
        phi: PI / 6.0,
        p3: C::ONE,
        q3: C::ONE,
    }
}

/// Conical incidence on a flat surface, away from Wood anomalies.
fn flat_conical() -> IncidenceParams {
    IncidenceParams {
        omega: 1.0,
        epsilon: 1.0,
        mu: 1.0,
        lambda: -2.0,
        theta: 0.3,
        phi: 0.4,
        p3: C::ONE,
        q3: C::new(0.5, -0.25),
    }
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn energy_identity() -> Outcome {
    // hand case: omega = eps = mu = beta = 1, lambda = -2, p3 = 1
    let hand = IncidenceParams {
        omega: 1.0,
        epsilon: 1.0,
        mu: 1.0,
        lambda: -2.0,
        theta: 0.0,
        phi: 0.0,
        p3: C::ONE,
        q3: C::ZERO,
    };
    let mut flat_res: f64 = 0.0;
    for p in [hand, flat_conical()] {
        let d = derive_params(&p).map_err(e)?;
        let spec = flat_oracle(&p, &d, 0.0, 4).map_err(e)?;
        let r = energy_check(&spec, &flat_trace(&p, &d, 0.0).map_err(e)?, &p, &d);
        flat_res = flat_res.max(r.residual);
    }
    let pr = Problem::new(benchmark(), cosine(), 1.3);
    let t = Instant::now();
    let f = pr.solve_fem(0.05).map_err(e)?.energy.residual;
    let tf = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let b = pr.solve_bie(256).map_err(e)?.energy.residual;
    let tb = t.elapsed().as_secs_f64();
    let ok = flat_res <= 1e-10 && f <= 1e-2 && b <= 1e-6 && tf <= 60.0 && tb <= 60.0;
    Ok((
        ok,
        format!("flat {flat_res:.2e} (<=1e-10), FEM h=0.05 {f:.2e} (<=1e-2, {tf:.1}s), BIE 256 {b:.2e} (<=1e-6, {tb:.1}s)"),
    ))
}

fn u0(s: &RayleighSpectrum) -> C {
    s.get(0).unwrap().u
}

fn flat_oracle_match() -> Outcome {
    let p = flat_conical();
    let d = derive_params(&p).map_err(e)?;
    let (want, _) = flat_reflection(&p, &d, 0.0).map_err(e)?;
    let pr = Problem::new(p, flat(), 1.0);
    let fe = (u0(&pr.solve_fem(0.025).map_err(e)?.spectrum) - want).norm();
    let be = (u0(&pr.solve_bie(128).map_err(e)?.spectrum) - want).norm();

    // lambda beta = -omega mu, phi = 0, q3 = 0
    let theta: f64 = 0.3;
    let matched = IncidenceParams {
        omega: 1.0,
        epsilon: 1.0,
        mu: 1.0,
        lambda: -1.0 / theta.cos(),
        theta,
        phi: 0.0,
        p3: C::ONE,
        q3: C::ZERO,
    };
    let pm = Problem::new(matched, flat(), 1.0);
    let mb = u0(&pm.solve_bie(128).map_err(e)?.spectrum).norm();
    let mf = u0(&pm.solve_fem(0.05).map_err(e)?.spectrum).norm();
    let ok = fe <= 1e-3 && be <= 1e-8 && mb <= 1e-8 && mf <= 1e-4;
    Ok((
        ok,
        format!("FEM h=0.025 {fe:.2e} (<=1e-3), BIE 128 {be:.2e} (<=1e-8), matched |u0| BIE {mb:.2e} (<=1e-8) FEM {mf:.2e} (<=1e-4)"),
    ))
}

fn convergence_rates() -> Outcome {
    let pr = Problem::new(flat_conical(), flat(), 1.0);
    let r = convergence_study(&pr, &[0.2, 0.1, 0.05, 0.025]).map_err(e)?;
    let rc = r.rate_coeff.ok_or("no coefficient rate")?;
    let rs = r.self_rate_h1.ok_or("no self-convergence rate")?;
    let ok = (1.7..=2.3).contains(&rc) && (0.7..=1.3).contains(&rs);
    Ok((
        ok,
        format!(
            "coefficient rate {rc:.3} in [1.7, 2.3], H1 self rate {rs:.3} in [0.7, 1.3] (H1 vs exact {:.3}, L2 {:.3})",
            r.rate_h1.unwrap_or(f64::NAN),
            r.rate_l2.unwrap_or(f64::NAN)
        ),
    ))
}

fn herm_part(m: &Mat2, s: C) -> Mat2 {
    let mut r = [[C::ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = 0.5 * (s * m[i][j] + (s * m[j][i]).conj());
        }
    }
    r
}

/// Eigenvalues `(lo, hi)` of a Hermitian 2x2 matrix from its characteristic polynomial.
fn eig2(m: &Mat2) -> (f64, f64) {
    let (a, d) = (m[0][0].re, m[1][1].re);
    let disc = ((a - d).powi(2) + 4.0 * m[0][1].norm_sqr()).sqrt();
    (0.5 * (a + d - disc), 0.5 * (a + d + disc))
}

fn dtn_properties() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let theta = ellipticity_theta(1e-3);
    let (mut im_err, mut floor, mut nerr): (f64, f64, f64) = (0.0, f64::INFINITY, 0.0);
    let mut cn_min = f64::INFINITY;
    for _ in 0..1000 {
        let p = IncidenceParams {
            omega: rng.random_range(0.2..5.0),
            epsilon: rng.random_range(0.3..3.0),
            mu: rng.random_range(0.3..3.0),
            lambda: -1.0,
            theta: rng.random_range(-1.5..1.5),
            phi: rng.random_range(-1.5..1.5),
            p3: C::ONE,
            q3: C::ZERO,
        };
        let d = derive_params(&p).map_err(e)?;
        let anomalous = anomalous_set(&d, &p);
        for n in -16i64..=16 {
            let m = mode_matrix(n, &p, &d);
            let an = n as f64 + d.alpha;
            let scale = p.omega * p.epsilon.max(p.mu) * (an.abs() + d.kappa) / d.kappa2;
            let im = m.imag_part();
            let want = if an.abs() <= d.kappa {
                let b = (d.kappa2 - an * an).sqrt();
                [-p.omega * p.epsilon * b / d.kappa2, -p.omega * p.mu * b / d.kappa2]
            } else {
                [0.0, 0.0]
            };
            let dev = (im[0][0] - want[0]).norm()
                + (im[1][1] - want[1]).norm()
                + im[0][1].norm()
                + im[1][0].norm();
            im_err = im_err.max(dev / scale);
            if !anomalous.contains(&n) {
                let (lo, hi) = eig2(&herm_part(&m.m, theta));
                floor = floor.min(lo / hi.abs().max(1.0));
            }
        }
        let r = ellipticity_check(&d, &p, 1e-3, 16);
        let np: Mat2 = [
            [C::new(p.omega * p.epsilon / d.kappa2, 0.0), C::new(0.0, d.gamma / d.kappa2)],
            [C::new(0.0, -d.gamma / d.kappa2), C::new(p.omega * p.mu / d.kappa2, 0.0)],
        ];
        let nm: Mat2 = [[np[0][0], np[1][0]], [np[0][1], np[1][1]]];
        for nn in [np, nm] {
            let (lo, hi) = eig2(&herm_part(&nn, theta));
            nerr = nerr.max((lo - r.c_n).abs().max((hi - r.lambda_1).abs()) / hi);
        }
        cn_min = cn_min.min(r.c_n);
    }
    let ok = im_err <= 1e-12 && floor >= -1e-12 && nerr <= 1e-12 && cn_min >= 0.0;
    Ok((
        ok,
        format!(
            "1000 draws |n|<=16: Im(M_n) deviation {im_err:.1e}, Re(theta M_n) floor {floor:.1e}, N+- eigenvalue error {nerr:.1e}, min C_N {cn_min:.2e}"
        ),
    ))
}

fn decoupling() -> Outcome {
    let p = IncidenceParams {
        theta: 0.4,
        phi: 0.0,
        ..benchmark()
    };
    let d = derive_params(&p).map_err(e)?;
    let prof = cosine();
    let n = default_truncation(&d, 1.3, prof.gamma_max);
    let mesh = Arc::new(triangulate(&prof, 1.3, 0.1).map_err(e)?);
    let sys = fem::assemble(mesh.clone(), &p, &d, n, 1e-6).map_err(e)?;
    let fnorm = sys.coupling_norms();
    let bnorm = assemble_bie(&prof, &p, &d, 64).map_err(e)?.off_diagonal_norms();

    let mut dev: f64 = 0.0;
    let q = p.with_amplitudes(C::ONE, C::new(-2.0, 3.0));
    let (a, b) = (Problem::new(p, prof.clone(), 1.3), Problem::new(q, prof, 1.3));
    let sa = a.solve_fem(0.1).map_err(e)?.spectrum;
    let sb = b.solve_fem(0.1).map_err(e)?.spectrum;
    let ba = a.solve_bie(64).map_err(e)?.spectrum;
    let bb = b.solve_bie(64).map_err(e)?.spectrum;
    for (x, y) in [(&sa, &sb), (&ba, &bb)] {
        for (s, t) in x.entries.iter().zip(&y.entries) {
            dev = dev.max((s.u - t.u).norm());
        }
    }
    let ok = fnorm == (0.0, 0.0) && bnorm == (0.0, 0.0) && dev <= 1e-12;
    Ok((
        ok,
        format!("FEM coupling {fnorm:?}, BIE coupling {bnorm:?}, u-spectrum change under q3 {dev:.1e} (<=1e-12)"),
    ))
}

fn jumps() -> Outcome {
    let p = benchmark();
    let d = derive_params(&p).map_err(e)?;
    let grid = BoundaryGrid::new(&cosine(), 256, &BieOptions::default()).map_err(e)?;
    let green = QuasiGreen::new(&d, 1e-6).map_err(e)?;
    let density: Vec<C> = grid
        .nodes
        .iter()
        .map(|n| {
            let x = n.point[0];
            C::from_polar(1.0, d.alpha * x) * C::new(1.0 + 0.5 * x.cos(), 0.3 * (2.0 * x).sin())
        })
        .collect();
    let (mut nerr, mut terr): (f64, f64) = (0.0, 0.0);
    for k in [0, 37, 64, 101, 128, 200] {
        let r = jump_relations(&grid, &green, &density, k, 0.02).map_err(e)?;
        nerr = nerr.max(r.normal_error());
        terr = terr.max(r.tangential_error());
    }
    Ok((
        nerr <= 1e-3 && terr <= 1e-3,
        format!("normal jump vs 2g {nerr:.2e} (<=1e-3), tangential jump {terr:.2e} (<=1e-3)"),
    ))
}

fn cross_validation() -> Outcome {
    let pr = Problem::new(benchmark(), cosine(), 1.3);
    let coarse = cross_validate(&pr, 0.1, 128).map_err(e)?.max_discrepancy;
    let fine = cross_validate(&pr, 0.05, 256).map_err(e)?.max_discrepancy;
    Ok((
        fine <= 1e-2 && fine < coarse,
        format!("h=0.1/128 {coarse:.2e}, h=0.05/256 {fine:.2e} (<=1e-2, decreasing)"),
    ))
}

fn green_dual() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let (mut dual, mut sym): (f64, f64) = (0.0, 0.0);
    let mut count = 0;
    while count < 100 {
        let p = IncidenceParams {
            omega: rng.random_range(0.3..4.0),
            theta: rng.random_range(-1.3..1.3),
            phi: rng.random_range(-1.3..1.3),
            ..benchmark()
        };
        let d = derive_params(&p).map_err(e)?;
        let Ok(g) = QuasiGreen::new(&d, 1e-3) else { continue };
        let x: [f64; 2] = [rng.random_range(-4.0..10.0), rng.random_range(-2.0..2.0)];
        let mut y: [f64; 2] = [rng.random_range(-4.0..10.0), rng.random_range(-2.0..2.0)];
        if (x[1] - y[1]).abs() < 0.1 {
            y[1] = x[1] + 0.1f64.copysign(y[1] - x[1]) + rng.random_range(0.0..0.5) * (y[1] - x[1]).signum();
        }
        let dx = [x[0] - y[0], x[1] - y[1]];
        let a = g.spectral(dx).value;
        let b = g.ewald(dx).value;
        dual = dual.max((a - b).norm() / a.norm().max(1.0));
        let mut m = d;
        m.alpha = -d.alpha;
        let h = QuasiGreen::new(&m, 1e-3).map_err(e)?;
        sym = sym.max((g.eval(x, y).map_err(e)?.value - h.eval(y, x).map_err(e)?.value).norm());
        count += 1;
    }
    Ok((
        dual <= 1e-8 && sym <= 1e-10,
        format!("100 pairs |x2-y2|>=0.1: spectral vs spatial {dual:.2e} (<=1e-8), symmetry {sym:.2e} (<=1e-10)"),
    ))
}

fn energy_inequality() -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let (mut worst, mut gmax): (f64, f64) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut count = 0;
    while count < 50 {
        let p = IncidenceParams {
            omega: rng.random_range(0.5..2.0),
            epsilon: rng.random_range(0.5..1.5),
            mu: rng.random_range(0.5..1.5),
            lambda: -rng.random_range(0.2..3.0),
            theta: rng.random_range(-1.2..1.2),
            phi: rng.random_range(-1.2..1.2),
            p3: C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            q3: C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        };
        let prof = build_profile(&ProfileSpec::Fourier {
            a0: 0.0,
            cos: vec![rng.random_range(-0.4..0.4)],
            sin: vec![rng.random_range(-0.2..0.2)],
        })
        .map_err(e)?;
        let b = prof.gamma_max + 0.6;
        let d = derive_params(&p).map_err(e)?;
        if wood_distance(&d, default_truncation(&d, b, prof.gamma_max)) <= 1e-3 {
            continue;
        }
        let mut pr = Problem::new(p, prof, b);
        pr.wood_tolerance = 1e-3;
        let runs = [pr.solve_fem(0.2).map_err(e)?.energy, pr.solve_bie(64).map_err(e)?.energy];
        for r in runs {
            worst = worst.max(r.lhs / r.incident_term - 1.0);
            gmax = gmax.max(r.gamma_term / r.incident_term);
        }
        count += 1;
    }
    Ok((
        worst <= 5e-2 && gmax <= 0.0,
        format!("50 configs, FEM h=0.2 and BIE 64: max lhs/incident - 1 = {worst:.2e} (<=5e-2), max gamma_term/incident {gmax:.2e} (<=0)"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("energy identity", energy_identity),
        ("flat-grating oracle", flat_oracle_match),
        ("convergence rates", convergence_rates),
        ("DtN matrix properties", dtn_properties),
        ("decoupling at phi = 0", decoupling),
        ("jump relations", jumps),
        ("FEM/BIE cross-validation", cross_validation),
        ("Green's function dual representation", green_dual),
        ("energy inequality", energy_inequality),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, msg) = match run() {
            Ok(r) => r,
            Err(m) => (false, format!("error: {m}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {}. {name}: {msg} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
