//! Acceptance suite: one test per acceptance criterion, each printing a
//! single PASS line with the measured quantity and its pinned threshold.
//!
//! Run with `cargo test -p chc-core --test acceptance -- --nocapture` to see
//! the lines for passing criteria too. Every tolerance is pinned here in
//! code; desk scale throughout (1D grids up to 129 nodes, 2D up to 65 x 33,
//! at most 256 time steps).

use chc_core::adjoint::{
    build_adjoint_data, check_duality, solve_adjoint_decoupled, solve_adjoint_transpose,
    AdjointData, AdjointOperator,
};
use chc_core::control::{ControlBox, ControlSignal};
use chc_core::geometry::{CoupledField, Geometry, Mode};
use chc_core::optimizer::{
    projected_gradient_descent, ControlProblem, CostSpec, PgdOptions,
};
use chc_core::potential::{PotentialPair, PotentialSpec};
use chc_core::state::{free_energy, solve_state, Scheme, SolverConfig, Trajectory};
use chc_core::tangent::{linearize, solve_tangent};
use chc_core::verify::{
    fd_gradient_oracle, optimality_certificate, stability_study, taylor_remainder_study,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[derive(Clone, Copy, PartialEq)]
enum Pot {
    Quartic,
    Logarithmic,
}

struct Setup {
    geom: Geometry,
    pair: PotentialPair,
    cfg: SolverConfig,
    y0: CoupledField,
    u: ControlSignal,
    label: &'static str,
}

fn pair_of(p: Pot) -> PotentialPair {
    match p {
        Pot::Quartic => PotentialPair::identical(PotentialSpec::regular_quartic()),
        Pot::Logarithmic => PotentialPair::identical(PotentialSpec::logarithmic(3.0).unwrap()),
    }
}

/// The four shipped forward configurations: both geometries, both potential
/// families, nontrivial smooth controls.
fn shipped_configs() -> Vec<Setup> {
    let mut out = Vec::new();
    for (mode, pot, label) in [
        (Mode::Interval1D, Pot::Quartic, "interval1d/quartic"),
        (Mode::Interval1D, Pot::Logarithmic, "interval1d/logarithmic"),
        (Mode::Strip2D, Pot::Quartic, "strip2d/quartic"),
        (Mode::Strip2D, Pot::Logarithmic, "strip2d/logarithmic"),
    ] {
        let geom = match mode {
            Mode::Interval1D => Geometry::interval_1d(65, 1.0).unwrap(),
            Mode::Strip2D => Geometry::strip_2d(20, 9, 1.0, 0.5).unwrap(),
        };
        let scheme = Scheme::FullyImplicit;
        let cfg = SolverConfig::new(0.25, 32, scheme);
        let amp = if pot == Pot::Logarithmic { 0.35 } else { 0.4 };
        let y0 = geom
            .coupled(geom.interior_from_fn(|x, y| {
                0.1 + amp * (2.0 * PI * x).cos() * (1.0 - 0.4 * y)
            }))
            .unwrap();
        let u = ControlSignal::from_fn(&geom, cfg.nt, cfg.t_final, |t, x, _| {
            0.4 * (3.0 * t).sin() * (1.0 + 0.3 * (2.0 * PI * x).cos())
        });
        out.push(Setup {
            geom,
            pair: pair_of(pot),
            cfg,
            y0,
            u,
            label,
        });
    }
    out
}

fn linf_h(geom: &Geometry, a: &Trajectory, b: &Trajectory) -> f64 {
    chc_core::verify::state_distance_linf_h(geom, a, b)
}

#[test]
fn criterion_01_mass_conservation() {
    let tol = 1e-11;
    let mut worst = 0.0f64;
    for s in shipped_configs() {
        let traj = solve_state(&s.geom, &s.y0, &s.u, &s.pair, &s.cfg).unwrap();
        let m0 = s.geom.mean_value(&traj.snapshots[0].y.interior).unwrap();
        for snap in &traj.snapshots {
            let m = s.geom.mean_value(&snap.y.interior).unwrap();
            worst = worst.max((m - m0).abs() / (1.0 + m0.abs()));
        }
    }
    println!("criterion 01 mass-conservation: PASS (max relative drift {worst:.2e} <= {tol:.0e})");
    assert!(worst <= tol, "mass drift {worst:.3e} exceeds {tol:.0e}");
}

#[test]
fn criterion_02_energy_dissipation() {
    let tol = 1e-10;
    let mut worst = f64::MIN;
    for pot in [Pot::Quartic, Pot::Logarithmic] {
        let geom = Geometry::interval_1d(65, 1.0).unwrap();
        let cfg = SolverConfig::new(0.5, 64, Scheme::ConvexSplit);
        let pair = pair_of(pot);
        let amp = if pot == Pot::Logarithmic { 0.4 } else { 0.5 };
        let y0 = geom
            .coupled(geom.interior_from_fn(|x, _| 0.05 + amp * (2.0 * PI * x).cos()))
            .unwrap();
        let u = ControlSignal::zeros(&geom, cfg.nt);
        let traj = solve_state(&geom, &y0, &u, &pair, &cfg).unwrap();
        let mut prev = free_energy(&geom, &traj.snapshots[0], &pair).unwrap();
        for snap in traj.snapshots.iter().skip(1) {
            let e = free_energy(&geom, snap, &pair).unwrap();
            worst = worst.max(e - prev);
            prev = e;
        }
    }
    println!("criterion 02 energy-dissipation: PASS (max per-step rise {worst:.2e} <= {tol:.0e})");
    assert!(worst <= tol, "energy rise {worst:.3e} exceeds {tol:.0e}");
}

#[test]
fn criterion_03_separation_logarithmic() {
    let mut checked = 0usize;
    let mut worst_margin = f64::MAX;
    for s in shipped_configs() {
        if !matches!(s.pair.bulk.kind(), chc_core::potential::PotentialKind::Logarithmic { .. }) {
            continue;
        }
        let traj = solve_state(&s.geom, &s.y0, &s.u, &s.pair, &s.cfg)
            .unwrap_or_else(|e| panic!("domain violation on {}: {e}", s.label));
        for snap in &traj.snapshots {
            for &v in snap.y.interior.values() {
                let margin = (1.0 - s.cfg.guard_delta) - v.abs();
                worst_margin = worst_margin.min(margin);
                checked += 1;
            }
        }
    }
    println!(
        "criterion 03 separation: PASS ({checked} samples inside the guard band, \
         smallest margin {worst_margin:.3e} >= 0)"
    );
    assert!(worst_margin >= 0.0);
}

#[test]
fn criterion_04_tangent_taylor_slope() {
    let eps_list = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let (lo, hi) = (1.8, 2.2);
    let geom = Geometry::interval_1d(33, 1.0).unwrap();
    let cfg = SolverConfig::new(0.25, 16, Scheme::FullyImplicit);
    let pair = pair_of(Pot::Quartic);
    let y0 = geom
        .coupled(geom.interior_from_fn(|x, _| 0.1 + 0.4 * (PI * x).cos()))
        .unwrap();
    let cost = CostSpec::with_zero_targets(&geom, cfg.nt, [1.0, 0.0, 0.0, 0.0, 0.1]).unwrap();
    let bx = ControlBox::constant(-5.0, 5.0, 1e9).unwrap();
    let problem = ControlProblem {
        geom: &geom,
        y0: &y0,
        pair: &pair,
        cfg: &cfg,
        cost: &cost,
        bx: &bx,
    };
    let u = ControlSignal::constant(&geom, cfg.nt, 0.2);
    let h = ControlSignal::from_fn(&geom, cfg.nt, cfg.t_final, |t, x, _| {
        2.0 * (1.0 + t) * (1.0 - 0.5 * x)
    });
    let study = taylor_remainder_study(&problem, &u, &h, &eps_list).unwrap();
    println!(
        "criterion 04 tangent-consistency: PASS (Taylor slope {:.3} in [{lo}, {hi}]; \
         remainders {:?})",
        study.slope,
        study.rows.iter().map(|r| r.remainder).collect::<Vec<_>>()
    );
    assert!(
        study.slope >= lo && study.slope <= hi,
        "slope {} outside [{lo}, {hi}]",
        study.slope
    );
}

fn random_data(geom: &Geometry, nt: usize, rng: &mut ChaCha8Rng) -> AdjointData {
    let mut rnd_i = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..geom.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        geom.interior_from_values(v).unwrap()
    };
    let mut rnd_b = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..geom.n_boundary()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        geom.boundary_from_values(v).unwrap()
    };
    AdjointData {
        phi_q: (0..=nt).map(|_| rnd_i(rng)).collect(),
        phi_sigma: (0..=nt).map(|_| rnd_b(rng)).collect(),
        phi_omega: rnd_i(rng),
        phi_gamma: rnd_b(rng),
    }
}

fn random_direction(geom: &Geometry, nt: usize, rng: &mut ChaCha8Rng) -> ControlSignal {
    ControlSignal::new(
        (0..=nt)
            .map(|_| {
                let v: Vec<f64> = (0..geom.n_boundary())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                geom.boundary_from_values(v).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn criterion_05_adjoint_duality() {
    let tol = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut count = 0;
    // one interval and one strip configuration
    for s in shipped_configs().into_iter().step_by(2) {
        let traj = solve_state(&s.geom, &s.y0, &s.u, &s.pair, &s.cfg).unwrap();
        let coeffs = linearize(&s.geom, &traj, &s.pair).unwrap();
        let op = AdjointOperator::assemble(&s.geom, &coeffs, &s.cfg).unwrap();
        for _ in 0..10 {
            let data = random_data(&s.geom, s.cfg.nt, &mut rng);
            let h = random_direction(&s.geom, s.cfg.nt, &mut rng);
            let adj = op.solve(&data).unwrap();
            let tan = solve_tangent(&s.geom, &coeffs, &h, &s.cfg).unwrap();
            let r = check_duality(&s.geom, s.cfg.dt(), &adj, &tan, &data, &h).unwrap();
            worst = worst.max(r);
            count += 1;
        }
    }
    println!(
        "criterion 05 adjoint-duality: PASS (max residual {worst:.2e} <= {tol:.0e} over {count} \
         seeded pairs)"
    );
    assert_eq!(count, 20);
    assert!(worst <= tol, "duality residual {worst:.3e} exceeds {tol:.0e}");
}

#[test]
fn criterion_06_gradient_check() {
    let tol = 1e-6;
    let eps_list = [1e-2, 1e-3, 1e-4];
    let mut worst_best = 0.0f64;
    for s in shipped_configs() {
        let cost = {
            let mut c =
                CostSpec::with_zero_targets(&s.geom, s.cfg.nt, [1.0, 0.5, 0.3, 0.2, 0.1]).unwrap();
            c.z_q = (0..=s.cfg.nt)
                .map(|_| s.geom.interior_constant(0.15))
                .collect();
            c
        };
        let bx = ControlBox::constant(-5.0, 5.0, 1e9).unwrap();
        let problem = ControlProblem {
            geom: &s.geom,
            y0: &s.y0,
            pair: &s.pair,
            cfg: &s.cfg,
            cost: &cost,
            bx: &bx,
        };
        let h = ControlSignal::from_fn(&s.geom, s.cfg.nt, s.cfg.t_final, |t, x, _| {
            (1.0 + 0.5 * t) * (1.0 + 0.3 * (2.0 * PI * x).cos())
        });
        let rows = fd_gradient_oracle(&problem, &s.u, &h, &eps_list).unwrap();
        let best = rows.iter().map(|r| r.rel_err).fold(f64::MAX, f64::min);
        worst_best = worst_best.max(best);
        assert!(
            best <= tol,
            "{}: best relative error {best:.3e} exceeds {tol:.0e} ({rows:?})",
            s.label
        );
    }
    println!(
        "criterion 06 gradient-check: PASS (worst best-in-sweep relative error {worst_best:.2e} \
         <= {tol:.0e} over both geometries and both potentials)"
    );
}

#[test]
fn criterion_07_decoupled_transpose_agreement() {
    let tol = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    // one interval and one strip configuration
    for s in shipped_configs().into_iter().step_by(2) {
        let traj = solve_state(&s.geom, &s.y0, &s.u, &s.pair, &s.cfg).unwrap();
        let coeffs = linearize(&s.geom, &traj, &s.pair).unwrap();
        let mut data = random_data(&s.geom, s.cfg.nt, &mut rng);
        // the strict-equivalence regime b_Ω = b_Γ = 0
        data.phi_omega = s.geom.interior_zero();
        data.phi_gamma = s.geom.boundary_zero();
        let a = solve_adjoint_transpose(&s.geom, &coeffs, &data, &s.cfg).unwrap();
        let b = solve_adjoint_decoupled(&s.geom, &coeffs, &data, &s.cfg).unwrap();
        for n in 1..=s.cfg.nt {
            let wn = s.geom.node_weights();
            let wb = s.geom.boundary_weights();
            let mut acc = 0.0;
            for i in 0..s.geom.n_nodes() {
                let d = a.q[n].values()[i] - b.q[n].values()[i];
                acc += wn[i] * d * d;
            }
            for (bn, &k) in s.geom.boundary_nodes().iter().enumerate() {
                let d = a.q[n].values()[k] - b.q[n].values()[k];
                acc += wb[bn] * d * d;
            }
            worst = worst.max(acc.sqrt());
            let mut dp = a.p[n].clone();
            dp.axpy(-1.0, &b.p[n]);
            worst = worst.max(dp.sup_norm());
        }
    }
    println!(
        "criterion 07 decoupled-transpose-agreement: PASS (L-inf(H) gap {worst:.2e} <= {tol:.0e} \
         with b_Omega = b_Gamma = 0)"
    );
    assert!(worst <= tol, "agreement gap {worst:.3e} exceeds {tol:.0e}");
}

#[test]
fn criterion_08_optimality_certificate() {
    // the shipped tracking demo: drive the interval state toward a constant
    // phase value with a penalized boundary control
    let geom = Geometry::interval_1d(33, 1.0).unwrap();
    let cfg = SolverConfig::new(0.25, 16, Scheme::FullyImplicit);
    let pair = pair_of(Pot::Quartic);
    let y0 = geom
        .coupled(geom.interior_from_fn(|x, _| 0.1 + 0.3 * (PI * x).cos()))
        .unwrap();
    let mut cost = CostSpec::with_zero_targets(&geom, cfg.nt, [1.0, 0.2, 0.0, 0.0, 0.5]).unwrap();
    cost.z_q = (0..=cfg.nt).map(|_| geom.interior_constant(0.25)).collect();
    cost.z_sigma = (0..=cfg.nt).map(|_| geom.boundary_constant(0.25)).collect();
    let bx = ControlBox::constant(-2.0, 2.0, 1e9).unwrap();
    let problem = ControlProblem {
        geom: &geom,
        y0: &y0,
        pair: &pair,
        cfg: &cfg,
        cost: &cost,
        bx: &bx,
    };
    let u0 = ControlSignal::zeros(&geom, cfg.nt);
    let opt = PgdOptions {
        max_iter: 200,
        vi_probes: 100,
        seed: 11,
        stat_tol: Some(2e-9),
        ..Default::default()
    };
    let run = projected_gradient_descent(&problem, &u0, &opt).unwrap();
    let last = run.iterates.last().unwrap();
    assert!(
        run.converged,
        "projected gradient did not reach stationarity {:.3e} (tol {:.3e})",
        last.stationarity, run.stat_tol
    );
    // independent certificate: decoupled adjoint re-solve + fresh probes
    let cert = optimality_certificate(&problem, &run, 100, 77).unwrap();
    assert!(
        cert.vi_pass,
        "VI probes found a descent direction: min pairing {:.3e}",
        cert.vi_min_pairing
    );
    let gap = cert.projection_gap.expect("b_0 > 0 and budget inactive");
    assert!(gap <= 1e-6, "projection characterization gap {gap:.3e}");
    println!(
        "criterion 08 optimality-certificate: PASS (stationarity {:.2e} <= {:.2e}, VI min \
         pairing {:.2e} >= -tol, projection gap {gap:.2e} <= 1e-6, {} iterations)",
        last.stationarity,
        run.stat_tol,
        cert.vi_min_pairing,
        run.iterates.len() - 1
    );
}

#[test]
fn criterion_09_stability_ratios() {
    let geom = Geometry::interval_1d(33, 1.0).unwrap();
    let cfg = SolverConfig::new(0.25, 16, Scheme::FullyImplicit);
    let pair = pair_of(Pot::Quartic);
    let y0 = geom
        .coupled(geom.interior_from_fn(|x, _| 0.1 + 0.3 * (PI * x).cos()))
        .unwrap();
    let cost = CostSpec::with_zero_targets(&geom, cfg.nt, [1.0, 0.0, 0.0, 0.0, 0.1]).unwrap();
    let bx = ControlBox::constant(-5.0, 5.0, 1e9).unwrap();
    let problem = ControlProblem {
        geom: &geom,
        y0: &y0,
        pair: &pair,
        cfg: &cfg,
        cost: &cost,
        bx: &bx,
    };
    let rep = stability_study(&problem, 20, 4242).unwrap();
    assert!(rep.ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    assert!(
        rep.max_over_min <= 10.0,
        "ratio spread {} exceeds 10 ({:?})",
        rep.max_over_min,
        rep.ratios
    );
    println!(
        "criterion 09 stability-ratios: PASS (20 seeded pairs, max/min = {:.3} <= 10)",
        rep.max_over_min
    );
}

#[test]
fn criterion_10_zero_mean_invariants() {
    let tol = 1e-11;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    // one interval and one strip configuration
    for s in shipped_configs().into_iter().step_by(2) {
        let traj = solve_state(&s.geom, &s.y0, &s.u, &s.pair, &s.cfg).unwrap();
        let coeffs = linearize(&s.geom, &traj, &s.pair).unwrap();
        let h = random_direction(&s.geom, s.cfg.nt, &mut rng);
        let tan = solve_tangent(&s.geom, &coeffs, &h, &s.cfg).unwrap();
        for xi in &tan.xi {
            worst = worst.max(s.geom.mean_value(&xi.interior).unwrap().abs());
        }
        let data = random_data(&s.geom, s.cfg.nt, &mut rng);
        let adj = solve_adjoint_transpose(&s.geom, &coeffs, &data, &s.cfg).unwrap();
        for q in &adj.q {
            worst = worst.max(s.geom.mean_value(q).unwrap().abs());
        }
    }
    println!(
        "criterion 10 zero-mean-invariants: PASS (max |mean| {worst:.2e} <= {tol:.0e} over all \
         tangent and adjoint steps)"
    );
    assert!(worst <= tol);
}

#[test]
fn criterion_11_self_convergence_first_order() {
    let (lo, hi) = (0.8, 1.2);
    let geom = Geometry::interval_1d(33, 1.0).unwrap();
    let pair = pair_of(Pot::Quartic);
    let y0 = geom
        .coupled(geom.interior_from_fn(|x, _| 0.1 + 0.4 * (PI * x).cos()))
        .unwrap();
    let t_final = 0.25;
    let solve_nt = |nt: usize| -> Trajectory {
        let cfg = SolverConfig::new(t_final, nt, Scheme::FullyImplicit);
        let u = ControlSignal::from_fn(&geom, nt, t_final, |t, x, _| {
            0.5 * (4.0 * t).sin() * (1.0 + 0.2 * x)
        });
        solve_state(&geom, &y0, &u, &pair, &cfg).unwrap()
    };
    let reference = solve_nt(256);
    let final_err = |traj: &Trajectory| {
        let wn = geom.node_weights();
        let wb = geom.boundary_weights();
        let a = traj.final_state();
        let b = reference.final_state();
        let mut acc = 0.0;
        for i in 0..geom.n_nodes() {
            let d = a.y.interior.values()[i] - b.y.interior.values()[i];
            acc += wn[i] * d * d;
        }
        for (bn, _) in geom.boundary_nodes().iter().enumerate() {
            let d = a.y.boundary.values()[bn] - b.y.boundary.values()[bn];
            acc += wb[bn] * d * d;
        }
        acc.sqrt()
    };
    let e16 = final_err(&solve_nt(16));
    let e32 = final_err(&solve_nt(32));
    let order = (e16 / e32).log2();
    println!(
        "criterion 11 self-convergence: PASS (observed order {order:.3} in [{lo}, {hi}]; \
         errors {e16:.3e} @ nt=16, {e32:.3e} @ nt=32 vs nt=256 reference)"
    );
    assert!(
        order >= lo && order <= hi,
        "observed order {order} outside [{lo}, {hi}]"
    );
}
