//! Independent oracles for the properties the solvers are supposed to have.
//!
//! Everything here recomputes from first principles: grid quadrature,
//! potential evaluations, and fresh state/adjoint re-solves. No result is
//! read back from the module under test beyond those primitives, so a bug in,
//! say, the cost bookkeeping or the adjoint sweep shows up as a mismatch
//! here rather than being reproduced on both sides.
//!
//! Norm proxies: the continuous solution space norm is replaced by the
//! discrete L∞(ℋ) norm (max over steps of the ℋ norm) and, where gradients
//! matter, the discrete L²(𝒱) seminorm. Every report states this.

use crate::adjoint::{build_adjoint_data, solve_adjoint_decoupled, solve_adjoint_transpose};
use crate::control::ControlSignal;
use crate::error::{ChcError, Result};
use crate::geometry::Geometry;
use crate::optimizer::{check_vi, projection_gap, ControlProblem, OptimizationReport};
use crate::potential::PotentialPair;
use crate::state::Trajectory;
use crate::tangent::{linearize, solve_tangent};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// ℋ-norm of the difference of two trajectories at one step, straight from
/// the quadrature weights.
fn h_norm_diff(geom: &Geometry, a: &Trajectory, b: &Trajectory, n: usize) -> f64 {
    let wa = geom.node_weights();
    let wb = geom.boundary_weights();
    let ya = a.snapshots[n].y.interior.values();
    let yb = b.snapshots[n].y.interior.values();
    let mut acc = 0.0;
    for i in 0..ya.len() {
        let d = ya[i] - yb[i];
        acc += wa[i] * d * d;
    }
    let ga = a.snapshots[n].y.boundary.values();
    let gb = b.snapshots[n].y.boundary.values();
    for i in 0..ga.len() {
        let d = ga[i] - gb[i];
        acc += wb[i] * d * d;
    }
    acc.sqrt()
}

/// L∞(ℋ) distance between trajectories.
pub fn state_distance_linf_h(geom: &Geometry, a: &Trajectory, b: &Trajectory) -> f64 {
    (0..a.snapshots.len())
        .map(|n| h_norm_diff(geom, a, b, n))
        .fold(0.0, f64::max)
}

/// Independent recomputation of the tracking cost by raw quadrature loops.
pub fn recompute_cost(
    geom: &Geometry,
    traj: &Trajectory,
    u: &ControlSignal,
    cost: &crate::optimizer::CostSpec,
) -> f64 {
    let nt = traj.nt();
    let dt = traj.config.dt();
    let wn = geom.node_weights();
    let wb = geom.boundary_weights();
    let mut j = 0.0;
    for n in 1..=nt {
        let y = traj.snapshots[n].y.interior.values();
        let z = cost.z_q[n].values();
        let mut s = 0.0;
        for i in 0..y.len() {
            s += wn[i] * (y[i] - z[i]).powi(2);
        }
        j += dt * 0.5 * cost.b_q * s;
        let yg = traj.snapshots[n].y.boundary.values();
        let zg = cost.z_sigma[n].values();
        let mut s = 0.0;
        for b in 0..yg.len() {
            s += wb[b] * (yg[b] - zg[b]).powi(2);
        }
        j += dt * 0.5 * cost.b_sigma * s;
        let uv = u.sample(n).values();
        let mut s = 0.0;
        for b in 0..uv.len() {
            s += wb[b] * uv[b] * uv[b];
        }
        j += dt * 0.5 * cost.b_0 * s;
    }
    let y = traj.snapshots[nt].y.interior.values();
    let z = cost.z_omega.values();
    let mut s = 0.0;
    for i in 0..y.len() {
        s += wn[i] * (y[i] - z[i]).powi(2);
    }
    j += 0.5 * cost.b_omega * s;
    let yg = traj.snapshots[nt].y.boundary.values();
    let zg = cost.z_gamma.values();
    let mut s = 0.0;
    for b in 0..yg.len() {
        s += wb[b] * (yg[b] - zg[b]).powi(2);
    }
    j += 0.5 * cost.b_gamma * s;
    j
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckRow {
    pub eps: f64,
    pub central_diff: f64,
    pub adjoint_pairing: f64,
    pub rel_err: f64,
}

/// Central finite differences of the reduced cost against the adjoint
/// pairing ⟨g, h⟩_{L²(Σ)}, over a sweep of step sizes.
pub fn fd_gradient_oracle(
    problem: &ControlProblem<'_>,
    u: &ControlSignal,
    h: &ControlSignal,
    eps_list: &[f64],
) -> Result<Vec<GradCheckRow>> {
    let geom = problem.geom;
    let dt = problem.dt();
    let (g, ..) = problem.reduced_gradient(u)?;
    let pairing = g.dot_sigma(geom, dt, h)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut up = u.clone();
        up.axpy(eps, h);
        let mut um = u.clone();
        um.axpy(-eps, h);
        let tp = problem.solve(&up).map_err(|e| match e {
            ChcError::DomainViolation { value, lo, hi } => ChcError::InfeasiblePerturbation(
                format!("u + eps h left the potential domain: {value} not in ({lo}, {hi})"),
            ),
            other => other,
        })?;
        let tm = problem.solve(&um)?;
        let jp = recompute_cost(geom, &tp, &up, problem.cost);
        let jm = recompute_cost(geom, &tm, &um, problem.cost);
        let central = (jp - jm) / (2.0 * eps);
        let rel = (central - pairing).abs() / (central.abs() + pairing.abs() + 1e-300);
        rows.push(GradCheckRow {
            eps,
            central_diff: central,
            adjoint_pairing: pairing,
            rel_err: rel,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy)]
pub struct TaylorRow {
    pub eps: f64,
    pub remainder: f64,
}

#[derive(Debug, Clone)]
pub struct TaylorStudy {
    pub rows: Vec<TaylorRow>,
    /// Least-squares slope of log remainder vs log ε.
    pub slope: f64,
}

/// Remainder ‖S(u+εh) − S(u) − ε ξ‖_{L∞(ℋ)} over a sweep of ε, with the
/// log-log slope; the map is Fréchet differentiable iff the slope is ≈ 2.
pub fn taylor_remainder_study(
    problem: &ControlProblem<'_>,
    u: &ControlSignal,
    h: &ControlSignal,
    eps_list: &[f64],
) -> Result<TaylorStudy> {
    let geom = problem.geom;
    let base = problem.solve(u)?;
    let coeffs = linearize(geom, &base, problem.pair)?;
    let tan = solve_tangent(geom, &coeffs, h, problem.cfg)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut up = u.clone();
        up.axpy(eps, h);
        let tp = problem.solve(&up).map_err(|e| match e {
            ChcError::DomainViolation { value, lo, hi } => ChcError::InfeasiblePerturbation(
                format!("u + eps h left the potential domain: {value} not in ({lo}, {hi})"),
            ),
            other => other,
        })?;
        let mut worst = 0.0f64;
        let wn = geom.node_weights();
        let wb = geom.boundary_weights();
        for n in 0..=base.nt() {
            let yp = tp.snapshots[n].y.interior.values();
            let yb = base.snapshots[n].y.interior.values();
            let xi = tan.xi[n].interior.values();
            let mut acc = 0.0;
            for i in 0..yp.len() {
                let d = yp[i] - yb[i] - eps * xi[i];
                acc += wn[i] * d * d;
            }
            let gp = tp.snapshots[n].y.boundary.values();
            let gb = base.snapshots[n].y.boundary.values();
            let xg = tan.xi[n].boundary.values();
            for b in 0..gp.len() {
                let d = gp[b] - gb[b] - eps * xg[b];
                acc += wb[b] * d * d;
            }
            worst = worst.max(acc.sqrt());
        }
        rows.push(TaylorRow {
            eps,
            remainder: worst,
        });
    }
    // least-squares fit of log r = slope · log ε + c
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.remainder > 0.0)
        .map(|r| (r.eps.ln(), r.remainder.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    Ok(TaylorStudy { rows, slope })
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// ‖Δstate‖_{L∞(ℋ)} / ‖Δu‖_{L²(Σ)} per sampled pair.
    pub ratios: Vec<f64>,
    pub max_over_min: f64,
}

/// Lipschitz ratios of the control-to-state map over seeded random control
/// pairs of assorted magnitudes.
pub fn stability_study(
    problem: &ControlProblem<'_>,
    n_pairs: usize,
    seed: u64,
) -> Result<StabilityReport> {
    let geom = problem.geom;
    let dt = problem.dt();
    let nt = problem.cfg.nt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(n_pairs);
    for k in 0..n_pairs {
        // smooth random signals with magnitudes spread over two decades
        let amp = 0.02 * 10f64.powf(rng.gen_range(0.0..2.0)) / 10.0;
        let tau = std::f64::consts::TAU;
        let (a1, p1, a2, p2) = (
            rng.gen_range(0.2..1.0),
            rng.gen_range(0.0..tau),
            rng.gen_range(0.2..1.0),
            rng.gen_range(0.0..tau),
        );
        let base = ControlSignal::from_fn(geom, nt, problem.cfg.t_final, |t, x, _| {
            0.2 * (a1 * t * 6.0 + p1).sin() * (1.0 + 0.3 * x)
        });
        let mut pert = base.clone();
        let delta = ControlSignal::from_fn(geom, nt, problem.cfg.t_final, |t, x, _| {
            amp * (a2 * t * 6.0 + p2).cos() * (1.0 + 0.2 * x * x)
        });
        pert.axpy(1.0, &delta);
        let t1 = problem.solve(&base)?;
        let t2 = problem.solve(&pert)?;
        let num = state_distance_linf_h(geom, &t1, &t2);
        let mut du = pert.clone();
        du.axpy(-1.0, &base);
        let den = du.norm_sigma(geom, dt)?;
        if den > 0.0 {
            ratios.push(num / den);
        } else if k == 0 {
            // u1 = u2 degenerate probe: state difference must vanish too
            assert!(num == 0.0);
        }
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    Ok(StabilityReport {
        ratios,
        max_over_min: max / min,
    })
}

#[derive(Debug, Clone)]
pub struct ConservationReport {
    /// max over steps of |mean(y_n) − mean(y_0)| / (1 + |mean(y_0)|).
    pub max_mass_drift: f64,
    /// max over steps of E(t_{n+1}) − E(t_n) (negative when dissipating).
    pub max_energy_rise: f64,
    pub energies: Vec<f64>,
    pub masses: Vec<f64>,
}

/// Re-verify mass conservation and energy dissipation with raw quadrature
/// loops and direct potential evaluations.
pub fn conservation_and_energy_suite(
    geom: &Geometry,
    traj: &Trajectory,
    pair: &PotentialPair,
) -> Result<ConservationReport> {
    let wn = geom.node_weights();
    let wb = geom.boundary_weights();
    let vol: f64 = wn.iter().sum();
    let mut masses = Vec::with_capacity(traj.snapshots.len());
    let mut energies = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let y = snap.y.interior.values();
        let m: f64 = y.iter().zip(wn).map(|(a, w)| a * w).sum::<f64>() / vol;
        masses.push(m);
        // energy: ½|∇y|² + f(y) in the bulk, ½|∇_Γ y|² + f_Γ(y_Γ) on Γ
        let mut e = 0.5 * geom.stiffness_energy(&snap.y.interior, &snap.y.interior)?;
        e += 0.5 * geom.boundary_stiffness_energy(&snap.y.boundary, &snap.y.boundary)?;
        for (i, &v) in y.iter().enumerate() {
            e += wn[i] * pair.bulk.eval(0, v)?;
        }
        for (b, &v) in snap.y.boundary.values().iter().enumerate() {
            e += wb[b] * pair.boundary.eval(0, v)?;
        }
        energies.push(e);
    }
    let m0 = masses[0];
    let max_mass_drift = masses
        .iter()
        .map(|m| (m - m0).abs() / (1.0 + m0.abs()))
        .fold(0.0, f64::max);
    let max_energy_rise = energies
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::MIN, f64::max);
    Ok(ConservationReport {
        max_mass_drift,
        max_energy_rise,
        energies,
        masses,
    })
}

#[derive(Debug, Clone)]
pub struct CertificateOutcome {
    pub vi_min_pairing: f64,
    pub vi_pass: bool,
    /// ‖ū − P_box(−q_Γ/b_0)‖/‖ū‖ when b_0 > 0 and the budget is inactive.
    pub projection_gap: Option<f64>,
    pub pass: bool,
}

/// Re-derive the optimality certificate of a finished run with an
/// independent adjoint solve (the decoupled form when the final weights
/// vanish) and fresh probes.
pub fn optimality_certificate(
    problem: &ControlProblem<'_>,
    report: &OptimizationReport,
    n_probes: usize,
    seed: u64,
) -> Result<CertificateOutcome> {
    let geom = problem.geom;
    let dt = problem.dt();
    let u = &report.final_control;
    let traj = problem.solve(u)?;
    let coeffs = linearize(geom, &traj, problem.pair)?;
    let data = build_adjoint_data(geom, &traj, problem.cost)?;
    let adj = if problem.cost.b_omega == 0.0 && problem.cost.b_gamma == 0.0 {
        solve_adjoint_decoupled(geom, &coeffs, &data, problem.cfg)?
    } else {
        solve_adjoint_transpose(geom, &coeffs, &data, problem.cfg)?
    };
    let mut g_samples = Vec::with_capacity(problem.cfg.nt + 1);
    g_samples.push(geom.boundary_zero());
    for n in 1..=problem.cfg.nt {
        let mut g = adj.q_gamma[n].clone();
        g.axpy(problem.cost.b_0, u.sample(n));
        g_samples.push(g);
    }
    let g = ControlSignal::new(g_samples)?;
    let cert = check_vi(geom, dt, u, &g, problem.bx, n_probes, seed)?;

    let budget_inactive = report.iterates.iter().all(|r| !r.budget_active);
    let gap = if problem.cost.b_0 > 0.0 && budget_inactive {
        Some(projection_gap(
            geom,
            dt,
            u,
            &adj.q_gamma,
            problem.cost.b_0,
            problem.bx,
        )?)
    } else {
        None
    };
    let gap_ok = gap.map_or(true, |g| g <= 1e-6);
    Ok(CertificateOutcome {
        vi_min_pairing: cert.min_pairing,
        vi_pass: cert.pass,
        projection_gap: gap,
        pass: cert.pass && gap_ok,
    })
}

/// Tangent MAC check helper reused by the Taylor acceptance criterion:
/// remainder quadruples (within tolerance) when the direction doubles.
pub fn remainder_quadratic_in_direction(
    problem: &ControlProblem<'_>,
    u: &ControlSignal,
    h: &ControlSignal,
    eps: f64,
) -> Result<f64> {
    let study1 = taylor_remainder_study(problem, u, h, &[eps])?;
    let mut h2 = h.clone();
    h2.scale(2.0);
    let study2 = taylor_remainder_study(problem, u, &h2, &[eps])?;
    Ok(study2.rows[0].remainder / study1.rows[0].remainder)
}
