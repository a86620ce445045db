//! Tracking cost, admissible-set handling, the adjoint reduced gradient, and
//! projected-gradient descent with Armijo backtracking.
//!
//! The reduced cost J̃(u) composes the tracking functional
//!
//! ```text
//!   J = b_Q/2 ‖y − z_Q‖²_{L²(Q)} + b_Σ/2 ‖y_Γ − z_Σ‖²_{L²(Σ)}
//!     + b_Ω/2 ‖y(T) − z_Ω‖²    + b_Γ/2 ‖y_Γ(T) − z_Γ‖²
//!     + b_0/2 ‖u_Γ‖²_{L²(Σ)}
//! ```
//!
//! with the control-to-state map. Its discrete L²(Σ) gradient is
//! g = q_Γ + b_0 u, with q_Γ from the transpose adjoint sweep, and a control
//! is stationary iff the variational inequality ∫_Σ g (v − u) ≥ 0 holds over
//! the box; for b_0 > 0 the minimizer is the box projection of −q_Γ/b_0.

use crate::adjoint::{build_adjoint_data, solve_adjoint_transpose, AdjointTrajectory};
use crate::control::{ControlBox, ControlSignal};
use crate::error::{ChcError, Result};
use crate::geometry::{BoundaryField, CoupledField, Geometry, InteriorField};
use crate::potential::PotentialPair;
use crate::state::{solve_state, SolverConfig, Trajectory};
use crate::tangent::linearize;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Weights and targets of the tracking functional.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub b_q: f64,
    pub b_sigma: f64,
    pub b_omega: f64,
    pub b_gamma: f64,
    pub b_0: f64,
    pub z_q: Vec<InteriorField>,
    pub z_sigma: Vec<BoundaryField>,
    pub z_omega: InteriorField,
    pub z_gamma: BoundaryField,
}

impl CostSpec {
    pub fn with_zero_targets(
        geom: &Geometry,
        nt: usize,
        weights: [f64; 5],
    ) -> Result<Self> {
        let [b_q, b_sigma, b_omega, b_gamma, b_0] = weights;
        for b in weights {
            if b < 0.0 {
                return Err(ChcError::ConfigMismatch(format!(
                    "cost weights must be nonnegative, got {b}"
                )));
            }
        }
        Ok(CostSpec {
            b_q,
            b_sigma,
            b_omega,
            b_gamma,
            b_0,
            z_q: (0..=nt).map(|_| geom.interior_zero()).collect(),
            z_sigma: (0..=nt).map(|_| geom.boundary_zero()).collect(),
            z_omega: geom.interior_zero(),
            z_gamma: geom.boundary_zero(),
        })
    }

    pub fn check_grids(&self, geom: &Geometry, nt: usize) -> Result<()> {
        if self.z_q.len() != nt + 1 || self.z_sigma.len() != nt + 1 {
            return Err(ChcError::GridMismatch(format!(
                "cost targets cover {} steps, trajectory has {nt}",
                self.z_q.len() - 1
            )));
        }
        for f in &self.z_q {
            geom.trace(f)?;
        }
        geom.trace(&self.z_omega)?;
        Ok(())
    }

    /// Multiply every weight by α > 0 (the cost and gradient scale by α).
    pub fn scale_weights(&mut self, alpha: f64) {
        self.b_q *= alpha;
        self.b_sigma *= alpha;
        self.b_omega *= alpha;
        self.b_gamma *= alpha;
        self.b_0 *= alpha;
    }
}

/// One boundary-control problem instance.
pub struct ControlProblem<'a> {
    pub geom: &'a Geometry,
    pub y0: &'a CoupledField,
    pub pair: &'a PotentialPair,
    pub cfg: &'a SolverConfig,
    pub cost: &'a CostSpec,
    pub bx: &'a ControlBox,
}

impl<'a> ControlProblem<'a> {
    pub fn dt(&self) -> f64 {
        self.cfg.dt()
    }

    pub fn solve(&self, u: &ControlSignal) -> Result<Trajectory> {
        solve_state(self.geom, self.y0, u, self.pair, self.cfg)
    }

    /// J̃(u) together with the trajectory it was evaluated on.
    pub fn cost_of(&self, u: &ControlSignal) -> Result<(f64, Trajectory)> {
        let traj = self.solve(u)?;
        let j = evaluate_cost(self.geom, &traj, u, self.cost)?;
        Ok((j, traj))
    }

    /// Reduced gradient g = q_Γ + b_0 u via one forward and one transpose
    /// adjoint solve.
    pub fn reduced_gradient(
        &self,
        u: &ControlSignal,
    ) -> Result<(ControlSignal, Trajectory, AdjointTrajectory)> {
        let traj = self.solve(u)?;
        let coeffs = linearize(self.geom, &traj, self.pair)?;
        let data = build_adjoint_data(self.geom, &traj, self.cost)?;
        let adj = solve_adjoint_transpose(self.geom, &coeffs, &data, self.cfg)?;
        let mut samples = Vec::with_capacity(self.cfg.nt + 1);
        samples.push(self.geom.boundary_zero());
        for n in 1..=self.cfg.nt {
            let mut g = adj.q_gamma[n].clone();
            g.axpy(self.cost.b_0, u.sample(n));
            samples.push(g);
        }
        Ok((ControlSignal::new(samples)?, traj, adj))
    }
}

/// Tracking cost of a trajectory/control pair. Time integrals use the
/// right-endpoint rectangle rule of the solver.
pub fn evaluate_cost(
    geom: &Geometry,
    traj: &Trajectory,
    u: &ControlSignal,
    cost: &CostSpec,
) -> Result<f64> {
    let nt = traj.nt();
    cost.check_grids(geom, nt)?;
    if u.nt() != nt {
        return Err(ChcError::GridMismatch(format!(
            "control covers {} steps, trajectory has {nt}",
            u.nt()
        )));
    }
    let dt = traj.config.dt();
    let mut j = 0.0;
    for n in 1..=nt {
        if cost.b_q > 0.0 {
            let mut d = traj.snapshots[n].y.interior.clone();
            d.axpy(-1.0, &cost.z_q[n]);
            j += dt * 0.5 * cost.b_q * geom.dot_h(&d, &d)?;
        }
        if cost.b_sigma > 0.0 {
            let mut d = traj.snapshots[n].y.boundary.clone();
            d.axpy(-1.0, &cost.z_sigma[n]);
            j += dt * 0.5 * cost.b_sigma * geom.dot_hgamma(&d, &d)?;
        }
        if cost.b_0 > 0.0 {
            j += dt * 0.5 * cost.b_0 * geom.dot_hgamma(u.sample(n), u.sample(n))?;
        }
    }
    if cost.b_omega > 0.0 {
        let mut d = traj.snapshots[nt].y.interior.clone();
        d.axpy(-1.0, &cost.z_omega);
        j += 0.5 * cost.b_omega * geom.dot_h(&d, &d)?;
    }
    if cost.b_gamma > 0.0 {
        let mut d = traj.snapshots[nt].y.boundary.clone();
        d.axpy(-1.0, &cost.z_gamma);
        j += 0.5 * cost.b_gamma * geom.dot_hgamma(&d, &d)?;
    }
    Ok(j)
}

/// Outcome of the box projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetStatus {
    Inactive,
    Repaired,
    Infeasible,
}

/// Pointwise clamp to the box, followed by the derivative-budget repair:
/// if the clamped signal exceeds the budget, its zero-time-mean fluctuation
/// is rescaled radially until the budget holds and the result re-clamped
/// once. The repair is reported, never silently ignored.
pub fn project_box(
    geom: &Geometry,
    dt: f64,
    u_raw: &ControlSignal,
    bx: &ControlBox,
) -> Result<(ControlSignal, BudgetStatus)> {
    let mut u = u_raw.clone();
    clamp(&mut u, bx);
    let d = u.derivative_norm(geom, dt)?;
    if d <= bx.m0 * (1.0 + 1e-9) {
        return Ok((u, BudgetStatus::Inactive));
    }
    // time-mean per boundary node
    let nb = geom.n_boundary();
    let nt = u.nt();
    let mut mean = vec![0.0; nb];
    for n in 0..=nt {
        for b in 0..nb {
            mean[b] += u.sample(n).values()[b];
        }
    }
    for m in mean.iter_mut() {
        *m /= (nt + 1) as f64;
    }
    let s = bx.m0 / d * (1.0 - 1e-12);
    for n in 0..=nt {
        for b in 0..nb {
            let v = u.sample(n).values()[b];
            u.sample_mut(n).values_mut()[b] = mean[b] + s * (v - mean[b]);
        }
    }
    clamp(&mut u, bx);
    let d = u.derivative_norm(geom, dt)?;
    if d <= bx.m0 * (1.0 + 1e-9) {
        Ok((u, BudgetStatus::Repaired))
    } else {
        Ok((u, BudgetStatus::Infeasible))
    }
}

fn clamp(u: &mut ControlSignal, bx: &ControlBox) {
    for n in 0..=u.nt() {
        let s = u.sample_mut(n);
        for (b, v) in s.values_mut().iter_mut().enumerate() {
            *v = v.clamp(bx.u_min.at(n, b), bx.u_max.at(n, b));
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PgdOptions {
    pub step0: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub max_iter: usize,
    /// Absolute stationarity tolerance; `None` selects
    /// 1e-8 · (initial stationarity + 1).
    pub stat_tol: Option<f64>,
    pub vi_probes: usize,
    pub seed: u64,
}

impl Default for PgdOptions {
    fn default() -> Self {
        PgdOptions {
            step0: 1.0,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_iter: 100,
            stat_tol: None,
            vi_probes: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub stationarity: f64,
    pub step: f64,
    pub budget_active: bool,
}

#[derive(Debug)]
pub struct OptimizationReport {
    pub iterates: Vec<IterRecord>,
    pub final_control: ControlSignal,
    pub final_trajectory: Trajectory,
    pub final_gradient: ControlSignal,
    pub converged: bool,
    pub line_search_stalled: bool,
    pub stat_tol: f64,
    pub certificate: ViCertificate,
}

/// Projected gradient descent uᵏ⁺¹ = P(uᵏ − γ g(uᵏ)) with Armijo
/// backtracking on J̃; terminates when the projected-gradient residual
/// ‖u − P(u − step0·g)‖_{L²(Σ)} falls under the tolerance.
pub fn projected_gradient_descent(
    problem: &ControlProblem<'_>,
    u0: &ControlSignal,
    opt: &PgdOptions,
) -> Result<OptimizationReport> {
    let geom = problem.geom;
    let dt = problem.dt();
    let (mut u, mut budget) = project_box(geom, dt, u0, problem.bx)?;
    if budget == BudgetStatus::Infeasible {
        return Err(ChcError::ConfigMismatch(
            "initial control violates the derivative budget beyond repair".into(),
        ));
    }
    let (mut j, mut traj) = problem.cost_of(&u)?;
    let (mut g, ..) = problem.reduced_gradient(&u)?;

    let stationarity = |u: &ControlSignal, g: &ControlSignal| -> Result<f64> {
        let mut trial = u.clone();
        trial.axpy(-opt.step0, g);
        let (pu, _) = project_box(geom, dt, &trial, problem.bx)?;
        let mut d = pu;
        d.axpy(-1.0, u);
        d.norm_sigma(geom, dt)
    };

    let mut stat = stationarity(&u, &g)?;
    let stat_tol = opt.stat_tol.unwrap_or(1e-8 * (stat + 1.0));
    let mut iterates = vec![IterRecord {
        iter: 0,
        cost: j,
        stationarity: stat,
        step: 0.0,
        budget_active: budget != BudgetStatus::Inactive,
    }];
    let mut converged = stat <= stat_tol;
    let mut stalled = false;

    for k in 1..=opt.max_iter {
        if converged {
            break;
        }
        let mut gamma = opt.step0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = u.clone();
            trial.axpy(-gamma, &g);
            let (u_try, b_try) = project_box(geom, dt, &trial, problem.bx)?;
            if b_try == BudgetStatus::Infeasible {
                gamma *= opt.shrink;
                continue;
            }
            let (j_try, t_try) = problem.cost_of(&u_try)?;
            let mut du = u_try.clone();
            du.axpy(-1.0, &u);
            let slope = g.dot_sigma(geom, dt, &du)?;
            if j_try <= j + opt.armijo_c * slope {
                accepted = Some((u_try, j_try, t_try, gamma, b_try));
                break;
            }
            gamma *= opt.shrink;
        }
        let Some((u_new, j_new, t_new, gamma, b_new)) = accepted else {
            stalled = true;
            break;
        };
        u = u_new;
        j = j_new;
        traj = t_new;
        budget = b_new;
        let (g_new, ..) = problem.reduced_gradient(&u)?;
        g = g_new;
        stat = stationarity(&u, &g)?;
        iterates.push(IterRecord {
            iter: k,
            cost: j,
            stationarity: stat,
            step: gamma,
            budget_active: budget != BudgetStatus::Inactive,
        });
        converged = stat <= stat_tol;
    }

    let certificate = check_vi(geom, dt, &u, &g, problem.bx, opt.vi_probes, opt.seed)?;
    Ok(OptimizationReport {
        iterates,
        final_control: u,
        final_trajectory: traj,
        final_gradient: g,
        converged,
        line_search_stalled: stalled,
        stat_tol,
        certificate,
    })
}

/// First-order certificate: the variational-inequality pairing ∫_Σ g (v − u)
/// over box corners, seeded random feasible probes, and the projected point.
#[derive(Debug, Clone)]
pub struct ViCertificate {
    /// min over probes of ∫_Σ g (v − u); stationarity means ≥ −tol.
    pub min_pairing: f64,
    pub tol: f64,
    pub probes: usize,
    pub pass: bool,
}

pub fn check_vi(
    geom: &Geometry,
    dt: f64,
    u: &ControlSignal,
    g: &ControlSignal,
    bx: &ControlBox,
    n_probes: usize,
    seed: u64,
) -> Result<ViCertificate> {
    let nt = u.nt();
    let nb = geom.n_boundary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pairing = |v: &ControlSignal| -> Result<f64> {
        let mut d = v.clone();
        d.axpy(-1.0, u);
        g.dot_sigma(geom, dt, &d)
    };

    let corner = |upper: bool| -> ControlSignal {
        let samples = (0..=nt)
            .map(|n| {
                let vals: Vec<f64> = (0..nb)
                    .map(|b| if upper { bx.u_max.at(n, b) } else { bx.u_min.at(n, b) })
                    .collect();
                geom.boundary_from_values(vals).unwrap()
            })
            .collect();
        ControlSignal::new(samples).unwrap()
    };

    let mut probes = vec![corner(false), corner(true)];
    for _ in 0..n_probes {
        let samples = (0..=nt)
            .map(|n| {
                let vals: Vec<f64> = (0..nb)
                    .map(|b| {
                        let (lo, hi) = (bx.u_min.at(n, b), bx.u_max.at(n, b));
                        if hi > lo {
                            rng.gen_range(lo..hi)
                        } else {
                            lo
                        }
                    })
                    .collect();
                geom.boundary_from_values(vals).unwrap()
            })
            .collect();
        let raw = ControlSignal::new(samples)?;
        let (p, _) = project_box(geom, dt, &raw, bx)?;
        probes.push(p);
    }
    // the projected point P(u − g)
    let mut trial = u.clone();
    trial.axpy(-1.0, g);
    probes.push(project_box(geom, dt, &trial, bx)?.0);

    let mut min_pairing = f64::INFINITY;
    for v in &probes {
        min_pairing = min_pairing.min(pairing(v)?);
    }
    // scale: |∫ g (v−u)| is at most ‖g‖·(box diameter)
    let diam = {
        let samples = (0..=nt)
            .map(|n| {
                let vals: Vec<f64> = (0..nb)
                    .map(|b| bx.u_max.at(n, b) - bx.u_min.at(n, b))
                    .collect();
                geom.boundary_from_values(vals).unwrap()
            })
            .collect();
        ControlSignal::new(samples)?.norm_sigma(geom, dt)?
    };
    let tol = 1e-8 * (1.0 + g.norm_sigma(geom, dt)? * diam);
    let n_total = probes.len();
    Ok(ViCertificate {
        min_pairing,
        tol,
        probes: n_total,
        pass: min_pairing >= -tol,
    })
}

/// ‖u − P_box(−q_Γ/b_0)‖ / (‖u‖ + 1e-30): the projection characterization of
/// stationary controls for b_0 > 0 (sample 0 excluded — it carries no
/// quadrature weight).
pub fn projection_gap(
    geom: &Geometry,
    dt: f64,
    u: &ControlSignal,
    q_gamma: &[BoundaryField],
    b_0: f64,
    bx: &ControlBox,
) -> Result<f64> {
    assert!(b_0 > 0.0);
    let nt = u.nt();
    let mut samples = Vec::with_capacity(nt + 1);
    samples.push(u.sample(0).clone());
    for qg in q_gamma.iter().take(nt + 1).skip(1) {
        let mut s = qg.clone();
        s.scale(-1.0 / b_0);
        samples.push(s);
    }
    let raw = ControlSignal::new(samples)?;
    let (proj, _) = project_box(geom, dt, &raw, bx)?;
    let mut d = proj;
    d.axpy(-1.0, u);
    Ok(d.norm_sigma(geom, dt)? / (u.norm_sigma(geom, dt)? + 1e-30))
}
