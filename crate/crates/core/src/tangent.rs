//! The linearized (tangent) problem around a state trajectory.
//!
//! The tangent system is the exact derivative of the discrete update map of
//! [`crate::state::solve_state`] — discretize-then-linearize. Each step
//! solves the converged Newton Jacobian of the corresponding state step, so
//! tangent, adjoint, and reduced gradient are mutually consistent up to
//! linear-solver rounding:
//!
//! ```text
//!   ∫ ∂_t ξ v + ∫ ∇η·∇v = 0
//!   ∫ η v = τ∫ ∂_t ξ v + ∫_Γ ∂_t ξ_Γ v_Γ + ∫ ∇ξ·∇v + ∫_Γ ∇_Γ ξ_Γ·∇_Γ v_Γ
//!           + ∫ λ ξ v + ∫_Γ (λ_Γ ξ_Γ − h_Γ) v_Γ,           ξ(0) = 0,
//! ```
//!
//! with λ = f''(y), λ_Γ = f_Γ''(y_Γ) along the base trajectory (split into
//! implicit/explicit parts exactly as the scheme splits f').

use crate::control::ControlSignal;
use crate::error::{ChcError, Result};
use crate::geometry::{BoundaryField, CoupledField, Geometry, InteriorField};
use crate::linalg::{FactorizedStep, StepSolver};
use crate::potential::PotentialPair;
use crate::state::{BlockKind, Scheme, SolverConfig, StepMatrices, Trajectory};

/// Second derivatives of the potentials along a trajectory, split into the
/// implicit and explicit parts used by the time scheme.
#[derive(Debug, Clone)]
pub struct LinearizedCoefficients {
    /// λ = f''(y) at every step (the full second derivative).
    pub lambda: Vec<InteriorField>,
    /// λ_Γ = f_Γ''(y_Γ) at every step.
    pub lambda_gamma: Vec<BoundaryField>,
    /// Implicit coefficient per step: f'' for the fully implicit scheme,
    /// β' for the convex split.
    pub lam_imp: Vec<InteriorField>,
    pub lam_gamma_imp: Vec<BoundaryField>,
    /// Explicit coefficient (π') per step; `None` for the fully implicit
    /// scheme.
    pub lam_exp: Option<(Vec<InteriorField>, Vec<BoundaryField>)>,
    pub scheme: Scheme,
}

impl LinearizedCoefficients {
    pub fn nt(&self) -> usize {
        self.lambda.len() - 1
    }
}

/// Pointwise second derivatives of the potentials along a feasible
/// trajectory.
pub fn linearize(
    geom: &Geometry,
    traj: &Trajectory,
    pair: &PotentialPair,
) -> Result<LinearizedCoefficients> {
    let nt = traj.nt();
    let mut lambda = Vec::with_capacity(nt + 1);
    let mut lambda_gamma = Vec::with_capacity(nt + 1);
    let mut lam_imp = Vec::with_capacity(nt + 1);
    let mut lamg_imp = Vec::with_capacity(nt + 1);
    let split = traj.config.scheme == Scheme::ConvexSplit;
    let mut lam_exp = if split { Some(Vec::with_capacity(nt + 1)) } else { None };
    let mut lamg_exp = if split { Some(Vec::with_capacity(nt + 1)) } else { None };

    for snap in &traj.snapshots {
        let y = &snap.y.interior;
        let yg = &snap.y.boundary;
        let mut l = Vec::with_capacity(y.len());
        let mut li = Vec::with_capacity(y.len());
        for &v in y.values() {
            l.push(pair.bulk.eval(2, v)?);
            li.push(match traj.config.scheme {
                Scheme::FullyImplicit => pair.bulk.eval(2, v)?,
                Scheme::ConvexSplit => pair.bulk.beta_prime(v)?,
            });
        }
        let mut lg = Vec::with_capacity(yg.len());
        let mut lgi = Vec::with_capacity(yg.len());
        for &v in yg.values() {
            lg.push(pair.boundary.eval(2, v)?);
            lgi.push(match traj.config.scheme {
                Scheme::FullyImplicit => pair.boundary.eval(2, v)?,
                Scheme::ConvexSplit => pair.boundary.beta_prime(v)?,
            });
        }
        lambda.push(geom.interior_from_values(l)?);
        lambda_gamma.push(geom.boundary_from_values(lg)?);
        lam_imp.push(geom.interior_from_values(li)?);
        lamg_imp.push(geom.boundary_from_values(lgi)?);
        if split {
            let le: Vec<f64> = y.values().iter().map(|&v| pair.bulk.pi_prime(v)).collect();
            let lge: Vec<f64> = yg
                .values()
                .iter()
                .map(|&v| pair.boundary.pi_prime(v))
                .collect();
            lam_exp
                .as_mut()
                .unwrap()
                .push(geom.interior_from_values(le)?);
            lamg_exp
                .as_mut()
                .unwrap()
                .push(geom.boundary_from_values(lge)?);
        }
    }

    Ok(LinearizedCoefficients {
        lambda,
        lambda_gamma,
        lam_imp,
        lam_gamma_imp: lamg_imp,
        lam_exp: lam_exp.map(|le| (le, lamg_exp.unwrap())),
        scheme: traj.config.scheme,
    })
}

#[derive(Debug, Clone)]
pub struct TangentTrajectory {
    /// ξ at every step; ξ(0) = 0 and mean ξ = 0 throughout.
    pub xi: Vec<CoupledField>,
    /// η (the linearized chemical potential) at every step.
    pub eta: Vec<InteriorField>,
}

/// Factorized tangent step systems around one base trajectory; solving for
/// many directions shares the factorizations.
pub struct TangentOperator<'a> {
    geom: &'a Geometry,
    sm: StepMatrices,
    facts: Vec<FactorizedStep>,
    coeffs: &'a LinearizedCoefficients,
    nt: usize,
}

impl<'a> TangentOperator<'a> {
    pub fn assemble(
        geom: &'a Geometry,
        coeffs: &'a LinearizedCoefficients,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        if coeffs.nt() != cfg.nt {
            return Err(ChcError::ConfigMismatch(format!(
                "coefficients cover {} steps, config has {}",
                coeffs.nt(),
                cfg.nt
            )));
        }
        let sm = StepMatrices::new(geom, cfg.dt(), cfg.tau);
        let mut solver = StepSolver::new(2 * sm.n);
        let mut facts = Vec::with_capacity(cfg.nt);
        for n in 1..=cfg.nt {
            let lam_bulk = coeffs.lam_imp[n].values();
            let lam_bnd = lift(geom, coeffs.lam_gamma_imp[n].values());
            let trips = sm.system_triplets(BlockKind::Forward, lam_bulk, &lam_bnd);
            facts.push(solver.factor(&trips, n)?);
        }
        Ok(TangentOperator {
            geom,
            sm,
            facts,
            coeffs,
            nt: cfg.nt,
        })
    }

    /// Forward sweep: ξ(0) = 0, then one linear solve per step.
    pub fn solve(&self, h: &ControlSignal) -> Result<TangentTrajectory> {
        if h.nt() != self.nt {
            return Err(ChcError::ConfigMismatch(format!(
                "direction has {} steps, operator has {}",
                h.nt(),
                self.nt
            )));
        }
        let geom = self.geom;
        let n = self.sm.n;
        let dt = self.sm.dt;
        let mut xi = vec![0.0; n];
        let mut xis = Vec::with_capacity(self.nt + 1);
        let mut etas = Vec::with_capacity(self.nt + 1);
        xis.push(geom.coupled(geom.interior_zero())?);
        etas.push(geom.interior_zero());

        let mut rhs = vec![0.0; 2 * n];
        for step in 1..=self.nt {
            for i in 0..n {
                rhs[i] = self.sm.m[i] * xi[i] / dt;
                rhs[n + i] = (self.sm.tau * self.sm.m[i] + self.sm.e_gamma[i]) * xi[i] / dt;
            }
            if let Some((le, lge)) = &self.coeffs.lam_exp {
                let le_prev = le[step - 1].values();
                let lge_prev = lift(geom, lge[step - 1].values());
                for i in 0..n {
                    rhs[n + i] -=
                        (self.sm.m[i] * le_prev[i] + self.sm.e_gamma[i] * lge_prev[i]) * xi[i];
                }
            }
            for (b, &k) in geom.boundary_nodes().iter().enumerate() {
                rhs[n + k] += geom.boundary_weights()[b] * h.sample(step).values()[b];
            }
            let sol = self.facts[step - 1].solve(&rhs);
            xi.copy_from_slice(&sol[..n]);
            xis.push(geom.coupled(geom.interior_from_values(xi.clone())?)?);
            etas.push(geom.interior_from_values(sol[n..].to_vec())?);
        }
        Ok(TangentTrajectory { xi: xis, eta: etas })
    }
}

/// One-shot tangent solve.
pub fn solve_tangent(
    geom: &Geometry,
    coeffs: &LinearizedCoefficients,
    h: &ControlSignal,
    cfg: &SolverConfig,
) -> Result<TangentTrajectory> {
    TangentOperator::assemble(geom, coeffs, cfg)?.solve(h)
}

pub(crate) fn lift(geom: &Geometry, bnd: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; geom.n_nodes()];
    for (b, &k) in geom.boundary_nodes().iter().enumerate() {
        out[k] = bnd[b];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;
    use crate::state::{solve_state, Scheme};
    use std::f64::consts::PI;

    fn setup(
        scheme: Scheme,
    ) -> (
        Geometry,
        PotentialPair,
        SolverConfig,
        Trajectory,
        ControlSignal,
    ) {
        let geom = Geometry::interval_1d(21, 1.0).unwrap();
        let pair = PotentialPair::identical(PotentialSpec::regular_quartic());
        let cfg = SolverConfig::new(0.2, 8, scheme);
        let y0 = geom
            .coupled(geom.interior_from_fn(|x, _| 0.1 + 0.3 * (PI * x).cos()))
            .unwrap();
        let u = ControlSignal::from_fn(&geom, cfg.nt, cfg.t_final, |t, _, _| 0.2 * t);
        let traj = solve_state(&geom, &y0, &u, &pair, &cfg).unwrap();
        (geom, pair, cfg, traj, u)
    }

    #[test]
    fn coefficients_match_potential_second_derivative() {
        let (geom, pair, _, traj, _) = setup(Scheme::FullyImplicit);
        let coeffs = linearize(&geom, &traj, &pair).unwrap();
        for (n, snap) in traj.snapshots.iter().enumerate() {
            for (i, &v) in snap.y.interior.values().iter().enumerate() {
                let want = pair.bulk.eval(2, v).unwrap();
                assert_eq!(coeffs.lambda[n].values()[i], want);
                assert_eq!(coeffs.lam_imp[n].values()[i], want);
            }
        }
        assert!(coeffs.lam_exp.is_none());
    }

    #[test]
    fn coefficients_at_zero_state() {
        let geom = Geometry::interval_1d(9, 1.0).unwrap();
        let pair = PotentialPair::identical(PotentialSpec::logarithmic(3.0).unwrap());
        let cfg = SolverConfig::new(0.1, 2, Scheme::FullyImplicit);
        let y0 = geom.coupled(geom.interior_zero()).unwrap();
        let u = ControlSignal::zeros(&geom, cfg.nt);
        let traj = solve_state(&geom, &y0, &u, &pair, &cfg).unwrap();
        let coeffs = linearize(&geom, &traj, &pair).unwrap();
        // f''_log(0) = 2 − 2c = −4 at c = 3
        for v in coeffs.lambda[0].values() {
            assert!((v + 4.0).abs() < 1e-14);
        }
        // quartic: f''(0) = −1
        let qpair = PotentialPair::identical(PotentialSpec::regular_quartic());
        let qtraj = solve_state(&geom, &y0, &u, &qpair, &cfg).unwrap();
        let qcoeffs = linearize(&geom, &qtraj, &qpair).unwrap();
        for v in qcoeffs.lambda[0].values() {
            assert!((v + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_direction_gives_zero_tangent() {
        let (geom, pair, cfg, traj, _) = setup(Scheme::FullyImplicit);
        let coeffs = linearize(&geom, &traj, &pair).unwrap();
        let h = ControlSignal::zeros(&geom, cfg.nt);
        let tan = solve_tangent(&geom, &coeffs, &h, &cfg).unwrap();
        for x in &tan.xi {
            assert!(x.interior.sup_norm() < 1e-13);
        }
        for e in &tan.eta {
            assert!(e.sup_norm() < 1e-13);
        }
    }

    #[test]
    fn tangent_is_linear_and_superposes() {
        for scheme in [Scheme::FullyImplicit, Scheme::ConvexSplit] {
            let (geom, pair, cfg, traj, _) = setup(scheme);
            let coeffs = linearize(&geom, &traj, &pair).unwrap();
            let op = TangentOperator::assemble(&geom, &coeffs, &cfg).unwrap();
            let h1 = ControlSignal::from_fn(&geom, cfg.nt, cfg.t_final, |t, x, _| {
                (1.0 + t) * (1.0 + 0.5 * x)
            });
            let h2 = ControlSignal::from_fn(&geom, cfg.nt, cfg.t_final, |t, _, _| (5.0 * t).cos());
            let t1 = op.solve(&h1).unwrap();
            let t2 = op.solve(&h2).unwrap();
            // scaling
            let mut h_scaled = h1.clone();
            h_scaled.scale(2.5);
            let ts = op.solve(&h_scaled).unwrap();
            for (a, b) in ts.xi.iter().zip(&t1.xi) {
                let mut d = a.interior.clone();
                d.axpy(-2.5, &b.interior);
                assert!(d.sup_norm() <= 1e-11 * (1.0 + b.interior.sup_norm()));
            }
            // superposition
            let mut h_sum = h1.clone();
            h_sum.axpy(1.0, &h2);
            let tsum = op.solve(&h_sum).unwrap();
            for ((a, b), c) in tsum.xi.iter().zip(&t1.xi).zip(&t2.xi) {
                let mut d = a.interior.clone();
                d.axpy(-1.0, &b.interior);
                d.axpy(-1.0, &c.interior);
                assert!(d.sup_norm() <= 1e-11 * (1.0 + a.interior.sup_norm()));
            }
        }
    }

    #[test]
    fn tangent_mean_is_conserved_at_zero() {
        let (geom, pair, cfg, traj, _) = setup(Scheme::FullyImplicit);
        let coeffs = linearize(&geom, &traj, &pair).unwrap();
        let h = ControlSignal::from_fn(&geom, cfg.nt, cfg.t_final, |t, x, _| t + x);
        let tan = solve_tangent(&geom, &coeffs, &h, &cfg).unwrap();
        for x in &tan.xi {
            let m = geom.mean_value(&x.interior).unwrap();
            assert!(m.abs() <= 1e-11 * (1.0 + x.interior.sup_norm()));
        }
    }

    #[test]
    fn finite_difference_of_state_map_matches_tangent() {
        // (S(u+εh) − S(u))/ε → ξ with first order in ε.
        for scheme in [Scheme::FullyImplicit, Scheme::ConvexSplit] {
            let (geom, pair, cfg, traj, u) = setup(scheme);
            let coeffs = linearize(&geom, &traj, &pair).unwrap();
            let h = ControlSignal::from_fn(&geom, cfg.nt, cfg.t_final, |t, x, _| {
                1.0 + 0.3 * t + 0.2 * x
            });
            let tan = solve_tangent(&geom, &coeffs, &h, &cfg).unwrap();
            let mut errs = Vec::new();
            for eps in [1e-2, 1e-3] {
                let mut up = u.clone();
                up.axpy(eps, &h);
                let tp = solve_state(&geom, &traj.snapshots[0].y, &up, &pair, &cfg).unwrap();
                let mut worst = 0.0f64;
                for n in 0..=cfg.nt {
                    let mut d = tp.snapshots[n].y.interior.clone();
                    d.axpy(-1.0, &traj.snapshots[n].y.interior);
                    d.scale(1.0 / eps);
                    d.axpy(-1.0, &tan.xi[n].interior);
                    worst = worst.max(d.sup_norm());
                }
                errs.push(worst);
            }
            // first order in ε: error drops by ≈ 10 per decade
            assert!(
                errs[1] < 0.2 * errs[0],
                "{scheme:?}: fd errors {errs:?} not first order"
            );
        }
    }
}
