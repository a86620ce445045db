//! Backward-in-time adjoint system (p, q, q_Γ) in two interchangeable
//! realizations.
//!
//! The **transpose** form sweeps the exact transpose of the discrete tangent
//! step systems backwards, so the duality identity
//!
//! ```text
//!   ∫_Σ q_Γ h_Γ = ∫_Q φ_Q ξ + ∫_Σ φ_Σ ξ_Γ + ∫_Ω φ_Ω ξ(T) + ∫_Γ φ_Γ ξ_Γ(T)
//! ```
//!
//! holds to linear-solver rounding for every direction h with tangent
//! response ξ. Per step it solves
//!
//! ```text
//!   ∫ q v = ∫ ∇p·∇v                                      (all v)
//!   −∫ ∂_t(p + τq) v − ∫_Γ ∂_t q_Γ v_Γ + ∫ ∇q·∇v + ∫_Γ ∇_Γ q_Γ·∇_Γ v_Γ
//!     + ∫ λ q v + ∫_Γ λ_Γ q_Γ v_Γ = ∫ φ_Q v + ∫_Γ φ_Σ v_Γ
//! ```
//!
//! backwards from the final pairing ((p+τq)(T), q_Γ(T)) = (φ_Ω, φ_Γ) in ℋ.
//!
//! The **decoupled** form eliminates p: q has zero mean (test the first
//! equation with v ≡ 1), so p(t) = 𝒩(q(t)) + mean-reconstruction, and the
//! remaining q-system is solved on the zero-mean subspace by conjugate
//! gradients with the inverse Neumann operator inside. The two forms agree in
//! exact arithmetic; comparing them is a genuine cross-implementation check
//! since they share no linear algebra path.

use crate::control::ControlSignal;
use crate::error::{ChcError, Result};
use crate::geometry::{BoundaryField, Geometry, InteriorField};
use crate::linalg::{pcg, FactorizedStep, StepSolver};
use crate::neumann::{apply_m, apply_n, MeanReconstruction, ZeroMeanField};
use crate::optimizer::CostSpec;
use crate::state::{BlockKind, SolverConfig, StepMatrices, Trajectory};
use crate::tangent::{lift, LinearizedCoefficients, TangentTrajectory};

/// Tracking residuals weighted by the cost coefficients:
/// φ_Q = b_Q (y − z_Q), φ_Σ = b_Σ (y_Γ − z_Σ),
/// φ_Ω = b_Ω (y(T) − z_Ω), φ_Γ = b_Γ (y_Γ(T) − z_Γ).
#[derive(Debug, Clone)]
pub struct AdjointData {
    pub phi_q: Vec<InteriorField>,
    pub phi_sigma: Vec<BoundaryField>,
    pub phi_omega: InteriorField,
    pub phi_gamma: BoundaryField,
}

impl AdjointData {
    pub fn nt(&self) -> usize {
        self.phi_q.len() - 1
    }

    pub fn zeros(geom: &Geometry, nt: usize) -> Self {
        AdjointData {
            phi_q: (0..=nt).map(|_| geom.interior_zero()).collect(),
            phi_sigma: (0..=nt).map(|_| geom.boundary_zero()).collect(),
            phi_omega: geom.interior_zero(),
            phi_gamma: geom.boundary_zero(),
        }
    }
}

/// Pointwise weighted differences between a trajectory and the cost targets.
pub fn build_adjoint_data(
    geom: &Geometry,
    traj: &Trajectory,
    cost: &CostSpec,
) -> Result<AdjointData> {
    let nt = traj.nt();
    cost.check_grids(geom, nt)?;
    let mut phi_q = Vec::with_capacity(nt + 1);
    let mut phi_sigma = Vec::with_capacity(nt + 1);
    for n in 0..=nt {
        let mut f = traj.snapshots[n].y.interior.clone();
        f.axpy(-1.0, &cost.z_q[n]);
        f.scale(cost.b_q);
        phi_q.push(f);
        let mut g = traj.snapshots[n].y.boundary.clone();
        g.axpy(-1.0, &cost.z_sigma[n]);
        g.scale(cost.b_sigma);
        phi_sigma.push(g);
    }
    let mut phi_omega = traj.snapshots[nt].y.interior.clone();
    phi_omega.axpy(-1.0, &cost.z_omega);
    phi_omega.scale(cost.b_omega);
    let mut phi_gamma = traj.snapshots[nt].y.boundary.clone();
    phi_gamma.axpy(-1.0, &cost.z_gamma);
    phi_gamma.scale(cost.b_gamma);
    Ok(AdjointData {
        phi_q,
        phi_sigma,
        phi_omega,
        phi_gamma,
    })
}

/// Adjoint solution on the step grid. Index 0 is a zero placeholder: the
/// discrete multipliers live at steps 1..nt.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub p: Vec<InteriorField>,
    pub q: Vec<InteriorField>,
    pub q_gamma: Vec<BoundaryField>,
}

impl AdjointTrajectory {
    pub fn nt(&self) -> usize {
        self.q.len() - 1
    }
}

/// Factorized transpose step systems around one coefficient set.
pub struct AdjointOperator<'a> {
    geom: &'a Geometry,
    sm: StepMatrices,
    facts: Vec<FactorizedStep>,
    coeffs: &'a LinearizedCoefficients,
    nt: usize,
}

impl<'a> AdjointOperator<'a> {
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
            let trips = sm.system_triplets(BlockKind::AdjointTranspose, lam_bulk, &lam_bnd);
            facts.push(solver.factor(&trips, n)?);
        }
        Ok(AdjointOperator {
            geom,
            sm,
            facts,
            coeffs,
            nt: cfg.nt,
        })
    }

    /// Backward sweep n = nt..1.
    pub fn solve(&self, data: &AdjointData) -> Result<AdjointTrajectory> {
        if data.nt() != self.nt {
            return Err(ChcError::GridMismatch(format!(
                "adjoint data covers {} steps, operator has {}",
                data.nt(),
                self.nt
            )));
        }
        let geom = self.geom;
        let n = self.sm.n;
        let dt = self.sm.dt;
        let nt = self.nt;
        let mut p = vec![geom.interior_zero(); nt + 1];
        let mut q = vec![geom.interior_zero(); nt + 1];
        let mut qg = vec![geom.boundary_zero(); nt + 1];

        let mut rhs = vec![0.0; 2 * n];
        for step in (1..=nt).rev() {
            rhs[..n].fill(0.0);
            let r2 = &mut rhs[n..];
            let phi_q = data.phi_q[step].values();
            let phi_s = lift(geom, data.phi_sigma[step].values());
            for i in 0..n {
                r2[i] = self.sm.m[i] * phi_q[i] + self.sm.e_gamma[i] * phi_s[i];
            }
            if step == nt {
                let pom = data.phi_omega.values();
                let pg = lift(geom, data.phi_gamma.values());
                for i in 0..n {
                    r2[i] += (self.sm.m[i] * pom[i] + self.sm.e_gamma[i] * pg[i]) / dt;
                }
            } else {
                let pnext = p[step + 1].values();
                let qnext = q[step + 1].values();
                for i in 0..n {
                    r2[i] += self.sm.m[i] * pnext[i] / dt
                        + (self.sm.tau * self.sm.m[i] + self.sm.e_gamma[i]) * qnext[i] / dt;
                }
                if let Some((le, lge)) = &self.coeffs.lam_exp {
                    let le_n = le[step].values();
                    let lge_n = lift(geom, lge[step].values());
                    for i in 0..n {
                        r2[i] -=
                            (self.sm.m[i] * le_n[i] + self.sm.e_gamma[i] * lge_n[i]) * qnext[i];
                    }
                }
            }
            let sol = self.facts[step - 1].solve(&rhs);
            p[step] = geom.interior_from_values(sol[..n].to_vec())?;
            q[step] = geom.interior_from_values(sol[n..].to_vec())?;
            qg[step] = geom.trace(&q[step])?;
        }
        Ok(AdjointTrajectory {
            p,
            q,
            q_gamma: qg,
        })
    }
}

/// One-shot transpose adjoint solve.
pub fn solve_adjoint_transpose(
    geom: &Geometry,
    coeffs: &LinearizedCoefficients,
    data: &AdjointData,
    cfg: &SolverConfig,
) -> Result<AdjointTrajectory> {
    AdjointOperator::assemble(geom, coeffs, cfg)?.solve(data)
}

/// Decoupled solve: backward q-system on the zero-mean subspace with the
/// inverse Neumann operator, then p reconstructed as 𝒩(q) plus its mean
/// history.
pub fn solve_adjoint_decoupled(
    geom: &Geometry,
    coeffs: &LinearizedCoefficients,
    data: &AdjointData,
    cfg: &SolverConfig,
) -> Result<AdjointTrajectory> {
    if coeffs.nt() != cfg.nt || data.nt() != cfg.nt {
        return Err(ChcError::GridMismatch(
            "decoupled adjoint: series must share the step grid".into(),
        ));
    }
    let nt = cfg.nt;
    let dt = cfg.dt();
    let n = geom.n_nodes();
    let sm = StepMatrices::new(geom, dt, cfg.tau);
    let w = geom.node_weights();
    let wnorm2: f64 = w.iter().map(|v| v * v).sum();

    // euclidean-orthogonal projector onto { v : Σ w_i v_i = 0 }
    let project = |v: &mut [f64]| {
        let c: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wnorm2;
        for (vi, wi) in v.iter_mut().zip(w) {
            *vi -= c * wi;
        }
    };
    let res_norm = |r: &[f64]| {
        r.iter()
            .zip(w)
            .zip(&sm.e_gamma)
            .map(|((ri, mi), ei)| ri * ri / (mi + ei))
            .sum::<f64>()
            .sqrt()
    };

    let n_tol = 1e-13;
    let apply_inverse = |v: &[f64]| -> Result<Vec<f64>> {
        let f = geom.interior_from_values(v.to_vec())?;
        let zm = ZeroMeanField::projected(geom, f)?;
        let tol = n_tol * (1.0 + zm.field().sup_norm());
        Ok(apply_n(geom, &zm, tol)?.into_field().values().to_vec())
    };

    let mut q = vec![geom.interior_zero(); nt + 1];

    for step in (1..=nt).rev() {
        let lam_bulk = coeffs.lam_imp[step].values().to_vec();
        let lam_bnd = lift(geom, coeffs.lam_gamma_imp[step].values());

        // right-hand side
        let mut rhs = vec![0.0; n];
        let phi_q = data.phi_q[step].values();
        let phi_s = lift(geom, data.phi_sigma[step].values());
        for i in 0..n {
            rhs[i] = sm.m[i] * phi_q[i] + sm.e_gamma[i] * phi_s[i];
        }
        if step == nt {
            let pom = data.phi_omega.values();
            let pg = lift(geom, data.phi_gamma.values());
            for i in 0..n {
                rhs[i] += (sm.m[i] * pom[i] + sm.e_gamma[i] * pg[i]) / dt;
            }
        } else {
            let qnext = q[step + 1].values().to_vec();
            let nq = apply_inverse(&qnext)?;
            for i in 0..n {
                rhs[i] += (sm.m[i] * nq[i] + (sm.tau * sm.m[i] + sm.e_gamma[i]) * qnext[i]) / dt;
            }
            if let Some((le, lge)) = &coeffs.lam_exp {
                let le_n = le[step].values();
                let lge_n = lift(geom, lge[step].values());
                for i in 0..n {
                    rhs[i] -= (sm.m[i] * le_n[i] + sm.e_gamma[i] * lge_n[i]) * qnext[i];
                }
            }
        }
        project(&mut rhs);

        // preconditioner: the diagonal of the operator without the 𝒩 part
        let mut diag = vec![0.0; n];
        for &(r, c, v) in geom
            .stiffness_triplets()
            .iter()
            .chain(&geom.boundary_stiffness_triplets())
        {
            if r == c {
                diag[r] += v;
            }
        }
        for i in 0..n {
            let base = (sm.tau * sm.m[i] + sm.e_gamma[i]) / dt;
            diag[i] += base + sm.m[i] * lam_bulk[i] + sm.e_gamma[i] * lam_bnd[i];
            if diag[i] <= 0.0 {
                diag[i] = base;
            }
        }

        let apply = |v: &[f64], out: &mut [f64]| {
            // out = [M 𝒩 v + (τM + E_Γ) v]/dt + (K + K_Γ) v + D_i v, projected
            let nv = apply_inverse(v).expect("inverse Neumann solve inside decoupled adjoint");
            let mut kq = vec![0.0; n];
            geom.apply_stiffness(v, &mut kq);
            let mut kgq = vec![0.0; n];
            geom.apply_boundary_stiffness(v, &mut kgq);
            for i in 0..n {
                out[i] = (sm.m[i] * nv[i] + (sm.tau * sm.m[i] + sm.e_gamma[i]) * v[i]) / dt
                    + kq[i]
                    + kgq[i]
                    + (sm.m[i] * lam_bulk[i] + sm.e_gamma[i] * lam_bnd[i]) * v[i];
            }
            let c: f64 = out.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wnorm2;
            for (oi, wi) in out.iter_mut().zip(w) {
                *oi -= c * wi;
            }
        };

        let tol = 1e-12 * (1.0 + res_norm(&rhs));
        let cap = 40 * (n as f64).sqrt().ceil() as usize + 400;
        let proj_z: &dyn Fn(&mut [f64]) = &project;
        match pcg(
            &rhs,
            apply,
            Some(&diag),
            &project,
            Some(proj_z),
            res_norm,
            tol,
            cap,
        ) {
            Ok((sol, _)) => {
                q[step] = geom.interior_from_values(sol)?;
            }
            Err((_, out)) => {
                return Err(ChcError::SolverDiverged {
                    solver: "decoupled adjoint conjugate gradients",
                    residual: out.residual,
                    iterations: out.iterations,
                })
            }
        }
    }

    // reconstruct p(t_n) = 𝒩(q_n) + mean history
    let phi_omega_mean = geom.mean_value(&data.phi_omega)?;
    let (lam_exp_refs, lamg_exp_refs) = match &coeffs.lam_exp {
        Some((a, b)) => (Some(a.as_slice()), Some(b.as_slice())),
        None => (None, None),
    };
    let mean_data = MeanReconstruction {
        q: &q,
        lam_imp: &coeffs.lam_imp,
        lam_gamma_imp: &coeffs.lam_gamma_imp,
        lam_exp: lam_exp_refs.map(|a| (a, lamg_exp_refs.unwrap())),
        phi_q: &data.phi_q,
        phi_sigma: &data.phi_sigma,
        phi_omega_mean,
        phi_gamma: &data.phi_gamma,
        dt,
    };
    let mut p = vec![geom.interior_zero(); nt + 1];
    let mut qg = vec![geom.boundary_zero(); nt + 1];
    for step in 1..=nt {
        let zm = ZeroMeanField::projected(geom, q[step].clone())?;
        let tol = n_tol * (1.0 + zm.field().sup_norm());
        let mut pf = apply_n(geom, &zm, tol)?.into_field();
        let mean = apply_m(geom, &mean_data, step - 1)?;
        for v in pf.values_mut() {
            *v += mean;
        }
        p[step] = pf;
        qg[step] = geom.trace(&q[step])?;
    }
    Ok(AdjointTrajectory { p, q, q_gamma: qg })
}

/// Relative defect of the duality identity, recomputed by plain quadrature
/// from the supplied trajectories.
pub fn check_duality(
    geom: &Geometry,
    dt: f64,
    adj: &AdjointTrajectory,
    tan: &TangentTrajectory,
    data: &AdjointData,
    h: &ControlSignal,
) -> Result<f64> {
    let nt = adj.nt();
    if tan.xi.len() != nt + 1 || data.nt() != nt || h.nt() != nt {
        return Err(ChcError::GridMismatch(
            "duality check: series must share the step grid".into(),
        ));
    }
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for n in 1..=nt {
        lhs += dt * geom.dot_hgamma(&adj.q_gamma[n], h.sample(n))?;
        rhs += dt * geom.dot_h(&tan.xi[n].interior, &data.phi_q[n])?;
        rhs += dt * geom.dot_hgamma(&tan.xi[n].boundary, &data.phi_sigma[n])?;
    }
    rhs += geom.dot_h(&tan.xi[nt].interior, &data.phi_omega)?;
    rhs += geom.dot_hgamma(&tan.xi[nt].boundary, &data.phi_gamma)?;
    Ok((lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-30))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlSignal;
    use crate::potential::{PotentialPair, PotentialSpec};
    use crate::state::{solve_state, Scheme};
    use crate::tangent::{linearize, solve_tangent};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(
        scheme: Scheme,
    ) -> (
        Geometry,
        PotentialPair,
        SolverConfig,
        Trajectory,
        LinearizedCoefficients,
    ) {
        let geom = Geometry::interval_1d(17, 1.0).unwrap();
        let pair = PotentialPair::identical(PotentialSpec::regular_quartic());
        let cfg = SolverConfig::new(0.2, 6, scheme);
        let y0 = geom
            .coupled(geom.interior_from_fn(|x, _| 0.1 + 0.25 * (PI * x).cos()))
            .unwrap();
        let u = ControlSignal::from_fn(&geom, cfg.nt, cfg.t_final, |t, _, _| 0.1 * (1.0 + t));
        let traj = solve_state(&geom, &y0, &u, &pair, &cfg).unwrap();
        let coeffs = linearize(&geom, &traj, &pair).unwrap();
        (geom, pair, cfg, traj, coeffs)
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
        let samples = (0..=nt)
            .map(|_| {
                let v: Vec<f64> = (0..geom.n_boundary())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                geom.boundary_from_values(v).unwrap()
            })
            .collect();
        ControlSignal::new(samples).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_adjoint() {
        let (geom, _, cfg, _, coeffs) = setup(Scheme::FullyImplicit);
        let data = AdjointData::zeros(&geom, cfg.nt);
        for adj in [
            solve_adjoint_transpose(&geom, &coeffs, &data, &cfg).unwrap(),
            solve_adjoint_decoupled(&geom, &coeffs, &data, &cfg).unwrap(),
        ] {
            for n in 0..=cfg.nt {
                assert!(adj.p[n].sup_norm() < 1e-12);
                assert!(adj.q[n].sup_norm() < 1e-12);
                assert!(adj.q_gamma[n].sup_norm() < 1e-12);
            }
        }
    }

    #[test]
    fn final_condition_bookkeeping() {
        // φ_Ω ≡ 1, all else zero: p ≡ 1, q ≡ 0, so mean p(T) = 1.
        let (geom, _, cfg, _, coeffs) = setup(Scheme::FullyImplicit);
        let mut data = AdjointData::zeros(&geom, cfg.nt);
        data.phi_omega = geom.interior_constant(1.0);
        let adj = solve_adjoint_transpose(&geom, &coeffs, &data, &cfg).unwrap();
        let nt = cfg.nt;
        assert!(geom.mean_value(&adj.q[nt]).unwrap().abs() < 1e-12);
        let mut pq = adj.p[nt].clone();
        pq.axpy(cfg.tau, &adj.q[nt]);
        assert!((geom.mean_value(&pq).unwrap() - 1.0).abs() < 1e-11);
        for i in 0..geom.n_nodes() {
            assert!((adj.p[nt].values()[i] - 1.0).abs() < 1e-10);
            assert!(adj.q[nt].values()[i].abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_q_has_zero_mean_and_exact_trace() {
        let (geom, _, cfg, _, coeffs) = setup(Scheme::ConvexSplit);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = random_data(&geom, cfg.nt, &mut rng);
        let adj = solve_adjoint_transpose(&geom, &coeffs, &data, &cfg).unwrap();
        for n in 1..=cfg.nt {
            let m = geom.mean_value(&adj.q[n]).unwrap();
            assert!(m.abs() <= 1e-11 * (1.0 + adj.q[n].sup_norm()));
            let tr = geom.trace(&adj.q[n]).unwrap();
            assert_eq!(tr.values(), adj.q_gamma[n].values());
        }
    }

    #[test]
    fn discrete_primaadj_holds() {
        // ∫ q v = ∫ ∇p·∇v for every nodal test function.
        let (geom, _, cfg, _, coeffs) = setup(Scheme::FullyImplicit);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = random_data(&geom, cfg.nt, &mut rng);
        let adj = solve_adjoint_transpose(&geom, &coeffs, &data, &cfg).unwrap();
        let n = geom.n_nodes();
        for step in 1..=cfg.nt {
            let mut kp = vec![0.0; n];
            geom.apply_stiffness(adj.p[step].values(), &mut kp);
            for i in 0..n {
                let mq = geom.node_weights()[i] * adj.q[step].values()[i];
                assert!(
                    (mq - kp[i]).abs() < 1e-10 * (1.0 + adj.q[step].sup_norm()),
                    "step {step} node {i}"
                );
            }
        }
    }

    #[test]
    fn duality_identity_random_data() {
        for scheme in [Scheme::FullyImplicit, Scheme::ConvexSplit] {
            let (geom, _, cfg, _, coeffs) = setup(scheme);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let op = AdjointOperator::assemble(&geom, &coeffs, &cfg).unwrap();
            for _ in 0..5 {
                let data = random_data(&geom, cfg.nt, &mut rng);
                let h = random_direction(&geom, cfg.nt, &mut rng);
                let adj = op.solve(&data).unwrap();
                let tan = solve_tangent(&geom, &coeffs, &h, &cfg).unwrap();
                let r = check_duality(&geom, cfg.dt(), &adj, &tan, &data, &h).unwrap();
                assert!(r <= 1e-10, "{scheme:?}: duality residual {r:.3e}");
            }
        }
    }

    #[test]
    fn duality_trivial_cases() {
        let (geom, _, cfg, _, coeffs) = setup(Scheme::FullyImplicit);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_data(&geom, cfg.nt, &mut rng);
        let adj = solve_adjoint_transpose(&geom, &coeffs, &data, &cfg).unwrap();
        let h0 = ControlSignal::zeros(&geom, cfg.nt);
        let tan0 = solve_tangent(&geom, &coeffs, &h0, &cfg).unwrap();
        let r = check_duality(&geom, cfg.dt(), &adj, &tan0, &data, &h0).unwrap();
        assert!(r < 1e-12 || r == 0.0);
    }

    #[test]
    fn decoupled_matches_transpose_without_final_weights() {
        for scheme in [Scheme::FullyImplicit, Scheme::ConvexSplit] {
            let (geom, _, cfg, _, coeffs) = setup(scheme);
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let mut data = random_data(&geom, cfg.nt, &mut rng);
            // the strict equivalence regime: b_Ω = b_Γ = 0
            data.phi_omega = geom.interior_zero();
            data.phi_gamma = geom.boundary_zero();
            let a = solve_adjoint_transpose(&geom, &coeffs, &data, &cfg).unwrap();
            let b = solve_adjoint_decoupled(&geom, &coeffs, &data, &cfg).unwrap();
            let mut worst = 0.0f64;
            let mut scale = 0.0f64;
            for n in 1..=cfg.nt {
                let mut dq = a.q[n].clone();
                dq.axpy(-1.0, &b.q[n]);
                let mut dp = a.p[n].clone();
                dp.axpy(-1.0, &b.p[n]);
                worst = worst.max(dq.sup_norm()).max(dp.sup_norm());
                scale = scale.max(a.q[n].sup_norm()).max(a.p[n].sup_norm());
            }
            assert!(
                worst <= 1e-8 * (1.0 + scale),
                "{scheme:?}: decoupled/transpose gap {worst:.3e} (scale {scale:.3e})"
            );
        }
    }

    #[test]
    fn reconstructed_p_solves_the_neumann_identity() {
        // ∫ q v = ∫ ∇p·∇v for the decoupled solution too.
        let (geom, _, cfg, _, coeffs) = setup(Scheme::FullyImplicit);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data = random_data(&geom, cfg.nt, &mut rng);
        data.phi_omega = geom.interior_zero();
        data.phi_gamma = geom.boundary_zero();
        let adj = solve_adjoint_decoupled(&geom, &coeffs, &data, &cfg).unwrap();
        let n = geom.n_nodes();
        for step in 1..=cfg.nt {
            let mut kp = vec![0.0; n];
            geom.apply_stiffness(adj.p[step].values(), &mut kp);
            for i in 0..n {
                let mq = geom.node_weights()[i] * adj.q[step].values()[i];
                assert!((mq - kp[i]).abs() <= 1e-10 * (1.0 + adj.q[step].sup_norm()));
            }
        }
    }

    #[test]
    fn adjoint_is_linear_in_data() {
        let (geom, _, cfg, _, coeffs) = setup(Scheme::FullyImplicit);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let op = AdjointOperator::assemble(&geom, &coeffs, &cfg).unwrap();
        let d1 = random_data(&geom, cfg.nt, &mut rng);
        let mut d2 = d1.clone();
        for f in d2.phi_q.iter_mut() {
            f.scale(3.0);
        }
        for f in d2.phi_sigma.iter_mut() {
            f.scale(3.0);
        }
        d2.phi_omega.scale(3.0);
        d2.phi_gamma.scale(3.0);
        let a1 = op.solve(&d1).unwrap();
        let a2 = op.solve(&d2).unwrap();
        for n in 1..=cfg.nt {
            let mut d = a2.q[n].clone();
            d.axpy(-3.0, &a1.q[n]);
            assert!(d.sup_norm() <= 1e-11 * (1.0 + a2.q[n].sup_norm()));
        }
    }
}
