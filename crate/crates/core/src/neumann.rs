//! The inverse Neumann Laplacian on zero-mean fields and the scalar
//! mean-reconstruction operator used to decouple the adjoint system.
//!
//! For a zero-mean field v, `apply_n` returns the unique zero-mean u with
//! −Δu = v under the homogeneous-Neumann closure, i.e. K u = M v with
//! mean(u) = 0. The operator is symmetric on the zero-mean subspace:
//! ∫ u 𝒩v = ∫ v 𝒩u = ∫ ∇𝒩u · ∇𝒩v, which makes ∫ v 𝒩v a squared dual
//! seminorm.
//!
//! `apply_m` reconstructs the spatial mean of the adjoint variable p from the
//! q-trajectory. It is the exact discrete counterpart of the continuous
//! mean-value formula: integrating the strong q-equation over Ω turns the
//! bulk term ∫(−Δq) into boundary-row terms (the mimetic closure integrates
//! to zero), so the discrete formula carries the boundary trace of q, the
//! boundary coefficient, and the boundary data alongside the bulk ones. The
//! time integral is a right-endpoint rectangle sum, matching the
//! implicit-Euler adjoint sweep.

use crate::error::{ChcError, Result};
use crate::geometry::{BoundaryField, Geometry, InteriorField};
use crate::linalg::pcg;

/// Tolerance accepted on the mean of a [`ZeroMeanField`], relative to the
/// sup-norm of the field.
pub const ZERO_MEAN_TOL: f64 = 1e-11;

/// Default residual tolerance (H-norm) of the conjugate-direction solve.
pub const DEFAULT_N_TOL: f64 = 1e-11;

/// A field certified to have (numerically) zero mean.
#[derive(Debug, Clone)]
pub struct ZeroMeanField {
    inner: InteriorField,
}

impl ZeroMeanField {
    pub fn new(geom: &Geometry, field: InteriorField) -> Result<Self> {
        let mean = geom.mean_value(&field)?;
        if mean.abs() > ZERO_MEAN_TOL * (field.sup_norm() + 1.0) {
            return Err(ChcError::NotZeroMean { mean });
        }
        Ok(ZeroMeanField { inner: field })
    }

    /// Subtract the mean instead of rejecting it.
    pub fn projected(geom: &Geometry, mut field: InteriorField) -> Result<Self> {
        let mean = geom.mean_value(&field)?;
        for v in field.values_mut() {
            *v -= mean;
        }
        Ok(ZeroMeanField { inner: field })
    }

    pub fn field(&self) -> &InteriorField {
        &self.inner
    }

    pub fn into_field(self) -> InteriorField {
        self.inner
    }
}

/// Iteration cap of the conjugate-direction solve.
pub fn iteration_cap(n_nodes: usize) -> usize {
    (20.0 * (n_nodes as f64).sqrt()).ceil() as usize + 200
}

/// Apply 𝒩: solve K u = M v on the zero-mean subspace by Jacobi-preconditioned
/// conjugate directions, removing the constant-kernel component after every
/// iterate. The residual is measured in the H norm of the strong residual
/// −Δu − v.
pub fn apply_n(geom: &Geometry, v: &ZeroMeanField, tol: f64) -> Result<ZeroMeanField> {
    let n = geom.n_nodes();
    let w = geom.node_weights();
    let rhs: Vec<f64> = v
        .field()
        .values()
        .iter()
        .zip(w)
        .map(|(a, wi)| wi * a)
        .collect();

    // diag(K) as the preconditioner
    let mut diag = vec![0.0; n];
    for &(r, c, val) in geom.stiffness_triplets().iter() {
        if r == c {
            diag[r] += val;
        }
    }

    let vol = geom.omega_measure();
    let apply = |x: &[f64], out: &mut [f64]| geom.apply_stiffness(x, out);
    let project_x = |x: &mut [f64]| {
        let mean: f64 = x.iter().zip(w).map(|(a, wi)| wi * a).sum::<f64>() / vol;
        for xi in x.iter_mut() {
            *xi -= mean;
        }
    };
    // H-norm of the strong residual: r = M v − K u, field residual = M⁻¹ r.
    let res_norm = |r: &[f64]| {
        r.iter()
            .zip(w)
            .map(|(ri, wi)| ri * ri / wi)
            .sum::<f64>()
            .sqrt()
    };

    let cap = iteration_cap(n);
    match pcg(&rhs, apply, Some(&diag), project_x, None, res_norm, tol, cap) {
        Ok((mut u, _)) => {
            project_x(&mut u);
            Ok(ZeroMeanField {
                inner: geom.interior_from_values(u)?,
            })
        }
        Err((_, out)) => Err(ChcError::SolverDiverged {
            solver: "apply_n conjugate directions",
            residual: out.residual,
            iterations: out.iterations,
        }),
    }
}

/// Squared dual seminorm ∫ v 𝒩v ≥ 0.
pub fn dual_norm_sq(geom: &Geometry, v: &ZeroMeanField, tol: f64) -> Result<f64> {
    let nv = apply_n(geom, v, tol)?;
    geom.dot_h(v.field(), nv.field())
}

/// Inputs of the mean-reconstruction operator. All trajectory slices are
/// indexed 0..=nt on the step grid; index 0 of `q` and of the data series is
/// never read.
pub struct MeanReconstruction<'a> {
    pub q: &'a [InteriorField],
    /// Implicit bulk/boundary coefficient per index (f'' or β' at that state).
    pub lam_imp: &'a [InteriorField],
    pub lam_gamma_imp: &'a [BoundaryField],
    /// Explicit coefficient (π') for the convex-split scheme; `None` for the
    /// fully implicit one.
    pub lam_exp: Option<(&'a [InteriorField], &'a [BoundaryField])>,
    pub phi_q: &'a [InteriorField],
    pub phi_sigma: &'a [BoundaryField],
    pub phi_omega_mean: f64,
    pub phi_gamma: &'a BoundaryField,
    pub dt: f64,
}

impl<'a> MeanReconstruction<'a> {
    fn nt(&self) -> usize {
        self.q.len() - 1
    }

    fn check(&self, geom: &Geometry) -> Result<()> {
        let nt = self.nt();
        if self.lam_imp.len() != nt + 1
            || self.lam_gamma_imp.len() != nt + 1
            || self.phi_q.len() != nt + 1
            || self.phi_sigma.len() != nt + 1
        {
            return Err(ChcError::GridMismatch(
                "mean reconstruction series must share the step grid".into(),
            ));
        }
        if let Some((le, lge)) = self.lam_exp {
            if le.len() != nt + 1 || lge.len() != nt + 1 {
                return Err(ChcError::GridMismatch(
                    "explicit coefficient series must share the step grid".into(),
                ));
            }
        }
        for f in self.q.iter().chain(self.lam_imp).chain(self.phi_q) {
            geom.trace(f)?;
        }
        Ok(())
    }
}

/// Mean-pressure history value at a step index.
///
/// At `t_index = nt` this is exactly the mean of the final datum. For
/// `t_index < nt` the value is
///
/// ```text
///   mean(φ_Ω) + (1/|Ω|) ∫_Γ (φ_Γ − q(t_{k+1}))
///   − (1/|Ω|) Σ_{m=k+1}^{nt} dt · [ ∫_Ω λ_m q_m + ∫_Γ λ_Γ,m q_Γ,m
///                                   (+ explicit-split terms on q_{m+1})
///                                   − ∫_Ω φ_Q,m − ∫_Γ φ_Σ,m ]
/// ```
///
/// which is the exact mean component of the transposed adjoint sweep; the
/// decoupled solver reconstructs mean(p) at step n as `apply_m(.., n − 1)`.
pub fn apply_m(geom: &Geometry, data: &MeanReconstruction<'_>, t_index: usize) -> Result<f64> {
    data.check(geom)?;
    let nt = data.nt();
    if t_index > nt {
        return Err(ChcError::GridMismatch(format!(
            "t_index {t_index} beyond final step {nt}"
        )));
    }
    if t_index == nt {
        return Ok(data.phi_omega_mean);
    }
    let vol = geom.omega_measure();
    let wb = geom.boundary_weights();

    let bnd_int = |g: &BoundaryField| -> f64 {
        g.values().iter().zip(wb).map(|(a, w)| w * a).sum::<f64>()
    };

    let mut acc = data.phi_omega_mean + bnd_int(data.phi_gamma) / vol;
    // boundary residue of the telescoped time-difference terms
    let q_first = geom.trace(&data.q[t_index + 1])?;
    acc -= bnd_int(&q_first) / vol;

    for m in (t_index + 1)..=nt {
        // ∫_Ω λ_m q_m + ∫_Γ λ_Γ,m q_Γ,m  (implicit part)
        let mut s = geom.dot_h(&data.lam_imp[m], &data.q[m])?;
        let qg = geom.trace(&data.q[m])?;
        s += geom.dot_hgamma(&data.lam_gamma_imp[m], &qg)?;
        // explicit split part acts on q_{m+1} (zero beyond the final step)
        if let Some((le, lge)) = data.lam_exp {
            if m < nt {
                s += geom.dot_h(&le[m], &data.q[m + 1])?;
                let qg1 = geom.trace(&data.q[m + 1])?;
                s += geom.dot_hgamma(&lge[m], &qg1)?;
            }
        }
        // − ∫_Ω φ_Q − ∫_Γ φ_Σ
        s -= geom.integrate_interior(&data.phi_q[m])?;
        s -= bnd_int(&data.phi_sigma[m]);
        acc -= data.dt * s / vol;
    }
    Ok(acc)
}
