//! Sparse direct factorization of the coupled step systems and a projected
//! preconditioned conjugate-gradient kernel for the symmetric solves.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{ChcError, Result};

/// Sparse LU with a cached symbolic factorization: the step matrices of the
/// state/tangent/adjoint sweeps share one sparsity pattern, so the ordering
/// and symbolic analysis are computed once and reused.
pub(crate) struct StepSolver {
    n: usize,
    symbolic: Option<SymbolicLu<usize>>,
}

impl StepSolver {
    pub(crate) fn new(n: usize) -> Self {
        StepSolver { n, symbolic: None }
    }

    pub(crate) fn factor(
        &mut self,
        triplets: &[(usize, usize, f64)],
        step: usize,
    ) -> Result<FactorizedStep> {
        let trips: Vec<Triplet<usize, usize, f64>> = triplets
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &trips)
            .map_err(|_| ChcError::SingularJacobian { step })?;
        if self.symbolic.is_none() {
            self.symbolic = Some(
                SymbolicLu::try_new(mat.symbolic())
                    .map_err(|_| ChcError::SingularJacobian { step })?,
            );
        }
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone().unwrap(), mat.as_ref())
            .map_err(|_| ChcError::SingularJacobian { step })?;
        Ok(FactorizedStep { lu, n: self.n })
    }
}

pub(crate) struct FactorizedStep {
    lu: Lu<usize, f64>,
    n: usize,
}

impl FactorizedStep {
    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rhs.len(), self.n);
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator, with optional subspace projections.
///
/// `project_x` is applied to iterates only (useful for removing a kernel
/// component that the residual cannot see); `project_z` is applied to the
/// preconditioned residual, which keeps the whole Krylov space inside a
/// closed subspace when the operator is only definite there.
///
/// Convergence is measured by `res_norm` on the raw residual vector.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pcg(
    rhs: &[f64],
    apply: impl Fn(&[f64], &mut [f64]),
    precond_diag: Option<&[f64]>,
    project_x: impl Fn(&mut [f64]),
    project_z: Option<&dyn Fn(&mut [f64])>,
    res_norm: impl Fn(&[f64]) -> f64,
    tol: f64,
    max_iter: usize,
) -> std::result::Result<(Vec<f64>, CgOutcome), (Vec<f64>, CgOutcome)> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut best = res_norm(&r);
    if best <= tol {
        return Ok((
            x,
            CgOutcome {
                iterations: 0,
                residual: best,
            },
        ));
    }

    let precondition = |r: &[f64], z: &mut [f64]| {
        match precond_diag {
            Some(d) => {
                for i in 0..n {
                    z[i] = r[i] / d[i];
                }
            }
            None => z.copy_from_slice(r),
        }
        if let Some(pz) = project_z {
            pz(z);
        }
    };

    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];

    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            return Err((
                x,
                CgOutcome {
                    iterations: it,
                    residual: best,
                },
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project_x(&mut x);
        let res = res_norm(&r);
        best = best.min(res);
        if res <= tol {
            return Ok((
                x,
                CgOutcome {
                    iterations: it,
                    residual: res,
                },
            ));
        }
        precondition(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Err((
        x,
        CgOutcome {
            iterations: max_iter,
            residual: best,
        },
    ))
}
