//! Bulk and boundary double-well potentials with derivatives up to third
//! order, the convex/concave splitting of f', and the structural-assumption
//! checks used by the shipped configurations.
//!
//! Two families are implemented:
//!
//! - the regular quartic well  f(r) = ¼ (r² − 1)²  on (−∞, +∞),
//! - the logarithmic well  f(r) = (1+r)ln(1+r) + (1−r)ln(1−r) − c r²  on (−1, 1).
//!
//! The splitting f' = β + π keeps β monotone (diverging at the domain ends for
//! the logarithmic family) and π with a bounded derivative:
//! quartic: β = r³, π = −r; logarithmic: β = ln((1+r)/(1−r)), π = −2cr.

use crate::error::{ChcError, Result};

/// Evaluation within this distance of a logarithmic endpoint raises
/// [`ChcError::DomainViolation`] instead of returning ±∞.
pub const ENDPOINT_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    RegularQuartic,
    Logarithmic { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    kind: PotentialKind,
}

impl PotentialSpec {
    pub fn regular_quartic() -> Self {
        PotentialSpec {
            kind: PotentialKind::RegularQuartic,
        }
    }

    pub fn logarithmic(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(ChcError::ConfigMismatch(format!(
                "logarithmic potential needs c > 0, got {c}"
            )));
        }
        Ok(PotentialSpec {
            kind: PotentialKind::Logarithmic { c },
        })
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    /// Open domain (r_minus, r_plus).
    pub fn domain(&self) -> (f64, f64) {
        match self.kind {
            PotentialKind::RegularQuartic => (f64::NEG_INFINITY, f64::INFINITY),
            PotentialKind::Logarithmic { .. } => (-1.0, 1.0),
        }
    }

    fn check_domain(&self, r: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        let ok = match self.kind {
            PotentialKind::RegularQuartic => r.is_finite(),
            PotentialKind::Logarithmic { .. } => {
                r > lo + ENDPOINT_GUARD && r < hi - ENDPOINT_GUARD
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ChcError::DomainViolation { value: r, lo, hi })
        }
    }

    /// k-th derivative of the potential at r, k = 0..=3.
    pub fn eval(&self, order: usize, r: f64) -> Result<f64> {
        assert!(order <= 3, "derivative order must be 0..=3");
        self.check_domain(r)?;
        Ok(match self.kind {
            PotentialKind::RegularQuartic => match order {
                0 => 0.25 * (r * r - 1.0).powi(2),
                1 => r * r * r - r,
                2 => 3.0 * r * r - 1.0,
                _ => 6.0 * r,
            },
            PotentialKind::Logarithmic { c } => match order {
                0 => (1.0 + r) * (1.0 + r).ln() + (1.0 - r) * (1.0 - r).ln() - c * r * r,
                1 => ((1.0 + r) / (1.0 - r)).ln() - 2.0 * c * r,
                2 => 1.0 / (1.0 + r) + 1.0 / (1.0 - r) - 2.0 * c,
                _ => -1.0 / (1.0 + r).powi(2) + 1.0 / (1.0 - r).powi(2),
            },
        })
    }

    /// Splitting f'(r) = β(r) + π(r) with β monotone nondecreasing.
    pub fn convex_concave_split(&self, r: f64) -> Result<(f64, f64)> {
        self.check_domain(r)?;
        Ok(match self.kind {
            PotentialKind::RegularQuartic => (r * r * r, -r),
            PotentialKind::Logarithmic { c } => (((1.0 + r) / (1.0 - r)).ln(), -2.0 * c * r),
        })
    }

    /// β'(r) ≥ 0, the implicit coefficient of the convex-split Jacobian.
    pub fn beta_prime(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        Ok(match self.kind {
            PotentialKind::RegularQuartic => 3.0 * r * r,
            PotentialKind::Logarithmic { .. } => 2.0 / (1.0 - r * r),
        })
    }

    /// π'(r), constant for both families.
    pub fn pi_prime(&self, _r: f64) -> f64 {
        match self.kind {
            PotentialKind::RegularQuartic => -1.0,
            PotentialKind::Logarithmic { c } => -2.0 * c,
        }
    }

    /// Largest value strictly inside the domain at distance `guard` from the
    /// upper end (`+∞` stays unbounded for the quartic family).
    pub fn clamp_into(&self, r: f64, guard: f64) -> f64 {
        match self.kind {
            PotentialKind::RegularQuartic => r,
            PotentialKind::Logarithmic { .. } => r.clamp(-1.0 + guard, 1.0 - guard),
        }
    }

    pub fn contains(&self, r: f64, guard: f64) -> bool {
        match self.kind {
            PotentialKind::RegularQuartic => r.is_finite(),
            PotentialKind::Logarithmic { .. } => r >= -1.0 + guard && r <= 1.0 - guard,
        }
    }
}

/// A bulk/boundary pair together with the constants of the compatibility
/// bound |f'(r)| ≤ η |f_Γ'(r)| + C.
#[derive(Debug, Clone, Copy)]
pub struct PotentialPair {
    pub bulk: PotentialSpec,
    pub boundary: PotentialSpec,
    pub eta: f64,
    pub compat_c: f64,
}

impl PotentialPair {
    pub fn new(bulk: PotentialSpec, boundary: PotentialSpec, eta: f64, compat_c: f64) -> Result<Self> {
        if bulk.domain() != boundary.domain() {
            return Err(ChcError::ConfigMismatch(
                "bulk and boundary potential domains must coincide".into(),
            ));
        }
        if !(eta > 0.0) || !(compat_c >= 0.0) {
            return Err(ChcError::ConfigMismatch(format!(
                "need eta > 0 and C >= 0, got eta = {eta}, C = {compat_c}"
            )));
        }
        Ok(PotentialPair {
            bulk,
            boundary,
            eta,
            compat_c,
        })
    }

    /// Identical potentials dominate themselves with η = 1, C = 0.
    pub fn identical(spec: PotentialSpec) -> Self {
        PotentialPair {
            bulk: spec,
            boundary: spec,
            eta: 1.0,
            compat_c: 0.0,
        }
    }

    /// Sample the structural assumptions on a dense grid and report the
    /// evidence. Report-only: never fails.
    pub fn check_assumptions(&self, samples: usize) -> AssumptionReport {
        assert!(samples >= 2);
        let (lo, hi) = self.bulk.domain();
        // Sample window: full domain for the logarithmic family (shrunk away
        // from the singular endpoints), a fixed window for the quartic one.
        let (a, b) = if lo.is_finite() {
            (lo + 1e-6, hi - 1e-6)
        } else {
            (-4.0, 4.0)
        };
        let mut max_violation = 0.0_f64;
        let mut worst_r = a;
        for k in 0..samples {
            let r = a + (b - a) * k as f64 / (samples - 1) as f64;
            let fb = self.bulk.eval(1, r).unwrap_or(f64::INFINITY);
            let fg = self.boundary.eval(1, r).unwrap_or(f64::INFINITY);
            let gap = fb.abs() - (self.eta * fg.abs() + self.compat_c);
            if gap > max_violation {
                max_violation = gap;
                worst_r = r;
            }
        }
        // Endpoint divergence evidence for singular families: |f'| must grow
        // as the sample approaches the endpoint.
        let divergence = if lo.is_finite() {
            let near = self.bulk.eval(1, hi - 1e-9).map(f64::abs).unwrap_or(0.0);
            let far = self.bulk.eval(1, hi - 1e-3).map(f64::abs).unwrap_or(0.0);
            Some((far, near))
        } else {
            None
        };
        AssumptionReport {
            samples,
            max_violation,
            worst_r,
            endpoint_divergence: divergence,
        }
    }
}

/// Outcome of [`PotentialPair::check_assumptions`].
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub samples: usize,
    /// max over samples of |f'| − (η|f_Γ'| + C); ≤ 0 means the bound holds.
    pub max_violation: f64,
    pub worst_r: f64,
    /// (|f'| at moderate distance, |f'| near the endpoint) for singular
    /// families; the second entry must dominate the first.
    pub endpoint_divergence: Option<(f64, f64)>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        let compat = self.max_violation <= 1e-12;
        let diverges = match self.endpoint_divergence {
            Some((far, near)) => near > 2.0 * far && near > 10.0,
            None => true,
        };
        compat && diverges
    }
}
