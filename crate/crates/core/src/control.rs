//! Boundary control signals, the admissible box, and the discrete L²(Σ)
//! calculus on the step grid.
//!
//! A [`ControlSignal`] carries nt+1 boundary samples; sample n is the value
//! used on the step from t_{n−1} to t_n (right-endpoint sampling). The t = 0
//! sample never enters the dynamics or the cost, so every Σ-functional here
//! weights samples 1..nt with dt and sample 0 with zero.

use crate::error::{ChcError, Result};
use crate::geometry::{BoundaryField, Geometry};

/// Pointwise bound of the control box: a constant or a full time series.
#[derive(Debug, Clone)]
pub enum Bound {
    Constant(f64),
    Series(Vec<BoundaryField>),
}

impl Bound {
    pub fn at(&self, n: usize, b: usize) -> f64 {
        match self {
            Bound::Constant(c) => *c,
            Bound::Series(s) => s[n].values()[b],
        }
    }
}

/// The admissible set: pointwise bounds plus a time-derivative norm budget.
#[derive(Debug, Clone)]
pub struct ControlBox {
    pub u_min: Bound,
    pub u_max: Bound,
    /// Budget on the discrete ‖∂_t u‖_{L²(Σ)}.
    pub m0: f64,
}

impl ControlBox {
    pub fn constant(u_min: f64, u_max: f64, m0: f64) -> Result<Self> {
        if u_min > u_max {
            return Err(ChcError::ConfigMismatch(format!(
                "empty control box: u_min = {u_min} > u_max = {u_max}"
            )));
        }
        if !(m0 > 0.0) {
            return Err(ChcError::ConfigMismatch(format!(
                "derivative budget must be positive, got {m0}"
            )));
        }
        Ok(ControlBox {
            u_min: Bound::Constant(u_min),
            u_max: Bound::Constant(u_max),
            m0,
        })
    }
}

/// Time-indexed boundary field on the step grid (nt+1 samples).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    samples: Vec<BoundaryField>,
}

impl ControlSignal {
    pub fn new(samples: Vec<BoundaryField>) -> Result<Self> {
        if samples.is_empty() {
            return Err(ChcError::ConfigMismatch("control signal needs samples".into()));
        }
        Ok(ControlSignal { samples })
    }

    pub fn zeros(geom: &Geometry, nt: usize) -> Self {
        ControlSignal {
            samples: (0..=nt).map(|_| geom.boundary_zero()).collect(),
        }
    }

    pub fn constant(geom: &Geometry, nt: usize, c: f64) -> Self {
        ControlSignal {
            samples: (0..=nt).map(|_| geom.boundary_constant(c)).collect(),
        }
    }

    /// Synthesize from a function of (t, x, y) at the boundary nodes.
    pub fn from_fn(
        geom: &Geometry,
        nt: usize,
        t_final: f64,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Self {
        let dt = t_final / nt as f64;
        ControlSignal {
            samples: (0..=nt)
                .map(|n| {
                    let t = n as f64 * dt;
                    geom.boundary_from_fn(|x, y| f(t, x, y))
                })
                .collect(),
        }
    }

    pub fn nt(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn sample(&self, n: usize) -> &BoundaryField {
        &self.samples[n]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut BoundaryField {
        &mut self.samples[n]
    }

    pub fn samples(&self) -> &[BoundaryField] {
        &self.samples
    }

    pub fn axpy(&mut self, alpha: f64, other: &ControlSignal) {
        assert_eq!(self.samples.len(), other.samples.len());
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            a.axpy(alpha, b);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in self.samples.iter_mut() {
            s.scale(alpha);
        }
    }

    /// Discrete inner product of L²(Σ): Σ_{n=1}^{nt} dt ⟨a_n, b_n⟩_{H_Γ}.
    pub fn dot_sigma(&self, geom: &Geometry, dt: f64, other: &ControlSignal) -> Result<f64> {
        if self.samples.len() != other.samples.len() {
            return Err(ChcError::GridMismatch(
                "control signals on different time grids".into(),
            ));
        }
        let mut acc = 0.0;
        for n in 1..self.samples.len() {
            acc += dt * geom.dot_hgamma(&self.samples[n], &other.samples[n])?;
        }
        Ok(acc)
    }

    pub fn norm_sigma(&self, geom: &Geometry, dt: f64) -> Result<f64> {
        Ok(self.dot_sigma(geom, dt, self)?.sqrt())
    }

    /// Discrete ‖∂_t u‖_{L²(Σ)} = (Σ_n dt ‖(u_{n+1} − u_n)/dt‖²)^{1/2}.
    pub fn derivative_norm(&self, geom: &Geometry, dt: f64) -> Result<f64> {
        let mut acc = 0.0;
        for n in 0..self.nt() {
            let mut d = self.samples[n + 1].clone();
            d.axpy(-1.0, &self.samples[n]);
            acc += geom.dot_hgamma(&d, &d)? / dt;
        }
        Ok(acc.sqrt())
    }

    /// Pointwise box feasibility plus the derivative budget with the spec
    /// slack of 1e-9 relative.
    pub fn is_feasible(&self, geom: &Geometry, dt: f64, bx: &ControlBox) -> Result<bool> {
        for (n, s) in self.samples.iter().enumerate() {
            for (b, &v) in s.values().iter().enumerate() {
                if v < bx.u_min.at(n, b) - 1e-14 || v > bx.u_max.at(n, b) + 1e-14 {
                    return Ok(false);
                }
            }
        }
        Ok(self.derivative_norm(geom, dt)? <= bx.m0 * (1.0 + 1e-9))
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.sup_norm()))
    }
}
