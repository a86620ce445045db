//! Run configuration: one TOML file with sections per module. Unknown keys
//! are rejected so typos fail loudly instead of silently running defaults.

use anyhow::{bail, Context, Result};
use chc_core::control::{ControlBox, ControlSignal};
use chc_core::geometry::{CoupledField, Geometry, InteriorField};
use chc_core::optimizer::CostSpec;
use chc_core::potential::{PotentialPair, PotentialSpec};
use chc_core::state::{Scheme, SolverConfig};
use serde::Deserialize;
use std::f64::consts::PI;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<String>,
    pub geometry: GeometrySection,
    pub potentials: PotentialsSection,
    pub solver: SolverSection,
    pub initial: FieldSpec,
    pub cost: CostSection,
    pub control: ControlSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub mode: GeometryMode,
    pub nx: usize,
    pub lx: f64,
    pub ny: Option<usize>,
    pub ly: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryMode {
    Interval1d,
    Strip2d,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialsSection {
    pub bulk: PotentialName,
    pub boundary: PotentialName,
    /// Well-depth parameter of the logarithmic family.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub compat_c: f64,
}

fn default_c() -> f64 {
    3.0
}

fn default_eta() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    RegularQuartic,
    Logarithmic,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub t_final: f64,
    pub nt: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub scheme: SchemeName,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max")]
    pub newton_max: usize,
    #[serde(default = "default_guard")]
    pub guard_delta: f64,
}

fn default_tau() -> f64 {
    1.0
}

fn default_newton_tol() -> f64 {
    1e-12
}

fn default_newton_max() -> usize {
    50
}

fn default_guard() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    FullyImplicit,
    ConvexSplit,
}

/// Synthesized or imported scalar field.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// mean + amplitude · cos(2π · mode · x / lx), constant in y.
    Cosine {
        mean: f64,
        amplitude: f64,
        #[serde(default = "default_mode")]
        mode: u32,
    },
    /// Import from a CHCF binary or a CSV whose last column is the value.
    File {
        path: String,
    },
}

fn default_mode() -> u32 {
    1
}

impl FieldSpec {
    pub fn build_interior(&self, geom: &Geometry, base: &Path) -> Result<InteriorField> {
        Ok(match self {
            FieldSpec::Zero => geom.interior_zero(),
            FieldSpec::Constant { value } => geom.interior_constant(*value),
            FieldSpec::Cosine {
                mean,
                amplitude,
                mode,
            } => {
                let k = 2.0 * PI * *mode as f64 / geom.lx();
                geom.interior_from_fn(|x, _| mean + amplitude * (k * x).cos())
            }
            FieldSpec::File { path } => {
                let full = base.join(path);
                let values = crate::io::read_field_values(&full)
                    .with_context(|| format!("reading field from {}", full.display()))?;
                geom.interior_from_values(values)?
            }
        })
    }

    pub fn build_boundary(&self, geom: &Geometry) -> Result<chc_core::geometry::BoundaryField> {
        Ok(match self {
            FieldSpec::Zero => geom.boundary_zero(),
            FieldSpec::Constant { value } => geom.boundary_constant(*value),
            FieldSpec::Cosine {
                mean,
                amplitude,
                mode,
            } => {
                let k = 2.0 * PI * *mode as f64 / geom.lx();
                geom.boundary_from_fn(|x, _| mean + amplitude * (k * x).cos())
            }
            FieldSpec::File { .. } => bail!("file import is only supported for the initial state"),
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub b_q: f64,
    pub b_sigma: f64,
    pub b_omega: f64,
    pub b_gamma: f64,
    pub b_0: f64,
    #[serde(default = "zero_spec")]
    pub z_q: FieldSpec,
    #[serde(default = "zero_spec")]
    pub z_sigma: FieldSpec,
    #[serde(default = "zero_spec")]
    pub z_omega: FieldSpec,
    #[serde(default = "zero_spec")]
    pub z_gamma: FieldSpec,
}

fn zero_spec() -> FieldSpec {
    FieldSpec::Zero
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub u_min: f64,
    pub u_max: f64,
    pub m0: f64,
    #[serde(default = "zero_control")]
    pub initial: ControlSpec,
}

fn zero_control() -> ControlSpec {
    ControlSpec::Zero
}

/// Synthesized control signal u(t, x).
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// amplitude · sin(rate · t) · (1 + x_mod · cos(2π x / lx)).
    Sine {
        amplitude: f64,
        rate: f64,
        #[serde(default)]
        x_mod: f64,
    },
}

impl ControlSpec {
    pub fn build(&self, geom: &Geometry, nt: usize, t_final: f64) -> ControlSignal {
        match self {
            ControlSpec::Zero => ControlSignal::zeros(geom, nt),
            ControlSpec::Constant { value } => ControlSignal::constant(geom, nt, *value),
            ControlSpec::Sine {
                amplitude,
                rate,
                x_mod,
            } => {
                let k = 2.0 * PI / geom.lx();
                ControlSignal::from_fn(geom, nt, t_final, |t, x, _| {
                    amplitude * (rate * t).sin() * (1.0 + x_mod * (k * x).cos())
                })
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub step0: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub max_iter: usize,
    pub stat_tol: Option<f64>,
    pub vi_probes: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            step0: 1.0,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_iter: 100,
            stat_tol: None,
            vi_probes: 100,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Step sizes of the gradient-check sweep.
    pub gradcheck_eps: Vec<f64>,
    /// Step sizes of the Taylor-remainder sweep.
    pub taylor_eps: Vec<f64>,
    /// Direction scale of both sweeps.
    pub direction_scale: f64,
    pub duality_pairs: usize,
    pub stability_pairs: usize,
    pub n_probes: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            gradcheck_eps: vec![1e-2, 1e-3, 1e-4],
            taylor_eps: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            direction_scale: 1.0,
            duality_pairs: 20,
            stability_pairs: 20,
            n_probes: 100,
        }
    }
}

/// Everything a command needs, built and validated from a [`RunConfig`].
pub struct Instance {
    pub geom: Geometry,
    pub pair: PotentialPair,
    pub cfg: SolverConfig,
    pub y0: CoupledField,
    pub cost: CostSpec,
    pub bx: ControlBox,
    pub u_init: ControlSignal,
    pub seed: u64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).context("config parse error")
    }

    /// Build and cross-validate all module configurations. `base` resolves
    /// relative file imports.
    pub fn build(&self, base: &Path) -> Result<Instance> {
        let geom = match self.geometry.mode {
            GeometryMode::Interval1d => Geometry::interval_1d(self.geometry.nx, self.geometry.lx)?,
            GeometryMode::Strip2d => {
                let ny = self
                    .geometry
                    .ny
                    .context("strip2d geometry needs 'ny'")?;
                let ly = self
                    .geometry
                    .ly
                    .context("strip2d geometry needs 'ly'")?;
                Geometry::strip_2d(self.geometry.nx, ny, self.geometry.lx, ly)?
            }
        };

        let spec_of = |name: PotentialName| -> Result<PotentialSpec> {
            Ok(match name {
                PotentialName::RegularQuartic => PotentialSpec::regular_quartic(),
                PotentialName::Logarithmic => PotentialSpec::logarithmic(self.potentials.c)?,
            })
        };
        let pair = PotentialPair::new(
            spec_of(self.potentials.bulk)?,
            spec_of(self.potentials.boundary)?,
            self.potentials.eta,
            self.potentials.compat_c,
        )?;

        let scheme = match self.solver.scheme {
            SchemeName::FullyImplicit => Scheme::FullyImplicit,
            SchemeName::ConvexSplit => Scheme::ConvexSplit,
        };
        let mut cfg = SolverConfig::new(self.solver.t_final, self.solver.nt, scheme);
        cfg.tau = self.solver.tau;
        cfg.newton_tol = self.solver.newton_tol;
        cfg.newton_max = self.solver.newton_max;
        cfg.guard_delta = self.solver.guard_delta;
        cfg.validate()?;

        let y0 = geom.coupled(self.initial.build_interior(&geom, base)?)?;

        let mut cost = CostSpec::with_zero_targets(
            &geom,
            cfg.nt,
            [
                self.cost.b_q,
                self.cost.b_sigma,
                self.cost.b_omega,
                self.cost.b_gamma,
                self.cost.b_0,
            ],
        )?;
        let zq = self.cost.z_q.build_interior(&geom, base)?;
        cost.z_q = (0..=cfg.nt).map(|_| zq.clone()).collect();
        let zs = self.cost.z_sigma.build_boundary(&geom)?;
        cost.z_sigma = (0..=cfg.nt).map(|_| zs.clone()).collect();
        cost.z_omega = self.cost.z_omega.build_interior(&geom, base)?;
        cost.z_gamma = self.cost.z_gamma.build_boundary(&geom)?;

        let bx = ControlBox::constant(self.control.u_min, self.control.u_max, self.control.m0)?;
        let u_init = self
            .control
            .initial
            .build(&geom, cfg.nt, self.solver.t_final);

        Ok(Instance {
            geom,
            pair,
            cfg,
            y0,
            cost,
            bx,
            u_init,
            seed: self.seed,
        })
    }
}
