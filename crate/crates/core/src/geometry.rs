//! Discrete geometry of Ω and Γ and the difference/quadrature operators used
//! by every solver.
//!
//! Two desk-scale geometries are supported:
//!
//! - `Interval1D`: Ω = (0, lx) on a uniform node grid, Γ = {0, lx}. The
//!   boundary is zero-dimensional, so the Laplace-Beltrami operator vanishes
//!   and the boundary measure is the counting measure (|Γ| = 2).
//! - `Strip2D`: Ω = (0,lx) × (0,ly) with periodic identification in x,
//!   Γ = the two lines y = 0 and y = ly. Laplace-Beltrami on Γ is the 1D
//!   periodic Laplacian along x on each line.
//!
//! Boundary nodes are a subset of the interior grid nodes, so traces are
//! restrictions and the coupled-pair trace constraint is exact.
//!
//! Two realizations of −Δ coexist on purpose:
//!
//! - [`Geometry::neg_laplacian`] is the homogeneous-Neumann (mimetic) closure
//!   M⁻¹K. It is symmetric positive semidefinite w.r.t. the H inner product,
//!   annihilates constants, and satisfies ∫(−Δf)g = ∫∇f·∇g exactly for all
//!   f, g — the boundary flux term is folded into the closure.
//! - [`Geometry::bulk_neg_laplacian`] applies one-sided second differences in
//!   the normal direction at boundary nodes. Paired with the second-order
//!   one-sided flux [`Geometry::normal_trace_flux`], the Green identity
//!   ∫(−Δf)v + ∫_Γ(∂_n f)v_Γ = ∫∇f·∇v holds to rounding for every coupled
//!   test pair.

use crate::error::{ChcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Interval1D,
    Strip2D,
}

/// Undirected stiffness edge: contributes c·(f_a − f_b)(g_a − g_b) to the
/// energy ∫∇f·∇g.
#[derive(Debug, Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    c: f64,
}

#[derive(Debug, Clone)]
pub struct Geometry {
    mode: Mode,
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    /// Interior quadrature weights, one per node.
    w_node: Vec<f64>,
    /// Boundary quadrature weights, one per boundary node.
    w_bnd: Vec<f64>,
    /// Interior node index of each boundary node.
    bnd_nodes: Vec<usize>,
    /// Stiffness edges of ∫∇f·∇g.
    edges: Vec<Edge>,
    /// Laplace-Beltrami stiffness edges (interior node indices).
    bnd_edges: Vec<Edge>,
    /// |Ω| and |Γ| as computed by the quadrature weights.
    vol_omega: f64,
    vol_gamma: f64,
    fingerprint: u64,
}

impl Geometry {
    pub fn interval_1d(nx: usize, lx: f64) -> Result<Self> {
        if nx < 3 {
            return Err(ChcError::ConfigMismatch(format!(
                "Interval1D needs nx >= 3, got {nx}"
            )));
        }
        if !(lx > 0.0) {
            return Err(ChcError::ConfigMismatch(format!("lx must be > 0, got {lx}")));
        }
        let h = lx / (nx - 1) as f64;
        let mut w_node = vec![h; nx];
        w_node[0] = 0.5 * h;
        w_node[nx - 1] = 0.5 * h;

        let edges = (0..nx - 1)
            .map(|i| Edge {
                a: i,
                b: i + 1,
                c: 1.0 / h,
            })
            .collect();

        let bnd_nodes = vec![0, nx - 1];
        // Counting measure on the two endpoints: |Γ| = 2.
        let w_bnd = vec![1.0, 1.0];

        let mut g = Geometry {
            mode: Mode::Interval1D,
            nx,
            ny: 1,
            lx,
            ly: 0.0,
            w_node,
            w_bnd,
            bnd_nodes,
            edges,
            bnd_edges: Vec::new(),
            vol_omega: 0.0,
            vol_gamma: 0.0,
            fingerprint: 0,
        };
        g.finish();
        Ok(g)
    }

    pub fn strip_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(ChcError::ConfigMismatch(format!(
                "Strip2D needs nx >= 3 and ny >= 3, got {nx} x {ny}"
            )));
        }
        if !(lx > 0.0) || !(ly > 0.0) {
            return Err(ChcError::ConfigMismatch(format!(
                "extents must be > 0, got lx = {lx}, ly = {ly}"
            )));
        }
        // Periodic in x: nx distinct nodes, spacing lx/nx.
        let hx = lx / nx as f64;
        let hy = ly / (ny - 1) as f64;
        let n = nx * ny;
        let idx = |i: usize, j: usize| j * nx + i;

        let mut w_node = vec![0.0; n];
        for j in 0..ny {
            let wy = if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
            for i in 0..nx {
                w_node[idx(i, j)] = hx * wy;
            }
        }

        let mut edges = Vec::with_capacity(2 * n);
        for j in 0..ny {
            let wy = if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
            // x-edges, periodic wrap included; edge weight = (hx·wy)/hx².
            for i in 0..nx {
                edges.push(Edge {
                    a: idx(i, j),
                    b: idx((i + 1) % nx, j),
                    c: wy / hx,
                });
            }
        }
        for j in 0..ny - 1 {
            // y-edges; edge weight = (hx·hy)/hy².
            for i in 0..nx {
                edges.push(Edge {
                    a: idx(i, j),
                    b: idx(i, j + 1),
                    c: hx / hy,
                });
            }
        }

        // Boundary: bottom line j = 0 first, then top line j = ny−1.
        let mut bnd_nodes = Vec::with_capacity(2 * nx);
        for i in 0..nx {
            bnd_nodes.push(idx(i, 0));
        }
        for i in 0..nx {
            bnd_nodes.push(idx(i, ny - 1));
        }
        let w_bnd = vec![hx; 2 * nx];

        let mut bnd_edges = Vec::with_capacity(2 * nx);
        for line in 0..2 {
            let j = if line == 0 { 0 } else { ny - 1 };
            for i in 0..nx {
                bnd_edges.push(Edge {
                    a: idx(i, j),
                    b: idx((i + 1) % nx, j),
                    c: 1.0 / hx,
                });
            }
        }

        let mut g = Geometry {
            mode: Mode::Strip2D,
            nx,
            ny,
            lx,
            ly,
            w_node,
            w_bnd,
            bnd_nodes,
            edges,
            bnd_edges,
            vol_omega: 0.0,
            vol_gamma: 0.0,
            fingerprint: 0,
        };
        g.finish();
        Ok(g)
    }

    fn finish(&mut self) {
        self.vol_omega = self.w_node.iter().sum();
        self.vol_gamma = self.w_bnd.iter().sum();
        // Cheap structural fingerprint so fields can detect cross-geometry use.
        let mut fp: u64 = match self.mode {
            Mode::Interval1D => 0x1d,
            Mode::Strip2D => 0x2d,
        };
        for v in [
            self.nx as u64,
            self.ny as u64,
            self.lx.to_bits(),
            self.ly.to_bits(),
        ] {
            fp = fp.wrapping_mul(0x100000001b3).wrapping_add(v);
        }
        self.fingerprint = fp;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    /// Number of interior grid nodes.
    pub fn n_nodes(&self) -> usize {
        self.w_node.len()
    }

    /// Number of boundary nodes.
    pub fn n_boundary(&self) -> usize {
        self.bnd_nodes.len()
    }

    pub fn omega_measure(&self) -> f64 {
        self.vol_omega
    }

    pub fn gamma_measure(&self) -> f64 {
        self.vol_gamma
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Interior node index of boundary node `b`.
    pub fn boundary_node(&self, b: usize) -> usize {
        self.bnd_nodes[b]
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.bnd_nodes
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.w_node
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.w_bnd
    }

    /// (x, y) position of an interior node (y = 0 in 1D).
    pub fn node_position(&self, k: usize) -> (f64, f64) {
        match self.mode {
            Mode::Interval1D => {
                let h = self.lx / (self.nx - 1) as f64;
                (k as f64 * h, 0.0)
            }
            Mode::Strip2D => {
                let hx = self.lx / self.nx as f64;
                let hy = self.ly / (self.ny - 1) as f64;
                let i = k % self.nx;
                let j = k / self.nx;
                (i as f64 * hx, j as f64 * hy)
            }
        }
    }

    pub fn boundary_position(&self, b: usize) -> (f64, f64) {
        self.node_position(self.bnd_nodes[b])
    }

    fn check_interior(&self, f: &InteriorField) -> Result<()> {
        if f.geom != self.fingerprint || f.values.len() != self.n_nodes() {
            return Err(ChcError::GeometryMismatch(format!(
                "interior field of length {} on a geometry with {} nodes",
                f.values.len(),
                self.n_nodes()
            )));
        }
        Ok(())
    }

    fn check_boundary(&self, g: &BoundaryField) -> Result<()> {
        if g.geom != self.fingerprint || g.values.len() != self.n_boundary() {
            return Err(ChcError::GeometryMismatch(format!(
                "boundary field of length {} on a geometry with {} boundary nodes",
                g.values.len(),
                self.n_boundary()
            )));
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Field constructors
    // ------------------------------------------------------------------

    pub fn interior_zero(&self) -> InteriorField {
        InteriorField {
            values: vec![0.0; self.n_nodes()],
            geom: self.fingerprint,
        }
    }

    pub fn boundary_zero(&self) -> BoundaryField {
        BoundaryField {
            values: vec![0.0; self.n_boundary()],
            geom: self.fingerprint,
        }
    }

    pub fn interior_constant(&self, c: f64) -> InteriorField {
        InteriorField {
            values: vec![c; self.n_nodes()],
            geom: self.fingerprint,
        }
    }

    pub fn boundary_constant(&self, c: f64) -> BoundaryField {
        BoundaryField {
            values: vec![c; self.n_boundary()],
            geom: self.fingerprint,
        }
    }

    pub fn interior_from_fn(&self, mut f: impl FnMut(f64, f64) -> f64) -> InteriorField {
        let values = (0..self.n_nodes())
            .map(|k| {
                let (x, y) = self.node_position(k);
                f(x, y)
            })
            .collect();
        InteriorField {
            values,
            geom: self.fingerprint,
        }
    }

    pub fn boundary_from_fn(&self, mut f: impl FnMut(f64, f64) -> f64) -> BoundaryField {
        let values = (0..self.n_boundary())
            .map(|b| {
                let (x, y) = self.boundary_position(b);
                f(x, y)
            })
            .collect();
        BoundaryField {
            values,
            geom: self.fingerprint,
        }
    }

    pub fn interior_from_values(&self, values: Vec<f64>) -> Result<InteriorField> {
        if values.len() != self.n_nodes() {
            return Err(ChcError::GeometryMismatch(format!(
                "expected {} node values, got {}",
                self.n_nodes(),
                values.len()
            )));
        }
        Ok(InteriorField {
            values,
            geom: self.fingerprint,
        })
    }

    pub fn boundary_from_values(&self, values: Vec<f64>) -> Result<BoundaryField> {
        if values.len() != self.n_boundary() {
            return Err(ChcError::GeometryMismatch(format!(
                "expected {} boundary values, got {}",
                self.n_boundary(),
                values.len()
            )));
        }
        Ok(BoundaryField {
            values,
            geom: self.fingerprint,
        })
    }

    /// Restriction of an interior field to the boundary nodes.
    pub fn trace(&self, f: &InteriorField) -> Result<BoundaryField> {
        self.check_interior(f)?;
        Ok(BoundaryField {
            values: self.bnd_nodes.iter().map(|&k| f.values[k]).collect(),
            geom: self.fingerprint,
        })
    }

    pub fn coupled(&self, interior: InteriorField) -> Result<CoupledField> {
        let boundary = self.trace(&interior)?;
        Ok(CoupledField { interior, boundary })
    }

    // ------------------------------------------------------------------
    // Quadrature and inner products
    // ------------------------------------------------------------------

    pub fn integrate_interior(&self, f: &InteriorField) -> Result<f64> {
        self.check_interior(f)?;
        Ok(dot3(&self.w_node, &f.values))
    }

    pub fn integrate_boundary(&self, g: &BoundaryField) -> Result<f64> {
        self.check_boundary(g)?;
        Ok(dot3(&self.w_bnd, &g.values))
    }

    pub fn mean_value(&self, f: &InteriorField) -> Result<f64> {
        Ok(self.integrate_interior(f)? / self.vol_omega)
    }

    /// ∫_Ω f g.
    pub fn dot_h(&self, f: &InteriorField, g: &InteriorField) -> Result<f64> {
        self.check_interior(f)?;
        self.check_interior(g)?;
        Ok(self.dot_h_raw(&f.values, &g.values))
    }

    pub(crate) fn dot_h_raw(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.w_node)
            .map(|((a, b), w)| w * a * b)
            .sum()
    }

    /// ∫_Γ f g.
    pub fn dot_hgamma(&self, f: &BoundaryField, g: &BoundaryField) -> Result<f64> {
        self.check_boundary(f)?;
        self.check_boundary(g)?;
        Ok(self.dot_hgamma_raw(&f.values, &g.values))
    }

    pub(crate) fn dot_hgamma_raw(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.w_bnd)
            .map(|((a, b), w)| w * a * b)
            .sum()
    }

    /// H¹ product ∫_Ω f g + ∫_Ω ∇f·∇g.
    pub fn dot_v(&self, f: &InteriorField, g: &InteriorField) -> Result<f64> {
        Ok(self.dot_h(f, g)? + self.stiffness_energy(f, g)?)
    }

    /// Product of ℋ = L²(Ω) × L²(Γ): ∫_Ω uv + ∫_Γ u_Γ v_Γ.
    pub fn dot_cal_h(&self, u: &CoupledField, v: &CoupledField) -> Result<f64> {
        Ok(self.dot_h(&u.interior, &v.interior)? + self.dot_hgamma(&u.boundary, &v.boundary)?)
    }

    /// ∫_Ω ∇f·∇g assembled from stiffness edges.
    pub fn stiffness_energy(&self, f: &InteriorField, g: &InteriorField) -> Result<f64> {
        self.check_interior(f)?;
        self.check_interior(g)?;
        Ok(self.stiffness_energy_raw(&f.values, &g.values))
    }

    pub(crate) fn stiffness_energy_raw(&self, f: &[f64], g: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|e| e.c * (f[e.a] - f[e.b]) * (g[e.a] - g[e.b]))
            .sum()
    }

    /// ∫_Γ ∇_Γ f·∇_Γ g (zero on Interval1D).
    pub fn boundary_stiffness_energy(&self, f: &BoundaryField, g: &BoundaryField) -> Result<f64> {
        self.check_boundary(f)?;
        self.check_boundary(g)?;
        let fi = self.lift_boundary(&f.values);
        let gi = self.lift_boundary(&g.values);
        Ok(self.boundary_stiffness_energy_raw(&fi, &gi))
    }

    pub(crate) fn boundary_stiffness_energy_raw(&self, f: &[f64], g: &[f64]) -> f64 {
        self.bnd_edges
            .iter()
            .map(|e| e.c * (f[e.a] - f[e.b]) * (g[e.a] - g[e.b]))
            .sum()
    }

    /// Scatter boundary values into a zero interior-length vector.
    pub(crate) fn lift_boundary(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (b, &k) in self.bnd_nodes.iter().enumerate() {
            out[k] = g[b];
        }
        out
    }

    // ------------------------------------------------------------------
    // Raw matrix actions used by the solvers
    // ------------------------------------------------------------------

    /// out = K f (interior stiffness action on a raw vector).
    pub(crate) fn apply_stiffness(&self, f: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for e in &self.edges {
            let d = e.c * (f[e.a] - f[e.b]);
            out[e.a] += d;
            out[e.b] -= d;
        }
    }

    /// out = K_Γ f with boundary values addressed by interior node index.
    pub(crate) fn apply_boundary_stiffness(&self, f: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for e in &self.bnd_edges {
            let d = e.c * (f[e.a] - f[e.b]);
            out[e.a] += d;
            out[e.b] -= d;
        }
    }

    /// Stiffness triplets of K in interior node indices.
    pub(crate) fn stiffness_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(4 * self.edges.len());
        for e in &self.edges {
            t.push((e.a, e.a, e.c));
            t.push((e.b, e.b, e.c));
            t.push((e.a, e.b, -e.c));
            t.push((e.b, e.a, -e.c));
        }
        t
    }

    /// Triplets of K_Γ lifted to interior node indices.
    pub(crate) fn boundary_stiffness_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(4 * self.bnd_edges.len());
        for e in &self.bnd_edges {
            t.push((e.a, e.a, e.c));
            t.push((e.b, e.b, e.c));
            t.push((e.a, e.b, -e.c));
            t.push((e.b, e.a, -e.c));
        }
        t
    }

    // ------------------------------------------------------------------
    // Differential operators
    // ------------------------------------------------------------------

    /// Homogeneous-Neumann closure M⁻¹K: symmetric PSD w.r.t. the H product,
    /// kernel = constants, and ∫(−Δf)g = ∫∇f·∇g exactly for all f, g.
    pub fn neg_laplacian(&self, f: &InteriorField) -> Result<InteriorField> {
        self.check_interior(f)?;
        let mut out = vec![0.0; self.n_nodes()];
        self.apply_stiffness(&f.values, &mut out);
        for (v, w) in out.iter_mut().zip(&self.w_node) {
            *v /= w;
        }
        Ok(InteriorField {
            values: out,
            geom: self.fingerprint,
        })
    }

    /// Pointwise −Δ with one-sided second differences in the normal direction
    /// at boundary nodes. Together with [`Self::normal_trace_flux`] it
    /// satisfies the exact Green identity
    /// ∫(−Δf)v + ∫_Γ(∂_n f)v_Γ = ∫∇f·∇v.
    pub fn bulk_neg_laplacian(&self, f: &InteriorField) -> Result<InteriorField> {
        self.check_interior(f)?;
        let v = &f.values;
        let out = match self.mode {
            Mode::Interval1D => {
                let n = self.nx;
                let h = self.lx / (n - 1) as f64;
                let h2 = h * h;
                let mut out = vec![0.0; n];
                out[0] = -(v[0] - 2.0 * v[1] + v[2]) / h2;
                for i in 1..n - 1 {
                    out[i] = (2.0 * v[i] - v[i - 1] - v[i + 1]) / h2;
                }
                out[n - 1] = -(v[n - 1] - 2.0 * v[n - 2] + v[n - 3]) / h2;
                out
            }
            Mode::Strip2D => {
                let (nx, ny) = (self.nx, self.ny);
                let hx = self.lx / nx as f64;
                let hy = self.ly / (ny - 1) as f64;
                let (hx2, hy2) = (hx * hx, hy * hy);
                let idx = |i: usize, j: usize| j * nx + i;
                let mut out = vec![0.0; nx * ny];
                for j in 0..ny {
                    for i in 0..nx {
                        let e = v[idx((i + 1) % nx, j)];
                        let w = v[idx((i + nx - 1) % nx, j)];
                        let xpart = (2.0 * v[idx(i, j)] - e - w) / hx2;
                        let ypart = if j == 0 {
                            -(v[idx(i, 0)] - 2.0 * v[idx(i, 1)] + v[idx(i, 2)]) / hy2
                        } else if j == ny - 1 {
                            -(v[idx(i, ny - 1)] - 2.0 * v[idx(i, ny - 2)] + v[idx(i, ny - 3)]) / hy2
                        } else {
                            (2.0 * v[idx(i, j)] - v[idx(i, j - 1)] - v[idx(i, j + 1)]) / hy2
                        };
                        out[idx(i, j)] = xpart + ypart;
                    }
                }
                out
            }
        };
        Ok(InteriorField {
            values: out,
            geom: self.fingerprint,
        })
    }

    /// Second-order one-sided approximation of the outward normal derivative
    /// at the boundary nodes.
    pub fn normal_trace_flux(&self, f: &InteriorField) -> Result<BoundaryField> {
        self.check_interior(f)?;
        let v = &f.values;
        let out = match self.mode {
            Mode::Interval1D => {
                let n = self.nx;
                let h = self.lx / (n - 1) as f64;
                vec![
                    (3.0 * v[0] - 4.0 * v[1] + v[2]) / (2.0 * h),
                    (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h),
                ]
            }
            Mode::Strip2D => {
                let (nx, ny) = (self.nx, self.ny);
                let hy = self.ly / (ny - 1) as f64;
                let idx = |i: usize, j: usize| j * nx + i;
                let mut out = vec![0.0; 2 * nx];
                for i in 0..nx {
                    out[i] = (3.0 * v[idx(i, 0)] - 4.0 * v[idx(i, 1)] + v[idx(i, 2)]) / (2.0 * hy);
                    out[nx + i] = (3.0 * v[idx(i, ny - 1)] - 4.0 * v[idx(i, ny - 2)]
                        + v[idx(i, ny - 3)])
                        / (2.0 * hy);
                }
                out
            }
        };
        Ok(BoundaryField {
            values: out,
            geom: self.fingerprint,
        })
    }

    /// Laplace-Beltrami closure M_Γ⁻¹K_Γ: zero on Interval1D, 1D periodic
    /// second difference per line on Strip2D.
    pub fn neg_laplace_beltrami(&self, g: &BoundaryField) -> Result<BoundaryField> {
        self.check_boundary(g)?;
        let out = match self.mode {
            Mode::Interval1D => vec![0.0; 2],
            Mode::Strip2D => {
                let nx = self.nx;
                let hx2 = (self.lx / nx as f64).powi(2);
                let mut out = vec![0.0; 2 * nx];
                for line in 0..2 {
                    let o = line * nx;
                    for i in 0..nx {
                        let e = g.values[o + (i + 1) % nx];
                        let w = g.values[o + (i + nx - 1) % nx];
                        out[o + i] = (2.0 * g.values[o + i] - e - w) / hx2;
                    }
                }
                out
            }
        };
        Ok(BoundaryField {
            values: out,
            geom: self.fingerprint,
        })
    }
}

fn dot3(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scalar values on the interior grid nodes of a [`Geometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorField {
    values: Vec<f64>,
    geom: u64,
}

/// Scalar values on the boundary nodes of a [`Geometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    values: Vec<f64>,
    geom: u64,
}

/// A compatible (interior, boundary) pair; the boundary component is the
/// exact restriction of the interior one.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledField {
    pub interior: InteriorField,
    pub boundary: BoundaryField,
}

macro_rules! field_impl {
    ($t:ty) => {
        impl $t {
            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn geom_fingerprint(&self) -> u64 {
                self.geom
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn is_finite(&self) -> bool {
                self.values.iter().all(|v| v.is_finite())
            }

            pub fn sup_norm(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            /// self += alpha * other (panics on length mismatch).
            pub fn axpy(&mut self, alpha: f64, other: &$t) {
                assert_eq!(self.values.len(), other.values.len());
                for (a, b) in self.values.iter_mut().zip(&other.values) {
                    *a += alpha * b;
                }
            }

            pub fn scale(&mut self, alpha: f64) {
                for a in self.values.iter_mut() {
                    *a *= alpha;
                }
            }
        }
    };
}

field_impl!(InteriorField);
field_impl!(BoundaryField);

impl CoupledField {
    /// Build from parts, verifying the trace constraint exactly.
    pub fn from_parts(
        geom: &Geometry,
        interior: InteriorField,
        boundary: BoundaryField,
    ) -> Result<Self> {
        let tr = geom.trace(&interior)?;
        geom.check_boundary(&boundary)?;
        if tr.values != boundary.values {
            return Err(ChcError::GeometryMismatch(
                "coupled field boundary component is not the trace of the interior one".into(),
            ));
        }
        Ok(CoupledField { interior, boundary })
    }
}
