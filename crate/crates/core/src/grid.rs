//! Structured vertex-centred grids on intervals and rectangles.
//!
//! Every node carries a trapezoidal quadrature weight. The Neumann Laplacian
//! uses ghost nodes fixed by a centred flux condition, which makes the
//! discrete divergence theorem
//!
//! ```text
//! integrate(Δ_h f) = boundary_integral(flux)
//! ```
//!
//! hold to round-off. In 2D a corner node takes the flux of both incident
//! edges, each with the half-interval weight of that edge.

use crate::error::{Error, Result};

/// Cheap fingerprint identifying the grid a field was built on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridKey {
    dim: usize,
    nodes: [usize; 2],
    extents: [u64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    nodes: [usize; 2],
    spacing: [f64; 2],
    weights: Vec<f64>,
    boundary: Vec<usize>,
    /// Position of each node in `boundary`, if it is a boundary node.
    boundary_pos: Vec<Option<usize>>,
    boundary_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    key: GridKey,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    key: GridKey,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    pub grad_l2: f64,
}

/// Uniform partition of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    final_time: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(final_time: f64, steps: usize) -> Result<Self> {
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(Error::validation("T", "final time must be positive"));
        }
        if steps == 0 {
            return Err(Error::validation("steps", "need at least one step"));
        }
        Ok(Self {
            final_time,
            steps,
            dt: final_time / steps as f64,
        })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time of step `n`; the last step lands exactly on `T`.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.final_time
        } else {
            n as f64 * self.dt
        }
    }

    /// Same horizon with twice as many steps.
    pub fn refined(&self) -> Self {
        Self::new(self.final_time, self.steps * 2).expect("refining a valid time grid")
    }
}

impl Grid {
    /// Interval `[0, length]` with `nodes` equispaced nodes.
    pub fn new_1d(length: f64, nodes: usize) -> Result<Self> {
        Self::build(1, [length, 1.0], [nodes, 1])
    }

    /// Rectangle `[0, lx] x [0, ly]`.
    pub fn new_2d(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::build(2, [lx, ly], [nx, ny])
    }

    fn build(dim: usize, extents: [f64; 2], nodes: [usize; 2]) -> Result<Self> {
        for axis in 0..dim {
            if !(extents[axis].is_finite() && extents[axis] > 0.0) {
                return Err(Error::validation("grid.extent", "extents must be positive"));
            }
            if nodes[axis] < 3 {
                return Err(Error::validation("grid.n", "need at least 3 nodes per axis"));
            }
        }
        let mut spacing = [1.0; 2];
        for axis in 0..dim {
            spacing[axis] = extents[axis] / (nodes[axis] - 1) as f64;
        }
        let axis_weights = |axis: usize| -> Vec<f64> {
            if axis >= dim {
                return vec![1.0];
            }
            let n = nodes[axis];
            let h = spacing[axis];
            (0..n)
                .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                .collect()
        };
        let wx = axis_weights(0);
        let wy = axis_weights(1);
        let [nx, ny] = nodes;
        let mut weights = Vec::with_capacity(nx * ny);
        let mut boundary = Vec::new();
        let mut boundary_pos = vec![None; nx * ny];
        let mut boundary_weights = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let idx = j * nx + i;
                weights.push(wx[i] * wy[j]);
                let on_x = i == 0 || i == nx - 1;
                let on_y = dim == 2 && (j == 0 || j == ny - 1);
                if on_x || on_y {
                    let mut bw = 0.0;
                    if on_x {
                        bw += wy[j];
                    }
                    if on_y {
                        bw += wx[i];
                    }
                    boundary_pos[idx] = Some(boundary.len());
                    boundary.push(idx);
                    boundary_weights.push(bw);
                }
            }
        }
        Ok(Self {
            dim,
            extents,
            nodes,
            spacing,
            weights,
            boundary,
            boundary_pos,
            boundary_weights,
        })
    }

    pub fn key(&self) -> GridKey {
        GridKey {
            dim: self.dim,
            nodes: self.nodes,
            extents: [self.extents[0].to_bits(), self.extents[1].to_bits()],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    /// Indices of nodes on the boundary, ascending.
    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary
    }

    /// Quadrature weights, one per node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    pub fn measure(&self) -> f64 {
        self.extents[..self.dim].iter().product()
    }

    /// Total boundary measure `|Γ|` under the boundary quadrature.
    pub fn boundary_measure(&self) -> f64 {
        self.boundary_weights.iter().sum()
    }

    /// Physical coordinates of node `idx` (`y = 0` in 1D).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let nx = self.nodes[0];
        let (i, j) = (idx % nx, idx / nx);
        let x = i as f64 * self.spacing[0];
        let y = if self.dim == 2 {
            j as f64 * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    pub fn field(&self, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != self.node_count() {
            return Err(Error::Structural(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                self.node_count()
            )));
        }
        Ok(ScalarField {
            key: self.key(),
            values,
        })
    }

    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField {
            key: self.key(),
            values: vec![c; self.node_count()],
        }
    }

    pub fn zeros(&self) -> ScalarField {
        self.constant(0.0)
    }

    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = (0..self.node_count())
            .map(|k| {
                let [x, y] = self.coords(k);
                f(x, y)
            })
            .collect();
        ScalarField {
            key: self.key(),
            values,
        }
    }

    pub fn trace(&self, values: Vec<f64>) -> Result<BoundaryTrace> {
        if values.len() != self.boundary.len() {
            return Err(Error::Structural(format!(
                "trace has {} values, grid has {} boundary nodes",
                values.len(),
                self.boundary.len()
            )));
        }
        Ok(BoundaryTrace {
            key: self.key(),
            values,
        })
    }

    pub fn trace_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> BoundaryTrace {
        let values = self
            .boundary
            .iter()
            .map(|&k| {
                let [x, y] = self.coords(k);
                f(x, y)
            })
            .collect();
        BoundaryTrace {
            key: self.key(),
            values,
        }
    }

    pub fn zero_trace(&self) -> BoundaryTrace {
        BoundaryTrace {
            key: self.key(),
            values: vec![0.0; self.boundary.len()],
        }
    }

    pub(crate) fn check_field(&self, f: &ScalarField) -> Result<()> {
        if f.key != self.key() || f.values.len() != self.node_count() {
            return Err(Error::Structural("field belongs to a different grid".into()));
        }
        Ok(())
    }

    pub(crate) fn check_trace(&self, t: &BoundaryTrace) -> Result<()> {
        if t.key != self.key() || t.values.len() != self.boundary.len() {
            return Err(Error::Structural("trace belongs to a different grid".into()));
        }
        Ok(())
    }

    /// Trapezoidal approximation of the integral over the domain.
    pub fn integrate(&self, f: &ScalarField) -> Result<f64> {
        self.check_field(f)?;
        Ok(self.integrate_slice(&f.values))
    }

    pub fn mean(&self, f: &ScalarField) -> Result<f64> {
        Ok(self.integrate(f)? / self.measure())
    }

    /// Integral over the boundary: counting measure in 1D, trapezoidal per
    /// edge in 2D.
    pub fn boundary_integral(&self, t: &BoundaryTrace) -> Result<f64> {
        self.check_trace(t)?;
        Ok(self.boundary_integral_slice(&t.values))
    }

    /// Discrete Laplacian with prescribed outward normal derivative `flux`.
    pub fn laplacian_neumann(&self, f: &ScalarField, flux: &BoundaryTrace) -> Result<ScalarField> {
        self.check_field(f)?;
        self.check_trace(flux)?;
        let mut out = vec![0.0; self.node_count()];
        self.laplacian_into(&f.values, Some(&flux.values), &mut out);
        Ok(ScalarField {
            key: self.key(),
            values: out,
        })
    }

    pub fn norms(&self, f: &ScalarField) -> Result<Norms> {
        self.check_field(f)?;
        Ok(self.norms_slice(&f.values))
    }

    pub(crate) fn integrate_slice(&self, v: &[f64]) -> f64 {
        self.weights.iter().zip(v).map(|(w, x)| w * x).sum()
    }

    pub(crate) fn mean_slice(&self, v: &[f64]) -> f64 {
        self.integrate_slice(v) / self.measure()
    }

    /// Weighted inner product `∫ a b`.
    pub(crate) fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    pub(crate) fn l2_slice(&self, v: &[f64]) -> f64 {
        self.dot(v, v).max(0.0).sqrt()
    }

    pub(crate) fn boundary_integral_slice(&self, t: &[f64]) -> f64 {
        self.boundary_weights.iter().zip(t).map(|(w, x)| w * x).sum()
    }

    pub(crate) fn norms_slice(&self, v: &[f64]) -> Norms {
        let linf = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        Norms {
            l2: self.l2_slice(v),
            linf,
            grad_l2: self.grad_sq_slice(v).sqrt(),
        }
    }

    /// Squared discrete gradient norm, `Σ_edges (Δf/h)² × dual measure`.
    ///
    /// Equals `-∫ f Δ_h f` for the zero-flux Laplacian.
    pub(crate) fn grad_sq_slice(&self, v: &[f64]) -> f64 {
        let [nx, ny] = self.nodes;
        let [hx, hy] = self.spacing;
        let wy = |j: usize| -> f64 {
            if self.dim == 1 {
                1.0
            } else if j == 0 || j == ny - 1 {
                0.5 * hy
            } else {
                hy
            }
        };
        let wx = |i: usize| -> f64 {
            if i == 0 || i == nx - 1 {
                0.5 * hx
            } else {
                hx
            }
        };
        let mut acc = 0.0;
        for j in 0..ny {
            let row = &v[j * nx..(j + 1) * nx];
            let s: f64 = row.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum();
            acc += wy(j) * s / hx;
        }
        if self.dim == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let d = v[(j + 1) * nx + i] - v[j * nx + i];
                    acc += wx(i) * d * d / hy;
                }
            }
        }
        acc
    }

    /// `out = Δ_h f` with flux `flux` (zero when `None`).
    pub(crate) fn laplacian_into(&self, f: &[f64], flux: Option<&[f64]>, out: &mut [f64]) {
        let [nx, ny] = self.nodes;
        let [hx, hy] = self.spacing;
        let (ihx2, ihy2) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let c = f[k];
                let q = match (flux, self.boundary_pos[k]) {
                    (Some(t), Some(p)) => t[p],
                    _ => 0.0,
                };
                let mut acc = if i == 0 {
                    2.0 * (f[k + 1] - c) * ihx2 + 2.0 * q / hx
                } else if i == nx - 1 {
                    2.0 * (f[k - 1] - c) * ihx2 + 2.0 * q / hx
                } else {
                    (f[k - 1] - 2.0 * c + f[k + 1]) * ihx2
                };
                if self.dim == 2 {
                    acc += if j == 0 {
                        2.0 * (f[k + nx] - c) * ihy2 + 2.0 * q / hy
                    } else if j == ny - 1 {
                        2.0 * (f[k - nx] - c) * ihy2 + 2.0 * q / hy
                    } else {
                        (f[k - nx] - 2.0 * c + f[k + nx]) * ihy2
                    };
                }
                out[k] = acc;
            }
        }
    }

    /// Contribution of a boundary flux to `Δ_h`, i.e. `Δ_h(f, q) - Δ_h(f, 0)`.
    pub(crate) fn flux_source_into(&self, flux: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let [nx, ny] = self.nodes;
        let [hx, hy] = self.spacing;
        for (p, &k) in self.boundary.iter().enumerate() {
            let (i, j) = (k % nx, k / nx);
            let mut s = 0.0;
            if i == 0 || i == nx - 1 {
                s += 2.0 / hx;
            }
            if self.dim == 2 && (j == 0 || j == ny - 1) {
                s += 2.0 / hy;
            }
            out[k] = s * flux[p];
        }
    }

    /// Visit the nonzero entries `(row, col, value)` of the zero-flux `Δ_h`.
    pub(crate) fn for_each_laplacian_entry(&self, mut visit: impl FnMut(usize, usize, f64)) {
        let [nx, ny] = self.nodes;
        let [hx, hy] = self.spacing;
        let (ihx2, ihy2) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if i == 0 {
                    visit(k, k + 1, 2.0 * ihx2);
                } else if i == nx - 1 {
                    visit(k, k - 1, 2.0 * ihx2);
                } else {
                    visit(k, k - 1, ihx2);
                    visit(k, k + 1, ihx2);
                }
                let mut diag = -2.0 * ihx2;
                if self.dim == 2 {
                    if j == 0 {
                        visit(k, k + nx, 2.0 * ihy2);
                    } else if j == ny - 1 {
                        visit(k, k - nx, 2.0 * ihy2);
                    } else {
                        visit(k, k - nx, ihy2);
                        visit(k, k + nx, ihy2);
                    }
                    diag -= 2.0 * ihy2;
                }
                visit(k, k, diag);
            }
        }
    }

    /// Half-bandwidth of `Δ_h` in the natural node ordering.
    pub(crate) fn stencil_reach(&self) -> usize {
        if self.dim == 2 {
            self.nodes[0]
        } else {
            1
        }
    }
}

impl ScalarField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grid_key(&self) -> GridKey {
        self.key
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Nodewise map keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            key: self.key,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        if self.key != other.key {
            return Err(Error::Structural("fields belong to different grids".into()));
        }
        Ok(ScalarField {
            key: self.key,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn from_parts(key: GridKey, values: Vec<f64>) -> Self {
        Self { key, values }
    }
}

impl BoundaryTrace {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_key(&self) -> GridKey {
        self.key
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> BoundaryTrace {
        BoundaryTrace {
            key: self.key,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}
