//! Backward-Euler integration of the viscous Cahn–Hilliard system
//!
//! ```text
//! ∂t y = Δw,   w = τ ∂t y - δΔy + β(y) + λ π(y) - g,
//! ∂n w = h,    ∂n y = 0,     y(0) = y0,
//! ```
//!
//! for `δ ≥ 0`. With `δ = 0` the same scheme integrates the viscous
//! forward-backward limit problem. The graph `β` enters through its Yosida
//! approximation `β_ε` with a small fixed `ε`, and each step is a Newton
//! solve on the increment equation
//!
//! ```text
//! y - y_old - dt (Δ_h w(y) + flux(h)) = 0.
//! ```
//!
//! Integrating that equation over the grid kills the Laplacian exactly, so
//! the discrete mass balance holds to round-off after any Newton update.

use std::fmt;
use std::sync::Arc;

use crate::elliptic::{mollify_initial, PinnedNeumann};
use crate::error::{Error, Result};
use crate::grid::{BoundaryTrace, Grid, ScalarField, TimeGrid};
use crate::linalg::BandMatrix;
use crate::monotone::{GraphKind, LipschitzPerturbation, MonotoneGraph};

type Closure = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A datum `f(x, y, t)` sampled at grid nodes (or boundary nodes) on demand.
#[derive(Clone)]
pub struct SpaceTimeFn {
    f: Closure,
    steady: bool,
    label: String,
}

impl fmt::Debug for SpaceTimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpaceTimeFn({})", self.label)
    }
}

impl SpaceTimeFn {
    pub fn constant(c: f64) -> Self {
        Self {
            f: Arc::new(move |_, _, _| c),
            steady: true,
            label: format!("{c}"),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn new(label: impl Into<String>, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            steady: false,
            label: label.into(),
        }
    }

    /// A datum with no time dependence.
    pub fn steady(label: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(move |x, y, _| f(x, y)),
            steady: true,
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_steady(&self) -> bool {
        self.steady
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        (self.f)(x, y, t)
    }

    /// Pointwise sum, used to build perturbed data.
    pub fn plus(&self, other: &SpaceTimeFn) -> SpaceTimeFn {
        let (a, b) = (self.f.clone(), other.f.clone());
        SpaceTimeFn {
            f: Arc::new(move |x, y, t| a(x, y, t) + b(x, y, t)),
            steady: self.steady && other.steady,
            label: format!("{} + {}", self.label, other.label),
        }
    }

    pub fn scaled(&self, s: f64) -> SpaceTimeFn {
        let a = self.f.clone();
        SpaceTimeFn {
            f: Arc::new(move |x, y, t| s * a(x, y, t)),
            steady: self.steady,
            label: format!("{s}*({})", self.label),
        }
    }

    pub fn field(&self, grid: &Grid, t: f64) -> ScalarField {
        grid.field_from_fn(|x, y| self.eval(x, y, t))
    }

    pub fn trace(&self, grid: &Grid, t: f64) -> BoundaryTrace {
        grid.trace_from_fn(|x, y| self.eval(x, y, t))
    }
}

/// All data of one problem instance.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub grid: Grid,
    pub tau: f64,
    pub delta: f64,
    pub lambda: SpaceTimeFn,
    pub g: SpaceTimeFn,
    /// Outward normal flux of the chemical potential, sampled on the boundary.
    pub h: SpaceTimeFn,
    pub y0: ScalarField,
    pub graph: MonotoneGraph,
    pub perturbation: LipschitzPerturbation,
}

impl ProblemData {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::validation("tau", "tau must be positive"));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(Error::validation("delta", "delta must lie in [0,1)"));
        }
        self.grid.check_field(&self.y0)?;
        if !self.y0.is_finite() {
            return Err(Error::validation("y0", "initial datum is not finite"));
        }
        Ok(())
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    /// `sup |λ|` over the stored time slices of `tg`.
    pub fn lambda_sup(&self, tg: &TimeGrid) -> f64 {
        let slices = if self.lambda.is_steady() { 0 } else { tg.steps() };
        (0..=slices)
            .map(|n| {
                self.lambda
                    .field(&self.grid, tg.time(n))
                    .values()
                    .iter()
                    .fold(0.0_f64, |m, v| m.max(v.abs()))
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    /// Tolerance on the l2 norm of the increment residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Yosida parameter ε standing in for the graph.
    pub yosida_eps: f64,
    pub linear_tol: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iter: 25,
            yosida_eps: 1e-6,
            linear_tol: 1e-10,
        }
    }
}

impl StepperConfig {
    /// Defaults with the graph-dependent ε (1e-4 for jump graphs).
    pub fn for_graph(graph: &MonotoneGraph) -> Self {
        let yosida_eps = match graph.kind() {
            GraphKind::SignJump(_) => 1e-4,
            _ => 1e-6,
        };
        Self {
            yosida_eps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0 && self.linear_tol > 0.0 && self.yosida_eps > 0.0) {
            return Err(Error::validation("stepper", "tolerances must be positive"));
        }
        if self.yosida_eps > 1e-2 {
            return Err(Error::validation("yosida_eps", "yosida_eps must not exceed 1e-2"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::validation("newton_max_iter", "need at least one iteration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    /// Mean of y.
    pub mass: f64,
    /// `∫ δ/2 |∇y|² + β̂_ε(y) + λ π̂(y)`.
    pub energy: f64,
    pub newton_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub y: ScalarField,
    pub w: ScalarField,
    pub xi: ScalarField,
    pub diagnostics: StepDiagnostics,
}

/// Uniform-estimate monitors accumulated over a run. Time sums run over
/// steps `1..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Monitors {
    /// `max_n ‖yⁿ‖_H`
    pub y_l2_max: f64,
    /// `max_n ‖yⁿ‖_*`
    pub y_star_max: f64,
    /// `max_n ∫ β̂(yⁿ)`
    pub potential_max: f64,
    /// `Σ dt ‖(yⁿ - yⁿ⁻¹)/dt‖²_H`
    pub dt_y_sq_sum: f64,
    /// `δ^{1/2} max_n ‖∇yⁿ‖_H`
    pub grad_y_scaled: f64,
    /// `Σ dt (‖∇wⁿ‖² + (wⁿ)_Ω²)`
    pub w_v_sq_sum: f64,
    /// `Σ dt ‖ξⁿ‖²_H`
    pub xi_sq_sum: f64,
    /// `δ^{3/4} (Σ dt ‖Δ_h yⁿ‖²_H)^{1/2}`
    pub lap_y_scaled: f64,
}

impl Monitors {
    pub const NAMES: [&'static str; 8] = [
        "y_l2_max",
        "y_star_max",
        "potential_max",
        "dt_y_sq_sum",
        "grad_y_scaled",
        "w_v_sq_sum",
        "xi_sq_sum",
        "lap_y_scaled",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.y_l2_max,
            self.y_star_max,
            self.potential_max,
            self.dt_y_sq_sum,
            self.grad_y_scaled,
            self.w_v_sq_sum,
            self.xi_sq_sum,
            self.lap_y_scaled,
        ]
    }
}

/// Which fields a trajectory keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    /// y, w and ξ at every step.
    Full,
    /// y only; `w` and `xi` stay empty.
    StateOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub step: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub time_grid: TimeGrid,
    pub times: Vec<f64>,
    pub y: Vec<ScalarField>,
    /// `w[n]` for steps `n ≥ 1`; `w[0]` is a zero placeholder.
    pub w: Vec<ScalarField>,
    pub xi: Vec<ScalarField>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub monitors: Monitors,
    pub failure: Option<StepFailure>,
}

impl Trajectory {
    /// Number of completed steps (excluding the initial state).
    pub fn completed_steps(&self) -> usize {
        self.y.len().saturating_sub(1)
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn check(&self) -> Result<()> {
        match &self.failure {
            None => Ok(()),
            Some(f) => Err(Error::Trajectory {
                step: f.step,
                source: Box::new(Error::numerical("step", f.message.clone())),
            }),
        }
    }
}

/// Nodewise `w = τ(y_new - y_old)/dt - δΔ_h y_new + β_ε(y_new) + λ(t)π(y_new) - g(t)`.
pub fn chemical_potential(
    y_new: &ScalarField,
    y_old: &ScalarField,
    dt: f64,
    data: &ProblemData,
    t: f64,
    yosida_eps: f64,
) -> Result<ScalarField> {
    let grid = &data.grid;
    grid.check_field(y_new)?;
    grid.check_field(y_old)?;
    if !(dt > 0.0) {
        return Err(Error::Precondition("dt must be positive".into()));
    }
    let ws = Workspace::new(data)?;
    let lam = data.lambda.field(grid, t);
    let g = data.g.field(grid, t);
    let mut w = vec![0.0; grid.node_count()];
    ws.potential_into(data, y_new.values(), y_old.values(), dt, lam.values(), g.values(), yosida_eps, &mut w, None)?;
    Ok(ScalarField::from_parts(grid.key(), w))
}

/// Per-solve scratch: sparse rows of `Δ_h` and of `Δ_h²`.
struct Workspace {
    lap_rows: Vec<Vec<(usize, f64)>>,
    lap2_rows: Vec<Vec<(usize, f64)>>,
    band: usize,
    star: PinnedNeumann,
}

impl Workspace {
    fn new(data: &ProblemData) -> Result<Self> {
        let grid = &data.grid;
        let n = grid.node_count();
        let mut lap_rows = vec![Vec::new(); n];
        grid.for_each_laplacian_entry(|i, j, v| lap_rows[i].push((j, v)));
        let lap2_rows = if data.delta > 0.0 {
            lap_rows
                .iter()
                .map(|row| {
                    let mut acc: Vec<(usize, f64)> = Vec::new();
                    for &(k, a) in row {
                        for &(j, b) in &lap_rows[k] {
                            match acc.iter_mut().find(|e| e.0 == j) {
                                Some(e) => e.1 += a * b,
                                None => acc.push((j, a * b)),
                            }
                        }
                    }
                    acc
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            lap_rows,
            lap2_rows,
            band: 2 * grid.stencil_reach(),
            star: PinnedNeumann::new(grid)?,
        })
    }

    fn lap(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.lap_rows) {
            *o = row.iter().map(|&(j, a)| a * v[j]).sum();
        }
    }

    /// Chemical potential into `w`; optionally the nonlinear derivative
    /// `β_ε'(y) + λπ'(y)` into `deriv`.
    #[allow(clippy::too_many_arguments)]
    fn potential_into(
        &self,
        data: &ProblemData,
        y: &[f64],
        y_old: &[f64],
        dt: f64,
        lam: &[f64],
        g: &[f64],
        eps: f64,
        w: &mut [f64],
        mut deriv: Option<&mut [f64]>,
    ) -> Result<()> {
        if data.delta > 0.0 {
            self.lap(y, w);
        } else {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        let pert = &data.perturbation;
        let pert_zero = pert.is_zero();
        for i in 0..y.len() {
            let (b, db) = data.graph.yosida_with_derivative(eps, y[i])?;
            let (p, dp) = if pert_zero {
                (0.0, 0.0)
            } else {
                (pert.eval(y[i]), pert.derivative(y[i]))
            };
            w[i] = data.tau * (y[i] - y_old[i]) / dt - data.delta * w[i] + b + lam[i] * p - g[i];
            if let Some(d) = deriv.as_deref_mut() {
                d[i] = db + lam[i] * dp;
            }
        }
        Ok(())
    }
}

/// Scratch vectors and sampled data for one step.
struct StepState<'a> {
    data: &'a ProblemData,
    ws: &'a Workspace,
    y_old: &'a [f64],
    dt: f64,
    eps: f64,
    lam: Vec<f64>,
    g: Vec<f64>,
    /// `dt · flux source`
    src: Vec<f64>,
    w: Vec<f64>,
    lw: Vec<f64>,
    d: Vec<f64>,
}

impl<'a> StepState<'a> {
    /// Increment residual `y - y_old - dt Δ_h w(y) - dt·flux`, into `res`.
    fn residual(&mut self, y: &[f64], res: &mut [f64], with_deriv: bool) -> Result<()> {
        let deriv = if with_deriv { Some(self.d.as_mut_slice()) } else { None };
        self.ws
            .potential_into(self.data, y, self.y_old, self.dt, &self.lam, &self.g, self.eps, &mut self.w, deriv)?;
        self.ws.lap(&self.w, &mut self.lw);
        for i in 0..y.len() {
            res[i] = y[i] - self.y_old[i] - self.dt * self.lw[i] - self.src[i];
        }
        Ok(())
    }

    /// Step energy whose constrained minimiser solves the step:
    /// `‖y - y_old - src‖²_* / 2dt + τ‖y - y_old‖² / 2dt + δ/2 ‖∇y‖² + ∫ β̂_ε(y) + λπ̂(y) - g y`.
    /// Also returns the sum of the magnitudes of its terms, which bounds the
    /// round-off in the value.
    fn merit(&self, y: &[f64], scratch: &mut [f64]) -> Result<(f64, f64)> {
        let grid = &self.data.grid;
        let (dt, tau) = (self.dt, self.data.tau);
        for i in 0..y.len() {
            scratch[i] = y[i] - self.y_old[i] - self.src[i];
        }
        let star = self.ws.star.star_norm_slice(scratch);
        let mut dens = vec![0.0; y.len()];
        let mut mag = vec![0.0; y.len()];
        for i in 0..y.len() {
            let d = y[i] - self.y_old[i];
            let terms = [
                0.5 * tau * d * d / dt,
                self.data.graph.moreau_envelope(self.eps, y[i])?,
                self.lam[i] * self.data.perturbation.antiderivative(y[i]),
                -self.g[i] * y[i],
            ];
            dens[i] = terms.iter().sum();
            mag[i] = terms.iter().map(|v| v.abs()).sum();
        }
        let quad = 0.5 * star * star / dt + 0.5 * self.data.delta * grid.grad_sq_slice(y);
        Ok((quad + grid.integrate_slice(&dens), quad + grid.integrate_slice(&mag)))
    }

    /// Directional derivative of [`Self::merit`] at `y` along mean-zero `dy`;
    /// `self.w` must hold the potential at `y`.
    fn merit_slope(&self, y: &[f64], dy: &[f64], scratch: &mut [f64]) -> f64 {
        let grid = &self.data.grid;
        for i in 0..y.len() {
            scratch[i] = y[i] - self.y_old[i] - self.src[i];
        }
        let u = self.ws.star.solve_slice(scratch);
        for i in 0..y.len() {
            scratch[i] = (u[i] / self.dt + self.w[i]) * dy[i];
        }
        grid.integrate_slice(scratch)
    }

    /// `I - dt Δ_h (τ/dt + D - δΔ_h)` in band form.
    fn jacobian(&self) -> BandMatrix {
        let n = self.y_old.len();
        let kb = self.ws.band;
        let mut a = BandMatrix::zeros(n, kb, kb);
        let (dt, tau, delta) = (self.dt, self.data.tau, self.data.delta);
        for i in 0..n {
            a.add(i, i, 1.0);
            for &(j, l) in &self.ws.lap_rows[i] {
                a.add(i, j, -dt * l * (tau / dt + self.d[j]));
            }
            if delta > 0.0 {
                for &(j, l2) in &self.ws.lap2_rows[i] {
                    a.add(i, j, dt * delta * l2);
                }
            }
        }
        a
    }
}

fn sample(f: &SpaceTimeFn, grid: &Grid, t: f64) -> Vec<f64> {
    f.field(grid, t).into_values()
}

fn flux_source(data: &ProblemData, t: f64, dt: f64) -> Vec<f64> {
    let grid = &data.grid;
    let trace = data.h.trace(grid, t);
    let mut src = vec![0.0; grid.node_count()];
    grid.flux_source_into(trace.values(), &mut src);
    src.iter_mut().for_each(|v| *v *= dt);
    src
}

/// One backward-Euler step from `y_old` to `t_new = t_old + dt`.
pub fn step(y_old: &ScalarField, t_new: f64, dt: f64, data: &ProblemData, cfg: &StepperConfig) -> Result<StepOutput> {
    data.validate()?;
    cfg.validate()?;
    data.grid.check_field(y_old)?;
    if !(dt > 0.0) {
        return Err(Error::Precondition("dt must be positive".into()));
    }
    if !y_old.is_finite() {
        return Err(Error::Precondition("previous state is not finite".into()));
    }
    let ws = Workspace::new(data)?;
    step_with(&ws, y_old, t_new, dt, data, cfg)
}

fn step_with(
    ws: &Workspace,
    y_old: &ScalarField,
    t_new: f64,
    dt: f64,
    data: &ProblemData,
    cfg: &StepperConfig,
) -> Result<StepOutput> {
    let grid = &data.grid;
    let n = grid.node_count();
    let mut st = StepState {
        data,
        ws,
        y_old: y_old.values(),
        dt,
        eps: cfg.yosida_eps,
        lam: sample(&data.lambda, grid, t_new),
        g: sample(&data.g, grid, t_new),
        src: flux_source(data, t_new, dt),
        w: vec![0.0; n],
        lw: vec![0.0; n],
        d: vec![0.0; n],
    };
    // start on the mass constraint so every Newton iterate keeps it
    let shift = grid.mean_slice(&st.src);
    let mut y: Vec<f64> = y_old.values().iter().map(|v| v + shift).collect();
    let mut scratch = vec![0.0; n];
    let mut res = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_res = vec![0.0; n];
    st.residual(&y, &mut res, true)?;
    let mut rnorm = grid.l2_slice(&res);
    let mut iters = 0;
    let mut scale = vec![0.0; n];
    loop {
        let jac = st.jacobian();
        // attainable accuracy: round-off in evaluating the residual at y
        jac.abs_matvec(&y, &mut scale);
        for i in 0..n {
            scale[i] += st.y_old[i].abs() + st.src[i].abs();
        }
        let floor = 16.0 * f64::EPSILON * grid.l2_slice(&scale);
        if iters > 0 && rnorm <= cfg.newton_tol.max(floor) {
            break;
        }
        if iters >= cfg.newton_max_iter || !rnorm.is_finite() {
            return Err(Error::Step {
                t: t_new,
                residual: rnorm,
                iterations: iters,
            });
        }
        let lu = jac.factor()?;
        let mut dy: Vec<f64> = res.iter().map(|r| -r).collect();
        lu.solve_in_place(&mut dy);
        iters += 1;
        // Full step when it passes Armijo on the step energy (or, once the
        // energy change is below round-off, when it does not raise the
        // residual). Otherwise minimise the energy along dy; if dy is not a
        // descent direction, halve on the residual at most 8 times.
        let slope = st.merit_slope(&y, &dy, &mut scratch);
        for i in 0..n {
            trial[i] = y[i] + dy[i];
        }
        if slope < 0.0 {
            let (m0, mag) = st.merit(&y, &mut scratch)?;
            let (m1, _) = st.merit(&trial, &mut scratch)?;
            let full_ok = m1 <= m0 + 1e-4 * slope
                || (m1 - m0 <= 64.0 * f64::EPSILON * mag && {
                    st.residual(&trial, &mut trial_res, false)?;
                    let tn = grid.l2_slice(&trial_res);
                    tn.is_finite() && tn <= rnorm
                });
            if !full_ok {
                let alpha = line_minimum(&mut st, &y, &dy, slope, &mut trial, &mut scratch)?;
                for i in 0..n {
                    trial[i] = y[i] + alpha * dy[i];
                }
            }
        } else {
            st.residual(&trial, &mut trial_res, false)?;
            let mut tn = grid.l2_slice(&trial_res);
            let mut alpha = 1.0;
            for _ in 0..8 {
                if tn.is_finite() && (tn <= rnorm || tn <= cfg.newton_tol) {
                    break;
                }
                alpha *= 0.5;
                for i in 0..n {
                    trial[i] = y[i] + alpha * dy[i];
                }
                st.residual(&trial, &mut trial_res, false)?;
                tn = grid.l2_slice(&trial_res);
            }
            if !(tn.is_finite() && tn <= rnorm) {
                // no halving reduced the residual: take the full step
                for i in 0..n {
                    trial[i] = y[i] + dy[i];
                }
            }
        }
        std::mem::swap(&mut y, &mut trial);
        st.residual(&y, &mut res, true)?;
        rnorm = grid.l2_slice(&res);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Step {
            t: t_new,
            residual: f64::NAN,
            iterations: iters,
        });
    }
    // w from the converged state
    let w = st.w.clone();
    let mut xi = vec![0.0; n];
    for i in 0..n {
        xi[i] = data.graph.yosida(cfg.yosida_eps, y[i])?;
    }
    let diagnostics = StepDiagnostics {
        mass: grid.mean_slice(&y),
        energy: energy_slice(data, &y, &st.lam, cfg.yosida_eps)?,
        newton_iters: iters,
        residual: rnorm,
    };
    let key = grid.key();
    Ok(StepOutput {
        y: ScalarField::from_parts(key, y),
        w: ScalarField::from_parts(key, w),
        xi: ScalarField::from_parts(key, xi),
        diagnostics,
    })
}

/// Minimiser in `(0, 1]` of the step energy along `y + α dy`, given the
/// (negative) slope at `α = 0`. The energy is convex along the line, so its
/// slope is monotone and a safeguarded regula falsi on it converges.
fn line_minimum(
    st: &mut StepState<'_>,
    y: &[f64],
    dy: &[f64],
    slope0: f64,
    trial: &mut [f64],
    scratch: &mut [f64],
) -> Result<f64> {
    let n = y.len();
    let mut res = vec![0.0; n];
    let mut slope_at = |alpha: f64, st: &mut StepState<'_>, trial: &mut [f64]| -> Result<f64> {
        for i in 0..n {
            trial[i] = y[i] + alpha * dy[i];
        }
        st.residual(trial, &mut res, false)?;
        Ok(st.merit_slope(trial, dy, scratch))
    };
    let (mut a, mut fa) = (0.0, slope0);
    let (mut b, mut fb) = (1.0, slope_at(1.0, st, trial)?);
    if !fb.is_finite() {
        return Ok(1.0 / 256.0);
    }
    if fb <= 0.0 {
        return Ok(1.0);
    }
    let mut side = 0;
    for _ in 0..60 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c > a && c < b { c } else { 0.5 * (a + b) };
        let fc = slope_at(c, st, trial)?;
        if fc.abs() <= 1e-12 * slope0.abs() || b - a <= 1e-12 {
            return Ok(c);
        }
        if fc < 0.0 {
            (a, fa) = (c, fc);
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            (b, fb) = (c, fc);
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if a > 0.0 { a } else { 0.5 * b })
}

fn energy_slice(data: &ProblemData, y: &[f64], lam: &[f64], eps: f64) -> Result<f64> {
    let grid = &data.grid;
    let mut dens = vec![0.0; y.len()];
    for i in 0..y.len() {
        dens[i] = data.graph.moreau_envelope(eps, y[i])? + lam[i] * data.perturbation.antiderivative(y[i]);
    }
    Ok(0.5 * data.delta * grid.grad_sq_slice(y) + grid.integrate_slice(&dens))
}

/// `Eⁿ = ∫ δ/2 |∇y|² + β̂_ε(y) + λ(t) π̂(y)`.
pub fn energy(data: &ProblemData, y: &ScalarField, t: f64, yosida_eps: f64) -> Result<f64> {
    data.grid.check_field(y)?;
    let lam = sample(&data.lambda, &data.grid, t);
    energy_slice(data, y.values(), &lam, yosida_eps)
}

/// Initial state: the mollified datum for `δ > 0` when requested, else `y0`.
pub fn initial_state(data: &ProblemData, mollify: bool) -> Result<ScalarField> {
    if mollify && data.delta > 0.0 {
        mollify_initial(&data.grid, &data.y0, data.delta)
    } else {
        Ok(data.y0.clone())
    }
}

pub fn solve_trajectory(data: &ProblemData, tg: &TimeGrid, cfg: &StepperConfig, mollify: bool) -> Result<Trajectory> {
    solve_trajectory_with(data, tg, cfg, mollify, Record::Full)
}

/// Integrate over `tg`. A failing step ends the run; the partial
/// trajectory is returned with `failure` set.
pub fn solve_trajectory_with(
    data: &ProblemData,
    tg: &TimeGrid,
    cfg: &StepperConfig,
    mollify: bool,
    record: Record,
) -> Result<Trajectory> {
    data.validate()?;
    cfg.validate()?;
    let grid = &data.grid;
    let y0 = initial_state(data, mollify)?;
    let ws = Workspace::new(data)?;
    let star = PinnedNeumann::new(grid)?;
    let dt = tg.dt();
    let mut times = vec![0.0];
    let lam0 = sample(&data.lambda, grid, 0.0);
    let mut diagnostics = vec![StepDiagnostics {
        mass: grid.mean_slice(y0.values()),
        energy: energy_slice(data, y0.values(), &lam0, cfg.yosida_eps)?,
        newton_iters: 0,
        residual: 0.0,
    }];
    let mut acc = MonitorAccumulator::new(data.delta);
    acc.observe_state(data, &star, y0.values());
    let full = record == Record::Full;
    let mut w = Vec::new();
    let mut xi = Vec::new();
    if full {
        w.push(grid.zeros());
        let xi0: Result<Vec<f64>> = y0.values().iter().map(|&v| data.graph.yosida(cfg.yosida_eps, v)).collect();
        xi.push(ScalarField::from_parts(grid.key(), xi0?));
    }
    let mut ys = vec![y0];
    let mut failure = None;
    let mut lap = vec![0.0; grid.node_count()];
    for nstep in 1..=tg.steps() {
        let t = tg.time(nstep);
        let prev = ys.last().expect("initial state present");
        match step_with(&ws, prev, t, dt, data, cfg) {
            Ok(out) => {
                acc.observe_state(data, &star, out.y.values());
                acc.observe_step(grid, dt, prev.values(), &out, &ws, &mut lap);
                times.push(t);
                diagnostics.push(out.diagnostics);
                if full {
                    w.push(out.w);
                    xi.push(out.xi);
                }
                ys.push(out.y);
            }
            Err(e) => {
                failure = Some(StepFailure {
                    step: nstep,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(Trajectory {
        grid: grid.clone(),
        time_grid: *tg,
        times,
        y: ys,
        w,
        xi,
        diagnostics,
        monitors: acc.finish(),
        failure,
    })
}

struct MonitorAccumulator {
    delta: f64,
    m: Monitors,
    grad_max: f64,
    lap_sum: f64,
}

impl MonitorAccumulator {
    fn new(delta: f64) -> Self {
        Self {
            delta,
            m: Monitors::default(),
            grad_max: 0.0,
            lap_sum: 0.0,
        }
    }

    fn observe_state(&mut self, data: &ProblemData, star: &PinnedNeumann, y: &[f64]) {
        let grid = &data.grid;
        let m = &mut self.m;
        m.y_l2_max = m.y_l2_max.max(grid.l2_slice(y));
        m.y_star_max = m.y_star_max.max(star.star_norm_slice(y));
        let pot: Vec<f64> = y.iter().map(|&v| data.graph.potential(v)).collect();
        m.potential_max = m.potential_max.max(grid.integrate_slice(&pot));
        self.grad_max = self.grad_max.max(grid.grad_sq_slice(y).sqrt());
    }

    fn observe_step(&mut self, grid: &Grid, dt: f64, y_old: &[f64], out: &StepOutput, ws: &Workspace, lap: &mut [f64]) {
        let y = out.y.values();
        let dty: Vec<f64> = y.iter().zip(y_old).map(|(a, b)| (a - b) / dt).collect();
        self.m.dt_y_sq_sum += dt * grid.dot(&dty, &dty);
        let w = out.w.values();
        let wm = grid.mean_slice(w);
        self.m.w_v_sq_sum += dt * (grid.grad_sq_slice(w) + wm * wm);
        let xi = out.xi.values();
        self.m.xi_sq_sum += dt * grid.dot(xi, xi);
        ws.lap(y, lap);
        self.lap_sum += dt * grid.dot(lap, lap);
    }

    fn finish(mut self) -> Monitors {
        self.m.grad_y_scaled = self.delta.sqrt() * self.grad_max;
        self.m.lap_y_scaled = self.delta.powf(0.75) * self.lap_sum.sqrt();
        self.m
    }
}
