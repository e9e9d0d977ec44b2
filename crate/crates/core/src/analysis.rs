//! Convergence studies in the diffusion coefficient δ, power-law rate fits,
//! continuous-dependence checks and mass-balance series.

use crate::elliptic::PinnedNeumann;
use crate::error::{Error, Result};
use crate::grid::{Grid, TimeGrid};
use crate::stepper::{solve_trajectory_with, Monitors, ProblemData, Record, StepperConfig, Trajectory};

/// `max_n ‖yₐⁿ - y_bⁿ‖_H`.
pub fn error_linf_h(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Structural("trajectories live on different grids".into()));
    }
    if a.time_grid != b.time_grid || a.y.len() != b.y.len() {
        return Err(Error::Structural("trajectories have different time grids".into()));
    }
    max_l2_distance(&a.grid, a, b)
}

fn max_l2_distance(grid: &Grid, a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let mut diff = vec![0.0; grid.node_count()];
    let mut worst = 0.0_f64;
    for (ya, yb) in a.y.iter().zip(&b.y) {
        grid.check_field(ya)?;
        grid.check_field(yb)?;
        for (d, (p, q)) in diff.iter_mut().zip(ya.values().iter().zip(yb.values())) {
            *d = p - q;
        }
        worst = worst.max(grid.l2_slice(&diff));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub error: f64,
    /// `‖y0 - y0,δ‖_H`
    pub init_error: f64,
    pub monitors: Monitors,
    /// Set when the δ-trajectory failed; the other fields are then NaN.
    pub failure: Option<String>,
}

impl ConvergenceRow {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Monitors of the δ = 0 reference run.
    pub reference: Monitors,
}

impl ConvergenceTable {
    pub fn successful(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.ok())
    }

    /// Smallest `C` with `error ≤ C (δ^{1/4} + init_error)` over all rows.
    pub fn bound_constant(&self) -> f64 {
        self.successful()
            .map(|r| r.error / (r.delta.powf(0.25) + r.init_error))
            .fold(0.0, f64::max)
    }

    /// Largest ratio `monitor(smallest δ) / monitor(largest δ)` over the
    /// eight monitors; values at round-off level on both ends count as 1.
    pub fn monitor_growth(&self) -> [f64; 8] {
        let rows: Vec<_> = self.successful().collect();
        let mut out = [1.0; 8];
        if rows.len() < 2 {
            return out;
        }
        let first = rows[0].monitors.values();
        let last = rows[rows.len() - 1].monitors.values();
        for k in 0..8 {
            out[k] = if first[k] <= 1e-300 {
                if last[k] <= 1e-300 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                last[k] / first[k]
            };
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    /// Regress on `x = δ`.
    Delta,
    /// Regress on `x = δ^{1/4} + ‖y0 - y0,δ‖_H`.
    DeltaPlusInit,
}

impl RateMode {
    pub fn name(&self) -> &'static str {
        match self {
            RateMode::Delta => "delta",
            RateMode::DeltaPlusInit => "delta_plus_init",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub p: f64,
    pub c: f64,
    pub r2: f64,
    pub mode: RateMode,
}

#[cfg(feature = "parallel")]
fn map_rows<T: Send>(deltas: &[f64], f: impl Fn(f64) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    deltas.par_iter().map(|&d| f(d)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_rows<T: Send>(deltas: &[f64], f: impl Fn(f64) -> T + Sync + Send) -> Vec<T> {
    deltas.iter().map(|&d| f(d)).collect()
}

/// Solve the δ = 0 reference once, then each δ with mollified initial
/// data, and tabulate `max_n ‖y - y_δ‖_H` with the run monitors.
///
/// `data.delta` is ignored. Rows run in parallel when the `parallel`
/// feature is on; a failing row is recorded and the sweep continues.
pub fn delta_sweep(data: &ProblemData, deltas: &[f64], tg: &TimeGrid, cfg: &StepperConfig) -> Result<ConvergenceTable> {
    if deltas.is_empty() {
        return Err(Error::Precondition("delta sweep needs at least one delta".into()));
    }
    for w in deltas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Precondition("deltas must be strictly decreasing".into()));
        }
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
        return Err(Error::Precondition("deltas must lie in (0,1)".into()));
    }
    let limit = data.with_delta(0.0);
    let reference = solve_trajectory_with(&limit, tg, cfg, false, Record::StateOnly)?;
    reference.check()?;
    let grid = &data.grid;
    let rows = map_rows(deltas, |delta| -> Result<ConvergenceRow> {
        let d = data.with_delta(delta);
        let tr = solve_trajectory_with(&d, tg, cfg, true, Record::StateOnly)?;
        let diff: Vec<f64> = tr.y[0]
            .values()
            .iter()
            .zip(data.y0.values())
            .map(|(a, b)| a - b)
            .collect();
        let init_error = grid.l2_slice(&diff);
        Ok(match &tr.failure {
            Some(f) => ConvergenceRow {
                delta,
                error: f64::NAN,
                init_error,
                monitors: tr.monitors,
                failure: Some(format!("step {}: {}", f.step, f.message)),
            },
            None => ConvergenceRow {
                delta,
                error: error_linf_h(&reference, &tr)?,
                init_error,
                monitors: tr.monitors,
                failure: None,
            },
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable {
        rows,
        reference: reference.monitors,
    })
}

/// Least-squares fit of `log(error) = log(c) + p log(x)` over the
/// successful rows.
pub fn fit_rate(table: &ConvergenceTable, mode: RateMode) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = table
        .successful()
        .map(|r| {
            let x = match mode {
                RateMode::Delta => r.delta,
                RateMode::DeltaPlusInit => r.delta.powf(0.25) + r.init_error,
            };
            (x.ln(), r.error.ln())
        })
        .collect();
    if pts.len() < 4 {
        return Err(Error::Structural(format!(
            "rate fit needs at least 4 successful rows, have {}",
            pts.len()
        )));
    }
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Precondition("rate fit needs positive errors".into()));
    }
    let (p, lnc, r2) = linear_fit(&pts);
    Ok(RateFit {
        p,
        c: lnc.exp(),
        r2,
        mode,
    })
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, r²)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    (b, a, r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DependenceMode {
    /// Both runs solve the δ = 0 problem.
    Limit,
    /// Both runs use `base.delta > 0`, initial data taken as given.
    FixedDelta,
}

impl DependenceMode {
    pub fn name(&self) -> &'static str {
        match self {
            DependenceMode::Limit => "limit",
            DependenceMode::FixedDelta => "fixed_delta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DependenceReport {
    pub lhs: f64,
    pub rhs_data_norm: f64,
    pub ratio: f64,
}

/// Solution-distance versus data-distance for two compatible data sets.
///
/// Compatibility means equal initial means and equal `∫_Γ h` at every step
/// (to 1e-12); otherwise the two solutions drift apart in mean and no
/// Lipschitz bound can hold.
pub fn continuous_dependence_check(
    base: &ProblemData,
    perturbed: &ProblemData,
    tg: &TimeGrid,
    cfg: &StepperConfig,
    mode: DependenceMode,
) -> Result<DependenceReport> {
    let grid = &base.grid;
    if perturbed.grid != *grid {
        return Err(Error::Structural("perturbed data lives on a different grid".into()));
    }
    if perturbed.tau != base.tau {
        return Err(Error::Precondition("both data sets must share tau".into()));
    }
    let m1 = grid.mean(&base.y0)?;
    let m2 = grid.mean(&perturbed.y0)?;
    if (m1 - m2).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "compatibility (equal initial means) violated: {m1:e} vs {m2:e}"
        )));
    }
    for n in 1..=tg.steps() {
        let t = tg.time(n);
        let b1 = grid.boundary_integral(&base.h.trace(grid, t))?;
        let b2 = grid.boundary_integral(&perturbed.h.trace(grid, t))?;
        if (b1 - b2).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "compatibility (equal boundary flux integrals) violated at t = {t}: {b1:e} vs {b2:e}"
            )));
        }
    }
    let delta = match mode {
        DependenceMode::Limit => 0.0,
        DependenceMode::FixedDelta => {
            if !(base.delta > 0.0) {
                return Err(Error::Precondition("fixed_delta mode needs base.delta > 0".into()));
            }
            base.delta
        }
    };
    let d1 = base.with_delta(delta);
    let d2 = perturbed.with_delta(delta);
    let t1 = solve_trajectory_with(&d1, tg, cfg, false, Record::StateOnly)?;
    t1.check()?;
    let t2 = solve_trajectory_with(&d2, tg, cfg, false, Record::StateOnly)?;
    t2.check()?;

    let dt = tg.dt();
    let mut g_sq = 0.0;
    let mut h_sq = 0.0;
    for n in 1..=tg.steps() {
        let t = tg.time(n);
        let g1 = base.g.field(grid, t);
        let g2 = perturbed.g.field(grid, t);
        let dg: Vec<f64> = g1.values().iter().zip(g2.values()).map(|(a, b)| a - b).collect();
        g_sq += dt * grid.dot(&dg, &dg);
        let h1 = base.h.trace(grid, t);
        let h2 = perturbed.h.trace(grid, t);
        h_sq += dt
            * h1.values()
                .iter()
                .zip(h2.values())
                .zip(grid.boundary_weights())
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum::<f64>();
    }
    let dy0: Vec<f64> = base.y0.values().iter().zip(perturbed.y0.values()).map(|(a, b)| a - b).collect();
    let y0_h = grid.l2_slice(&dy0);
    let data_terms = g_sq.sqrt() + h_sq.sqrt();

    let (lhs, rhs) = match mode {
        DependenceMode::Limit => (max_l2_distance(grid, &t1, &t2)?, y0_h + data_terms),
        DependenceMode::FixedDelta => {
            let star = PinnedNeumann::new(grid)?;
            let tau_sqrt = base.tau.sqrt();
            let mut star_max = 0.0_f64;
            let mut l2_max = 0.0_f64;
            let mut grad_sum = 0.0;
            let mut diff = vec![0.0; grid.node_count()];
            for (n, (a, b)) in t1.y.iter().zip(&t2.y).enumerate() {
                for (d, (p, q)) in diff.iter_mut().zip(a.values().iter().zip(b.values())) {
                    *d = p - q;
                }
                star_max = star_max.max(star.star_norm_slice(&diff));
                l2_max = l2_max.max(grid.l2_slice(&diff));
                if n > 0 {
                    grad_sum += dt * grid.grad_sq_slice(&diff);
                }
            }
            let lhs = star_max + tau_sqrt * l2_max + delta.sqrt() * grad_sum.sqrt();
            let rhs = star.star_norm_slice(&dy0) + tau_sqrt * y0_h + data_terms;
            (lhs, rhs)
        }
    };
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(DependenceReport {
        lhs,
        rhs_data_norm: rhs,
        ratio,
    })
}

/// `|mean(yⁿ) - M(tₙ)|` with `M(tₙ) = mean(y⁰) + Σ_{k≤n} dt ∫_Γ h(t_k) / |Ω|`.
/// Truncated at the last completed step.
pub fn mass_balance_series(traj: &Trajectory, data: &ProblemData) -> Result<Vec<f64>> {
    let grid = &traj.grid;
    if *grid != data.grid {
        return Err(Error::Structural("trajectory and data live on different grids".into()));
    }
    let dt = traj.time_grid.dt();
    let m0 = grid.mean_slice(traj.y[0].values());
    let mut expected = m0;
    let mut out = Vec::with_capacity(traj.y.len());
    for (n, y) in traj.y.iter().enumerate() {
        if n > 0 {
            let h = data.h.trace(grid, traj.times[n]);
            expected += dt * grid.boundary_integral(&h)? / grid.measure();
        }
        out.push((grid.mean_slice(y.values()) - expected).abs());
    }
    Ok(out)
}
