//! Manufactured-solution order study on the linearized problem
//! (`β(r) = r`, `π ≡ 0`, zero flux).
//!
//! The exact solution is `y = e^{-t} Π_k cos(π x_k)` on the unit square or
//! interval, with `w = y/κ` and `g = (1 - τ + δκ - 1/κ) y`, `κ = dπ²`.

use std::f64::consts::PI;

use crate::analysis::linear_fit;
use crate::error::{Error, Result};
use crate::grid::{Grid, TimeGrid};
use crate::monotone::{LipschitzPerturbation, MonotoneGraph};
use crate::stepper::{solve_trajectory_with, ProblemData, Record, SpaceTimeFn, StepperConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct MmsConfig {
    pub dim: usize,
    pub tau: f64,
    pub delta: f64,
    pub final_time: f64,
    /// Step counts for the temporal study, run on `fine_nodes`.
    pub time_steps: Vec<usize>,
    pub fine_nodes: usize,
    /// Nodes per axis for the spatial self-convergence study.
    pub space_nodes: Vec<usize>,
    /// Step count shared by all spatial runs.
    pub space_steps: usize,
}

impl Default for MmsConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            tau: 1.0,
            delta: 0.01,
            final_time: 0.5,
            time_steps: vec![16, 32, 64, 128],
            fine_nodes: 1025,
            space_nodes: vec![17, 33, 65, 129],
            space_steps: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsReport {
    /// `(dt, max_n ‖yⁿ - y(tₙ)‖_H)`
    pub temporal: Vec<(f64, f64)>,
    /// `(h, ‖y_h - y_{h/2}‖_H at T)` on the coarse nodes.
    pub spatial: Vec<(f64, f64)>,
    pub temporal_order: f64,
    pub spatial_order: f64,
}

fn kappa(dim: usize) -> f64 {
    dim as f64 * PI * PI
}

fn exact(dim: usize, x: f64, y: f64, t: f64) -> f64 {
    let s = (-t).exp() * (PI * x).cos();
    if dim == 2 {
        s * (PI * y).cos()
    } else {
        s
    }
}

/// Problem data whose exact solution is known.
pub fn manufactured_problem(grid: &Grid, tau: f64, delta: f64) -> Result<ProblemData> {
    let dim = grid.dim();
    let k = kappa(dim);
    let c = 1.0 - tau + delta * k - 1.0 / k;
    let data = ProblemData {
        grid: grid.clone(),
        tau,
        delta,
        lambda: SpaceTimeFn::zero(),
        g: SpaceTimeFn::new("manufactured source", move |x, y, t| c * exact(dim, x, y, t)),
        h: SpaceTimeFn::zero(),
        y0: grid.field_from_fn(|x, y| exact(dim, x, y, 0.0)),
        graph: MonotoneGraph::power(1)?,
        perturbation: LipschitzPerturbation::zero(),
    };
    data.validate()?;
    Ok(data)
}

fn unit_grid(dim: usize, n: usize) -> Result<Grid> {
    match dim {
        1 => Grid::new_1d(1.0, n),
        2 => Grid::new_2d(1.0, 1.0, n, n),
        _ => Err(Error::validation("mms.dim", "dimension must be 1 or 2")),
    }
}

fn order(pts: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = pts.iter().map(|(h, e)| (h.ln(), e.ln())).collect();
    linear_fit(&logs).0
}

pub fn run_mms(cfg: &MmsConfig, stepper: &StepperConfig) -> Result<MmsReport> {
    if cfg.time_steps.len() < 2 || cfg.space_nodes.len() < 2 {
        return Err(Error::validation("mms", "need at least two levels in each study"));
    }
    let mut temporal = Vec::new();
    let fine = unit_grid(cfg.dim, cfg.fine_nodes)?;
    let data = manufactured_problem(&fine, cfg.tau, cfg.delta)?;
    for &steps in &cfg.time_steps {
        let tg = TimeGrid::new(cfg.final_time, steps)?;
        let tr = solve_trajectory_with(&data, &tg, stepper, false, Record::StateOnly)?;
        tr.check()?;
        let mut err = 0.0_f64;
        for (n, y) in tr.y.iter().enumerate() {
            let t = tr.times[n];
            let ex = fine.field_from_fn(|x, yy| exact(cfg.dim, x, yy, t));
            let d: Vec<f64> = y.values().iter().zip(ex.values()).map(|(a, b)| a - b).collect();
            err = err.max(fine.l2_slice(&d));
        }
        temporal.push((tg.dt(), err));
    }

    let tg = TimeGrid::new(cfg.final_time, cfg.space_steps)?;
    let mut finals = Vec::new();
    for &n in &cfg.space_nodes {
        let g = unit_grid(cfg.dim, n)?;
        let d = manufactured_problem(&g, cfg.tau, cfg.delta)?;
        let tr = solve_trajectory_with(&d, &tg, stepper, false, Record::StateOnly)?;
        tr.check()?;
        finals.push((g, tr.y.last().cloned().expect("non-empty trajectory")));
    }
    let mut spatial = Vec::new();
    for pair in finals.windows(2) {
        let (gc, yc) = &pair[0];
        let (gf, yf) = &pair[1];
        let nc = gc.nodes_per_axis()[0];
        let nf = gf.nodes_per_axis()[0];
        if nf != 2 * nc - 1 {
            return Err(Error::validation("mms.space_nodes", "each level must satisfy n_fine = 2 n_coarse - 1"));
        }
        let rows = if cfg.dim == 2 { nc } else { 1 };
        let d: Vec<f64> = (0..gc.node_count())
            .map(|k| {
                let (i, j) = (k % nc, k / nc);
                let kf = if rows > 1 { 2 * j * nf + 2 * i } else { 2 * i };
                yc.values()[k] - yf.values()[kf]
            })
            .collect();
        spatial.push((gc.spacing()[0], gc.l2_slice(&d)));
    }
    Ok(MmsReport {
        temporal_order: order(&temporal),
        spatial_order: order(&spatial),
        temporal,
        spatial,
    })
}
