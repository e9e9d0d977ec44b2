//! Browser bindings for three small studies on the 1D problem: a single
//! trajectory, the graph/Yosida curves of a nonlinearity, and a short δ-sweep.
//!
//! Problem setup goes through the scenario config parser, so graphs and data
//! expressions use the same syntax as `chlimit` config files. Results are
//! returned as flat `Float64Array`s; the layout is documented per function.

use chlimit::analysis::{delta_sweep, fit_rate, RateMode};
use chlimit::scenario::{parse_config, Scenario};
use chlimit::stepper::{solve_trajectory_with, Record};
use wasm_bindgen::prelude::*;

fn config(graph: &str, tau: f64, delta: f64, y0: &str, g: &str, h: &str, n: usize, t: f64, steps: usize) -> String {
    format!(
        "[problem]\ngraph = {graph}\npi = neg_identity\ntau = {tau}\ndelta = {delta}\ny0 = {y0}\ng = {g}\nh = {h}\n\
         [grid]\nn = {n}\n[time]\nT = {t}\nsteps = {steps}\n[run]\nkind = single\n"
    )
}

fn scenario(text: &str) -> Result<Scenario, String> {
    parse_config(text).map_err(|e| e.to_string())
}

/// Snapshots of `y` at `snapshots + 1` equally spaced times (rows of `n`
/// values), followed by the `n` node coordinates.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_rows(
    graph: &str,
    tau: f64,
    delta: f64,
    y0: &str,
    g: &str,
    h: &str,
    n: usize,
    t: f64,
    steps: usize,
    snapshots: usize,
) -> Result<Vec<f64>, String> {
    let s = scenario(&config(graph, tau, delta, y0, g, h, n, t, steps))?;
    let tr = solve_trajectory_with(&s.data, &s.time, &s.stepper, true, Record::StateOnly).map_err(|e| e.to_string())?;
    if let Some(f) = &tr.failure {
        return Err(f.message.clone());
    }
    let snapshots = snapshots.clamp(1, steps);
    let mut out = Vec::with_capacity((snapshots + 2) * n);
    for k in 0..=snapshots {
        out.extend_from_slice(tr.y[k * steps / snapshots].values());
    }
    let x = s.data.grid.field_from_fn(|x, _| x);
    out.extend_from_slice(x.values());
    Ok(out)
}

/// Four rows of `samples` values on `[lo, hi]`: `r`, `β⁰(r)`, `β_ε(r)`, `J_ε(r)`.
pub fn graph_rows(graph: &str, eps: f64, lo: f64, hi: f64, samples: usize) -> Result<Vec<f64>, String> {
    if !(hi > lo) || samples < 2 {
        return Err("need hi > lo and at least two samples".into());
    }
    let s = scenario(&config(graph, 1.0, 0.0, "0", "0", "0", 3, 1.0, 1))?;
    let b = &s.data.graph;
    let r: Vec<f64> = (0..samples).map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64).collect();
    let mut out = r.clone();
    out.extend(r.iter().map(|&v| b.minimal_section(v)));
    for &v in &r {
        out.push(b.yosida(eps, v).map_err(|e| e.to_string())?);
    }
    for &v in &r {
        out.push(b.resolvent(eps, v).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// δ-sweep of the double-well benchmark against the δ = 0 limit.
/// Layout: `m` deltas, `m` errors, then the fitted `p`, `C` and `r²`.
pub fn sweep_rows(deltas: &[f64], n: usize, t: f64, steps: usize) -> Result<Vec<f64>, String> {
    let s = scenario(&config(
        "power 3",
        1.0,
        0.0,
        "0.1*cos(pi*x)",
        "2*cos(pi*x)",
        "2",
        n,
        t,
        steps,
    ))?;
    let table = delta_sweep(&s.data, deltas, &s.time, &s.stepper).map_err(|e| e.to_string())?;
    let fit = fit_rate(&table, RateMode::Delta).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = table.rows.iter().map(|r| r.delta).collect();
    out.extend(table.rows.iter().map(|r| r.error));
    out.extend([fit.p, fit.c, fit.r2]);
    Ok(out)
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn trajectory(
    graph: &str,
    tau: f64,
    delta: f64,
    y0: &str,
    g: &str,
    h: &str,
    n: usize,
    t: f64,
    steps: usize,
    snapshots: usize,
) -> Result<Vec<f64>, JsError> {
    trajectory_rows(graph, tau, delta, y0, g, h, n, t, steps, snapshots).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn graph_curves(graph: &str, eps: f64, lo: f64, hi: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    graph_rows(graph, eps, lo, hi, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sweep(deltas: &[f64], n: usize, t: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    sweep_rows(deltas, n, t, steps).map_err(|e| JsError::new(&e))
}
