//! Scenario files, scenario execution and CSV serialization.
//!
//! A scenario is a line-oriented `key = value` file with `[section]`
//! headers; `#` starts a comment.
//!
//! ```text
//! [problem]
//! graph = power 3
//! pi = neg_identity
//! g = 2*cos(pi*x)
//! h = 2
//! y0 = 0.1*cos(pi*x)
//!
//! [grid]
//! n = 257
//!
//! [time]
//! T = 0.25
//!
//! [run]
//! kind = sweep
//! deltas = 1e-1, 3e-2, 1e-2, 3e-3, 1e-3
//! ```
//!
//! | key | default |
//! |-----|---------|
//! | `problem.tau` | 1 |
//! | `problem.delta` | 0 |
//! | `problem.pi` | `zero` |
//! | `problem.lambda`, `problem.g`, `problem.h` | 0 except `lambda` = 1 |
//! | `grid.dim` | 1 |
//! | `grid.length`, `grid.lx`, `grid.ly` | 1 |
//! | `time.steps` | 2048 (dt = T/2048) |
//! | `run.yosida_eps` | 1e-6 (1e-4 for `sign_jump`) |
//! | `run.newton_tol` | 1e-10 |
//! | `output.dir` | `out/<name>` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{
    continuous_dependence_check, delta_sweep, fit_rate, mass_balance_series, ConvergenceTable, DependenceMode,
    DependenceReport, RateFit, RateMode,
};
use crate::catalog::compile;
use crate::elliptic::PinnedNeumann;
use crate::error::{Error, Result};
use crate::grid::{Grid, TimeGrid};
use crate::mms::{run_mms, MmsConfig, MmsReport};
use crate::monotone::{LipschitzPerturbation, MonotoneGraph};
use crate::stepper::{solve_trajectory, Monitors, ProblemData, SpaceTimeFn, StepperConfig, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub enum RunKind {
    Single {
        mollify: bool,
        snapshots: usize,
    },
    Sweep {
        deltas: Vec<f64>,
        min_rate: f64,
        min_r2: f64,
    },
    DepCheck {
        mode: DependenceMode,
        perturb_y0: String,
        perturb_g: String,
        perturb_h: String,
        max_ratio_change: f64,
    },
    Mms {
        config: MmsConfig,
        min_temporal: f64,
        min_spatial: f64,
    },
}

impl RunKind {
    pub fn name(&self) -> &'static str {
        match self {
            RunKind::Single { .. } => "single",
            RunKind::Sweep { .. } => "sweep",
            RunKind::DepCheck { .. } => "depcheck",
            RunKind::Mms { .. } => "mms",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub data: ProblemData,
    pub time: TimeGrid,
    pub stepper: StepperConfig,
    pub run: RunKind,
    pub output: PathBuf,
}

// ---------------------------------------------------------------- parsing

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

const SECTIONS: [&str; 5] = ["problem", "grid", "time", "run", "output"];

struct Sections(BTreeMap<(String, String), Entry>);

impl Sections {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse {
                        line,
                        msg: "unterminated section header".into(),
                    })?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown section [{name}]"),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: "expected `key = value`".into(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "empty key or value".into(),
                });
            }
            let sec = section.clone().ok_or_else(|| Error::Parse {
                line,
                msg: format!("key `{k}` outside any section"),
            })?;
            let key = (sec, k.to_string());
            if map.contains_key(&key) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key `{}.{}`", key.0, key.1),
                });
            }
            map.insert(
                key,
                Entry {
                    line,
                    value: v.to_string(),
                    used: false,
                },
            );
        }
        Ok(Self(map))
    }

    fn take(&mut self, sec: &str, key: &str) -> Option<String> {
        self.0.get_mut(&(sec.to_string(), key.to_string())).map(|e| {
            e.used = true;
            e.value.clone()
        })
    }

    fn has(&self, sec: &str, key: &str) -> bool {
        self.0.contains_key(&(sec.to_string(), key.to_string()))
    }

    fn require(&mut self, sec: &str, key: &str) -> Result<String> {
        self.take(sec, key)
            .ok_or_else(|| Error::validation(format!("{sec}.{key}"), "missing required key"))
    }

    fn number(&mut self, sec: &str, key: &str, default: Option<f64>) -> Result<f64> {
        match self.take(sec, key) {
            Some(v) => parse_f64(&v).ok_or_else(|| Error::validation(format!("{sec}.{key}"), format!("not a number: '{v}'"))),
            None => default.ok_or_else(|| Error::validation(format!("{sec}.{key}"), "missing required key")),
        }
    }

    fn count(&mut self, sec: &str, key: &str, default: Option<usize>) -> Result<usize> {
        match self.take(sec, key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::validation(format!("{sec}.{key}"), format!("not a non-negative integer: '{v}'"))),
            None => default.ok_or_else(|| Error::validation(format!("{sec}.{key}"), "missing required key")),
        }
    }

    fn list<T>(&mut self, sec: &str, key: &str, default: Option<Vec<T>>, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
        match self.take(sec, key) {
            Some(v) => v
                .split(',')
                .map(|s| {
                    let s = s.trim();
                    f(s).ok_or_else(|| Error::validation(format!("{sec}.{key}"), format!("bad list entry '{s}'")))
                })
                .collect(),
            None => default.ok_or_else(|| Error::validation(format!("{sec}.{key}"), "missing required key")),
        }
    }

    fn flag(&mut self, sec: &str, key: &str, default: bool) -> Result<bool> {
        match self.take(sec, key).as_deref() {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::validation(format!("{sec}.{key}"), format!("expected true or false, got '{v}'"))),
        }
    }

    /// Reject keys outside the config vocabulary, before any other check.
    fn check_vocabulary(&self) -> Result<()> {
        let first = self
            .0
            .iter()
            .filter(|((sec, key), _)| !KNOWN_KEYS.iter().any(|(s, keys)| s == sec && keys.contains(&key.as_str())))
            .min_by_key(|(_, e)| e.line);
        match first {
            None => Ok(()),
            Some(((sec, key), e)) => Err(Error::Parse {
                line: e.line,
                msg: format!("unknown key `{sec}.{key}`"),
            }),
        }
    }

    /// Reject keys present in the file that this scenario does not use.
    fn finish(self) -> Result<()> {
        let first = self.0.iter().filter(|(_, e)| !e.used).min_by_key(|(_, e)| e.line);
        match first {
            None => Ok(()),
            Some(((sec, key), e)) => Err(Error::Parse {
                line: e.line,
                msg: format!("unknown key `{sec}.{key}`"),
            }),
        }
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_graph(text: &str) -> Result<MonotoneGraph> {
    let key = "problem.graph";
    let mut parts = text.split_whitespace();
    let name = parts.next().unwrap_or("");
    let arg = parts.next();
    if parts.next().is_some() {
        return Err(Error::validation(key, "too many parameters"));
    }
    let num = |a: Option<&str>, default: Option<f64>| -> Result<f64> {
        match a {
            Some(s) => parse_f64(s).ok_or_else(|| Error::validation(key, format!("bad parameter '{s}'"))),
            None => default.ok_or_else(|| Error::validation(key, format!("{name} needs a parameter"))),
        }
    };
    let wrap = |e: Error| Error::validation(key, e.to_string());
    match name {
        "power" => {
            let p = num(arg, None)?;
            if p.fract() != 0.0 || p < 1.0 || p > 99.0 {
                return Err(Error::validation(key, "power exponent must be an odd integer"));
            }
            MonotoneGraph::power(p as u32).map_err(wrap)
        }
        "sinh" if arg.is_none() => Ok(MonotoneGraph::sinh()),
        "sign_jump" => MonotoneGraph::sign_jump(num(arg, Some(1.0))?).map_err(wrap),
        _ => Err(Error::validation(key, format!("unknown graph '{text}'"))),
    }
}

fn parse_perturbation(text: &str) -> Result<LipschitzPerturbation> {
    let key = "problem.pi";
    let parts: Vec<&str> = text.split_whitespace().collect();
    match parts.as_slice() {
        ["zero"] => Ok(LipschitzPerturbation::zero()),
        ["neg_identity"] => Ok(LipschitzPerturbation::neg_identity()),
        ["linear", k] => parse_f64(k)
            .map(LipschitzPerturbation::linear)
            .ok_or_else(|| Error::validation(key, format!("bad slope '{k}'"))),
        _ => Err(Error::validation(key, format!("unknown perturbation '{text}'"))),
    }
}

fn expression(sec: &mut Sections, section: &str, key: &str, default: &str) -> Result<(String, SpaceTimeFn)> {
    let text = sec.take(section, key).unwrap_or_else(|| default.to_string());
    let f = compile(&text).map_err(|e| Error::validation(format!("{section}.{key}"), e.to_string()))?;
    Ok((text, f))
}

fn check_expr_dims(text: &str, grid: &Grid, key: &str) -> Result<()> {
    let e = crate::catalog::Expr::parse(text)?;
    if grid.dim() == 1 && e.depends_on_y() {
        return Err(Error::validation(key, "uses y on a 1D grid"));
    }
    Ok(())
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("problem", &["tau", "delta", "graph", "pi", "lambda", "g", "h", "y0"]),
    ("grid", &["dim", "n", "length", "nx", "ny", "lx", "ly"]),
    ("time", &["T", "steps", "dt"]),
    (
        "run",
        &[
            "name", "kind", "yosida_eps", "newton_tol", "newton_max_iter", "mollify", "snapshots", "deltas",
            "min_rate", "min_r2", "mode", "perturb_y0", "perturb_g", "perturb_h", "max_ratio_change", "mms_steps",
            "mms_fine_nodes", "mms_nodes", "mms_space_steps", "min_temporal_order", "min_spatial_order",
        ],
    ),
    ("output", &["dir"]),
];

/// Parse and fully validate a scenario file.
pub fn parse_config(text: &str) -> Result<Scenario> {
    let mut s = Sections::parse(text)?;
    s.check_vocabulary()?;

    let dim = s.count("grid", "dim", Some(1))?;
    let grid = match dim {
        1 => {
            let n = s.count("grid", "n", None)?;
            let len = s.number("grid", "length", Some(1.0))?;
            Grid::new_1d(len, n).map_err(|e| Error::validation("grid", e.to_string()))?
        }
        2 => {
            let nx = s.count("grid", "nx", None)?;
            let ny = s.count("grid", "ny", None)?;
            let lx = s.number("grid", "lx", Some(1.0))?;
            let ly = s.number("grid", "ly", Some(1.0))?;
            Grid::new_2d(lx, ly, nx, ny).map_err(|e| Error::validation("grid", e.to_string()))?
        }
        _ => return Err(Error::validation("grid.dim", "must be 1 or 2")),
    };

    let tau = s.number("problem", "tau", Some(1.0))?;
    let delta = s.number("problem", "delta", Some(0.0))?;
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::validation("problem.delta", "delta must lie in [0,1)"));
    }
    if !(tau > 0.0) {
        return Err(Error::validation("problem.tau", "tau must be positive"));
    }
    let graph = parse_graph(&s.require("problem", "graph")?)?;
    let perturbation = parse_perturbation(&s.take("problem", "pi").unwrap_or_else(|| "zero".into()))?;
    let mut exprs = Vec::new();
    let mut fns = Vec::new();
    for (key, default) in [("lambda", "1"), ("g", "0"), ("h", "0")] {
        let (t, f) = expression(&mut s, "problem", key, default)?;
        exprs.push((key, t));
        fns.push(f);
    }
    let y0_text = s.require("problem", "y0")?;
    let y0_expr = crate::catalog::Expr::parse(&y0_text).map_err(|e| Error::validation("problem.y0", e.to_string()))?;
    if y0_expr.depends_on_time() {
        return Err(Error::validation("problem.y0", "initial datum cannot depend on t"));
    }
    exprs.push(("y0", y0_text));
    for (key, text) in &exprs {
        check_expr_dims(text, &grid, &format!("problem.{key}"))?;
    }
    let y0 = grid.field_from_fn(|x, y| y0_expr.eval(x, y, 0.0));
    let mut fns = fns.into_iter();
    let data = ProblemData {
        grid,
        tau,
        delta,
        lambda: fns.next().expect("lambda"),
        g: fns.next().expect("g"),
        h: fns.next().expect("h"),
        y0,
        graph,
        perturbation,
    };
    data.validate().map_err(|e| Error::validation("problem", e.to_string()))?;

    let final_time = s.number("time", "T", None)?;
    let steps = if s.has("time", "dt") {
        if s.has("time", "steps") {
            return Err(Error::validation("time.dt", "give either steps or dt, not both"));
        }
        let dt = s.number("time", "dt", None)?;
        let n = (final_time / dt).round();
        if !(dt > 0.0) || n < 1.0 || ((n * dt - final_time) / final_time).abs() > 1e-9 {
            return Err(Error::validation("time.dt", "dt must divide T"));
        }
        n as usize
    } else {
        s.count("time", "steps", Some(2048))?
    };
    let time = TimeGrid::new(final_time, steps).map_err(|e| Error::validation("time", e.to_string()))?;

    let name = s.take("run", "name").unwrap_or_else(|| "scenario".into());
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(Error::validation("run.name", "use letters, digits, '_' or '-'"));
    }
    let base = StepperConfig::for_graph(&data.graph);
    let stepper = StepperConfig {
        yosida_eps: s.number("run", "yosida_eps", Some(base.yosida_eps))?,
        newton_tol: s.number("run", "newton_tol", Some(base.newton_tol))?,
        newton_max_iter: s.count("run", "newton_max_iter", Some(base.newton_max_iter))?,
        linear_tol: base.linear_tol,
    };
    stepper.validate().map_err(|e| Error::validation("run", e.to_string()))?;

    let kind = s.require("run", "kind")?;
    let run = match kind.as_str() {
        "single" => RunKind::Single {
            mollify: s.flag("run", "mollify", false)?,
            snapshots: s.count("run", "snapshots", Some(5))?,
        },
        "sweep" => {
            let deltas = s.list("run", "deltas", None, parse_f64)?;
            if deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
                return Err(Error::validation("run.deltas", "deltas must lie in (0,1)"));
            }
            if deltas.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(Error::validation("run.deltas", "deltas must be strictly decreasing"));
            }
            RunKind::Sweep {
                deltas,
                min_rate: s.number("run", "min_rate", Some(0.25))?,
                min_r2: s.number("run", "min_r2", Some(0.95))?,
            }
        }
        "depcheck" => {
            let mode = match s.take("run", "mode").as_deref() {
                None | Some("limit") => DependenceMode::Limit,
                Some("fixed_delta") => DependenceMode::FixedDelta,
                Some(m) => return Err(Error::validation("run.mode", format!("unknown mode '{m}'"))),
            };
            if mode == DependenceMode::FixedDelta && data.delta == 0.0 {
                return Err(Error::validation("run.mode", "fixed_delta needs problem.delta > 0"));
            }
            let mut texts = Vec::new();
            for key in ["perturb_y0", "perturb_g", "perturb_h"] {
                let (t, _) = expression(&mut s, "run", key, "0")?;
                check_expr_dims(&t, &data.grid, &format!("run.{key}"))?;
                texts.push(t);
            }
            let mut texts = texts.into_iter();
            RunKind::DepCheck {
                mode,
                perturb_y0: texts.next().expect("y0"),
                perturb_g: texts.next().expect("g"),
                perturb_h: texts.next().expect("h"),
                max_ratio_change: s.number("run", "max_ratio_change", Some(0.2))?,
            }
        }
        "mms" => {
            let d = MmsConfig::default();
            let parse_n = |v: &str| v.parse::<usize>().ok();
            let config = MmsConfig {
                dim: data.grid.dim(),
                tau: data.tau,
                delta: data.delta,
                final_time: time.final_time(),
                time_steps: s.list("run", "mms_steps", Some(d.time_steps), parse_n)?,
                fine_nodes: s.count("run", "mms_fine_nodes", Some(d.fine_nodes))?,
                space_nodes: s.list("run", "mms_nodes", Some(d.space_nodes), parse_n)?,
                space_steps: s.count("run", "mms_space_steps", Some(d.space_steps))?,
            };
            RunKind::Mms {
                config,
                min_temporal: s.number("run", "min_temporal_order", Some(0.9))?,
                min_spatial: s.number("run", "min_spatial_order", Some(1.9))?,
            }
        }
        other => return Err(Error::validation("run.kind", format!("unknown run kind '{other}'"))),
    };
    let output = PathBuf::from(s.take("output", "dir").unwrap_or_else(|| format!("out/{name}")));
    s.finish()?;
    Ok(Scenario {
        name,
        data,
        time,
        stepper,
        run,
        output,
    })
}

pub fn load_config(path: &Path) -> Result<Scenario> {
    parse_config(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------- output

/// Fixed 17-significant-digit float formatting.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
        }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

/// Parse a CSV written by this module: header names and numeric rows.
/// Non-numeric cells (e.g. a `mode` column) read as NaN.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect();
        if cells.len() != header.len() {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("expected {} cells, found {}", header.len(), cells.len()),
            });
        }
        rows.push(cells);
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, text)?;
        self.files.push(p);
        Ok(())
    }
}

/// Execute a scenario, writing its files into `s.output`.
pub fn run_scenario(s: &Scenario) -> Result<RunOutcome> {
    fs::create_dir_all(&s.output)?;
    let mut w = Writer {
        dir: s.output.clone(),
        files: Vec::new(),
    };
    let checks = match &s.run {
        RunKind::Single { mollify, snapshots } => run_single(s, *mollify, *snapshots, &mut w)?,
        RunKind::Sweep { deltas, min_rate, min_r2 } => run_sweep(s, deltas, *min_rate, *min_r2, &mut w)?,
        RunKind::DepCheck {
            mode,
            perturb_y0,
            perturb_g,
            perturb_h,
            max_ratio_change,
        } => run_depcheck(s, *mode, [perturb_y0, perturb_g, perturb_h], *max_ratio_change, &mut w)?,
        RunKind::Mms {
            config,
            min_temporal,
            min_spatial,
        } => run_mms_kind(s, config, *min_temporal, *min_spatial, &mut w)?,
    };
    let mut report = format!("scenario {} ({})\n", s.name, s.run.name());
    for c in &checks {
        let _ = writeln!(report, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let all = checks.iter().all(|c| c.pass);
    let _ = writeln!(report, "result: {}", if all { "PASS" } else { "FAIL" });
    w.write("report.txt", &report)?;
    Ok(RunOutcome { checks, files: w.files })
}

pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    let grid = &traj.grid;
    let star = PinnedNeumann::new(grid)?;
    let mut csv = Csv::new(&["t", "mass", "energy", "l2_y", "star_y", "linf_y", "newton_iters"]);
    for (n, y) in traj.y.iter().enumerate() {
        let d = &traj.diagnostics[n];
        let norms = grid.norms(y)?;
        csv.row(&[
            fmt_f64(traj.times[n]),
            fmt_f64(d.mass),
            fmt_f64(d.energy),
            fmt_f64(norms.l2),
            fmt_f64(star.star_norm(y)?),
            fmt_f64(norms.linf),
            d.newton_iters.to_string(),
        ]);
    }
    Ok(csv.text)
}

pub fn snapshot_csv(grid: &Grid, y: &crate::grid::ScalarField) -> String {
    let two = grid.dim() == 2;
    let mut csv = Csv::new(if two { &["x", "y", "value"] } else { &["x", "value"] });
    for (k, v) in y.values().iter().enumerate() {
        let [x, yy] = grid.coords(k);
        if two {
            csv.row(&[fmt_f64(x), fmt_f64(yy), fmt_f64(*v)]);
        } else {
            csv.row(&[fmt_f64(x), fmt_f64(*v)]);
        }
    }
    csv.text
}

pub fn sweep_csv(table: &ConvergenceTable) -> String {
    let mut header = vec!["delta", "error", "init_error"];
    header.extend(Monitors::NAMES);
    let mut csv = Csv::new(&header);
    for r in &table.rows {
        let mut cells = vec![fmt_f64(r.delta), fmt_f64(r.error), fmt_f64(r.init_error)];
        cells.extend(r.monitors.values().iter().map(|v| fmt_f64(*v)));
        csv.row(&cells);
    }
    csv.text
}

pub fn ratefit_text(fits: &[RateFit]) -> String {
    let mut csv = Csv::new(&["p", "c", "r2", "mode"]);
    for f in fits {
        csv.row(&[fmt_f64(f.p), fmt_f64(f.c), fmt_f64(f.r2), f.mode.name().to_string()]);
    }
    csv.text
}

fn snapshot_steps(done: usize, count: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![done];
    }
    let mut out: Vec<usize> = (0..count)
        .map(|k| ((k as f64) * done as f64 / (count - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

fn run_single(s: &Scenario, mollify: bool, snapshots: usize, w: &mut Writer) -> Result<Vec<Check>> {
    let traj = solve_trajectory(&s.data, &s.time, &s.stepper, mollify)?;
    w.write("trajectory.csv", &trajectory_csv(&traj)?)?;
    for n in snapshot_steps(traj.completed_steps(), snapshots) {
        w.write(&format!("y_{n:04}.csv"), &snapshot_csv(&traj.grid, &traj.y[n]))?;
    }
    let mut checks = vec![Check::new(
        "trajectory_complete",
        traj.is_complete(),
        match &traj.failure {
            None => format!("{} steps", traj.completed_steps()),
            Some(f) => format!("failed at step {}: {}", f.step, f.message),
        },
    )];
    let series = mass_balance_series(&traj, &s.data)?;
    let linf = traj
        .y
        .iter()
        .map(|y| y.values().iter().fold(0.0_f64, |a, v| a.max(v.abs())))
        .fold(0.0, f64::max);
    let worst = series.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * (1.0 + linf);
    checks.push(Check::new(
        "mass_balance",
        worst <= tol,
        format!("max deviation {} (tolerance {})", fmt_f64(worst), fmt_f64(tol)),
    ));
    Ok(checks)
}

/// Criterion on the eight monitors across a sweep: the six unscaled
/// monitors stay within a factor 2 in both directions, the two δ-weighted
/// ones may not grow by more than 2×.
pub fn monitor_check(table: &ConvergenceTable) -> (bool, String) {
    let growth = table.monitor_growth();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, g)) in Monitors::NAMES.iter().zip(growth).enumerate() {
        let scaled = k == 4 || k == 7;
        let pass = if scaled { g < 2.0 } else { g < 2.0 && g > 0.5 };
        ok &= pass;
        parts.push(format!("{name}={g:.3}"));
    }
    (ok, parts.join(" "))
}

fn run_sweep(s: &Scenario, deltas: &[f64], min_rate: f64, min_r2: f64, w: &mut Writer) -> Result<Vec<Check>> {
    let table = delta_sweep(&s.data, deltas, &s.time, &s.stepper)?;
    w.write("sweep.csv", &sweep_csv(&table))?;
    let failed: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| r.failure.as_ref().map(|f| format!("delta {}: {f}", r.delta)))
        .collect();
    let mut checks = vec![Check::new(
        "rows_complete",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} rows", table.rows.len())
        } else {
            failed.join("; ")
        },
    )];
    let errors: Vec<f64> = table.successful().map(|r| r.error).collect();
    checks.push(Check::new(
        "errors_decreasing",
        errors.windows(2).all(|p| p[1] < p[0]),
        errors.iter().map(|e| fmt_f64(*e)).collect::<Vec<_>>().join(" "),
    ));
    match (fit_rate(&table, RateMode::Delta), fit_rate(&table, RateMode::DeltaPlusInit)) {
        (Ok(f), Ok(g)) => {
            w.write("ratefit.txt", &ratefit_text(&[f, g]))?;
            checks.push(Check::new(
                "rate_exponent",
                f.p >= min_rate,
                format!("p = {} (minimum {min_rate})", fmt_f64(f.p)),
            ));
            checks.push(Check::new(
                "rate_fit_quality",
                f.r2 >= min_r2,
                format!("r2 = {} (minimum {min_r2})", fmt_f64(f.r2)),
            ));
        }
        (Err(e), _) | (_, Err(e)) => checks.push(Check::new("rate_exponent", false, e.to_string())),
    }
    let c = table.bound_constant();
    checks.push(Check::new(
        "error_bound",
        c.is_finite(),
        format!("error <= C (delta^(1/4) + init_error) with C = {}", fmt_f64(c)),
    ));
    let (ok, detail) = monitor_check(&table);
    checks.push(Check::new("monitors_bounded", ok, detail));
    Ok(checks)
}

/// Base and perturbed data for a dependence check; the perturbation is
/// multiplied by `scale`.
pub fn perturbed_data(base: &ProblemData, texts: [&str; 3], scale: f64) -> Result<ProblemData> {
    let py0 = compile(texts[0])?;
    let mut d = base.clone();
    d.y0 = d.y0.zip_map(&py0.field(&base.grid, 0.0), |a, b| a + scale * b)?;
    d.g = d.g.plus(&compile(texts[1])?.scaled(scale));
    d.h = d.h.plus(&compile(texts[2])?.scaled(scale));
    Ok(d)
}

fn run_depcheck(s: &Scenario, mode: DependenceMode, texts: [&String; 3], max_change: f64, w: &mut Writer) -> Result<Vec<Check>> {
    let texts = texts.map(|t| t.as_str());
    let mut reports: Vec<(f64, DependenceReport)> = Vec::new();
    for scale in [1.0, 0.5] {
        let p = perturbed_data(&s.data, texts, scale)?;
        match continuous_dependence_check(&s.data, &p, &s.time, &s.stepper, mode) {
            Ok(r) => reports.push((scale, r)),
            Err(Error::Precondition(msg)) => {
                return Ok(vec![Check::new("compatibility", false, msg)]);
            }
            Err(e) => return Err(e),
        }
    }
    let mut csv = Csv::new(&["scale", "lhs", "rhs", "ratio"]);
    for (scale, r) in &reports {
        csv.row(&[fmt_f64(*scale), fmt_f64(r.lhs), fmt_f64(r.rhs_data_norm), fmt_f64(r.ratio)]);
    }
    w.write("depcheck.csv", &csv.text)?;
    let (full, half) = (reports[0].1, reports[1].1);
    let mut checks = vec![Check::new("compatibility", true, "equal initial means and boundary flux integrals")];
    checks.push(Check::new(
        "ratio_finite",
        full.ratio.is_finite() && full.rhs_data_norm > 0.0,
        format!("ratio = {} ({} mode)", fmt_f64(full.ratio), mode.name()),
    ));
    let change = (half.ratio / full.ratio - 1.0).abs();
    checks.push(Check::new(
        "ratio_stable",
        change < max_change,
        format!("relative change {} under halving (maximum {max_change})", fmt_f64(change)),
    ));
    Ok(checks)
}

pub fn mms_csv(r: &MmsReport) -> String {
    let mut csv = Csv::new(&["study", "spacing", "error"]);
    for (dt, e) in &r.temporal {
        csv.row(&["temporal".into(), fmt_f64(*dt), fmt_f64(*e)]);
    }
    for (h, e) in &r.spatial {
        csv.row(&["spatial".into(), fmt_f64(*h), fmt_f64(*e)]);
    }
    csv.text
}

fn run_mms_kind(s: &Scenario, cfg: &MmsConfig, min_t: f64, min_s: f64, w: &mut Writer) -> Result<Vec<Check>> {
    let r = run_mms(cfg, &s.stepper)?;
    w.write("mms.csv", &mms_csv(&r))?;
    Ok(vec![
        Check::new(
            "temporal_order",
            r.temporal_order >= min_t,
            format!("{} (minimum {min_t})", fmt_f64(r.temporal_order)),
        ),
        Check::new(
            "spatial_order",
            r.spatial_order >= min_s,
            format!("{} (minimum {min_s})", fmt_f64(r.spatial_order)),
        ),
    ])
}

/// Cap the worker pool used by δ-sweeps. Call once, before any sweep.
#[cfg(feature = "parallel")]
pub fn limit_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))
}
