//! Convergence experiments: effective table, limit solution, and a ladder of
//! perturbed value functions compared against it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slowfast_core::effective::limit_dt_bound;
use slowfast_core::hjb::core_nodes;
use slowfast_core::{
    bar_u0, make_box_grid, solve_limit, solve_value_function, tabulate_effective, y_oscillation, BoxGrid,
    ControlProblem, EffectiveTable, Error, LimitSolution, ValueFunction,
};

use crate::AppError;

#[derive(Debug, Clone, Serialize)]
pub struct Thresholds {
    pub final_interior_error: f64,
    pub final_oscillation: f64,
    /// Allowed excess of `V(x, y, 2 eps)` over `u0bar(x)`.
    pub layer_upper: f64,
    /// Allowed shortfall of `V` below the lower envelope.
    pub layer_lower: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            final_interior_error: 0.1,
            final_oscillation: 0.1,
            layer_upper: 0.15,
            layer_lower: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub eps_list: Vec<f64>,
    pub x_grid: BoxGrid,
    pub y_grid: BoxGrid,
    pub p_grid: BoxGrid,
    /// Slow nodes per axis of the effective table (same box as `x_grid`).
    pub table_x_nodes: usize,
    pub horizon: f64,
    pub t_min: f64,
    pub table_tol: f64,
    /// Fraction of the Lax-Friedrichs stability bound used as step.
    pub limit_cfl: f64,
    /// Half-width of the slow probe box.
    pub probe_x: f64,
    /// Fraction of the fast box forming the core used for probes.
    pub core_fraction: f64,
    pub thresholds: Thresholds,
}

impl ConvergenceConfig {
    pub fn new(
        eps_list: Vec<f64>,
        x_grid: BoxGrid,
        y_grid: BoxGrid,
        p_grid: BoxGrid,
        horizon: f64,
        t_min: f64,
    ) -> Self {
        ConvergenceConfig {
            eps_list,
            x_grid,
            y_grid,
            p_grid,
            table_x_nodes: 5,
            horizon,
            t_min,
            table_tol: 1e-3,
            limit_cfl: 0.9,
            probe_x: 1.2,
            core_fraction: 0.5,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridInfo {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl From<&BoxGrid> for GridInfo {
    fn from(g: &BoxGrid) -> Self {
        GridInfo {
            lower: g.lower().to_vec(),
            upper: g.upper().to_vec(),
            nodes: g.resolution().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Grids {
    pub x: GridInfo,
    pub y: GridInfo,
    pub p: GridInfo,
    pub table_x: GridInfo,
}

#[derive(Debug, Clone, Serialize)]
pub struct InteriorError {
    pub eps: f64,
    pub dt: f64,
    pub sup_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Oscillation {
    pub eps: f64,
    pub t: f64,
    pub max_osc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerMargins {
    /// `max (V(x, y, t_layer) - u0bar(x))` over probe `x` and core `y`.
    pub upper: f64,
    /// `min (V - envelope - min(P0, 0) t)` over probe points and `0 < t <= t_layer`.
    pub lower: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Layer {
    pub eps: f64,
    pub t_layer: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
    pub margins: LayerMargins,
}

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="`, `">="` or `"decreasing"`.
    pub relation: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableSummary {
    pub entries: usize,
    pub failed: usize,
    pub max_bracket_width: f64,
    pub dissipation: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub problem: String,
    /// `"verified"` for builtins, `"informative"` when no comparison
    /// certificate backs the limit equation.
    pub mode: String,
    pub grids: Grids,
    pub horizon: f64,
    pub t_min: f64,
    pub eps_list: Vec<f64>,
    pub table: TableSummary,
    pub limit_dt: f64,
    pub interior_error: Vec<InteriorError>,
    pub oscillation: Vec<Oscillation>,
    pub layer: Layer,
    pub thresholds: Thresholds,
    pub criteria: Vec<Criterion>,
    pub pass: bool,
}

/// Artifacts kept alongside the report.
pub struct ConvergenceRun {
    pub report: ConvergenceReport,
    pub table: EffectiveTable,
    pub limit: LimitSolution,
    pub values: Vec<ValueFunction>,
}

fn stage(name: &'static str) -> impl Fn(Error) -> AppError {
    move |e| AppError::Stage {
        stage: name,
        source: e,
    }
}

/// Largest step with both characteristic feet inside one cell.
pub fn value_function_dt(problem: &ControlProblem, eps: f64, x_grid: &BoxGrid, y_grid: &BoxGrid) -> f64 {
    let n = problem.dim_slow;
    let m = problem.dim_fast;
    let grid = x_grid.product(y_grid).expect("grids of matching kind");
    let mut p = vec![0.0; n + m];
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut rate: f64 = 0.0;
    for i in 0..grid.len() {
        grid.node_into(i, &mut p);
        let (x, y) = p.split_at(n);
        for a in 0..problem.num_controls() {
            problem.f(x, y, a, &mut f);
            problem.g(x, y, a, &mut g);
            for (fk, hk) in f.iter().zip(x_grid.spacing()) {
                rate = rate.max(fk.abs() / hk);
            }
            for (gk, hk) in g.iter().zip(y_grid.spacing()) {
                rate = rate.max(gk.abs() / (eps * hk));
            }
        }
    }
    if rate > 0.0 {
        1.0 / rate
    } else {
        x_grid.min_spacing()
    }
}

/// Minimum of the running cost over the product grid and all controls.
fn min_running_cost(problem: &ControlProblem, grid: &BoxGrid) -> f64 {
    let n = problem.dim_slow;
    let mut p = vec![0.0; grid.dim()];
    let mut best = f64::INFINITY;
    for i in 0..grid.len() {
        grid.node_into(i, &mut p);
        for a in 0..problem.num_controls() {
            best = best.min(problem.ell(&p[..n], &p[n..], a));
        }
    }
    best
}

/// Nodewise minimum over the `3^N` neighbourhood.
pub fn lower_envelope(grid: &BoxGrid, values: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut c| {
            (0..d)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .collect();
    (0..grid.len())
        .map(|i| {
            offsets
                .iter()
                .filter_map(|o| grid.shifted(i, o))
                .map(|j| values[j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn run_convergence(
    problem: &ControlProblem,
    builtin: bool,
    cfg: &ConvergenceConfig,
) -> Result<ConvergenceRun, AppError> {
    if cfg.eps_list.is_empty() || !cfg.eps_list.iter().all(|&e| e > 0.0) {
        return Err(AppError::Usage("eps list must be non-empty and positive".into()));
    }
    if !strictly_decreasing(&cfg.eps_list) {
        return Err(AppError::Usage("eps list must be strictly decreasing".into()));
    }
    if !(cfg.t_min > 0.0 && cfg.t_min <= cfg.horizon) {
        return Err(AppError::Usage("need 0 < t_min <= T".into()));
    }
    let n = problem.dim_slow;
    let xg = &cfg.x_grid;
    let yg = &cfg.y_grid;

    let table_x =
        make_box_grid(xg.lower(), xg.upper(), &vec![cfg.table_x_nodes; n]).map_err(stage("effective"))?;
    let table =
        tabulate_effective(problem, &table_x, &cfg.p_grid, yg, cfg.table_tol).map_err(stage("effective"))?;
    if let Some(k) = table.status.iter().position(Option::is_some) {
        let np = table.p_grid.len();
        return Err(AppError::Stage {
            stage: "effective",
            source: Error::TableEntry {
                x: table.x_grid.node(k / np),
                p: table.p_grid.node(k % np),
                reason: table.status[k].clone().unwrap_or_default(),
            },
        });
    }
    let limit_dt = cfg.limit_cfl * limit_dt_bound(&table, xg).min(cfg.horizon.max(xg.min_spacing()));
    let limit = solve_limit(problem, &table, xg, yg, cfg.horizon, limit_dt).map_err(stage("limit"))?;

    let values: Vec<ValueFunction> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| {
            let dt = value_function_dt(problem, eps, xg, yg);
            solve_value_function(problem, eps, xg, yg, cfg.horizon, dt)
        })
        .collect::<Result<_, _>>()
        .map_err(stage("value function"))?;

    let probe_x: Vec<usize> = (0..xg.len())
        .filter(|&i| xg.node(i).iter().all(|v| v.abs() <= cfg.probe_x + 1e-12))
        .collect();
    let core_y = core_nodes(yg, cfg.core_fraction);
    let ny = yg.len();

    let mut interior_error = Vec::new();
    let mut oscillation = Vec::new();
    for v in &values {
        let mut err: f64 = 0.0;
        for (k, &t) in v.times.iter().enumerate() {
            if t < cfg.t_min - 1e-12 {
                continue;
            }
            for &ix in &probe_x {
                let u = limit.value_at(&xg.node(ix), t);
                for &iy in &core_y {
                    err = err.max((v.slices[k].values[ix * ny + iy] - u).abs());
                }
            }
        }
        interior_error.push(InteriorError {
            eps: v.eps,
            dt: v.dt,
            sup_err: err,
        });
        for t in [0.5 * cfg.horizon, cfg.horizon] {
            let k = v.slice_index(t);
            let osc = y_oscillation(v, k).map_err(stage("oscillation"))?;
            let max_osc = probe_x.iter().map(|&i| osc.values[i]).fold(0.0, f64::max);
            oscillation.push(Oscillation {
                eps: v.eps,
                t: v.times[k],
                max_osc,
            });
        }
    }

    let last = values.last().expect("non-empty eps list");
    let layer = initial_layer(problem, cfg, last, &probe_x, &core_y)?;

    let th = &cfg.thresholds;
    let mut criteria = Vec::new();
    let errs: Vec<f64> = interior_error.iter().map(|e| e.sup_err).collect();
    let oscs_t: Vec<f64> = oscillation.iter().skip(1).step_by(2).map(|o| o.max_osc).collect();
    if values.len() > 1 {
        criteria.push(trend("interior_error_decreasing", &errs));
        criteria.push(trend("oscillation_decreasing", &oscs_t));
    }
    criteria.push(at_most(
        "final_interior_error",
        *errs.last().unwrap(),
        th.final_interior_error,
    ));
    criteria.push(at_most(
        "final_oscillation",
        *oscs_t.last().unwrap(),
        th.final_oscillation,
    ));
    criteria.push(at_most("layer_upper", layer.margins.upper, th.layer_upper));
    criteria.push(Criterion {
        name: "layer_lower".into(),
        value: layer.margins.lower,
        threshold: -th.layer_lower,
        relation: ">=".into(),
        pass: layer.lower_ok,
    });
    let pass = criteria.iter().all(|c| c.pass);

    let report = ConvergenceReport {
        problem: problem.name.clone(),
        mode: if builtin { "verified" } else { "informative" }.into(),
        grids: Grids {
            x: xg.into(),
            y: yg.into(),
            p: (&cfg.p_grid).into(),
            table_x: (&table_x).into(),
        },
        horizon: cfg.horizon,
        t_min: cfg.t_min,
        eps_list: cfg.eps_list.clone(),
        table: TableSummary {
            entries: table.len(),
            failed: table.failed(),
            max_bracket_width: table.bracket_widths.iter().copied().fold(0.0, f64::max),
            dissipation: table.dissipation(),
        },
        limit_dt: limit.dt,
        interior_error,
        oscillation,
        layer,
        thresholds: th.clone(),
        criteria,
        pass,
    };
    Ok(ConvergenceRun {
        report,
        table,
        limit,
        values,
    })
}

fn trend(name: &str, v: &[f64]) -> Criterion {
    let worst = v
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Criterion {
        name: name.into(),
        value: worst,
        threshold: 0.0,
        relation: "decreasing".into(),
        pass: strictly_decreasing(v),
    }
}

fn at_most(name: &str, value: f64, threshold: f64) -> Criterion {
    Criterion {
        name: name.into(),
        value,
        threshold,
        relation: "<=".into(),
        pass: value <= threshold,
    }
}

fn initial_layer(
    problem: &ControlProblem,
    cfg: &ConvergenceConfig,
    v: &ValueFunction,
    probe_x: &[usize],
    core_y: &[usize],
) -> Result<Layer, AppError> {
    let xg = &cfg.x_grid;
    let yg = &cfg.y_grid;
    let ny = yg.len();
    let t_layer = 2.0 * v.eps;
    let u0bar: Vec<f64> = (0..xg.len()).map(|i| bar_u0(problem, &xg.node(i), yg)).collect();
    let envelope = lower_envelope(xg, &u0bar);
    let p0 = min_running_cost(problem, &v.grid);
    let q0 = problem.bound_f;

    let mut upper = f64::NEG_INFINITY;
    for &ix in probe_x {
        let x = xg.node(ix);
        for &iy in core_y {
            upper = upper.max(v.value_at(&x, &yg.node(iy), t_layer) - u0bar[ix]);
        }
    }

    let mut lower = f64::INFINITY;
    for (k, &t) in v.times.iter().enumerate() {
        if t <= 0.0 || t > t_layer + 1e-12 {
            continue;
        }
        let reach = q0 * t + xg.max_spacing();
        for &ix in probe_x {
            let x = xg.node(ix);
            let env = (0..xg.len())
                .filter(|&j| dist(&xg.node(j), &x) <= reach + 1e-12)
                .map(|j| envelope[j])
                .fold(f64::INFINITY, f64::min);
            for &iy in core_y {
                let val = v.slices[k].values[ix * ny + iy];
                lower = lower.min(val - env - p0.min(0.0) * t);
            }
        }
    }
    let th = &cfg.thresholds;
    Ok(Layer {
        eps: v.eps,
        t_layer,
        upper_ok: upper <= th.layer_upper,
        lower_ok: lower >= -th.layer_lower,
        margins: LayerMargins { upper, lower },
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(s, t)| (s - t) * (s - t))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use slowfast_core::builtin_problem;

    #[test]
    fn envelope_is_neighbour_min() {
        let g = make_box_grid(&[0.0], &[4.0], &[5]).unwrap();
        assert_eq!(
            lower_envelope(&g, &[3.0, 1.0, 4.0, 0.5, 2.0]),
            vec![1.0, 1.0, 0.5, 0.5, 0.5]
        );
    }

    #[test]
    fn quadcell_dt_matches_cfl() {
        let p = builtin_problem("quadcell", 3).unwrap();
        let xg = make_box_grid(&[-2.0], &[2.0], &[81]).unwrap();
        let yg = make_box_grid(&[-2.0], &[2.0], &[81]).unwrap();
        assert!((value_function_dt(&p, 0.1, &xg, &yg) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_ladders() {
        let p = builtin_problem("quadcell", 3).unwrap();
        let g = make_box_grid(&[-1.0], &[1.0], &[11]).unwrap();
        let cfg = ConvergenceConfig::new(vec![0.1, 0.2], g.clone(), g.clone(), g, 0.5, 0.2);
        assert!(matches!(run_convergence(&p, true, &cfg), Err(AppError::Usage(_))));
    }
}
