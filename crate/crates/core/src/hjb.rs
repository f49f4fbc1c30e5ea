//! Semi-Lagrangian value functions of the two-scale problem, plus
//! trajectory simulation and fast-variable steering.
//!
//! Time runs forward from the `t = 0` slice, which equals `u0`. A step of
//! length `dt` moves the slow variable by `dt f` and the fast one by
//! `(dt / eps) g`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{interpolate_values, BoxGrid, Field};
use crate::par::map_range;
use crate::problem::ControlProblem;
use crate::Error;

#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub eps: f64,
    pub x_grid: BoxGrid,
    pub y_grid: BoxGrid,
    /// Product grid, slow axes first.
    pub grid: BoxGrid,
    pub horizon: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub slices: Vec<Field>,
}

impl ValueFunction {
    /// Index of the stored slice closest to `t`.
    pub fn slice_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    /// Multilinear in space, linear between stored slices in time.
    pub fn value_at(&self, x: &[f64], y: &[f64], t: f64) -> f64 {
        let p = [x, y].concat();
        let eval = |k: usize| interpolate_values(&self.grid, &self.slices[k].values, &p);
        let last = self.times.len() - 1;
        if t <= self.times[0] || last == 0 {
            return eval(0);
        }
        if t >= self.times[last] {
            return eval(last);
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let r = (t - t0) / (t1 - t0);
        if r == 0.0 {
            return eval(k);
        }
        (1.0 - r) * eval(k) + r * eval(k + 1)
    }
}

/// Number of steps and the adjusted step so that `n dt = horizon` exactly.
pub fn step_count(horizon: f64, dt: f64) -> (usize, f64) {
    if horizon <= 0.0 {
        return (0, dt);
    }
    let n = libm::ceil(horizon / dt - 1e-9).max(1.0) as usize;
    (n, horizon / n as f64)
}

pub fn solve_value_function(
    problem: &ControlProblem,
    eps: f64,
    x_grid: &BoxGrid,
    y_grid: &BoxGrid,
    horizon: f64,
    dt: f64,
) -> Result<ValueFunction, Error> {
    let grid = x_grid.product(y_grid)?;
    let n = problem.dim_slow;
    let mut p = vec![0.0; grid.dim()];
    let initial: Vec<f64> = (0..grid.len())
        .map(|i| {
            grid.node_into(i, &mut p);
            problem.u0(&p[..n], &p[n..])
        })
        .collect();
    solve_value_function_from(problem, eps, x_grid, y_grid, horizon, dt, initial, 1)
}

/// Same recursion from arbitrary nodal initial data; every `stride`-th step
/// and the last step are stored.
#[allow(clippy::too_many_arguments)]
pub fn solve_value_function_from(
    problem: &ControlProblem,
    eps: f64,
    x_grid: &BoxGrid,
    y_grid: &BoxGrid,
    horizon: f64,
    dt: f64,
    initial: Vec<f64>,
    stride: usize,
) -> Result<ValueFunction, Error> {
    let n = problem.dim_slow;
    let m = problem.dim_fast;
    if x_grid.dim() != n || y_grid.dim() != m {
        return Err(Error::Dimension(format!(
            "grids must have {n} slow and {m} fast axes"
        )));
    }
    if !(eps > 0.0) || !(dt > 0.0) || !(horizon >= 0.0) || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "need eps > 0, dt > 0, horizon >= 0 and stride >= 1 (got {eps}, {dt}, {horizon}, {stride})"
        )));
    }
    let grid = x_grid.product(y_grid)?;
    if initial.len() != grid.len() {
        return Err(Error::Dimension("initial data does not match the grid".into()));
    }
    let (steps, dt) = step_count(horizon, dt);
    let na = problem.num_controls();
    let dim = n + m;

    // Running cost and characteristic foot per (node, control); the dynamics
    // are autonomous so these are reused at every step.
    let per_node = map_range(grid.len(), |i| {
        let mut p = vec![0.0; dim];
        grid.node_into(i, &mut p);
        let (x, y) = p.split_at(n);
        let mut f = vec![0.0; n];
        let mut g = vec![0.0; m];
        let mut cost = Vec::with_capacity(na);
        let mut feet = Vec::with_capacity(na * dim);
        let mut ratio: f64 = 0.0;
        for a in 0..na {
            problem.f(x, y, a, &mut f);
            problem.g(x, y, a, &mut g);
            cost.push(dt * problem.ell(x, y, a));
            for k in 0..n {
                feet.push(x[k] + dt * f[k]);
                ratio = ratio.max(dt * f[k].abs() / x_grid.spacing()[k]);
            }
            for k in 0..m {
                feet.push(y[k] + dt / eps * g[k]);
                ratio = ratio.max(dt / eps * g[k].abs() / y_grid.spacing()[k]);
            }
        }
        (cost, feet, ratio)
    });
    let ratio = per_node.iter().map(|t| t.2).fold(0.0, f64::max);
    if ratio > 1.0 + 1e-12 {
        return Err(Error::Cfl {
            what: "semi-Lagrangian foot",
            ratio,
        });
    }

    let mut times = vec![0.0];
    let mut slices = vec![Field::new(grid.clone(), initial.clone())?];
    let mut cur = initial;
    for step in 1..=steps {
        let prev = &cur;
        let next: Vec<f64> = map_range(grid.len(), |i| {
            let (cost, feet, _) = &per_node[i];
            let mut best = f64::INFINITY;
            for a in 0..na {
                let v = cost[a] + interpolate_values(&grid, prev, &feet[a * dim..(a + 1) * dim]);
                if v < best {
                    best = v;
                }
            }
            best
        });
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node: i, step });
        }
        cur = next;
        if step % stride == 0 || step == steps {
            times.push(if step == steps { horizon } else { step as f64 * dt });
            slices.push(Field::new(grid.clone(), cur.clone())?);
        }
    }
    Ok(ValueFunction {
        eps,
        x_grid: x_grid.clone(),
        y_grid: y_grid.clone(),
        grid,
        horizon,
        dt,
        times,
        slices,
    })
}

/// Nodes of `grid` inside the central `fraction` of the box on every axis.
pub fn core_nodes(grid: &BoxGrid, fraction: f64) -> Vec<usize> {
    let d = grid.dim();
    let mut y = vec![0.0; d];
    (0..grid.len())
        .filter(|&i| {
            grid.node_into(i, &mut y);
            (0..d).all(|k| {
                let c = 0.5 * (grid.lower()[k] + grid.upper()[k]);
                let half = 0.5 * fraction * (grid.upper()[k] - grid.lower()[k]);
                (y[k] - c).abs() <= half * (1.0 + 1e-12)
            })
        })
        .collect()
}

/// Range of the slice over the central half of the fast box, per slow node.
pub fn y_oscillation(v: &ValueFunction, t_index: usize) -> Result<Field, Error> {
    y_oscillation_core(v, t_index, 0.5)
}

pub fn y_oscillation_core(v: &ValueFunction, t_index: usize, fraction: f64) -> Result<Field, Error> {
    let slice = v
        .slices
        .get(t_index)
        .ok_or_else(|| Error::InvalidArgument(format!("slice index {t_index} out of range")))?;
    let core = core_nodes(&v.y_grid, fraction);
    let ny = v.y_grid.len();
    let values = (0..v.x_grid.len())
        .map(|ix| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &iy in &core {
                let u = slice.values[ix * ny + iy];
                lo = lo.min(u);
                hi = hi.max(u);
            }
            hi - lo
        })
        .collect();
    Field::new(v.x_grid.clone(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub eps: f64,
    pub times: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    /// Control index used on each step.
    pub controls: Vec<usize>,
    /// `eps * int ell dt` by the trapezoid rule.
    pub cost: f64,
}

struct Stepper<'a> {
    problem: &'a ControlProblem,
    eps: f64,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl Stepper<'_> {
    fn rhs(&mut self, x: &[f64], y: &[f64], a: usize, dx: &mut [f64], dy: &mut [f64]) {
        self.problem.f(x, y, a, &mut self.f);
        self.problem.g(x, y, a, &mut self.g);
        for k in 0..dx.len() {
            dx[k] = self.eps * self.f[k];
        }
        dy.copy_from_slice(&self.g);
    }

    /// Heun step; returns the trapezoid cost increment.
    fn step(&mut self, x: &mut [f64], y: &mut [f64], a: usize, dt: f64) -> f64 {
        let (n, m) = (x.len(), y.len());
        let (mut k1x, mut k1y) = (vec![0.0; n], vec![0.0; m]);
        let (mut k2x, mut k2y) = (vec![0.0; n], vec![0.0; m]);
        self.rhs(x, y, a, &mut k1x, &mut k1y);
        let xp: Vec<f64> = (0..n).map(|k| x[k] + dt * k1x[k]).collect();
        let yp: Vec<f64> = (0..m).map(|k| y[k] + dt * k1y[k]).collect();
        self.rhs(&xp, &yp, a, &mut k2x, &mut k2y);
        let l0 = self.problem.ell(x, y, a);
        for k in 0..n {
            x[k] += 0.5 * dt * (k1x[k] + k2x[k]);
        }
        for k in 0..m {
            y[k] += 0.5 * dt * (k1y[k] + k2y[k]);
        }
        let l1 = self.problem.ell(x, y, a);
        self.eps * 0.5 * (l0 + l1) * dt
    }
}

/// Integrates `x' = eps f`, `y' = g` with one control index per step.
pub fn simulate_trajectory(
    problem: &ControlProblem,
    eps: f64,
    x0: &[f64],
    y0: &[f64],
    controls: &[usize],
    dt: f64,
) -> Result<Trajectory, Error> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
    }
    if x0.len() != problem.dim_slow || y0.len() != problem.dim_fast {
        return Err(Error::Dimension("initial state has wrong dimensions".into()));
    }
    if let Some(&a) = controls.iter().find(|&&a| a >= problem.num_controls()) {
        return Err(Error::InvalidArgument(format!("control index {a} out of range")));
    }
    let mut st = Stepper {
        problem,
        eps,
        f: vec![0.0; problem.dim_slow],
        g: vec![0.0; problem.dim_fast],
    };
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut tr = Trajectory {
        eps,
        times: vec![0.0],
        xs: vec![x.clone()],
        ys: vec![y.clone()],
        controls: controls.to_vec(),
        cost: 0.0,
    };
    for (k, &a) in controls.iter().enumerate() {
        tr.cost += st.step(&mut x, &mut y, a, dt);
        tr.times.push((k + 1) as f64 * dt);
        tr.xs.push(x.clone());
        tr.ys.push(y.clone());
    }
    Ok(tr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteerOptions {
    /// Fast grid spacing the tolerances are measured in.
    pub h_y: f64,
    /// Capture radius in units of `h_y`.
    pub capture_factor: f64,
    /// Accepted miss distance; `5 eps + 2 h_y` when `None`.
    pub tol: Option<f64>,
}

impl SteerOptions {
    pub fn new(h_y: f64) -> Self {
        SteerOptions {
            h_y,
            capture_factor: 1.0,
            tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteerResult {
    pub trajectory: Trajectory,
    pub miss: f64,
    pub tol: f64,
}

/// Greedy closed-loop steering of the fast variable from `y` towards `z`
/// over the time budget `s`, hovering once inside the capture radius.
#[allow(clippy::too_many_arguments)]
pub fn steer_fast(
    problem: &ControlProblem,
    eps: f64,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    s: f64,
    dt: f64,
    opts: &SteerOptions,
) -> Result<SteerResult, Error> {
    if !(s > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time budget {s} and step {dt} must be positive"
        )));
    }
    if x.len() != problem.dim_slow || y.len() != problem.dim_fast || z.len() != problem.dim_fast {
        return Err(Error::Dimension("steering points have wrong dimensions".into()));
    }
    let tol = opts.tol.unwrap_or(5.0 * eps + 2.0 * opts.h_y);
    let capture = opts.capture_factor * opts.h_y;
    let (steps, dt) = step_count(s, dt);
    let m = problem.dim_fast;
    let mut st = Stepper {
        problem,
        eps,
        f: vec![0.0; problem.dim_slow],
        g: vec![0.0; m],
    };
    let mut g = vec![0.0; m];
    let mut xi = x.to_vec();
    let mut eta = y.to_vec();
    let mut tr = Trajectory {
        eps,
        times: vec![0.0],
        xs: vec![xi.clone()],
        ys: vec![eta.clone()],
        controls: Vec::with_capacity(steps),
        cost: 0.0,
    };
    let miss_of = |eta: &[f64]| dist(eta, z);
    for k in 0..steps {
        let hover = miss_of(&eta) < capture;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..problem.num_controls() {
            problem.g(&xi, &eta, a, &mut g);
            let score = if hover {
                -libm::sqrt(g.iter().map(|v| v * v).sum())
            } else {
                -(0..m).map(|i| (eta[i] - z[i]) * g[i]).sum::<f64>()
            };
            if score > best_score {
                best_score = score;
                best = a;
            }
        }
        tr.cost += st.step(&mut xi, &mut eta, best, dt);
        tr.controls.push(best);
        tr.times
            .push(if k + 1 == steps { s } else { (k + 1) as f64 * dt });
        tr.xs.push(xi.clone());
        tr.ys.push(eta.clone());
    }
    let miss = miss_of(&eta);
    if miss > tol {
        return Err(Error::SteeringFailed { miss, tol });
    }
    Ok(SteerResult {
        trajectory: tr,
        miss,
        tol,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(s, t)| (s - t) * (s - t)).sum())
}
