//! Tabulated effective Hamiltonian and the limit equation `u_t + Hbar(x, Du) = 0`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::cell::freeze;
use crate::critical::{critical_value, CriticalOptions};
use crate::grid::{interpolate_values, BoxGrid, Field};
use crate::hjb::step_count;
use crate::par::map_range;
use crate::problem::{bar_u0, ControlProblem};
use crate::Error;

/// Critical values on `x_grid x p_grid`, flattened with the slow index outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTable {
    pub x_grid: BoxGrid,
    pub p_grid: BoxGrid,
    /// `NaN` for failed entries.
    pub values: Vec<f64>,
    pub bracket_widths: Vec<f64>,
    pub gap_ratios: Vec<f64>,
    /// Error message for failed entries.
    pub status: Vec<Option<String>>,
    product: BoxGrid,
}

impl EffectiveTable {
    pub fn new(
        x_grid: BoxGrid,
        p_grid: BoxGrid,
        values: Vec<f64>,
        bracket_widths: Vec<f64>,
        gap_ratios: Vec<f64>,
        status: Vec<Option<String>>,
    ) -> Result<Self, Error> {
        if x_grid.dim() != p_grid.dim() {
            return Err(Error::Dimension("x and p grids differ in dimension".into()));
        }
        let n = x_grid.len() * p_grid.len();
        if values.len() != n || bracket_widths.len() != n || gap_ratios.len() != n || status.len() != n {
            return Err(Error::Dimension(format!("table needs {n} entries")));
        }
        let product = x_grid.product(&p_grid)?;
        Ok(EffectiveTable {
            x_grid,
            p_grid,
            values,
            bracket_widths,
            gap_ratios,
            status,
            product,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, ix: usize, ip: usize) -> usize {
        ix * self.p_grid.len() + ip
    }

    pub fn get(&self, ix: usize, ip: usize) -> f64 {
        self.values[self.index(ix, ip)]
    }

    pub fn failed(&self) -> usize {
        self.status.iter().filter(|s| s.is_some()).count()
    }

    /// Multilinear interpolation; `x` is clamped, `p` must lie in the table.
    pub fn hbar(&self, x: &[f64], p: &[f64]) -> Result<f64, Error> {
        let lo = self.p_grid.lower();
        let hi = self.p_grid.upper();
        for k in 0..p.len() {
            let slack = 1e-9 * self.p_grid.spacing()[k];
            if !(p[k] >= lo[k] - slack && p[k] <= hi[k] + slack) {
                return Err(Error::GradientOutOfRange {
                    x: x.to_vec(),
                    p: p.to_vec(),
                });
            }
        }
        let q = [x, p].concat();
        Ok(interpolate_values(&self.product, &self.values, &q))
    }

    /// Largest divided difference of the table along each momentum axis.
    pub fn dissipation(&self) -> Vec<f64> {
        let d = self.p_grid.dim();
        let mut theta = vec![0.0f64; d];
        for ix in 0..self.x_grid.len() {
            for ip in 0..self.p_grid.len() {
                for k in 0..d {
                    let mut step = vec![0i64; d];
                    step[k] = 1;
                    if let Some(jp) = self.p_grid.shifted(ip, &step) {
                        let dv = (self.get(ix, jp) - self.get(ix, ip)).abs();
                        theta[k] = theta[k].max(dv / self.p_grid.spacing()[k]);
                    }
                }
            }
        }
        theta
    }
}

/// One critical value per `(x, p)` pair; failures are recorded, not raised.
pub fn tabulate_effective(
    problem: &ControlProblem,
    x_grid: &BoxGrid,
    p_grid: &BoxGrid,
    y_grid: &BoxGrid,
    tol: f64,
) -> Result<EffectiveTable, Error> {
    let n = problem.dim_slow;
    if x_grid.dim() != n || p_grid.dim() != n || y_grid.dim() != problem.dim_fast {
        return Err(Error::Dimension(
            "grid dimensions do not match the problem".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let np = p_grid.len();
    let opts = CriticalOptions::with_tol(tol);
    let entries = map_range(x_grid.len() * np, |k| {
        let x = x_grid.node(k / np);
        let p = p_grid.node(k % np);
        freeze(problem, &x, &p).and_then(|cell| critical_value(&cell, y_grid, &opts))
    });
    let mut values = Vec::with_capacity(entries.len());
    let mut widths = Vec::with_capacity(entries.len());
    let mut gaps = Vec::with_capacity(entries.len());
    let mut status = Vec::with_capacity(entries.len());
    for e in entries {
        match e {
            Ok(r) => {
                values.push(r.c0);
                widths.push(r.bracket_width());
                gaps.push(r.gap_ratio);
                status.push(None);
            }
            Err(err) => {
                values.push(f64::NAN);
                widths.push(f64::NAN);
                gaps.push(f64::NAN);
                status.push(Some(err.to_string()));
            }
        }
    }
    EffectiveTable::new(x_grid.clone(), p_grid.clone(), values, widths, gaps, status)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableDiagnostics {
    /// Largest `v(p) - (v(p + s) + v(p - s)) / 2` over symmetric node pairs.
    pub convexity_violation: f64,
    /// `(ix, ip)` of the midpoint attaining it.
    pub convexity_at: Option<(usize, usize)>,
    /// Largest jump between neighbouring entries in `(x, p)`.
    pub max_increment: f64,
    /// Flat table indices of that neighbour pair.
    pub increment_at: Option<(usize, usize)>,
    pub max_bracket_width: f64,
    pub min_gap_ratio: f64,
    pub failed: usize,
}

pub fn table_diagnostics(table: &EffectiveTable) -> TableDiagnostics {
    let pg = &table.p_grid;
    let d = pg.dim();
    let np = pg.len();
    let mut conv = f64::NEG_INFINITY;
    let mut conv_at = None;
    for ix in 0..table.x_grid.len() {
        for ip in 0..np {
            let c = pg.multi_index(ip);
            let v = table.get(ix, ip);
            for jp in 0..np {
                if jp == ip {
                    continue;
                }
                let a = pg.multi_index(jp);
                let mut mirror = vec![0usize; d];
                let mut inside = true;
                for k in 0..d {
                    let r = 2 * c[k] as i64 - a[k] as i64;
                    if r < 0 || r >= pg.resolution()[k] as i64 {
                        inside = false;
                        break;
                    }
                    mirror[k] = r as usize;
                }
                if !inside {
                    continue;
                }
                let w = v - 0.5 * (table.get(ix, jp) + table.get(ix, pg.flat_index(&mirror)));
                if w > conv {
                    conv = w;
                    conv_at = Some((ix, ip));
                }
            }
        }
    }
    let prod = &table.product;
    let mut inc: f64 = 0.0;
    let mut inc_at = None;
    for i in 0..prod.len() {
        for k in 0..prod.dim() {
            let mut step = vec![0i64; prod.dim()];
            step[k] = 1;
            if let Some(j) = prod.shifted(i, &step) {
                let dv = (table.values[j] - table.values[i]).abs();
                if dv > inc {
                    inc = dv;
                    inc_at = Some((i, j));
                }
            }
        }
    }
    let finite_max = |v: &[f64]| v.iter().copied().filter(|t| !t.is_nan()).fold(0.0, f64::max);
    TableDiagnostics {
        convexity_violation: conv.max(0.0),
        convexity_at: if conv > 0.0 { conv_at } else { None },
        max_increment: inc,
        increment_at: inc_at,
        max_bracket_width: finite_max(&table.bracket_widths),
        min_gap_ratio: table
            .gap_ratios
            .iter()
            .copied()
            .filter(|t| !t.is_nan())
            .fold(f64::INFINITY, f64::min),
        failed: table.failed(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSolution {
    pub x_grid: BoxGrid,
    pub horizon: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub slices: Vec<Field>,
    /// Lax-Friedrichs coefficient per axis.
    pub dissipation: Vec<f64>,
}

impl LimitSolution {
    pub fn value_at(&self, x: &[f64], t: f64) -> f64 {
        let eval = |k: usize| interpolate_values(&self.x_grid, &self.slices[k].values, x);
        let last = self.times.len() - 1;
        if t <= self.times[0] || last == 0 {
            return eval(0);
        }
        if t >= self.times[last] {
            return eval(last);
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let r = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        if r == 0.0 {
            return eval(k);
        }
        (1.0 - r) * eval(k) + r * eval(k + 1)
    }

    pub fn slice_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }
}

/// Lax-Friedrichs from `u0bar(x) = min_y u0(x, y)` over `y_grid`.
pub fn solve_limit(
    problem: &ControlProblem,
    table: &EffectiveTable,
    x_grid: &BoxGrid,
    y_grid: &BoxGrid,
    horizon: f64,
    dt: f64,
) -> Result<LimitSolution, Error> {
    if y_grid.dim() != problem.dim_fast || x_grid.dim() != problem.dim_slow {
        return Err(Error::Dimension(
            "grid dimensions do not match the problem".into(),
        ));
    }
    let initial = (0..x_grid.len())
        .map(|i| bar_u0(problem, &x_grid.node(i), y_grid))
        .collect();
    solve_limit_from(table, x_grid, initial, horizon, dt, 1)
}

/// Largest `dt` allowed by the monotonicity condition `dt sum theta_k / h_k <= 1`.
pub fn limit_dt_bound(table: &EffectiveTable, x_grid: &BoxGrid) -> f64 {
    let s: f64 = table
        .dissipation()
        .iter()
        .zip(x_grid.spacing())
        .map(|(t, h)| t / h)
        .sum();
    if s > 0.0 {
        1.0 / s
    } else {
        f64::INFINITY
    }
}

/// Interior nodes use the central gradient with dissipation `theta_k / 2`.
/// On a boundary face the one-sided difference is clamped towards the
/// table's minimiser (upwind) and that axis carries no dissipation.
pub fn solve_limit_from(
    table: &EffectiveTable,
    x_grid: &BoxGrid,
    initial: Vec<f64>,
    horizon: f64,
    dt: f64,
    stride: usize,
) -> Result<LimitSolution, Error> {
    let d = x_grid.dim();
    if table.x_grid.dim() != d {
        return Err(Error::Dimension("table and grid differ in dimension".into()));
    }
    if initial.len() != x_grid.len() {
        return Err(Error::Dimension("initial data does not match the grid".into()));
    }
    if !(dt > 0.0) || !(horizon >= 0.0) || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0, horizon >= 0, stride >= 1 (got {dt}, {horizon}, {stride})"
        )));
    }
    if table.failed() > 0 {
        return Err(Error::TableEntry {
            x: Vec::new(),
            p: Vec::new(),
            reason: format!("{} failed entries", table.failed()),
        });
    }
    let theta = table.dissipation();
    let (steps, dt) = step_count(horizon, dt);
    let ratio: f64 = theta.iter().zip(x_grid.spacing()).map(|(t, h)| dt * t / h).sum();
    if ratio > 1.0 + 1e-12 {
        return Err(Error::Cfl {
            what: "Lax-Friedrichs",
            ratio,
        });
    }
    let pstar = minimiser(table);

    let mut times = vec![0.0];
    let mut slices = vec![Field::new(x_grid.clone(), initial.clone())?];
    let mut cur = initial;
    for step in 1..=steps {
        let prev = &cur;
        let next: Vec<Result<f64, Error>> = map_range(x_grid.len(), |i| {
            let idx = x_grid.multi_index(i);
            let x = x_grid.node(i);
            let mut p = vec![0.0; d];
            let mut diss = 0.0;
            for k in 0..d {
                let n = x_grid.resolution()[k];
                let st = x_grid.stride(k);
                let h = x_grid.spacing()[k];
                let u = prev[i];
                if idx[k] == 0 {
                    p[k] = ((prev[i + st] - u) / h).min(pstar[k]);
                } else if idx[k] == n - 1 {
                    p[k] = ((u - prev[i - st]) / h).max(pstar[k]);
                } else {
                    let (up, dn) = (prev[i + st], prev[i - st]);
                    p[k] = (up - dn) / (2.0 * h);
                    diss += 0.5 * theta[k] * (up - 2.0 * u + dn) / h;
                }
            }
            let hb = table.hbar(&x, &p)?;
            Ok(prev[i] - dt * (hb - diss))
        });
        let mut vals = Vec::with_capacity(next.len());
        for (i, v) in next.into_iter().enumerate() {
            let v = v?;
            if !v.is_finite() {
                return Err(Error::NonFinite { node: i, step });
            }
            vals.push(v);
        }
        cur = vals;
        if step % stride == 0 || step == steps {
            times.push(if step == steps { horizon } else { step as f64 * dt });
            slices.push(Field::new(x_grid.clone(), cur.clone())?);
        }
    }
    Ok(LimitSolution {
        x_grid: x_grid.clone(),
        horizon,
        dt,
        times,
        slices,
        dissipation: theta,
    })
}

/// Momentum node of the smallest table entry (first on ties).
fn minimiser(table: &EffectiveTable) -> Vec<f64> {
    let mut best = 0;
    for k in 1..table.len() {
        if table.values[k] < table.values[best] {
            best = k;
        }
    }
    table.p_grid.node(best % table.p_grid.len())
}

/// `min { u0bar(z) : |z - x| <= speed t }` by a 10^4-point scan; exact limit
/// for `Hbar(x, p) = speed |p|` in one slow dimension.
pub fn hopf_lax_oracle(x: f64, t: f64, u0bar: impl Fn(f64) -> f64, speed: f64) -> f64 {
    if t <= 0.0 || speed == 0.0 {
        return u0bar(x);
    }
    const SAMPLES: usize = 10_000;
    let r = speed * t;
    let mut best = u0bar(x);
    for k in 0..SAMPLES {
        let z = x - r + 2.0 * r * (k as f64) / ((SAMPLES - 1) as f64);
        best = best.min(u0bar(z));
    }
    best
}
