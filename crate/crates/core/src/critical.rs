//! Critical value of a cell, Aubry set, and weak KAM certificates.
//!
//! The critical value is the smallest level `b` whose metric graph has no
//! negative cycle. Levels below the pointwise floor `max_y min_q H0(y, q)`
//! have empty sublevel sets somewhere and count as negative.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cell::CellInstance;
use crate::graph::{
    all_pairs, distance_field, loop_defects, potentials, AllPairs, CycleOutcome, GraphTemplate, MetricGraph,
};
use crate::grid::{BoxGrid, Field};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalOptions {
    /// Target width of the bisection bracket.
    pub tol: f64,
    /// Aubry threshold factor.
    pub kappa: f64,
    /// Smallest accepted ratio between the first defect above the threshold
    /// and the largest one below it.
    pub min_gap_ratio: f64,
    /// Stencil radius of the metric graph.
    pub stencil_radius: i64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions {
            tol: 1e-3,
            kappa: 4.0,
            min_gap_ratio: 2.0,
            stencil_radius: 1,
        }
    }
}

impl CriticalOptions {
    pub fn with_tol(tol: f64) -> Self {
        CriticalOptions {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriticalResult {
    pub c0: f64,
    /// Final bisection bracket `(b_lo, b_hi)`; `c0 = b_hi`.
    pub bracket: (f64, f64),
    pub floor: f64,
    pub upper_seed: f64,
    pub bisection_steps: usize,
    /// Metric graph at `c0`.
    pub graph: MetricGraph,
    /// All-pairs intrinsic distances at `c0`.
    pub distances: AllPairs,
    pub loop_defect: Field,
    pub aubry_threshold: f64,
    pub aubry_nodes: Vec<usize>,
    pub gap_ratio: f64,
    /// Node of smallest loop defect (lowest index on ties).
    pub y0: usize,
    /// `S(y0, .)`.
    pub distance_from_aubry: Field,
}

impl CriticalResult {
    pub fn grid(&self) -> &BoxGrid {
        &self.graph.grid
    }

    pub fn bracket_width(&self) -> f64 {
        self.bracket.1 - self.bracket.0
    }
}

fn is_negative(t: &GraphTemplate<'_, '_>, b: f64) -> Result<bool, Error> {
    match t.at_level(b) {
        Ok(g) => Ok(potentials(&g).is_none()),
        Err(Error::InfeasibleNodes(_)) => Ok(true),
        Err(e) => Err(e),
    }
}

/// Cycle outcome at level `b`; an empty sublevel set anywhere counts as a
/// negative cycle.
pub fn classify_level(cell: &CellInstance<'_>, y_grid: &BoxGrid, b: f64) -> Result<CycleOutcome, Error> {
    let t = GraphTemplate::new(cell, y_grid, 1)?;
    classify_with(&t, b)
}

pub fn classify_with(t: &GraphTemplate<'_, '_>, b: f64) -> Result<CycleOutcome, Error> {
    match t.at_level(b) {
        Ok(g) => crate::graph::min_cycle_length(&g),
        Err(Error::InfeasibleNodes(_)) => Ok(CycleOutcome::NegativeCycle),
        Err(e) => Err(e),
    }
}

pub fn critical_value(
    cell: &CellInstance<'_>,
    y_grid: &BoxGrid,
    opts: &CriticalOptions,
) -> Result<CriticalResult, Error> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {} must be positive",
            opts.tol
        )));
    }
    let t = GraphTemplate::new(cell, y_grid, opts.stencil_radius)?;
    critical_with(&t, opts)
}

pub fn critical_with(t: &GraphTemplate<'_, '_>, opts: &CriticalOptions) -> Result<CriticalResult, Error> {
    let floor = t.floor()?;
    let upper_seed = t.upper_seed();
    let mut lo = floor;
    let mut hi = upper_seed.max(floor);
    let mut steps = 0usize;
    let mut grow = 1.0f64.max(hi - lo);
    let mut tries = 0;
    while is_negative(t, hi)? {
        lo = hi;
        hi += grow;
        grow *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Precondition(
                "no level without negative cycles was found".into(),
            ));
        }
    }
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if is_negative(t, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    let c0 = hi;
    let graph = t.at_level(c0)?;
    let distances = all_pairs(&graph)?;
    let rho = loop_defects(&distances);
    let grid = t.grid.clone();
    let h = grid.min_spacing();
    let rho_min = rho.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = rho.iter().copied().filter(|r| r.is_finite()).fold(0.0, f64::max);
    let threshold = opts.kappa * (rho_min + 2.0 * h * (hi - lo)) + 1e-12 * scale;
    let aubry_nodes: Vec<usize> = (0..rho.len()).filter(|&i| rho[i] <= threshold).collect();
    let max_in = aubry_nodes.iter().map(|&i| rho[i]).fold(0.0, f64::max);
    let next = rho
        .iter()
        .copied()
        .filter(|&r| r > threshold)
        .fold(f64::INFINITY, f64::min);
    let gap_ratio = if next == f64::INFINITY {
        f64::INFINITY
    } else if max_in > 0.0 {
        next / max_in
    } else {
        f64::INFINITY
    };
    if aubry_nodes.is_empty() || gap_ratio < opts.min_gap_ratio {
        return Err(Error::AubryInconclusive { gap_ratio });
    }
    let mut y0 = 0;
    for i in 1..rho.len() {
        if rho[i] < rho[y0] {
            y0 = i;
        }
    }
    let distance_from_aubry = Field::new(grid.clone(), distances.row(y0).to_vec())?;
    Ok(CriticalResult {
        c0,
        bracket: (lo, hi),
        floor,
        upper_seed,
        bisection_steps: steps,
        graph,
        distances,
        loop_defect: Field::new(grid, rho)?,
        aubry_threshold: threshold,
        aubry_nodes,
        gap_ratio,
        y0,
        distance_from_aubry,
    })
}

/// The set `C = {H0(y, 0) >= c0 - Q}`, the diameter bound `max |S|` on `C x C`,
/// and the confinement set `K0 = {dist(y, C) <= max |S|}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreSets {
    /// Bound used in the definition of `C`: the larger of the declared |f|
    /// bound and the observed sup of |g0| on the grid.
    pub q: f64,
    pub c_nodes: Vec<usize>,
    pub s_max: f64,
    pub in_k0: Vec<bool>,
}

impl CoreSets {
    pub fn k0_nodes(&self) -> Vec<usize> {
        (0..self.in_k0.len()).filter(|&i| self.in_k0[i]).collect()
    }
}

pub fn core_sets(cell: &CellInstance<'_>, crit: &CriticalResult) -> CoreSets {
    let grid = crit.grid();
    let q = cell.problem.bound_f.max(cell.max_abs_g0(grid));
    let m = grid.dim();
    let zero = vec![0.0; m];
    let mut y = vec![0.0; m];
    let c_nodes: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            grid.node_into(i, &mut y);
            cell.h0(&y, &zero) >= crit.c0 - q
        })
        .collect();
    let mut s_max: f64 = 0.0;
    for &a in &c_nodes {
        for &b in &c_nodes {
            s_max = s_max.max(crit.distances.get(a, b).abs());
        }
    }
    let c_pts: Vec<Vec<f64>> = c_nodes.iter().map(|&i| grid.node(i)).collect();
    let in_k0 = (0..grid.len())
        .map(|i| {
            grid.node_into(i, &mut y);
            c_pts.iter().any(|c| dist(c, &y) <= s_max)
        })
        .collect();
    CoreSets {
        q,
        c_nodes,
        s_max,
        in_k0,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(s, t)| (s - t) * (s - t)).sum())
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().map(|s| s * s).sum())
}

#[derive(Debug, Clone)]
pub struct Subsolution {
    pub field: Field,
    pub core: CoreSets,
}

/// `u(y) = min_{z outside K0} S(z, y)`, which vanishes outside `K0`.
pub fn bounded_subsolution(cell: &CellInstance<'_>, crit: &CriticalResult) -> Result<Subsolution, Error> {
    let core = core_sets(cell, crit);
    let n = crit.distances.n;
    let outside: Vec<usize> = (0..n).filter(|&i| !core.in_k0[i]).collect();
    if outside.is_empty() {
        return Err(Error::EnlargeBox);
    }
    let values = (0..n)
        .map(|y| {
            if core.in_k0[y] {
                outside
                    .iter()
                    .map(|&z| crit.distances.get(z, y))
                    .fold(f64::INFINITY, f64::min)
            } else {
                0.0
            }
        })
        .collect();
    Ok(Subsolution {
        field: Field::new(crit.grid().clone(), values)?,
        core,
    })
}

/// Piecewise-linear weight: 1 up to `r0 - 3`, `m0` from `r0 - 2`.
pub fn weight_profile(r: f64, r0: f64, m0: f64) -> f64 {
    if r <= r0 - 3.0 {
        1.0
    } else if r >= r0 - 2.0 {
        m0
    } else {
        1.0 + (m0 - 1.0) * (r - (r0 - 3.0))
    }
}

/// Distance from `y0` for the metric `h(|y|) sigma_{c0}(y, v)`.
pub fn weighted_distance(
    cell: &CellInstance<'_>,
    crit: &CriticalResult,
    r0: f64,
    m0: f64,
    y0: usize,
) -> Result<Field, Error> {
    if !(m0 >= 1.0) {
        return Err(Error::InvalidArgument(format!("weight {m0} must be at least 1")));
    }
    let grid = crit.grid();
    let core = core_sets(cell, crit);
    let m = grid.dim();
    let zero = vec![0.0; m];
    let mut y = vec![0.0; m];
    for i in 0..grid.len() {
        grid.node_into(i, &mut y);
        let r = norm(&y);
        if core.in_k0[i] && r >= r0 - 3.0 {
            return Err(Error::Precondition(format!(
                "confinement set reaches |y| = {r:.4}, beyond r0 - 3 = {}",
                r0 - 3.0
            )));
        }
        if weight_profile(r, r0, m0) > 1.0 && cell.h0(&y, &zero) > crit.c0 {
            return Err(Error::Precondition(format!(
                "H0(y, 0) exceeds c0 at |y| = {r:.4} where the weight is active"
            )));
        }
    }
    let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.node(i)).collect();
    let weighted = crit.graph.map_weights(|from, e| {
        let mid: Vec<f64> = nodes[from]
            .iter()
            .zip(&nodes[e.to])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        e.weight * weight_profile(norm(&mid), r0, m0)
    });
    distance_field(&weighted, &[y0])
}

#[derive(Debug, Clone)]
pub struct Supersolution {
    pub field: Field,
    pub d: f64,
    pub m0: f64,
    pub y0: usize,
    /// `min (lambda w - U)` over `|y| <= r0`.
    pub dominates_margin: f64,
    /// `max |w - d - S(y0, .)|` over the stencil neighbourhood of `y0`.
    pub local_error: f64,
    pub min_value: f64,
    /// `min (w - m0)` over `|y| >= r0 - 1`.
    pub outer_margin: f64,
}

impl Supersolution {
    pub fn postconditions_hold(&self) -> bool {
        self.dominates_margin >= 0.0
            && self.local_error <= 1e-9 * (1.0 + self.d.abs())
            && self.min_value > 0.0
            && self.outer_margin >= 0.0
    }
}

/// Supersolution `w = d + S^h(y0, .)` dominating `u / lambda` on `B(0, r0)`.
pub fn build_supersolution(
    cell: &CellInstance<'_>,
    crit: &CriticalResult,
    u: &Field,
    lambda: f64,
    r0: f64,
) -> Result<Supersolution, Error> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda {lambda} must be positive"
        )));
    }
    let grid = crit.grid();
    if u.grid != *grid {
        return Err(Error::Dimension("U lives on a different grid".into()));
    }
    let n = grid.len();
    let radii: Vec<f64> = (0..n).map(|i| norm(&grid.node(i))).collect();
    let mut sup_u = f64::NEG_INFINITY;
    for i in 0..n {
        if radii[i] < r0 - 1.0 && u.values[i] > 0.0 {
            return Err(Error::Precondition(format!(
                "U is positive at |y| = {:.4} inside B(0, r0 - 1)",
                radii[i]
            )));
        }
        if radii[i] <= r0 {
            if !u.values[i].is_finite() {
                return Err(Error::Precondition("U is not finite on B(0, r0)".into()));
            }
            sup_u = sup_u.max(u.values[i]);
        }
    }
    let m0 = (sup_u / lambda).max(1.0);
    let y0 = crit.y0;
    let s = crit.distances.row(y0);
    let d = -s.iter().copied().fold(f64::INFINITY, f64::min) + grid.min_spacing();
    let sh = weighted_distance(cell, crit, r0, m0, y0)?;
    let w: Vec<f64> = sh.values.iter().map(|v| d + v).collect();

    let mut dominates_margin = f64::INFINITY;
    let mut outer_margin = f64::INFINITY;
    for i in 0..n {
        if radii[i] <= r0 {
            dominates_margin = dominates_margin.min(lambda * w[i] - u.values[i]);
        }
        if radii[i] >= r0 - 1.0 {
            outer_margin = outer_margin.min(w[i] - m0);
        }
    }
    let mut local_error: f64 = (w[y0] - d - s[y0]).abs();
    for e in crit.graph.out_edges(y0) {
        local_error = local_error.max((w[e.to] - d - s[e.to]).abs());
    }
    let min_value = w.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Supersolution {
        field: Field::new(grid.clone(), w)?,
        d,
        m0,
        y0,
        dominates_margin,
        local_error,
        min_value,
        outer_margin,
    })
}

/// Radius beyond which every node is farther than `2P + 2` from all of `core`,
/// where `P = max |S|` on `core x core`; shortest paths between core nodes
/// cannot leave the ball of this radius.
pub fn confinement_radius(crit: &CriticalResult, core: &[usize]) -> f64 {
    let grid = crit.grid();
    let mut p: f64 = 0.0;
    for &a in core {
        for &b in core {
            p = p.max(crit.distances.get(a, b).abs());
        }
    }
    let mut r: f64 = 0.0;
    for y in 0..grid.len() {
        let reach = core
            .iter()
            .map(|&c| crit.distances.get(c, y))
            .fold(f64::INFINITY, f64::min);
        if reach <= 2.0 * p + 2.0 {
            r = r.max(norm(&grid.node(y)));
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::freeze;
    use crate::grid::make_box_grid;
    use crate::problem::builtin_problem;

    #[test]
    fn quadcell_c0_is_abs_p0() {
        let p = builtin_problem("quadcell", 5).unwrap();
        let grid = make_box_grid(&[-2.0], &[2.0], &[41]).unwrap();
        for &p0 in &[0.0f64, 0.5, -1.0] {
            let cell = freeze(&p, &[0.0], &[p0]).unwrap();
            let r = critical_value(&cell, &grid, &CriticalOptions::default()).unwrap();
            assert!((r.c0 - p0.abs()).abs() < 1e-12);
            assert_eq!(r.aubry_nodes, vec![19, 20, 21]);
            assert!(r.gap_ratio >= 3.0);
        }
    }

    #[test]
    fn zero_cost_everything_is_aubry() {
        use crate::problem::{ControlProblem, ControlSet};
        let c = ControlSet::lattice(&[(-1.0, 1.0), (-1.0, 1.0)], 3).unwrap();
        let p =
            ControlProblem::from_expressions("flat", 1, 1, c, &["a1"], &["a2"], "0", "0", 1.0, 0.0).unwrap();
        let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
        let grid = make_box_grid(&[-1.0], &[1.0], &[11]).unwrap();
        let r = critical_value(&cell, &grid, &CriticalOptions::default()).unwrap();
        assert_eq!(r.c0, 0.0);
        assert_eq!(r.aubry_nodes.len(), 11);
    }

    #[test]
    fn weight_profile_shape() {
        assert_eq!(weight_profile(1.0, 5.0, 3.0), 1.0);
        assert_eq!(weight_profile(2.5, 5.0, 3.0), 2.0);
        assert_eq!(weight_profile(4.0, 5.0, 3.0), 3.0);
    }
}
