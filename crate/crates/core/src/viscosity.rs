//! Discrete viscosity tests for cell-problem candidates.

use alloc::vec;
use alloc::vec::Vec;

use crate::cell::CellInstance;
use crate::graph::GraphTemplate;
use crate::grid::{gradient, Field};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Subsolution,
    Supersolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub mode: Mode,
    pub pass: bool,
    /// Largest violation found; non-positive when every check holds with room.
    pub worst_violation: f64,
    /// Node (or edge tail) of the worst violation.
    pub location: Option<Vec<f64>>,
    pub checked: usize,
}

/// Subsolution: `u(y') - u(y) <= w(y -> y', b) + tol` on every graph edge.
/// Supersolution: at interior nodes admitting a subtangent, `H0` stays at
/// least `b - tol` on the whole box of one-sided difference quotients.
pub fn verify_viscosity(
    field: &Field,
    cell: &CellInstance<'_>,
    b: f64,
    mode: Mode,
    tol: f64,
) -> Result<VerifyReport, Error> {
    verify_viscosity_excluding(field, cell, b, mode, tol, &[])
}

/// As [`verify_viscosity`], skipping the listed nodes in supersolution mode.
pub fn verify_viscosity_excluding(
    field: &Field,
    cell: &CellInstance<'_>,
    b: f64,
    mode: Mode,
    tol: f64,
    exclude: &[usize],
) -> Result<VerifyReport, Error> {
    if field.grid.dim() != cell.dim() {
        return Err(Error::Dimension(
            "field and cell have different fast dimensions".into(),
        ));
    }
    match mode {
        Mode::Subsolution => sub_check(field, cell, b, tol),
        Mode::Supersolution => super_check(field, cell, b, tol, exclude),
    }
}

fn sub_check(field: &Field, cell: &CellInstance<'_>, b: f64, tol: f64) -> Result<VerifyReport, Error> {
    let t = GraphTemplate::new(cell, &field.grid, 1)?;
    let g = t.at_level(b)?;
    let u = &field.values;
    let mut worst = f64::NEG_INFINITY;
    let mut at = None;
    let mut checked = 0;
    for i in 0..g.len() {
        for e in g.out_edges(i) {
            let v = u[e.to] - u[i] - e.weight;
            checked += 1;
            if v > worst || v.is_nan() {
                worst = if v.is_nan() { f64::INFINITY } else { v };
                at = Some(i);
            }
        }
    }
    Ok(VerifyReport {
        mode: Mode::Subsolution,
        pass: worst <= tol,
        worst_violation: worst,
        location: at.map(|i| field.grid.node(i)),
        checked,
    })
}

fn super_check(
    field: &Field,
    cell: &CellInstance<'_>,
    b: f64,
    tol: f64,
    exclude: &[usize],
) -> Result<VerifyReport, Error> {
    let grid = &field.grid;
    let m = grid.dim();
    let u = &field.values;
    let mut y = vec![0.0; m];
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];
    let mut step = vec![0i64; m];
    let mut worst = f64::NEG_INFINITY;
    let mut at = None;
    let mut checked = 0;
    'nodes: for i in 0..grid.len() {
        if grid.on_boundary(i) || exclude.contains(&i) {
            continue;
        }
        for k in 0..m {
            step.iter_mut().for_each(|s| *s = 0);
            step[k] = 1;
            let up = grid.shifted(i, &step).expect("interior node");
            step[k] = -1;
            let dn = grid.shifted(i, &step).expect("interior node");
            let h = grid.spacing()[k];
            lo[k] = (u[i] - u[dn]) / h;
            hi[k] = (u[up] - u[i]) / h;
            if lo[k] > hi[k] {
                // No smooth function touches from below here.
                continue 'nodes;
            }
        }
        grid.node_into(i, &mut y);
        let v = b - cell.point_data(&y).box_min(&lo, &hi);
        checked += 1;
        if v > worst || v.is_nan() {
            worst = if v.is_nan() { f64::INFINITY } else { v };
            at = Some(i);
        }
    }
    Ok(VerifyReport {
        mode: Mode::Supersolution,
        pass: worst <= tol,
        worst_violation: worst,
        location: at.map(|i| grid.node(i)),
        checked,
    })
}

/// `sup { |q| : H0(y, q) <= b }` over the nodes of `grid`.
pub fn coercivity_inverse(
    cell: &CellInstance<'_>,
    grid: &crate::grid::BoxGrid,
    b: f64,
) -> Result<f64, Error> {
    let mut y = vec![0.0; grid.dim()];
    let mut r: f64 = 0.0;
    for i in 0..grid.len() {
        grid.node_into(i, &mut y);
        let z = cell.point_data(&y).sublevel(b)?;
        r = r.max(z.max_norm());
    }
    Ok(r)
}

/// Largest Euclidean norm of the discrete gradient over all nodes.
pub fn max_gradient_norm(field: &Field) -> f64 {
    (0..field.grid.len())
        .map(|i| libm::sqrt(gradient(field, i).iter().map(|g| g * g).sum()))
        .fold(0.0, f64::max)
}
