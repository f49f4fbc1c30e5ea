//! The cell problem obtained by freezing the slow state and its co-state.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{make_box_grid, BoxGrid};
use crate::problem::ControlProblem;
use crate::sublevel::PointData;
use crate::Error;

/// Frozen data at `(x0, p0)`: running cost `ell + p0.f`, fast drift `g`, both at `x0`.
#[derive(Debug, Clone)]
pub struct CellInstance<'a> {
    pub problem: &'a ControlProblem,
    pub x0: Vec<f64>,
    pub p0: Vec<f64>,
}

pub fn freeze<'a>(problem: &'a ControlProblem, x0: &[f64], p0: &[f64]) -> Result<CellInstance<'a>, Error> {
    if x0.len() != problem.dim_slow || p0.len() != problem.dim_slow {
        return Err(Error::Dimension(format!(
            "x0 and p0 must have {} components",
            problem.dim_slow
        )));
    }
    Ok(CellInstance {
        problem,
        x0: x0.to_vec(),
        p0: p0.to_vec(),
    })
}

impl CellInstance<'_> {
    /// Fast dimension.
    pub fn dim(&self) -> usize {
        self.problem.dim_fast
    }

    pub fn num_controls(&self) -> usize {
        self.problem.num_controls()
    }

    pub fn ell0(&self, y: &[f64], a: usize) -> f64 {
        let mut f = [0.0; 16];
        let n = self.problem.dim_slow;
        let mut fv = vec![0.0; n];
        let fs: &mut [f64] = if n <= 16 { &mut f[..n] } else { &mut fv };
        self.problem.f(&self.x0, y, a, fs);
        let pf: f64 = self.p0.iter().zip(fs.iter()).map(|(p, f)| p * f).sum();
        self.problem.ell(&self.x0, y, a) + pf
    }

    pub fn g0(&self, y: &[f64], a: usize, out: &mut [f64]) {
        self.problem.g(&self.x0, y, a, out)
    }

    /// Constraint data of the sublevel sets at `y`.
    pub fn point_data(&self, y: &[f64]) -> PointData {
        PointData::new(self, y)
    }

    pub fn h0(&self, y: &[f64], q: &[f64]) -> f64 {
        let m = self.dim();
        let mut g = [0.0; 3];
        let mut best = f64::NEG_INFINITY;
        for a in 0..self.num_controls() {
            self.g0(y, a, &mut g[..m]);
            let qg: f64 = q.iter().zip(&g[..m]).map(|(q, g)| q * g).sum();
            best = best.max(-qg - self.ell0(y, a));
        }
        best
    }

    /// Sup of |g0| over the nodes of `grid` and all controls.
    pub fn max_abs_g0(&self, grid: &BoxGrid) -> f64 {
        let m = self.dim();
        let mut y = vec![0.0; m];
        let mut g = [0.0; 3];
        let mut best: f64 = 0.0;
        for i in 0..grid.len() {
            grid.node_into(i, &mut y);
            for a in 0..self.num_controls() {
                self.g0(&y, a, &mut g[..m]);
                best = best.max(libm::sqrt(g[..m].iter().map(|t| t * t).sum()));
            }
        }
        best
    }
}

fn min_ell0(cell: &CellInstance<'_>, y: &[f64]) -> f64 {
    (0..cell.num_controls())
        .map(|a| cell.ell0(y, a))
        .fold(f64::INFINITY, f64::min)
}

/// Half-width `w` of the default fast box `[-w, w]^M`: 1.5 times the smallest
/// `r` such that `min_a ell0 > s + 1` on the boundary of `[-r, r]^M`, where
/// `s = max H0(y, 0)` over that box bounds the critical value from above.
/// Both are sampled on `probe` points per axis.
pub fn default_y_halfwidth(cell: &CellInstance<'_>, probe: usize) -> Result<f64, Error> {
    let m = cell.dim();
    let lattice = |r: f64| make_box_grid(&vec![-r; m], &vec![r; m], &vec![probe; m]);
    let seed = |g: &BoxGrid| {
        (0..g.len())
            .map(|i| -min_ell0(cell, &g.node(i)))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let shell_ok = |g: &BoxGrid, s: f64| {
        (0..g.len())
            .filter(|&i| g.on_boundary(i))
            .all(|i| min_ell0(cell, &g.node(i)) > s + 1.0)
    };
    let mut hi = 1.0;
    let s = loop {
        let g = lattice(hi)?;
        let s = seed(&g);
        if shell_ok(&g, s) {
            break s;
        }
        hi *= 2.0;
        if hi > 4096.0 {
            return Err(Error::Precondition(format!(
                "running cost is not coercive on boxes up to half-width 4096 (seed {s})"
            )));
        }
    };
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && shell_ok(&lattice(mid)?, s) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(1.5 * hi)
}

/// `H0(y, q) = max_a { -q.g0(y, a) - ell0(y, a) }`.
pub fn hamiltonian_h0(cell: &CellInstance<'_>, y: &[f64], q: &[f64]) -> f64 {
    cell.h0(y, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;

    #[test]
    fn quadcell_closed_form() {
        let p = builtin_problem("quadcell", 5).unwrap();
        for &p0 in &[0.0f64, 0.5, -1.0, 2.0] {
            let cell = freeze(&p, &[0.3], &[p0]).unwrap();
            for &y in &[-1.5, 0.0, 0.7] {
                for &q in &[-2.0f64, 0.0, 0.25, 3.0] {
                    let exact = p0.abs() + q.abs() - y * y;
                    assert!((hamiltonian_h0(&cell, &[y], &[q]) - exact).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn default_box_for_quadcell() {
        // min_a ell0 = y^2 - |p0| and max H0(., 0) = |p0|, so the shell
        // condition reads y^2 > 2|p0| + 1.
        let p = builtin_problem("quadcell", 5).unwrap();
        for p0 in [0.0f64, 0.5, 3.0] {
            let cell = freeze(&p, &[0.0], &[p0]).unwrap();
            let w = default_y_halfwidth(&cell, 21).unwrap();
            let expect = 1.5 * libm::sqrt(2.0 * p0.abs() + 1.0);
            assert!((w - expect).abs() <= 1e-5 * expect, "{w} vs {expect}");
        }
        let p2 = builtin_problem("quadcell2d", 3).unwrap();
        let w = default_y_halfwidth(&freeze(&p2, &[0.0], &[0.0]).unwrap(), 11).unwrap();
        assert!((w - 1.5).abs() <= 1e-5, "{w}");
    }

    #[test]
    fn dimension_check() {
        let p = builtin_problem("quadcell", 5).unwrap();
        assert!(freeze(&p, &[0.0, 1.0], &[0.0]).is_err());
    }
}
