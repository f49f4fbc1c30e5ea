//! Control problems: dynamics, running cost, initial datum and a finite control set.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::Expr;
use crate::grid::BoxGrid;
use crate::Error;

/// Largest supported fast dimension.
pub const MAX_FAST_DIM: usize = 3;
const MAX_VARS: usize = 32;

/// Pointwise data of a problem. Drifts write into `out`, whose length is the
/// slow (resp. fast) dimension.
pub trait Model: Send + Sync {
    fn drift_slow(&self, x: &[f64], y: &[f64], a: &[f64], out: &mut [f64]);
    fn drift_fast(&self, x: &[f64], y: &[f64], a: &[f64], out: &mut [f64]);
    fn running_cost(&self, x: &[f64], y: &[f64], a: &[f64]) -> f64;
    fn initial_cost(&self, x: &[f64], y: &[f64]) -> f64;
}

/// Finite sample of the control box, stored row-major (first axis outermost).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    dim: usize,
    points: Vec<f64>,
}

impl ControlSet {
    /// Per axis: `samples_per_axis` evenly spaced values plus both endpoints.
    pub fn lattice(bounds: &[(f64, f64)], samples_per_axis: usize) -> Result<Self, Error> {
        if samples_per_axis == 0 || bounds.is_empty() {
            return Err(Error::EmptyControlSet);
        }
        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(bounds.len());
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "control axis {k} has bounds [{lo}, {hi}]"
                )));
            }
            let mut vals = vec![lo, hi];
            if samples_per_axis == 1 {
                vals.push(0.5 * (lo + hi));
            } else {
                let n = samples_per_axis - 1;
                for i in 0..=n {
                    vals.push(lo + (hi - lo) * (i as f64) / (n as f64));
                }
            }
            vals.sort_by(|a, b| a.total_cmp(b));
            vals.dedup();
            axes.push(vals);
        }
        let count: usize = axes.iter().map(Vec::len).product();
        let dim = bounds.len();
        let mut points = Vec::with_capacity(count * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..count {
            for k in 0..dim {
                points.push(axes[k][idx[k]]);
            }
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(ControlSet { dim, points })
    }

    pub fn from_points(dim: usize, points: Vec<f64>) -> Result<Self, Error> {
        if dim == 0 || points.is_empty() {
            return Err(Error::EmptyControlSet);
        }
        if !points.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!(
                "{} coordinates do not split into controls of dimension {dim}",
                points.len()
            )));
        }
        Ok(ControlSet { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// A two-scale control problem. `bound_f` bounds |f| and `lipschitz` is the
/// joint Lipschitz constant of f and g; both are declared, not measured.
#[derive(Clone)]
pub struct ControlProblem {
    pub name: String,
    pub dim_slow: usize,
    pub dim_fast: usize,
    pub controls: ControlSet,
    pub model: Arc<dyn Model>,
    pub bound_f: f64,
    pub lipschitz: f64,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("dim_slow", &self.dim_slow)
            .field("dim_fast", &self.dim_fast)
            .field("controls", &self.controls.len())
            .field("bound_f", &self.bound_f)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl ControlProblem {
    pub fn new(
        name: &str,
        dim_slow: usize,
        dim_fast: usize,
        controls: ControlSet,
        model: Arc<dyn Model>,
        bound_f: f64,
        lipschitz: f64,
    ) -> Result<Self, Error> {
        if dim_slow == 0 || dim_fast == 0 {
            return Err(Error::Dimension("dimensions must be positive".to_string()));
        }
        if dim_fast > MAX_FAST_DIM {
            return Err(Error::Dimension(format!(
                "fast dimension {dim_fast} exceeds the supported maximum {MAX_FAST_DIM}"
            )));
        }
        if controls.is_empty() {
            return Err(Error::EmptyControlSet);
        }
        if !(bound_f >= 0.0) || !(lipschitz >= 0.0) {
            return Err(Error::InvalidArgument(
                "bound_f and lipschitz must be non-negative".to_string(),
            ));
        }
        Ok(ControlProblem {
            name: name.to_string(),
            dim_slow,
            dim_fast,
            controls,
            model,
            bound_f,
            lipschitz,
        })
    }

    /// Problem given by expression strings over `x1.. y1.. a1..`
    /// (plus `x`, `y`, `a` when the corresponding dimension is 1).
    #[allow(clippy::too_many_arguments)]
    pub fn from_expressions(
        name: &str,
        dim_slow: usize,
        dim_fast: usize,
        controls: ControlSet,
        f: &[&str],
        g: &[&str],
        ell: &str,
        u0: &str,
        bound_f: f64,
        lipschitz: f64,
    ) -> Result<Self, Error> {
        let model = ExprModel::new(dim_slow, dim_fast, controls.dim(), f, g, ell, u0)?;
        Self::new(
            name,
            dim_slow,
            dim_fast,
            controls,
            Arc::new(model),
            bound_f,
            lipschitz,
        )
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn control(&self, i: usize) -> &[f64] {
        self.controls.get(i)
    }

    pub fn f(&self, x: &[f64], y: &[f64], a: usize, out: &mut [f64]) {
        self.model.drift_slow(x, y, self.controls.get(a), out)
    }

    pub fn g(&self, x: &[f64], y: &[f64], a: usize, out: &mut [f64]) {
        self.model.drift_fast(x, y, self.controls.get(a), out)
    }

    pub fn ell(&self, x: &[f64], y: &[f64], a: usize) -> f64 {
        self.model.running_cost(x, y, self.controls.get(a))
    }

    pub fn u0(&self, x: &[f64], y: &[f64]) -> f64 {
        self.model.initial_cost(x, y)
    }
}

/// Closed-form test problems: `f = a1`, `g = (a2, ..)`, `ell = |y|^2`,
/// `u0 = |x|^2 + 1 - exp(-|y|^2)` on the control cube `[-1, 1]^(1+M)`.
#[derive(Debug, Clone, Copy)]
pub struct Quadcell;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum()
}

impl Model for Quadcell {
    fn drift_slow(&self, _x: &[f64], _y: &[f64], a: &[f64], out: &mut [f64]) {
        out[0] = a[0];
    }

    fn drift_fast(&self, _x: &[f64], _y: &[f64], a: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&a[1..]);
    }

    fn running_cost(&self, _x: &[f64], y: &[f64], _a: &[f64]) -> f64 {
        norm2(y)
    }

    fn initial_cost(&self, x: &[f64], y: &[f64]) -> f64 {
        norm2(x) + 1.0 - libm::exp(-norm2(y))
    }
}

/// Builtins: `quadcell` (N = M = 1) and `quadcell2d` (N = 1, M = 2).
pub fn builtin_problem(name: &str, samples_per_axis: usize) -> Result<ControlProblem, Error> {
    let dim_fast = match name {
        "quadcell" => 1,
        "quadcell2d" => 2,
        _ => return Err(Error::UnknownName(name.to_string())),
    };
    let bounds = vec![(-1.0, 1.0); 1 + dim_fast];
    let controls = ControlSet::lattice(&bounds, samples_per_axis)?;
    ControlProblem::new(name, 1, dim_fast, controls, Arc::new(Quadcell), 1.0, 0.0)
}

/// Names accepted by [`builtin_problem`].
pub const BUILTIN_NAMES: [&str; 2] = ["quadcell", "quadcell2d"];

struct ExprModel {
    n: usize,
    m: usize,
    f: Vec<Expr>,
    g: Vec<Expr>,
    ell: Expr,
    u0: Expr,
}

impl ExprModel {
    fn new(n: usize, m: usize, k: usize, f: &[&str], g: &[&str], ell: &str, u0: &str) -> Result<Self, Error> {
        if f.len() != n || g.len() != m {
            return Err(Error::Dimension(format!(
                "expected {n} slow and {m} fast drift expressions, got {} and {}",
                f.len(),
                g.len()
            )));
        }
        if n + m + k > MAX_VARS {
            return Err(Error::Dimension("too many variables".to_string()));
        }
        let mut names: Vec<String> = Vec::new();
        for (prefix, count) in [("x", n), ("y", m), ("a", k)] {
            for i in 1..=count {
                names.push(format!("{prefix}{i}"));
            }
        }
        let mut table: Vec<(&str, usize)> = names.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
        // Single-axis aliases share the slot of their indexed name.
        if n == 1 {
            table.push(("x", 0));
        }
        if m == 1 {
            table.push(("y", n));
        }
        if k == 1 {
            table.push(("a", n + m));
        }
        let compile = |s: &&str| Expr::compile_slots(s, &table);
        let f = f.iter().map(compile).collect::<Result<Vec<_>, _>>()?;
        let g = g.iter().map(compile).collect::<Result<Vec<_>, _>>()?;
        let ell = compile(&ell)?;
        let u0 = compile(&u0)?;
        Ok(ExprModel { n, m, f, g, ell, u0 })
    }

    fn pack(&self, x: &[f64], y: &[f64], a: &[f64]) -> [f64; MAX_VARS] {
        let mut v = [0.0; MAX_VARS];
        v[..self.n].copy_from_slice(x);
        v[self.n..self.n + self.m].copy_from_slice(y);
        v[self.n + self.m..self.n + self.m + a.len()].copy_from_slice(a);
        v
    }
}

impl Model for ExprModel {
    fn drift_slow(&self, x: &[f64], y: &[f64], a: &[f64], out: &mut [f64]) {
        let v = self.pack(x, y, a);
        for (o, e) in out.iter_mut().zip(&self.f) {
            *o = e.eval(&v);
        }
    }

    fn drift_fast(&self, x: &[f64], y: &[f64], a: &[f64], out: &mut [f64]) {
        let v = self.pack(x, y, a);
        for (o, e) in out.iter_mut().zip(&self.g) {
            *o = e.eval(&v);
        }
    }

    fn running_cost(&self, x: &[f64], y: &[f64], a: &[f64]) -> f64 {
        self.ell.eval(&self.pack(x, y, a))
    }

    fn initial_cost(&self, x: &[f64], y: &[f64]) -> f64 {
        let zeros = [0.0; MAX_VARS];
        self.u0.eval(&self.pack(x, y, &zeros[..0]))
    }
}

/// `min_y u0(x, y)` over the nodes of `y_grid`.
pub fn bar_u0(problem: &ControlProblem, x: &[f64], y_grid: &BoxGrid) -> f64 {
    let mut y = vec![0.0; y_grid.dim()];
    let mut best = f64::INFINITY;
    for i in 0..y_grid.len() {
        y_grid.node_into(i, &mut y);
        best = best.min(problem.u0(x, &y));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_box_grid;

    #[test]
    fn lattice_counts_and_order() {
        let c = ControlSet::lattice(&[(-1.0, 1.0), (-1.0, 1.0)], 5).unwrap();
        assert_eq!(c.len(), 25);
        assert_eq!(c.get(0), &[-1.0, -1.0]);
        assert_eq!(c.get(1), &[-1.0, -0.5]);
        assert_eq!(c.get(24), &[1.0, 1.0]);
        let one = ControlSet::lattice(&[(-1.0, 1.0)], 1).unwrap();
        assert_eq!(one.len(), 3);
        assert_eq!(
            ControlSet::lattice(&[(-1.0, 1.0)], 0),
            Err(Error::EmptyControlSet)
        );
    }

    #[test]
    fn builtin_lookup() {
        let p = builtin_problem("quadcell", 5).unwrap();
        assert_eq!((p.dim_slow, p.dim_fast, p.num_controls()), (1, 1, 25));
        let p2 = builtin_problem("quadcell2d", 5).unwrap();
        assert_eq!((p2.dim_slow, p2.dim_fast, p2.num_controls()), (1, 2, 125));
        assert!(matches!(builtin_problem("nope", 5), Err(Error::UnknownName(_))));
        assert_eq!(
            builtin_problem("quadcell", 0).unwrap_err(),
            Error::EmptyControlSet
        );
    }

    #[test]
    fn expressions_match_builtin() {
        let controls = ControlSet::lattice(&[(-1.0, 1.0), (-1.0, 1.0)], 5).unwrap();
        let e = ControlProblem::from_expressions(
            "expr",
            1,
            1,
            controls,
            &["a1"],
            &["a2"],
            "y^2",
            "x^2 + 1 - exp(-y1^2)",
            1.0,
            0.0,
        )
        .unwrap();
        let b = builtin_problem("quadcell", 5).unwrap();
        let (mut fe, mut fb, mut ge, mut gb) = ([0.0], [0.0], [0.0], [0.0]);
        for a in 0..25 {
            for &(x, y) in &[(0.3, -1.2), (-2.0, 0.7)] {
                e.f(&[x], &[y], a, &mut fe);
                b.f(&[x], &[y], a, &mut fb);
                e.g(&[x], &[y], a, &mut ge);
                b.g(&[x], &[y], a, &mut gb);
                assert_eq!(fe, fb);
                assert_eq!(ge, gb);
                assert_eq!(e.ell(&[x], &[y], a), b.ell(&[x], &[y], a));
                assert_eq!(e.u0(&[x], &[y]), b.u0(&[x], &[y]));
            }
        }
    }

    #[test]
    fn bar_u0_quadcell() {
        let p = builtin_problem("quadcell", 5).unwrap();
        let yg = make_box_grid(&[-2.0], &[2.0], &[81]).unwrap();
        for &x in &[-1.0, 0.0, 0.5] {
            assert!((bar_u0(&p, &[x], &yg) - x * x).abs() < 1e-15);
        }
    }

    #[test]
    fn fast_dimension_limit() {
        let controls = ControlSet::lattice(&[(-1.0, 1.0)], 3).unwrap();
        let r = ControlProblem::from_expressions(
            "big",
            1,
            4,
            controls,
            &["a"],
            &["a", "a", "a", "a"],
            "0",
            "0",
            1.0,
            0.0,
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
