//! Sublevel sets `Z_b(y) = {q : H0(y, q) <= b}` and their support function.
//!
//! `Z_b(y)` is the polyhedron `{q : n_a.q <= ell0_a + b}` with `n_a = -g0(y, a)`.
//! In one dimension it is an interval, in two a polygon obtained by clipping,
//! in three it is handled by the simplex.

use alloc::vec;
use alloc::vec::Vec;

use crate::cell::CellInstance;
use crate::lp::{maximize, LpResult};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportError {
    /// `Z_b(y)` is empty.
    Infeasible,
    /// The support function is `+inf` in the requested direction.
    Unbounded,
}

impl From<SupportError> for Error {
    fn from(e: SupportError) -> Self {
        match e {
            SupportError::Infeasible => Error::Infeasible,
            SupportError::Unbounded => Error::Unbounded,
        }
    }
}

/// Distinct normals `n_a` with the smallest running cost attached to each.
#[derive(Debug, Clone, PartialEq)]
pub struct PointData {
    m: usize,
    normals: Vec<[f64; 3]>,
    ell: Vec<f64>,
}

impl PointData {
    pub fn new(cell: &CellInstance<'_>, y: &[f64]) -> Self {
        let m = cell.dim();
        let mut rows: Vec<([f64; 3], f64)> = Vec::with_capacity(cell.num_controls());
        let mut g = [0.0; 3];
        for a in 0..cell.num_controls() {
            cell.g0(y, a, &mut g[..m]);
            let n = [-g[0], -g[1], -g[2]];
            rows.push((n, cell.ell0(y, a)));
        }
        rows.sort_by(|a, b| {
            a.0[0]
                .total_cmp(&b.0[0])
                .then(a.0[1].total_cmp(&b.0[1]))
                .then(a.0[2].total_cmp(&b.0[2]))
                .then(a.1.total_cmp(&b.1))
        });
        rows.dedup_by(|later, first| later.0 == first.0);
        let (normals, ell) = rows.into_iter().unzip();
        PointData { m, normals, ell }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// `H0(y, q)`.
    pub fn h0(&self, q: &[f64]) -> f64 {
        self.normals
            .iter()
            .zip(&self.ell)
            .map(|(n, l)| dot(n, q, self.m) - l)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `min_q H0(y, q)`: the smallest level with nonempty sublevel set.
    pub fn floor(&self) -> Result<f64, Error> {
        self.min_over(None)
    }

    /// `min H0(y, q)` over the box `lo <= q <= hi`.
    pub fn box_min(&self, lo: &[f64], hi: &[f64]) -> f64 {
        // A bounded LP is always feasible and bounded.
        self.min_over(Some((lo, hi))).unwrap_or(f64::NAN)
    }

    // Variables (s+, s-, t+, t-) with q = lo + s (box) or q = s+ - s- (free).
    fn min_over(&self, bounds: Option<(&[f64], &[f64])>) -> Result<f64, Error> {
        let m = self.m;
        let k = self.normals.len();
        let free = bounds.is_none();
        let nq = if free { 2 * m } else { m };
        let nv = nq + 2;
        let rows = k + if free { 0 } else { m };
        let mut a = vec![0.0; rows * nv];
        let mut b = vec![0.0; rows];
        for (r, (n, l)) in self.normals.iter().zip(&self.ell).enumerate() {
            let row = &mut a[r * nv..(r + 1) * nv];
            for i in 0..m {
                row[i] = n[i];
                if free {
                    row[m + i] = -n[i];
                }
            }
            row[nq] = -1.0;
            row[nq + 1] = 1.0;
            b[r] = *l - bounds.map_or(0.0, |(lo, _)| dot(n, lo, m));
        }
        if let Some((lo, hi)) = bounds {
            for i in 0..m {
                a[(k + i) * nv + i] = 1.0;
                b[k + i] = hi[i] - lo[i];
            }
        }
        let mut c = vec![0.0; nv];
        c[nq] = -1.0;
        c[nq + 1] = 1.0;
        match maximize(&a, &b, &c) {
            LpResult::Optimal { value, .. } => Ok(-value),
            LpResult::Unbounded => Err(Error::Unbounded),
            LpResult::Infeasible => Err(Error::Infeasible),
        }
    }

    pub fn sublevel(&self, b: f64) -> Result<Sublevel, SupportError> {
        let m = self.m;
        let mut lines: Vec<([f64; 3], f64)> = Vec::with_capacity(self.normals.len());
        let scale = self.ell.iter().fold(b.abs(), |s, l| s.max(l.abs()));
        let tol = 1e-12 * (1.0 + scale);
        for (n, l) in self.normals.iter().zip(&self.ell) {
            let len = libm::sqrt(dot(n, n, m));
            let c = l + b;
            if len == 0.0 {
                if c < -tol {
                    return Err(SupportError::Infeasible);
                }
                continue;
            }
            lines.push(([n[0] / len, n[1] / len, n[2] / len], c / len));
        }
        match m {
            1 => interval(&lines, tol),
            2 => Polygon::build(&lines, tol).map(Sublevel::Polygon),
            _ => polytope(lines),
        }
    }
}

fn dot(a: &[f64], b: &[f64], m: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..m {
        s += a[i] * b[i];
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sublevel {
    Interval { lo: f64, hi: f64 },
    Polygon(Polygon),
    Polytope { normals: Vec<[f64; 3]>, rhs: Vec<f64> },
}

fn interval(lines: &[([f64; 3], f64)], tol: f64) -> Result<Sublevel, SupportError> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (n, c) in lines {
        // Normals are unit, so n[0] is +1 or -1.
        if n[0] > 0.0 {
            hi = hi.min(c / n[0]);
        } else {
            lo = lo.max(c / n[0]);
        }
    }
    if lo > hi {
        if lo - hi > tol * (1.0 + lo.abs() + hi.abs()) {
            return Err(SupportError::Infeasible);
        }
        let mid = 0.5 * (lo + hi);
        lo = mid;
        hi = mid;
    }
    Ok(Sublevel::Interval { lo, hi })
}

fn polytope(lines: Vec<([f64; 3], f64)>) -> Result<Sublevel, SupportError> {
    let (normals, rhs): (Vec<[f64; 3]>, Vec<f64>) = lines.into_iter().unzip();
    let s = Sublevel::Polytope { normals, rhs };
    match s.lp_max(&[0.0, 0.0, 0.0]) {
        LpResult::Infeasible => Err(SupportError::Infeasible),
        _ => Ok(s),
    }
}

impl Sublevel {
    /// `sigma_b(y, v) = max { q.v : q in Z_b(y) }`.
    pub fn sigma(&self, v: &[f64]) -> Result<f64, SupportError> {
        match self {
            Sublevel::Interval { lo, hi } => {
                let x = v[0];
                let r = if x > 0.0 {
                    x * hi
                } else if x < 0.0 {
                    x * lo
                } else {
                    0.0
                };
                if r.is_finite() {
                    Ok(r)
                } else {
                    Err(SupportError::Unbounded)
                }
            }
            Sublevel::Polygon(p) => p.sigma([v[0], v[1]]),
            Sublevel::Polytope { .. } => match self.lp_max(v) {
                LpResult::Optimal { value, .. } => Ok(value),
                LpResult::Unbounded => Err(SupportError::Unbounded),
                LpResult::Infeasible => Err(SupportError::Infeasible),
            },
        }
    }

    /// Largest Euclidean norm of a point of the set (`+inf` when unbounded).
    pub fn max_norm(&self) -> f64 {
        match self {
            Sublevel::Interval { lo, hi } => lo.abs().max(hi.abs()),
            Sublevel::Polygon(p) => {
                if !p.rays.is_empty() {
                    return f64::INFINITY;
                }
                p.vertices()
                    .iter()
                    .map(|q| libm::hypot(q[0], q[1]))
                    .fold(0.0, f64::max)
            }
            Sublevel::Polytope { .. } => {
                // |q|_2 <= |q|_1 = max over sign patterns of s.q.
                let mut best: f64 = 0.0;
                for mask in 0..8u32 {
                    let s: [f64; 3] = core::array::from_fn(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
                    match self.sigma(&s) {
                        Ok(v) => best = best.max(v),
                        Err(_) => return f64::INFINITY,
                    }
                }
                best
            }
        }
    }

    fn lp_max(&self, v: &[f64]) -> LpResult {
        let Sublevel::Polytope { normals, rhs } = self else {
            unreachable!()
        };
        let k = normals.len();
        let mut a = vec![0.0; k * 6];
        for (r, n) in normals.iter().enumerate() {
            for i in 0..3 {
                a[r * 6 + i] = n[i];
                a[r * 6 + 3 + i] = -n[i];
            }
        }
        let c = [v[0], v[1], v[2], -v[0], -v[1], -v[2]];
        maximize(&a, rhs, &c)
    }
}

/// Convex polygon kept as a cyclic list of supporting lines (counter-clockwise);
/// vertex `i` is the intersection of lines `i` and `i + 1`. `rays` holds the
/// extreme rays of the recession cone, empty when the set is bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    lines: Vec<([f64; 2], f64)>,
    cycle: Vec<usize>,
    rays: Vec<[f64; 2]>,
}

impl Polygon {
    fn build(lines3: &[([f64; 3], f64)], tol: f64) -> Result<Self, SupportError> {
        let lines: Vec<([f64; 2], f64)> = lines3.iter().map(|(n, c)| ([n[0], n[1]], *c)).collect();
        let rays = recession_rays(&lines);
        let cmax = lines.iter().fold(0.0f64, |s, (_, c)| s.max(c.abs()));
        let mut big = 1e6 * (1.0 + cmax);
        for _ in 0..4 {
            let p = Self::clip_all(&lines, big, tol, rays.clone())?;
            let touches_box = p.cycle.iter().any(|&i| i < 4);
            if !touches_box || !p.rays.is_empty() {
                return Ok(p);
            }
            big *= 1e3;
        }
        Self::clip_all(&lines, big, tol, rays)
    }

    fn clip_all(
        constraints: &[([f64; 2], f64)],
        big: f64,
        tol: f64,
        rays: Vec<[f64; 2]>,
    ) -> Result<Self, SupportError> {
        let mut lines = vec![
            ([0.0, -1.0], big),
            ([1.0, 0.0], big),
            ([0.0, 1.0], big),
            ([-1.0, 0.0], big),
        ];
        lines.extend_from_slice(constraints);
        let mut p = Polygon {
            lines,
            cycle: vec![0, 1, 2, 3],
            rays,
        };
        for li in 4..p.lines.len() {
            p.clip(li, tol)?;
        }
        Ok(p)
    }

    fn vertex(&self, i: usize, j: usize) -> [f64; 2] {
        let (n1, c1) = self.lines[i];
        let (n2, c2) = self.lines[j];
        let det = n1[0] * n2[1] - n1[1] * n2[0];
        [(c1 * n2[1] - c2 * n1[1]) / det, (n1[0] * c2 - n2[0] * c1) / det]
    }

    pub fn vertices(&self) -> Vec<[f64; 2]> {
        let k = self.cycle.len();
        (0..k)
            .map(|i| self.vertex(self.cycle[i], self.cycle[(i + 1) % k]))
            .collect()
    }

    fn clip(&mut self, li: usize, tol: f64) -> Result<(), SupportError> {
        let (n, c) = self.lines[li];
        let verts = self.vertices();
        let out: Vec<bool> = verts
            .iter()
            .map(|v| n[0] * v[0] + n[1] * v[1] - c > tol)
            .collect();
        if !out.iter().any(|&o| o) {
            return Ok(());
        }
        if out.iter().all(|&o| o) {
            return Err(SupportError::Infeasible);
        }
        let k = self.cycle.len();
        let mut next = Vec::with_capacity(k + 1);
        for i in 0..k {
            // Line i carries the edge from vertex i-1 to vertex i.
            let prev_out = out[(i + k - 1) % k];
            if !(prev_out && out[i]) {
                next.push(self.cycle[i]);
                if out[i] {
                    next.push(li);
                }
            }
        }
        self.cycle = next;
        Ok(())
    }

    fn sigma(&self, v: [f64; 2]) -> Result<f64, SupportError> {
        let vn = libm::hypot(v[0], v[1]);
        for d in &self.rays {
            if v[0] * d[0] + v[1] * d[1] > 1e-12 * vn {
                return Err(SupportError::Unbounded);
            }
        }
        Ok(self
            .vertices()
            .iter()
            .map(|q| q[0] * v[0] + q[1] * v[1])
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

// Extreme rays of {d : n.d <= 0 for all lines}; candidates are the normals'
// perpendiculars, which contain every extreme ray of a planar polyhedral cone.
fn recession_rays(lines: &[([f64; 2], f64)]) -> Vec<[f64; 2]> {
    let inside = |d: [f64; 2]| lines.iter().all(|(n, _)| n[0] * d[0] + n[1] * d[1] <= 1e-12);
    if lines.is_empty() {
        return vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    }
    let mut rays: Vec<[f64; 2]> = Vec::new();
    for (n, _) in lines {
        for d in [[-n[1], n[0]], [n[1], -n[0]]] {
            if inside(d)
                && !rays
                    .iter()
                    .any(|r| (r[0] - d[0]).abs() + (r[1] - d[1]).abs() < 1e-12)
            {
                rays.push(d);
            }
        }
    }
    rays
}

/// `sigma_b(y, v)` for a frozen cell.
pub fn support_sigma(cell: &CellInstance<'_>, b: f64, y: &[f64], v: &[f64]) -> Result<f64, SupportError> {
    PointData::new(cell, y).sublevel(b)?.sigma(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::freeze;
    use crate::problem::{builtin_problem, ControlProblem, ControlSet};
    use proptest::prelude::*;

    // Brute-force support function: max of q.v over a dense lattice of Z_b(y).
    fn brute_sigma(pd: &PointData, b: f64, v: &[f64], radius: f64, steps: usize) -> f64 {
        let m = pd.dim();
        let mut best = f64::NEG_INFINITY;
        let total = (steps + 1).pow(m as u32);
        for idx in 0..total {
            let mut q = [0.0; 3];
            let mut r = idx;
            for qi in q.iter_mut().take(m) {
                *qi = -radius + 2.0 * radius * ((r % (steps + 1)) as f64) / steps as f64;
                r /= steps + 1;
            }
            if pd.h0(&q[..m]) <= b {
                best = best.max(dot(&q, v, m));
            }
        }
        best
    }

    #[test]
    fn quadcell_interval() {
        let p = builtin_problem("quadcell", 5).unwrap();
        let cell = freeze(&p, &[0.0], &[0.5]).unwrap();
        // Z_b(y) = [-(b - 0.5 + y^2), b - 0.5 + y^2].
        let s = support_sigma(&cell, 1.0, &[0.5], &[2.0]).unwrap();
        assert!((s - 2.0 * 0.75).abs() < 1e-14);
        let s = support_sigma(&cell, 1.0, &[0.5], &[-3.0]).unwrap();
        assert!((s - 3.0 * 0.75).abs() < 1e-14);
        assert_eq!(
            support_sigma(&cell, 0.0, &[0.1], &[1.0]),
            Err(SupportError::Infeasible)
        );
    }

    #[test]
    fn quadcell_floor() {
        let p = builtin_problem("quadcell", 5).unwrap();
        let cell = freeze(&p, &[0.0], &[-1.5]).unwrap();
        for &y in &[0.0, 0.4, -1.3] {
            let f = cell.point_data(&[y]).floor().unwrap();
            assert!((f - (1.5 - y * y)).abs() < 1e-12);
        }
    }

    #[test]
    fn quadcell2d_polygon_is_l1_ball() {
        let p = builtin_problem("quadcell2d", 3).unwrap();
        let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
        let y = [0.6, -0.8];
        // Z_b = {|q|_1 <= b + |y|^2}; its support function is the sup norm.
        for v in [[1.0, 0.0], [0.3, -2.0], [-1.0, -1.0]] {
            let s = support_sigma(&cell, 0.5, &y, &v).unwrap();
            let exact = 1.5 * v[0].abs().max(v[1].abs());
            assert!((s - exact).abs() < 1e-12, "{s} vs {exact}");
        }
    }

    #[test]
    fn unbounded_half_plane() {
        // g only pushes in +y1 and +/- y2: the cone {d1 >= 0 ... } is nontrivial.
        let c = ControlSet::lattice(&[(0.0, 1.0), (-1.0, 1.0)], 3).unwrap();
        let p = ControlProblem::from_expressions("half", 1, 2, c, &["0"], &["a1", "a2"], "1", "0", 1.0, 0.0)
            .unwrap();
        let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
        let pd = cell.point_data(&[0.0, 0.0]);
        let z = pd.sublevel(0.0).unwrap();
        // Constraints: -a1 q1 - a2 q2 <= 1, so q1 may go to +inf.
        assert_eq!(z.sigma(&[1.0, 0.0]), Err(SupportError::Unbounded));
        assert!((z.sigma(&[-1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        // The resting control keeps H0 >= -1.
        assert!((pd.floor().unwrap() + 1.0).abs() < 1e-12);

        let c = ControlSet::lattice(&[(0.5, 1.0), (-1.0, 1.0)], 3).unwrap();
        let p = ControlProblem::from_expressions("drift", 1, 2, c, &["0"], &["a1", "a2"], "1", "0", 1.0, 0.0)
            .unwrap();
        let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
        assert!(matches!(
            cell.point_data(&[0.0, 0.0]).floor(),
            Err(Error::Unbounded)
        ));
    }

    #[test]
    fn polytope_3d_matches_l1_ball() {
        let c = ControlSet::lattice(&[(-1.0, 1.0); 3], 2).unwrap();
        let p = ControlProblem::from_expressions(
            "cube3",
            1,
            3,
            c,
            &["0"],
            &["a1", "a2", "a3"],
            "y1^2 + y2^2 + y3^2",
            "0",
            1.0,
            0.0,
        )
        .unwrap();
        let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
        let y = [0.5, 0.5, 0.5];
        let s = support_sigma(&cell, 0.25, &y, &[1.0, -2.0, 0.5]).unwrap();
        assert!((s - 2.0).abs() < 1e-10, "{s}");
        assert!((cell.point_data(&y).floor().unwrap() + 0.75).abs() < 1e-10);
        assert_eq!(
            support_sigma(&cell, -1.0, &y, &[1.0, 0.0, 0.0]),
            Err(SupportError::Infeasible)
        );
    }

    #[test]
    fn box_min_quadcell() {
        let p = builtin_problem("quadcell", 5).unwrap();
        let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
        let pd = cell.point_data(&[1.0]);
        assert!((pd.box_min(&[-0.5], &[2.0]) + 1.0).abs() < 1e-12);
        assert!((pd.box_min(&[0.5], &[2.0]) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn polygon_matches_brute_force() {
        // Rotational running cost: not symmetric in q.
        let c = ControlSet::lattice(&[(-1.0, 1.0); 3], 3).unwrap();
        let p = ControlProblem::from_expressions(
            "rot",
            1,
            2,
            c,
            &["a1"],
            &["a2", "a3"],
            "y1^2 + y2^2 + 0.5*(-y2*a2 + y1*a3)",
            "0",
            1.0,
            0.0,
        )
        .unwrap();
        let cell = freeze(&p, &[0.0], &[0.3]).unwrap();
        let pd = cell.point_data(&[0.7, -0.4]);
        for v in [[1.0, 0.0], [0.6, 0.8], [-0.2, 1.0], [-1.0, -1.0]] {
            let exact = pd.sublevel(0.4).unwrap().sigma(&v).unwrap();
            let brute = brute_sigma(&pd, 0.4, &v, 3.0, 600);
            assert!(exact >= brute - 1e-12 && exact - brute < 0.02, "{exact} {brute}");
        }
    }

    proptest! {
        #[test]
        fn sigma_homogeneous_and_subadditive(
            y1 in -1.5f64..1.5, y2 in -1.5f64..1.5, b in 0.2f64..2.0,
            v in proptest::array::uniform2(-2.0f64..2.0),
            w in proptest::array::uniform2(-2.0f64..2.0),
            lambda in 0.0f64..5.0,
        ) {
            let p = builtin_problem("quadcell2d", 3).unwrap();
            let cell = freeze(&p, &[0.0], &[0.2]).unwrap();
            let z = cell.point_data(&[y1, y2]).sublevel(b).unwrap();
            let sv = z.sigma(&v).unwrap();
            let sw = z.sigma(&w).unwrap();
            let slv = z.sigma(&[lambda * v[0], lambda * v[1]]).unwrap();
            let svw = z.sigma(&[v[0] + w[0], v[1] + w[1]]).unwrap();
            prop_assert!((slv - lambda * sv).abs() <= 1e-9 * (1.0 + slv.abs()));
            prop_assert!(svw <= sv + sw + 1e-9);
        }

        #[test]
        fn floor_is_min_of_h0(y in -2.0f64..2.0, p0 in -2.0f64..2.0, q in -3.0f64..3.0) {
            let p = builtin_problem("quadcell", 5).unwrap();
            let cell = freeze(&p, &[0.0], &[p0]).unwrap();
            let pd = cell.point_data(&[y]);
            let fl = pd.floor().unwrap();
            prop_assert!(fl <= pd.h0(&[q]) + 1e-12);
            prop_assert!(pd.sublevel(fl).is_ok());
        }
    }
}
