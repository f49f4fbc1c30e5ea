//! Sampled audit of the standing assumptions on a problem.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::make_box_grid;
use crate::problem::ControlProblem;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Sup of |f| over the samples.
    pub q0_observed: f64,
    /// Largest sampled difference quotient of f and g along grid axes.
    pub lipschitz_observed: f64,
    /// Radius of the largest origin-centred ball inside conv g(x, y, A), minimised over samples.
    pub controllability_radius: f64,
    /// `(r, min ell)` over sampled states with |y| = r.
    pub coercivity_profile: Vec<(f64, f64)>,
    /// Whether `u0 >= -bound_f` at every sample.
    pub u0_lower_bound_ok: bool,
    /// Hard failures; empty when the problem is usable.
    pub failures: Vec<String>,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Samples the `(x, y)` box `[lower, upper]` with `samples` nodes per axis.
pub fn check_assumptions(
    problem: &ControlProblem,
    lower: &[f64],
    upper: &[f64],
    samples: usize,
) -> Result<AssumptionReport, Error> {
    let n = problem.dim_slow;
    let m = problem.dim_fast;
    if lower.len() != n + m || upper.len() != n + m {
        return Err(Error::Dimension(format!("audit box must have {} axes", n + m)));
    }
    let grid = make_box_grid(lower, upper, &vec![samples.max(2); n + m])?;
    let na = problem.num_controls();
    let mut p = vec![0.0; n + m];
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut q0: f64 = 0.0;
    let mut radius = f64::INFINITY;
    let mut u0_ok = true;
    let mut gs: Vec<[f64; 3]> = Vec::with_capacity(na);
    for i in 0..grid.len() {
        grid.node_into(i, &mut p);
        let (x, y) = p.split_at(n);
        gs.clear();
        for a in 0..na {
            problem.f(x, y, a, &mut f);
            q0 = q0.max(norm(&f));
            problem.g(x, y, a, &mut g);
            let mut v = [0.0; 3];
            v[..m].copy_from_slice(&g);
            gs.push(v);
        }
        radius = radius.min(inner_radius(&gs, m));
        if !(problem.u0(x, y) >= -problem.bound_f) {
            u0_ok = false;
        }
    }

    let mut lip: f64 = 0.0;
    let (mut f2, mut g2) = (vec![0.0; n], vec![0.0; m]);
    let mut p2 = vec![0.0; n + m];
    let mut step = vec![0i64; n + m];
    for i in 0..grid.len() {
        grid.node_into(i, &mut p);
        for k in 0..n + m {
            step.iter_mut().for_each(|s| *s = 0);
            step[k] = 1;
            let Some(j) = grid.shifted(i, &step) else { continue };
            grid.node_into(j, &mut p2);
            let dist = grid.spacing()[k];
            let (x, y) = p.split_at(n);
            let (x2, y2) = p2.split_at(n);
            for a in 0..na {
                problem.f(x, y, a, &mut f);
                problem.f(x2, y2, a, &mut f2);
                problem.g(x, y, a, &mut g);
                problem.g(x2, y2, a, &mut g2);
                lip = lip.max(diff_norm(&f, &f2) / dist).max(diff_norm(&g, &g2) / dist);
            }
        }
    }

    let profile = coercivity_profile(problem, lower, upper, samples.max(2))?;

    let mut failures = Vec::new();
    if !(radius > 0.0) {
        failures.push(String::from("controllability radius is zero"));
    }
    if !u0_ok {
        failures.push(format!("u0 drops below -{}", problem.bound_f));
    }
    if q0 > problem.bound_f * (1.0 + 1e-12) + 1e-12 {
        failures.push(format!(
            "observed |f| = {q0} exceeds declared bound {}",
            problem.bound_f
        ));
    }
    Ok(AssumptionReport {
        q0_observed: q0,
        lipschitz_observed: lip,
        controllability_radius: radius.max(0.0),
        coercivity_profile: profile,
        u0_lower_bound_ok: u0_ok,
        failures,
    })
}

fn coercivity_profile(
    problem: &ControlProblem,
    lower: &[f64],
    upper: &[f64],
    samples: usize,
) -> Result<Vec<(f64, f64)>, Error> {
    let n = problem.dim_slow;
    let m = problem.dim_fast;
    let r_max = (n..n + m)
        .map(|k| lower[k].abs().max(upper[k].abs()))
        .fold(0.0, f64::max);
    let xg = make_box_grid(&lower[..n], &upper[..n], &vec![samples; n])?;
    let dirs = unit_directions(m);
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; m];
    let mut out = Vec::with_capacity(samples);
    for s in 0..samples {
        let r = r_max * (s as f64) / ((samples - 1) as f64);
        let mut best = f64::INFINITY;
        for i in 0..xg.len() {
            xg.node_into(i, &mut x);
            for d in &dirs {
                for k in 0..m {
                    y[k] = r * d[k];
                }
                for a in 0..problem.num_controls() {
                    best = best.min(problem.ell(&x, &y, a));
                }
            }
        }
        out.push((r, best));
    }
    Ok(out)
}

fn unit_directions(m: usize) -> Vec<[f64; 3]> {
    match m {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => (0..16)
            .map(|k| {
                let t = core::f64::consts::PI * (k as f64) / 8.0;
                [libm::cos(t), libm::sin(t), 0.0]
            })
            .collect(),
        _ => {
            let mut v = Vec::new();
            for a in -1i32..=1 {
                for b in -1i32..=1 {
                    for c in -1i32..=1 {
                        if (a, b, c) != (0, 0, 0) {
                            let d = [a as f64, b as f64, c as f64];
                            let l = norm(&d);
                            v.push([d[0] / l, d[1] / l, d[2] / l]);
                        }
                    }
                }
            }
            v
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|t| t * t).sum())
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(s, t)| (s - t) * (s - t)).sum())
}

/// Radius of the largest ball about the origin inside the convex hull of `pts`
/// (first `m` coordinates used); zero when the origin is not interior.
pub fn inner_radius(pts: &[[f64; 3]], m: usize) -> f64 {
    match m {
        1 => {
            let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            hi.min(-lo).max(0.0)
        }
        2 => radius_2d(pts),
        3 => radius_3d(pts),
        _ => 0.0,
    }
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull by monotone chain; collinear points dropped.
pub fn convex_hull_2d(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p: Vec<[f64; 2]> = pts.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for &q in &p {
        while hull.len() >= 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
            hull.pop();
        }
        hull.push(q);
    }
    let lower_len = hull.len() + 1;
    for &q in p.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross2(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
            hull.pop();
        }
        hull.push(q);
    }
    hull.pop();
    hull
}

fn radius_2d(pts: &[[f64; 3]]) -> f64 {
    let flat: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[1]]).collect();
    let hull = convex_hull_2d(&flat);
    if hull.len() < 3 {
        return 0.0;
    }
    let mut r = f64::INFINITY;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let len = libm::hypot(b[0] - a[0], b[1] - a[1]);
        // Signed distance of the origin to the left of edge a -> b.
        let d = cross2(a, b, [0.0, 0.0]) / len;
        r = r.min(d);
    }
    r.max(0.0)
}

fn radius_3d(pts: &[[f64; 3]]) -> f64 {
    let mut p: Vec<[f64; 3]> = pts.to_vec();
    p.sort_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    p.dedup();
    let scale = p.iter().map(|q| norm(q)).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-12 * scale;
    let mut r = f64::INFINITY;
    let mut facets = 0usize;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            for k in j + 1..p.len() {
                let u = sub(p[j], p[i]);
                let v = sub(p[k], p[i]);
                let nrm = [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                let l = norm(&nrm);
                if l <= tol * scale {
                    continue;
                }
                let nn = [nrm[0] / l, nrm[1] / l, nrm[2] / l];
                let off = dot(nn, p[i]);
                let (mut above, mut below) = (false, false);
                for q in &p {
                    let s = dot(nn, *q) - off;
                    above |= s > tol;
                    below |= s < -tol;
                    if above && below {
                        break;
                    }
                }
                if above && below {
                    continue;
                }
                facets += 1;
                if !above && !below {
                    // Flat hull: the origin cannot be interior.
                    r = r.min(-off.abs());
                    continue;
                }
                // Supporting plane: distance from origin, signed towards the hull.
                let d = if above { off } else { -off };
                r = r.min(-d);
            }
        }
    }
    if facets == 0 {
        return 0.0;
    }
    r.max(0.0)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_problem, ControlSet};

    #[test]
    fn quadcell_audit() {
        let p = builtin_problem("quadcell", 5).unwrap();
        let r = check_assumptions(&p, &[-1.0, -2.0], &[1.0, 2.0], 9).unwrap();
        assert_eq!(r.controllability_radius, 1.0);
        assert_eq!(r.q0_observed, 1.0);
        assert_eq!(r.lipschitz_observed, 0.0);
        assert!(r.u0_lower_bound_ok && r.ok());
        let prof = &r.coercivity_profile;
        for w in prof.windows(2) {
            if w[0].0 >= 1.0 {
                assert!(w[1].1 > w[0].1);
            }
        }
    }

    #[test]
    fn quadcell2d_radius() {
        let p = builtin_problem("quadcell2d", 3).unwrap();
        let r = check_assumptions(&p, &[-1.0, -1.0, -1.0], &[1.0, 1.0, 1.0], 3).unwrap();
        assert!((r.controllability_radius - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_sided_fast_control_fails() {
        let c = ControlSet::lattice(&[(-1.0, 1.0), (0.0, 1.0)], 5).unwrap();
        let p =
            ControlProblem::from_expressions("onesided", 1, 1, c, &["a1"], &["a2"], "y^2", "x^2", 1.0, 0.0)
                .unwrap();
        let r = check_assumptions(&p, &[-1.0, -1.0], &[1.0, 1.0], 5).unwrap();
        assert_eq!(r.controllability_radius, 0.0);
        assert!(!r.ok());
    }

    #[test]
    fn radius_3d_cube_and_octahedron() {
        let mut cube = Vec::new();
        for a in [-1.0, 1.0] {
            for b in [-1.0, 1.0] {
                for c in [-1.0, 1.0] {
                    cube.push([a, b, c]);
                }
            }
        }
        assert!((inner_radius(&cube, 3) - 1.0).abs() < 1e-14);
        let oct = [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ];
        assert!((inner_radius(&oct, 3) - 1.0 / libm::sqrt(3.0)).abs() < 1e-14);
        let shifted: Vec<[f64; 3]> = cube.iter().map(|p| [p[0] + 2.0, p[1], p[2]]).collect();
        assert_eq!(inner_radius(&shifted, 3), 0.0);
    }

    #[test]
    fn refining_samples_keeps_radius() {
        let coarse = builtin_problem("quadcell", 2).unwrap();
        let fine = builtin_problem("quadcell", 7).unwrap();
        let rc = check_assumptions(&coarse, &[-1.0, -1.0], &[1.0, 1.0], 5).unwrap();
        let rf = check_assumptions(&fine, &[-1.0, -1.0], &[1.0, 1.0], 5).unwrap();
        assert!(rf.controllability_radius >= rc.controllability_radius);
    }
}
