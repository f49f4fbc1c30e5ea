#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use slowfast_core::critical::{confinement_radius, core_sets, critical_with};
use slowfast_core::graph::{shortest_paths, stencil, GraphTemplate};
use slowfast_core::viscosity::{coercivity_inverse, max_gradient_norm};
use slowfast_core::*;

fn grid1(lo: f64, hi: f64, n: usize) -> BoxGrid {
    make_box_grid(&[lo], &[hi], &[n]).unwrap()
}

fn quadcell() -> ControlProblem {
    builtin_problem("quadcell", 5).unwrap()
}

#[test]
fn quadcell_critical_values() {
    let p = quadcell();
    let grid = grid1(-2.0, 2.0, 161);
    for p0 in [0.0, 0.5, 1.0, 2.0] {
        let cell = freeze(&p, &[0.0], &[p0]).unwrap();
        let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(1e-3)).unwrap();
        assert!((r.c0 - quadcell_c0(p0)).abs() <= 0.02, "p0 = {p0}: {}", r.c0);
        assert!(r.bracket_width() <= 1e-3);
    }
}

#[test]
fn h0_matches_closed_form() {
    let p = quadcell();
    let cell = freeze(&p, &[0.3], &[1.0]).unwrap();
    for (y, q) in [(0.5, 2.0), (-1.2, -0.4), (0.0, 0.0)] {
        assert!((hamiltonian_h0(&cell, &[y], &[q]) - quadcell_h0(1.0, y, q)).abs() < 1e-14);
    }
}

#[test]
fn sign_of_levels_around_zero() {
    let p = quadcell();
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let grid = grid1(-2.0, 2.0, 81);
    let h = grid.min_spacing();
    assert_eq!(
        classify_level(&cell, &grid, -0.05).unwrap(),
        CycleOutcome::NegativeCycle
    );
    match classify_level(&cell, &grid, 0.05).unwrap() {
        CycleOutcome::MinLoop(rho) => {
            assert!((rho - quadcell_origin_loop(0.05, h)).abs() < 1e-12, "{rho}")
        }
        other => panic!("{other:?}"),
    }
}

fn single_switch(cell: &CellInstance<'_>, grid: &BoxGrid) {
    let t = GraphTemplate::new(cell, grid, 1).unwrap();
    let r = critical_with(&t, &CriticalOptions::with_tol(1e-3)).unwrap();
    let outcomes: Vec<bool> = (0..21)
        .map(|k| {
            let b = r.c0 - 0.5 + 0.05 * k as f64;
            matches!(
                slowfast_core::critical::classify_with(&t, b).unwrap(),
                CycleOutcome::MinLoop(_)
            )
        })
        .collect();
    let switches = outcomes.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(switches, 1, "{outcomes:?}");
    assert!(!outcomes[0] && outcomes[20]);
}

#[test]
fn cycle_outcome_switches_once_along_ladder() {
    let p = quadcell();
    for p0 in [0.0, 0.7] {
        let cell = freeze(&p, &[0.0], &[p0]).unwrap();
        single_switch(&cell, &grid1(-2.0, 2.0, 81));
    }
    let p2 = builtin_problem("quadcell2d", 3).unwrap();
    let cell = freeze(&p2, &[0.0], &[0.3]).unwrap();
    single_switch(
        &cell,
        &make_box_grid(&[-1.5, -1.5], &[1.5, 1.5], &[21, 21]).unwrap(),
    );
}

fn cubic_error(n: usize) -> (f64, CriticalResult) {
    let p = quadcell();
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let grid = grid1(-2.0, 2.0, n);
    let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(1e-3)).unwrap();
    let src = grid.nearest(&[0.0]);
    let s = r.distances.row(src);
    let mut err: f64 = 0.0;
    for i in 0..grid.len() {
        let y = grid.node(i)[0];
        if y.abs() <= 1.5 + 1e-12 {
            err = err.max((s[i] - quadcell_distance_from_origin(y)).abs());
        }
    }
    (err, r)
}

#[test]
fn intrinsic_distance_is_cubic() {
    let (coarse, _) = cubic_error(81);
    let (fine, r) = cubic_error(161);
    assert!(fine <= 5e-2 && fine < coarse, "{coarse} {fine}");
    let grid = r.grid();
    let i = grid.nearest(&[0.6]);
    let s = r.distances.get(grid.nearest(&[0.0]), i);
    assert!((s - 0.072).abs() <= grid.min_spacing(), "{s}");
}

#[test]
fn aubry_set_sits_at_origin() {
    let (_, r) = cubic_error(161);
    let h = r.grid().min_spacing();
    assert!(!r.aubry_nodes.is_empty());
    for &i in &r.aubry_nodes {
        assert!(r.grid().node(i)[0].abs() <= 2.0 * h + 1e-12);
    }
    assert!(r.gap_ratio >= 3.0, "{}", r.gap_ratio);
    let core = core_sets(&freeze(&quadcell(), &[0.0], &[0.0]).unwrap(), &r);
    assert!(r.aubry_nodes.iter().all(|&i| core.in_k0[i]));
    assert!(r.loop_defect.values.iter().all(|&v| v >= -1e-12));
}

#[test]
fn rotational_critical_value_exceeds_floor() {
    let p = rotational(3);
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let grid = make_box_grid(&[-1.5, -1.5], &[1.5, 1.5], &[21, 21]).unwrap();
    let tol = 1e-3;
    let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(tol)).unwrap();
    assert!(r.c0 > r.floor + 10.0 * tol, "c0 {} floor {}", r.c0, r.floor);
    assert!(r.bisection_steps > 0);
}

#[test]
fn c0_increments_shrink_under_refinement() {
    let p = rotational(3);
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let c: Vec<f64> = [11, 21, 41]
        .iter()
        .map(|&n| {
            let g = make_box_grid(&[-1.5, -1.5], &[1.5, 1.5], &[n, n]).unwrap();
            critical_value(&cell, &g, &CriticalOptions::with_tol(1e-5))
                .unwrap()
                .c0
        })
        .collect();
    let (d1, d2) = ((c[1] - c[0]).abs(), (c[2] - c[1]).abs());
    assert!(d2 < d1, "{c:?}");
}

fn quadcell_wide() -> (ControlProblem, BoxGrid) {
    (quadcell(), grid1(-5.5, 5.5, 221))
}

#[test]
fn bounded_subsolution_certificate() {
    let (p, grid) = quadcell_wide();
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(1e-3)).unwrap();
    let sub = bounded_subsolution(&cell, &r).unwrap();
    let h = grid.min_spacing();
    let rep = verify_viscosity(&sub.field, &cell, r.c0, Mode::Subsolution, 10.0 * h).unwrap();
    assert!(rep.pass, "{rep:?}");
    let k0 = sub.core.k0_nodes();
    let mut bound: f64 = 0.0;
    for &a in &k0 {
        for &b in &k0 {
            bound = bound.max(r.distances.get(a, b).abs());
        }
    }
    for i in 0..grid.len() {
        if !sub.core.in_k0[i] {
            assert_eq!(sub.field.values[i], 0.0);
        }
        assert!(sub.field.values[i].abs() <= bound + 1e-12);
    }
    // Gradient bound by the radius of the largest sublevel set.
    let lip = coercivity_inverse(&cell, &grid, r.c0).unwrap();
    assert!(max_gradient_norm(&sub.field) <= lip + 10.0 * h);
}

#[test]
fn supersolution_certificate() {
    let (p, grid) = quadcell_wide();
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(1e-3)).unwrap();
    let r0 = 5.0;
    let bump = Field::from_fn(&grid, |y| {
        if y[0].abs() > r0 - 1.0 && y[0].abs() < r0 {
            2.0
        } else {
            0.0
        }
    });
    let w = build_supersolution(&cell, &r, &bump, 1.0, r0).unwrap();
    assert_eq!(w.m0, 2.0);
    assert!(w.postconditions_hold(), "{w:?}");
    for i in 0..grid.len() {
        if grid.node(i)[0].abs() <= r0 {
            assert!(w.field.values[i] >= bump.values[i]);
        }
    }
    let h = grid.min_spacing();
    let rep = verify_viscosity(&w.field, &cell, r.c0, Mode::Supersolution, 10.0 * h).unwrap();
    assert!(rep.pass, "{rep:?}");

    let flat = Field::from_fn(&grid, |_| 0.0);
    let w0 = build_supersolution(&cell, &r, &flat, 1.0, r0).unwrap();
    assert!(w0.min_value > 0.0 && w0.dominates_margin > 0.0);

    let bad = Field::from_fn(&grid, |_| 1.0);
    assert!(matches!(
        build_supersolution(&cell, &r, &bad, 1.0, r0),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn weighted_distance_properties() {
    let (p, grid) = quadcell_wide();
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(1e-3)).unwrap();
    let s = r.distances.row(r.y0);
    let plain = weighted_distance(&cell, &r, 5.0, 1.0, r.y0).unwrap();
    assert_eq!(plain.values, s.to_vec());
    let heavy = weighted_distance(&cell, &r, 5.0, 3.0, r.y0).unwrap();
    for i in 0..grid.len() {
        assert!(heavy.values[i] >= s[i]);
        if grid.node(i)[0].abs() <= 2.0 {
            assert_eq!(heavy.values[i], s[i]);
        }
    }
    // Box too tight for the confinement set.
    assert!(matches!(
        weighted_distance(&cell, &r, 4.0, 3.0, r.y0),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn enlarge_box_when_confinement_set_fills_grid() {
    let p = quadcell();
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let grid = grid1(-1.0, 1.0, 41);
    let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(1e-3)).unwrap();
    assert_eq!(bounded_subsolution(&cell, &r).unwrap_err(), Error::EnlargeBox);
}

fn check_metric_axioms(r: &CriticalResult, rng: &mut StdRng) {
    let n = r.distances.n;
    // Johnson reweighting rounds at the scale of the potentials, bounded by max |S|.
    let scale = (0..n)
        .flat_map(|i| r.distances.row(i).iter().copied())
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    for _ in 0..200 {
        let (a, b, c) = (
            rng.random_range(0..n),
            rng.random_range(0..n),
            rng.random_range(0..n),
        );
        let lhs = r.distances.get(a, c);
        let rhs = r.distances.get(a, b) + r.distances.get(b, c);
        assert!(
            lhs <= rhs + 16.0 * f64::EPSILON * scale,
            "{a} {b} {c}: {lhs} > {rhs}"
        );
    }
    for i in 0..n {
        assert_eq!(r.distances.get(i, i), 0.0);
    }
}

#[test]
fn triangle_inequality_and_zero_diagonal() {
    let mut rng = StdRng::seed_from_u64(7);
    let p = quadcell();
    let cell = freeze(&p, &[0.0], &[0.5]).unwrap();
    let r = critical_value(&cell, &grid1(-2.0, 2.0, 81), &CriticalOptions::default()).unwrap();
    check_metric_axioms(&r, &mut rng);
    let rot = rotational(3);
    let cell = freeze(&rot, &[0.0], &[0.2]).unwrap();
    let g = make_box_grid(&[-1.5, -1.5], &[1.5, 1.5], &[21, 21]).unwrap();
    let r = critical_value(&cell, &g, &CriticalOptions::default()).unwrap();
    assert!(r.graph.min_weight() < 0.0);
    check_metric_axioms(&r, &mut rng);
    // Above the critical value the diagonal stays zero as well.
    let above = build_metric_graph(&cell, &g, r.c0 + 0.3).unwrap();
    let ap = slowfast_core::graph::all_pairs(&above).unwrap();
    assert!((0..ap.n).all(|i| ap.get(i, i) == 0.0));
}

#[test]
fn support_function_is_at_least_one_outside_k0() {
    for (p, grid) in [
        (quadcell(), grid1(-4.0, 4.0, 81)),
        (
            builtin_problem("quadcell2d", 3).unwrap(),
            make_box_grid(&[-3.5, -3.5], &[3.5, 3.5], &[29, 29]).unwrap(),
        ),
    ] {
        let cell = freeze(&p, &[0.0], &vec![0.0; p.dim_slow]).unwrap();
        let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(1e-4)).unwrap();
        let core = core_sets(&cell, &r);
        let m = grid.dim();
        let dirs = stencil(m, 1);
        for i in 0..grid.len() {
            if core.in_k0[i] {
                continue;
            }
            let y = grid.node(i);
            for d in &dirs {
                let len = d.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
                let v: Vec<f64> = d.iter().map(|&t| t as f64 / len).collect();
                assert!(support_sigma(&cell, r.c0, &y, &v).unwrap() >= 1.0 - 1e-9);
            }
            for e in r.graph.out_edges(i) {
                let dy = grid
                    .node(e.to)
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
                assert!(e.weight >= dy.sqrt() - 1e-9);
            }
        }
    }
}

fn shells(grid: &BoxGrid) -> [Vec<usize>; 3] {
    let mut out: [Vec<usize>; 3] = Default::default();
    for i in 0..grid.len() {
        let idx = grid.multi_index(i);
        let depth = idx
            .iter()
            .zip(grid.resolution())
            .map(|(&k, &n)| k.min(n - 1 - k))
            .min()
            .unwrap();
        if depth < 3 {
            out[depth].push(i);
        }
    }
    out
}

#[test]
fn distances_grow_towards_the_boundary_both_ways() {
    for (p, grid) in [
        (quadcell(), grid1(-3.0, 3.0, 61)),
        (
            builtin_problem("quadcell2d", 3).unwrap(),
            make_box_grid(&[-2.5, -2.5], &[2.5, 2.5], &[21, 21]).unwrap(),
        ),
    ] {
        let cell = freeze(&p, &[0.0], &vec![0.2; p.dim_slow]).unwrap();
        let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(1e-3)).unwrap();
        let core: Vec<usize> = (0..grid.len())
            .filter(|&i| grid.node(i).iter().all(|v| v.abs() <= 0.5))
            .collect();
        let sh = shells(&grid);
        let from = |y: usize| {
            core.iter()
                .map(|&c| r.distances.get(c, y))
                .fold(f64::INFINITY, f64::min)
        };
        let to = |y: usize| {
            core.iter()
                .map(|&c| r.distances.get(y, c))
                .fold(f64::INFINITY, f64::min)
        };
        for f in [&from as &dyn Fn(usize) -> f64, &to] {
            let per: Vec<f64> = sh
                .iter()
                .map(|s| s.iter().map(|&y| f(y)).fold(f64::INFINITY, f64::min))
                .collect();
            // Shell 0 is outermost.
            assert!(per[0] > per[1] && per[1] > per[2], "{per:?}");
            let inner = core.iter().map(|&y| f(y)).fold(f64::NEG_INFINITY, f64::max);
            assert!(per[2] > inner);
        }
    }
}

#[test]
fn shortest_paths_stay_in_confinement_ball() {
    let p = builtin_problem("quadcell2d", 3).unwrap();
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let grid = make_box_grid(&[-3.0, -3.0], &[3.0, 3.0], &[25, 25]).unwrap();
    let r = critical_value(&cell, &grid, &CriticalOptions::with_tol(1e-3)).unwrap();
    let core: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.node(i).iter().all(|v| v.abs() <= 0.5))
        .collect();
    let radius = confinement_radius(&r, &core);
    assert!(radius < 3.0);
    let norm = |i: usize| grid.node(i).iter().map(|v| v * v).sum::<f64>().sqrt();
    for &s in &core {
        let (_, pred) = shortest_paths(&r.graph, &[s]).unwrap();
        for &t in &core {
            let mut k = t;
            while k != s {
                assert!(norm(k) <= radius + 1e-12);
                k = pred[k];
            }
        }
    }
}

#[test]
fn distance_field_is_coercive() {
    let p = quadcell();
    let cell = freeze(&p, &[0.0], &[0.0]).unwrap();
    let grid = grid1(-2.0, 2.0, 81);
    let g = build_metric_graph(&cell, &grid, 0.0).unwrap();
    let d = distance_field(&g, &[40]).unwrap();
    let core_max = (30..=50).map(|i| d.values[i]).fold(0.0, f64::max);
    assert!(d.values[0] > core_max && d.values[80] > core_max);
    let all: Vec<usize> = (0..grid.len()).collect();
    let z = distance_field(&g, &all).unwrap();
    assert!(z.values.iter().all(|&v| v == 0.0));
}
