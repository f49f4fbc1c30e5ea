use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use slowfast_core::hjb::{core_nodes, solve_value_function_from, step_count};
use slowfast_core::*;

fn grid1(lo: f64, hi: f64, n: usize) -> BoxGrid {
    make_box_grid(&[lo], &[hi], &[n]).unwrap()
}

/// `(max(|x| - t, 0))^2`: the minimum of `z^2` over `|z - x| <= t`.
fn limit_oracle(x: f64, t: f64) -> f64 {
    (x.abs() - t).max(0.0).powi(2)
}

fn cfl_dt(eps: f64, xg: &BoxGrid, yg: &BoxGrid) -> f64 {
    (eps * yg.min_spacing()).min(xg.min_spacing())
}

#[test]
fn quadcell_value_near_limit() {
    let p = builtin_problem("quadcell", 5).unwrap();
    let xg = grid1(-2.0, 2.0, 81);
    let yg = grid1(-2.0, 2.0, 81);
    let eps = 0.2;
    let v = solve_value_function(&p, eps, &xg, &yg, 0.5, cfl_dt(eps, &xg, &yg)).unwrap();
    let u = v.value_at(&[1.0], &[0.0], 0.5);
    assert!((u - limit_oracle(1.0, 0.5)).abs() <= 0.08, "{u}");
}

#[test]
fn slices_respect_lower_bound_and_grow_in_y() {
    let set = ControlSet::lattice(&[(-1.0, 1.0), (-1.0, 1.0)], 3).unwrap();
    let p = ControlProblem::from_expressions(
        "shifted",
        1,
        1,
        set,
        &["a1"],
        &["a2"],
        "y^2 - 0.5",
        "x^2 + y^2",
        1.0,
        0.0,
    )
    .unwrap();
    let xg = grid1(-1.0, 1.0, 21);
    let yg = grid1(-2.0, 2.0, 41);
    let eps = 0.25;
    let v = solve_value_function(&p, eps, &xg, &yg, 0.4, cfl_dt(eps, &xg, &yg)).unwrap();
    let (p0, q0) = (-0.5, 1.0);
    for (t, s) in v.times.iter().zip(&v.slices) {
        assert!(s.values.iter().all(|&u| u >= p0 * t - q0));
    }
    let quadcell = builtin_problem("quadcell", 5).unwrap();
    let w = solve_value_function(&quadcell, eps, &xg, &yg, 0.4, cfl_dt(eps, &xg, &yg)).unwrap();
    let ny = yg.len();
    let core = core_nodes(&yg, 0.5);
    let shell: Vec<usize> = (0..ny).filter(|&i| yg.node(i)[0].abs() >= 1.6 - 1e-12).collect();
    for vf in [&v, &w] {
        let s = vf.slices.last().unwrap();
        for ix in 0..xg.len() {
            let inner = core
                .iter()
                .map(|&i| s.values[ix * ny + i])
                .fold(f64::MIN, f64::max);
            let outer = shell
                .iter()
                .map(|&i| s.values[ix * ny + i])
                .fold(f64::MAX, f64::min);
            assert!(outer > inner, "x node {ix}: {outer} <= {inner}");
        }
    }
}

#[test]
fn oscillation_in_y_shrinks_with_eps() {
    let p = builtin_problem("quadcell", 5).unwrap();
    let xg = grid1(-2.0, 2.0, 41);
    let yg = grid1(-2.0, 2.0, 81);
    let at_origin: Vec<f64> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&eps| {
            let v = solve_value_function(&p, eps, &xg, &yg, 0.5, cfl_dt(eps, &xg, &yg)).unwrap();
            let osc = y_oscillation(&v, v.slices.len() - 1).unwrap();
            if eps == 0.4 {
                let o0 = y_oscillation(&v, 0).unwrap();
                let expect = 1.0 - (-1.0f64).exp();
                assert!(o0.values.iter().all(|&o| (o - expect).abs() < 1e-12));
            }
            osc.values[xg.nearest(&[0.0])]
        })
        .collect();
    assert!(
        at_origin[0] > at_origin[1] && at_origin[1] > at_origin[2],
        "{at_origin:?}"
    );
}

#[test]
fn y_independent_problem_has_zero_oscillation() {
    let set = ControlSet::lattice(&[(-1.0, 1.0), (-1.0, 1.0)], 3).unwrap();
    let p = ControlProblem::from_expressions("flat", 1, 1, set, &["a1"], &["a2"], "a1^2", "x^2", 1.0, 0.0)
        .unwrap();
    let xg = grid1(-1.0, 1.0, 11);
    let yg = grid1(-1.0, 1.0, 11);
    let v = solve_value_function(&p, 0.5, &xg, &yg, 0.3, 0.05).unwrap();
    for k in 0..v.slices.len() {
        assert!(y_oscillation(&v, k)
            .unwrap()
            .values
            .iter()
            .all(|&o| o.abs() <= 1e-14));
    }
}

#[test]
fn slow_displacement_bounded_by_eps_q0_t() {
    let mut rng = StdRng::seed_from_u64(11);
    for name in ["quadcell", "quadcell2d"] {
        let p = builtin_problem(name, 3).unwrap();
        let q0 = p.bound_f;
        for _ in 0..500 {
            let eps = rng.random_range(0.01..1.0);
            let dt = rng.random_range(0.001..0.2);
            let steps = rng.random_range(1..60);
            let x0 = [rng.random_range(-2.0..2.0)];
            let y0: Vec<f64> = (0..p.dim_fast).map(|_| rng.random_range(-2.0..2.0)).collect();
            let controls: Vec<usize> = (0..steps)
                .map(|_| rng.random_range(0..p.num_controls()))
                .collect();
            let tr = simulate_trajectory(&p, eps, &x0, &y0, &controls, dt).unwrap();
            for (t, x) in tr.times.iter().zip(&tr.xs) {
                assert!((x[0] - x0[0]).abs() <= eps * q0 * t + 1e-6);
            }
        }
    }
}

#[test]
fn steering_reaches_target() {
    let p = builtin_problem("quadcell", 5).unwrap();
    let h = 0.05;
    for eps in [0.1, 0.05] {
        let opts = SteerOptions::new(h);
        for (y, z) in [(1.0, -1.0), (-1.5, 0.3), (0.2, 1.9)] {
            let r = steer_fast(&p, eps, &[0.0], &[y], &[z], 3.0, 0.01, &opts).unwrap();
            assert!(r.miss <= 5.0 * eps + 2.0 * h);
        }
    }
    // Reachability bound: unit controllability radius needs time 2 to travel 2.
    let err = steer_fast(
        &p,
        0.05,
        &[0.0],
        &[1.0],
        &[-1.0],
        1.5,
        0.01,
        &SteerOptions::new(h),
    );
    assert!(matches!(err, Err(Error::SteeringFailed { .. })));
}

#[test]
fn step_count_reaches_horizon() {
    for (t, dt) in [(0.5, 0.0125), (0.5, 0.007), (1.0, 1.0)] {
        let (n, d) = step_count(t, dt);
        assert!(d <= dt * (1.0 + 1e-9));
        assert!((n as f64 * d - t).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn value_recursion_preserves_order(bumps in proptest::collection::vec(0.0f64..1.0, 11 * 11), eps in 0.1f64..1.0) {
        let p = builtin_problem("quadcell", 3).unwrap();
        let xg = grid1(-1.0, 1.0, 11);
        let yg = grid1(-1.0, 1.0, 11);
        let grid = xg.product(&yg).unwrap();
        let a: Vec<f64> = (0..grid.len()).map(|i| { let q = grid.node(i); p.u0(&q[..1], &q[1..]) }).collect();
        let b: Vec<f64> = a.iter().zip(&bumps).map(|(u, d)| u + d).collect();
        let dt = cfl_dt(eps, &xg, &yg);
        let va = solve_value_function_from(&p, eps, &xg, &yg, 0.3, dt, a, 1).unwrap();
        let vb = solve_value_function_from(&p, eps, &xg, &yg, 0.3, dt, b, 1).unwrap();
        for (sa, sb) in va.slices.iter().zip(&vb.slices) {
            prop_assert!(sa.values.iter().zip(&sb.values).all(|(x, y)| x <= y));
        }
    }
}
