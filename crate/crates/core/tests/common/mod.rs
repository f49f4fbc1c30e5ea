//! Oracles shared by the integration tests. Nothing here calls the library's
//! numerical routines; each function is an independent derivation.
#![allow(dead_code)]

use slowfast_core::{ControlProblem, ControlSet};

/// `H0(y, q) = |p0| + |q| - |y|^2` for the quadcell family (vertex controls
/// attain the max of `-p0 a1 - q a2`).
pub fn quadcell_h0(p0: f64, y: f64, q: f64) -> f64 {
    p0.abs() + q.abs() - y * y
}

/// Critical value of the quadcell cell problem: `min_q H0(y, q) = |p0| - y^2`
/// peaks at `y = 0`, and the constant zero field is critical there.
pub fn quadcell_c0(p0: f64) -> f64 {
    p0.abs()
}

/// `int_0^y s^2 ds` by composite Simpson quadrature of the speed `s^2`.
pub fn quadcell_distance_from_origin(y: f64) -> f64 {
    let n = 2000;
    let h = y.abs() / n as f64;
    let f = |s: f64| s * s;
    let mut acc = f(0.0) + f(y.abs());
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    acc * h / 3.0
}

/// Two-edge loop `0 -> h -> 0` at level `b` for the quadcell with `p0 = 0`:
/// each edge costs `(b + (h/2)^2) h` by the midpoint rule.
pub fn quadcell_origin_loop(b: f64, h: f64) -> f64 {
    2.0 * (b + 0.25 * h * h) * h
}

/// Fast dimension two with a circulating cost term; `H0(y, 0) = -min ell`
/// sits strictly below the critical value.
pub fn rotational(samples: usize) -> ControlProblem {
    let c = ControlSet::lattice(&[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)], samples).unwrap();
    ControlProblem::from_expressions(
        "rotational",
        1,
        2,
        c,
        &["a1"],
        &["a2", "a3"],
        "y1^2 + y2^2 + 0.5*(-y2*a2 + y1*a3)",
        "x^2",
        1.0,
        0.0,
    )
    .unwrap()
}
