//! Dense two-phase simplex for small linear programs.
//!
//! Solves `max c.x` subject to `A x <= b`, `x >= 0`. Pivoting follows Bland's
//! rule, so degenerate problems terminate.

use alloc::vec;
use alloc::vec::Vec;

const EPS: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

struct Tableau {
    m: usize,
    n: usize,
    basis: Vec<isize>,
    nonbasis: Vec<isize>,
    d: Vec<Vec<f64>>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, s: usize) {
        let inv = 1.0 / self.d[r][s];
        let (m, n) = (self.m, self.n);
        for i in 0..m + 2 {
            if i == r {
                continue;
            }
            let f = self.d[i][s] * inv;
            if f == 0.0 {
                continue;
            }
            for j in 0..n + 2 {
                if j != s {
                    let t = self.d[r][j] * f;
                    self.d[i][j] -= t;
                }
            }
        }
        for j in 0..n + 2 {
            if j != s {
                self.d[r][j] *= inv;
            }
        }
        for i in 0..m + 2 {
            if i != r {
                self.d[i][s] *= -inv;
            }
        }
        self.d[r][s] = inv;
        core::mem::swap(&mut self.basis[r], &mut self.nonbasis[s]);
    }

    fn run(&mut self, phase: u8) -> bool {
        let x = if phase == 1 { self.m + 1 } else { self.m };
        let (m, n) = (self.m, self.n);
        loop {
            let mut s: Option<usize> = None;
            for j in 0..=n {
                if phase == 2 && self.nonbasis[j] == -1 {
                    continue;
                }
                if self.d[x][j] < -EPS && s.is_none_or(|k| self.nonbasis[j] < self.nonbasis[k]) {
                    s = Some(j);
                }
            }
            let Some(s) = s else { return true };
            let mut r: Option<usize> = None;
            for i in 0..m {
                if self.d[i][s] < EPS {
                    continue;
                }
                r = match r {
                    None => Some(i),
                    Some(k) => {
                        let a = self.d[i][n + 1] / self.d[i][s];
                        let b = self.d[k][n + 1] / self.d[k][s];
                        if a < b || (a == b && self.basis[i] < self.basis[k]) {
                            Some(i)
                        } else {
                            Some(k)
                        }
                    }
                };
            }
            let Some(r) = r else { return false };
            self.pivot(r, s);
        }
    }
}

/// `a` is row-major with `b.len()` rows and `c.len()` columns.
pub fn maximize(a: &[f64], b: &[f64], c: &[f64]) -> LpResult {
    let m = b.len();
    let n = c.len();
    debug_assert_eq!(a.len(), m * n);
    let mut d = vec![vec![0.0; n + 2]; m + 2];
    for i in 0..m {
        d[i][..n].copy_from_slice(&a[i * n..(i + 1) * n]);
        d[i][n] = -1.0;
        d[i][n + 1] = b[i];
    }
    for j in 0..n {
        d[m][j] = -c[j];
    }
    d[m + 1][n] = 1.0;
    let mut t = Tableau {
        m,
        n,
        basis: (0..m).map(|i| (n + i) as isize).collect(),
        nonbasis: (0..n).map(|j| j as isize).chain([-1]).collect(),
        d,
    };
    if m > 0 {
        let mut r = 0;
        for i in 1..m {
            if t.d[i][n + 1] < t.d[r][n + 1] {
                r = i;
            }
        }
        if t.d[r][n + 1] < -EPS {
            t.pivot(r, n);
            if !t.run(1) || t.d[m + 1][n + 1] < -EPS * (1.0 + max_abs(b)) {
                return LpResult::Infeasible;
            }
            for i in 0..m {
                if t.basis[i] == -1 {
                    let mut s = 0;
                    for j in 1..=n {
                        if t.d[i][j] < t.d[i][s] || (t.d[i][j] == t.d[i][s] && t.nonbasis[j] < t.nonbasis[s])
                        {
                            s = j;
                        }
                    }
                    t.pivot(i, s);
                }
            }
        }
    }
    if !t.run(2) {
        return LpResult::Unbounded;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] >= 0 && (t.basis[i] as usize) < n {
            x[t.basis[i] as usize] = t.d[i][n + 1];
        }
    }
    LpResult::Optimal {
        value: t.d[m][n + 1],
        x,
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, t| a.max(t.abs()))
}
