//! Uniform box grids and nodal fields.
//!
//! Nodes are ordered row-major: the last axis varies fastest. Node coordinates are
//! measured from the nearer end of the axis, so boxes symmetric about zero give
//! exactly symmetric coordinates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::Error;

/// Maximum total dimension handled by [`interpolate`].
pub const MAX_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    spacing: Vec<f64>,
}

pub fn make_box_grid(lower: &[f64], upper: &[f64], nodes: &[usize]) -> Result<BoxGrid, Error> {
    if lower.len() != upper.len() || lower.len() != nodes.len() || lower.is_empty() {
        return Err(Error::Dimension(format!(
            "bounds and resolution lengths differ ({}, {}, {})",
            lower.len(),
            upper.len(),
            nodes.len()
        )));
    }
    if lower.len() > MAX_DIM {
        return Err(Error::Dimension(format!("grid dimension above {MAX_DIM}")));
    }
    for axis in 0..lower.len() {
        let (lo, hi) = (lower[axis], upper[axis]);
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::DegenerateBounds {
                axis,
                lower: lo,
                upper: hi,
            });
        }
        if nodes[axis] < 2 {
            return Err(Error::TooFewNodes {
                axis,
                nodes: nodes[axis],
            });
        }
    }
    let spacing = (0..lower.len())
        .map(|k| (upper[k] - lower[k]) / ((nodes[k] - 1) as f64))
        .collect();
    Ok(BoxGrid {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        resolution: nodes.to_vec(),
        spacing,
    })
}

impl BoxGrid {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Coordinate of index `i` on `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let n = self.resolution[axis] - 1;
        let w = self.upper[axis] - self.lower[axis];
        // Measured from the nearer end so symmetric boxes give symmetric nodes.
        if 2 * i <= n {
            self.lower[axis] + w * (i as f64) / (n as f64)
        } else {
            self.upper[axis] - w * ((n - i) as f64) / (n as f64)
        }
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.resolution[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Row-major stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.resolution[axis + 1..].iter().product()
    }

    pub fn multi_index_into(&self, mut flat: usize, out: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            out[k] = flat % self.resolution[k];
            flat /= self.resolution[k];
        }
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.multi_index_into(flat, &mut out);
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.resolution)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for k in (0..self.dim()).rev() {
            let i = rem % self.resolution[k];
            rem /= self.resolution[k];
            out[k] = self.coord(k, i);
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(flat, &mut out);
        out
    }

    /// Neighbour of `flat` shifted by `offset` (in index units), if inside.
    pub fn shifted(&self, flat: usize, offset: &[i64]) -> Option<usize> {
        let mut rem = flat;
        let mut out = 0usize;
        let mut mult = 1usize;
        for k in (0..self.dim()).rev() {
            let n = self.resolution[k];
            let i = (rem % n) as i64 + offset[k];
            rem /= n;
            if i < 0 || i >= n as i64 {
                return None;
            }
            out += (i as usize) * mult;
            mult *= n;
        }
        Some(out)
    }

    /// Whether `flat` lies on the boundary of the box.
    pub fn on_boundary(&self, flat: usize) -> bool {
        let mut rem = flat;
        for k in (0..self.dim()).rev() {
            let n = self.resolution[k];
            let i = rem % n;
            rem /= n;
            if i == 0 || i == n - 1 {
                return true;
            }
        }
        false
    }

    /// Index of the nearest node to `point` (coordinates clamped into the box).
    pub fn nearest(&self, point: &[f64]) -> usize {
        let mut flat = 0usize;
        for k in 0..self.dim() {
            let n = self.resolution[k];
            let t = (point[k] - self.lower[k]) / self.spacing[k];
            let i = if t.is_nan() {
                0
            } else {
                libm::round(t).clamp(0.0, (n - 1) as f64) as usize
            };
            flat = flat * n + i;
        }
        flat
    }

    /// Cartesian product: axes of `self` first, then those of `other`.
    pub fn product(&self, other: &BoxGrid) -> Result<BoxGrid, Error> {
        let cat = |a: &[f64], b: &[f64]| [a, b].concat();
        make_box_grid(
            &cat(&self.lower, &other.lower),
            &cat(&self.upper, &other.upper),
            &[&self.resolution[..], &other.resolution[..]].concat(),
        )
    }
}

/// Nodal values on a grid; `+inf` marks unreachable nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: BoxGrid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: BoxGrid, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn from_fn(grid: &BoxGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut p = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.node_into(i, &mut p);
                f(&p)
            })
            .collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Multilinear interpolation of `values` (laid out on `grid`) at `point`,
/// with coordinates clamped into the box. Corners with zero weight are skipped,
/// so `+inf` nodes only contaminate cells they actually touch.
pub fn interpolate_values(grid: &BoxGrid, values: &[f64], point: &[f64]) -> f64 {
    let d = grid.dim();
    let mut base = 0usize;
    let mut frac = [0.0f64; MAX_DIM];
    let mut stride = [0usize; MAX_DIM];
    let mut s = 1usize;
    for k in (0..d).rev() {
        stride[k] = s;
        s *= grid.resolution[k];
    }
    for k in 0..d {
        let n = grid.resolution[k];
        let lo = grid.lower[k];
        let hi = grid.upper[k];
        let p = point[k].clamp(lo, hi);
        let t = (p - lo) / grid.spacing[k];
        let mut i = libm::floor(t) as usize;
        if i > n - 2 {
            i = n - 2;
        }
        let mut r = t - i as f64;
        r = r.clamp(0.0, 1.0);
        frac[k] = r;
        base += i * stride[k];
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = base;
        for k in 0..d {
            if corner >> k & 1 == 1 {
                w *= frac[k];
                idx += stride[k];
            } else {
                w *= 1.0 - frac[k];
            }
        }
        if w != 0.0 {
            acc += w * values[idx];
        }
    }
    acc
}

pub fn interpolate(field: &Field, point: &[f64]) -> f64 {
    interpolate_values(&field.grid, &field.values, point)
}

/// Central differences in the interior, one-sided on the boundary.
pub fn gradient(field: &Field, node: usize) -> Vec<f64> {
    let g = &field.grid;
    let idx = g.multi_index(node);
    (0..g.dim())
        .map(|k| {
            let n = g.resolution[k];
            let st = g.stride(k);
            let h = g.spacing[k];
            let v = &field.values;
            if idx[k] == 0 {
                (v[node + st] - v[node]) / h
            } else if idx[k] == n - 1 {
                (v[node] - v[node - st]) / h
            } else {
                (v[node + st] - v[node - st]) / (2.0 * h)
            }
        })
        .collect()
}
