//! CSV files for fields, time slices and effective tables; JSON output.
//!
//! Floats are written in shortest round-trip form, with `inf` and `NaN`
//! spelled out, so files parse back to the same bits.

use std::fs;
use std::path::Path;

use serde::Serialize;
use slowfast_core::{make_box_grid, BoxGrid, EffectiveTable, Field, LimitSolution, ValueFunction};

use crate::AppError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> AppError {
    AppError::Io(format!("{}: {e}", path.display()))
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_rows(
    path: &Path,
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), AppError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path, e))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), AppError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| io_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn num(path: &Path, s: &str) -> Result<f64, AppError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| AppError::Config(format!("{}: '{s}' is not a number", path.display())))
}

/// One row per node: coordinates named `{prefix}1..`, then `value`.
pub fn write_field_csv(path: &Path, field: &Field, prefix: &str) -> Result<(), AppError> {
    let d = field.grid.dim();
    let mut header = names(prefix, d);
    header.push("value".into());
    let rows = (0..field.grid.len()).map(|i| {
        let mut r: Vec<String> = field.grid.node(i).into_iter().map(fmt).collect();
        r.push(fmt(field.values[i]));
        r
    });
    write_rows(path, header, rows)
}

/// Recovers the uniform grid from the coordinate columns.
pub fn read_field_csv(path: &Path) -> Result<Field, AppError> {
    let (header, rows) = read_rows(path)?;
    if header.len() < 2 {
        return Err(AppError::Config(format!(
            "{}: need coordinate and value columns",
            path.display()
        )));
    }
    let d = header.len() - 1;
    let mut coords = Vec::with_capacity(rows.len());
    let mut vals = Vec::with_capacity(rows.len());
    for r in &rows {
        let c: Vec<f64> = r[..d].iter().map(|s| num(path, s)).collect::<Result<_, _>>()?;
        coords.push(c);
        vals.push(num(path, &r[d])?);
    }
    let grid = grid_from_points(path, &coords, d)?;
    let values = scatter(path, &grid, &coords, &vals)?;
    Ok(Field::new(grid, values)?)
}

fn grid_from_points(path: &Path, pts: &[Vec<f64>], d: usize) -> Result<BoxGrid, AppError> {
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    let mut n = Vec::with_capacity(d);
    for k in 0..d {
        let mut axis: Vec<f64> = pts.iter().map(|p| p[k]).collect();
        axis.sort_by(f64::total_cmp);
        axis.dedup();
        if axis.len() < 2 {
            return Err(AppError::Config(format!(
                "{}: axis {} has a single coordinate",
                path.display(),
                k + 1
            )));
        }
        lo.push(axis[0]);
        hi.push(axis[axis.len() - 1]);
        n.push(axis.len());
    }
    Ok(make_box_grid(&lo, &hi, &n)?)
}

fn scatter(path: &Path, grid: &BoxGrid, pts: &[Vec<f64>], vals: &[f64]) -> Result<Vec<f64>, AppError> {
    if pts.len() != grid.len() {
        return Err(AppError::Config(format!(
            "{}: {} rows do not fill a {}-node grid",
            path.display(),
            pts.len(),
            grid.len()
        )));
    }
    let mut out = vec![f64::NAN; grid.len()];
    let mut seen = vec![false; grid.len()];
    for (p, &v) in pts.iter().zip(vals) {
        let i = grid.nearest(p);
        let node = grid.node(i);
        let off = node
            .iter()
            .zip(p)
            .zip(grid.spacing())
            .any(|((a, b), h)| (a - b).abs() > 1e-6 * h);
        if off || seen[i] {
            return Err(AppError::Config(format!(
                "{}: rows are not a uniform grid",
                path.display()
            )));
        }
        seen[i] = true;
        out[i] = v;
    }
    Ok(out)
}

/// Columns `x.., y.., t, value`; every stored slice, or only the last.
pub fn write_value_csv(path: &Path, v: &ValueFunction, last_only: bool) -> Result<(), AppError> {
    let n = v.x_grid.dim();
    let mut header = names("x", n);
    header.extend(names("y", v.y_grid.dim()));
    header.push("t".into());
    header.push("value".into());
    let first = if last_only { v.slices.len() - 1 } else { 0 };
    let rows = (first..v.slices.len()).flat_map(|k| {
        (0..v.grid.len()).map(move |i| {
            let mut r: Vec<String> = v.grid.node(i).into_iter().map(fmt).collect();
            r.push(fmt(v.times[k]));
            r.push(fmt(v.slices[k].values[i]));
            r
        })
    });
    write_rows(path, header, rows)
}

/// Columns `x.., t, value` for every stored slice.
pub fn write_limit_csv(path: &Path, s: &LimitSolution) -> Result<(), AppError> {
    let mut header = names("x", s.x_grid.dim());
    header.push("t".into());
    header.push("value".into());
    let rows = (0..s.slices.len()).flat_map(|k| {
        (0..s.x_grid.len()).map(move |i| {
            let mut r: Vec<String> = s.x_grid.node(i).into_iter().map(fmt).collect();
            r.push(fmt(s.times[k]));
            r.push(fmt(s.slices[k].values[i]));
            r
        })
    });
    write_rows(path, header, rows)
}

/// Columns `x.., p.., c0, bracket, gap_ratio, status`; `bracket` is the
/// final bisection width.
pub fn write_table_csv(path: &Path, t: &EffectiveTable) -> Result<(), AppError> {
    let n = t.x_grid.dim();
    let mut header = names("x", n);
    header.extend(names("p", n));
    for c in ["c0", "bracket", "gap_ratio", "status"] {
        header.push(c.into());
    }
    let np = t.p_grid.len();
    let rows = (0..t.len()).map(|k| {
        let mut r: Vec<String> = t.x_grid.node(k / np).into_iter().map(fmt).collect();
        r.extend(t.p_grid.node(k % np).into_iter().map(fmt));
        r.push(fmt(t.values[k]));
        r.push(fmt(t.bracket_widths[k]));
        r.push(fmt(t.gap_ratios[k]));
        r.push(t.status[k].clone().unwrap_or_else(|| "ok".into()));
        r
    });
    write_rows(path, header, rows)
}

pub fn read_table_csv(path: &Path) -> Result<EffectiveTable, AppError> {
    let (header, rows) = read_rows(path)?;
    if header.len() < 6 || (header.len() - 4) % 2 != 0 {
        return Err(AppError::Config(format!(
            "{}: not an effective table",
            path.display()
        )));
    }
    let n = (header.len() - 4) / 2;
    let mut xs = Vec::new();
    let mut ps = Vec::new();
    let mut recs = Vec::new();
    for r in &rows {
        let x: Vec<f64> = r[..n].iter().map(|s| num(path, s)).collect::<Result<_, _>>()?;
        let p: Vec<f64> = r[n..2 * n]
            .iter()
            .map(|s| num(path, s))
            .collect::<Result<_, _>>()?;
        let status = if r[2 * n + 3] == "ok" {
            None
        } else {
            Some(r[2 * n + 3].clone())
        };
        recs.push((
            num(path, &r[2 * n])?,
            num(path, &r[2 * n + 1])?,
            num(path, &r[2 * n + 2])?,
            status,
        ));
        xs.push(x);
        ps.push(p);
    }
    let xg = grid_from_points(path, &xs, n)?;
    let pg = grid_from_points(path, &ps, n)?;
    let total = xg.len() * pg.len();
    if recs.len() != total {
        return Err(AppError::Config(format!(
            "{}: table is incomplete",
            path.display()
        )));
    }
    let mut values = vec![f64::NAN; total];
    let mut widths = vec![f64::NAN; total];
    let mut gaps = vec![f64::NAN; total];
    let mut status = vec![None; total];
    for ((x, p), rec) in xs.iter().zip(&ps).zip(recs) {
        let k = xg.nearest(x) * pg.len() + pg.nearest(p);
        values[k] = rec.0;
        widths[k] = rec.1;
        gaps[k] = rec.2;
        status[k] = rec.3;
    }
    Ok(EffectiveTable::new(xg, pg, values, widths, gaps, status)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// JSON has no infinity; `None` stands for "no finite value".
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_keeps_bits() {
        let dir = tempfile::tempdir().unwrap();
        let grid = make_box_grid(&[-1.0, 0.0], &[1.0, 0.3], &[5, 4]).unwrap();
        let mut f = Field::from_fn(&grid, |p| p[0] * 0.1 + p[1].sin());
        f.values[3] = f64::INFINITY;
        let path = dir.path().join("f.csv");
        write_field_csv(&path, &f, "y").unwrap();
        let g = read_field_csv(&path).unwrap();
        assert_eq!(g.grid, f.grid);
        assert_eq!(g.values, f.values);
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let xg = make_box_grid(&[-1.0], &[1.0], &[3]).unwrap();
        let pg = make_box_grid(&[-2.0], &[2.0], &[5]).unwrap();
        let v: Vec<f64> = (0..15).map(|k| k as f64 * 0.1).collect();
        let mut status = vec![None; 15];
        status[4] = Some("aubry detection inconclusive, refine grid".to_string());
        let mut vv = v.clone();
        vv[4] = f64::NAN;
        let t = EffectiveTable::new(xg, pg, vv, vec![1e-3; 15], vec![f64::INFINITY; 15], status).unwrap();
        let path = dir.path().join("t.csv");
        write_table_csv(&path, &t).unwrap();
        let back = read_table_csv(&path).unwrap();
        assert_eq!(back.status, t.status);
        assert!(back.values[4].is_nan());
        assert_eq!(back.values[5], t.values[5]);
        assert_eq!(back.gap_ratios[0], f64::INFINITY);
    }
}
