//! TOML problem files and command-line value parsing.
//!
//! A problem file either names a builtin:
//!
//! ```toml
//! [problem]
//! name = "quadcell"
//! ```
//!
//! or spells the model out:
//!
//! ```toml
//! [problem]
//! name = "drift"
//! bound_f = 1.0            # optional, sampled when absent
//!
//! [problem.dims]
//! N = 1
//! M = 1
//!
//! [problem.expressions]
//! f = ["a1"]
//! g = ["a2"]
//! ell = "y^2 + 0.1*a1^2"
//! u0 = "x^2"
//!
//! [problem.control]
//! bounds = [[-1.0, 1.0], [-1.0, 1.0]]
//! samples_per_axis = 5
//! ```

use std::path::Path;

use serde::Deserialize;
use slowfast_core::problem::BUILTIN_NAMES;
use slowfast_core::{builtin_problem, check_assumptions, make_box_grid, BoxGrid, ControlProblem, ControlSet};

use crate::AppError;

/// Control samples per axis for builtins when the file does not say.
pub const DEFAULT_SAMPLES: usize = 5;
/// Half-width of the box on which missing constants are estimated.
pub const ESTIMATE_RADIUS: f64 = 2.0;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    problem: ProblemSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    name: Option<String>,
    dims: Option<Dims>,
    expressions: Option<Expressions>,
    control: Option<ControlSection>,
    bound_f: Option<f64>,
    lipschitz: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Dims {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Expressions {
    f: Vec<String>,
    g: Vec<String>,
    ell: String,
    u0: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlSection {
    bounds: Option<Vec<[f64; 2]>>,
    samples_per_axis: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub problem: ControlProblem,
    /// Builtins carry closed-form oracles; others run in informative mode.
    pub builtin: bool,
    /// Builtin name or file path as given.
    pub source: String,
}

/// `source` is a builtin name or a path to a TOML problem file.
pub fn load_problem(source: &str) -> Result<LoadedProblem, AppError> {
    if BUILTIN_NAMES.contains(&source) {
        return Ok(LoadedProblem {
            problem: builtin_problem(source, DEFAULT_SAMPLES)?,
            builtin: true,
            source: source.to_string(),
        });
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(AppError::Config(format!(
            "'{source}' is neither a builtin ({}) nor an existing file",
            BUILTIN_NAMES.join(", ")
        )));
    }
    let text =
        std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("cannot read {source}: {e}")))?;
    let mut loaded = parse_problem(&text)?;
    loaded.source = source.to_string();
    Ok(loaded)
}

pub fn parse_problem(text: &str) -> Result<LoadedProblem, AppError> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| AppError::Config(format!("invalid problem file: {e}")))?;
    let sec = file.problem;
    let samples = sec
        .control
        .as_ref()
        .and_then(|c| c.samples_per_axis)
        .unwrap_or(DEFAULT_SAMPLES);

    let Some(exprs) = sec.expressions else {
        let name = sec
            .name
            .ok_or_else(|| AppError::Config("problem needs a builtin name or expressions".into()))?;
        if !BUILTIN_NAMES.contains(&name.as_str()) {
            return Err(AppError::Config(format!("unknown builtin problem '{name}'")));
        }
        return Ok(LoadedProblem {
            problem: builtin_problem(&name, samples)?,
            builtin: true,
            source: name,
        });
    };

    let dims = sec
        .dims
        .ok_or_else(|| AppError::Config("problem.dims with N and M is required".into()))?;
    let bounds = sec
        .control
        .and_then(|c| c.bounds)
        .ok_or_else(|| AppError::Config("problem.control.bounds is required".into()))?;
    let bounds: Vec<(f64, f64)> = bounds.iter().map(|b| (b[0], b[1])).collect();
    let controls = ControlSet::lattice(&bounds, samples)?;
    let name = sec.name.unwrap_or_else(|| "custom".to_string());
    let f: Vec<&str> = exprs.f.iter().map(String::as_str).collect();
    let g: Vec<&str> = exprs.g.iter().map(String::as_str).collect();
    let build = |bf: f64, lip: f64| {
        ControlProblem::from_expressions(
            &name,
            dims.n,
            dims.m,
            controls.clone(),
            &f,
            &g,
            &exprs.ell,
            &exprs.u0,
            bf,
            lip,
        )
    };
    let mut problem = build(sec.bound_f.unwrap_or(0.0), sec.lipschitz.unwrap_or(0.0))?;
    if sec.bound_f.is_none() || sec.lipschitz.is_none() {
        let d = dims.n + dims.m;
        let report = check_assumptions(&problem, &vec![-ESTIMATE_RADIUS; d], &vec![ESTIMATE_RADIUS; d], 9)?;
        problem = build(
            sec.bound_f.unwrap_or(report.q0_observed),
            sec.lipschitz.unwrap_or(report.lipschitz_observed),
        )?;
    }
    Ok(LoadedProblem {
        problem,
        builtin: false,
        source: name,
    })
}

/// `lo,hi,n` per axis, concatenated for several axes.
pub fn parse_grid(s: &str) -> Result<BoxGrid, AppError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.is_empty() || !parts.len().is_multiple_of(3) {
        return Err(AppError::Usage(format!("grid '{s}' must be lo,hi,n triples")));
    }
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut n = Vec::new();
    for t in parts.chunks(3) {
        lo.push(parse_f64(t[0])?);
        hi.push(parse_f64(t[1])?);
        n.push(
            t[2].parse::<usize>()
                .map_err(|_| AppError::Usage(format!("node count '{}' is not an integer", t[2])))?,
        );
    }
    Ok(make_box_grid(&lo, &hi, &n)?)
}

pub fn parse_vec(s: &str) -> Result<Vec<f64>, AppError> {
    s.split(',').map(|t| parse_f64(t.trim())).collect()
}

fn parse_f64(s: &str) -> Result<f64, AppError> {
    s.parse::<f64>()
        .map_err(|_| AppError::Usage(format!("'{s}' is not a number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_by_name_and_file() {
        let a = load_problem("quadcell").unwrap();
        assert!(a.builtin);
        let b = parse_problem("[problem]\nname = \"quadcell2d\"\n[problem.control]\nsamples_per_axis = 3\n")
            .unwrap();
        assert_eq!(b.problem.dim_fast, 2);
        assert_eq!(b.problem.num_controls(), 27);
    }

    #[test]
    fn expression_problem_estimates_constants() {
        let text = r#"
[problem]
name = "drift"
[problem.dims]
N = 1
M = 1
[problem.expressions]
f = ["0.5*a1"]
g = ["a2"]
ell = "y^2"
u0 = "x^2"
[problem.control]
bounds = [[-1.0, 1.0], [-1.0, 1.0]]
samples_per_axis = 3
"#;
        let p = parse_problem(text).unwrap();
        assert!(!p.builtin);
        assert_eq!(p.problem.bound_f, 0.5);
        assert_eq!(p.problem.lipschitz, 0.0);
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        assert!(matches!(load_problem("nope"), Err(AppError::Config(_))));
        assert!(matches!(
            parse_problem("[problem]\nname = \"x\"\n"),
            Err(AppError::Config(_))
        ));
        assert!(matches!(
            parse_problem("[problem]\nbogus = 1\n"),
            Err(AppError::Config(_))
        ));
        assert!(matches!(parse_grid("0,1"), Err(AppError::Usage(_))));
    }

    #[test]
    fn grids_and_vectors() {
        let g = parse_grid("-2,2,5,-1,1,3").unwrap();
        assert_eq!(g.resolution(), &[5, 3]);
        assert_eq!(parse_vec("0.5, -1").unwrap(), vec![0.5, -1.0]);
    }
}
