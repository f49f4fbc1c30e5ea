//! `slowfast` subcommands. Exit codes: 0 success, 1 numerical failure or a
//! failed criterion, 2 usage or configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use slowfast_core::critical::CriticalOptions;
use slowfast_core::effective::limit_dt_bound;
use slowfast_core::hjb::solve_value_function;
use slowfast_core::viscosity::Mode;
use slowfast_core::{
    check_assumptions, critical_value, default_y_halfwidth, freeze, make_box_grid, solve_limit,
    table_diagnostics, tabulate_effective, verify_viscosity, BoxGrid,
};

use crate::config::{load_problem, parse_grid, parse_vec, LoadedProblem};
use crate::harness::{run_convergence, value_function_dt, ConvergenceConfig, Thresholds};
use crate::io::{self, finite};
use crate::AppError;

#[derive(Parser, Debug)]
#[command(
    name = "slowfast",
    version,
    about = "Two-scale optimal control: cell problems, effective Hamiltonians, convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the standing assumptions on a box.
    Audit(AuditArgs),
    /// Critical value, Aubry set and distances of one cell problem.
    Cell(CellArgs),
    /// Tabulate the effective Hamiltonian.
    Effective(EffectiveArgs),
    /// Value function of the perturbed problem at one eps.
    SolveEps(SolveEpsArgs),
    /// Limit equation from a tabulated effective Hamiltonian.
    SolveLimit(SolveLimitArgs),
    /// Full convergence study over an eps ladder.
    Converge(ConvergeArgs),
    /// Discrete viscosity test of a field against a cell problem.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Builtin name or TOML problem file.
    #[arg(long)]
    problem: String,
    /// Slow box as lo,hi per axis.
    #[arg(long, allow_hyphen_values = true)]
    xbox: String,
    /// Fast box as lo,hi per axis.
    #[arg(long, allow_hyphen_values = true)]
    ybox: String,
    #[arg(long, default_value_t = 9)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CellArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    #[arg(long, allow_hyphen_values = true)]
    p0: String,
    /// lo,hi,n per fast axis; a coercivity-based box when omitted.
    #[arg(long, allow_hyphen_values = true)]
    ygrid: Option<String>,
    /// Nodes per axis of the default box.
    #[arg(long, default_value_t = 81)]
    ynodes: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 4.0)]
    kappa: f64,
    #[arg(long, default_value_t = 2.0)]
    min_gap_ratio: f64,
    #[arg(long, default_value_t = 1)]
    stencil: i64,
    /// JSON result; defect and distance CSVs are written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EffectiveArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, allow_hyphen_values = true)]
    xgrid: String,
    #[arg(long, allow_hyphen_values = true)]
    pgrid: String,
    #[arg(long, allow_hyphen_values = true)]
    ygrid: String,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SolveEpsArgs {
    #[arg(long)]
    problem: String,
    #[arg(long)]
    eps: f64,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long, allow_hyphen_values = true)]
    xgrid: String,
    #[arg(long, allow_hyphen_values = true)]
    ygrid: String,
    /// Time step; the largest stable one when omitted.
    #[arg(long)]
    dt: Option<f64>,
    /// Store every n-th step.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SolveLimitArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    problem: String,
    #[arg(long, allow_hyphen_values = true)]
    xgrid: String,
    /// Fast grid for the initial datum `min_y u0`; -2,2,81 per axis by default.
    #[arg(long, allow_hyphen_values = true)]
    ygrid: Option<String>,
    #[arg(long = "T")]
    horizon: f64,
    /// Time step; 0.9 of the stability bound when omitted.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[arg(long)]
    problem: String,
    /// Strictly decreasing list, e.g. 0.4,0.2,0.1.
    #[arg(long)]
    eps: String,
    #[arg(long, allow_hyphen_values = true)]
    xgrid: String,
    #[arg(long, allow_hyphen_values = true)]
    ygrid: String,
    #[arg(long, allow_hyphen_values = true)]
    pgrid: String,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long)]
    t_min: f64,
    #[arg(long, default_value_t = 5)]
    table_x_nodes: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 0.9)]
    cfl: f64,
    #[arg(long, default_value_t = 0.1)]
    max_final_error: f64,
    #[arg(long, default_value_t = 0.1)]
    max_final_oscillation: f64,
    #[arg(long, default_value_t = 0.15)]
    layer_upper: f64,
    #[arg(long, default_value_t = 0.05)]
    layer_lower: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Subsolution,
    Supersolution,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Field CSV on the fast grid.
    #[arg(long)]
    field: PathBuf,
    /// Cell JSON written by `cell`; supplies problem, x0, p0 and c0.
    #[arg(long)]
    cell: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    p0: Option<String>,
    /// Level; defaults to c0 from the cell JSON.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Defaults to ten fast grid spacings.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, AppError> {
    match cmd {
        Command::Audit(a) => audit(a),
        Command::Cell(a) => cell(a),
        Command::Effective(a) => effective(a),
        Command::SolveEps(a) => solve_eps(a),
        Command::SolveLimit(a) => solve_limit_cmd(a),
        Command::Converge(a) => converge(a),
        Command::Verify(a) => verify(a),
    }
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), AppError> {
    match out {
        Some(p) => io::write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| AppError::Io(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn check_dims(lp: &LoadedProblem, x: Option<usize>, y: Option<usize>) -> Result<(), AppError> {
    let p = &lp.problem;
    if x.is_some_and(|d| d != p.dim_slow) || y.is_some_and(|d| d != p.dim_fast) {
        return Err(AppError::Usage(format!(
            "problem '{}' has {} slow and {} fast dimensions",
            p.name, p.dim_slow, p.dim_fast
        )));
    }
    Ok(())
}

fn parse_box(s: &str) -> Result<(Vec<f64>, Vec<f64>), AppError> {
    let v = parse_vec(s)?;
    if v.is_empty() || v.len() % 2 != 0 {
        return Err(AppError::Usage(format!("box '{s}' must be lo,hi pairs")));
    }
    Ok((
        v.iter().step_by(2).copied().collect(),
        v.iter().skip(1).step_by(2).copied().collect(),
    ))
}

#[derive(Serialize)]
struct AuditReport {
    problem: String,
    q0_observed: f64,
    lipschitz_observed: f64,
    controllability_radius: f64,
    coercivity_profile: Vec<(f64, f64)>,
    u0_lower_bound_ok: bool,
    failures: Vec<String>,
    ok: bool,
}

fn audit(a: AuditArgs) -> Result<i32, AppError> {
    let lp = load_problem(&a.problem)?;
    let (xl, xu) = parse_box(&a.xbox)?;
    let (yl, yu) = parse_box(&a.ybox)?;
    check_dims(&lp, Some(xl.len()), Some(yl.len()))?;
    let lower = [xl, yl].concat();
    let upper = [xu, yu].concat();
    let r = check_assumptions(&lp.problem, &lower, &upper, a.samples)?;
    let ok = r.ok();
    emit(
        a.out.as_deref(),
        &AuditReport {
            problem: lp.source,
            q0_observed: r.q0_observed,
            lipschitz_observed: r.lipschitz_observed,
            controllability_radius: r.controllability_radius,
            coercivity_profile: r.coercivity_profile,
            u0_lower_bound_ok: r.u0_lower_bound_ok,
            failures: r.failures,
            ok,
        },
    )?;
    Ok(if ok { 0 } else { 1 })
}

/// JSON written by `cell` and read back by `verify`.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct CellReport {
    pub problem: String,
    pub x0: Vec<f64>,
    pub p0: Vec<f64>,
    pub ygrid: crate::harness::GridInfo,
    pub tol: f64,
    pub c0: f64,
    pub bracket: [f64; 2],
    pub floor: f64,
    pub upper_seed: f64,
    pub aubry_threshold: f64,
    pub aubry_nodes: Vec<Vec<f64>>,
    /// `null` when no loop defect lies above the threshold.
    pub gap_ratio: Option<f64>,
    pub y0: Vec<f64>,
    pub loop_defect_csv_path: String,
    pub distance_csv_path: String,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("cell");
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn cell(a: CellArgs) -> Result<i32, AppError> {
    let lp = load_problem(&a.problem)?;
    let x0 = parse_vec(&a.x0)?;
    let p0 = parse_vec(&a.p0)?;
    check_dims(&lp, Some(x0.len()), None)?;
    let c = freeze(&lp.problem, &x0, &p0)?;
    let yg = match &a.ygrid {
        Some(s) => parse_grid(s)?,
        None => {
            let w = default_y_halfwidth(&c, 21)?;
            let m = lp.problem.dim_fast;
            make_box_grid(&vec![-w; m], &vec![w; m], &vec![a.ynodes; m])?
        }
    };
    check_dims(&lp, None, Some(yg.dim()))?;
    let opts = CriticalOptions {
        tol: a.tol,
        kappa: a.kappa,
        min_gap_ratio: a.min_gap_ratio,
        stencil_radius: a.stencil,
    };
    let r = critical_value(&c, &yg, &opts)?;
    let defect_path = sibling(&a.out, "loop_defect");
    let dist_path = sibling(&a.out, "distance");
    io::write_field_csv(&defect_path, &r.loop_defect, "y")?;
    io::write_field_csv(&dist_path, &r.distance_from_aubry, "y")?;
    let report = CellReport {
        problem: lp.source,
        x0,
        p0,
        ygrid: (&yg).into(),
        tol: a.tol,
        c0: r.c0,
        bracket: [r.bracket.0, r.bracket.1],
        floor: r.floor,
        upper_seed: r.upper_seed,
        aubry_threshold: r.aubry_threshold,
        aubry_nodes: r.aubry_nodes.iter().map(|&i| yg.node(i)).collect(),
        gap_ratio: finite(r.gap_ratio),
        y0: yg.node(r.y0),
        loop_defect_csv_path: defect_path.display().to_string(),
        distance_csv_path: dist_path.display().to_string(),
    };
    io::write_json(&a.out, &report)?;
    println!("c0 = {} (bracket width {:e})", r.c0, r.bracket_width());
    Ok(0)
}

#[derive(Serialize)]
struct EffectiveSummary {
    entries: usize,
    failed: usize,
    convexity_violation: f64,
    max_increment: f64,
    max_bracket_width: f64,
    min_gap_ratio: Option<f64>,
}

fn effective(a: EffectiveArgs) -> Result<i32, AppError> {
    let lp = load_problem(&a.problem)?;
    let xg = parse_grid(&a.xgrid)?;
    let pg = parse_grid(&a.pgrid)?;
    let yg = parse_grid(&a.ygrid)?;
    check_dims(&lp, Some(xg.dim()), Some(yg.dim()))?;
    let t = tabulate_effective(&lp.problem, &xg, &pg, &yg, a.tol)?;
    io::write_table_csv(&a.out, &t)?;
    let d = table_diagnostics(&t);
    emit(
        None,
        &EffectiveSummary {
            entries: t.len(),
            failed: d.failed,
            convexity_violation: d.convexity_violation,
            max_increment: d.max_increment,
            max_bracket_width: d.max_bracket_width,
            min_gap_ratio: finite(d.min_gap_ratio),
        },
    )?;
    Ok(if d.failed == 0 { 0 } else { 1 })
}

fn solve_eps(a: SolveEpsArgs) -> Result<i32, AppError> {
    let lp = load_problem(&a.problem)?;
    let xg = parse_grid(&a.xgrid)?;
    let yg = parse_grid(&a.ygrid)?;
    check_dims(&lp, Some(xg.dim()), Some(yg.dim()))?;
    if !(a.eps > 0.0) {
        return Err(AppError::Usage("eps must be positive".into()));
    }
    let dt =
        a.dt.unwrap_or_else(|| value_function_dt(&lp.problem, a.eps, &xg, &yg));
    let v = if a.stride == 1 {
        solve_value_function(&lp.problem, a.eps, &xg, &yg, a.horizon, dt)?
    } else {
        let grid = xg.product(&yg)?;
        let n = xg.dim();
        let init = (0..grid.len())
            .map(|i| {
                let q = grid.node(i);
                lp.problem.u0(&q[..n], &q[n..])
            })
            .collect();
        slowfast_core::hjb::solve_value_function_from(
            &lp.problem,
            a.eps,
            &xg,
            &yg,
            a.horizon,
            dt,
            init,
            a.stride,
        )?
    };
    io::write_value_csv(&a.out, &v, false)?;
    Ok(0)
}

fn default_ygrid(m: usize) -> Result<BoxGrid, AppError> {
    Ok(make_box_grid(&vec![-2.0; m], &vec![2.0; m], &vec![81; m])?)
}

fn solve_limit_cmd(a: SolveLimitArgs) -> Result<i32, AppError> {
    let lp = load_problem(&a.problem)?;
    let table = io::read_table_csv(&a.table)?;
    let xg = parse_grid(&a.xgrid)?;
    let yg = match &a.ygrid {
        Some(s) => parse_grid(s)?,
        None => default_ygrid(lp.problem.dim_fast)?,
    };
    check_dims(&lp, Some(xg.dim()), Some(yg.dim()))?;
    let dt =
        a.dt.unwrap_or_else(|| 0.9 * limit_dt_bound(&table, &xg).min(a.horizon.max(xg.min_spacing())));
    let s = solve_limit(&lp.problem, &table, &xg, &yg, a.horizon, dt)?;
    io::write_limit_csv(&a.out, &s)?;
    Ok(0)
}

fn converge(a: ConvergeArgs) -> Result<i32, AppError> {
    let lp = load_problem(&a.problem)?;
    let eps = parse_vec(&a.eps)?;
    let xg = parse_grid(&a.xgrid)?;
    let yg = parse_grid(&a.ygrid)?;
    let pg = parse_grid(&a.pgrid)?;
    check_dims(&lp, Some(xg.dim()), Some(yg.dim()))?;
    let mut cfg = ConvergenceConfig::new(eps, xg, yg, pg, a.horizon, a.t_min);
    cfg.table_x_nodes = a.table_x_nodes;
    cfg.table_tol = a.tol;
    cfg.limit_cfl = a.cfl;
    cfg.thresholds = Thresholds {
        final_interior_error: a.max_final_error,
        final_oscillation: a.max_final_oscillation,
        layer_upper: a.layer_upper,
        layer_lower: a.layer_lower,
    };
    let run = run_convergence(&lp.problem, lp.builtin, &cfg)?;
    let dir = &a.out_dir;
    io::write_table_csv(&dir.join("table.csv"), &run.table)?;
    io::write_limit_csv(&dir.join("limit.csv"), &run.limit)?;
    for (k, v) in run.values.iter().enumerate() {
        io::write_value_csv(&dir.join(format!("value_{k}.csv")), v, true)?;
    }
    io::write_json(&dir.join("report.json"), &run.report)?;
    for c in &run.report.criteria {
        println!(
            "{} {} = {} ({} {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.threshold
        );
    }
    if run.report.mode == "informative" {
        println!("informative mode: trends reported, no pass/fail verdict");
        return Ok(0);
    }
    Ok(if run.report.pass { 0 } else { 1 })
}

#[derive(Serialize)]
struct VerifyOutput {
    mode: &'static str,
    level: f64,
    tol: f64,
    pass: bool,
    worst_violation: f64,
    location: Option<Vec<f64>>,
    checked: usize,
}

fn verify(a: VerifyArgs) -> Result<i32, AppError> {
    let field = io::read_field_csv(&a.field)?;
    let (problem, x0, p0, c0) = match &a.cell {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
            let r: CellReport = serde_json::from_str(&text)
                .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
            (r.problem, r.x0, r.p0, Some(r.c0))
        }
        None => {
            let need = |o: &Option<String>, n: &str| {
                o.clone()
                    .ok_or_else(|| AppError::Usage(format!("--{n} is required without --cell")))
            };
            (
                need(&a.problem, "problem")?,
                parse_vec(&need(&a.x0, "x0")?)?,
                parse_vec(&need(&a.p0, "p0")?)?,
                None,
            )
        }
    };
    let lp = load_problem(&problem)?;
    check_dims(&lp, Some(x0.len()), Some(field.grid.dim()))?;
    let b =
        a.b.or(c0)
            .ok_or_else(|| AppError::Usage("--b is required without --cell".into()))?;
    let tol = a.tol.unwrap_or(10.0 * field.grid.max_spacing());
    let c = freeze(&lp.problem, &x0, &p0)?;
    let (mode, name) = match a.mode {
        ModeArg::Subsolution => (Mode::Subsolution, "subsolution"),
        ModeArg::Supersolution => (Mode::Supersolution, "supersolution"),
    };
    let r = verify_viscosity(&field, &c, b, mode, tol)?;
    emit(
        a.out.as_deref(),
        &VerifyOutput {
            mode: name,
            level: b,
            tol,
            pass: r.pass,
            worst_violation: r.worst_violation,
            location: r.location,
            checked: r.checked,
        },
    )?;
    Ok(if r.pass { 0 } else { 1 })
}
