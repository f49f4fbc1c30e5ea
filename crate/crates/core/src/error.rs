use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate bounds on axis {axis}: lower {lower} is not below upper {upper}")]
    DegenerateBounds { axis: usize, lower: f64, upper: f64 },
    #[error("axis {axis} has {nodes} nodes, at least 2 are required")]
    TooFewNodes { axis: usize, nodes: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty control set")]
    EmptyControlSet,
    #[error("unknown name: {0}")]
    UnknownName(String),
    #[error("expression error: {0}")]
    Expression(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("CFL violation on {what}: ratio {ratio:.6} exceeds 1")]
    Cfl { what: &'static str, ratio: f64 },
    #[error("non-finite value at node {node} after step {step}")]
    NonFinite { node: usize, step: usize },
    #[error("steering failed: miss {miss:.6} exceeds tolerance {tol:.6}")]
    SteeringFailed { miss: f64, tol: f64 },
    #[error("sublevel set is empty")]
    Infeasible,
    #[error("support function is unbounded (controllability deficit)")]
    Unbounded,
    #[error("sublevel set empty at {} point(s), first at {:?}", .0.len(), .0.first())]
    InfeasibleNodes(Vec<Vec<f64>>),
    #[error("graph contains a negative cycle")]
    NegativeCycle,
    #[error("Aubry detection inconclusive (gap ratio {gap_ratio:.3}); refine grid")]
    AubryInconclusive { gap_ratio: f64 },
    #[error("confinement set covers the whole grid; enlarge the y-box")]
    EnlargeBox,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("gradient {p:?} at x = {x:?} leaves the table p-range")]
    GradientOutOfRange { x: Vec<f64>, p: Vec<f64> },
    #[error("table entry at x = {x:?}, p = {p:?} is unusable: {reason}")]
    TableEntry {
        x: Vec<f64>,
        p: Vec<f64>,
        reason: String,
    },
}
