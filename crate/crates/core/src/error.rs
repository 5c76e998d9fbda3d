use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse for mollification: axis {axis} has {dims} nodes (need at least 8)")]
    GridTooCoarse { axis: usize, dims: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("no boundary: the domain is fully periodic")]
    NoBoundary,

    #[error("under-resolved kernel: radius {radius} is below the admissible floor {floor}")]
    UnderResolved { radius: f64, floor: f64 },

    #[error("margin violation at {} node(s), first offenders {:?}", .nodes.len(), &.nodes[..nodes.len().min(8)])]
    MarginViolation { nodes: Vec<usize> },

    #[error("domain too small for margins; largest feasible margin is {max_feasible}")]
    DomainTooSmall { max_feasible: f64 },

    #[error("zero-width transition between inner and outer region")]
    ZeroWidthTransition,

    #[error("impermeability violated: max |u.n| on walls is {max_normal}")]
    ImpermeabilityViolated { max_normal: f64 },

    #[error("boundary shell under-resolved: {planes} grid plane(s) strictly inside, need at least 3")]
    ShellUnderResolved { planes: usize },

    #[error("missing pressure field")]
    MissingPressure,

    #[error("CFL violation: {reason}; admissible dt is {admissible_dt}")]
    Cfl { reason: String, admissible_dt: f64 },

    #[error("not enough ladder rungs: {got} (need at least {need})")]
    TooFewRungs { got: usize, need: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("field file format: {0}")]
    Format(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
