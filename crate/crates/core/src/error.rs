use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("duplicate link `{0}`")]
    DuplicateLink(String),
    #[error("nonpositive length {length} on link `{link}`")]
    NonpositiveLength { link: String, length: f64 },
    #[error("nonpositive capacity {capacity} at node `{node}`")]
    NonpositiveCapacity { node: String, capacity: f64 },
    #[error("missing capacity for node `{0}`")]
    MissingCapacity(String),
    #[error("demand assigned to destination `{0}`")]
    DemandAtDestination(String),
    #[error("demand at `{0}`, which is not an origin")]
    DemandAtNonOrigin(String),
    #[error("negative demand rate {rate} at origin `{node}`")]
    NegativeDemand { node: String, rate: f64 },
    #[error("destination `{0}` has no incoming link")]
    DestinationWithoutInflow(String),
    #[error("node `{0}` is not reachable from any origin")]
    UnreachableNode(String),
    #[error("node `{0}` cannot reach the destination")]
    DeadEndNode(String),
    #[error("invalid cost coefficient on `{owner}`: {reason}")]
    InvalidCoefficient { owner: String, reason: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("CFL condition violated: u_max * dt = {lhs} > dx = {dx}")]
    Cfl { lhs: f64, dx: f64 },
    #[error("length of link `{link}` ({length}) is not an integer multiple of dx = {dx}")]
    NonIntegerRefinement { link: String, length: f64, dx: f64 },
    #[error("missing terminal value for node `{0}`")]
    MissingTerminal(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("grids are not nested: {0}")]
    GridNotNested(String),
    #[error("scheme violation: {0}")]
    SchemeViolation(String),
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
