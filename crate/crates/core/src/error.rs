use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cone not convex: theta_max = {theta_max} exceeds pi/2")]
    ConeNotConvex { theta_max: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field does not live on this grid")]
    GridMismatch,

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("not star-shaped: u = {value} at node {node}")]
    NotStarShaped { node: usize, value: f64 },

    #[error("mean convexity lost: {quantity} = {value:e} at node {node}")]
    MeanConvexityLost {
        node: usize,
        quantity: &'static str,
        value: f64,
    },

    #[error("blowup detected at t = {t}: step size {dt:e} underflowed")]
    BlowupDetected { t: f64, dt: f64 },

    #[error("eps too large: |eps| = {eps} must be < 1")]
    EpsTooLarge { eps: f64 },

    #[error("initial data not mean convex: min H = {min_h:e}")]
    InitialNotMeanConvex { min_h: f64 },

    #[error("initial data violates the Neumann condition: |d_theta u| = {residual:e}")]
    InitialNotCompatible { residual: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("negative time value {0}")]
    NegativeTime(f64),

    #[error("trajectory unusable: {0}")]
    Trajectory(String),

    #[error("nothing verified: the check list is empty")]
    NothingVerified,

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
