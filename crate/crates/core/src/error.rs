use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed model, grid or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A sampled structural assumption failed during model validation.
    #[error("validation failure: {field} at {point:?}: {reason}")]
    Validation {
        field: String,
        point: Vec<f64>,
        reason: String,
    },

    #[error("time step {dt} exceeds the stability bound {bound}")]
    CflViolated { dt: f64, bound: f64 },

    #[error("non-finite value at time level {level}, node {node} ({x:?}), regime {regime}")]
    Divergence {
        level: usize,
        node: usize,
        x: Vec<f64>,
        regime: usize,
    },

    #[error("query ({t}, {x:?}) lies outside the grid hull")]
    Extrapolation { t: f64, x: Vec<f64> },

    /// Invariant broken inside the solver (e.g. the switching projection did
    /// not stabilize, which means some switching cost is not positive).
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}
