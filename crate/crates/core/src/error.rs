use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The model failed validation.
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    /// Tendon tangents are undefined because two pulleys overlap.
    #[error("tendon geometry error: pulleys on `{first}` and `{second}` overlap")]
    PulleyOverlap { first: String, second: String },

    /// A waypoint names a body that is not part of the sole.
    #[error("unknown body `{0}`")]
    UnknownBody(String),

    /// The integrator produced a non-finite value.
    #[error("solver diverged at t = {time:.6} s on coordinate `{coordinate}`")]
    Divergence { time: f64, coordinate: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("xml error: {0}")]
    Xml(String),
}

impl Error {
    /// Process exit status for the command-line tool: 1 for domain
    /// violations, 2 for input problems, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::InvalidModel(_) | Error::PulleyOverlap { .. } | Error::UnknownBody(_) => 1,
            Error::Divergence { .. } => 3,
            Error::Parse { .. } | Error::Usage(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Xml(_) => 2,
        }
    }
}
