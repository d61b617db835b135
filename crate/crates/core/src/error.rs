use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible density: could not place node {index} with separation {min_separation} m after {attempts} attempts")]
    InfeasibleDensity {
        index: usize,
        min_separation: f64,
        attempts: usize,
    },

    #[error("underdetermined: {0}")]
    Underdetermined(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("parallel bearings for victim {victim}")]
    ParallelBearings { victim: usize },

    #[error("link {src}->{dst} is inside reference distance ({distance} m < {ref_dist} m)")]
    InsideReferenceDistance {
        src: usize,
        dst: usize,
        distance: f64,
        ref_dist: f64,
    },

    #[error("insufficient for differencing: victim {victim} has {count} rescuer observation(s)")]
    InsufficientForDifferencing { victim: usize, count: usize },

    #[error("unlocalizable configuration: {0}")]
    Unlocalizable(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid too large: {cells} cells exceeds the limit of {limit}")]
    GridTooLarge { cells: u64, limit: u64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("missing sweep data: {0}")]
    MissingSweepData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the CLI: 2 config, 3 precondition or
    /// degeneracy, 4 runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::UnknownKey(_) | Error::Parse(_) => 2,
            Error::InfeasibleDensity { .. }
            | Error::Underdetermined(_)
            | Error::DegenerateGeometry(_)
            | Error::ParallelBearings { .. }
            | Error::InsideReferenceDistance { .. }
            | Error::InsufficientForDifferencing { .. }
            | Error::Unlocalizable(_)
            | Error::Precondition(_)
            | Error::InvalidInput(_)
            | Error::ShapeMismatch(_)
            | Error::GridTooLarge { .. }
            | Error::MissingSweepData(_) => 3,
            Error::Io(_) | Error::Json(_) => 4,
        }
    }
}
