use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown speaker_role `{value}`")]
    UnknownRole { line: usize, value: String },

    #[error("line {line}: duplicate index {index} in case `{case_id}`")]
    DuplicateIndex {
        line: usize,
        case_id: String,
        index: u32,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("outcome undefined for unit `{0}`: no responding justice turn")]
    UndefinedOutcome(String),

    #[error("no honorific introduction for advocate `{advocate}` in case `{case_id}`")]
    NoIntroduction { case_id: String, advocate: String },

    #[error("missing table cell for {model} (m={m}, t={t}, x={x}) in fold {fold}")]
    MissingCell {
        model: String,
        fold: usize,
        m: usize,
        t: u8,
        x: usize,
    },

    #[error(
        "IRLS for {model} (fold {fold}) did not converge after {iterations} iterations \
         (last max coefficient change {max_change:e})"
    )]
    NonConvergence {
        model: String,
        fold: usize,
        iterations: usize,
        max_change: f64,
    },

    #[error("singular system while fitting {0}")]
    Singular(String),

    #[error("{dropped} of {total} bootstrap replicates dropped (collapsed covariate levels)")]
    BootstrapDropped { dropped: usize, total: usize },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for this error class: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) => 2,
            Error::NonConvergence { .. } | Error::Singular(_) | Error::BootstrapDropped { .. } => 4,
            _ => 3,
        }
    }
}
