use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{column}`")]
    MissingColumn { column: String },

    /// `row` is 1-based and counts the header as row 1.
    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("category `{category}` of `{attr}` has {count} samples, need at least {required}")]
    SmallCategory {
        attr: String,
        category: String,
        count: usize,
        required: usize,
    },

    #[error("category `{category}` of `{attr}` has degenerate spread (sigma = {sigma:e})")]
    DegenerateGroup {
        attr: String,
        category: String,
        sigma: f64,
    },

    #[error("category `{category}` was not seen when fitting `{attr}`")]
    UnseenCategory { attr: String, category: String },

    #[error("linear system is numerically singular (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("no finite candidate among {evaluated} evaluated")]
    NoFiniteCandidate { evaluated: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self.root(),
            Error::Singular { .. }
                | Error::Diverged { .. }
                | Error::NoFiniteCandidate { .. }
                | Error::DegenerateGroup { .. }
                | Error::Undefined(_)
        )
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
