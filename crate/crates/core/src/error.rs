use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every part of the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(
        "singular covariance: smallest eigenvalue {min_eigenvalue:e} (largest {max_eigenvalue:e}); \
         increase the ridge"
    )]
    SingularCovariance {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("degenerate projection: {0}")]
    DegenerateProjection(String),

    #[error("cannot form slices: {0}")]
    Slicing(String),

    #[error("fold too small: {0}")]
    FoldSize(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics (ill-conditioned data) rather
    /// than by malformed input or parameters.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCovariance { .. } | Error::DegenerateProjection(_) | Error::Numerical(_)
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
