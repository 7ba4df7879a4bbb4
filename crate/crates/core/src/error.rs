use thiserror::Error;

pub type Result<T, E = LandauError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LandauError {
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("coefficient model `{model}` failed validation at v = {at:?}: {reason}")]
    ModelInvalid {
        model: String,
        at: Vec<f64>,
        reason: String,
    },

    #[error("integrator blew up at step {step}: non-finite position for particle {particle}")]
    IntegratorBlowup { step: u64, particle: usize },

    #[error("observer failed at step {step}: {message}")]
    Observer { step: u64, message: String },

    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("invalid measure: {0}")]
    Measure(String),

    #[error("size mismatch or non-uniform weights: {0}; use w2_general")]
    NotAssignment(String),

    #[error("cost matrix of {entries} entries exceeds the cap of {cap}")]
    CostMatrixTooLarge { entries: usize, cap: usize },

    #[error("transport solver failed: {0}")]
    Solver(String),

    #[error("quadrature did not converge in cell {cell}")]
    Quadrature { cell: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LandauError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        LandauError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LandauError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
