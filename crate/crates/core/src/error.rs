use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("class index {index} out of range for {classes} classes")]
    Index { index: usize, classes: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("teacher distribution was tempered at T={teacher} but the distillation config uses T={config}")]
    TemperatureMismatch { teacher: f64, config: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate templates: {0}")]
    DegenerateTemplates(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("target entropy {target} is outside [{low}, {high}] spanned by the bracket")]
    Bracket { target: f64, low: f64, high: f64 },

    #[error("average entropy is not increasing on the bracket: H({t_low}) = {h_low} > H({t_high}) = {h_high}")]
    NonMonotone {
        t_low: f64,
        h_low: f64,
        t_high: f64,
        h_high: f64,
    },

    #[error("invalid dataset spec: {0}")]
    Spec(String),

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
