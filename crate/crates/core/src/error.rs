//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NIfTI header in {path}: {reason}")]
    MalformedHeader { path: String, reason: String },

    #[error("unsupported NIfTI datatype code {code} in {path}")]
    UnsupportedDatatype { path: String, code: i16 },

    #[error("dimension mismatch in {path}: {reason}")]
    DimensionMismatch { path: String, reason: String },

    #[error("oblique geometry in {path}: only axis-aligned volumes are supported")]
    ObliqueGeometry { path: String },

    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("vector field convention mismatch: expected {expected}, got {got}")]
    ConventionMismatch { expected: String, got: String },

    #[error("label {0} is empty in the mask")]
    EmptyLabel(u16),

    #[error("empty mask")]
    EmptyMask,

    #[error("skeleton graph error: {0}")]
    SkeletonGraph(String),

    #[error("degenerate centerline: {0}")]
    DegenerateCenterline(String),

    #[error("surface construction error: {0}")]
    Surface(String),

    #[error("surface topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("field inversion failed: {residual_voxels} voxels exceed 0.5 mm residual ({percent:.2}% > 1%)")]
    InversionDiverged { residual_voxels: usize, percent: f64 },

    #[error("wave fit error: {0}")]
    WaveFit(String),

    #[error("phantom spec error: {0}")]
    PhantomSpec(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("qa error: {0}")]
    Qa(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("stage '{stage}'{} failed: {source}", organ.as_ref().map(|o| format!(" (organ {o})")).unwrap_or_default())]
    Stage {
        stage: String,
        organ: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wrap with pipeline stage context (stage name, optional organ).
    pub fn in_stage(self, stage: &str, organ: Option<&str>) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            organ: organ.map(|s| s.to_string()),
            source: Box::new(self),
        }
    }
}
