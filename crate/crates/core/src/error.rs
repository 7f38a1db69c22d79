use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// Every variant renders as a single line so the CLI can print it verbatim as
/// a machine-parseable reason.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sequence too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("zero variance in {0} input")]
    ZeroVariance(&'static str),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("constant image has no usable spectrum")]
    ConstantImage,

    #[error("motion excursion {excursion:.2} px exceeds scene margin {margin:.2} px")]
    SceneMargin { excursion: f64, margin: f64 },

    #[error("motion rate {motion_hz:.1} Hz below required {required_hz:.1} Hz")]
    RateDeficit { motion_hz: f64, required_hz: f64 },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("registration diverged at level {level} iteration {iteration}: error {error:.6} > {previous:.6}")]
    Divergence {
        level: usize,
        iteration: usize,
        error: f64,
        previous: f64,
    },

    #[error("rolling-shutter video required, got global shutter")]
    GlobalShutter,

    #[error("schema mismatch: template {expected}, features {got}")]
    SchemaMismatch { expected: String, got: String },

    #[error("degenerate classes: {0}")]
    DegenerateClasses(String),

    #[error("modality mismatch: {0}")]
    ModalityMismatch(String),

    #[error("test set has no {0} cases")]
    MissingClass(&'static str),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("output directory {0} is not empty (use --force)")]
    OutputNotEmpty(PathBuf),

    #[error("output file {0} exists (use --force)")]
    OutputExists(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_frame(self, frame: usize) -> Self {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }

    /// A short stable category name, used for CLI exit reasons and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::TooShort { .. } => "too_short",
            Error::ZeroVariance(_) => "zero_variance",
            Error::InvalidTrace(_) => "invalid_trace",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config",
            Error::DimensionMismatch(..) => "dimension_mismatch",
            Error::ConstantImage => "constant_image",
            Error::SceneMargin { .. } => "scene_margin",
            Error::RateDeficit { .. } => "rate_deficit",
            Error::Frame { source, .. } => source.kind(),
            Error::Divergence { .. } => "divergence",
            Error::GlobalShutter => "global_shutter",
            Error::SchemaMismatch { .. } => "schema_mismatch",
            Error::DegenerateClasses(_) => "degenerate_classes",
            Error::ModalityMismatch(_) => "modality_mismatch",
            Error::MissingClass(_) => "missing_class",
            Error::Unknown { .. } => "unknown",
            Error::Parse { .. } => "parse",
            Error::OutputNotEmpty(_) => "output_not_empty",
            Error::OutputExists(_) => "output_exists",
            Error::Io { .. } => "io",
        }
    }
}
