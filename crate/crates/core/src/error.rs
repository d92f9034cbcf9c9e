use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate pose: {0}")]
    DegeneratePose(&'static str),
    #[error("frame mismatch: expected {expected:?}, got {actual:?}")]
    FrameMismatch {
        expected: crate::skeleton::Frame,
        actual: crate::skeleton::Frame,
    },
    #[error("need at least 4 correspondences, got {0}")]
    InsufficientPoints(usize),
    #[error("degenerate point configuration (singular value ratio {0:e})")]
    DegenerateConfiguration(f64),
    #[error("cannot normalize homography: top-left entry {0:e} is too small")]
    NormalizationFailure(f64),
    #[error("singular matrix: {0}")]
    SingularMatrix(&'static str),
    #[error("window [{start}, {end}] out of range for {len} frames")]
    OutOfRange { start: i64, end: i64, len: usize },
    #[error("need at least {k} poses for k-means, got {n}")]
    TooFewPoses { n: usize, k: usize },
    #[error("training labels contain fewer than two distinct classes")]
    DegenerateLabels,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("model has no training data")]
    EmptyModel,
    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("no finite-energy path reaches frame {frame}")]
    Infeasible { frame: usize },
    #[error("exact solver state table too large: {states} states at frame {frame} (limit {limit})")]
    StateExplosion {
        frame: usize,
        states: usize,
        limit: usize,
    },
    #[error("brute force enumeration too large: {0} paths")]
    TooLarge(u128),
    #[error("infeasible path at frame {frame}: {reason}")]
    InfeasiblePath { frame: usize, reason: &'static str },
    #[error("no training poses carry the {0} label")]
    EmptyLabel(&'static str),
    #[error("invalid motion script: {0}")]
    Script(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Coarse category used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DegeneratePose(_)
            | Error::DegenerateConfiguration(_)
            | Error::NormalizationFailure(_)
            | Error::SingularMatrix(_)
            | Error::DegenerateLabels
            | Error::Infeasible { .. }
            | Error::InfeasiblePath { .. }
            | Error::StateExplosion { .. }
            | Error::TooLarge(_) => ErrorKind::Degenerate,
            _ => ErrorKind::Data,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DegeneratePose(_) => "DegeneratePose",
            Error::FrameMismatch { .. } => "FrameMismatch",
            Error::InsufficientPoints(_) => "InsufficientPoints",
            Error::DegenerateConfiguration(_) => "DegenerateConfiguration",
            Error::NormalizationFailure(_) => "NormalizationFailure",
            Error::SingularMatrix(_) => "SingularMatrix",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::TooFewPoses { .. } => "TooFewPoses",
            Error::DegenerateLabels => "DegenerateLabels",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::EmptyModel => "EmptyModel",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::Infeasible { .. } => "Infeasible",
            Error::StateExplosion { .. } => "StateExplosion",
            Error::TooLarge(_) => "TooLarge",
            Error::InfeasiblePath { .. } => "InfeasiblePath",
            Error::EmptyLabel(_) => "EmptyLabel",
            Error::Script(_) => "ScriptError",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Io { .. } => "Io",
            Error::Parse { .. } => "Parse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Degenerate,
}
