use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("self-loop ({0}, {0}) is not a valid edge")]
    SelfLoop(usize),

    #[error("degenerate spectrum: largest Laplacian eigenvalue {0:e} (graph has no edges?)")]
    DegenerateSpectrum(f64),

    #[error("z-shift {shift} out of range for {n_nodes} nodes")]
    ShiftOutOfRange { shift: i64, n_nodes: usize },

    #[error("non-finite loss at step {step} (lr {lr:e}, grad norm {grad_norm:e})")]
    NonFinite { step: usize, lr: f64, grad_norm: f64 },

    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Failures reading the binary feature and checkpoint files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated payload: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl FormatError {
    /// Stable numeric code per failure kind.
    pub fn code(&self) -> u8 {
        match self {
            FormatError::BadMagic { .. } => 1,
            FormatError::VersionMismatch { .. } => 2,
            FormatError::Truncated { .. } => 3,
            FormatError::Malformed(_) => 4,
            FormatError::Io(_) => 5,
        }
    }
}
