use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("site {site} out of range for a {num_sites}-site chain")]
    SiteOutOfRange { site: usize, num_sites: usize },

    #[error("site {0} listed more than once")]
    DuplicateSite(usize),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("{requested} sites requested, at most {cap} supported")]
    TooManySites { requested: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("imaginary-time evolution did not converge after {steps} steps (last |dE| = {last_delta:e})")]
    NotConverged { steps: usize, last_delta: f64 },

    #[error("outcome {outcome} has zero amplitude in the ancilla state")]
    ZeroAmplitudeOutcome { outcome: String },

    #[error("post-measurement state has vanishing norm")]
    DegenerateState,

    #[error("imaginary residue {value:e} exceeds tolerance {tol:e}")]
    ImaginaryResidue { value: f64, tol: f64 },

    #[error("chain of {num_sites} sites unsupported here (max {max})")]
    UnsupportedSize { num_sites: usize, max: usize },

    #[error("degenerate fit: {points} usable points, need at least 3")]
    DegenerateFit { points: usize },

    #[error("radius {radius} too large for a {num_sites}-site chain")]
    RadiusTooLarge { radius: usize, num_sites: usize },

    #[error("label has {found} bits, expected {expected}")]
    LabelMismatch { expected: usize, found: usize },

    #[error("malformed label {0:?}")]
    MalformedLabel(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("unsupported format version {found:?} (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },

    #[error("checksum mismatch")]
    Checksum,

    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize },

    #[error("mirror coordinates out of domain (max |coord| = {magnitude})")]
    OutOfDomain { magnitude: f64 },

    #[error("empty input")]
    EmptyInput,
}

impl Error {
    /// Stable variant name for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SiteOutOfRange { .. } => "site_out_of_range",
            Error::DuplicateSite(_) => "duplicate_site",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::TooManySites { .. } => "too_many_sites",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidDensityMatrix(_) => "invalid_density_matrix",
            Error::NotConverged { .. } => "not_converged",
            Error::ZeroAmplitudeOutcome { .. } => "zero_amplitude_outcome",
            Error::DegenerateState => "degenerate_state",
            Error::ImaginaryResidue { .. } => "imaginary_residue",
            Error::UnsupportedSize { .. } => "unsupported_size",
            Error::DegenerateFit { .. } => "degenerate_fit",
            Error::RadiusTooLarge { .. } => "radius_too_large",
            Error::LabelMismatch { .. } => "label_mismatch",
            Error::MalformedLabel(_) => "malformed_label",
            Error::Io { .. } => "io",
            Error::Malformed(_) => "malformed",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Checksum => "checksum",
            Error::TrainingDiverged { .. } => "training_diverged",
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::EmptyInput => "empty_input",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
