//! Label-conditioned diffusion model over small density matrices. Samples
//! live in mirror coordinates, so every generated matrix is Hermitian,
//! unit-trace and positive by construction.

pub mod checkpoint;
pub mod diffusion;
pub mod mirror;
pub mod network;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use diffusion::{
    evaluate, evaluate_weighted, generate, generate_coords, train, train_on, weighted_mean, Architecture, DiffusionConfig,
    Metrics, Schedule, Standardization, TrainedModel, TrainingData,
};
pub use mirror::{from_mirror, gell_mann_basis, to_mirror, MirrorPoint, DEFAULT_EIGEN_CLAMP};
pub use network::{AdamConfig, ScoreNetwork};
