//! Statevector simulation of a critical Ising chain coupled to a measured
//! ancilla chain, labeled RDM datasets, locality analyses, and a
//! label-conditioned diffusion model for the resulting RDMs.

// `!(x > 0.0)` guards are written to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod genmodel;
pub mod ising;
mod persist;
pub mod protocol;
pub mod qstate;

pub use analysis::{EntryKind, EntrySelector, VarianceProfile, Weighting};
pub use dataset::{DatasetConfig, GenerationMode, RdmDataset, RdmRecord, TruncatedLabel};
pub use error::{Error, Result};
pub use genmodel::{Architecture, DiffusionConfig, MirrorPoint, TrainedModel};
pub use ising::{EvolutionConfig, GroundState};
pub use protocol::{MeasurementProtocol, OutcomeBitstring, ProtocolConfig};
pub use qstate::{DensityMatrix, Pauli, PauliString, StateVector};
