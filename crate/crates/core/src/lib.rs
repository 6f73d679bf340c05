//! Quantum-inspired genetic algorithm for band-mask source separation.
//!
//! Genomes are vectors of qubit amplitude pairs; each decodes to per-band
//! gains that turn into ratio masks over a mixture spectrogram. Fitness
//! combines SDR, SIR and SAR of the masked outputs with a penalty on
//! correlated outputs.

pub mod config;
pub mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod objective;
pub mod postproc;
pub mod qiga;
pub mod qstate;
pub mod sepmodel;

pub use config::Config;
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use metrics::{EvalTriple, FitnessWeights, MetricFlags};
pub use qiga::{Genome, QigaConfig, QigaOutcome};
pub use qstate::{QubitPair, StateVector4};
pub use sepmodel::{MaskParams, SeparatedSources};
