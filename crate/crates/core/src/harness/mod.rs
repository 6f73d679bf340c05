//! Synthetic scenes, file I/O and batch experiments around the optimizer.

pub mod experiment;
pub mod manifest;
pub mod mixture;
pub mod recipes;
pub mod report;
pub mod wav;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use experiment::{run_experiment, separate_supervised, Inputs, Separation};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use mixture::{synthesize_mixture, Mixture, MixtureSpec, NoiseSpec};
pub use recipes::Recipe;
pub use report::{ExperimentReport, SeparationReport};
pub use wav::{read_wav, write_wav};

/// Independent random stream for `(seed, index, tag)`.
pub(crate) fn stream(seed: u64, index: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&tag.to_le_bytes());
    key[24..].copy_from_slice(b"harness\0");
    ChaCha8Rng::from_seed(key)
}
