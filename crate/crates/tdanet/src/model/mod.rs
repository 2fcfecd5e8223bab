//! The separation network: audio encoder/decoder, multi-scale feature ladder,
//! global-attention module, local-attention decoder, mask head, and the
//! weight-shared unfolding that ties them together.
//!
//! A constructed model is read-only during inference; training mutates the
//! parameter store in place and must be owned by a single trainer. Tensor
//! handles are not `Send`, so concurrent evaluation uses one model per
//! thread.

mod checkpoint;
mod config;
mod counts;
mod net;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TrainerState};
pub use config::{Fusion, GaInput, ModelConfig, PadPlan};
pub use counts::{count_macs, count_params, MacsBreakdown};
pub use net::TdaNet;
pub use params::ParamStore;

use sha2::{Digest, Sha256};

/// Derives a purpose-specific stream seed from the root seed, so model
/// initialization, data shuffling, and dropout each consume independent
/// random streams.
pub fn derive_seed(root: u64, purpose: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
