//! Recognition-reconstruction network (RRN): a dense sigmoid autoencoder
//! trained on digits rendered onto a synthetic retina, plus the analyses
//! used to study what its 32-unit encoding layer represents.
//!
//! - [`dataset`], [`retina`], [`glyphs`], [`sources`]: stimuli
//! - [`network`], [`checkpoint`]: the autoencoder and its persistence
//! - [`development`]: synapse and firing statistics over training
//! - [`property`], [`population`], [`tsne`]: encoding-layer analyses
//! - [`perturbation`]: modulation sweeps and lesions of single units
//! - [`curriculum`]: novel-structure learning and forgetting runs

pub mod checkpoint;
pub mod curriculum;
pub mod dataset;
pub mod development;
mod error;
pub mod export;
pub mod glyphs;
pub mod network;
pub mod perturbation;
pub mod population;
pub mod property;
pub mod retina;
pub mod sources;
pub mod stats;
pub mod tsne;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use error::{Result, RrnError};

/// The crate-wide deterministic generator.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
