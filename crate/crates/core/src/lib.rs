//! Self-supervised 3D traversability estimation with a proxy bank.
//!
//! The crate is organised around the training pipeline:
//!
//! - [`pointcloud`]: scenes, the scene text format, synthetic terrain, KNN and episode sampling.
//! - [`encoder`]: local geometric features, the embedding MLP and its two heads, with analytic gradients.
//! - [`proxybank`]: multi-proxy class similarity, pseudo-labels, membership, EM prototypes and re-initialisation.
//! - [`losses`]: regression, BCE, SoftTriple-style proxy losses, the unsupervised loss and their combinations.
//! - [`trainer`]: Adam, episodic training epochs and the full training driver.
//! - [`eval`]: masked inference, TPE and IoU metrics, reports.
//! - [`cli`]: the `travmetric` command line.

pub mod checkpoint;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod losses;
pub mod pointcloud;
pub mod proxybank;
pub mod trainer;

pub use error::{Error, Result};

/// The single random generator type used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate-wide generator from a seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
