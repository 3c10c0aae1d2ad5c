//! Codebook-free vector quantization toolkit.
//!
//! During training a latent vector is not snapped to a codebook. It is
//! perturbed inside a density-adaptive ball with a Metropolis–Hastings
//! accept/reject step ([`perturb`]), or, in the scalar variant, with bounded
//! per-dimension noise on `[0, 1]` ([`scalar`]). A codebook is produced
//! offline by K-Means++ / Lloyd clustering ([`codebook`]) and used for
//! nearest-neighbor quantization at inference. [`metrics`] provides codebook
//! valid usage (CVU) and the normalization regularizers, and [`source`]
//! generates synthetic latent distributions so every claim can be checked
//! without training a network.
//!
//! [`bench`] ties the pieces into end-to-end experiment pipelines and backs
//! the `vpquant` command-line tool.

pub mod bench;
pub mod codebook;
pub mod density;
pub mod error;
pub mod latent;
pub mod metrics;
pub mod perturb;
pub mod rng;
pub mod scalar;
pub mod source;

pub use codebook::{kmeans_fit, Codebook, KMeansParams, KMeansReport};
pub use density::RadiusParams;
pub use error::{Error, Result};
pub use latent::{LatentVector, SampleQueue, SampleView};
pub use metrics::{cvu, UsageCounts};
pub use perturb::{perturb, PerturbConfig, PerturbOutcome};
pub use scalar::{ActivationKind, FspConfig};
pub use source::SourceSpec;
