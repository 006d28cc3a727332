//! Feature selection for high-dimensional classification by evolutionary
//! multitasking: several filter rankings cut at their knee points generate
//! related low-dimensional tasks, and a competitive swarm optimizer evolves
//! all tasks jointly, transferring winner knowledge between them.
//!
//! The numeric kernels are generic over the scalar type ([`num::Real`]);
//! the aliases below pin the common `f64` and `f32` instantiations.

pub mod data;
pub mod engine;
pub mod error;
pub mod filters;
pub mod harness;
pub mod knn;
pub mod num;

pub use error::{Error, Result};

pub type Dataset = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type FeatureWeights = filters::FeatureWeights<f64>;
pub type Particle = engine::Particle<f64>;
pub type RunResult = engine::RunResult<f64>;
pub type ErrorReport = knn::ErrorReport<f64>;

/// Derive an independent sub-seed from a base seed and a tag (splitmix64).
pub(crate) fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
