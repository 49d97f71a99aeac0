//! Hybrid convolutional network with a clonal selection feature layer.
//!
//! A compact CNN (convolution → max-pool → fully connected feature layer →
//! output) is trained on scarce data while a clonal selection layer between
//! the feature layer and the output layer multiplies every batch's feature
//! vectors by affinity-proportional cloning, inverse-affinity mutation and
//! crossover. The evolved per-class memory pools then drive a two-phase
//! immune classifier (match count plus avidity).
//!
//! Modules, bottom-up:
//! - [`tensor`]: dense arrays and the convolution / pooling / dense kernels
//! - [`nn`]: the layer stack, backpropagation and SGD training
//! - [`clonal`]: affinity, cloning, mutation, crossover, memory pools, CLONALG
//! - [`mnist`]: IDX parsing and stratified sampling
//! - [`classifier`]: count/avidity classification and new-class seeding
//! - [`harness`]: experiment drivers, CSV and SVG output

pub mod classifier;
pub mod clonal;
pub mod error;
pub mod harness;
pub mod mnist;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};

/// Mixes a base seed with a path of integers into an independent stream
/// seed (SplitMix64 finalizer applied per component).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut z = base;
    for &p in path {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
