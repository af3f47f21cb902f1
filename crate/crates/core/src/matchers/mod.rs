//! Invertible maps between information bits and amplitude sequences.

pub mod adm;
pub mod ess;

pub use adm::{adm_decode, adm_encode, AdmOutput, ConditionalDistribution, DistributionSource};
pub use ess::EssTrellis;
