//! Fiber link parameters, perturbation kernels and the differentiable
//! additive-multiplicative channel.

pub mod am;
pub mod context;
pub mod kernels;
pub mod link;

pub use am::{add_noise, am_distort, am_distort_tape, am_propagate};
pub use context::{assemble_context, required_k, ContextLayout};
pub use kernels::{choose_memory, generate_kernels, generate_kernels_with, AmKernels, KernelConfig};
pub use link::{db_to_lin, dbm_to_w, lin_to_db, LinkParams};
