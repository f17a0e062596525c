//! Coded distributed matrix multiplication with unequal error protection.
//!
//! The product `C = A B` is split into sub-products `C_np = A_n B_p` by
//! partitioning `A` into row blocks and `B` into column blocks. Blocks are
//! ranked by norm into importance levels, and workers receive random linear
//! combinations that favour the important sub-products. The crate provides
//! the encoders, an elimination decoder, closed-form loss analytics and a
//! seeded Monte Carlo engine for straggler simulations.

pub mod analytics;
pub mod blockmat;
pub mod coding;
pub mod decode;
pub mod error;
pub mod field;
pub mod latency;
pub mod matio;
pub mod matrix;
pub mod simrun;

pub use error::{Error, Result};
pub use field::{Field, FieldKind, Fp};
pub use matrix::Matrix;
