//! Dense-network training where gradient products are computed by simulated
//! straggling workers and recovered with the `uepmm` coding pipeline.

pub mod coded;
pub mod data;
pub mod error;
pub mod net;
pub mod train;

pub use coded::{CodedProducts, Encoding};
pub use data::{Dataset, SyntheticSpec};
pub use error::{Error, Result};
pub use net::DenseNet;
pub use train::{train_and_evaluate, AccuracyCurve, DatasetSource, TrainConfig};
