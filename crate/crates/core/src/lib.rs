//! RIS phase configuration learned by scalable neural networks, with WMMSE
//! precoding, a small reverse-mode differentiation engine and baseline
//! optimizers.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod precoder;
pub mod report;
pub mod risnet;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
