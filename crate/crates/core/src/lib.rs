//! Adaptive experience replay for class-incremental continual learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: two-layer MLP with exact gradients and pure SGD steps.
//! * [`stream`]: IDX / synthetic pools cut into class-incremental task streams.
//! * [`memory`]: bounded replay memory with reservoir and entropy-balanced updates.
//! * [`replay`]: interference scoring, contextually-cued replay plans and the training step.
//! * [`metrics`]: the result matrix with Acc, Forget, Bwt and Fwt.
//! * [`harness`]: run configuration, seeded runs, sweeps and result files.
//!
//! The numeric core is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix it to `f64`, which the harness uses throughout.

pub mod error;
pub mod harness;
pub mod memory;
pub mod metrics;
pub mod nn;
pub mod replay;
pub mod scalar;
pub mod stream;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Params = nn::ParamSet<f64>;
pub type Grads = nn::GradSet<f64>;
pub type LossReport = nn::LossReport<f64>;
pub type Buffer = memory::MemoryBuffer<f64>;
pub type Slot = memory::MemorySlot<f64>;
pub type Data = stream::Dataset<f64>;
pub type Stream = stream::TaskStream<f64>;
pub type TaskExample = stream::Example<f64>;

pub type ParamsF32 = nn::ParamSet<f32>;
pub type BufferF32 = memory::MemoryBuffer<f32>;
