//! Training Ising machines with Equilibrium Propagation.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, with `F32` variants where single precision
//! is useful.

pub mod anneal;
pub mod checkpoint;
pub mod data;
pub mod deterministic;
pub mod eqprop;
pub mod error;
pub mod ising;
pub mod networks;
pub mod rng;
pub mod scalar;
pub mod topology;

pub use error::{Error, Result};
pub use ising::{Sample, SpinState};
pub use scalar::Scalar;

pub type Problem = ising::IsingProblem<f64>;
pub type ProblemF32 = ising::IsingProblem<f32>;
pub type Schedule = anneal::AnnealSchedule<f64>;
pub type SamplerConfig = anneal::SamplerConfig<f64>;
pub type Dataset = data::Dataset<f64>;
pub type DatasetF32 = data::Dataset<f32>;
pub type FcArchitecture = networks::FcArchitecture<f64>;
pub type FcParameters = networks::FcParameters<f64>;
pub type ConvArchitecture = networks::ConvArchitecture<f64>;
pub type ConvParameters = networks::ConvParameters<f64>;
pub type TrainConfig = eqprop::TrainConfig<f64>;
pub type DetConfig = deterministic::DetConfig<f64>;
pub type Checkpoint = checkpoint::Checkpoint<f64>;
