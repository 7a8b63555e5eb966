//! Semi-supervised node classification with NodeMixup, plus diagnostics for
//! how far labeled information reaches through a graph.

pub mod diagnostics;
pub mod error;
pub mod gradcheck;
pub mod graphalg;
pub mod graphio;
pub mod matrix;
pub mod mixup;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use graphalg::CsrGraph;
pub use graphio::{Dataset, SplitSpec};
pub use matrix::Matrix;
pub use mixup::MixupConfig;
pub use nn::ModelParams;
pub use trainer::{RunResult, TrainConfig};
