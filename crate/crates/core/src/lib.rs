pub mod autodiff;
pub mod config;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod generator;
pub mod metrics;
pub mod rank;
pub mod report;
pub mod rl;
pub mod text;
pub mod training;

pub use error::{Error, Result};
