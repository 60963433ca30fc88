pub mod analysis;
pub mod autodiff;
pub mod cli;
pub mod config;
pub mod error;
pub mod graphdata;
pub mod hsc;
pub mod mcan;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
