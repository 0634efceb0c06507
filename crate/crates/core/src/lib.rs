pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod rplr;
pub mod selfcheck;
pub mod trainer;

pub use error::{Error, Result};
