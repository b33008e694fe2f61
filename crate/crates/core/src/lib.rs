//! Pseudo empirical likelihood estimation for stratified survey samples with
//! item nonresponse that is missing at random given a categorical covariate.

pub mod bootstrap;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimate;
pub mod impute;
pub mod model;
pub mod optimize;
pub mod pel;
pub mod rng;
pub mod simulation;

pub use error::{Error, ErrorKind, Result};
