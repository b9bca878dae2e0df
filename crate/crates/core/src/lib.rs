pub mod calibration;
pub mod commands;
pub mod comparison;
pub mod config;
pub mod error;
pub mod io;
pub mod model;
pub mod pricing;
pub mod sde;
pub mod surface;
pub mod theory;

pub use error::{Error, Result};
