pub mod analysis;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod readout;
pub mod reservoir;
pub mod seed;

pub use error::{Error, Result};
