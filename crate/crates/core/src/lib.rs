pub mod error;
pub mod harness;
pub mod noise;
pub mod path;
pub mod regularity;
pub mod maxreg;
pub mod spectral;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
