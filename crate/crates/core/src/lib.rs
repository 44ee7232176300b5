pub mod catalog;
pub mod config;
pub mod error;
pub mod harness;
pub mod hsp;
pub mod lpl;
pub mod numeric;
pub mod simenv;

pub use error::{Error, Result};
