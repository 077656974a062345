pub mod align;
pub mod cleanup;
pub mod collection;
pub mod config;
pub mod error;
pub mod filter;
pub mod image;
pub mod landmarks;
pub mod metrics;
pub mod mrf;
pub mod pipeline;
pub mod stack;
pub mod synthetic;
pub mod transfer;

pub use error::{Error, Result};
