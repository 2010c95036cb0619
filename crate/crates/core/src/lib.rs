//! Order-aware interactive segmentation at toy scale.

pub mod attention;
pub mod cli;
pub mod error;
pub mod io;
pub mod mask;
pub mod model;
pub mod numerics;
pub mod objectness;
pub mod order;
pub mod params;
pub mod prompts;
pub mod scenegen;
pub mod service;
pub mod simharness;
pub mod viz;

pub use error::{Error, Result};
