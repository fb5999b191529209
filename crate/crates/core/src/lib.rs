//! Real-time audio-to-score alignment.

pub mod align;
pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod runtime;
pub mod score;
pub mod stream;
pub mod types;

pub use error::{Error, Result};
