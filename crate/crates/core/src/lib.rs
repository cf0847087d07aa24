//! Attribute-guided image-to-image translation with landmark side inputs.

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod synthesis;
pub mod training;

pub use error::{Error, Result};
