//! Multi-view feature fusion and cyclical focal re-weighting for training a
//! classifier head over frozen per-camera features.

pub mod data;
pub mod error;
pub mod experiments;
pub mod fusion;
pub mod harness;
pub mod head;
pub mod losses;
pub mod numerics;

pub use error::{Error, FormatErrorKind, Result};
