//! Paced curriculum learning driven by label smoothing.
//!
//! Training targets start heavily smoothed and sharpen over epochs, while the
//! training set grows from the easiest samples (as ranked by a frozen model's
//! confidence in the true label) to the full set.

pub mod cli;
pub mod corruption;
pub mod data;
pub mod error;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod pacing;
pub mod persist;
pub mod schedules;
pub mod seed;
pub mod soft_labels;
pub mod trainer;

pub use error::{Error, Result};
