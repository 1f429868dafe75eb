//! Off-grid sparse Bayesian direction-of-arrival estimation for colocated MIMO
//! radar with unknown mutual coupling, plus the simulator and benchmark harness
//! used to evaluate it.

pub mod array_model;
pub mod bench;
pub mod error;
pub mod estimators;
pub mod numerics;
pub mod scene;

pub use error::{Error, Result};
