//! Neural-surrogate Laplace inference for the SIR model, with an exact
//! likelihood random-walk Metropolis-Hastings benchmark.

// `!(x > 0.0)` is how NaN is rejected alongside out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bfgs;
pub mod collocation;
pub mod config;
pub mod datasets;
pub mod error;
pub mod io;
pub mod laplace;
pub mod metrics;
pub mod mh;
pub mod nn;
pub mod ode;

pub use error::{Error, Result};
