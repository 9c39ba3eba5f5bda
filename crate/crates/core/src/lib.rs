//! Neural risk-limiting dispatch.
//!
//! A bias-free ReLU network maps day-ahead features to first-stage generation.
//! It is trained on the exact two-stage cost `alpha^T u + Q(u, d)`, where
//! `Q` is the optimal value of a real-time DC dispatch LP and its gradient
//! in `u` is read off the LP's nodal balance duals.
//!
//! Module map:
//! - [`grid`]: network cases, susceptance and flow matrices
//! - [`lpsolve`]: dense bounded-variable revised simplex with exact duals
//! - [`recourse`]: the real-time LP, its dual gradient, hindsight and SAA dispatch
//! - [`neural`]: the bias-free MLP with row-norm projection
//! - [`train`]: RLD loss, dual-gradient SGD, and the two benchmark methods
//! - [`datagen`]: synthetic feature/demand generation and persistence
//! - [`evalbound`]: suboptimality evaluation and the PAC excess-cost bound
//! - [`cli`]: the `nrld` command-line front end

// Index loops mirror the matrix notation in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod datagen;
pub mod error;
pub mod evalbound;
pub mod grid;
pub mod lpsolve;
pub mod neural;
pub mod recourse;
pub mod train;

pub use error::{Result, RldError};
