//! Numerical toolkit for the boundary-value problem
//! `eps^2 y'' + 2(1 - x^2) y + y^2 = 1` on `[-1, 1]` with `y(-1) = y(1) = 0`:
//! deflated continuation, bifurcation location, and the WKB-type asymptotic
//! construction that predicts the solution count and bifurcation points.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod deflation;
pub mod enumerator;
pub mod error;
pub mod io;
pub mod kuzmak;
pub mod linalg;
pub mod model;
pub mod moore;
pub mod predictor;
pub mod quadrature;

pub use error::{CarrierError, Result};
