//! Standard and robust risks of linear models in the proportional regime d/n -> gamma.
//!
//! The crate pairs two routes to the same quantities and lets experiments
//! compare them:
//!
//! * exact asymptotic predictions — Marchenko–Pastur / Stieltjes-transform
//!   formulas for ridge regression ([`linreg`]) and scalar min–max systems for
//!   adversarially trained logistic regression ([`theory`]);
//! * finite-sample simulation — synthetic Gaussian data ([`data`]), empirical
//!   fits ([`linreg`], [`logreg`]) and closed-form or Monte Carlo population
//!   risks ([`risks`]).
//!
//! [`sweep`] binds both routes into reproducible experiment grids with CSV /
//! JSON-lines output; the `lab` binary is a thin CLI over it.

pub mod data;
pub mod linreg;
pub mod logreg;
pub mod numerics;
pub mod risks;
pub mod sweep;
pub mod theory;

mod error;

pub use error::{Error, Result};
