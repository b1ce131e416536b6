//! Spectral and heat-flow computations on twisted tubes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretize;
pub mod evolution;
pub mod error;
pub mod geometry;
pub mod inequalities;
pub mod linalg;
pub mod quad;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
pub use geometry::{CrossSection, TubeSpec, TwistProfile};
pub use linalg::EigOptions;
