//! Convex single index regression: Lipschitz-constrained and penalized
//! least squares estimators of the link and index, plug-in inference, and
//! simulation designs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine_link;
pub mod driver;
pub mod error;
pub mod index;
pub mod inference;
pub mod link;
mod linalg;
pub mod qp;
pub mod rng;
pub mod simbench;
pub mod spline_link;
pub mod stats;
pub mod stiefel;

pub use affine_link::PiecewiseAffineLink;
pub use driver::{default_lambda, fit, fit_alternating, predict, EstimatorConfig, EstimatorKind, FitResult};
pub use error::{Error, Result};
pub use index::{normalize_theta, perp_basis, project_and_bin, Dataset, IndexParameter, PerpBasis, SortedProjection};
pub use link::{FittedLink, Link};
pub use spline_link::ConvexSplineLink;
