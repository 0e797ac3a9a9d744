//! Common interface over the fitted link families.

use serde::{Deserialize, Serialize};

use crate::affine_link::PiecewiseAffineLink;
use crate::spline_link::ConvexSplineLink;

/// A univariate link with a (right) derivative.
pub trait Link {
    fn eval(&self, s: f64) -> f64;
    fn derivative(&self, s: f64) -> f64;
}

impl Link for PiecewiseAffineLink {
    fn eval(&self, s: f64) -> f64 {
        PiecewiseAffineLink::eval(self, s)
    }

    /// Right derivative; a single-knot (constant) link has slope zero.
    fn derivative(&self, s: f64) -> f64 {
        self.right_derivative(s).unwrap_or(0.0)
    }
}

impl Link for ConvexSplineLink {
    fn eval(&self, s: f64) -> f64 {
        ConvexSplineLink::eval(self, s)
    }

    fn derivative(&self, s: f64) -> f64 {
        ConvexSplineLink::derivative(self, s)
    }
}

/// Link produced by one of the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedLink {
    Affine(PiecewiseAffineLink),
    Spline(ConvexSplineLink),
}

impl FittedLink {
    pub fn knots(&self) -> &[f64] {
        match self {
            FittedLink::Affine(l) => l.knots(),
            FittedLink::Spline(l) => l.knots(),
        }
    }

    /// Fitted values at the knots.
    pub fn values(&self) -> &[f64] {
        match self {
            FittedLink::Affine(l) => l.values(),
            FittedLink::Spline(l) => l.values(),
        }
    }

    /// `λ² J²` for spline links, zero otherwise.
    pub fn penalty(&self) -> f64 {
        match self {
            FittedLink::Affine(_) => 0.0,
            FittedLink::Spline(l) => l.lambda() * l.lambda() * l.roughness(),
        }
    }
}

impl Link for FittedLink {
    fn eval(&self, s: f64) -> f64 {
        match self {
            FittedLink::Affine(l) => Link::eval(l, s),
            FittedLink::Spline(l) => Link::eval(l, s),
        }
    }

    fn derivative(&self, s: f64) -> f64 {
        match self {
            FittedLink::Affine(l) => Link::derivative(l, s),
            FittedLink::Spline(l) => Link::derivative(l, s),
        }
    }
}

impl<L: Link + ?Sized> Link for &L {
    fn eval(&self, s: f64) -> f64 {
        (**self).eval(s)
    }

    fn derivative(&self, s: f64) -> f64 {
        (**self).derivative(s)
    }
}
