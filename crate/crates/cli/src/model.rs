//! The model file written by `fit` and read by `predict`.

use serde::{Deserialize, Serialize};

use cvxsim::{ConvexSplineLink, FittedLink, PiecewiseAffineLink};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub estimator: String,
    pub theta_hat: Vec<f64>,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    /// Spline curvature coefficients (PLSE only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    pub criterion: f64,
    pub criterion_trace: Vec<f64>,
    pub converged: bool,
    pub n_outer: usize,
    pub start_index: usize,
    pub n: usize,
    pub sigma_sq_hat: Option<f64>,
    /// Plug-in covariance of `√n(θ̂ − θ₀)`; null when the information matrix is singular.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub ci_95: Option<Vec<[f64; 2]>>,
    pub in_sample_rmse: f64,
    pub fitted_values: Vec<f64>,
}

impl ModelFile {
    pub fn link(&self) -> CliResult<FittedLink> {
        let bad = |e: cvxsim::Error| CliError::Input(format!("model file: {e}"));
        match (&self.alpha, self.lambda) {
            (Some(alpha), Some(lambda)) => Ok(FittedLink::Spline(
                ConvexSplineLink::from_parts(self.knots.clone(), self.values.clone(), alpha.clone(), lambda).map_err(bad)?,
            )),
            (None, None) => Ok(FittedLink::Affine(
                PiecewiseAffineLink::new(self.knots.clone(), self.values.clone(), self.lipschitz).map_err(bad)?,
            )),
            _ => Err(CliError::Input("model file: alpha and lambda must be given together".into())),
        }
    }
}
