//! Forecast moments of a DLM whose regression vector is itself uncertain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dlm::StateMoments;
use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::GaussianMoments;

/// Moments of y = Fᵀθ + v with F ~ (µ̃, Ω) independent of θ ~ N(a, R):
/// mean µ̃ᵀa and variance tr{R(µ̃µ̃ᵀ + Ω)} + aᵀΩa + V. For any Z,
/// Cov(Z, y) = Cov(Z, F)·a, so `a` is returned as the cross-covariance weight.
pub fn mdm_moments(state: &StateMoments, v: f64, regressors: &GaussianMoments) -> Result<(f64, f64)> {
    let p = state.a.len();
    if regressors.dim() != p {
        return Err(Error::dims("regressor law", p, regressors.dim()));
    }
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Validation(format!("observation variance must be positive, got {v}")));
    }
    linalg::check_psd(&regressors.cov, "regressor covariance")?;
    let mu = &regressors.mean;
    let second = mu * mu.transpose() + &regressors.cov;
    let mean = mu.dot(&state.a);
    let variance = state.r.component_mul(&second).sum() + quad(&regressors.cov, &state.a) + v;
    Ok((mean, variance))
}

fn quad(m: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    u.dot(&(m * u))
}

/// Ω̃: zero except the parent's forecast variance at its regressor slot.
pub fn parent_slot_covariance(dim: usize, slot: usize, parent_variance: f64) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(dim, dim);
    omega[(slot, slot)] = parent_variance;
    omega
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdmMarginal {
    pub moments: GaussianMoments,
    /// Cov(parent, child) = a_slot · Q_parent.
    pub cross_covariance: f64,
}

/// Marginal forecast of a child series whose regressor named `parent` is the
/// parent series' forecast (f, Q). `regressors` holds the remaining
/// regressor values; the entry at the parent's slot is replaced by f.
pub fn mdm_marginal(
    parent: &GaussianMoments,
    parent_name: &str,
    regressor_names: &[String],
    regressors: &[f64],
    state: &StateMoments,
    v: f64,
) -> Result<MdmMarginal> {
    if parent.dim() != 1 {
        return Err(Error::dims("parent forecast", 1, parent.dim()));
    }
    if regressors.len() != regressor_names.len() {
        return Err(Error::dims("regressor values", regressor_names.len(), regressors.len()));
    }
    let slot = regressor_names
        .iter()
        .position(|n| n == parent_name)
        .ok_or_else(|| {
            Error::Binding(format!(
                "parent '{parent_name}' is not among the regressors [{}]",
                regressor_names.join(", ")
            ))
        })?;
    let mut mean = DVector::from_column_slice(regressors);
    mean[slot] = parent.mean1();
    let law = GaussianMoments {
        mean,
        cov: parent_slot_covariance(regressors.len(), slot, parent.var1()),
    };
    let (m, var) = mdm_moments(state, v, &law)?;
    Ok(MdmMarginal {
        moments: GaussianMoments::scalar(m, var),
        cross_covariance: state.a[slot] * parent.var1(),
    })
}
