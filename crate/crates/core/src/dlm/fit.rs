use serde::{Deserialize, Serialize};

use super::{filter, DlmSpec};
use crate::error::{Error, Result};
use crate::optim::{self, NelderMeadConfig};

/// Gamma(shape, rate) priors on ψ₁ = 1/V and ψ₂ = 1/w.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for PrecisionPrior {
    fn default() -> Self {
        Self {
            shape: 3.0,
            rate: 0.01,
        }
    }
}

impl PrecisionPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite()) {
            return Err(Error::Validation(format!(
                "precision prior needs positive shape and rate, got ({}, {})",
                self.shape, self.rate
            )));
        }
        Ok(())
    }

    /// Log Gamma density of the precision ψ, without the normalising constant.
    pub fn log_density(&self, psi: f64) -> f64 {
        (self.shape - 1.0) * psi.ln() - self.rate * psi
    }

    /// Mode of the prior on ψ (zero when shape ≤ 1).
    pub fn mode(&self) -> f64 {
        ((self.shape - 1.0) / self.rate).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrecisionFitConfig {
    /// Hold the evolution variance at this value instead of estimating it.
    pub fixed_w: Option<f64>,
    pub max_iters: u64,
}

impl Default for PrecisionFitConfig {
    fn default() -> Self {
        Self {
            fixed_w: None,
            max_iters: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionFit {
    pub v: f64,
    pub w: f64,
    /// Log likelihood plus log prior density at the optimum, up to a constant.
    pub log_posterior: f64,
    /// The template with V and W = w·I filled in.
    pub spec: DlmSpec,
}

/// Prequential log likelihood: the sum of one-step forecast log densities
/// over the observed steps.
pub fn log_likelihood(spec: &DlmSpec, ys: &[Option<f64>], regressors: &[Vec<f64>]) -> Result<f64> {
    let states = filter(spec, ys, regressors)?;
    Ok(states
        .iter()
        .filter_map(|s| {
            let (_, q) = s.forecast?;
            let e = s.innovation?;
            Some(-0.5 * ((2.0 * std::f64::consts::PI * q).ln() + e * e / q))
        })
        .sum())
}

fn with_variances(template: &DlmSpec, v: f64, w: f64) -> DlmSpec {
    let p = template.dim();
    DlmSpec {
        v,
        w: nalgebra::DMatrix::identity(p, p) * w,
        ..template.clone()
    }
}

const LOG_VARIANCE_BOUND: f64 = 60.0;

/// MAP estimates of V and w (W = w·I) under Gamma priors on their
/// reciprocals. The prior densities are taken in the precision
/// parameterisation; the search runs in log-variance space from a grid of
/// starts scaled to the sample variance of the series.
pub fn fit_precisions(
    template: &DlmSpec,
    ys: &[Option<f64>],
    regressors: &[Vec<f64>],
    prior: PrecisionPrior,
    cfg: PrecisionFitConfig,
) -> Result<PrecisionFit> {
    prior.validate()?;
    with_variances(template, 1.0, 0.0).validate()?;
    if ys.len() != regressors.len() {
        return Err(Error::dims("regressor rows", ys.len(), regressors.len()));
    }
    let observed: Vec<f64> = ys.iter().flatten().cloned().collect();
    let p = template.dim();
    if observed.len() < p + 5 {
        return Err(Error::Precondition(format!(
            "estimating precisions for a {p}-dimensional state needs at least {} observations, got {}",
            p + 5,
            observed.len()
        )));
    }
    if let Some(w) = cfg.fixed_w {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Validation(format!("fixed w must be non-negative, got {w}")));
        }
    }

    let objective = |theta: &[f64]| -> f64 {
        if theta.iter().any(|t| t.abs() > LOG_VARIANCE_BOUND) {
            return f64::INFINITY;
        }
        let v = theta[0].exp();
        let (w, w_prior) = match cfg.fixed_w {
            Some(w) => (w, 0.0),
            None => {
                let w = theta[1].exp();
                (w, prior.log_density(1.0 / w))
            }
        };
        match log_likelihood(&with_variances(template, v, w), ys, regressors) {
            Ok(ll) if ll.is_finite() => -(ll + prior.log_density(1.0 / v) + w_prior),
            _ => f64::INFINITY,
        }
    };

    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let var = observed.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (observed.len() - 1) as f64;
    let log_scale = if var > 0.0 && var.is_finite() {
        var.ln()
    } else {
        (1.0 / prior.mode().max(1.0)).ln()
    };
    let v_offsets = [-6.0, -3.0, 0.0];
    let starts: Vec<Vec<f64>> = match cfg.fixed_w {
        Some(_) => [-8.0, -6.0, -4.0, -2.0, 0.0]
            .iter()
            .map(|o| vec![log_scale + o])
            .collect(),
        None => v_offsets
            .iter()
            .flat_map(|ov| [-8.0, -4.0, 0.0].iter().map(move |ow| vec![log_scale + ov, log_scale + ow]))
            .collect(),
    };
    let nm = NelderMeadConfig {
        max_iters: cfg.max_iters,
        initial_step: 1.0,
        ..Default::default()
    };
    let minima = optim::multi_start(&objective, &starts, nm);
    let best = optim::best(&minima).ok_or_else(|| {
        Error::FitFailure("log likelihood is not finite at any starting point".into())
    })?;
    let v = best.x[0].exp();
    let w = cfg.fixed_w.unwrap_or_else(|| best.x[1].exp());
    Ok(PrecisionFit {
        v,
        w,
        log_posterior: -best.value,
        spec: with_variances(template, v, w),
    })
}
