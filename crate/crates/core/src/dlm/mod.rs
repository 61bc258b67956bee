//! Dynamic linear models: Kalman filtering, k-step forecasting and MAP
//! estimation of the observation and evolution precisions.
//!
//! The model is
//!
//! ```text
//! y(t) = F(t)ᵀ θ(t) + v(t),       v(t) ~ N(0, V)
//! θ(t) = G θ(t−1) + w(t),         w(t) ~ N(0, W)
//! ```
//!
//! with a constant evolution matrix `G`. The regression vector `F(t)` is
//! supplied per step, so exogenous covariates enter through it.

mod fit;

pub use fit::{fit_precisions, log_likelihood, PrecisionFit, PrecisionFitConfig, PrecisionPrior};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::GaussianMoments;

/// Diffuse prior variance used when no prior is given.
pub const DIFFUSE_PRIOR_VARIANCE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct DlmSpec {
    pub g: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub v: f64,
    pub m0: DVector<f64>,
    pub c0: DMatrix<f64>,
}

impl DlmSpec {
    /// Random-walk state (G = I) with W = w·I and a diffuse prior centred at zero.
    pub fn random_walk(dim: usize, v: f64, w: f64) -> Result<Self> {
        let spec = Self {
            g: DMatrix::identity(dim, dim),
            w: DMatrix::identity(dim, dim) * w,
            v,
            m0: DVector::zeros(dim),
            c0: DMatrix::identity(dim, dim) * DIFFUSE_PRIOR_VARIANCE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        if p == 0 {
            return Err(Error::Validation("state dimension must be at least 1".into()));
        }
        for (what, m) in [("G", &self.g), ("W", &self.w), ("C(0)", &self.c0)] {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::dims(format!("{what} dimension"), p, m.nrows().max(m.ncols())));
            }
        }
        if !(self.v.is_finite() && self.v > 0.0) {
            return Err(Error::Validation(format!(
                "observation variance V must be positive, got {}",
                self.v
            )));
        }
        if self.g.iter().chain(self.m0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("G and m(0) must be finite".into()));
        }
        linalg::check_psd(&self.w, "W")?;
        linalg::check_psd(&self.c0, "C(0)")?;
        Ok(())
    }

    pub fn initial_state(&self) -> FilterState {
        FilterState {
            t: 0,
            m: self.m0.clone(),
            c: self.c0.clone(),
            prior: None,
            forecast: None,
            innovation: None,
        }
    }

    /// State moments one step ahead: a = G m, R = G C Gᵀ + W.
    pub fn evolve(&self, m: &DVector<f64>, c: &DMatrix<f64>) -> StateMoments {
        let a = &self.g * m;
        let mut r = &self.g * c * self.g.transpose() + &self.w;
        linalg::symmetrize(&mut r);
        StateMoments { a, r }
    }

    /// One-step observation moments: f = Fᵀa, Q = FᵀRF + V.
    fn observe(&self, state: &StateMoments, f_t: &DVector<f64>) -> (f64, f64) {
        let f = f_t.dot(&state.a);
        let q = (state.r.transpose() * f_t).dot(f_t) + self.v;
        (f, q)
    }

    fn check_regressors(&self, f_t: &[f64]) -> Result<DVector<f64>> {
        if f_t.len() != self.dim() {
            return Err(Error::dims("regression vector", self.dim(), f_t.len()));
        }
        if f_t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("regression vector must be finite".into()));
        }
        Ok(DVector::from_column_slice(f_t))
    }
}

/// Mean and covariance of the state at a time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMoments {
    pub a: DVector<f64>,
    pub r: DMatrix<f64>,
}

/// Posterior after `t` steps together with the quantities computed on the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub t: usize,
    pub m: DVector<f64>,
    pub c: DMatrix<f64>,
    /// Prior moments (a(t), R(t)) of the step that produced this state.
    pub prior: Option<StateMoments>,
    /// One-step forecast (f(t), Q(t)).
    pub forecast: Option<(f64, f64)>,
    /// y(t) − f(t); `None` when y(t) was missing.
    pub innovation: Option<f64>,
}

impl FilterState {
    /// Innovation divided by its forecast standard deviation.
    pub fn standardized_innovation(&self) -> Option<f64> {
        match (self.innovation, self.forecast) {
            (Some(e), Some((_, q))) => Some(e / q.sqrt()),
            _ => None,
        }
    }
}

/// One Kalman step. A missing observation skips the update, so the posterior
/// equals the propagated prior.
pub fn filter_step(spec: &DlmSpec, state: &FilterState, y: Option<f64>, f_t: &[f64]) -> Result<FilterState> {
    let f_vec = spec.check_regressors(f_t)?;
    if state.m.len() != spec.dim() {
        return Err(Error::dims("filter state", spec.dim(), state.m.len()));
    }
    let prior = spec.evolve(&state.m, &state.c);
    let (f, q) = spec.observe(&prior, &f_vec);
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Numerical(format!(
            "forecast variance Q = {q:e} at step {}",
            state.t + 1
        )));
    }
    let (m, c, innovation) = match y {
        Some(y) if y.is_finite() => {
            let e = y - f;
            let gain = &prior.r * &f_vec / q;
            let m = &prior.a + &gain * e;
            let mut c = &prior.r - &gain * gain.transpose() * q;
            linalg::symmetrize(&mut c);
            (m, c, Some(e))
        }
        Some(y) => {
            return Err(Error::Validation(format!(
                "observation at step {} is not finite: {y}",
                state.t + 1
            )))
        }
        None => (prior.a.clone(), prior.r.clone(), None),
    };
    Ok(FilterState {
        t: state.t + 1,
        m,
        c,
        prior: Some(prior),
        forecast: Some((f, q)),
        innovation,
    })
}

/// Runs the filter from the prior over the whole series; returns the states
/// after each observation (index i holds the posterior at t = i + 1).
pub fn filter(spec: &DlmSpec, ys: &[Option<f64>], regressors: &[Vec<f64>]) -> Result<Vec<FilterState>> {
    spec.validate()?;
    if ys.len() != regressors.len() {
        return Err(Error::dims("regressor rows", ys.len(), regressors.len()));
    }
    let mut out = Vec::with_capacity(ys.len());
    let mut state = spec.initial_state();
    for (y, f_t) in ys.iter().zip(regressors) {
        state = filter_step(spec, &state, *y, f_t)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// State moments (a(t+j), R(t+j)) for j = 1..=horizon. These do not depend on
/// the regressors, which lets callers combine them with random regressors.
pub fn forecast_states(spec: &DlmSpec, state: &FilterState, horizon: usize) -> Vec<StateMoments> {
    let mut out = Vec::with_capacity(horizon);
    let mut cur = spec.evolve(&state.m, &state.c);
    for _ in 0..horizon {
        let next = spec.evolve(&cur.a, &cur.r);
        out.push(cur);
        cur = next;
    }
    out
}

/// k-step forecasts (f(t+j), Q(t+j)) for j = 1..=horizon using the supplied
/// future regression vectors.
pub fn forecast_k(
    spec: &DlmSpec,
    state: &FilterState,
    horizon: usize,
    future: &[Vec<f64>],
) -> Result<Vec<GaussianMoments>> {
    if horizon == 0 {
        return Err(Error::Validation("horizon must be ≥ 1".into()));
    }
    if future.len() < horizon {
        let missing: Vec<String> = (future.len() + 1..=horizon)
            .map(|j| format!("t+{j}"))
            .collect();
        return Err(Error::Validation(format!(
            "missing future regressors for steps {}",
            missing.join(", ")
        )));
    }
    forecast_states(spec, state, horizon)
        .iter()
        .zip(future)
        .map(|(s, f_t)| {
            let (f, q) = spec.observe(s, &spec.check_regressors(f_t)?);
            Ok(GaussianMoments::scalar(f, q))
        })
        .collect()
}

/// A fitted DLM together with the metadata needed to forecast from raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct DlmModel {
    pub regressor_names: Vec<String>,
    /// Multipliers applied to raw regressor values before they enter F(t).
    pub scale_factors: Vec<f64>,
    pub spec: DlmSpec,
    /// Posterior after the last observation.
    pub state: FilterState,
    /// Hex SHA-256 of the training data.
    pub data_digest: String,
}

impl DlmModel {
    pub fn dim(&self) -> usize {
        self.regressor_names.len()
    }

    /// Converts a row of raw regressor values to model units.
    pub fn scale(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.dim() {
            return Err(Error::dims("regressor row", self.dim(), raw.len()));
        }
        Ok(raw.iter().zip(&self.scale_factors).map(|(v, s)| v * s).collect())
    }

    /// Forecasts from the last filtered state. `future` rows are in model
    /// units, i.e. already multiplied by the scale factors.
    pub fn forecast(&self, horizon: usize, future: &[Vec<f64>]) -> Result<Vec<GaussianMoments>> {
        forecast_k(&self.spec, &self.state, horizon, future)
    }
}

/// Hex SHA-256 over the observations and regressor rows (little-endian f64
/// bits; missing observations hash as NaN).
pub fn data_digest(ys: &[Option<f64>], regressors: &[Vec<f64>]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for (y, row) in ys.iter().zip(regressors) {
        h.update(y.unwrap_or(f64::NAN).to_le_bytes());
        for v in row {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// A fitted random-walk DLM with its filter history.
#[derive(Debug, Clone)]
pub struct FittedDlm {
    pub model: DlmModel,
    /// Filter states after each observation.
    pub states: Vec<FilterState>,
    pub fit: PrecisionFit,
}

/// Estimates V and w for a random-walk DLM (G = I, W = w·I, diffuse prior)
/// on regressors already in model units, then filters the series.
pub fn fit_random_walk(
    regressor_names: Vec<String>,
    scale_factors: Vec<f64>,
    ys: &[Option<f64>],
    regressors: &[Vec<f64>],
    prior: PrecisionPrior,
    cfg: PrecisionFitConfig,
) -> Result<FittedDlm> {
    let p = regressor_names.len();
    if scale_factors.len() != p {
        return Err(Error::dims("scale factors", p, scale_factors.len()));
    }
    if let Some((i, row)) = regressors.iter().enumerate().find(|(_, r)| r.len() != p) {
        return Err(Error::dims(format!("regressor row {i}"), p, row.len()));
    }
    let template = DlmSpec::random_walk(p, 1.0, 0.0)?;
    let fit = fit_precisions(&template, ys, regressors, prior, cfg)?;
    let states = filter(&fit.spec, ys, regressors)?;
    let state = states.last().cloned().expect("fit requires observations");
    Ok(FittedDlm {
        model: DlmModel {
            regressor_names,
            scale_factors,
            spec: fit.spec.clone(),
            state,
            data_digest: data_digest(ys, regressors),
        },
        states,
        fit,
    })
}
