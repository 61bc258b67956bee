use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{correlation_matrix, trend_matrix, Design, GpEmulator, KernelSpec, TrendBasis};
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{self, NelderMeadConfig};
use crate::simulators::lhc_unit;

/// Log-normal penalty on each lengthscale: median half the (unit) domain width.
const LENGTHSCALE_LOG_MEDIAN: f64 = -std::f64::consts::LN_2;
/// Log-normal penalty on the nugget: median 1e-6.
const NUGGET_MEDIAN: f64 = 1e-6;
const PENALTY_LOG_SD: f64 = 1.0;

const LOG_DELTA_BOUNDS: (f64, f64) = (-6.907_755_278_982_137, 6.907_755_278_982_137); // 1e-3 .. 1e3
const LOG_TAU2_BOUNDS: (f64, f64) = (-27.631_021_115_928_547, 0.0); // 1e-12 .. 1

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuggetMode {
    Estimate,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperparamSearchConfig {
    /// Number of local searches, started from a Latin hypercube in log-hyperparameter space.
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: u64,
    pub nugget: NuggetMode,
}

impl Default for HyperparamSearchConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            max_iters: 400,
            nugget: NuggetMode::Estimate,
        }
    }
}

/// Outcome of the hyperparameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Penalised log marginal posterior at the selected optimum.
    pub log_posterior: f64,
    /// Index of the start point whose local search won.
    pub restart_index: usize,
    /// Local searches that ended at a finite objective.
    pub restarts_converged: usize,
}

/// Design quantities that do not depend on the hyperparameters.
struct Posterior<'a> {
    z: DMatrix<f64>,
    h: DMatrix<f64>,
    f: &'a DVector<f64>,
    n: usize,
    q: usize,
}

impl<'a> Posterior<'a> {
    fn new(design: &'a Design, trend: TrendBasis) -> Self {
        let z = design.standardized();
        let h = trend_matrix(&z, trend);
        Self {
            n: design.n(),
            q: h.ncols(),
            z,
            h,
            f: &design.f,
        }
    }

    /// log p(δ, τ² | F) up to a constant with β and σ² integrated out:
    /// −½ log|R̃| − ½ log|HᵀR̃⁻¹H| − (n−q)/2 · log(FᵀPF).
    fn log_integrated_likelihood(&self, kernel: &KernelSpec) -> Option<f64> {
        let mut r = correlation_matrix(&self.z, kernel);
        for i in 0..self.n {
            r[(i, i)] += kernel.nugget;
        }
        let chol = linalg::cholesky(&r)?;
        let r_inv_h = chol.solve(&self.h);
        let mut k = self.h.transpose() * &r_inv_h;
        linalg::symmetrize(&mut k);
        let k_chol = linalg::cholesky(&k)?;
        let beta = k_chol.solve(&(r_inv_h.transpose() * self.f));
        let resid = self.f - &self.h * beta;
        let s2 = resid.dot(&chol.solve(&resid));
        if !(s2 > 0.0) {
            return None;
        }
        let value = -0.5 * linalg::log_det(&chol)
            - 0.5 * linalg::log_det(&k_chol)
            - 0.5 * (self.n - self.q) as f64 * s2.ln();
        value.is_finite().then_some(value)
    }
}

fn log_normal_logpdf(x: f64, log_median: f64, log_sd: f64) -> f64 {
    let lx = x.ln();
    let t = (lx - log_median) / log_sd;
    -lx - 0.5 * t * t - (log_sd * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

fn log_prior(kernel: &KernelSpec, estimate_nugget: bool) -> f64 {
    let mut lp: f64 = kernel
        .lengthscales
        .iter()
        .map(|d| log_normal_logpdf(*d, LENGTHSCALE_LOG_MEDIAN, PENALTY_LOG_SD))
        .sum();
    if estimate_nugget {
        lp += log_normal_logpdf(kernel.nugget, NUGGET_MEDIAN.ln(), PENALTY_LOG_SD);
    }
    lp
}

/// Penalised log marginal posterior of (δ, τ²) used as the fitting objective.
/// Returns `None` when the correlation matrix does not factorise.
pub fn log_marginal_posterior(
    design: &Design,
    trend: TrendBasis,
    kernel: &KernelSpec,
    estimate_nugget: bool,
) -> Option<f64> {
    let post = Posterior::new(design, trend);
    post.log_integrated_likelihood(kernel)
        .map(|ll| ll + log_prior(kernel, estimate_nugget))
}

fn decode(theta: &[f64], p: usize, nugget: NuggetMode) -> Option<KernelSpec> {
    let in_bounds = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    if !theta[..p].iter().all(|&v| in_bounds(v, LOG_DELTA_BOUNDS)) {
        return None;
    }
    let tau2 = match nugget {
        NuggetMode::Estimate => {
            if !in_bounds(theta[p], LOG_TAU2_BOUNDS) {
                return None;
            }
            theta[p].exp()
        }
        NuggetMode::Fixed(t) => t,
    };
    Some(KernelSpec {
        lengthscales: theta[..p].iter().map(|v| v.exp()).collect(),
        nugget: tau2,
    })
}

/// MAP estimation of the lengthscales (and, unless fixed, the nugget) by
/// multi-start Nelder–Mead in log space, then conditioning at the optimum.
pub fn fit_gp(
    design: Design,
    trend: TrendBasis,
    search: &HyperparamSearchConfig,
) -> Result<GpEmulator> {
    design.validate()?;
    let (n, p) = (design.n(), design.p());
    let q = trend.len(p);
    if n <= q + 2 {
        return Err(Error::Precondition(format!(
            "fitting a {q}-term trend needs at least {} runs, got {n}",
            q + 3
        )));
    }
    if search.restarts == 0 {
        return Err(Error::Validation("at least one restart is required".into()));
    }
    if let NuggetMode::Fixed(t) = search.nugget {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Validation(format!("fixed nugget must be non-negative, got {t}")));
        }
    }
    let estimate_nugget = matches!(search.nugget, NuggetMode::Estimate);
    let dim = p + usize::from(estimate_nugget);
    let post = Posterior::new(&design, trend);
    let objective = |theta: &[f64]| -> f64 {
        match decode(theta, p, search.nugget) {
            Some(kernel) => match post.log_integrated_likelihood(&kernel) {
                Some(ll) => -(ll + log_prior(&kernel, estimate_nugget)),
                None => f64::INFINITY,
            },
            None => f64::INFINITY,
        }
    };

    let (d_lo, d_hi) = (0.05f64.ln(), 3.0f64.ln());
    let (t_lo, t_hi) = (1e-9f64.ln(), 1e-3f64.ln());
    let starts: Vec<Vec<f64>> = lhc_unit(search.restarts, dim, search.seed)
        .into_iter()
        .map(|u| {
            u.iter()
                .enumerate()
                .map(|(j, v)| {
                    if j < p {
                        d_lo + v * (d_hi - d_lo)
                    } else {
                        t_lo + v * (t_hi - t_lo)
                    }
                })
                .collect()
        })
        .collect();

    let cfg = NelderMeadConfig {
        max_iters: search.max_iters,
        ..Default::default()
    };
    let minima = optim::multi_start(&objective, &starts, cfg);
    let best = optim::best(&minima).ok_or_else(|| {
        let shown: Vec<_> = starts
            .iter()
            .filter_map(|s| decode(s, p, search.nugget))
            .map(|k| format!("δ={:?}, τ²={:e}", k.lengthscales, k.nugget))
            .collect();
        Error::FitFailure(format!(
            "correlation matrix singular at every restart ({})",
            shown.join("; ")
        ))
    })?;
    let kernel = decode(&best.x, p, search.nugget).expect("finite optimum decodes");
    let report = FitReport {
        log_posterior: -best.value,
        restart_index: best.start_index,
        restarts_converged: minima.len(),
    };
    Ok(GpEmulator::condition(design, trend, kernel)?.with_fit_info(search.seed, Some(report)))
}
