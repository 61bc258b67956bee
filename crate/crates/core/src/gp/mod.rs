//! Gaussian-process emulation with a squared-exponential correlation, a
//! linear-in-parameters trend and the variance scale integrated out under the
//! reference prior `π(β, σ²) ∝ 1/σ²`.
//!
//! Inputs are standardised onto `[0, 1]` per declared domain before the trend
//! or the kernel see them, so lengthscales are reported in unit-cube units.

mod diagnostics;
mod fit;

pub use diagnostics::{coverage, holdout_diagnostics, loo_diagnostics, rmse, Diagnostic};
pub use fit::{fit_gp, log_marginal_posterior, FitReport, HyperparamSearchConfig, NuggetMode};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Chol};
use crate::moments::GaussianMoments;

/// Nuggets tried, in order, when the training correlation matrix will not factorise.
const NUGGET_LADDER: [f64; 2] = [1e-6, 1e-4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: f64,
    pub upper: f64,
}

impl Domain {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lower.is_finite() || !self.upper.is_finite() || !(self.upper > self.lower) {
            return Err(Error::Validation(format!(
                "degenerate domain [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.lower) / self.width()
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.lower + u * self.width()
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-9 * self.width();
        x >= self.lower - slack && x <= self.upper + slack
    }
}

/// Squared-exponential correlation lengthscales and the nugget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub lengthscales: Vec<f64>,
    pub nugget: f64,
}

impl KernelSpec {
    pub fn new(lengthscales: Vec<f64>, nugget: f64) -> Result<Self> {
        let k = Self {
            lengthscales,
            nugget,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::Validation("kernel needs at least one lengthscale".into()));
        }
        if let Some(d) = self
            .lengthscales
            .iter()
            .find(|d| !(d.is_finite() && **d > 0.0))
        {
            return Err(Error::Validation(format!("lengthscale must be positive, got {d}")));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::Validation(format!(
                "nugget must be non-negative, got {}",
                self.nugget
            )));
        }
        Ok(())
    }

    /// Diagonal of Λ = diag(1/δ²).
    pub fn precisions(&self) -> Vec<f64> {
        self.lengthscales.iter().map(|d| 1.0 / (d * d)).collect()
    }

    fn corr_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let s: f64 = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), d)| {
                let t = (a - b) / d;
                t * t
            })
            .sum();
        (-s).exp()
    }
}

/// `exp{-Σ ((x_i - x'_i)/δ_i)²}`. The nugget is not added here; it belongs on
/// the diagonal of the training matrix only.
pub fn eval_correlation(kernel: &KernelSpec, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    if x.len() != kernel.dim() {
        return Err(Error::dims("correlation input x", kernel.dim(), x.len()));
    }
    if x_prime.len() != kernel.dim() {
        return Err(Error::dims("correlation input x'", kernel.dim(), x_prime.len()));
    }
    Ok(kernel.corr_unchecked(x, x_prime))
}

/// Regression basis `h(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrendBasis {
    #[serde(rename = "constant")]
    Constant,
    #[serde(rename = "constant+linear")]
    ConstantLinear,
    /// `(1, x_1..x_p, x_1²..x_p²)`, without cross terms.
    #[serde(rename = "constant+linear+quadratic")]
    Quadratic,
}

impl TrendBasis {
    pub fn len(&self, p: usize) -> usize {
        match self {
            TrendBasis::Constant => 1,
            TrendBasis::ConstantLinear => 1 + p,
            TrendBasis::Quadratic => 1 + 2 * p,
        }
    }

    pub fn eval(&self, z: &[f64]) -> DVector<f64> {
        let p = z.len();
        let mut h = DVector::zeros(self.len(p));
        h[0] = 1.0;
        if matches!(self, TrendBasis::ConstantLinear | TrendBasis::Quadratic) {
            for (i, v) in z.iter().enumerate() {
                h[1 + i] = *v;
            }
        }
        if matches!(self, TrendBasis::Quadratic) {
            for (i, v) in z.iter().enumerate() {
                h[1 + p + i] = v * v;
            }
        }
        h
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrendBasis::Constant => "constant",
            TrendBasis::ConstantLinear => "constant+linear",
            TrendBasis::Quadratic => "constant+linear+quadratic",
        }
    }
}

impl std::str::FromStr for TrendBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(TrendBasis::Constant),
            "constant+linear" => Ok(TrendBasis::ConstantLinear),
            "constant+linear+quadratic" => Ok(TrendBasis::Quadratic),
            other => Err(Error::Validation(format!("unknown trend basis '{other}'"))),
        }
    }
}

/// Training runs: inputs (rows of `x`, raw units), outputs and the declared
/// input domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub f: DVector<f64>,
    pub domains: Vec<Domain>,
}

impl Design {
    pub fn new(x: DMatrix<f64>, f: DVector<f64>, domains: Vec<Domain>) -> Result<Self> {
        let d = Self { x, f, domains };
        d.validate()?;
        Ok(d)
    }

    pub fn from_rows(rows: &[Vec<f64>], f: &[f64], domains: Vec<Domain>) -> Result<Self> {
        let x = linalg::rows_to_matrix(rows, "design")?;
        Self::new(x, DVector::from_column_slice(f), domains)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().cloned().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.f.len() != self.x.nrows() {
            return Err(Error::dims("design outputs", self.x.nrows(), self.f.len()));
        }
        if self.domains.len() != self.x.ncols() {
            return Err(Error::dims("design domains", self.x.ncols(), self.domains.len()));
        }
        for (j, dom) in self.domains.iter().enumerate() {
            dom.validate().map_err(|e| e.context(format!("input {j}")))?;
        }
        for i in 0..self.n() {
            if !self.f[i].is_finite() {
                return Err(Error::Validation(format!("output {i} is not finite")));
            }
            for j in 0..self.p() {
                let v = self.x[(i, j)];
                if !v.is_finite() || !self.domains[j].contains(v) {
                    return Err(Error::Validation(format!(
                        "design point {i} input {j} = {v} outside [{}, {}]",
                        self.domains[j].lower, self.domains[j].upper
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.domains)
            .map(|(v, d)| d.to_unit(*v))
            .collect()
    }

    pub(crate) fn standardized(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.p(), |i, j| self.domains[j].to_unit(self.x[(i, j)]))
    }

    /// Copy of the design with run `i` removed.
    pub fn without(&self, i: usize) -> Design {
        Design {
            x: self.x.clone().remove_row(i),
            f: self.f.clone().remove_row(i),
            domains: self.domains.clone(),
        }
    }
}

pub(crate) fn correlation_matrix(z: &DMatrix<f64>, kernel: &KernelSpec) -> DMatrix<f64> {
    let n = z.nrows();
    let rows: Vec<Vec<f64>> = linalg::matrix_to_rows(z);
    let mut r = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = kernel.corr_unchecked(&rows[i], &rows[j]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

pub(crate) fn trend_matrix(z: &DMatrix<f64>, trend: TrendBasis) -> DMatrix<f64> {
    let q = trend.len(z.ncols());
    let mut h = DMatrix::zeros(z.nrows(), q);
    for i in 0..z.nrows() {
        let zi: Vec<f64> = z.row(i).iter().cloned().collect();
        h.set_row(i, &trend.eval(&zi).transpose());
    }
    h
}

/// A Gaussian-process emulator conditioned on a design at fixed
/// hyperparameters. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpEmulator {
    design: Design,
    trend: TrendBasis,
    kernel: KernelSpec,
    seed: u64,
    report: Option<FitReport>,
    beta_hat: DVector<f64>,
    sigma2_hat: f64,
    z_rows: Vec<Vec<f64>>,
    h: DMatrix<f64>,
    chol: Chol,
    r_inv: DMatrix<f64>,
    /// HᵀR̃⁻¹ (q × n)
    b: DMatrix<f64>,
    k_chol: Chol,
    k_inv: DMatrix<f64>,
    /// R̃⁻¹(F − Hβ̂)
    gamma: DVector<f64>,
}

/// Posterior mean and variance at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn moments(&self) -> GaussianMoments {
        GaussianMoments::scalar(self.mean, self.variance)
    }
}

impl GpEmulator {
    /// Conditions on `design` at fixed hyperparameters. If the training
    /// correlation matrix does not factorise, the nugget is raised to 1e-6 and
    /// then 1e-4 before giving up.
    pub fn condition(design: Design, trend: TrendBasis, kernel: KernelSpec) -> Result<Self> {
        design.validate()?;
        kernel.validate()?;
        if kernel.dim() != design.p() {
            return Err(Error::dims("kernel lengthscales", design.p(), kernel.dim()));
        }
        let q = trend.len(design.p());
        if design.n() <= q {
            return Err(Error::Precondition(format!(
                "need more than q = {q} runs to condition a {q}-term trend, got {}",
                design.n()
            )));
        }
        let mut nuggets = vec![kernel.nugget];
        nuggets.extend(NUGGET_LADDER.iter().filter(|&&t| t > kernel.nugget));
        let mut last_err = None;
        for tau2 in nuggets {
            let k = KernelSpec {
                nugget: tau2,
                ..kernel.clone()
            };
            match Self::build(design.clone(), trend, k) {
                Ok(em) => return Ok(em),
                Err(e) => last_err = Some(e),
            }
        }
        Err(Error::FitFailure(format!(
            "training correlation matrix is singular for lengthscales {:?} at every nugget up to {:e}: {}",
            kernel.lengthscales,
            NUGGET_LADDER[NUGGET_LADDER.len() - 1],
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )))
    }

    fn build(design: Design, trend: TrendBasis, kernel: KernelSpec) -> Result<Self> {
        let n = design.n();
        let q = trend.len(design.p());
        let z = design.standardized();
        let h = trend_matrix(&z, trend);
        let mut r = correlation_matrix(&z, &kernel);
        for i in 0..n {
            r[(i, i)] += kernel.nugget;
        }
        let chol = linalg::cholesky(&r)
            .ok_or_else(|| Error::NotPositiveDefinite("training correlation matrix".into()))?;
        let r_inv_h = chol.solve(&h);
        let mut k = h.transpose() * &r_inv_h;
        linalg::symmetrize(&mut k);
        let k_chol = linalg::cholesky(&k)
            .ok_or_else(|| Error::NotPositiveDefinite("trend information matrix HᵀR⁻¹H".into()))?;
        let beta_hat = k_chol.solve(&(r_inv_h.transpose() * &design.f));
        let resid = &design.f - &h * &beta_hat;
        let gamma = chol.solve(&resid);
        let s2 = resid.dot(&gamma);
        // Exactly reproducible data leaves only rounding in s2; keep σ̂² at a
        // floor tied to the output scale so intervals stay well defined.
        let f_scale = design.f.amax().max(1.0);
        let sigma2_hat = (s2 / sigma2_denominator(n, q)).max(1e-20 * f_scale * f_scale);
        let mut r_inv = chol.inverse();
        linalg::symmetrize(&mut r_inv);
        let b = r_inv_h.transpose();
        let k_inv = k_chol.inverse();
        let z_rows = linalg::matrix_to_rows(&z);
        Ok(Self {
            design,
            trend,
            kernel,
            seed: 0,
            report: None,
            beta_hat,
            sigma2_hat,
            z_rows,
            h,
            chol,
            r_inv,
            b,
            k_chol,
            k_inv,
            gamma,
        })
    }

    pub(crate) fn with_fit_info(mut self, seed: u64, report: Option<FitReport>) -> Self {
        self.seed = seed;
        self.report = report;
        self
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn trend(&self) -> TrendBasis {
        self.trend
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.sigma2_hat
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fit_report(&self) -> Option<&FitReport> {
        self.report.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.design.p()
    }

    pub fn trend_len(&self) -> usize {
        self.h.ncols()
    }

    /// Student-t degrees of freedom, n − q.
    pub fn degrees_of_freedom(&self) -> usize {
        self.design.n() - self.trend_len()
    }

    pub(crate) fn z_rows(&self) -> &[Vec<f64>] {
        &self.z_rows
    }

    pub(crate) fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub(crate) fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    pub(crate) fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub(crate) fn k_inv(&self) -> &DMatrix<f64> {
        &self.k_inv
    }

    /// Correlations between a standardised input and every design point.
    pub(crate) fn corr_vector(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.z_rows.len(),
            self.z_rows.iter().map(|zi| self.kernel.corr_unchecked(z, zi)),
        )
    }

    /// Posterior mean and variance given the trend vector and correlation
    /// vector at the point of interest.
    pub(crate) fn moments_from(&self, h: &DVector<f64>, r: &DVector<f64>) -> Prediction {
        let (mean, raw) = self.unscaled_moments(h, r);
        Prediction {
            mean,
            variance: self.sigma2_hat * clip_variance(raw),
        }
    }

    /// Posterior mean and the variance divided by σ̂², before clipping.
    pub(crate) fn unscaled_moments(&self, h: &DVector<f64>, r: &DVector<f64>) -> (f64, f64) {
        let mean = h.dot(&self.beta_hat) + r.dot(&self.gamma);
        let u = self.chol.solve(r);
        let g = h - &self.b * r;
        let trend_term = g.dot(&self.k_chol.solve(&g));
        (mean, 1.0 + self.kernel.nugget - r.dot(&u) + trend_term)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("prediction input", self.input_dim(), x.len()));
        }
        let z = self.design.standardize(x);
        let h = self.trend.eval(&z);
        let r = self.corr_vector(&z);
        Ok(self.moments_from(&h, &r))
    }
}

/// Divisor of the GLS residual sum of squares in σ̂²: n − q − 2 (the posterior
/// mean of σ² under the reference prior), falling back to n − q when that is
/// not positive.
pub fn sigma2_denominator(n: usize, q: usize) -> f64 {
    let dof = n - q;
    if dof > 2 {
        (dof - 2) as f64
    } else {
        dof as f64
    }
}

/// Rounding can push `1 + τ² − rᵀR̃⁻¹r + trend term` slightly below zero near
/// design points; those are clipped. Anything larger signals a broken factorisation.
pub(crate) fn clip_variance(raw: f64) -> f64 {
    debug_assert!(raw > -1e-6, "predictive variance factor {raw} is negative");
    raw.max(0.0)
}

/// Posterior moments at `x_star` (raw input units).
pub fn predict_gp(em: &GpEmulator, x_star: &[f64]) -> Result<GaussianMoments> {
    em.predict(x_star).map(|p| p.moments())
}
