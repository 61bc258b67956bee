//! Moments of a GP emulator's output when its inputs are Gaussian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{clip_variance, GpEmulator, TrendBasis};
use crate::linalg;
use crate::moments::GaussianMoments;

/// Normal approximation to the output of an emulator with uncertain inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedMoments {
    pub mean: f64,
    /// E[V[Y | X]] + V[E[Y | X]].
    pub variance: f64,
    pub expected_variance: f64,
    pub variance_of_mean: f64,
    /// E[∇ₓ E[Y | X]] in raw input units. For any Z jointly Gaussian with X,
    /// Cov(Z, Y) = Cov(Z, X) · mean_gradient.
    pub mean_gradient: DVector<f64>,
}

/// Per-law quantities in standardised coordinates, with Λ = diag(1/δ²) and
/// S = Λ^½ Σ Λ^½:
///
/// - D₁ = Λ^½ (I + 2S)⁻¹ 2S Λ^½, so ξᵢ = r(µ, xᵢ) · exp(uᵢᵀD₁uᵢ − ½ log|I + 2S|)
/// - D₂ = Λ^½ (I + 4S)⁻¹ 8S Λ^½ for the pairwise second moments
/// - T = Λ^-½ (I + 2S)⁻¹ 2S Λ^½, so E[X r(X, xᵢ)] = ξᵢ (µ + T(xᵢ − µ))
///
/// All three vanish at Σ = 0, which makes the zero-variance case reproduce
/// plain prediction bit for bit.
struct LawFactors {
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
    t: DMatrix<f64>,
    half_ld1: f64,
    half_ld2: f64,
}

impl LawFactors {
    fn new(sigma: &DMatrix<f64>, precisions: &[f64]) -> Result<Self> {
        let p = precisions.len();
        let sq: Vec<f64> = precisions.iter().map(|l| l.sqrt()).collect();
        let s = DMatrix::from_fn(p, p, |i, j| sq[i] * sigma[(i, j)] * sq[j]);
        let eye = DMatrix::<f64>::identity(p, p);
        let factor = |c: f64| {
            linalg::cholesky(&(&eye + &s * c))
                .ok_or_else(|| Error::NotPositiveDefinite(format!("I + {c}ΛΣ")))
        };
        let (c1, c2) = (factor(2.0)?, factor(4.0)?);
        let mut p1 = c1.solve(&(&s * 2.0));
        linalg::symmetrize(&mut p1);
        let mut p2 = c2.solve(&(&s * 8.0));
        linalg::symmetrize(&mut p2);
        Ok(Self {
            d1: DMatrix::from_fn(p, p, |i, j| sq[i] * p1[(i, j)] * sq[j]),
            d2: DMatrix::from_fn(p, p, |i, j| sq[i] * p2[(i, j)] * sq[j]),
            t: DMatrix::from_fn(p, p, |i, j| p1[(i, j)] * sq[j] / sq[i]),
            half_ld1: 0.5 * linalg::log_det(&c1),
            half_ld2: 0.5 * linalg::log_det(&c2),
        })
    }
}

fn quad(m: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    u.dot(&(m * u))
}

/// Mean and variance of an emulator's output when its input vector is
/// N(µ, Σ) in raw units. Coordinates with zero variance act as fixed inputs.
/// Only constant and constant+linear trends have closed forms here.
pub fn linked_gp_moments(em: &GpEmulator, law: &GaussianMoments) -> Result<LinkedMoments> {
    let p = em.input_dim();
    if law.dim() != p {
        return Err(Error::dims("input law", p, law.dim()));
    }
    if em.trend() == TrendBasis::Quadratic {
        return Err(Error::Unsupported(
            "uncertain-input moments need a constant or constant+linear trend".into(),
        ));
    }
    if law.mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("input law mean must be finite".into()));
    }
    linalg::check_psd(&law.cov, "input covariance")?;

    let design = em.design();
    let widths: Vec<f64> = design.domains.iter().map(|d| d.width()).collect();
    let mu = DVector::from_vec(design.standardize(law.mean.as_slice()));
    let sigma = DMatrix::from_fn(p, p, |i, j| law.cov[(i, j)] / (widths[i] * widths[j]));
    let lambda = em.kernel().precisions();
    let f = LawFactors::new(&sigma, &lambda)?;

    let z = em.z_rows();
    let n = z.len();
    let us: Vec<DVector<f64>> = z
        .iter()
        .map(|zi| &mu - DVector::from_column_slice(zi))
        .collect();
    let r0 = em.corr_vector(mu.as_slice());
    let corr1: Vec<f64> = us.iter().map(|u| quad(&f.d1, u) - f.half_ld1).collect();
    let xi = DVector::from_fn(n, |i, _| r0[i] * corr1[i].exp());

    let mut c_rr = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let w = (&us[i] + &us[j]) * 0.5;
            let c = quad(&f.d2, &w) - f.half_ld2 - corr1[i] - corr1[j];
            let v = xi[i] * xi[j] * c.exp_m1();
            c_rr[(i, j)] = v;
            c_rr[(j, i)] = v;
        }
    }
    let mut c_xr = DMatrix::zeros(p, n);
    for i in 0..n {
        c_xr.set_column(i, &(&f.t * &us[i] * -xi[i]));
    }

    let q = em.trend_len();
    let h_mean = em.trend().eval(mu.as_slice());
    let mut cov_h = DMatrix::zeros(q, q);
    let mut c_hr = DMatrix::zeros(q, n);
    let linear = q > 1;
    if linear {
        cov_h.view_mut((1, 1), (p, p)).copy_from(&sigma);
        c_hr.view_mut((1, 0), (p, n)).copy_from(&c_xr);
    }
    let b = em.b();
    let cross = &c_hr * b.transpose();
    let mut cov_g = cov_h - &cross - cross.transpose() + b * &c_rr * b.transpose();
    linalg::symmetrize(&mut cov_g);

    let (mean, raw) = em.unscaled_moments(&h_mean, &xi);
    let correction =
        -em.r_inv().component_mul(&c_rr).sum() + em.k_inv().component_mul(&cov_g).sum();
    let expected_variance = em.sigma2_hat() * clip_variance(raw + correction);

    let gamma = em.gamma();
    let beta_x = em.beta_hat().rows(1, q - 1).into_owned();
    let mut var_mean = quad(&c_rr, gamma);
    let mut grad = DVector::zeros(p);
    if linear {
        var_mean += quad(&sigma, &beta_x) + 2.0 * beta_x.dot(&(&c_xr * gamma));
        grad += &beta_x;
    }
    let mut acc = DVector::zeros(p);
    for i in 0..n {
        acc += (&us[i] - &f.t * &us[i]) * (gamma[i] * xi[i]);
    }
    for k in 0..p {
        grad[k] -= 2.0 * lambda[k] * acc[k];
        grad[k] /= widths[k];
    }
    let variance_of_mean = var_mean.max(0.0);
    Ok(LinkedMoments {
        mean,
        variance: expected_variance + variance_of_mean,
        expected_variance,
        variance_of_mean,
        mean_gradient: grad,
    })
}
