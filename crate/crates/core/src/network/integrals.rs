//! Expectations of squared-exponential correlations under a Gaussian input.
//!
//! With Λ = diag(1/δ²) and X ~ N(µ, Σ), every quantity below is an
//! unnormalised Gaussian integral. These functions evaluate the textbook
//! closed forms directly; the linked-emulator code uses an algebraically
//! equivalent factorisation that is exact at Σ = 0.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::KernelSpec;
use crate::linalg;
use crate::moments::GaussianMoments;

fn check(kernel: &KernelSpec, points: &[&[f64]], law: &GaussianMoments) -> Result<()> {
    kernel.validate()?;
    let p = kernel.dim();
    if law.dim() != p {
        return Err(Error::dims("input law", p, law.dim()));
    }
    for x in points {
        if x.len() != p {
            return Err(Error::dims("design point", p, x.len()));
        }
    }
    linalg::check_psd(&law.cov, "input covariance")
}

/// E[exp{−(X − c)ᵀA(X − c)}] for diagonal A = diag(a) with a > 0:
/// |I + 2ΣA|^(−1/2) · exp{−(µ − c)ᵀ(A⁻¹ + 2Σ)⁻¹(µ − c)}.
fn gaussian_exp_quadratic(law: &GaussianMoments, c: &DVector<f64>, a: &[f64]) -> Result<f64> {
    let p = a.len();
    let sigma = &law.cov;
    let m = DMatrix::from_fn(p, p, |i, j| {
        f64::from(u8::from(i == j)) + 2.0 * sigma[(i, j)] * a[j]
    });
    let det = m.determinant();
    let mut s = sigma * 2.0;
    for (k, ak) in a.iter().enumerate() {
        s[(k, k)] += 1.0 / ak;
    }
    let chol = linalg::cholesky(&s)
        .ok_or_else(|| Error::NotPositiveDefinite("A⁻¹ + 2Σ".into()))?;
    let u = &law.mean - c;
    let quad = u.dot(&chol.solve(&u));
    Ok(det.powf(-0.5) * (-quad).exp())
}

/// ξ = E[r(X, x_i)].
pub fn gauss_kernel_mean(kernel: &KernelSpec, x_i: &[f64], law: &GaussianMoments) -> Result<f64> {
    check(kernel, &[x_i], law)?;
    gaussian_exp_quadratic(law, &DVector::from_column_slice(x_i), &kernel.precisions())
}

/// ζ = E[r(X, x_i)·r(X, x_j)]. The product of the two correlations is
/// exp{−½(x_i − x_j)ᵀΛ(x_i − x_j)} times a squared-exponential in X centred
/// at the midpoint with precision 2Λ.
pub fn gauss_kernel_second(
    kernel: &KernelSpec,
    x_i: &[f64],
    x_j: &[f64],
    law: &GaussianMoments,
) -> Result<f64> {
    check(kernel, &[x_i, x_j], law)?;
    let lambda = kernel.precisions();
    let xi = DVector::from_column_slice(x_i);
    let xj = DVector::from_column_slice(x_j);
    let d = &xi - &xj;
    let sep: f64 = d.iter().zip(&lambda).map(|(dk, l)| l * dk * dk).sum();
    let mid = (xi + xj) * 0.5;
    let doubled: Vec<f64> = lambda.iter().map(|l| 2.0 * l).collect();
    Ok((-0.5 * sep).exp() * gaussian_exp_quadratic(law, &mid, &doubled)?)
}

/// E[X·r(X, x_i)] = ξ·µ̃, where µ̃ = µ + Σ(Σ + (2Λ)⁻¹)⁻¹(x_i − µ) is the mean of
/// the Gaussian obtained by tilting N(µ, Σ) with the correlation.
pub fn gauss_kernel_linear(
    kernel: &KernelSpec,
    x_i: &[f64],
    law: &GaussianMoments,
) -> Result<DVector<f64>> {
    check(kernel, &[x_i], law)?;
    let lambda = kernel.precisions();
    let xi = DVector::from_column_slice(x_i);
    let xi_mean = gaussian_exp_quadratic(law, &xi, &lambda)?;
    let mut s = law.cov.clone();
    for (k, l) in lambda.iter().enumerate() {
        s[(k, k)] += 0.5 / l;
    }
    let chol = linalg::cholesky(&s)
        .ok_or_else(|| Error::NotPositiveDefinite("Σ + (2Λ)⁻¹".into()))?;
    let tilted = &law.mean + &law.cov * chol.solve(&(&xi - &law.mean));
    Ok(tilted * xi_mean)
}
