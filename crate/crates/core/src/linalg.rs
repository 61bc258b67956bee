//! Small dense linear-algebra helpers shared by the GP, DLM and propagation code.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) type Chol = Cholesky<f64, Dyn>;

pub(crate) fn cholesky(m: &DMatrix<f64>) -> Option<Chol> {
    let chol = Cholesky::new(m.clone())?;
    // nalgebra accepts tiny/negative-rounded pivots as long as they are finite and positive.
    if chol.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
        Some(chol)
    } else {
        None
    }
}

pub(crate) fn log_det(chol: &Chol) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Checks that `m` is square, symmetric and positive semidefinite up to a
/// tolerance relative to its trace.
pub(crate) fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(format!("{what} (square)"), m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    let scale = m.diagonal().iter().map(|d| d.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::NotPositiveDefinite(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let min = min_eigenvalue(m);
    if min < -1e-10 * scale {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has eigenvalue {min:e}"
        )));
    }
    Ok(())
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::dims(format!("{what} row {i}"), ncols, r.len()));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}
