use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Design, GpEmulator, Prediction};
use crate::error::{Error, Result};

/// One row of a leave-one-out or holdout validation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub index: usize,
    pub point: Vec<f64>,
    pub observed: f64,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// `|observed − mean| ≤ 2·sd`; false when the prediction failed.
    pub within_2sd: bool,
    pub error: Option<String>,
}

impl Diagnostic {
    fn from_prediction(index: usize, point: Vec<f64>, observed: f64, pred: Result<Prediction>) -> Self {
        match pred {
            Ok(p) => {
                let sd = p.sd();
                Self {
                    index,
                    point,
                    observed,
                    mean: Some(p.mean),
                    sd: Some(sd),
                    within_2sd: (observed - p.mean).abs() <= 2.0 * sd,
                    error: None,
                }
            }
            Err(e) => Self {
                index,
                point,
                observed,
                mean: None,
                sd: None,
                within_2sd: false,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Fraction of rows whose observation falls inside the two-sd interval.
pub fn coverage(rows: &[Diagnostic]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    rows.iter().filter(|d| d.within_2sd).count() as f64 / rows.len() as f64
}

/// Leave-one-out validation with the hyperparameters held at the emulator's
/// values: each run is dropped in turn, β̂ and σ̂² are re-estimated from the
/// rest, and the dropped run is predicted. A fold that fails to factorise is
/// reported with its error and the run continues.
pub fn loo_diagnostics(em: &GpEmulator) -> Result<Vec<Diagnostic>> {
    let design = em.design();
    let q = em.trend_len();
    if design.n() < q + 4 {
        return Err(Error::Precondition(format!(
            "leave-one-out needs at least q + 4 = {} runs, got {}",
            q + 4,
            design.n()
        )));
    }
    Ok((0..design.n())
        .into_par_iter()
        .map(|i| {
            let point = design.row(i);
            let pred = GpEmulator::condition(design.without(i), em.trend(), em.kernel().clone())
                .and_then(|fold| fold.predict(&point));
            Diagnostic::from_prediction(i, point, design.f[i], pred)
        })
        .collect())
}

/// Predicts held-out runs with the emulator as fitted.
pub fn holdout_diagnostics(em: &GpEmulator, validation: &Design) -> Result<Vec<Diagnostic>> {
    if validation.p() != em.input_dim() {
        return Err(Error::dims("validation inputs", em.input_dim(), validation.p()));
    }
    Ok((0..validation.n())
        .map(|i| {
            let point = validation.row(i);
            let pred = em.predict(&point);
            Diagnostic::from_prediction(i, point, validation.f[i], pred)
        })
        .collect())
}

pub fn rmse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::dims("rmse inputs", truth.len(), predictions.len()));
    }
    if predictions.is_empty() {
        return Err(Error::Validation("rmse of empty vectors".into()));
    }
    let sse: f64 = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let t = [0.5, -1.0, 3.0];
        let p: Vec<f64> = t.iter().map(|v| v - 0.75).collect();
        assert!((rmse(&p, &t).unwrap() - 0.75).abs() < 1e-15);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - (12.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rmse_errors() {
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }
}
