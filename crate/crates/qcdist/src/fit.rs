//! Ordinary least-squares line fits for log-log slope estimation.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("degenerate abscissa: all x values coincide")]
    DegenerateAbscissa,
    #[error("non-finite sample ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
}

/// A fitted line y ≈ slope·x + intercept with the root-mean-square residual
/// of the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
}

/// Least-squares line through (x, y) pairs. Requires at least two distinct
/// abscissae and finite data.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit, FitError> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(FitError::TooFewSamples { min: 2, got: n.min(ys.len()) });
    }
    for (&x, &y) in xs.iter().zip(ys) {
        if !x.is_finite() || !y.is_finite() {
            return Err(FitError::NonFinite { x, y });
        }
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|&x| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateAbscissa);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok(LineFit { slope, intercept, rms_residual: (ss / nf).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn reports_residual_for_noisy_data() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.1, 0.9, 2.1];
        let fit = fit_line(&xs, &ys).unwrap();
        assert!(fit.rms_residual > 0.0);
    }

    #[test]
    fn rejects_single_abscissa() {
        assert_eq!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).unwrap_err(), FitError::DegenerateAbscissa);
    }
}
