use serde::Serialize;

use crate::error::{HarnessError, Result};

/// `y ≈ prefactor · x^exponent`, fitted by least squares in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLaw {
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
}

impl PowerLaw {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }

    /// `ln y − ln ŷ(x)`.
    pub fn log_residual(&self, x: f64, y: f64) -> f64 {
        y.ln() - self.eval(x).ln()
    }
}

pub fn power_law_fit(points: &[(f64, f64)]) -> Result<PowerLaw> {
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(HarnessError::InvalidFitInput { x, y });
    }
    if points.len() < 3 {
        return Err(HarnessError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::InvalidFitInput { x: points[0].0, y: points[0].1 });
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    // A constant series has nothing to explain; call the fit exact.
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(PowerLaw { exponent: slope, prefactor: intercept.exp(), r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_inverse_root() {
        let pts: Vec<(f64, f64)> = (1..=128).map(|k| (2.0 * k as f64, 3.0 * (2.0 * k as f64).powf(-0.5))).collect();
        let f = power_law_fit(&pts).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_flat() {
        let f = power_law_fit(&[(1.0, 2.0), (4.0, 2.0), (9.0, 2.0)]).unwrap();
        assert!(f.exponent.abs() < 1e-15);
        assert!((f.prefactor - 2.0).abs() < 1e-14);
    }

    #[test]
    fn noisy_inverse() {
        // Deterministic ±1 pattern keeps the perturbation at exactly 1%.
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|k| {
                let x = (1u64 << k) as f64;
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                (x, (1.0 + 0.01 * s) / x)
            })
            .collect();
        let f = power_law_fit(&pts).unwrap();
        assert!((f.exponent + 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_points() {
        assert!(matches!(power_law_fit(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]), Err(HarnessError::InvalidFitInput { .. })));
        assert!(matches!(power_law_fit(&[(-1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]), Err(HarnessError::InvalidFitInput { .. })));
        assert!(matches!(power_law_fit(&[(1.0, 1.0), (2.0, 1.0)]), Err(HarnessError::TooFewPoints(2))));
    }

    proptest! {
        #[test]
        fn recovers_any_exact_law(e in -2.0f64..2.0, c in 0.01f64..100.0) {
            let pts: Vec<(f64, f64)> = [2.0, 5.0, 11.0, 40.0, 300.0].iter().map(|&x| (x, c * f64::powf(x, e))).collect();
            let f = power_law_fit(&pts).unwrap();
            prop_assert!((f.exponent - e).abs() < 1e-10);
            prop_assert!((f.prefactor / c - 1.0).abs() < 1e-10);
        }
    }
}
