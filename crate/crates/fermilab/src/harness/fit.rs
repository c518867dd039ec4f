use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub ci95: f64,
    pub points: usize,
}

impl PowerLawFit {
    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.slope - target).abs() <= tol
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.intercept.exp() * x.powf(self.slope)
    }
}

pub fn fit_power_law(series: &[(f64, f64)]) -> Result<PowerLawFit> {
    if series.len() < 4 {
        return Err(Error::Domain(format!("power-law fits need at least 4 points, got {}", series.len())));
    }
    if let Some(&(x, y)) = series.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::Domain(format!("power-law fits need positive finite data, got ({x}, {y})")));
    }
    let n = series.len() as f64;
    let lx: Vec<f64> = series.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = series.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("power-law fits need at least two distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let dof = n - 2.0;
    let slope_stderr = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Domain(e.to_string()))?.inverse_cdf(0.975);
    Ok(PowerLawFit { slope, intercept, r_squared, slope_stderr, ci95: t * slope_stderr, points: series.len() })
}

/// Drops the `skip` smallest abscissae before fitting.
pub fn fit_excluding_smallest(series: &[(f64, f64)], skip: usize) -> Result<PowerLawFit> {
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    fit_power_law(&sorted[skip.min(sorted.len())..])
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn exact_inverse_law() {
        let s: Vec<_> = (1..=6).map(|k| (k as f64, 1.0 / k as f64)).collect();
        let f = fit_power_law(&s).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(f.intercept.abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.within(-1.0, 1e-9));
    }

    #[test]
    fn noisy_two_thirds_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<_> = (0..12)
            .map(|k| {
                let x = 2f64.powi(k);
                (x, 3.0 * x.powf(-2.0 / 3.0) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
            })
            .collect();
        let f = fit_power_law(&s).unwrap();
        assert!(f.within(-2.0 / 3.0, 0.02), "{}", f.slope);
        assert!(f.ci95 > 0.0 && f.ci95 < 0.02);
        assert!((f.predict(1.0) - 3.0).abs() < 0.1);
    }

    #[test]
    fn bad_series_are_rejected() {
        assert!(matches!(fit_power_law(&[(1.0, 1.0), (2.0, 0.5), (3.0, 0.3)]), Err(Error::Domain(_))));
        assert!(matches!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (3.0, 0.3), (4.0, 0.2)]), Err(Error::Domain(_))));
        assert!(matches!(fit_power_law(&[(1.0, 1.0), (2.0, -0.5), (3.0, 0.3), (4.0, 0.2)]), Err(Error::Domain(_))));
    }

    #[test]
    fn smallest_points_are_dropped() {
        let mut s: Vec<_> = (1..=6).map(|k| (k as f64, (k as f64).powi(-2))).collect();
        s[0].1 = 10.0;
        s[1].1 = 10.0;
        s.reverse();
        let f = fit_excluding_smallest(&s, 2).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert_eq!(f.points, 4);
    }
}
