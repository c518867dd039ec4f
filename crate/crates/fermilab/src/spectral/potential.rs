use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use super::quad::{adaptive_gk, gauss_hermite};
use super::Grid;
use crate::{Error, Result};

/// Analytic pair interaction.
///
/// `Gaussian` is `u0 exp(-|x|^2 / (2 sigma^2))`; `Cosine` is `u0 cos(k0 x_1)`,
/// whose transform is a pair of point masses at `+-k0 e_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Gaussian { u0: f64, sigma: f64 },
    Cosine { u0: f64, k0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    pub dim: usize,
    /// `||U||_m = int |U^(xi)| |xi|^m dxi` for `m = 0..=m_max`.
    pub moment_norms: Vec<f64>,
    pub kappa1: f64,
}

pub const DEFAULT_M_MAX: usize = 20;

impl Potential {
    pub fn new(kind: PotentialKind, dim: usize, m_max: usize) -> Result<Self> {
        match kind {
            PotentialKind::Gaussian { sigma, .. } if !(sigma > 0.0) => {
                return Err(Error::UnsupportedPotential(format!("gaussian width must be positive, got {sigma}")))
            }
            PotentialKind::Cosine { k0, .. } if !(k0 >= 0.0) => {
                return Err(Error::UnsupportedPotential(format!("cosine wavenumber must be nonnegative, got {k0}")))
            }
            _ => {}
        }
        let mut p = Potential { kind, dim, moment_norms: Vec::new(), kappa1: 0.0 };
        let (norms, kappa1) = potential_norms(&p, m_max)?;
        p.moment_norms = norms;
        p.kappa1 = kappa1;
        Ok(p)
    }

    pub fn gaussian(u0: f64, sigma: f64) -> Self {
        Potential::new(PotentialKind::Gaussian { u0, sigma }, 1, DEFAULT_M_MAX).expect("valid gaussian potential")
    }

    pub fn cosine(u0: f64, k0: f64) -> Self {
        Potential::new(PotentialKind::Cosine { u0, k0 }, 1, DEFAULT_M_MAX).expect("valid cosine potential")
    }

    pub fn zero() -> Self {
        Potential::gaussian(0.0, 1.0)
    }

    pub fn is_zero(&self) -> bool {
        match self.kind {
            PotentialKind::Gaussian { u0, .. } | PotentialKind::Cosine { u0, .. } => u0 == 0.0,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            PotentialKind::Gaussian { u0, sigma } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                u0 * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            PotentialKind::Cosine { u0, k0 } => u0 * (k0 * x[0]).cos(),
        }
    }

    /// Gradient of `U` (first component only needed in one dimension).
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            PotentialKind::Gaussian { sigma, .. } => {
                let u = self.value(x);
                x.iter().map(|&xi| -xi / (sigma * sigma) * u).collect()
            }
            PotentialKind::Cosine { u0, k0 } => {
                let mut g = vec![0.0; x.len()];
                g[0] = -u0 * k0 * (k0 * x[0]).sin();
                g
            }
        }
    }

    /// `sup |grad U|`.
    pub fn gradient_sup(&self) -> f64 {
        match self.kind {
            PotentialKind::Gaussian { u0, sigma } => u0.abs() / sigma * (-0.5f64).exp(),
            PotentialKind::Cosine { u0, k0 } => u0.abs() * k0,
        }
    }

    /// Density of the transform `U^(q) = (2 pi)^{-d} int e^{-iqx} U(x) dx`;
    /// zero for the cosine kind, whose spectrum is atomic.
    pub fn fourier(&self, q: &[f64]) -> f64 {
        match self.kind {
            PotentialKind::Gaussian { u0, sigma } => {
                let d = self.dim as f64;
                let q2: f64 = q.iter().map(|v| v * v).sum();
                u0 * (sigma * sigma / (2.0 * PI)).powf(d / 2.0) * (-sigma * sigma * q2 / 2.0).exp()
            }
            PotentialKind::Cosine { .. } => 0.0,
        }
    }

    /// Nodes and weights `(q, w)` with `sum w f(q) ~ int U^(q) f(q) dq` in one dimension.
    pub fn spectral_rule(&self, order: usize) -> Vec<(f64, f64)> {
        match self.kind {
            PotentialKind::Gaussian { u0, sigma } => {
                let s = 2f64.sqrt() / sigma;
                gauss_hermite(order).into_iter().map(|(y, w)| (s * y, u0 / PI.sqrt() * w)).collect()
            }
            PotentialKind::Cosine { u0, k0 } => vec![(k0, u0 / 2.0), (-k0, u0 / 2.0)],
        }
    }

    /// Fourier coefficients `c_q` of the periodized potential on the torus of
    /// `grid`, in FFT order along one axis (one-dimensional grids only), so that
    /// `U_per(x) = sum_q c_q e^{iqx}`.
    pub fn lattice_coeffs(&self, grid: &Grid) -> Result<Vec<f64>> {
        if grid.dim != 1 {
            return Err(Error::Structural("lattice coefficients are tabulated for one-dimensional grids".into()));
        }
        let dk = grid.dual_spacing();
        match self.kind {
            PotentialKind::Gaussian { .. } => Ok(grid.frequencies().iter().map(|&q| dk * self.fourier(&[q])).collect()),
            PotentialKind::Cosine { u0, k0 } => {
                if !grid.on_dual_lattice(k0, 1e-9) {
                    return Err(Error::UnsupportedPotential(format!(
                        "cosine wavenumber {k0} is not a multiple of the dual spacing {dk}"
                    )));
                }
                let m = (k0 / dk).round() as i64;
                if m.unsigned_abs() as usize >= grid.points / 2 {
                    return Err(Error::Resolution(format!("cosine wavenumber {k0} beyond the Nyquist limit")));
                }
                let mut c = vec![0.0; grid.points];
                c[grid.slot(m)] += u0 / 2.0;
                c[grid.slot(-m)] += u0 / 2.0;
                Ok(c)
            }
        }
    }

    /// Band-limited periodized potential sampled on the relative-coordinate
    /// lattice: entry `i` is `U_per(x_i + L)`, i.e. the value at separation `i h`.
    pub fn separation_table(&self, grid: &Grid) -> Result<Vec<f64>> {
        let c = self.lattice_coeffs(grid)?;
        let n = grid.points;
        let h = grid.spacing();
        let ks = grid.frequencies();
        Ok((0..n)
            .map(|i| {
                let z = i as f64 * h;
                c.iter().zip(&ks).map(|(cq, k)| cq * (k * z).cos()).sum()
            })
            .collect())
    }
}

fn moment_integrand(p: &Potential, m: usize) -> impl Fn(f64) -> f64 + '_ {
    let d = p.dim;
    let shell = 2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0);
    move |r: f64| {
        let q: Vec<f64> = std::iter::once(r).chain(std::iter::repeat(0.0).take(d - 1)).collect();
        shell * p.fourier(&q).abs() * r.powi((m + d - 1) as i32)
    }
}

/// Moment norms `||U||_m` for `m = 0..=m_max` and the analyticity constant
/// `kappa1 = max_{1 <= m <= m_max} (||U||_m / m!)^{1/m}`.
pub fn potential_norms(p: &Potential, m_max: usize) -> Result<(Vec<f64>, f64)> {
    if m_max < 1 {
        return Err(Error::Structural("m_max must be at least 1".into()));
    }
    let norms: Vec<f64> = match p.kind {
        PotentialKind::Gaussian { u0, sigma } => {
            if u0 == 0.0 {
                vec![0.0; m_max + 1]
            } else {
                (0..=m_max)
                    .map(|m| {
                        let peak = (((m + p.dim) as f64 - 1.0).max(0.0)).sqrt() / sigma;
                        let cut = peak + 14.0 / sigma;
                        let f = moment_integrand(p, m);
                        // split at the peak so both panels are unimodal
                        let a = adaptive_gk(&f, 0.0, peak.max(1e-3 / sigma), 1e-12, 0.0);
                        let b = adaptive_gk(&f, peak.max(1e-3 / sigma), cut, 1e-12, 0.0);
                        a + b
                    })
                    .collect()
            }
        }
        PotentialKind::Cosine { u0, k0 } => (0..=m_max).map(|m| u0.abs() * k0.powi(m as i32)).collect(),
    };
    if norms.iter().any(|v| !v.is_finite()) {
        return Err(Error::UnsupportedPotential("divergent moment integral".into()));
    }
    let kappa1 = (1..=m_max)
        .map(|m| ((norms[m].ln() - ln_gamma(m as f64 + 1.0)) / m as f64).exp())
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    Ok((norms, kappa1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_norm_closed_form(u0: f64, sigma: f64, d: usize, m: usize) -> f64 {
        let d = d as f64;
        let m = m as f64;
        u0.abs() * gamma((m + d) / 2.0) / gamma(d / 2.0) * (2f64.sqrt() / sigma).powf(m)
    }

    #[test]
    fn gaussian_mass_and_moments_match_gamma_closed_form() {
        for &(u0, sigma, d) in &[(1.0, 1.0, 1usize), (0.5, 0.7, 1), (2.0, 1.3, 3)] {
            let p = Potential::new(PotentialKind::Gaussian { u0, sigma }, d, 20).unwrap();
            for m in 0..=20 {
                let want = gaussian_norm_closed_form(u0, sigma, d, m);
                assert!((p.moment_norms[m] - want).abs() <= 1e-8 * want, "m={m} d={d}");
            }
        }
        let p = Potential::gaussian(1.0, 1.0);
        assert!((p.moment_norms[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cosine_norms_are_powers() {
        let p = Potential::cosine(1.0, 1.0);
        assert!(p.moment_norms.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((p.kappa1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_kappa_attained_at_small_m_with_equality() {
        let p = Potential::gaussian(1.0, 1.0);
        let ratios: Vec<f64> = (1..=20)
            .map(|m| gaussian_norm_closed_form(1.0, 1.0, 1, m) / gamma(m as f64 + 1.0))
            .collect();
        // beyond the maximizer the Stirling-dominated tail decreases monotonically
        for w in ratios.windows(2).skip(1) {
            assert!(w[1] < w[0]);
        }
        let mut best = (0usize, 0.0);
        for m in 1..=20 {
            let v = (p.moment_norms[m] / gamma(m as f64 + 1.0)).powf(1.0 / m as f64);
            if v > best.1 {
                best = (m, v);
            }
            assert!(p.moment_norms[m] <= p.kappa1.powi(m as i32) * gamma(m as f64 + 1.0) * (1.0 + 1e-12));
        }
        assert!(best.0 <= 2);
        assert!((p.moment_norms[best.0] - p.kappa1.powi(best.0 as i32) * gamma(best.0 as f64 + 1.0)).abs() < 1e-12);
        assert!((p.kappa1 - (2.0 / PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn spectral_rule_integrates_transform() {
        let p = Potential::gaussian(1.0, 0.8);
        // int U^(q) e^{iqx} dq = U(x)
        for &x in &[0.0, 0.5, 1.3] {
            let v: f64 = p.spectral_rule(40).iter().map(|(q, w)| w * (q * x).cos()).sum();
            assert!((v - p.value(&[x])).abs() < 1e-12);
        }
        let c = Potential::cosine(0.7, 2.0);
        let v: f64 = c.spectral_rule(4).iter().map(|(q, w)| w * (q * 0.3).cos()).sum();
        assert!((v - c.value(&[0.3])).abs() < 1e-14);
    }

    #[test]
    fn separation_table_reproduces_potential() {
        let g = Grid::line(128, 8.0).unwrap();
        let p = Potential::gaussian(1.0, 1.0);
        let t = p.separation_table(&g).unwrap();
        let h = g.spacing();
        for (i, v) in t.iter().enumerate() {
            let z = g.wrap(i as f64 * h);
            assert!((v - p.value(&[z])).abs() < 1e-12);
        }
        let c = Potential::cosine(1.0, g.dual_spacing() * 3.0);
        let t = c.separation_table(&g).unwrap();
        for (i, v) in t.iter().enumerate() {
            assert!((v - c.value(&[i as f64 * h])).abs() < 1e-12);
        }
        assert!(Potential::cosine(1.0, 1.0).lattice_coeffs(&g).is_err());
    }

    #[test]
    fn gradient_sup_bounds_samples() {
        let p = Potential::gaussian(1.3, 0.6);
        let s = p.gradient_sup();
        let mut best: f64 = 0.0;
        for i in 0..2000 {
            let x = -3.0 + 6.0 * i as f64 / 2000.0;
            best = best.max(p.gradient(&[x])[0].abs());
        }
        assert!(best <= s + 1e-12 && best > s * 0.999);
    }
}
