use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::gamma;

use super::observable::FourierObservable;
use crate::spectral::quad::composite_legendre;
use crate::{Error, Result};

/// Tensor Gauss-Legendre rule on `[-extent, extent]` per axis, split at zero.
#[derive(Clone, Copy, Debug)]
pub struct NormQuadrature {
    pub extent: f64,
    pub order: usize,
    pub panels: usize,
}

impl Default for NormQuadrature {
    fn default() -> Self {
        NormQuadrature { extent: 14.0, order: 10, panels: 4 }
    }
}

impl NormQuadrature {
    fn axis(&self) -> Vec<(f64, f64)> {
        let mut nodes = composite_legendre(self.order, self.panels, -self.extent, 0.0);
        nodes.extend(composite_legendre(self.order, self.panels, 0.0, self.extent));
        nodes
    }
}

fn weight(xi: &[f64], eta: &[f64], alpha: &[usize]) -> f64 {
    alpha.iter().enumerate().map(|(j, &a)| (xi[j].abs() + eta[j].abs()).powi(a as i32)).product()
}

/// `||O||_alpha = int |O| prod_j (|xi_j| + |eta_j|)^{alpha_j} dxi deta` by tensor quadrature.
pub fn alpha_norm(obs: &FourierObservable, alpha: &[usize], quad: &NormQuadrature) -> Result<f64> {
    let l = obs.base_rank;
    if obs.rank() != l || obs.ops().iter().any(|o| matches!(o, super::Collision::A)) {
        return Err(Error::UnsupportedObservable("alpha norms are evaluated on observables without collision slots".into()));
    }
    if alpha.len() != l {
        return Err(Error::Arity(format!("multi-index of length {} for rank {l}", alpha.len())));
    }
    let axis = quad.axis();
    let m = axis.len();
    let dims = 2 * l;
    let total = m.pow(dims as u32);
    let mut sum = 0.0;
    let mut peak = 0.0f64;
    let mut idx = vec![0usize; dims];
    let (mut xi, mut eta) = (vec![0.0; l], vec![0.0; l]);
    for flat in 0..total {
        let mut r = flat;
        for d in idx.iter_mut() {
            *d = r % m;
            r /= m;
        }
        let mut w = 1.0;
        for j in 0..l {
            xi[j] = axis[idx[j]].0;
            eta[j] = axis[idx[l + j]].0;
            w *= axis[idx[j]].1 * axis[idx[l + j]].1;
        }
        let f = obs.value(&xi, &eta, &[]).norm() * weight(&xi, &eta, alpha);
        peak = peak.max(f);
        sum += w * f;
    }
    let x = quad.extent;
    let mut edge = 0.0f64;
    for d in 0..dims {
        for &sgn in &[-1.0, 1.0] {
            let (mut a, mut b) = (vec![0.0; l], vec![0.0; l]);
            if d < l {
                a[d] = sgn * x;
            } else {
                b[d - l] = sgn * x;
            }
            edge = edge.max(obs.value(&a, &b, &[]).norm() * weight(&a, &b, alpha));
        }
    }
    if edge > 1e-10 * peak {
        return Err(Error::Resolution(format!("integrand is {edge:.2e} at the window edge {x}")));
    }
    Ok(sum)
}

/// `int e^{-d^2 x^2/4} |x|^k dx = (2/d)^{k+1} Gamma((k+1)/2)`.
pub fn gaussian_moment(delta: f64, k: usize) -> f64 {
    (2.0 / delta).powi(k as i32 + 1) * gamma((k as f64 + 1.0) / 2.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact `||F_{d1,d2}||_alpha` of the Gaussian product observable.
pub fn gaussian_alpha_norm(delta1: f64, delta2: f64, alpha: &[usize]) -> f64 {
    alpha
        .iter()
        .map(|&a| (0..=a).map(|k| binomial(a, k) * gaussian_moment(delta1, k) * gaussian_moment(delta2, a - k)).sum::<f64>())
        .product()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `C_0 = sup_a ||F^(1)||_a / (kappa2^a a!)`, so that `||F^(l)||_alpha <= C_0^l kappa2^|alpha| prod alpha_j!`.
pub fn observable_c0(delta1: f64, delta2: f64, kappa2: f64) -> f64 {
    let mut best = 0.0f64;
    let mut a = 0;
    let mut stale = 0;
    while stale < 20 && a < 170 {
        let v = gaussian_alpha_norm(delta1, delta2, &[a]) / (kappa2.powi(a as i32) * factorial(a));
        if v > best {
            best = v;
            stale = 0;
        } else {
            stale += 1;
        }
        a += 1;
    }
    best
}

/// Constants of the Gaussian-norm bound
/// `||F||_alpha <= (C1/(d1 d2))^l C2^{l/(d^2 kappa^2)} kappa^|alpha| prod alpha_j!`, `1/d = 1/d1 + 1/d2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GaussianLemmaFit {
    pub c1: f64,
    pub c2: f64,
}

pub const LEMMA_ALPHA_MAX: usize = 6;
pub const LEMMA_DELTAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const LEMMA_KAPPAS: [f64; 2] = [0.5, 1.0];

fn reduced(delta1: f64, delta2: f64) -> f64 {
    1.0 / (1.0 / delta1 + 1.0 / delta2)
}

impl GaussianLemmaFit {
    /// Smallest `C2` with `C1 = 4 pi` that covers the one-slot grid; products give every rank.
    pub fn fit() -> Self {
        let c1 = 4.0 * PI;
        let mut c2 = 1.0f64;
        for &d1 in &LEMMA_DELTAS {
            for &d2 in &LEMMA_DELTAS {
                let d = reduced(d1, d2);
                for &kappa in &LEMMA_KAPPAS {
                    for a in 0..=LEMMA_ALPHA_MAX {
                        let ratio = gaussian_alpha_norm(d1, d2, &[a]) * d1 * d2 / (c1 * kappa.powi(a as i32) * factorial(a));
                        c2 = c2.max(ratio.powf(d * d * kappa * kappa));
                    }
                }
            }
        }
        GaussianLemmaFit { c1, c2 }
    }

    pub fn bound(&self, delta1: f64, delta2: f64, kappa: f64, alpha: &[usize]) -> f64 {
        let l = alpha.len() as f64;
        let d = reduced(delta1, delta2);
        let total: usize = alpha.iter().sum();
        (self.c1 / (delta1 * delta2)).powf(l)
            * self.c2.powf(l / (d * d * kappa * kappa))
            * kappa.powi(total as i32)
            * alpha.iter().map(|&a| factorial(a)).product::<f64>()
    }

    /// Largest ratio `norm / bound` over `alpha <= 6`, ranks 1 and 2 and the lemma grid.
    pub fn worst_ratio(&self) -> f64 {
        let mut worst = 0.0f64;
        for &d1 in &LEMMA_DELTAS {
            for &d2 in &LEMMA_DELTAS {
                for &kappa in &LEMMA_KAPPAS {
                    for a in 0..=LEMMA_ALPHA_MAX {
                        let one = [a];
                        worst = worst.max(gaussian_alpha_norm(d1, d2, &one) / self.bound(d1, d2, kappa, &one));
                        for b in 0..=LEMMA_ALPHA_MAX {
                            let two = [a, b];
                            worst = worst.max(gaussian_alpha_norm(d1, d2, &two) / self.bound(d1, d2, kappa, &two));
                        }
                    }
                }
            }
        }
        worst
    }
}
