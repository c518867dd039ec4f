//! Exchange-term pairings of three-dimensional example states as lattice sums.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::families::{envelope, shell_radius, unit_ball_volume};
use crate::{Error, Result};

/// Three-dimensional state families entering the exchange sums.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LatticeFamily {
    /// Plane waves on `[0, 2 pi]^3` with modes `|k| <= c (N / V_3)^{1/3}`.
    PlaneWave3d { c: f64, n: usize },
    /// Envelope orbitals on the sites `eps Z^3` inside `|x| <= c`, `eps = N^{-1/3}`.
    Localized3d { c: f64, n: usize, sigma: f64 },
}

/// Test functions with closed-form reductions.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "observable", rename_all = "snake_case")]
pub enum ExchangeObservable {
    /// `J1 = prod_a P_r(x1_a - x2_a)` (Poisson kernel), `J2 = exp(-(v1^2 + v2^2) / 2w^2)`.
    Smooth { r: f64, width: f64 },
    /// `J1 = e^{i q (x1 - x2)}`, `J2 = 1`.
    FourierMode { q: [i64; 3] },
    /// `J1 = g(x1) g(x2)` with `g = exp(-x^2 / 2w^2)`, `J2 = 1`.
    Gaussian { width: f64 },
    /// Kernel `1/|x1 - x2|` through its Fourier rule `1/|k|^2`.
    Coulomb,
}

pub type Site = [f64; 3];

/// Modes of the plane-wave ball or the localized sites, with `eps = N^{-1/3}`
/// of the realized count.
pub fn lattice_sites(family: &LatticeFamily) -> (Vec<Site>, f64) {
    match *family {
        LatticeFamily::PlaneWave3d { c, n } => {
            let r = shell_radius(c, n, 3);
            let sites = ball_points(r, 1.0);
            let eps = (sites.len() as f64).powf(-1.0 / 3.0);
            (sites, eps)
        }
        LatticeFamily::Localized3d { c, n, .. } => {
            let eps = (n as f64).powf(-1.0 / 3.0);
            let sites = ball_points(c / eps, eps);
            (sites, eps)
        }
    }
}

fn ball_points(r: f64, scale: f64) -> Vec<Site> {
    let top = (r + 1e-9).floor() as i64;
    let r2 = r * r + 1e-9;
    let mut out = Vec::new();
    for a in -top..=top {
        for b in -top..=top {
            for c in -top..=top {
                if (a * a + b * b + c * c) as f64 <= r2 {
                    out.push([a as f64 * scale, b as f64 * scale, c as f64 * scale]);
                }
            }
        }
    }
    out
}

/// Default ball constant giving about `N` sites.
pub fn unit_count_constant() -> f64 {
    (1.0 / unit_ball_volume(3)).powf(1.0 / 3.0)
}

/// Ordered pair sum `sum_{k, l} f(k, l)` with a deterministic reduction.
fn pair_sum(sites: &[Site], f: impl Fn(&Site, &Site) -> f64 + Sync) -> f64 {
    let rows: Vec<f64> = sites.par_iter().map(|k| sites.iter().map(|l| f(k, l)).sum::<f64>()).collect();
    rows.iter().sum()
}

fn gauss_overlap_1d(a: f64, b: f64, eps: f64, sigma: f64, w: f64) -> f64 {
    // int g(x) eps^{-1} omega((x-a)/eps) omega((x-b)/eps) dx in closed form
    let aa = 1.0 / (2.0 * w * w);
    let bb = 2.0 / (eps * eps * sigma * sigma);
    let m = 0.5 * (a + b);
    let pre = (2.0 / (PI * sigma * sigma)).sqrt() / eps;
    pre * (-(a - b).powi(2) / (2.0 * eps * eps * sigma * sigma)).exp() * (PI / (aa + bb)).sqrt()
        * (-aa * bb * m * m / (aa + bb)).exp()
}

fn gauss_overlap(k: &Site, l: &Site, eps: f64, sigma: f64, w: f64) -> f64 {
    (0..3).map(|i| gauss_overlap_1d(k[i], l[i], eps, sigma, w)).product()
}

/// Realized particle number of a family.
pub fn realized_n(family: &LatticeFamily) -> usize {
    lattice_sites(family).0.len()
}

/// Pairing `<J, W^(2)_ex>` of the exchange part of the two-particle Wigner
/// function; for the Coulomb kernel returns `(1/N^2) sum_{k != l} |k - l|^{-2}`.
pub fn exchange_pairing(family: &LatticeFamily, obs: &ExchangeObservable) -> Result<f64> {
    let (sites, eps) = lattice_sites(family);
    let n = sites.len() as f64;
    if sites.len() < 2 {
        return Err(Error::Arity("exchange pairings need at least two particles".into()));
    }
    let pref = -1.0 / (n * (n - 1.0));
    match (family, obs) {
        (LatticeFamily::PlaneWave3d { .. }, ExchangeObservable::Smooth { r, width }) => {
            let (r, w) = (*r, *width);
            Ok(pref
                * pair_sum(&sites, |k, l| {
                    let d1: f64 = (0..3).map(|i| (k[i] - l[i]).abs()).sum();
                    let u2: f64 = (0..3).map(|i| (0.5 * eps * (k[i] + l[i])).powi(2)).sum();
                    r.powf(d1) * (-u2 / (w * w)).exp()
                }))
        }
        (LatticeFamily::PlaneWave3d { .. }, ExchangeObservable::FourierMode { q }) => {
            let q = [q[0] as f64, q[1] as f64, q[2] as f64];
            Ok(pref * pair_sum(&sites, |k, l| if (0..3).all(|i| k[i] - l[i] == -q[i]) { 1.0 } else { 0.0 }))
        }
        (LatticeFamily::PlaneWave3d { .. }, ExchangeObservable::Coulomb) => Ok(pair_sum(&sites, |k, l| {
            let d2: f64 = (0..3).map(|i| (k[i] - l[i]).powi(2)).sum();
            if d2 == 0.0 {
                0.0
            } else {
                1.0 / d2
            }
        }) / (n * n)),
        (LatticeFamily::Localized3d { sigma, .. }, ExchangeObservable::Gaussian { width }) => {
            let (s, w) = (*sigma, *width);
            Ok(pref * pair_sum(&sites, |k, l| gauss_overlap(k, l, eps, s, w).powi(2)))
        }
        (f, o) => Err(Error::UnsupportedObservable(format!("no closed-form reduction of {o:?} for {f:?}"))),
    }
}

/// `<J, W^(2) - W^(1) (x) W^(1)>` for the quasifree family.
pub fn factorization_defect(family: &LatticeFamily, obs: &ExchangeObservable) -> Result<f64> {
    let (sites, eps) = lattice_sites(family);
    let n = sites.len() as f64;
    let ex = exchange_pairing(family, obs)?;
    let product = match (family, obs) {
        (LatticeFamily::PlaneWave3d { .. }, ExchangeObservable::Smooth { width, .. }) => {
            let w = *width;
            pair_sum(&sites, |k, l| {
                let u2: f64 = (0..3).map(|i| (eps * k[i]).powi(2) + (eps * l[i]).powi(2)).sum();
                (-u2 / (2.0 * w * w)).exp()
            }) / (n * n)
        }
        (LatticeFamily::Localized3d { sigma, .. }, ExchangeObservable::Gaussian { width }) => {
            let diag: f64 = sites.iter().map(|k| gauss_overlap(k, k, eps, *sigma, *width)).sum::<f64>() / n;
            diag * diag
        }
        (f, o) => return Err(Error::UnsupportedObservable(format!("no factorization reduction of {o:?} for {f:?}"))),
    };
    Ok(product / (n - 1.0) + ex)
}

/// Plain-sum reference for the localized overlap integral (test oracle helper).
pub fn envelope_product_1d(x: f64, a: f64, b: f64, eps: f64, sigma: f64) -> f64 {
    envelope((x - a) / eps, sigma) * envelope((x - b) / eps, sigma) / eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::quad::adaptive_gk;

    #[test]
    fn nominal_count_is_close_to_realized() {
        let c = unit_count_constant();
        for n in [64usize, 512, 4096] {
            let r = realized_n(&LatticeFamily::PlaneWave3d { c: 1.0, n }) as f64;
            assert!((r / n as f64 - 1.0).abs() < 0.3, "{n} -> {r}");
            let l = realized_n(&LatticeFamily::Localized3d { c, n, sigma: 0.3 }) as f64;
            assert!((l / n as f64 - 1.0).abs() < 0.3, "{n} -> {l}");
        }
    }

    #[test]
    fn off_lattice_mode_kills_pairing() {
        let fam = LatticeFamily::PlaneWave3d { c: 1.0, n: 64 };
        let r = shell_radius(1.0, 64, 3).ceil() as i64;
        let v = exchange_pairing(&fam, &ExchangeObservable::FourierMode { q: [2 * r + 1, 0, 0] }).unwrap();
        assert!(v.abs() < 1e-12);
        let on = exchange_pairing(&fam, &ExchangeObservable::FourierMode { q: [1, 0, 0] }).unwrap();
        assert!(on < 0.0);
    }

    #[test]
    fn pair_sum_matches_brute_force() {
        let fam = LatticeFamily::PlaneWave3d { c: 1.0, n: 40 };
        let (sites, eps) = lattice_sites(&fam);
        let (r, w): (f64, f64) = (0.4, 1.0);
        let mut brute = 0.0;
        for k in &sites {
            for l in &sites {
                let mut d1 = 0.0;
                let mut u2 = 0.0;
                for i in 0..3 {
                    d1 += (k[i] - l[i]).abs();
                    u2 += (0.5 * eps * (k[i] + l[i])).powi(2);
                }
                brute += r.powf(d1) * (-u2 / (w * w)).exp();
            }
        }
        let n = sites.len() as f64;
        let got = exchange_pairing(&fam, &ExchangeObservable::Smooth { r, width: w }).unwrap();
        assert!((got + brute / (n * (n - 1.0))).abs() < 1e-14);
    }

    #[test]
    fn gaussian_overlap_closed_form() {
        let (eps, sigma, w) = (0.2, 0.4, 0.7);
        for &(a, b) in &[(0.0, 0.0), (0.1, -0.1), (0.3, 0.2)] {
            let num = adaptive_gk(
                |x| (-x * x / (2.0 * w * w)).exp() * envelope_product_1d(x, a, b, eps, sigma),
                -6.0,
                6.0,
                1e-13,
                1e-15,
            );
            assert!((num - gauss_overlap_1d(a, b, eps, sigma, w)).abs() < 1e-11);
        }
    }

    #[test]
    fn unsupported_combination() {
        let fam = LatticeFamily::Localized3d { c: 0.6, n: 64, sigma: 0.3 };
        assert!(matches!(
            exchange_pairing(&fam, &ExchangeObservable::Coulomb),
            Err(Error::UnsupportedObservable(_))
        ));
    }
}

#[cfg(test)]
mod scaling {
    use super::*;

    fn slope(xs: &[f64], ys: &[f64]) -> f64 {
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
        let mx = lx.iter().sum::<f64>() / lx.len() as f64;
        let my = ly.iter().sum::<f64>() / ly.len() as f64;
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn exchange_exponents() {
        let ns = [64usize, 128, 256, 512, 1024, 2048, 4096];
        let mut xs = vec![];
        let mut smooth = vec![];
        let mut coul = vec![];
        for &n in &ns {
            let fam = LatticeFamily::PlaneWave3d { c: 1.0, n };
            xs.push(realized_n(&fam) as f64);
            smooth.push(exchange_pairing(&fam, &ExchangeObservable::Smooth { r: 0.1, width: 1.0 }).unwrap());
            coul.push(exchange_pairing(&fam, &ExchangeObservable::Coulomb).unwrap());
        }
        let s1 = slope(&xs[2..], &smooth[2..]);
        let s2 = slope(&xs[2..], &coul[2..]);
        assert!((s1 + 1.0).abs() < 0.1, "smooth slope {s1}");
        assert!((s2 + 2.0 / 3.0).abs() < 0.1, "coulomb slope {s2}");
    }
}
