use std::f64::consts::PI;

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::density::{gram_schmidt, lowdin, DensityMatrix, OrbitalSet};
use crate::spectral::Grid;
use crate::{Error, Result, C64};

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / statrs::function::gamma::gamma(h + 1.0)
}

/// Radius of the mode ball holding about `c^d N` lattice points.
pub fn shell_radius(c: f64, n: usize, d: usize) -> f64 {
    c * (n as f64 / unit_ball_volume(d)).powf(1.0 / d as f64)
}

fn require_line(grid: &Grid) -> Result<()> {
    if grid.dim != 1 {
        return Err(Error::Structural("grid state families are one-dimensional".into()));
    }
    Ok(())
}

/// Torus plane waves `e^{i m k x} / sqrt(2L)` for the signed lattice indices `modes`.
pub fn plane_wave(grid: &Grid, modes: &[i64]) -> Vec<ArrayD<C64>> {
    let xs = grid.positions();
    let dk = grid.dual_spacing();
    let norm = 1.0 / (2.0 * grid.extent).sqrt();
    modes
        .iter()
        .map(|&m| {
            let k = m as f64 * dk;
            ArrayD::from_shape_vec(IxDyn(&[grid.points]), xs.iter().map(|&x| C64::from_polar(norm, k * x)).collect())
                .expect("line shape")
        })
        .collect()
}

/// Signed modes `|m| <= R` with `R = c (N / V_1)`.
pub fn shell_modes(c: f64, n: usize) -> Vec<i64> {
    let r = shell_radius(c, n, 1);
    let top = (r + 1e-9).floor() as i64;
    (-top..=top).collect()
}

/// Plane-wave Slater determinant filling the momentum shell; the realized
/// particle number is the number of modes in the shell.
pub fn plane_wave_shell(grid: &Grid, c: f64, n: usize) -> Result<OrbitalSet> {
    require_line(grid)?;
    let modes = shell_modes(c, n);
    let top = modes.iter().map(|m| m.unsigned_abs()).max().unwrap_or(0) as usize;
    if top >= grid.points / 2 {
        return Err(Error::Resolution(format!("shell radius {top} beyond the grid Nyquist index")));
    }
    OrbitalSet::slater(*grid, plane_wave(grid, &modes))
}

/// Normalized Gaussian packet `(pi s^2)^{-1/4} e^{-(x-x0)^2/2s^2} e^{i p x / eps}`.
pub fn gaussian_packet(grid: &Grid, center: f64, width: f64, velocity: f64, eps: f64) -> ArrayD<C64> {
    let norm = (PI * width * width).powf(-0.25);
    let xs = grid.positions();
    ArrayD::from_shape_vec(
        IxDyn(&[grid.points]),
        xs.iter()
            .map(|&x| {
                let z = (x - center) / width;
                C64::from_polar(norm * (-0.5 * z * z).exp(), velocity * x / eps)
            })
            .collect(),
    )
    .expect("line shape")
}

/// First `count` Hermite functions of width `s` centered at `center`.
pub fn hermite_functions(grid: &Grid, count: usize, width: f64, center: f64) -> Vec<ArrayD<C64>> {
    let xs = grid.positions();
    let n = grid.points;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    let h0: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let z = (x - center) / width;
            PI.powf(-0.25) / width.sqrt() * (-0.5 * z * z).exp()
        })
        .collect();
    out.push(h0);
    for j in 0..count.saturating_sub(1) {
        let a = (2.0 / (j as f64 + 1.0)).sqrt();
        let b = (j as f64 / (j as f64 + 1.0)).sqrt();
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let z = (xs[i] - center) / width;
                let prev = if j == 0 { 0.0 } else { out[j - 1][i] };
                a * z * out[j][i] - b * prev
            })
            .collect();
        out.push(next);
    }
    out.truncate(count);
    out.into_iter()
        .map(|v| ArrayD::from_shape_vec(IxDyn(&[n]), v.into_iter().map(|r| C64::new(r, 0.0)).collect()).unwrap())
        .collect()
}

/// Seeded Slater determinant of `count` random orthonormal combinations of
/// Hermite functions of width `width`.
pub fn random_slater(grid: &Grid, count: usize, width: f64, seed: u64) -> Result<OrbitalSet> {
    require_line(grid)?;
    let basis = hermite_functions(grid, count + 3, width, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<ArrayD<C64>> = (0..count)
        .map(|_| {
            let mut f = ArrayD::<C64>::zeros(IxDyn(&[grid.points]));
            for b in &basis {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                let c = C64::new(re, im);
                f.zip_mut_with(b, |x, y| *x += c * y);
            }
            f
        })
        .collect();
    OrbitalSet::slater(*grid, gram_schmidt(grid, &raw))
}

/// Sites `eps j` with `|eps j| <= c`.
pub fn localized_sites(eps: f64, c: f64) -> Vec<f64> {
    let top = (c / eps + 1e-9).floor() as i64;
    (-top..=top).map(|j| j as f64 * eps).collect()
}

/// Envelope `omega(z) = (2 / (pi sigma^2))^{1/4} e^{-z^2 / sigma^2}`.
pub fn envelope(z: f64, sigma: f64) -> f64 {
    (2.0 / (PI * sigma * sigma)).powf(0.25) * (-(z * z) / (sigma * sigma)).exp()
}

/// Closed-form overlap of two envelope orbitals centered at `a` and `b`.
pub fn envelope_overlap(a: f64, b: f64, eps: f64, sigma: f64) -> f64 {
    let s = (a - b) / (eps * sigma);
    (-0.5 * s * s).exp()
}

/// Orbitals `eps^{-1/2} omega((x - k)/eps)` before orthonormalization.
pub fn localized_raw(grid: &Grid, eps: f64, c: f64, sigma: f64) -> Result<Vec<ArrayD<C64>>> {
    require_line(grid)?;
    let width = eps * sigma;
    if width < 2.0 * grid.spacing() {
        return Err(Error::Resolution(format!("envelope width {width} under-resolved by spacing {}", grid.spacing())));
    }
    let xs = grid.positions();
    let sites = localized_sites(eps, c);
    let out: Vec<ArrayD<C64>> = sites
        .iter()
        .map(|&k| {
            let v = xs.iter().map(|&x| C64::new(envelope((x - k) / eps, sigma) / eps.sqrt(), 0.0)).collect();
            ArrayD::from_shape_vec(IxDyn(&[grid.points]), v).unwrap()
        })
        .collect();
    let edge = out.iter().map(|o| o[[0]].norm().max(o[[grid.points - 1]].norm())).fold(0.0, f64::max);
    if edge > 1e-10 {
        return Err(Error::Resolution(format!("envelope does not decay inside the box (edge value {edge:.2e})")));
    }
    Ok(out)
}

/// Localized family, symmetrically orthonormalized.
pub fn localized(grid: &Grid, eps: f64, c: f64, sigma: f64) -> Result<OrbitalSet> {
    let raw = localized_raw(grid, eps, c, sigma)?;
    OrbitalSet::slater(*grid, lowdin(grid, &raw))
}

/// Grid of twice the extent with the same spacing, used for shifted copies.
pub fn doubled_grid(grid: &Grid) -> Result<Grid> {
    Grid::new(grid.dim, 2 * grid.points, 2.0 * grid.extent)
}

/// Wavefunction-level shifted family `psi_k = 2^{-1/2}[phi_k(x + L) + phi_k(x - L)]`
/// on the doubled torus, i.e. two disjoint copies separated by `e = 2L`.
pub fn shifted(base: &OrbitalSet) -> Result<OrbitalSet> {
    require_line(&base.grid)?;
    let g2 = doubled_grid(&base.grid)?;
    let n = base.grid.points;
    let s = 0.5f64.sqrt();
    let orbitals = base
        .orbitals
        .iter()
        .map(|phi| ArrayD::from_shape_fn(IxDyn(&[2 * n]), |i| phi[[i[0] % n]] * s))
        .collect();
    OrbitalSet::new(g2, orbitals, base.weights.clone())
}

/// Kernel `beta [g(x,y) + g(x+e,y) + g(x,y+e) + g(x+e,y+e)]` on the doubled torus,
/// with `beta` fixed by `Tr = 1`.
pub fn shifted_density(base: &DensityMatrix) -> Result<DensityMatrix> {
    if base.rank != 1 || base.grid.dim != 1 {
        return Err(Error::Arity("shifted densities are built from one-dimensional rank-1 kernels".into()));
    }
    let g2 = doubled_grid(&base.grid)?;
    let n = base.grid.points;
    let beta = 1.0 / (2.0 * base.trace().re);
    let kernel = ArrayD::from_shape_fn(IxDyn(&[2 * n, 2 * n]), |i| base.kernel[[i[0] % n, i[1] % n]] * beta);
    DensityMatrix::new(g2, 1, kernel)
}

/// Family parameters recorded with serialized states.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Family {
    PlaneWave { c: f64, n: usize },
    Localized { eps: f64, c: f64, sigma: f64 },
    Random { count: usize, width: f64, seed: u64 },
    Thermal { eps: f64, a: f64, b: f64 },
}

/// Mixed state of Hermite functions with geometric occupations whose rescaled
/// Wigner function is the `eps`-independent Gaussian
/// `(pi a b)^{-1} exp(-x^2/a^2 - v^2/b^2)`.
pub fn thermal_gaussian(grid: &Grid, eps: f64, a: f64, b: f64, tol: f64) -> Result<OrbitalSet> {
    require_line(grid)?;
    let t = eps / (a * b);
    if t >= 1.0 {
        return Err(Error::Precondition(format!("phase-space area a b = {} below eps", a * b)));
    }
    let q = (1.0 - t) / (1.0 + t);
    let count = if q == 0.0 { 1 } else { ((tol.ln() / q.ln()).ceil() as usize).max(1) };
    let width = (a * eps / b).sqrt();
    let basis = hermite_functions(grid, count, width, 0.0);
    let z = (1.0 - q.powi(count as i32)) / (1.0 - q);
    let p: Vec<f64> = (0..count).map(|j| q.powi(j as i32) / z).collect();
    let n = (1.0 / p[0] + 1e-12).floor().max(1.0);
    let weights: Vec<f64> = p.iter().map(|pj| (pj * n).min(1.0)).collect();
    let basis = gram_schmidt(grid, &basis);
    let mut set = OrbitalSet::unchecked(*grid, basis, weights, n as usize);
    let total: f64 = set.weights.iter().sum();
    for w in set.weights.iter_mut() {
        *w *= n / total;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_plane_waves() {
        let grid = Grid::line(32, PI).unwrap();
        assert_eq!(shell_modes(1.0, 9), (-4..=4).collect::<Vec<_>>());
        let set = plane_wave_shell(&grid, 1.0, 9).unwrap();
        assert_eq!(set.particle_count, 9);
        assert!(set.orthonormality_defect() < 1e-13);
        assert!((set.pauli_max() - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn localized_overlaps_match_closed_form() {
        let sigma = 1.0 / 6.0;
        let eps = 1.0 / 16.0;
        let grid = Grid::line(2048, 1.0).unwrap();
        let raw = localized_raw(&grid, eps, 0.5, sigma).unwrap();
        assert_eq!(raw.len(), 17);
        let sites = localized_sites(eps, 0.5);
        let h = grid.spacing();
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                let num: f64 = raw[i].iter().zip(raw[j].iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * h;
                let want = envelope_overlap(sites[i], sites[j], eps, sigma);
                assert!((num - want).abs() < 1e-10);
                if i != j {
                    assert!(num.abs() < 1e-6);
                }
            }
        }
        let set = localized(&grid, eps, 0.5, sigma).unwrap();
        assert!(set.pauli_max() <= 1.0 / 17.0 + 1e-12);
    }

    #[test]
    fn unresolved_envelope_rejected() {
        let grid = Grid::line(64, 1.0).unwrap();
        assert!(matches!(localized_raw(&grid, 0.05, 0.5, 0.2), Err(Error::Resolution(_))));
    }

    #[test]
    fn shifted_state_trace_and_bound() {
        let grid = Grid::line(24, 5.0).unwrap();
        let base = random_slater(&grid, 4, 0.8, 5).unwrap();
        let sh = shifted(&base).unwrap();
        let g = sh.gamma1().unwrap();
        assert!((g.trace().re - 1.0).abs() < 1e-10);
        let ev = g.eigenvalues();
        assert!(ev[0] > -1e-10 && *ev.last().unwrap() <= 0.25 + 1e-10);
        let gd = shifted_density(&base.gamma1().unwrap()).unwrap();
        let diff = gd.kernel.iter().zip(g.kernel.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn thermal_state_is_normalized_and_bounded() {
        let grid = Grid::line(256, 8.0).unwrap();
        let set = thermal_gaussian(&grid, 0.2, 1.0, 1.0, 1e-12).unwrap();
        assert!((set.trace() - 1.0).abs() < 1e-9);
        assert!(set.pauli_max() <= 1.0 / set.particle_count as f64 + 1e-12);
        let xs = grid.positions();
        let var: f64 = set.density().iter().zip(&xs).map(|(r, x)| r * x * x).sum::<f64>() * grid.spacing();
        assert!((var - 0.5).abs() < 1e-8);
    }

    #[test]
    fn thermal_occupations_stay_geometric() {
        let grid = Grid::line(512, 8.0).unwrap();
        for eps in [0.4, 0.3, 0.2, 0.1] {
            let set = thermal_gaussian(&grid, eps, 1.0, 1.0, 1e-12).unwrap();
            let q = (1.0 - eps) / (1.0 + eps);
            assert!(set.weights[0] <= 1.0 + 1e-12, "{eps}");
            for w in set.weights.windows(2) {
                assert!((w[1] / w[0] - q).abs() < 1e-12, "{eps}");
            }
            let xs = grid.positions();
            let var: f64 = set.density().iter().zip(&xs).map(|(r, x)| r * x * x).sum::<f64>() * grid.spacing();
            assert!((var - 0.5).abs() < 1e-8, "{eps} {var}");
        }
    }
}
