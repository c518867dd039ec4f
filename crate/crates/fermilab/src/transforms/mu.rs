use ndarray::{Array2, ArrayD, Axis, IxDyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phase::{map_axis_pair, PhaseField, PhaseGrid, PhaseKind, WignerFunction};
use crate::spectral::{spectral_shift, AxisFft, Grid};
use crate::states::{DensityMatrix, OrbitalSet};
use crate::{Error, Result, C64};

/// `mu(xi, eta) = int W(x, v) e^{-i xi x - i eta v} dx dv` on the lattice dual to a [`PhaseGrid`].
///
/// `xi` runs over `2n` points of spacing `pi / L`, `eta` over `n` points of
/// spacing `2 h / eps`, both in FFT order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MuFunction {
    pub phase: PhaseGrid,
    pub rank: usize,
    pub values: ArrayD<C64>,
}

impl MuFunction {
    pub fn xi_spacing(&self) -> f64 {
        self.phase.grid.dual_spacing()
    }

    pub fn eta_spacing(&self) -> f64 {
        2.0 * self.phase.grid.spacing() / self.phase.epsilon
    }

    /// Frequencies `xi` in storage order.
    pub fn xis(&self) -> Vec<f64> {
        signed(2 * self.phase.grid.points).into_iter().map(|a| a as f64 * self.xi_spacing()).collect()
    }

    pub fn etas(&self) -> Vec<f64> {
        signed(self.phase.grid.points).into_iter().map(|b| b as f64 * self.eta_spacing()).collect()
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn at_origin(&self) -> C64 {
        self.values[IxDyn(&vec![0; 2 * self.rank])]
    }

    pub fn sup_distance(&self, other: &MuFunction) -> Result<f64> {
        if self.values.shape() != other.values.shape() {
            return Err(Error::Structural("mu functions live on different lattices".into()));
        }
        Ok(self.values.iter().zip(other.values.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }
}

fn signed(n: usize) -> Vec<i64> {
    (0..n as i64).map(|i| if i < n as i64 / 2 { i } else { i - n as i64 }).collect()
}

fn alternate_axis(data: &mut ArrayD<C64>, axis: usize) {
    for (idx, v) in data.indexed_iter_mut() {
        if idx[axis] % 2 == 1 {
            *v = -*v;
        }
    }
}

/// Forward lattice transform `W -> mu`.
pub fn mu_from_wigner(w: &WignerFunction) -> Result<MuFunction> {
    if w.kind != PhaseKind::Wigner {
        return Err(Error::Structural(format!("mu is defined from a Wigner function, got {:?}", w.kind)));
    }
    let n = w.phase.grid.points;
    let (px, pv) = (AxisFft::new(2 * n), AxisFft::new(n));
    let mut vals = w.values.mapv(|r| C64::new(r, 0.0));
    for s in 0..w.rank {
        px.raw_axis(&mut vals, s, false);
        alternate_axis(&mut vals, s);
        pv.raw_axis(&mut vals, w.rank + s, false);
    }
    let cell = w.phase.cell(w.rank);
    vals.mapv_inplace(|z| z * cell);
    Ok(MuFunction { phase: w.phase, rank: w.rank, values: vals })
}

/// Exact inverse of [`mu_from_wigner`].
pub fn wigner_from_mu(mu: &MuFunction) -> Result<WignerFunction> {
    let n = mu.phase.grid.points;
    let (px, pv) = (AxisFft::new(2 * n), AxisFft::new(n));
    let mut vals = mu.values.clone();
    for s in 0..mu.rank {
        alternate_axis(&mut vals, s);
        px.raw_axis(&mut vals, s, true);
        pv.raw_axis(&mut vals, mu.rank + s, true);
    }
    let scale = 1.0 / (mu.phase.cell(mu.rank) * ((2 * n * n) as f64).powi(mu.rank as i32));
    let imag = vals.iter().map(|z| z.im.abs()).fold(0.0, f64::max) * scale;
    let peak = vals.iter().map(|z| z.re.abs()).fold(0.0, f64::max) * scale;
    if imag > 1e-8 * peak.max(1.0) {
        return Err(Error::Structural(format!("mu is not the transform of a real field (residue {imag:.2e})")));
    }
    PhaseField::new(mu.phase, mu.rank, PhaseKind::Wigner, vals.mapv(|z| z.re * scale))
}

/// Which side of the `W <-> mu` transform is supplied.
pub enum MuInput<'a> {
    Wigner(&'a WignerFunction),
    Density(&'a DensityMatrix, f64),
    Mu(&'a MuFunction),
}

/// Either side of the transform.
pub enum MuOutput {
    Mu(MuFunction),
    Wigner(WignerFunction),
}

/// Forward (`inverse = false`) or backward transform between `W` (or `gamma`) and `mu`.
pub fn mu_transform(input: MuInput, inverse: bool) -> Result<MuOutput> {
    match (input, inverse) {
        (MuInput::Wigner(w), false) => Ok(MuOutput::Mu(mu_from_wigner(w)?)),
        (MuInput::Density(g, eps), false) => Ok(MuOutput::Mu(mu_from_density(g, eps)?)),
        (MuInput::Mu(m), true) => Ok(MuOutput::Wigner(wigner_from_mu(m)?)),
        _ => Err(Error::Structural("transform direction does not match the supplied field".into())),
    }
}

/// Direct path `mu(xi, eta) = int e^{-i xi x} gamma(x - eps eta/2, x + eps eta/2) dx`
/// on the same lattice; frequencies `|xi| >= pi / (2h)` are set to zero.
pub fn mu_from_density(gamma: &DensityMatrix, epsilon: f64) -> Result<MuFunction> {
    let phase = PhaseGrid::new(gamma.grid, epsilon)?;
    let n = gamma.grid.points;
    let h = gamma.grid.spacing();
    let plan = AxisFft::new(n);
    let half = (n / 2) as i64;
    let k = gamma.rank;
    let mut cur = gamma.kernel.clone();
    for s in 0..k {
        cur = map_axis_pair(&cur, s, k + s, (2 * n, n), |g| {
            let mut out = Array2::<C64>::zeros((2 * n, n));
            let mut buf = vec![C64::new(0.0, 0.0); n];
            for (bslot, b) in signed(n).into_iter().enumerate() {
                for (i, slot) in buf.iter_mut().enumerate() {
                    let (p, q) = (i as i64 - b, i as i64 + b);
                    *slot = if (0..n as i64).contains(&p) && (0..n as i64).contains(&q) {
                        g[[p as usize, q as usize]]
                    } else {
                        C64::new(0.0, 0.0)
                    };
                }
                plan.raw_slice(&mut buf, false);
                for a in -half + 1..half {
                    let sign = if a.rem_euclid(2) == 1 { -h } else { h };
                    out[[a.rem_euclid(2 * n as i64) as usize, bslot]] = buf[a.rem_euclid(n as i64) as usize] * sign;
                }
            }
            out
        });
    }
    Ok(MuFunction { phase, rank: k, values: cur })
}

/// Restriction of `mu` to zero frequencies in the dropped slots.
pub fn restrict(mu: &MuFunction, k: usize) -> Result<MuFunction> {
    if k == 0 || k > mu.rank {
        return Err(Error::Arity(format!("marginal rank {k} outside 1..={}", mu.rank)));
    }
    let r = mu.rank;
    let mut vals = mu.values.clone();
    for s in (k..r).rev() {
        vals = vals.index_axis(Axis(r + s), 0).to_owned();
    }
    for s in (k..r).rev() {
        vals = vals.index_axis(Axis(s), 0).to_owned();
    }
    Ok(MuFunction { phase: mu.phase, rank: k, values: vals })
}

/// Marginal computed through the `mu` restriction rule.
pub fn marginal_via_mu(w: &WignerFunction, k: usize) -> Result<WignerFunction> {
    wigner_from_mu(&restrict(&mu_from_wigner(w)?, k)?)
}

/// Values of a one-particle `mu` on the torus frequencies `xi = m pi / L` at
/// arbitrary `eta`, computed by band-limited translation of the kernel.
pub struct MuSlices {
    pub grid: Grid,
    pub epsilon: f64,
    /// Frequencies in FFT order.
    pub xis: Vec<f64>,
    pub etas: Vec<f64>,
    /// `values[[e, m]] = mu(xi_m, eta_e)`.
    pub values: Array2<C64>,
    /// `d/d eta` of the values, when available.
    pub d_eta: Option<Array2<C64>>,
}

impl MuSlices {
    pub fn from_density(gamma: &DensityMatrix, epsilon: f64, etas: &[f64]) -> Result<Self> {
        if gamma.rank != 1 || gamma.grid.dim != 1 {
            return Err(Error::Arity("mu slices take a one-dimensional rank-1 kernel".into()));
        }
        let grid = gamma.grid;
        let plan = AxisFft::new(grid.points);
        let mut values = Array2::zeros((etas.len(), grid.points));
        for (e, &eta) in etas.iter().enumerate() {
            let s = 0.5 * epsilon * eta;
            let mut k = gamma.kernel.clone();
            spectral_shift(&grid, &mut k, 0, s, &plan);
            spectral_shift(&grid, &mut k, 1, -s, &plan);
            let diag: Vec<C64> = (0..grid.points).map(|i| k[[i, i]]).collect();
            values.row_mut(e).assign(&ndarray::Array1::from(line_transform(&grid, diag, &plan)));
        }
        Ok(MuSlices { grid, epsilon, xis: grid.frequencies(), etas: etas.to_vec(), values, d_eta: None })
    }

    /// Same slices from orbitals: `sum_j (a_j / N) phi_j(x - s) conj(phi_j(x + s))`,
    /// together with the exact `eta` derivative.
    pub fn from_orbitals(set: &OrbitalSet, epsilon: f64, etas: &[f64]) -> Result<Self> {
        let grid = set.grid;
        if grid.dim != 1 {
            return Err(Error::Arity("mu slices are tabulated in one dimension".into()));
        }
        let n = grid.points;
        let plan = AxisFft::new(n);
        let ks = grid.frequencies();
        let inv_n = 1.0 / set.particle_count as f64;
        let spectra: Vec<Vec<C64>> = set
            .orbitals
            .iter()
            .map(|phi| {
                let mut f: Vec<C64> = phi.iter().copied().collect();
                plan.raw_slice(&mut f, false);
                f
            })
            .collect();
        let shifted = |f: &[C64], s: f64, deriv: bool| -> Vec<C64> {
            let mut out: Vec<C64> = f
                .iter()
                .zip(&ks)
                .enumerate()
                .map(|(i, (z, &k))| {
                    let ph = if i == n / 2 { C64::new((k * s).cos(), 0.0) } else { C64::from_polar(1.0, -k * s) };
                    let m = if !deriv {
                        C64::new(1.0, 0.0)
                    } else if i == n / 2 {
                        C64::new(0.0, 0.0)
                    } else {
                        C64::new(0.0, k)
                    };
                    z * ph * m / n as f64
                })
                .collect();
            plan.raw_slice(&mut out, true);
            out
        };
        let rows: Vec<(Vec<C64>, Vec<C64>)> = etas
            .par_iter()
            .map(|&eta| {
                let s = 0.5 * epsilon * eta;
                let mut acc = vec![C64::new(0.0, 0.0); n];
                let mut dacc = vec![C64::new(0.0, 0.0); n];
                for (f, a) in spectra.iter().zip(&set.weights) {
                    let w = a * inv_n;
                    let lo = shifted(f, s, false);
                    let hi = shifted(f, -s, false);
                    let dlo = shifted(f, s, true);
                    let dhi = shifted(f, -s, true);
                    for i in 0..n {
                        acc[i] += w * lo[i] * hi[i].conj();
                        dacc[i] += w * 0.5 * epsilon * (lo[i] * dhi[i].conj() - dlo[i] * hi[i].conj());
                    }
                }
                (line_transform(&grid, acc, &plan), line_transform(&grid, dacc, &plan))
            })
            .collect();
        let mut values = Array2::zeros((etas.len(), n));
        let mut d_eta = Array2::zeros((etas.len(), n));
        for (e, (v, d)) in rows.into_iter().enumerate() {
            values.row_mut(e).assign(&ndarray::Array1::from(v));
            d_eta.row_mut(e).assign(&ndarray::Array1::from(d));
        }
        Ok(MuSlices { grid, epsilon, xis: ks, etas: etas.to_vec(), values, d_eta: Some(d_eta) })
    }
}

/// `h sum_i e^{-i xi_m x_i} f_i` for `xi_m = m pi / L`.
fn line_transform(grid: &Grid, mut f: Vec<C64>, plan: &AxisFft) -> Vec<C64> {
    plan.raw_slice(&mut f, false);
    let h = grid.spacing();
    f.iter().enumerate().map(|(m, z)| if m % 2 == 1 { -z * h } else { z * h }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::families::{gaussian_packet, hermite_functions, random_slater};
    use crate::states::slater_marginals;
    use crate::transforms::phase::{marginal, wigner, wigner_tol};

    #[test]
    fn lattice_and_direct_paths_agree() {
        let grid = Grid::line(128, 10.0).unwrap();
        let g = random_slater(&grid, 3, 1.0, 5).unwrap().gamma1().unwrap();
        let eps = 0.3;
        let w = wigner(&g, eps).unwrap();
        let mu = mu_from_wigner(&w).unwrap();
        assert!((mu.at_origin() - 1.0).norm() < 1e-10);
        assert!(mu.max_modulus() <= 1.0 + 1e-10);
        let direct = mu_from_density(&g, eps).unwrap();
        assert!(mu.sup_distance(&direct).unwrap() < 1e-10, "{}", mu.sup_distance(&direct).unwrap());
        let back = wigner_from_mu(&mu).unwrap();
        assert!(back.sup_distance(&w).unwrap() < 1e-10);
        let dual = mu_transform(MuInput::Density(&g, eps), false).unwrap();
        assert!(matches!(dual, MuOutput::Mu(_)));
        assert!(mu_transform(MuInput::Mu(&mu), false).is_err());
    }

    #[test]
    fn modulus_bound_over_random_states() {
        let grid = Grid::line(64, 6.0).unwrap();
        for seed in 0..20 {
            let g = random_slater(&grid, 4, 0.8, seed).unwrap().gamma1().unwrap();
            let mu = mu_from_density(&g, 0.25).unwrap();
            assert!(mu.max_modulus() <= 1.0 + 1e-10);
            assert!((mu.at_origin() - 1.0).norm() < 1e-10);
        }
    }

    #[test]
    fn free_flow_shears_eta() {
        let grid = Grid::line(128, 12.0).unwrap();
        let eps = 0.5;
        let phi = gaussian_packet(&grid, -1.0, 1.0, 0.4, eps);
        let set = OrbitalSet::slater(grid, vec![phi.clone()]).unwrap();
        let t = 0.7;
        let plan = AxisFft::new(grid.points);
        let mut f = phi.clone();
        plan.raw_axis(&mut f, 0, false);
        for (z, k) in f.iter_mut().zip(grid.frequencies()) {
            *z *= C64::from_polar(1.0 / grid.points as f64, -0.5 * eps * k * k * t);
        }
        plan.raw_axis(&mut f, 0, true);
        let evolved = OrbitalSet::slater(grid, vec![f]).unwrap();
        let etas = [-0.6, 0.0, 0.35, 1.1];
        let now = MuSlices::from_orbitals(&evolved, eps, &etas).unwrap();
        let mut worst = 0.0f64;
        for (e, &eta) in etas.iter().enumerate() {
            for (m, &xi) in now.xis.iter().enumerate().take(9) {
                let then = MuSlices::from_orbitals(&set, eps, &[eta + t * xi]).unwrap();
                worst = worst.max((now.values[[e, m]] - then.values[[0, m]]).norm());
            }
        }
        assert!(worst < 1e-10, "{worst}");
        let via_kernel = MuSlices::from_density(&evolved.gamma1().unwrap(), eps, &etas).unwrap();
        let d = (&via_kernel.values - &now.values).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(d < 1e-10);
        let ana = |xi: f64, eta: f64| {
            let x0 = -1.0;
            let v0 = 0.4;
            C64::from_polar(
                (-(xi * xi) / 4.0 - eps * eps * eta * eta / 4.0).exp(),
                -xi * x0 - eta * v0,
            )
        };
        for (m, &xi) in now.xis.iter().enumerate().take(5) {
            let got = MuSlices::from_orbitals(&set, eps, &[0.3]).unwrap().values[[0, m]];
            assert!((got - ana(xi, 0.3)).norm() < 1e-10);
        }
    }

    #[test]
    fn eta_derivative_matches_differences() {
        let grid = Grid::line(96, 8.0).unwrap();
        let set = random_slater(&grid, 3, 1.0, 9).unwrap();
        let eps = 0.4;
        let (eta, d) = (0.3, 1e-4);
        let mid = MuSlices::from_orbitals(&set, eps, &[eta]).unwrap();
        let side = MuSlices::from_orbitals(&set, eps, &[eta - d, eta + d]).unwrap();
        let de = mid.d_eta.unwrap();
        for m in 0..12 {
            let fd = (side.values[[1, m]] - side.values[[0, m]]) / (2.0 * d);
            assert!((fd - de[[0, m]]).norm() < 1e-7);
        }
    }

    #[test]
    fn marginal_paths_agree() {
        let grid = Grid::line(40, 5.6).unwrap();
        let set = OrbitalSet::slater(grid, hermite_functions(&grid, 2, 1.0, 0.0)).unwrap();
        let (_, g2) = slater_marginals(&set).unwrap();
        let w2 = wigner_tol(&g2, 0.5, 1e-5).unwrap();
        let a = marginal(&w2, 1).unwrap();
        let b = marginal_via_mu(&w2, 1).unwrap();
        assert!(a.sup_distance(&b).unwrap() < 1e-10);
        assert!((a.mass() - 1.0).abs() < 1e-8);
    }
}
