use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use super::hartree::{MeanFieldState, MeanFieldTrajectory};
use crate::spectral::Grid;
use crate::transforms::MuSlices;
use crate::{Error, Result, C64};

/// Where the `mu`-equation residual is sampled.
#[derive(Clone, Debug)]
pub struct MuResidualOptions {
    pub etas: Vec<f64>,
    /// Only frequencies with `|xi| <= xi_limit` are tested.
    pub xi_limit: Option<f64>,
    /// Multiplies `mu` of one sample by a factor, to exercise the detector.
    pub fault: Option<(usize, f64)>,
}

impl Default for MuResidualOptions {
    fn default() -> Self {
        MuResidualOptions { etas: vec![-1.0, -0.5, 0.0, 0.5, 1.0], xi_limit: None, fault: None }
    }
}

/// Sup of a residual and where it is attained.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResidualReport {
    pub sup: f64,
    pub time: f64,
    pub xi: f64,
    pub eta: f64,
}

pub(crate) fn uniform_spacing(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::Stencil(format!("central differences need 3 samples, got {}", times.len())));
    }
    let dt = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-300)) {
        return Err(Error::Stencil("samples are not equally spaced".into()));
    }
    Ok(dt)
}

/// Residual of the Fourier-side Hartree equation
/// `d_t mu - xi d_eta mu + (2/eps) sum_q c_q sin(eps q eta / 2) mu(xi - q, eta) mu(q, 0)`.
pub fn hartree_mu_residual(traj: &MeanFieldTrajectory, opts: &MuResidualOptions) -> Result<ResidualReport> {
    let dt = uniform_spacing(&traj.times)?;
    let eps = traj.epsilon;
    let sets = traj
        .states
        .iter()
        .map(|s| match s {
            MeanFieldState::Orbitals(o) => Ok(o),
            MeanFieldState::Kernel(_) => Err(Error::Structural("the mu residual is evaluated on orbital trajectories".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = sets[0].grid;
    let mut etas = opts.etas.clone();
    etas.push(0.0);
    let zero = etas.len() - 1;
    let mut slices: Vec<MuSlices> = sets.par_iter().map(|s| MuSlices::from_orbitals(s, eps, &etas)).collect::<Result<_>>()?;
    if let Some((k, f)) = opts.fault {
        if let Some(sl) = slices.get_mut(k) {
            sl.values.mapv_inplace(|z| z * f);
            if let Some(d) = sl.d_eta.as_mut() {
                d.mapv_inplace(|z| z * f);
            }
        }
    }
    let coeffs = if traj.potential.is_zero() { vec![0.0; grid.points] } else { traj.potential.lattice_coeffs(&grid)? };
    let cmax = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let active: Vec<(i64, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| cmax > 0.0 && c.abs() > 1e-17 * cmax)
        .map(|(p, &c)| (grid.signed_index(p), c))
        .collect();
    let mut best = ResidualReport { sup: 0.0, time: 0.0, xi: 0.0, eta: 0.0 };
    for k in 1..slices.len() - 1 {
        let r = slice_residual(&grid, eps, dt, &slices[k - 1].values, &slices[k], &slices[k + 1].values, &active, zero, &opts.etas, opts.xi_limit);
        if r.0 > best.sup {
            best = ResidualReport { sup: r.0, time: traj.times[k], xi: r.1, eta: r.2 };
        }
    }
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn slice_residual(
    grid: &Grid,
    eps: f64,
    dt: f64,
    before: &Array2<C64>,
    now: &MuSlices,
    after: &Array2<C64>,
    active: &[(i64, f64)],
    zero: usize,
    etas: &[f64],
    xi_limit: Option<f64>,
) -> (f64, f64, f64) {
    let n = grid.points as i64;
    let d_eta = now.d_eta.as_ref().expect("orbital slices carry derivatives");
    let mut worst = (0.0, 0.0, 0.0);
    for (e, &eta) in etas.iter().enumerate() {
        for m in 0..grid.points {
            let ms = grid.signed_index(m);
            let xi = now.xis[m];
            if let Some(lim) = xi_limit {
                if xi.abs() > lim {
                    continue;
                }
            }
            let mut r = (after[[e, m]] - before[[e, m]]) / (2.0 * dt) - xi * d_eta[[e, m]];
            for &(p, c) in active {
                let t = ms - p;
                if t < -n / 2 || t >= n / 2 {
                    continue;
                }
                let q = p as f64 * grid.dual_spacing();
                let s = (2.0 / eps) * (0.5 * eps * q * eta).sin();
                r += c * s * now.values[[e, grid.slot(t)]] * now.values[[zero, grid.slot(p)]];
            }
            if r.norm() > worst.0 {
                worst = (r.norm(), xi, eta);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::hartree::{evolve_meanfield, MeanFieldModel, Propagation};
    use super::*;
    use crate::spectral::Potential;
    use crate::states::families::gaussian_packet;
    use crate::states::OrbitalSet;

    fn run(pot: &Potential, dt: f64) -> MeanFieldTrajectory {
        let grid = Grid::line(128, 10.0).unwrap();
        let eps = 0.5;
        let set = OrbitalSet::slater(grid, vec![gaussian_packet(&grid, 0.3, 1.0, 0.2, eps)]).unwrap();
        evolve_meanfield(&set, MeanFieldModel::Hartree, pot, eps, Propagation::new(4.0 * dt, dt)).unwrap()
    }

    #[test]
    fn free_residual_is_small() {
        let r = hartree_mu_residual(&run(&Potential::zero(), 1e-3), &MuResidualOptions::default()).unwrap();
        assert!(r.sup < 1e-6, "{}", r.sup);
    }

    #[test]
    fn residual_converges_at_second_order() {
        let pot = Potential::gaussian(2.0, 1.0);
        let opts = MuResidualOptions::default();
        let a = hartree_mu_residual(&run(&pot, 0.01), &opts).unwrap().sup;
        let b = hartree_mu_residual(&run(&pot, 0.005), &opts).unwrap().sup;
        assert!((a / b - 4.0).abs() < 0.5, "{a} {b}");
    }

    #[test]
    fn corrupted_sample_is_detected() {
        let pot = Potential::gaussian(2.0, 1.0);
        let opts = MuResidualOptions { fault: Some((2, 1.01)), ..Default::default() };
        let r = hartree_mu_residual(&run(&pot, 0.01), &opts).unwrap();
        assert!(r.sup > 1e-2);
        let short = run(&pot, 0.01);
        let two = MeanFieldTrajectory { times: short.times[..2].to_vec(), states: short.states[..2].to_vec(), ..short };
        assert!(matches!(hartree_mu_residual(&two, &opts), Err(Error::Stencil(_))));
    }
}
