use ndarray::{ArrayD, IxDyn, Zip};
use serde::{Deserialize, Serialize};

use super::wavefunction::{check_capacity, par_indexed, NBodyWavefunction};
use crate::meanfield::{potential_sup, Propagation};
use crate::spectral::{AxisFft, Grid, Potential};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NBodyTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<NBodyWavefunction>,
    pub potential: Potential,
}

impl NBodyTrajectory {
    pub fn last(&self) -> &NBodyWavefunction {
        self.states.last().expect("trajectories hold the initial state")
    }
}

/// `min(h^2 / (pi eps), 0.1 eps / (lambda N (N-1)/2 ||U||_inf))`.
pub fn nbody_dt_max(psi: &NBodyWavefunction, potential: &Potential) -> f64 {
    let h = psi.grid.spacing();
    let kinetic = h * h / (std::f64::consts::PI * psi.epsilon);
    let pairs = (psi.particles * (psi.particles - 1) / 2) as f64;
    let v = psi.coupling.abs() * pairs * potential_sup(potential);
    if v == 0.0 {
        kinetic
    } else {
        kinetic.min(0.1 * psi.epsilon / v)
    }
}

fn tensor_phase(grid: &Grid, particles: usize, f: impl Fn(&[usize]) -> f64 + Sync) -> ArrayD<C64> {
    let mut out = ArrayD::zeros(IxDyn(&vec![grid.points; particles]));
    par_indexed(&mut out, |idx, z| *z = C64::from_polar(1.0, f(idx)));
    out
}

/// Strang split-step propagation of `i eps d_t psi = (-(eps^2/2) Delta + lambda sum_{j<k} U(x_j - x_k)) psi`.
pub fn evolve_nbody(psi0: &NBodyWavefunction, potential: &Potential, prop: Propagation) -> Result<NBodyTrajectory> {
    let (steps, dt) = prop.steps()?;
    let grid = psi0.grid;
    let nn = psi0.particles;
    check_capacity(&grid, nn)?;
    let limit = nbody_dt_max(psi0, potential);
    if dt.abs() > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize(format!("|dt| = {:.3e} exceeds the stability limit {limit:.3e}", dt.abs())));
    }
    let eps = psi0.epsilon;
    let ks = grid.frequencies();
    let scale = 1.0 / (grid.points as f64).powi(nn as i32);
    let kinetic = tensor_phase(&grid, nn, |idx| {
        -(0..nn).map(|j| ks[idx[j]] * ks[idx[j]]).sum::<f64>() * eps * dt / 4.0
    })
    .mapv(|z| z * scale);
    let interaction = if potential.is_zero() || nn < 2 {
        None
    } else {
        let table = potential.separation_table(&grid)?;
        let n = grid.points;
        let lambda = psi0.coupling;
        Some(tensor_phase(&grid, nn, |idx| {
            let mut v = 0.0;
            for j in 0..nn {
                for k in j + 1..nn {
                    v += table[(idx[j] + n - idx[k]) % n];
                }
            }
            -dt * lambda * v / eps
        }))
    };
    let plan = AxisFft::new(grid.points);
    let half = |psi: &mut ArrayD<C64>| {
        plan.raw_all(psi, false);
        Zip::from(&mut *psi).and(&kinetic).par_for_each(|z, k| *z *= k);
        plan.raw_all(psi, true);
    };
    let mut psi = psi0.values.clone();
    let mut times = vec![0.0];
    let mut states = vec![psi0.clone()];
    for s in 1..=steps {
        half(&mut psi);
        if let Some(p) = &interaction {
            Zip::from(&mut psi).and(p).par_for_each(|z, p| *z *= p);
        }
        half(&mut psi);
        if s % prop.stride == 0 || s == steps {
            times.push(s as f64 * dt);
            states.push(NBodyWavefunction { values: psi.clone(), ..psi0.clone() });
        }
    }
    Ok(NBodyTrajectory { times, states, potential: potential.clone() })
}
