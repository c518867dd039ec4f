use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fock::fock_step;
use crate::spectral::{AxisFft, Grid, Potential, PotentialKind};
use crate::states::{kinetic_trace, DensityMatrix, OrbitalSet};
use crate::{Error, Result, C64};

/// Which mean-field equation is propagated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFieldModel {
    Hartree,
    HartreeFock,
}

/// Time stepping request: `steps = round(|t_final / dt|)` steps of `t_final / steps`,
/// recording every `stride`-th state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub t_final: f64,
    pub dt: f64,
    pub stride: usize,
}

impl Propagation {
    pub fn new(t_final: f64, dt: f64) -> Self {
        Propagation { t_final, dt, stride: 1 }
    }

    pub fn every(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn steps(&self) -> Result<(usize, f64)> {
        if !(self.dt.is_finite() && self.dt != 0.0) || !self.t_final.is_finite() {
            return Err(Error::StepSize(format!("invalid time step {} for horizon {}", self.dt, self.t_final)));
        }
        if self.t_final == 0.0 {
            return Ok((0, self.dt));
        }
        if self.t_final.signum() != self.dt.signum() {
            return Err(Error::StepSize("time step and horizon have opposite signs".into()));
        }
        let steps = (self.t_final / self.dt).round().max(1.0) as usize;
        Ok((steps, self.t_final / steps as f64))
    }
}

/// One recorded state of a mean-field trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum MeanFieldState {
    Orbitals(OrbitalSet),
    Kernel(DensityMatrix),
}

impl MeanFieldState {
    pub fn gamma1(&self) -> Result<DensityMatrix> {
        match self {
            MeanFieldState::Orbitals(s) => s.gamma1(),
            MeanFieldState::Kernel(k) => Ok(k.clone()),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            MeanFieldState::Orbitals(s) => s.trace(),
            MeanFieldState::Kernel(k) => k.trace().re,
        }
    }

    pub fn orbitals(&self) -> Option<&OrbitalSet> {
        match self {
            MeanFieldState::Orbitals(s) => Some(s),
            MeanFieldState::Kernel(_) => None,
        }
    }

    /// Largest eigenvalue of the one-particle matrix.
    pub fn pauli_max(&self) -> f64 {
        match self {
            MeanFieldState::Orbitals(s) => s.pauli_max(),
            MeanFieldState::Kernel(k) => *k.eigenvalues().last().unwrap_or(&0.0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanFieldTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub epsilon: f64,
    pub potential: Potential,
    pub model: MeanFieldModel,
    pub dt: f64,
}

/// Per-sample observables `(t, trace, energy, max orthonormality defect)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeanFieldObservables {
    pub t: f64,
    pub trace: f64,
    pub energy: f64,
    pub orthonormality_defect: f64,
}

impl MeanFieldTrajectory {
    pub fn observables(&self) -> Result<Vec<MeanFieldObservables>> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| {
                let (energy, defect) = match s {
                    MeanFieldState::Orbitals(o) => {
                        (hartree_energy(o, &self.potential, self.epsilon)?, o.orthonormality_defect())
                    }
                    MeanFieldState::Kernel(k) => (kernel_energy(k, &self.potential, self.epsilon)?, 0.0),
                };
                Ok(MeanFieldObservables { t, trace: s.trace(), energy, orthonormality_defect: defect })
            })
            .collect()
    }

    pub fn last(&self) -> &MeanFieldState {
        self.states.last().expect("trajectories hold at least the initial state")
    }
}

/// `sup |U|`, which bounds `||U * rho||_inf` for normalized densities.
pub fn potential_sup(potential: &Potential) -> f64 {
    match potential.kind {
        PotentialKind::Gaussian { u0, .. } | PotentialKind::Cosine { u0, .. } => u0.abs(),
    }
}

/// Largest stable step: `min(h^2 / (pi eps), 0.1 eps / ||U * rho||_inf)`.
pub fn dt_max(epsilon: f64, grid: &Grid, potential: &Potential) -> f64 {
    let h = grid.spacing();
    let kinetic = h * h / (std::f64::consts::PI * epsilon);
    let v = potential_sup(potential);
    if v == 0.0 {
        kinetic
    } else {
        kinetic.min(0.1 * epsilon / v)
    }
}

/// Torus convolution `U_per * rho` of a sampled density.
pub fn mean_potential(grid: &Grid, coeffs: &[f64], rho: &[f64], plan: &AxisFft) -> Vec<f64> {
    let h = grid.spacing();
    let mut f: Vec<C64> = rho.iter().map(|&r| C64::new(r, 0.0)).collect();
    plan.raw_slice(&mut f, false);
    for (z, c) in f.iter_mut().zip(coeffs) {
        *z *= c * h;
    }
    plan.raw_slice(&mut f, true);
    f.iter().map(|z| z.re).collect()
}

/// Normalized density `(1/N) sum_j a_j |phi_j|^2`.
pub fn orbital_density(orbitals: &[Array1<C64>], weights: &[f64], particles: usize) -> Vec<f64> {
    let n = orbitals[0].len();
    let inv = 1.0 / particles as f64;
    let mut rho = vec![0.0; n];
    for (phi, a) in orbitals.iter().zip(weights) {
        for (r, z) in rho.iter_mut().zip(phi.iter()) {
            *r += a * inv * z.norm_sqr();
        }
    }
    rho
}

/// `(eps^2 / 2) Tr(-Delta omega) + (1/2) int int U(x - y) rho(x) rho(y)`.
pub fn hartree_energy(state: &OrbitalSet, potential: &Potential, epsilon: f64) -> Result<f64> {
    let grid = state.grid;
    let kinetic = 0.5 * epsilon * epsilon * kinetic_trace(state)?;
    if potential.is_zero() {
        return Ok(kinetic);
    }
    let orbs: Vec<Array1<C64>> = state.orbitals.iter().map(|o| o.iter().copied().collect()).collect();
    let rho = orbital_density(&orbs, &state.weights, state.particle_count);
    let v = mean_potential(&grid, &potential.lattice_coeffs(&grid)?, &rho, &AxisFft::new(grid.points));
    Ok(kinetic + 0.5 * grid.spacing() * rho.iter().zip(&v).map(|(r, v)| r * v).sum::<f64>())
}

/// Hartree-Fock energy of a kernel: kinetic, direct and exchange parts.
pub fn kernel_energy(gamma: &DensityMatrix, potential: &Potential, epsilon: f64) -> Result<f64> {
    let grid = gamma.grid;
    let n = grid.points;
    let h = grid.spacing();
    let k = gamma.kernel_matrix();
    let ks = grid.frequencies();
    let plan = AxisFft::new(n);
    let mut kin = 0.0;
    for j in 0..n {
        let mut col: Vec<C64> = (0..n).map(|i| k[[i, j]]).collect();
        plan.raw_slice(&mut col, false);
        for (z, q) in col.iter_mut().zip(&ks) {
            *z *= -q * q / n as f64;
        }
        plan.raw_slice(&mut col, true);
        kin -= col[j].re * h;
    }
    let rho: Vec<f64> = (0..n).map(|i| k[[i, i]].re).collect();
    let table = potential.separation_table(&grid)?;
    let v = mean_potential(&grid, &potential.lattice_coeffs(&grid)?, &rho, &plan);
    let direct = 0.5 * h * rho.iter().zip(&v).map(|(r, v)| r * v).sum::<f64>();
    let mut exchange = 0.0;
    for i in 0..n {
        for j in 0..n {
            exchange += table[(i + n - j) % n] * k[[i, j]].norm_sqr();
        }
    }
    Ok(0.5 * epsilon * epsilon * kin + direct - 0.5 * h * h * exchange)
}

pub(crate) struct KineticHalf {
    plan: AxisFft,
    phase: Vec<C64>,
}

impl KineticHalf {
    pub(crate) fn new(grid: &Grid, epsilon: f64, dt: f64) -> Self {
        let n = grid.points;
        let phase = grid.frequencies().iter().map(|k| C64::from_polar(1.0 / n as f64, -epsilon * k * k * dt / 4.0)).collect();
        KineticHalf { plan: AxisFft::new(n), phase }
    }

    pub(crate) fn apply(&self, phi: &mut Array1<C64>) {
        let buf = phi.as_slice_mut().expect("contiguous orbital");
        self.plan.raw_slice(buf, false);
        for (z, p) in buf.iter_mut().zip(&self.phase) {
            *z *= p;
        }
        self.plan.raw_slice(buf, true);
    }
}

fn hartree_step(
    orbs: &mut [Array1<C64>],
    weights: &[f64],
    particles: usize,
    grid: &Grid,
    coeffs: Option<&[f64]>,
    half: &KineticHalf,
    epsilon: f64,
    dt: f64,
) {
    orbs.par_iter_mut().for_each(|phi| half.apply(phi));
    if let Some(c) = coeffs {
        let rho = orbital_density(orbs, weights, particles);
        let v = mean_potential(grid, c, &rho, &half.plan);
        let kick: Vec<C64> = v.iter().map(|&v| C64::from_polar(1.0, -v * dt / epsilon)).collect();
        orbs.par_iter_mut().for_each(|phi| {
            for (z, k) in phi.iter_mut().zip(&kick) {
                *z *= k;
            }
        });
    }
    orbs.par_iter_mut().for_each(|phi| half.apply(phi));
}

fn to_set(grid: Grid, orbs: &[Array1<C64>], weights: &[f64], particles: usize) -> OrbitalSet {
    let o = orbs.iter().map(|p| p.clone().into_shape(IxDyn(&[grid.points])).expect("line")).collect::<Vec<ArrayD<C64>>>();
    OrbitalSet::unchecked(grid, o, weights.to_vec(), particles)
}

/// Propagates the Hartree (orbital split-step) or Hartree-Fock (dense kernel)
/// equation from `initial`.
pub fn evolve_meanfield(
    initial: &OrbitalSet,
    model: MeanFieldModel,
    potential: &Potential,
    epsilon: f64,
    prop: Propagation,
) -> Result<MeanFieldTrajectory> {
    let grid = initial.grid;
    if grid.dim != 1 {
        return Err(Error::Structural("mean-field propagation is implemented on one-dimensional grids".into()));
    }
    let (steps, dt) = prop.steps()?;
    let limit = dt_max(epsilon, &grid, potential);
    if dt.abs() > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize(format!("|dt| = {:.3e} exceeds the stability limit {limit:.3e}", dt.abs())));
    }
    let coeffs = if potential.is_zero() { None } else { Some(potential.lattice_coeffs(&grid)?) };
    let mut times = vec![0.0];
    let mut states = Vec::new();
    match model {
        MeanFieldModel::Hartree => {
            let half = KineticHalf::new(&grid, epsilon, dt);
            let mut orbs: Vec<Array1<C64>> = initial.orbitals.iter().map(|o| o.iter().copied().collect()).collect();
            let norms0: Vec<f64> = orbs.iter().map(|p| p.iter().map(|z| z.norm_sqr()).sum::<f64>()).collect();
            states.push(MeanFieldState::Orbitals(initial.clone()));
            for s in 1..=steps {
                hartree_step(&mut orbs, &initial.weights, initial.particle_count, &grid, coeffs.as_deref(), &half, epsilon, dt);
                if s % prop.stride == 0 || s == steps {
                    times.push(s as f64 * dt);
                    states.push(MeanFieldState::Orbitals(to_set(grid, &orbs, &initial.weights, initial.particle_count)));
                }
            }
            let drift = orbs
                .iter()
                .zip(&norms0)
                .map(|(p, n0)| (p.iter().map(|z| z.norm_sqr()).sum::<f64>() - n0).abs() / n0)
                .fold(0.0, f64::max);
            check_drift(drift, steps as f64 * dt.abs())?;
        }
        MeanFieldModel::HartreeFock => {
            if grid.points > 256 {
                return Err(Error::MemoryGuard(format!(
                    "Hartree-Fock kernels are limited to 256 points, grid has {}",
                    grid.points
                )));
            }
            let g0 = initial.gamma1()?;
            let tr0 = g0.trace().re;
            let mut omega = g0.operator();
            let ctx = super::fock::FockContext::new(&grid, potential, epsilon)?;
            states.push(MeanFieldState::Kernel(g0));
            for s in 1..=steps {
                omega = fock_step(&ctx, &omega, dt)?;
                if s % prop.stride == 0 || s == steps {
                    times.push(s as f64 * dt);
                    let k: Array2<C64> = omega.mapv(|z| z / grid.spacing());
                    states.push(MeanFieldState::Kernel(DensityMatrix::from_matrix(grid, 1, &k)?));
                }
            }
            let tr: f64 = (0..grid.points).map(|i| omega[[i, i]].re).sum();
            check_drift((tr - tr0).abs(), steps as f64 * dt.abs())?;
        }
    }
    Ok(MeanFieldTrajectory { times, states, epsilon, potential: potential.clone(), model, dt })
}

fn check_drift(drift: f64, duration: f64) -> Result<()> {
    if duration > 0.0 && drift / duration.max(1.0) > 1e-6 {
        return Err(Error::StepSize(format!("norm drift {drift:.3e} over time {duration}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::families::{gaussian_packet, hermite_functions, plane_wave, random_slater};

    #[test]
    fn free_evolution_matches_the_propagator() {
        let grid = Grid::line(128, 10.0).unwrap();
        let eps = 0.5;
        let set = random_slater(&grid, 2, 1.0, 1).unwrap();
        let traj =
            evolve_meanfield(&set, MeanFieldModel::Hartree, &Potential::zero(), eps, Propagation::new(0.5, 0.01)).unwrap();
        let plan = AxisFft::new(128);
        let out = traj.last().orbitals().unwrap();
        for (phi0, phi) in set.orbitals.iter().zip(&out.orbitals) {
            let mut f = phi0.clone();
            plan.raw_axis(&mut f, 0, false);
            for (z, k) in f.iter_mut().zip(grid.frequencies()) {
                *z *= C64::from_polar(1.0 / 128.0, -0.5 * eps * k * k * 0.5);
            }
            plan.raw_axis(&mut f, 0, true);
            let err = f.iter().zip(phi.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9);
        }
    }

    #[test]
    fn mean_potential_matches_quadrature() {
        let grid = Grid::line(64, 6.0).unwrap();
        let pot = Potential::gaussian(1.5, 0.8);
        let xs = grid.positions();
        let h = grid.spacing();
        let rho: Vec<f64> = xs.iter().map(|x| (-(x - 0.4) * (x - 0.4)).exp()).collect();
        let v = mean_potential(&grid, &pot.lattice_coeffs(&grid).unwrap(), &rho, &AxisFft::new(64));
        for (i, x) in xs.iter().enumerate() {
            let want: f64 = xs.iter().zip(&rho).map(|(y, r)| h * r * pot.value(&[grid.wrap(x - y)])).sum();
            assert!((v[i] - want).abs() < 1e-10, "{} {}", v[i], want);
        }
    }

    #[test]
    fn plane_wave_energy() {
        let grid = Grid::line(32, std::f64::consts::PI).unwrap();
        let set = OrbitalSet::slater(grid, plane_wave(&grid, &[3])).unwrap();
        let e = hartree_energy(&set, &Potential::zero(), 0.3).unwrap();
        assert!((e - 0.09 * 9.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn second_order_in_dt() {
        let grid = Grid::line(128, 10.0).unwrap();
        let eps = 0.5;
        let set = OrbitalSet::slater(grid, vec![gaussian_packet(&grid, 0.0, 1.0, 0.3, eps)]).unwrap();
        let pot = Potential::gaussian(2.0, 1.0);
        let run = |dt: f64| {
            let t = evolve_meanfield(&set, MeanFieldModel::Hartree, &pot, eps, Propagation::new(0.4, dt)).unwrap();
            t.last().orbitals().unwrap().orbitals[0].clone()
        };
        let (a, b, c) = (run(0.01), run(0.005), run(0.0025));
        let d1 = (&a - &b).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let d2 = (&b - &c).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((d1 / d2 - 4.0).abs() < 0.5, "{}", d1 / d2);
    }

    #[test]
    fn energy_conservation_and_reversibility() {
        let grid = Grid::line(128, 10.0).unwrap();
        let eps = 0.5;
        let set = OrbitalSet::slater(grid, hermite_functions(&grid, 2, 1.0, 0.5)).unwrap();
        let pot = Potential::gaussian(1.0, 1.0);
        let traj = evolve_meanfield(&set, MeanFieldModel::Hartree, &pot, eps, Propagation::new(1.0, 0.002).every(50)).unwrap();
        let obs = traj.observables().unwrap();
        let e0 = obs[0].energy;
        for o in &obs {
            assert!((o.energy - e0).abs() / e0.abs() < 1e-6, "{} {}", o.energy, e0);
            assert!((o.trace - 1.0).abs() < 1e-10);
            assert!(o.orthonormality_defect < 1e-9);
        }
        let back = evolve_meanfield(traj.last().orbitals().unwrap(), MeanFieldModel::Hartree, &pot, eps, Propagation::new(-1.0, -0.002)).unwrap();
        let err = back.last().orbitals().unwrap().orbitals[0]
            .iter()
            .zip(set.orbitals[0].iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn step_limits() {
        let grid = Grid::line(128, 10.0).unwrap();
        let set = OrbitalSet::slater(grid, vec![gaussian_packet(&grid, 0.0, 1.0, 0.0, 1.0)]).unwrap();
        let r = evolve_meanfield(&set, MeanFieldModel::Hartree, &Potential::zero(), 0.5, Propagation::new(1.0, 0.5));
        assert!(matches!(r, Err(Error::StepSize(_))));
        let big = Grid::line(512, 10.0).unwrap();
        let set = OrbitalSet::slater(big, vec![gaussian_packet(&big, 0.0, 1.0, 0.0, 1.0)]).unwrap();
        let r = evolve_meanfield(&set, MeanFieldModel::HartreeFock, &Potential::zero(), 0.5, Propagation::new(1e-4, 1e-4));
        assert!(matches!(r, Err(Error::MemoryGuard(_))));
    }
}
