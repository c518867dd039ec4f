//! Kinetic tail, Lieb-Thirring, pair momentum-gap and displacement-band checks.

use ndarray::{Array2, ArrayD};
use serde::Serialize;

use crate::harness::fit_power_law;
use crate::meanfield::Propagation;
use crate::nbody::{evolve_nbody, nbody_dt_max, NBodyTrajectory, NBodyWavefunction};
use crate::spectral::quad::adaptive_gk;
use crate::spectral::{transform_values, AxisFft, Direction, Grid, Potential};
use crate::states::{kinetic_trace, populations, OrbitalSet};
use crate::{Error, Result, C64};

/// Constant of the Fourier-side Lieb-Thirring inequality in one dimension,
/// frozen above the largest ratio on the Hermite calibration family.
pub const LT_CONSTANT: f64 = 0.45;

fn require_line(grid: &Grid) -> Result<()> {
    if grid.dim != 1 {
        return Err(Error::Structural("appendix checks are one-dimensional".into()));
    }
    Ok(())
}

/// `eps^2 Tr(-Delta gamma)` for the trace-one one-particle matrix, the constant of the kinetic hypothesis.
pub fn kinetic_constant(set: &OrbitalSet, epsilon: f64) -> Result<f64> {
    require_line(&set.grid)?;
    Ok(epsilon * epsilon * kinetic_trace(set)?)
}

#[derive(Clone, Copy, Debug)]
pub struct TailOptions {
    /// Largest admissible kinetic constant.
    pub kinetic_cap: f64,
    /// Points per unit speed used to sample `O` for its support and sup norm.
    pub samples_per_unit: usize,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions { kinetic_cap: 10.0, samples_per_unit: 400 }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailCheck {
    pub nu: f64,
    pub lambda: f64,
    pub kinetic: f64,
    pub sup: f64,
    /// `|<O, H_nu>|`.
    pub lhs: f64,
    /// `[C_1 (nu/(lambda eps))^2 + nu/(2 lambda^2)] ||O||_inf`.
    pub rhs: f64,
}

impl TailCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-10)
    }
}

/// Pairing of a velocity observable supported in `|v| >= lambda` with the
/// one-particle Husimi function at scale `nu`, whose velocity marginal is the
/// momentum density `rho_nu` smoothed by a Gaussian of variance `nu/2`.
pub fn husimi_tail_check(
    set: &OrbitalSet,
    epsilon: f64,
    nu: f64,
    lambda: f64,
    o: &dyn Fn(f64) -> f64,
    opts: &TailOptions,
) -> Result<TailCheck> {
    if !(nu > 0.0 && lambda > 0.0 && epsilon > 0.0) {
        return Err(Error::Precondition("scales must be positive".into()));
    }
    let kinetic = kinetic_constant(set, epsilon)?;
    if kinetic > opts.kinetic_cap {
        return Err(Error::Precondition(format!("kinetic constant {kinetic:.3e} exceeds {}", opts.kinetic_cap)));
    }
    let grid = set.grid;
    let pops = populations(set)?;
    let sigma = (0.5 * nu).sqrt();
    let v_top = nu * grid.nyquist() + 12.0 * sigma;
    let count = ((2.0 * v_top * opts.samples_per_unit as f64).ceil() as usize).max(1000);
    let mut sup = 0.0f64;
    for i in 0..=count {
        let v = -v_top + 2.0 * v_top * i as f64 / count as f64;
        let f = o(v);
        if v.abs() < lambda && f != 0.0 {
            return Err(Error::UnsupportedObservable(format!("observable is {f} at |v| = {} < lambda", v.abs())));
        }
        sup = sup.max(f.abs());
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt();
    let mut pairing = 0.0;
    if sup > 0.0 {
        for (i, &p) in pops.iter().enumerate() {
            if p < 1e-300 {
                continue;
            }
            let c = nu * grid.signed_index(i) as f64 * grid.dual_spacing();
            let g = |v: f64| o(v) * norm * (-0.5 * ((v - c) / sigma).powi(2)).exp();
            let (a, b) = (c - 12.0 * sigma, c + 12.0 * sigma);
            let mut cuts = vec![a];
            cuts.extend([-lambda, lambda].iter().copied().filter(|&x| x > a && x < b));
            cuts.push(b);
            let inner: f64 = cuts.windows(2).map(|w| adaptive_gk(&g, w[0], w[1], 1e-12, 1e-15)).sum();
            pairing += p * inner;
        }
    }
    let rhs = (kinetic * (nu / (lambda * epsilon)).powi(2) + nu / (2.0 * lambda * lambda)) * sup;
    Ok(TailCheck { nu, lambda, kinetic, sup, lhs: pairing.abs(), rhs })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LtCheck {
    pub particles: usize,
    /// `int rho(k)^{1 + 2/d} dk` for the momentum density of mass `N`.
    pub lhs: f64,
    /// `<Psi, sum_j x_j^2 Psi>`.
    pub rhs: f64,
    pub ratio: f64,
}

impl LtCheck {
    pub fn holds(&self) -> bool {
        self.ratio <= LT_CONSTANT
    }
}

/// Both sides of the Fourier-side Lieb-Thirring inequality for a Slater state.
pub fn lt_momentum_check(set: &OrbitalSet) -> Result<LtCheck> {
    require_line(&set.grid)?;
    let grid = set.grid;
    let d = grid.dim as f64;
    let n = set.particle_count as f64;
    let dk = grid.dual_spacing();
    let lhs = populations(set)?.iter().map(|p| (n * p / dk).powf(1.0 + 2.0 / d)).sum::<f64>() * dk;
    let xs = grid.positions();
    let h = grid.spacing();
    let rhs: f64 = set
        .orbitals
        .iter()
        .zip(&set.weights)
        .map(|(phi, a)| a * phi.iter().zip(&xs).map(|(z, x)| z.norm_sqr() * x * x).sum::<f64>() * h)
        .sum();
    Ok(LtCheck { particles: set.particle_count, lhs, rhs, ratio: lhs / rhs })
}

fn spectra(set: &OrbitalSet) -> Vec<ArrayD<C64>> {
    let plan = AxisFft::new(set.grid.points);
    set.orbitals
        .iter()
        .map(|phi| {
            let mut f = phi.clone();
            transform_values(&set.grid, &mut f, Direction::Forward, &plan);
            f
        })
        .collect()
}

fn matrix(a: &[ArrayD<C64>], weight: &[f64], cell: f64) -> Array2<C64> {
    let m = a.len();
    Array2::from_shape_fn((m, m), |(i, j)| a[i].iter().zip(a[j].iter()).zip(weight).map(|((x, y), w)| x.conj() * y * *w).sum::<C64>() * cell)
}

/// `Tr gamma2 (a_1 - a_2)^2` for the Slater determinant of `set`, from the one-body matrix
/// of the multiplication operator `a` and the diagonal of `a^2`.
fn pair_spread(a1: &Array2<C64>, a2_diag: &[f64]) -> f64 {
    let n = a2_diag.len() as f64;
    let mean_sq: f64 = a2_diag.iter().sum::<f64>() / n;
    let tr: C64 = (0..a1.nrows()).map(|i| a1[[i, i]]).sum();
    let frob: f64 = a1.iter().map(|z| z.norm_sqr()).sum();
    2.0 * mean_sq - 2.0 * (tr.norm_sqr() - frob) / (n * (n - 1.0))
}

fn require_pure(set: &OrbitalSet) -> Result<()> {
    require_line(&set.grid)?;
    if !set.is_pure() || set.len() != set.particle_count || set.len() < 2 {
        return Err(Error::Precondition("pair statistics need a pure Slater state of at least two particles".into()));
    }
    if set.orthonormality_defect() > 1e-8 {
        return Err(Error::Precondition("orbitals are not orthonormal".into()));
    }
    Ok(())
}

/// `v_0^2 = Tr gamma (p_1 - p_2)^2` of a Slater determinant, `p = -i d/dx`.
pub fn pair_momentum_gap(set: &OrbitalSet) -> Result<f64> {
    require_pure(set)?;
    let ks = set.grid.frequencies();
    let spec = spectra(set);
    let p = matrix(&spec, &ks, set.grid.dual_spacing());
    let k2: Vec<f64> = ks.iter().map(|k| k * k).collect();
    let diag: Vec<f64> = matrix(&spec, &k2, set.grid.dual_spacing()).diag().iter().map(|z| z.re).collect();
    Ok(pair_spread(&p, &diag))
}

/// `u_0^2 = Tr gamma (x_1 - x_2)^2` of a Slater determinant.
pub fn pair_displacement(set: &OrbitalSet) -> Result<f64> {
    require_pure(set)?;
    let xs = set.grid.positions();
    let x = matrix(&set.orbitals, &xs, set.grid.spacing());
    let x2: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let diag: Vec<f64> = matrix(&set.orbitals, &x2, set.grid.spacing()).diag().iter().map(|z| z.re).collect();
    Ok(pair_spread(&x, &diag))
}

/// `Tr gamma (p_1 - p_2)^2 = 2 Var(p)` for the symmetric product `phi^{(x)N}`.
pub fn product_momentum_gap(grid: &Grid, phi: &ArrayD<C64>) -> Result<f64> {
    require_line(grid)?;
    let set = OrbitalSet::unchecked(*grid, vec![phi.clone()], vec![1.0], 1);
    let spec = spectra(&set);
    let ks = grid.frequencies();
    let dk = grid.dual_spacing();
    let m1: f64 = spec[0].iter().zip(&ks).map(|(z, k)| z.norm_sqr() * k).sum::<f64>() * dk;
    let m2: f64 = spec[0].iter().zip(&ks).map(|(z, k)| z.norm_sqr() * k * k).sum::<f64>() * dk;
    Ok(2.0 * (m2 - m1 * m1))
}

#[derive(Clone, Debug, Serialize)]
pub struct GapScaling {
    /// `(N, u_0^2, v_0^2)`.
    pub points: Vec<(usize, f64, f64)>,
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl GapScaling {
    /// Fitted exponent against the fermionic rate `2/d`.
    pub fn holds(&self, d: usize) -> bool {
        self.exponent >= 2.0 / d as f64 - 0.15
    }
}

/// Fitted exponent of `v_0^2` against `N` over a Slater family whose pair
/// displacement stays below `k_max`, which bounds the centre-of-mass spread.
pub fn momentum_gap_scaling(family: &[OrbitalSet], k_max: f64) -> Result<GapScaling> {
    let mut points = Vec::with_capacity(family.len());
    for set in family {
        let u2 = pair_displacement(set)?;
        let n = set.particle_count as f64;
        if (n - 1.0) / n * u2 > k_max {
            return Err(Error::Precondition(format!("centre-of-mass spread {:.3e} exceeds {k_max}", (n - 1.0) / n * u2)));
        }
        points.push((set.particle_count, u2, pair_momentum_gap(set)?));
    }
    let series: Vec<(f64, f64)> = points.iter().map(|p| (p.0 as f64, p.2)).collect();
    let fit = fit_power_law(&series)?;
    Ok(GapScaling { points, exponent: fit.slope, intercept: fit.intercept, r_squared: fit.r_squared })
}

/// Root mean square pair displacement and momentum gap of particles one and two.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairStatistics {
    pub time: f64,
    pub u: f64,
    pub v: f64,
}

/// `u = [Tr gamma (x_1 - x_2)^2]^{1/2}` and `v = [Tr gamma (p_1 - p_2)^2]^{1/2}` of an `N`-body wavefunction.
pub fn pair_statistics(psi: &NBodyWavefunction, time: f64) -> Result<PairStatistics> {
    if psi.particles < 2 {
        return Err(Error::Arity("pair statistics need two particles".into()));
    }
    let grid = psi.grid;
    let xs = grid.positions();
    let ks = grid.frequencies();
    let cell = grid.spacing().powi(psi.particles as i32);
    let mut u2 = 0.0;
    for (idx, z) in psi.values.indexed_iter() {
        let d = xs[idx[0]] - xs[idx[1]];
        u2 += z.norm_sqr() * d * d;
    }
    let mut spec = psi.values.clone();
    AxisFft::new(grid.points).raw_all(&mut spec, false);
    let (mut v2, mut mass) = (0.0, 0.0);
    for (idx, z) in spec.indexed_iter() {
        let d = ks[idx[0]] - ks[idx[1]];
        v2 += z.norm_sqr() * d * d;
        mass += z.norm_sqr();
    }
    Ok(PairStatistics { time, u: (u2 * cell).sqrt(), v: (v2 / mass).sqrt() })
}

/// Wavefunction evolving under `H = -alpha Delta + (1/N) sum_{j<k} U(x_j - x_k)` in unscaled time.
pub fn alpha_wavefunction(set: &OrbitalSet, alpha: f64) -> Result<NBodyWavefunction> {
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("alpha = {alpha} must be positive")));
    }
    let eps = 2.0 * alpha;
    NBodyWavefunction::slater_with_coupling(set, eps, eps / set.len() as f64)
}

/// Trajectory of [`alpha_wavefunction`] sampled at `samples + 1` equally spaced times on `[0, t]`.
pub fn alpha_trajectory(set: &OrbitalSet, alpha: f64, potential: &Potential, t: f64, samples: usize) -> Result<NBodyTrajectory> {
    let psi = alpha_wavefunction(set, alpha)?;
    let samples = samples.max(1);
    let limit = nbody_dt_max(&psi, potential);
    let per = (t / (samples as f64 * limit)).ceil().max(1.0) as usize;
    evolve_nbody(&psi, potential, Propagation::new(t, t / (samples * per) as f64).every(per))
}

#[derive(Clone, Debug, Serialize)]
pub struct BandReport {
    pub alpha: f64,
    /// `||U'||_inf`.
    pub c: f64,
    pub u0: f64,
    pub v0: f64,
    /// `v_0 / (8C)`.
    pub window: f64,
    pub samples: Vec<PairStatistics>,
    /// Largest `|v_t - v_0| - 4Ct`.
    pub worst_v_excess: f64,
    /// Largest `u_t - u_0 - 3 alpha v_0 t`.
    pub worst_u_excess: f64,
}

impl BandReport {
    pub fn v_band_holds(&self) -> bool {
        self.worst_v_excess <= 1e-9
    }

    pub fn u_bound_holds(&self) -> bool {
        self.worst_u_excess <= 1e-9
    }
}

/// Samples `u_t, v_t` along a trajectory of `H_{N, alpha}` and compares them with
/// the band `v_0 - 4Ct <= v_t <= v_0 + 4Ct` and the growth bound `u_t <= u_0 + 3 alpha v_0 t`.
pub fn displacement_band_check(alpha: f64, potential: &Potential, trajectory: &NBodyTrajectory) -> Result<BandReport> {
    let first = &trajectory.states[0];
    let nn = first.particles as f64;
    if (first.epsilon - 2.0 * alpha).abs() > 1e-12 * alpha || (first.coupling - first.epsilon / nn).abs() > 1e-12 * first.coupling.abs() {
        return Err(Error::Precondition("trajectory was not generated by H_{N, alpha}".into()));
    }
    if potential.dim != 1 || trajectory.potential.kind != potential.kind {
        return Err(Error::Precondition("trajectory potential differs from the checked potential".into()));
    }
    let c = potential.gradient_sup();
    let s0 = pair_statistics(first, trajectory.times[0])?;
    let window = if c > 0.0 { s0.v / (8.0 * c) } else { f64::INFINITY };
    let t_last = *trajectory.times.last().expect("nonempty trajectory");
    if t_last > window * (1.0 + 1e-12) {
        return Err(Error::Window(format!("t = {t_last} beyond v_0/(8C) = {window}")));
    }
    let samples = trajectory.times.iter().zip(&trajectory.states).map(|(&t, psi)| pair_statistics(psi, t)).collect::<Result<Vec<_>>>()?;
    let worst_v_excess = samples.iter().map(|s| (s.v - s0.v).abs() - 4.0 * c * s.time).fold(f64::NEG_INFINITY, f64::max);
    let worst_u_excess = samples.iter().map(|s| s.u - s0.u - 3.0 * alpha * s0.v * s.time).fold(f64::NEG_INFINITY, f64::max);
    Ok(BandReport { alpha, c, u0: s0.u, v0: s0.v, window, samples, worst_v_excess, worst_u_excess })
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaSweep {
    pub t: f64,
    /// `(alpha, u_t)`.
    pub points: Vec<(f64, f64)>,
    pub u0: f64,
    /// Least-squares `a` in `u_t^2 - u_0^2 ~ a alpha^2 + b alpha`.
    pub quadratic: f64,
    pub linear: f64,
}

impl AlphaSweep {
    pub fn monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 > w[0].1)
    }
}

/// `u_t` at a common time for each `alpha`, with the quadratic growth coefficient.
pub fn alpha_sweep(set: &OrbitalSet, potential: &Potential, alphas: &[f64], t: f64) -> Result<AlphaSweep> {
    if alphas.len() < 2 {
        return Err(Error::Precondition("the sweep needs at least two values of alpha".into()));
    }
    let mut points = Vec::with_capacity(alphas.len());
    let mut u0 = 0.0;
    for &a in alphas {
        let traj = alpha_trajectory(set, a, potential, t, 1)?;
        u0 = pair_statistics(&traj.states[0], 0.0)?.u;
        points.push((a, pair_statistics(traj.last(), t)?.u));
    }
    let (mut s4, mut s3, mut s2, mut r2, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, u) in &points {
        let y = u * u - u0 * u0;
        s4 += a.powi(4);
        s3 += a.powi(3);
        s2 += a * a;
        r2 += a * a * y;
        r1 += a * y;
    }
    let det = s4 * s2 - s3 * s3;
    let quadratic = (r2 * s2 - r1 * s3) / det;
    let linear = (s4 * r1 - s3 * r2) / det;
    Ok(AlphaSweep { t, points, u0, quadratic, linear })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbody::nbody_marginal;
    use crate::states::families::{gaussian_packet, hermite_functions, plane_wave, plane_wave_shell, random_slater};
    use crate::states::{lowdin, slater_marginals};
    use crate::transforms::{coherent_husimi, PhaseGrid};
    use std::f64::consts::PI;

    fn hermite(points: usize, extent: f64, n: usize) -> OrbitalSet {
        let grid = Grid::line(points, extent).unwrap();
        OrbitalSet::slater(grid, hermite_functions(&grid, n, 1.0, 0.0)).unwrap()
    }

    #[test]
    fn zero_observable_gives_zero() {
        let grid = Grid::line(64, PI).unwrap();
        let set = plane_wave_shell(&grid, 1.0, 9).unwrap();
        let r = husimi_tail_check(&set, 1.0 / 9.0, 1.0 / 9.0, 0.3, &|_| 0.0, &TailOptions::default()).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn tail_collapses_below_the_semiclassical_scale() {
        let grid = Grid::line(256, PI).unwrap();
        let set = plane_wave_shell(&grid, 1.0, 33).unwrap();
        let eps = 1.0 / set.particle_count as f64;
        let lambda = 0.2;
        let o = |v: f64| if v.abs() >= lambda { 1.0 } else { 0.0 };
        let mut prev = f64::INFINITY;
        for r in [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125] {
            let c = husimi_tail_check(&set, eps, r * eps, lambda, &o, &TailOptions::default()).unwrap();
            assert!(c.holds(), "{c:?}");
            assert!(c.lhs < prev);
            prev = c.lhs;
        }
        assert!(prev < 1e-12, "{prev}");
    }

    #[test]
    fn tail_pairing_matches_coherent_husimi() {
        let grid = Grid::line(128, 12.0).unwrap();
        let eps = 0.3;
        let lambda = 0.5;
        let o = |v: f64| if v.abs() >= lambda { (v * v - lambda * lambda) * (-(v * v)).exp() } else { 0.0 };
        for seed in 0..5 {
            let set = random_slater(&grid, 3, 1.0, seed).unwrap();
            let c = husimi_tail_check(&set, eps, eps, lambda, &o, &TailOptions::default()).unwrap();
            assert!(c.holds(), "{c:?}");
            let field = coherent_husimi(&set, &PhaseGrid::new(grid, eps).unwrap(), eps.sqrt()).unwrap();
            let direct = field.pair_with(|_, v| o(v));
            assert!((direct - c.lhs).abs() < 1e-3 * c.lhs.max(1e-3), "{direct} {}", c.lhs);
        }
    }

    #[test]
    fn observable_inside_the_ball_is_rejected() {
        let set = hermite(64, 6.0, 2);
        let r = husimi_tail_check(&set, 0.5, 0.5, 0.3, &|v| v, &TailOptions::default());
        assert!(matches!(r, Err(Error::UnsupportedObservable(_))));
        let hot = husimi_tail_check(&set, 50.0, 0.5, 0.3, &|_| 0.0, &TailOptions::default());
        assert!(matches!(hot, Err(Error::Precondition(_))));
    }

    #[test]
    fn lt_single_gaussian_closed_form() {
        let grid = Grid::line(256, 12.0).unwrap();
        for s in [0.7, 1.4] {
            let set = OrbitalSet::slater(grid, vec![gaussian_packet(&grid, 0.0, s, 0.0, 1.0)]).unwrap();
            let c = lt_momentum_check(&set).unwrap();
            assert!((c.lhs - s * s / (PI * 3f64.sqrt())).abs() < 1e-9, "{}", c.lhs);
            assert!((c.rhs - s * s / 2.0).abs() < 1e-9);
            assert!((c.ratio - 2.0 / (PI * 3f64.sqrt())).abs() < 1e-9);
        }
    }

    #[test]
    fn lt_constant_covers_calibration_family() {
        let mut worst = 0.0f64;
        for n in 1..=8 {
            let c = lt_momentum_check(&hermite(256, 12.0, n)).unwrap();
            worst = worst.max(c.ratio);
        }
        assert!(worst <= LT_CONSTANT && worst > 0.5 * LT_CONSTANT, "{worst}");
    }

    #[test]
    fn lt_scaling_covariance() {
        let grid = Grid::line(512, 24.0).unwrap();
        let narrow = OrbitalSet::slater(grid, hermite_functions(&grid, 3, 1.0, 0.0)).unwrap();
        let wide = OrbitalSet::slater(grid, hermite_functions(&grid, 3, 2.0, 0.0)).unwrap();
        let (a, b) = (lt_momentum_check(&narrow).unwrap(), lt_momentum_check(&wide).unwrap());
        assert!((b.rhs / a.rhs - 4.0).abs() < 1e-8);
        assert!((b.lhs / a.lhs - 4.0).abs() < 1e-8);
    }

    #[test]
    fn lt_sides_agree_with_kernel_path() {
        let grid = Grid::line(64, 6.0).unwrap();
        let set = random_slater(&grid, 4, 1.0, 9).unwrap();
        let c = lt_momentum_check(&set).unwrap();
        let g = set.gamma1().unwrap();
        let xs = grid.positions();
        let kernel_rhs: f64 = g.diagonal().iter().zip(&xs).map(|(r, x)| r * x * x).sum::<f64>() * grid.spacing() * 4.0;
        assert!((c.rhs - kernel_rhs).abs() < 1e-8 * c.rhs);
        let pops = crate::states::kernel_populations(&g).unwrap();
        let dk = grid.dual_spacing();
        let kernel_lhs: f64 = pops.iter().map(|p| (4.0 * p / dk).powi(3)).sum::<f64>() * dk;
        assert!((c.lhs - kernel_lhs).abs() < 1e-8 * c.lhs);
    }

    #[test]
    fn two_mode_momentum_gap() {
        let grid = Grid::line(32, PI).unwrap();
        let set = OrbitalSet::slater(grid, plane_wave(&grid, &[0, 1])).unwrap();
        assert!((pair_momentum_gap(&set).unwrap() - 1.0).abs() < 1e-12);
        let set = OrbitalSet::slater(grid, plane_wave(&grid, &[-2, 3])).unwrap();
        assert!((pair_momentum_gap(&set).unwrap() - 25.0).abs() < 1e-10);
    }

    #[test]
    fn gap_matches_wavefunction_path() {
        let grid = Grid::line(48, 6.0).unwrap();
        let raw = vec![gaussian_packet(&grid, -1.0, 0.9, 0.4, 0.5), gaussian_packet(&grid, 0.7, 1.1, -0.2, 0.5)];
        let set = OrbitalSet::slater(grid, lowdin(&grid, &raw)).unwrap();
        let psi = NBodyWavefunction::slater(&set, 0.5).unwrap();
        let s = pair_statistics(&psi, 0.0).unwrap();
        assert!((s.v * s.v - pair_momentum_gap(&set).unwrap()).abs() < 1e-8);
        assert!((s.u * s.u - pair_displacement(&set).unwrap()).abs() < 1e-8);
        let g2 = nbody_marginal(&psi, 2).unwrap();
        let (_, q2) = slater_marginals(&set).unwrap();
        let diff = g2.kernel.iter().zip(q2.kernel.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
    }

    #[test]
    fn plane_wave_gap_scales_quadratically() {
        let grid = Grid::line(256, PI).unwrap();
        let family: Vec<OrbitalSet> = [5, 9, 17, 33, 65].iter().map(|&n| plane_wave_shell(&grid, 1.0, n).unwrap()).collect();
        let s = momentum_gap_scaling(&family, 10.0).unwrap();
        assert!(s.holds(1), "{}", s.exponent);
        assert!((s.exponent - 2.0).abs() < 0.15, "{}", s.exponent);
        assert!(matches!(momentum_gap_scaling(&family, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn bosonic_product_has_no_gap_growth() {
        let grid = Grid::line(128, 8.0).unwrap();
        let phi = gaussian_packet(&grid, 0.0, 1.0, 0.0, 1.0);
        let v = product_momentum_gap(&grid, &phi).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let series: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0].iter().map(|&n| (n, v)).collect();
        assert!(fit_power_law(&series).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn free_motion_spreads_ballistically() {
        let set = hermite(64, 8.0, 2);
        let alpha = 0.25;
        let traj = alpha_trajectory(&set, alpha, &Potential::zero(), 1.0, 5).unwrap();
        let r = displacement_band_check(alpha, &Potential::zero(), &traj).unwrap();
        assert!(r.v_band_holds() && r.u_bound_holds());
        for s in &r.samples {
            assert!((s.v - r.v0).abs() < 1e-9);
            let want = r.u0 * r.u0 + 4.0 * alpha * alpha * r.v0 * r.v0 * s.time * s.time;
            assert!((s.u * s.u - want).abs() < 1e-8 * want, "{} {want}", s.u * s.u);
        }
    }

    #[test]
    fn interacting_band_and_window() {
        let set = hermite(64, 8.0, 2);
        let eps = 0.125;
        let pot = Potential::gaussian(8.0, 1.0);
        let psi = alpha_wavefunction(&set, eps).unwrap();
        let v0 = pair_statistics(&psi, 0.0).unwrap().v;
        let window = v0 / (8.0 * pot.gradient_sup());
        let traj = alpha_trajectory(&set, eps, &pot, window, 10).unwrap();
        let r = displacement_band_check(eps, &pot, &traj).unwrap();
        assert!(r.v_band_holds() && r.u_bound_holds(), "{r:?}");
        assert!(r.samples.iter().any(|s| (s.v - r.v0).abs() > 1e-6));
        let late = alpha_trajectory(&set, eps, &pot, 2.0 * window, 4).unwrap();
        assert!(matches!(displacement_band_check(eps, &pot, &late), Err(Error::Window(_))));
    }

    #[test]
    fn growth_increases_with_alpha() {
        let set = hermite(64, 8.0, 2);
        let pot = Potential::gaussian(8.0, 1.0);
        let eps = 0.125;
        let v0 = pair_statistics(&alpha_wavefunction(&set, eps).unwrap(), 0.0).unwrap().v;
        let t = v0 / (16.0 * pot.gradient_sup());
        let alphas: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|a| a * eps).collect();
        let s = alpha_sweep(&set, &pot, &alphas, t).unwrap();
        assert!(s.monotone(), "{:?}", s.points);
        assert!(s.quadratic > 0.0, "{}", s.quadratic);
    }
}
