use ndarray::{ArrayD, IxDyn, Zip};
use rayon::prelude::*;
use serde::Serialize;

use super::dynamics::NBodyTrajectory;
use super::wavefunction::{par_indexed, NBodyWavefunction};
use crate::meanfield::uniform_spacing;
use crate::spectral::{AxisFft, Grid};
use crate::{Error, Result, C64};

/// Fixed `eta` vectors at which the Fourier-side equations are tested.
#[derive(Clone, Debug)]
pub struct NBodyResidualOptions {
    pub etas: Vec<Vec<f64>>,
    /// Multiplies `mu` of one sample by a factor, to exercise the detector.
    pub fault: Option<(usize, f64)>,
}

impl NBodyResidualOptions {
    pub fn new(slots: usize) -> Self {
        NBodyResidualOptions { etas: default_etas(slots), fault: None }
    }
}

/// Four deterministic `eta` vectors of length `slots`, entries in `[-0.8, 0.8]`.
pub fn default_etas(slots: usize) -> Vec<Vec<f64>> {
    (0..4).map(|r| (0..slots).map(|j| 0.8 * (1.3 * ((r + 1) * (j + 1)) as f64 + 0.4 * r as f64).sin()).collect()).collect()
}

/// Treatment of the coupling to the next marginal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Prefactor {
    /// `(N - n) lambda`, the exact finite-N weight.
    Exact,
    /// `N lambda`, the weight without the finite-N correction.
    Dropped,
}

#[derive(Clone, Debug)]
pub struct BbgkyOptions {
    /// `eta` vectors of length `n`.
    pub etas: Vec<Vec<f64>>,
    pub prefactor: Prefactor,
    pub fault: Option<(usize, f64)>,
}

impl BbgkyOptions {
    pub fn new(n: usize) -> Self {
        BbgkyOptions { etas: default_etas(n), prefactor: Prefactor::Exact, fault: None }
    }
}

/// Sup of a residual over the tested slices and where it is attained.
#[derive(Clone, Debug, Serialize)]
pub struct SliceResidual {
    pub sup: f64,
    pub time: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

struct MuSlice {
    values: ArrayD<C64>,
    d_eta: Vec<ArrayD<C64>>,
}

fn spectrum(psi: &NBodyWavefunction, plan: &AxisFft) -> ArrayD<C64> {
    let mut s = psi.values.clone();
    plan.raw_all(&mut s, false);
    let scale = 1.0 / (psi.grid.points as f64).powi(psi.particles as i32);
    s.mapv_inplace(|z| z * scale);
    s
}

/// `psi(x - s)` or its derivative along `deriv`, from the spectrum.
fn shifted(spec: &ArrayD<C64>, grid: &Grid, shifts: &[f64], deriv: Option<usize>, plan: &AxisFft) -> ArrayD<C64> {
    let n = grid.points;
    let ks = grid.frequencies();
    let factors: Vec<Vec<C64>> = shifts
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            (0..n)
                .map(|i| {
                    let k = ks[i];
                    let ph = if i == n / 2 { C64::new((k * s).cos(), 0.0) } else { C64::from_polar(1.0, -k * s) };
                    match deriv {
                        Some(d) if d == j && i == n / 2 => C64::new(0.0, 0.0),
                        Some(d) if d == j => ph * C64::new(0.0, k),
                        _ => ph,
                    }
                })
                .collect()
        })
        .collect();
    let mut out = spec.clone();
    par_indexed(&mut out, |idx, z| {
        for (j, f) in factors.iter().enumerate() {
            *z *= f[idx[j]];
        }
    });
    plan.raw_all(&mut out, true);
    out
}

/// `mu_N(xi, eta) = int e^{-i xi.x} psi(x - eps eta/2) conj(psi(x + eps eta/2)) dx` over the
/// dual lattice (FFT order), with its exact `eta` derivatives.
fn mu_slice(psi: &NBodyWavefunction, eta: &[f64], plan: &AxisFft) -> MuSlice {
    let grid = psi.grid;
    let nn = psi.particles;
    let spec = spectrum(psi, plan);
    let lo_s: Vec<f64> = eta.iter().map(|e| 0.5 * psi.epsilon * e).collect();
    let hi_s: Vec<f64> = lo_s.iter().map(|s| -s).collect();
    let lo = shifted(&spec, &grid, &lo_s, None, plan);
    let hi = shifted(&spec, &grid, &hi_s, None, plan);
    let cell = grid.spacing().powi(nn as i32);
    let finish = |mut f: ArrayD<C64>| {
        plan.raw_all(&mut f, false);
        par_indexed(&mut f, |idx, z| {
            let parity: usize = idx.iter().sum();
            *z *= if parity % 2 == 1 { -cell } else { cell };
        });
        f
    };
    let mut prod = lo.clone();
    Zip::from(&mut prod).and(&hi).par_for_each(|a, b| *a *= b.conj());
    let d_eta = (0..nn)
        .map(|j| {
            let dlo = shifted(&spec, &grid, &lo_s, Some(j), plan);
            let dhi = shifted(&spec, &grid, &hi_s, Some(j), plan);
            let mut d = ArrayD::zeros(lo.raw_dim());
            Zip::from(&mut d).and(&lo).and(&hi).and(&dlo).and(&dhi).par_for_each(|d, l, h, dl, dh| {
                *d = 0.5 * psi.epsilon * (l * dh.conj() - dl * h.conj());
            });
            finish(d)
        })
        .collect();
    MuSlice { values: finish(prod), d_eta }
}

struct Coupling {
    epsilon: f64,
    lambda: f64,
    /// Weight of the term linking to the next marginal; `None` for the full equation.
    next: Option<f64>,
    modes: Vec<(i64, f64)>,
}

fn active_modes(trajectory: &NBodyTrajectory, grid: &Grid) -> Result<Vec<(i64, f64)>> {
    if trajectory.potential.is_zero() {
        return Ok(Vec::new());
    }
    let coeffs = trajectory.potential.lattice_coeffs(grid)?;
    let cmax = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    Ok(coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > 1e-15 * cmax)
        .map(|(p, &c)| (grid.signed_index(p), c))
        .collect())
}

/// Sup over `xi` (first `slots` axes, the rest pinned at zero) of the hierarchy residual.
#[allow(clippy::too_many_arguments)]
fn hierarchy_sup(
    grid: &Grid,
    slots: usize,
    eta: &[f64],
    dt: f64,
    before: &ArrayD<C64>,
    now: &MuSlice,
    after: &ArrayD<C64>,
    c: &Coupling,
) -> (f64, Vec<usize>) {
    let n = grid.points;
    let half = (n / 2) as i64;
    let nn = now.values.ndim();
    let xis = grid.frequencies();
    let dk = grid.dual_spacing();
    let total = n.pow(slots as u32);
    let in_range = |m: i64| (-half..half).contains(&m);
    (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0usize; nn];
            let mut r = flat;
            for j in (0..slots).rev() {
                idx[j] = r % n;
                r /= n;
            }
            let at = |i: &[usize]| IxDyn(i);
            let here = at(&idx);
            let mut res = (after[&here] - before[&here]) / (2.0 * dt);
            for j in 0..slots {
                res -= xis[idx[j]] * now.d_eta[j][&here];
            }
            let signed: Vec<i64> = idx.iter().map(|&i| grid.signed_index(i)).collect();
            let mut probe = idx.clone();
            for &(p, cq) in &c.modes {
                let q = p as f64 * dk;
                for j in 0..slots {
                    let tj = signed[j] - p;
                    if !in_range(tj) {
                        continue;
                    }
                    for k in j + 1..slots {
                        let tk = signed[k] + p;
                        if !in_range(tk) {
                            continue;
                        }
                        probe[j] = grid.slot(tj);
                        probe[k] = grid.slot(tk);
                        let s = (0.5 * c.epsilon * q * (eta[j] - eta[k])).sin();
                        res += c.lambda * (2.0 / c.epsilon) * cq * s * now.values[at(&probe)];
                        probe[k] = idx[k];
                    }
                    if let Some(w) = c.next {
                        probe[j] = grid.slot(tj);
                        probe[slots] = grid.slot(p);
                        let s = (0.5 * c.epsilon * q * eta[j]).sin();
                        res += w * (2.0 / c.epsilon) * cq * s * now.values[at(&probe)];
                        probe[slots] = 0;
                    }
                    probe[j] = idx[j];
                }
            }
            (res.norm(), idx)
        })
        .reduce(|| (0.0, Vec::new()), |a, b| if b.0 > a.0 { b } else { a })
}

fn run_residual(
    trajectory: &NBodyTrajectory,
    slots: usize,
    etas: &[Vec<f64>],
    fault: Option<(usize, f64)>,
    next: Option<f64>,
) -> Result<SliceResidual> {
    let dt = uniform_spacing(&trajectory.times)?;
    let first = &trajectory.states[0];
    let grid = first.grid;
    let nn = first.particles;
    let plan = AxisFft::new(grid.points);
    let coupling = Coupling { epsilon: first.epsilon, lambda: first.coupling, next, modes: active_modes(trajectory, &grid)? };
    let xis = grid.frequencies();
    let mut best = SliceResidual { sup: 0.0, time: 0.0, xi: Vec::new(), eta: Vec::new() };
    for eta in etas {
        if eta.len() != slots {
            return Err(Error::Arity(format!("eta vector of length {}, expected {slots}", eta.len())));
        }
        let mut full = eta.clone();
        full.resize(nn, 0.0);
        let mut slices: Vec<MuSlice> = trajectory.states.iter().map(|s| mu_slice(s, &full, &plan)).collect();
        if let Some((k, f)) = fault {
            if let Some(sl) = slices.get_mut(k) {
                sl.values.mapv_inplace(|z| z * f);
                for d in &mut sl.d_eta {
                    d.mapv_inplace(|z| z * f);
                }
            }
        }
        for k in 1..slices.len() - 1 {
            let (sup, idx) =
                hierarchy_sup(&grid, slots, &full, dt, &slices[k - 1].values, &slices[k], &slices[k + 1].values, &coupling);
            if sup > best.sup {
                best = SliceResidual {
                    sup,
                    time: trajectory.times[k],
                    xi: idx[..slots].iter().map(|&i| xis[i]).collect(),
                    eta: eta.clone(),
                };
            }
        }
    }
    Ok(best)
}

/// Residual of the Fourier-side N-body equation
/// `d_t mu - sum_j xi_j d_{eta_j} mu + lambda (2/eps) sum_{j<k} sum_q c_q sin(eps q (eta_j - eta_k)/2) mu(xi - q e_j + q e_k)`.
pub fn wigner_equation_residual(trajectory: &NBodyTrajectory, opts: &NBodyResidualOptions) -> Result<SliceResidual> {
    let nn = trajectory.states[0].particles;
    run_residual(trajectory, nn, &opts.etas, opts.fault, None)
}

/// Residual of the `n`-th hierarchy equation evaluated on the exact marginals of the trajectory.
pub fn bbgky_consistency(trajectory: &NBodyTrajectory, n: usize, opts: &BbgkyOptions) -> Result<SliceResidual> {
    let first = &trajectory.states[0];
    let nn = first.particles;
    if n == 0 || n >= nn {
        return Err(Error::Arity(format!("hierarchy level {n} outside 1..{nn}")));
    }
    if nn > 3 {
        return Err(Error::Arity("hierarchy consistency is checked for N <= 3".into()));
    }
    let weight = match opts.prefactor {
        Prefactor::Exact => (nn - n) as f64 * first.coupling,
        Prefactor::Dropped => nn as f64 * first.coupling,
    };
    run_residual(trajectory, n, &opts.etas, opts.fault, Some(weight))
}
