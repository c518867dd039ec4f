use std::f64::consts::PI;

use ndarray::{Array2, ArrayD, IxDyn};

use super::phase::{PhaseField, PhaseGrid, PhaseKind, WignerFunction};
use crate::spectral::AxisFft;
use crate::states::OrbitalSet;
use crate::{Error, Result, C64};

/// Sampled periodic Gaussian `(pi delta^2)^{-1/2} e^{-z^2/delta^2}` on `n` points of
/// spacing `step`, transformed to frequency space.
fn kernel_spectrum(n: usize, step: f64, delta: f64, plan: &AxisFft) -> Vec<C64> {
    let norm = (PI * delta * delta).powf(-0.5) * step;
    let period = n as f64 * step;
    let mut g: Vec<C64> = (0..n)
        .map(|i| {
            let z = i as f64 * step;
            let z = if z >= 0.5 * period { z - period } else { z };
            C64::new(norm * (-(z / delta).powi(2)).exp(), 0.0)
        })
        .collect();
    plan.raw_slice(&mut g, false);
    g
}

fn convolve_axis(data: &mut ArrayD<C64>, axis: usize, spectrum: &[C64], plan: &AxisFft) {
    plan.raw_axis(data, axis, false);
    let inv_n = 1.0 / spectrum.len() as f64;
    for (idx, z) in data.indexed_iter_mut() {
        *z *= spectrum[idx[axis]] * inv_n;
    }
    plan.raw_axis(data, axis, true);
}

/// Husimi function `H = W *_x G_{delta1} *_v G_{delta2}`, with periodic
/// convolution on the phase lattice.
pub fn husimi(w: &WignerFunction, delta1: f64, delta2: f64) -> Result<PhaseField> {
    if w.kind != PhaseKind::Wigner {
        return Err(Error::Structural(format!("Husimi smoothing takes a Wigner function, got {:?}", w.kind)));
    }
    if !(delta1 > 0.0 && delta2 > 0.0) {
        return Err(Error::Structural("smoothing widths must be positive".into()));
    }
    let (dx, dv) = (w.phase.dx(), w.phase.dv());
    if delta1 < 2.0 * dx || delta2 < 2.0 * dv {
        return Err(Error::Resolution(format!(
            "widths ({delta1}, {delta2}) under-resolved by spacings ({dx:.3e}, {dv:.3e})"
        )));
    }
    let values = smooth_phase(&w.values, w.rank, dx, dv, delta1, delta2);
    PhaseField::new(w.phase, w.rank, PhaseKind::Husimi, values)
}

/// Periodic Gaussian smoothing of a rank-`rank` phase-space array whose first
/// `rank` axes are positions of spacing `dx` and last `rank` axes velocities of spacing `dv`.
pub fn smooth_phase(values: &ArrayD<f64>, rank: usize, dx: f64, dv: f64, delta1: f64, delta2: f64) -> ArrayD<f64> {
    let (nx, nv) = (values.shape()[0], values.shape()[rank]);
    let (px, pv) = (AxisFft::new(nx), AxisFft::new(nv));
    let gx = kernel_spectrum(nx, dx, delta1, &px);
    let gv = kernel_spectrum(nv, dv, delta2, &pv);
    let mut vals = values.mapv(|r| C64::new(r, 0.0));
    for s in 0..rank {
        convolve_axis(&mut vals, s, &gx, &px);
        convolve_axis(&mut vals, rank + s, &gv, &pv);
    }
    vals.mapv(|z| z.re)
}

/// `<phi_{x,v}, psi>` for the coherent state
/// `phi_{x,v}(y) = (pi delta^2)^{-1/4} e^{-(y-x)^2 / 2 delta^2} e^{i v y / eps}`.
pub fn coherent_overlap(set: &OrbitalSet, orbital: usize, x: f64, v: f64, delta: f64, eps: f64) -> C64 {
    let grid = set.grid;
    let h = grid.spacing();
    let norm = (PI * delta * delta).powf(-0.25);
    grid.positions()
        .iter()
        .zip(set.orbitals[orbital].iter())
        .map(|(&y, psi)| {
            let z = (y - x) / delta;
            C64::from_polar(norm * (-0.5 * z * z).exp(), -v * y / eps) * psi
        })
        .sum::<C64>()
        * h
}

/// `(2 pi eps)^{-1} sum_j (a_j / N) |<phi_{x,v}, psi_j>|^2` on the phase lattice.
pub fn coherent_husimi(set: &OrbitalSet, phase: &PhaseGrid, delta1: f64) -> Result<PhaseField> {
    if set.grid != phase.grid {
        return Err(Error::Structural("orbitals and phase lattice use different grids".into()));
    }
    let eps = phase.epsilon;
    let xs = phase.positions();
    let vs = phase.velocities();
    let inv_n = 1.0 / set.particle_count as f64;
    let mut out = Array2::<f64>::zeros((xs.len(), vs.len()));
    for (c, &x) in xs.iter().enumerate() {
        for (q, &v) in vs.iter().enumerate() {
            out[[c, q]] = (0..set.len())
                .map(|j| set.weights[j] * inv_n * coherent_overlap(set, j, x, v, delta1, eps).norm_sqr())
                .sum::<f64>()
                / (2.0 * PI * eps);
        }
    }
    PhaseField::new(*phase, 1, PhaseKind::Husimi, out.into_dyn().into_shape(IxDyn(&phase.shape(1))).expect("shape"))
}
