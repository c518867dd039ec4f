use ndarray::{ArrayD, IxDyn};

use super::phase::{wigner_unchecked, PhaseGrid};
use crate::spectral::{spectral_derivative, AxisFft, Grid};
use crate::states::DensityMatrix;
use crate::{Error, Result, C64};

/// Discrete sup-norm of `d_t W + v d_x W` for free motion, with `d_t gamma`
/// taken from the generator `-(i/eps)[-(eps^2/2) Delta, gamma]`.
pub fn free_wigner_residual(gamma: &DensityMatrix, epsilon: f64) -> Result<f64> {
    if gamma.rank != 1 || gamma.grid.dim != 1 {
        return Err(Error::Arity("the free residual is tabulated for one-dimensional rank-1 kernels".into()));
    }
    let grid = gamma.grid;
    let plan = AxisFft::new(grid.points);
    let mut dxx = gamma.kernel.clone();
    spectral_derivative(&grid, &mut dxx, 0, 2, &plan);
    let mut dyy = gamma.kernel.clone();
    spectral_derivative(&grid, &mut dyy, 1, 2, &plan);
    let dt_kernel = (&dxx - &dyy).mapv(|z| z * C64::new(0.0, 0.5 * epsilon));
    let dt = DensityMatrix::new(grid, 1, dt_kernel)?;
    let dt_w = wigner_unchecked(&dt, epsilon)?.values;
    let w = wigner_unchecked(gamma, epsilon)?.values;
    let phase = PhaseGrid::new(grid, epsilon)?;
    let wide = Grid::line(phase.x_count(), grid.extent)?;
    let mut dx_w: ArrayD<C64> = w.clone();
    spectral_derivative(&wide, &mut dx_w, 0, 1, &AxisFft::new(phase.x_count()));
    let vs = phase.velocities();
    let mut worst = 0.0f64;
    for c in 0..phase.x_count() {
        for (q, &v) in vs.iter().enumerate() {
            let idx = IxDyn(&[c, q]);
            worst = worst.max((dt_w[&idx] + v * dx_w[&idx]).norm());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::families::gaussian_packet;
    use crate::states::OrbitalSet;

    #[test]
    fn free_gaussian_residual_vanishes() {
        let grid = Grid::line(128, 10.0).unwrap();
        let eps = 0.4;
        let set = OrbitalSet::slater(grid, vec![gaussian_packet(&grid, -0.5, 1.0, 0.6, eps)]).unwrap();
        let r = free_wigner_residual(&set.gamma1().unwrap(), eps).unwrap();
        assert!(r < 1e-6, "{r}");
    }
}
