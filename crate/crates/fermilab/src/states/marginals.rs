use ndarray::{Array2, ArrayD, IxDyn};
use rayon::prelude::*;

use super::density::{check_budget, DensityMatrix, OrbitalSet};
use crate::{Error, Result, C64};

/// One- and two-particle marginals of a Slater determinant.
pub fn slater_marginals(orbitals: &OrbitalSet) -> Result<(DensityMatrix, DensityMatrix)> {
    if !orbitals.is_pure() {
        return Err(Error::Precondition("Slater marginals need unit occupations".into()));
    }
    let n = orbitals.particle_count;
    if n < 2 {
        return Err(Error::Arity("a two-particle marginal needs N >= 2".into()));
    }
    let g1 = orbitals.gamma1()?;
    let g2 = two_body_from_gamma(&g1, n)?;
    Ok((g1, g2))
}

/// `(N/(N-1)) [gamma(x1,y1) gamma(x2,y2) - gamma(x1,y2) gamma(x2,y1)]`.
fn two_body_from_gamma(g1: &DensityMatrix, n: usize) -> Result<DensityMatrix> {
    let m = g1.side();
    check_budget(m.pow(4))?;
    let g = g1.kernel_matrix();
    let c = n as f64 / (n as f64 - 1.0);
    let mut out = vec![C64::new(0.0, 0.0); m.pow(4)];
    out.par_chunks_mut(m * m * m).enumerate().for_each(|(x1, block)| {
        for x2 in 0..m {
            for y1 in 0..m {
                for y2 in 0..m {
                    block[(x2 * m + y1) * m + y2] = c * (g[[x1, y1]] * g[[x2, y2]] - g[[x1, y2]] * g[[x2, y1]]);
                }
            }
        }
    });
    let shape = vec![g1.grid.points; 4 * g1.grid.dim];
    // flattened layout (x1, x2, y1, y2) matches the axis order for every d
    let kernel = ArrayD::from_shape_vec(IxDyn(&shape), out).map_err(|e| Error::Structural(e.to_string()))?;
    DensityMatrix::new(g1.grid, 2, kernel)
}

fn det(a: &[C64], k: usize) -> C64 {
    match k {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => unreachable!("determinants beyond rank three are not tabulated"),
    }
}

/// Quasifree (Wick) marginal
/// `omega^(k) = N^k / (N (N-1) .. (N-k+1)) det[gamma(x_i, y_j)]`.
pub fn quasifree_marginal(gamma1: &DensityMatrix, k: usize, n: usize) -> Result<DensityMatrix> {
    if gamma1.rank != 1 {
        return Err(Error::Arity("the Wick rule takes a one-particle kernel".into()));
    }
    if k == 0 || k > 3 {
        return Err(Error::Arity(format!("marginal rank {k} outside 1..=3")));
    }
    if k > n {
        return Err(Error::Arity(format!("marginal rank {k} exceeds particle number {n}")));
    }
    gamma1.check_pauli(n, 1e-10)?;
    let m = gamma1.side();
    check_budget(m.pow(2 * k as u32))?;
    let g = gamma1.kernel_matrix();
    let nf = n as f64;
    let falling: f64 = (0..k).map(|i| nf - i as f64).product();
    let pref = nf.powi(k as i32) / falling;
    let total = m.pow(2 * k as u32);
    let chunk = m.pow(k as u32);
    let mut out = vec![C64::new(0.0, 0.0); total];
    out.par_chunks_mut(chunk).enumerate().for_each(|(xi, block)| {
        let xs = unflatten(xi, m, k);
        let mut a = [C64::new(0.0, 0.0); 9];
        for (yi, slot) in block.iter_mut().enumerate() {
            let ys = unflatten(yi, m, k);
            for i in 0..k {
                for j in 0..k {
                    a[i * k + j] = g[[xs[i], ys[j]]];
                }
            }
            *slot = pref * det(&a[..k * k], k);
        }
    });
    let shape = vec![gamma1.grid.points; 2 * k * gamma1.grid.dim];
    let kernel = ArrayD::from_shape_vec(IxDyn(&shape), out).map_err(|e| Error::Structural(e.to_string()))?;
    DensityMatrix::new(gamma1.grid, k, kernel)
}

fn unflatten(mut idx: usize, m: usize, k: usize) -> [usize; 3] {
    let mut out = [0; 3];
    for slot in (0..k).rev() {
        out[slot] = idx % m;
        idx /= m;
    }
    out
}

/// Exchange kernel `gamma(x1, y2) gamma(x2, y1)` as a square matrix over `(x1 x2; y1 y2)`.
pub fn exchange_kernel(gamma1: &DensityMatrix) -> Result<Array2<C64>> {
    let m = gamma1.side();
    check_budget(m.pow(4))?;
    let g = gamma1.kernel_matrix();
    Ok(Array2::from_shape_fn((m * m, m * m), |(a, b)| {
        let (x1, x2) = (a / m, a % m);
        let (y1, y2) = (b / m, b % m);
        g[[x1, y2]] * g[[x2, y1]]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use crate::states::families::{plane_wave, random_slater};

    #[test]
    fn two_plane_waves_are_antisymmetric() {
        let grid = Grid::line(16, 3.0).unwrap();
        let set = OrbitalSet::slater(grid, plane_wave(&grid, &[0, 1])).unwrap();
        let (_, g2) = slater_marginals(&set).unwrap();
        let k = &g2.kernel;
        let mut worst = 0.0f64;
        for x1 in 0..16 {
            for x2 in 0..16 {
                for y1 in 0..16 {
                    for y2 in 0..16 {
                        // swapping the first pair of arguments flips the sign
                        worst = worst.max((k[[x1, x2, y1, y2]] + k[[x2, x1, y1, y2]]).norm());
                    }
                }
            }
        }
        assert!(worst < 1e-12);
        assert!(g2.exchange_symmetry_defect().unwrap() < 1e-12);
    }

    #[test]
    fn slater_rank_two_trace_and_diagonal() {
        let grid = Grid::line(24, 6.0).unwrap();
        let set = random_slater(&grid, 8, 1.0, 7).unwrap();
        let (g1, g2) = slater_marginals(&set).unwrap();
        assert!((g1.trace().re - 1.0).abs() < 1e-8);
        assert!((g2.trace().re - 1.0).abs() < 1e-8);
        for x in 0..24 {
            assert!(g2.kernel[[x, x, x, x]].norm() < 1e-10);
        }
    }

    #[test]
    fn wick_rank_one_and_two() {
        let grid = Grid::line(16, 5.0).unwrap();
        let set = random_slater(&grid, 3, 1.0, 3).unwrap();
        let (g1, g2) = slater_marginals(&set).unwrap();
        let q1 = quasifree_marginal(&g1, 1, 3).unwrap();
        let d1 = q1.kernel.iter().zip(g1.kernel.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d1 < 1e-14);
        let q2 = quasifree_marginal(&g1, 2, 3).unwrap();
        let d2 = q2.kernel.iter().zip(g2.kernel.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d2 < 1e-10);
    }

    #[test]
    fn wick_minus_product_is_exchange() {
        let grid = Grid::line(12, 4.0).unwrap();
        let set = random_slater(&grid, 4, 1.0, 11).unwrap();
        let g1 = set.gamma1().unwrap();
        let q2 = quasifree_marginal(&g1, 2, 4).unwrap().kernel_matrix();
        let ex = exchange_kernel(&g1).unwrap();
        let g = g1.kernel_matrix();
        let m = 12;
        let c = 4.0 / 3.0;
        let mut worst = 0.0f64;
        for a in 0..m * m {
            for b in 0..m * m {
                let prod = g[[a / m, b / m]] * g[[a % m, b % m]];
                worst = worst.max((q2[[a, b]] - c * prod + c * ex[[a, b]]).norm());
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn wick_closed_form_in_plane_wave_basis() {
        let grid = Grid::line(8, 3.0).unwrap();
        let ks = [-1i64, 0, 1, 2];
        let set = OrbitalSet::slater(grid, plane_wave(&grid, &ks)).unwrap();
        let g1 = set.gamma1().unwrap();
        let q2 = quasifree_marginal(&g1, 2, 4).unwrap();
        let xs = grid.positions();
        let dk = grid.dual_spacing();
        let len = 2.0 * grid.extent;
        let s = |a: f64| -> C64 {
            ks.iter().map(|&k| C64::from_polar(1.0, k as f64 * dk * a)).sum::<C64>() / (4.0 * len)
        };
        let mut worst = 0.0f64;
        for x1 in 0..8 {
            for x2 in 0..8 {
                for y1 in 0..8 {
                    for y2 in 0..8 {
                        let want = (4.0 / 3.0)
                            * (s(xs[x1] - xs[y1]) * s(xs[x2] - xs[y2]) - s(xs[x1] - xs[y2]) * s(xs[x2] - xs[y1]));
                        worst = worst.max((q2.kernel[[x1, x2, y1, y2]] - want).norm());
                    }
                }
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn wick_errors() {
        let grid = Grid::line(8, 3.0).unwrap();
        let set = OrbitalSet::slater(grid, plane_wave(&grid, &[0, 1])).unwrap();
        let g1 = set.gamma1().unwrap();
        assert!(matches!(quasifree_marginal(&g1, 3, 2), Err(Error::Arity(_))));
        assert!(matches!(quasifree_marginal(&g1, 2, 4), Err(Error::PauliBound(_))));
        let single = OrbitalSet::slater(grid, plane_wave(&grid, &[0])).unwrap();
        assert!(matches!(slater_marginals(&single), Err(Error::Arity(_))));
    }
}
