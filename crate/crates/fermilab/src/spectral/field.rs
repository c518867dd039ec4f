use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{ArrayD, Axis, Dimension, IxDyn, Zip};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Grid;
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Position,
    Fourier,
    Phase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Complex samples over `grid^(rank)`, one array axis per coordinate.
#[derive(Clone, Debug)]
pub struct Field {
    pub grid: Grid,
    pub rank: usize,
    pub values: ArrayD<C64>,
    pub space: Space,
}

impl Field {
    pub fn new(grid: Grid, rank: usize, values: ArrayD<C64>, space: Space) -> Result<Self> {
        let axes = rank * grid.dim;
        if values.ndim() != axes || values.shape().iter().any(|&s| s != grid.points) {
            return Err(Error::Structural(format!(
                "values of shape {:?} do not match {} axes of {} points",
                values.shape(),
                axes,
                grid.points
            )));
        }
        Ok(Field { grid, rank, values, space })
    }

    pub fn zeros(grid: Grid, rank: usize, space: Space) -> Self {
        let shape = vec![grid.points; rank * grid.dim];
        Field { grid, rank, values: ArrayD::zeros(IxDyn(&shape)), space }
    }

    /// Samples `f` at every position-space lattice point.
    pub fn from_fn(grid: Grid, rank: usize, f: impl Fn(&[f64]) -> C64) -> Self {
        let xs = grid.positions();
        let shape = vec![grid.points; rank * grid.dim];
        let values = ArrayD::from_shape_fn(IxDyn(&shape), |idx| {
            let p: Vec<f64> = idx.slice().iter().map(|&i| xs[i]).collect();
            f(&p)
        });
        Field { grid, rank, values, space: Space::Position }
    }

    pub fn axes(&self) -> usize {
        self.rank * self.grid.dim
    }

    fn measure(&self) -> f64 {
        let step = match self.space {
            Space::Fourier => self.grid.dual_spacing(),
            _ => self.grid.spacing(),
        };
        step.powi(self.axes() as i32)
    }

    /// Discrete integral with the lattice measure of the current space.
    pub fn integral(&self) -> C64 {
        self.values.sum() * self.measure()
    }

    /// Discrete squared L2 norm with the lattice measure of the current space.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.measure()
    }
}

/// Cached forward and inverse plans for one axis length.
#[derive(Clone)]
pub struct AxisFft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AxisFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AxisFft({})", self.n)
    }
}

impl AxisFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        AxisFft { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized transform of a contiguous buffer.
    pub fn raw_slice(&self, buf: &mut [C64], inverse: bool) {
        if inverse {
            self.inv.process(buf);
        } else {
            self.fwd.process(buf);
        }
    }

    /// Unnormalized transform along one axis, in parallel over lanes.
    pub fn raw_axis(&self, data: &mut ArrayD<C64>, axis: usize, inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        Zip::from(data.lanes_mut(Axis(axis))).par_for_each(|mut lane| {
            let mut buf: Vec<C64> = lane.iter().copied().collect();
            plan.process(&mut buf);
            for (dst, src) in lane.iter_mut().zip(buf) {
                *dst = src;
            }
        });
    }

    pub fn raw_all(&self, data: &mut ArrayD<C64>, inverse: bool) {
        for axis in 0..data.ndim() {
            self.raw_axis(data, axis, inverse);
        }
    }
}

fn alternate(data: &mut ArrayD<C64>, n: usize) {
    // (-1)^m per axis: the phase e^{i k_m L} of a grid starting at -L
    debug_assert!(n % 2 == 0);
    for (idx, v) in data.indexed_iter_mut() {
        let parity: usize = idx.slice().iter().sum();
        if parity % 2 == 1 {
            *v = -*v;
        }
    }
}

/// Unitary-normalized transform approximating
/// `f^(k) = (2 pi)^{-D/2} int e^{-i k x} f(x) dx` on the lattice.
pub fn transform_values(grid: &Grid, values: &mut ArrayD<C64>, dir: Direction, plan: &AxisFft) {
    let axes = values.ndim() as i32;
    let n = grid.points;
    match dir {
        Direction::Forward => {
            plan.raw_all(values, false);
            alternate(values, n);
            let s = (grid.spacing() / (2.0 * PI).sqrt()).powi(axes);
            values.mapv_inplace(|z| z * s);
        }
        Direction::Inverse => {
            alternate(values, n);
            plan.raw_all(values, true);
            let s = (grid.dual_spacing() / (2.0 * PI).sqrt()).powi(axes);
            values.mapv_inplace(|z| z * s);
        }
    }
}

pub fn fourier_pair(field: &Field, dir: Direction) -> Result<Field> {
    let target = match (field.space, dir) {
        (Space::Position, Direction::Forward) => Space::Fourier,
        (Space::Fourier, Direction::Inverse) => Space::Position,
        (s, d) => {
            return Err(Error::Structural(format!("cannot apply {d:?} transform to a {s:?} field")))
        }
    };
    let plan = AxisFft::new(field.grid.points);
    let mut values = field.values.clone();
    transform_values(&field.grid, &mut values, dir, &plan);
    Field::new(field.grid, field.rank, values, target)
}

/// Periodic convolution `(a * b)(x) = int a(y) b(x - y) dy` of two position fields.
pub fn convolve(a: &Field, b: &Field) -> Result<Field> {
    if a.grid != b.grid || a.rank != b.rank {
        return Err(Error::Structural("convolution operands live on different grids".into()));
    }
    let fa = fourier_pair(a, Direction::Forward)?;
    let fb = fourier_pair(b, Direction::Forward)?;
    let scale = (2.0 * PI).sqrt().powi(a.axes() as i32);
    let prod = Zip::from(&fa.values).and(&fb.values).map_collect(|x, y| x * y * scale);
    let f = Field::new(a.grid, a.rank, prod, Space::Fourier)?;
    fourier_pair(&f, Direction::Inverse)
}

/// Normalized Gaussian `(pi delta^2)^{-D/2} exp(-z^2/delta^2)` over `grid^(rank)`.
pub fn gaussian_kernel(grid: &Grid, delta: f64, rank: usize) -> Result<Field> {
    if !(delta > 0.0) {
        return Err(Error::Structural(format!("kernel width must be positive, got {delta}")));
    }
    if delta < 2.0 * grid.spacing() {
        return Err(Error::Resolution(format!(
            "kernel width {delta} is under-resolved by spacing {}",
            grid.spacing()
        )));
    }
    let axes = (rank * grid.dim) as i32;
    let norm = (PI * delta * delta).powf(-(axes as f64) / 2.0);
    let g = *grid;
    Ok(Field::from_fn(*grid, rank, move |z| {
        let r2: f64 = z.iter().map(|&x| g.wrap(x).powi(2)).sum();
        C64::new(norm * (-r2 / (delta * delta)).exp(), 0.0)
    }))
}

/// Translate a periodic, band-limited array by `shift` along `axis`:
/// returns `f(x - shift)`.
pub fn spectral_shift(grid: &Grid, data: &mut ArrayD<C64>, axis: usize, shift: f64, plan: &AxisFft) {
    if shift == 0.0 {
        return;
    }
    let ks = grid.frequencies();
    let n = grid.points;
    let phases: Vec<C64> = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            // the Nyquist mode is kept real so real data stays real
            if i == n / 2 {
                C64::new((k * shift).cos(), 0.0)
            } else {
                C64::from_polar(1.0, -k * shift)
            }
        })
        .collect();
    let inv_n = 1.0 / n as f64;
    let fwd = &plan.fwd;
    let inv = &plan.inv;
    Zip::from(data.lanes_mut(Axis(axis))).par_for_each(|mut lane| {
        let mut buf: Vec<C64> = lane.iter().copied().collect();
        fwd.process(&mut buf);
        for (b, p) in buf.iter_mut().zip(&phases) {
            *b *= p * inv_n;
        }
        inv.process(&mut buf);
        for (dst, src) in lane.iter_mut().zip(buf) {
            *dst = src;
        }
    });
}

/// Spectral derivative of order `order` along `axis`.
pub fn spectral_derivative(grid: &Grid, data: &mut ArrayD<C64>, axis: usize, order: u32, plan: &AxisFft) {
    let ks = grid.frequencies();
    let n = grid.points;
    let mult: Vec<C64> = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            if i == n / 2 && order % 2 == 1 {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, k).powu(order)
            }
        })
        .collect();
    let inv_n = 1.0 / n as f64;
    let fwd = &plan.fwd;
    let inv = &plan.inv;
    Zip::from(data.lanes_mut(Axis(axis))).par_for_each(|mut lane| {
        let mut buf: Vec<C64> = lane.iter().copied().collect();
        fwd.process(&mut buf);
        for (b, m) in buf.iter_mut().zip(&mult) {
            *b *= m * inv_n;
        }
        inv.process(&mut buf);
        for (dst, src) in lane.iter_mut().zip(buf) {
            *dst = src;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, rank: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = vec![grid.points; rank * grid.dim];
        let values = ArrayD::from_shape_fn(IxDyn(&shape), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        Field::new(grid, rank, values, Space::Position).unwrap()
    }

    #[test]
    fn round_trip_identity() {
        let g = Grid::line(32, 3.0).unwrap();
        let f = random_field(g, 2, 1);
        let back = fourier_pair(&fourier_pair(&f, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
        let scale = f.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in f.values.iter().zip(back.values.iter()) {
            assert!((a - b).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn constant_maps_to_dc_delta() {
        let g = Grid::line(16, 2.0).unwrap();
        let f = Field::from_fn(g, 1, |_| C64::new(1.0, 0.0));
        let ff = fourier_pair(&f, Direction::Forward).unwrap();
        for (i, v) in ff.values.iter().enumerate() {
            if i == 0 {
                let want = 2.0 * g.extent / (2.0 * PI).sqrt();
                assert!((v.re - want).abs() < 1e-12 && v.im.abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_transform_matches_closed_form() {
        // unitary continuous transform of exp(-x^2/2) is exp(-k^2/2)
        let g = Grid::line(256, 16.0).unwrap();
        let f = Field::from_fn(g, 1, |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let ff = fourier_pair(&f, Direction::Forward).unwrap();
        for (v, k) in ff.values.iter().zip(g.frequencies()) {
            let want = (-k * k / 2.0).exp();
            assert!((v - want).norm() < 1e-10, "k={k} got {v} want {want}");
        }
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let g = Grid::line(8, 1.0).unwrap();
        let bad = ArrayD::zeros(IxDyn(&[8, 4]));
        assert!(matches!(Field::new(g, 2, bad, Space::Position), Err(Error::Structural(_))));
        let f = Field::zeros(g, 1, Space::Fourier);
        assert!(fourier_pair(&f, Direction::Forward).is_err());
    }

    #[test]
    fn kernel_mass_peak_and_second_moment() {
        let g = Grid::line(256, 16.0).unwrap();
        let k = gaussian_kernel(&g, 1.0, 1).unwrap();
        assert!((k.integral().re - 1.0).abs() < 1e-8);
        let peak = k.values[[g.points / 2]].re;
        assert!((peak - 1.0 / PI.sqrt()).abs() < 1e-14);
        // oracle: lattice quadrature of z^2 G with independent evaluation
        let h = g.spacing();
        let m2: f64 = g.positions().iter().map(|&z| z * z * (-z * z).exp() / PI.sqrt() * h).sum();
        assert!((m2 - 0.5).abs() < 1e-6);
        let m2k: f64 = g.positions().iter().zip(k.values.iter()).map(|(&z, v)| z * z * v.re * h).sum();
        assert!((m2k - m2).abs() < 1e-12);
    }

    #[test]
    fn kernel_rank_two_peak() {
        let g = Grid::line(64, 8.0).unwrap();
        let d = 1.5;
        let k = gaussian_kernel(&g, d, 2).unwrap();
        let peak = k.values[[32, 32]].re;
        assert!((peak - 1.0 / (PI * d * d)).abs() < 1e-14);
        assert!((k.integral().re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn under_resolved_kernel_rejected() {
        let g = Grid::line(16, 8.0).unwrap();
        assert!(matches!(gaussian_kernel(&g, 0.5, 1), Err(Error::Resolution(_))));
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let g = Grid::line(32, 4.0).unwrap();
        let a = random_field(g, 1, 7);
        let b = random_field(g, 1, 8);
        let c = convolve(&a, &b).unwrap();
        let h = g.spacing();
        let xs = g.positions();
        for i in 0..32 {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..32 {
                let k = g.nearest_index(xs[i] - xs[j]);
                s += a.values[[j]] * b.values[[k]] * h;
            }
            assert!((s - c.values[[i]]).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_and_derivative() {
        let g = Grid::line(64, PI).unwrap();
        let plan = AxisFft::new(64);
        let f = Field::from_fn(g, 1, |x| C64::new((3.0 * x[0]).sin(), 0.0));
        let mut s = f.values.clone();
        spectral_shift(&g, &mut s, 0, 0.3, &plan);
        let mut d = f.values.clone();
        spectral_derivative(&g, &mut d, 0, 1, &plan);
        for (i, &x) in g.positions().iter().enumerate() {
            assert!((s[[i]].re - (3.0 * (x - 0.3)).sin()).abs() < 1e-12);
            assert!((d[[i]].re - 3.0 * (3.0 * x).cos()).abs() < 1e-11);
        }
    }
}
