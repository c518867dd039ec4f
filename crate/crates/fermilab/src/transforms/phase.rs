use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayD, ArrayView2, Axis, IxDyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spectral::{AxisFft, Grid};
use crate::states::DensityMatrix;
use crate::{Error, Result, C64};

/// What a phase-space field represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Wigner,
    Husimi,
    Vlasov,
}

/// Phase-space lattice attached to a position grid and a scale `eps`.
///
/// Positions are the `2n` pair centers `x_c = -L + c h / 2`; velocities are the
/// `n` points `v_q = q pi eps / (2L)` in FFT order, dual to the pair separations
/// `y = r h / eps` of equal parity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub grid: Grid,
    pub epsilon: f64,
}

impl PhaseGrid {
    pub fn new(grid: Grid, epsilon: f64) -> Result<Self> {
        if grid.dim != 1 {
            return Err(Error::Structural("phase-space fields are one-dimensional per particle".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Structural(format!("scale must be positive, got {epsilon}")));
        }
        Ok(PhaseGrid { grid, epsilon })
    }

    pub fn x_count(&self) -> usize {
        2 * self.grid.points
    }

    pub fn v_count(&self) -> usize {
        self.grid.points
    }

    pub fn dx(&self) -> f64 {
        0.5 * self.grid.spacing()
    }

    pub fn dv(&self) -> f64 {
        PI * self.epsilon / (2.0 * self.grid.extent)
    }

    /// Centers in increasing order.
    pub fn positions(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.x_count()).map(|c| -self.grid.extent + c as f64 * dx).collect()
    }

    /// Velocities in storage (FFT) order.
    pub fn velocities(&self) -> Vec<f64> {
        let dv = self.dv();
        (0..self.v_count()).map(|q| self.grid.signed_index(q) as f64 * dv).collect()
    }

    /// Largest representable speed (half the velocity period).
    pub fn v_max(&self) -> f64 {
        0.5 * self.v_count() as f64 * self.dv()
    }

    /// Shape of a rank-`k` field: `k` position axes then `k` velocity axes.
    pub fn shape(&self, rank: usize) -> Vec<usize> {
        let mut s = vec![self.x_count(); rank];
        s.extend(std::iter::repeat(self.v_count()).take(rank));
        s
    }

    /// Phase-space cell volume of a rank-`k` field.
    pub fn cell(&self, rank: usize) -> f64 {
        (self.dx() * self.dv()).powi(rank as i32)
    }
}

/// Real function on phase space `(x_1..x_k; v_1..v_k)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseField {
    pub phase: PhaseGrid,
    pub rank: usize,
    pub kind: PhaseKind,
    pub values: ArrayD<f64>,
}

pub type WignerFunction = PhaseField;

impl PhaseField {
    pub fn new(phase: PhaseGrid, rank: usize, kind: PhaseKind, values: ArrayD<f64>) -> Result<Self> {
        if values.shape() != phase.shape(rank).as_slice() {
            return Err(Error::Structural(format!(
                "phase values of shape {:?}, expected {:?}",
                values.shape(),
                phase.shape(rank)
            )));
        }
        Ok(PhaseField { phase, rank, kind, values })
    }

    pub fn mass(&self) -> f64 {
        self.values.sum() * self.phase.cell(self.rank)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `int O(x, v) F(x, v) dx dv` for a rank-1 field.
    pub fn pair_with(&self, o: impl Fn(f64, f64) -> f64) -> f64 {
        let xs = self.phase.positions();
        let vs = self.phase.velocities();
        let mut acc = 0.0;
        for (c, &x) in xs.iter().enumerate() {
            for (q, &v) in vs.iter().enumerate() {
                acc += o(x, v) * self.values[[c, q]];
            }
        }
        acc * self.phase.cell(1)
    }

    pub fn sup_distance(&self, other: &PhaseField) -> Result<f64> {
        if self.values.shape() != other.values.shape() || self.phase != other.phase {
            return Err(Error::Structural("phase fields live on different lattices".into()));
        }
        Ok(self.values.iter().zip(other.values.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Plot-ready CSV with columns `(x.., v.., value)` in increasing velocity
    /// order, plus a JSON header next to it.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(e.to_string()))?;
        let mut head: Vec<String> = (1..=self.rank).map(|i| format!("x{i}")).collect();
        head.extend((1..=self.rank).map(|i| format!("v{i}")));
        head.push("value".into());
        w.write_record(&head).map_err(|e| Error::Serde(e.to_string()))?;
        let xs = self.phase.positions();
        let vs = self.phase.velocities();
        let nv = self.phase.v_count();
        let order: Vec<usize> = (0..nv).map(|i| (i + nv / 2) % nv).collect();
        let shape = self.phase.shape(self.rank);
        let total: usize = shape.iter().product();
        let mut idx = vec![0usize; 2 * self.rank];
        for flat in 0..total {
            let mut rem = flat;
            for a in (0..2 * self.rank).rev() {
                idx[a] = rem % shape[a];
                rem /= shape[a];
            }
            let mut storage = idx.clone();
            for a in self.rank..2 * self.rank {
                storage[a] = order[idx[a]];
            }
            let mut rec: Vec<String> = (0..self.rank).map(|a| format!("{:.12e}", xs[storage[a]])).collect();
            rec.extend((self.rank..2 * self.rank).map(|a| format!("{:.12e}", vs[storage[a]])));
            rec.push(format!("{:.15e}", self.values[IxDyn(&storage)]));
            w.write_record(&rec).map_err(|e| Error::Serde(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let header = serde_json::json!({
            "epsilon": self.phase.epsilon,
            "rank": self.rank,
            "kind": self.kind,
            "grid": self.phase.grid,
            "dx": self.phase.dx(),
            "dv": self.phase.dv(),
        });
        let hp = path.with_extension("json");
        let mut f = File::create(&hp).map_err(|e| Error::io(&hp, e))?;
        f.write_all(serde_json::to_string_pretty(&header).map_err(|e| Error::Serde(e.to_string()))?.as_bytes())
            .map_err(|e| Error::io(&hp, e))?;
        Ok(())
    }
}

/// Applies `f` to every 2-d slab spanned by axes `(a, b)`, replacing their
/// lengths by the shape of the returned slabs.
pub(crate) fn map_axis_pair<T, U>(
    data: &ArrayD<T>,
    a: usize,
    b: usize,
    out_dims: (usize, usize),
    f: impl Fn(ArrayView2<T>) -> Array2<U> + Sync,
) -> ArrayD<U>
where
    T: Clone + Send + Sync,
    U: Clone + Send + Sync + Default,
{
    let nd = data.ndim();
    let mut perm: Vec<usize> = (0..nd).filter(|&i| i != a && i != b).collect();
    perm.push(a);
    perm.push(b);
    let moved = data.view().permuted_axes(IxDyn(&perm)).as_standard_layout().into_owned();
    let (la, lb) = (data.shape()[a], data.shape()[b]);
    let outer: usize = moved.len() / (la * lb);
    let flat = moved.into_shape((outer, la, lb)).expect("contiguous");
    let blocks: Vec<Array2<U>> = (0..outer).into_par_iter().map(|o| f(flat.index_axis(Axis(0), o))).collect();
    let mut out_shape: Vec<usize> = perm[..nd - 2].iter().map(|&i| data.shape()[i]).collect();
    out_shape.push(out_dims.0);
    out_shape.push(out_dims.1);
    let mut buf = Vec::with_capacity(outer * out_dims.0 * out_dims.1);
    for blk in &blocks {
        buf.extend(blk.iter().cloned());
    }
    let arr = ArrayD::from_shape_vec(IxDyn(&out_shape), buf).expect("block sizes");
    let mut inv = vec![0usize; nd];
    for (pos, &ax) in perm.iter().enumerate() {
        inv[ax] = pos;
    }
    arr.permuted_axes(IxDyn(&inv)).as_standard_layout().into_owned()
}

/// Relative spectral weight of `data` above half the Nyquist frequency, maximized over axes.
pub fn upper_band_fraction(grid: &Grid, data: &ArrayD<C64>) -> f64 {
    let n = grid.points;
    let plan = AxisFft::new(n);
    let total: f64 = data.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for axis in 0..data.ndim() {
        let mut f = data.clone();
        plan.raw_axis(&mut f, axis, false);
        let mut high = 0.0;
        for (idx, z) in f.indexed_iter() {
            let m = grid.signed_index(idx[axis]).unsigned_abs() as usize;
            if 2 * m >= n / 2 {
                high += z.norm_sqr();
            }
        }
        worst = worst.max(high / (total * n as f64));
    }
    worst
}

/// Largest modulus on any face of the box relative to the global maximum.
pub fn boundary_fraction(data: &ArrayD<C64>) -> f64 {
    let peak = data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let mut edge = 0.0f64;
    for axis in 0..data.ndim() {
        let last = data.shape()[axis] - 1;
        for s in [0, last] {
            edge = edge.max(data.index_axis(Axis(axis), s).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    edge / peak
}

/// Default amplitude tolerance of the band-limit and decay checks.
pub const RESOLUTION_TOL: f64 = 1e-10;

pub(crate) fn check_resolved(grid: &Grid, kernel: &ArrayD<C64>, tol: f64) -> Result<()> {
    let band = upper_band_fraction(grid, kernel);
    if band > tol * tol {
        return Err(Error::Resolution(format!(
            "kernel carries spectral weight {band:.2e} above half the Nyquist frequency"
        )));
    }
    let edge = boundary_fraction(kernel);
    if edge > tol {
        return Err(Error::Resolution(format!("kernel does not decay inside the box (edge ratio {edge:.2e})")));
    }
    Ok(())
}

fn pair_forward(g: ArrayView2<C64>, plan: &AxisFft, pref: f64) -> Array2<C64> {
    let n = g.nrows();
    let half = (n / 2) as i64;
    let mut out = Array2::<C64>::zeros((2 * n, n));
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for c in 0..2 * n - 1 {
        let p = (c % 2) as i64;
        for m in -half..half {
            let r = 2 * m + p;
            let j = (c as i64 + r) / 2;
            let l = (c as i64 - r) / 2;
            buf[m.rem_euclid(n as i64) as usize] =
                if (0..n as i64).contains(&j) && (0..n as i64).contains(&l) { g[[j as usize, l as usize]] } else { C64::new(0.0, 0.0) };
        }
        plan.raw_slice(&mut buf, false);
        for q in 0..n {
            let qs = if (q as i64) < half { q as i64 } else { q as i64 - n as i64 };
            let ph = C64::from_polar(pref, -PI * (qs * p) as f64 / n as f64);
            out[[c, q]] = buf[q] * ph;
        }
    }
    out
}

fn pair_inverse(w: ArrayView2<C64>, plan: &AxisFft, pref: f64) -> Array2<C64> {
    let n = w.ncols();
    let half = (n / 2) as i64;
    let mut g = Array2::<C64>::zeros((n, n));
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for c in 0..2 * n - 1 {
        let p = (c % 2) as i64;
        for q in 0..n {
            let qs = if (q as i64) < half { q as i64 } else { q as i64 - n as i64 };
            buf[q] = w[[c, q]] * C64::from_polar(1.0 / (pref * n as f64), PI * (qs * p) as f64 / n as f64);
        }
        plan.raw_slice(&mut buf, true);
        for m in -half..half {
            let r = 2 * m + p;
            let j = (c as i64 + r) / 2;
            let l = (c as i64 - r) / 2;
            if (0..n as i64).contains(&j) && (0..n as i64).contains(&l) {
                g[[j as usize, l as usize]] = buf[m.rem_euclid(n as i64) as usize];
            }
        }
    }
    g
}

/// Rescaled Wigner transform
/// `W(x, v) = (2 pi)^{-k} int gamma(x + eps y/2, x - eps y/2) e^{-i v y} dy`.
pub fn wigner(gamma: &DensityMatrix, epsilon: f64) -> Result<WignerFunction> {
    wigner_tol(gamma, epsilon, RESOLUTION_TOL)
}

/// Wigner transform accepting kernels resolved to amplitude `tol`.
pub fn wigner_tol(gamma: &DensityMatrix, epsilon: f64, tol: f64) -> Result<WignerFunction> {
    let phase = PhaseGrid::new(gamma.grid, epsilon)?;
    check_resolved(&gamma.grid, &gamma.kernel, tol)?;
    let out = wigner_unchecked(gamma, epsilon)?;
    let peak = out.values.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let imag = out.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if imag > 1e-10 * peak.max(1.0) {
        return Err(Error::Structural(format!("Wigner transform has imaginary residue {imag:.2e}; kernel not Hermitian")));
    }
    PhaseField::new(phase, gamma.rank, PhaseKind::Wigner, out.values.mapv(|z| z.re))
}

/// Complex lattice transform of an arbitrary kernel, without resolution checks.
pub(crate) struct ComplexPhase {
    pub values: ArrayD<C64>,
}

pub(crate) fn wigner_unchecked(gamma: &DensityMatrix, epsilon: f64) -> Result<ComplexPhase> {
    let phase = PhaseGrid::new(gamma.grid, epsilon)?;
    let k = gamma.rank;
    let entries: usize = phase.shape(k).iter().product();
    if entries > crate::states::KERNEL_BUDGET {
        return Err(Error::MemoryGuard(format!("rank-{k} Wigner function needs {entries} entries")));
    }
    let n = gamma.grid.points;
    let plan = AxisFft::new(n);
    let pref = 2.0 * gamma.grid.spacing() / (2.0 * PI * epsilon);
    let mut cur = gamma.kernel.clone();
    for s in 0..k {
        cur = map_axis_pair(&cur, s, k + s, (2 * n, n), |blk| pair_forward(blk, &plan, pref));
    }
    Ok(ComplexPhase { values: cur })
}

/// Inverse transform `gamma(x, y) = int W((x+y)/2, u) e^{i (x-y) u / eps} du`.
pub fn inverse_wigner(w: &WignerFunction) -> Result<DensityMatrix> {
    if w.kind != PhaseKind::Wigner {
        return Err(Error::Structural(format!("cannot invert a {:?} field", w.kind)));
    }
    let k = w.rank;
    let grid = w.phase.grid;
    let n = grid.points;
    let plan = AxisFft::new(n);
    let pref = 2.0 * grid.spacing() / (2.0 * PI * w.phase.epsilon);
    let mut cur = w.values.mapv(|r| C64::new(r, 0.0));
    for s in 0..k {
        cur = map_axis_pair(&cur, s, k + s, (n, n), |blk| pair_inverse(blk, &plan, pref));
    }
    DensityMatrix::new(grid, k, cur)
}

/// Integrates out the last `rank - k` particles in `x` and `v`.
pub fn marginal(w: &WignerFunction, k: usize) -> Result<WignerFunction> {
    if k == 0 || k > w.rank {
        return Err(Error::Arity(format!("marginal rank {k} outside 1..={}", w.rank)));
    }
    let cell = w.phase.dx() * w.phase.dv();
    let mut vals = w.values.clone();
    let r = w.rank;
    for s in (k..r).rev() {
        vals = vals.sum_axis(Axis(r + s));
    }
    for s in (k..r).rev() {
        vals = vals.sum_axis(Axis(s));
    }
    PhaseField::new(w.phase, k, w.kind, vals.mapv(|x| x * cell.powi((r - k) as i32)))
}
