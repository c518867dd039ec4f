use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::hartree::{mean_potential, Propagation};
use crate::spectral::{spectral_derivative, AxisFft, Grid, Potential};
use crate::transforms::smooth_phase;
use crate::{Error, Result, C64};

/// Phase-space lattice for the Vlasov equation: periodic positions on `[-L, L)`
/// and velocities `v_j = -V + j dv` on `[-V, V)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VlasovGrid {
    pub x_points: usize,
    pub x_extent: f64,
    pub v_points: usize,
    pub v_extent: f64,
}

impl VlasovGrid {
    pub fn new(x_points: usize, x_extent: f64, v_points: usize, v_extent: f64) -> Result<Self> {
        Grid::line(x_points, x_extent)?;
        Grid::line(v_points, v_extent)?;
        Ok(VlasovGrid { x_points, x_extent, v_points, v_extent })
    }

    pub fn x_grid(&self) -> Grid {
        Grid { dim: 1, points: self.x_points, extent: self.x_extent }
    }

    pub fn v_grid(&self) -> Grid {
        Grid { dim: 1, points: self.v_points, extent: self.v_extent }
    }

    pub fn dx(&self) -> f64 {
        self.x_grid().spacing()
    }

    pub fn dv(&self) -> f64 {
        self.v_grid().spacing()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.x_grid().positions()
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.v_grid().positions()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VlasovState {
    pub grid: VlasovGrid,
    /// `values[[i, j]] = f(x_i, v_j)`.
    pub values: Array2<f64>,
    pub potential: Potential,
}

impl VlasovState {
    pub fn new(grid: VlasovGrid, values: Array2<f64>, potential: Potential) -> Result<Self> {
        if values.dim() != (grid.x_points, grid.v_points) {
            return Err(Error::Structural(format!("Vlasov values of shape {:?}", values.dim())));
        }
        let s = VlasovState { grid, values, potential };
        if s.values.iter().any(|&f| f < -1e-12) {
            return Err(Error::Precondition("initial distribution has negative values".into()));
        }
        if (s.mass() - 1.0).abs() > 1e-8 {
            return Err(Error::Precondition(format!("initial distribution has mass {}", s.mass())));
        }
        Ok(s)
    }

    /// Samples `f` on the lattice and normalizes it to unit mass.
    pub fn from_fn(grid: VlasovGrid, potential: Potential, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let xs = grid.positions();
        let vs = grid.velocities();
        let mut values = Array2::from_shape_fn((grid.x_points, grid.v_points), |(i, j)| f(xs[i], vs[j]));
        let m = values.sum() * grid.dx() * grid.dv();
        if !(m > 0.0) {
            return Err(Error::Precondition("distribution has no mass".into()));
        }
        values.mapv_inplace(|v| v / m);
        VlasovState::new(grid, values, potential)
    }

    pub fn mass(&self) -> f64 {
        self.values.sum() * self.grid.dx() * self.grid.dv()
    }

    pub fn density(&self) -> Vec<f64> {
        let dv = self.grid.dv();
        self.values.sum_axis(Axis(1)).iter().map(|r| r * dv).collect()
    }

    pub fn momentum(&self) -> f64 {
        let vs = self.grid.velocities();
        let cell = self.grid.dx() * self.grid.dv();
        self.values.indexed_iter().map(|((_, j), f)| vs[j] * f).sum::<f64>() * cell
    }

    pub fn l2_squared(&self) -> f64 {
        self.values.iter().map(|f| f * f).sum::<f64>() * self.grid.dx() * self.grid.dv()
    }

    /// `int v^2/2 f + (1/2) int rho (U * rho)`.
    pub fn energy(&self) -> Result<f64> {
        let vs = self.grid.velocities();
        let cell = self.grid.dx() * self.grid.dv();
        let kinetic = self.values.indexed_iter().map(|((_, j), f)| 0.5 * vs[j] * vs[j] * f).sum::<f64>() * cell;
        if self.potential.is_zero() {
            return Ok(kinetic);
        }
        let g = self.grid.x_grid();
        let rho = self.density();
        let v = mean_potential(&g, &self.potential.lattice_coeffs(&g)?, &rho, &AxisFft::new(g.points));
        Ok(kinetic + 0.5 * g.spacing() * rho.iter().zip(&v).map(|(r, v)| r * v).sum::<f64>())
    }

    /// Gaussian-smoothed distribution, the classical counterpart of the Husimi function.
    pub fn smoothed(&self, delta1: f64, delta2: f64) -> Result<Array2<f64>> {
        let (dx, dv) = (self.grid.dx(), self.grid.dv());
        if delta1 < 2.0 * dx || delta2 < 2.0 * dv {
            return Err(Error::Resolution(format!("widths ({delta1}, {delta2}) under-resolved")));
        }
        let out = smooth_phase(&self.values.clone().into_dyn(), 1, dx, dv, delta1, delta2);
        Ok(out.into_dimensionality().expect("rank-1 phase array"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VlasovTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<VlasovState>,
}

/// Shifts every lane along `axis` by its own amount: lane `l` becomes `f(z - shifts[l])`.
fn shift_lanes(values: &mut Array2<f64>, axis: usize, grid: &Grid, shifts: &[f64], plan: &AxisFft) {
    let ks = grid.frequencies();
    let n = grid.points;
    Zip::from(values.lanes_mut(Axis(axis))).and(&ndarray::ArrayView1::from(shifts)).par_for_each(|mut lane, &s| {
        let mut buf: Vec<C64> = lane.iter().map(|&f| C64::new(f, 0.0)).collect();
        plan.raw_slice(&mut buf, false);
        for (i, (b, k)) in buf.iter_mut().zip(&ks).enumerate() {
            let ph = if i == n / 2 { C64::new((k * s).cos(), 0.0) } else { C64::from_polar(1.0, -k * s) };
            *b *= ph / n as f64;
        }
        plan.raw_slice(&mut buf, true);
        for (dst, src) in lane.iter_mut().zip(buf) {
            *dst = src.re;
        }
    });
}

struct VlasovStepper {
    xg: Grid,
    vg: Grid,
    px: AxisFft,
    pv: AxisFft,
    coeffs: Option<Vec<f64>>,
    half_shift: Vec<f64>,
    dt: f64,
}

impl VlasovStepper {
    fn step(&self, f: &mut Array2<f64>) {
        let mass: f64 = f.sum();
        shift_lanes(f, 0, &self.xg, &self.half_shift, &self.px);
        if let Some(c) = &self.coeffs {
            let dv = self.vg.spacing();
            let rho: Vec<f64> = f.sum_axis(Axis(1)).iter().map(|r| r * dv).collect();
            let v = mean_potential(&self.xg, c, &rho, &self.px);
            let mut dvdx = ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&[v.len()]), v.iter().map(|&x| C64::new(x, 0.0)).collect())
                .expect("line");
            spectral_derivative(&self.xg, &mut dvdx, 0, 1, &self.px);
            let kicks: Vec<f64> = dvdx.iter().map(|z| -z.re * self.dt).collect();
            shift_lanes(f, 1, &self.vg, &kicks, &self.pv);
        }
        shift_lanes(f, 0, &self.xg, &self.half_shift, &self.px);
        f.mapv_inplace(|v| v.max(0.0));
        let after: f64 = f.sum();
        if after > 0.0 {
            f.mapv_inplace(|v| v * mass / after);
        }
    }
}

/// Strang-split semi-Lagrangian propagation of the nonlinear Vlasov equation.
///
/// Each advection substep is an exact band-limited translation along its lane;
/// negative undershoots are clipped and the clipped mass is restored by rescaling.
pub fn evolve_vlasov(initial: &VlasovState, prop: Propagation) -> Result<VlasovTrajectory> {
    let (steps, dt) = prop.steps()?;
    let g = initial.grid;
    let (xg, vg) = (g.x_grid(), g.v_grid());
    if dt.abs() * g.v_extent > g.dx() * (1.0 + 1e-12) {
        return Err(Error::StepSize(format!("dt * v_max = {:.3e} exceeds dx = {:.3e}", dt.abs() * g.v_extent, g.dx())));
    }
    let fmax = initial.potential.gradient_sup();
    if dt.abs() * fmax > g.dv() * (1.0 + 1e-12) {
        return Err(Error::StepSize(format!("dt * F_max = {:.3e} exceeds dv = {:.3e}", dt.abs() * fmax, g.dv())));
    }
    let stepper = VlasovStepper {
        xg,
        vg,
        px: AxisFft::new(xg.points),
        pv: AxisFft::new(vg.points),
        coeffs: if initial.potential.is_zero() { None } else { Some(initial.potential.lattice_coeffs(&xg)?) },
        half_shift: vg.positions().iter().map(|v| 0.5 * v * dt).collect(),
        dt,
    };
    let mut f = initial.values.clone();
    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];
    for s in 1..=steps {
        stepper.step(&mut f);
        if s % prop.stride == 0 || s == steps {
            times.push(s as f64 * dt);
            states.push(VlasovState { grid: g, values: f.clone(), potential: initial.potential.clone() });
        }
    }
    Ok(VlasovTrajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_state(pot: Potential) -> VlasovState {
        let g = VlasovGrid::new(128, 8.0, 128, 6.0).unwrap();
        VlasovState::from_fn(g, pot, |x, v| (-(x - 0.5) * (x - 0.5) - v * v / 0.8).exp()).unwrap()
    }

    #[test]
    fn free_transport_follows_characteristics() {
        let s = gaussian_state(Potential::zero());
        let t = 0.6;
        let traj = evolve_vlasov(&s, Propagation::new(t, 0.01)).unwrap();
        let out = &traj.states.last().unwrap().values;
        let xs = s.grid.positions();
        let vs = s.grid.velocities();
        let norm = s.values[[0, 0]] / (-(xs[0] - 0.5).powi(2) - vs[0] * vs[0] / 0.8).exp();
        let mut worst = 0.0f64;
        for (i, &x) in xs.iter().enumerate() {
            for (j, &v) in vs.iter().enumerate() {
                let y = x - v * t;
                let want = norm * (-(y - 0.5).powi(2) - v * v / 0.8).exp();
                worst = worst.max((out[[i, j]] - want).abs());
            }
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn conservation_laws() {
        let s = gaussian_state(Potential::gaussian(1.0, 1.0));
        let traj = evolve_vlasov(&s, Propagation::new(1.0, 0.01).every(10)).unwrap();
        let e0 = s.energy().unwrap();
        let p0 = s.momentum();
        let mut l2 = s.l2_squared();
        for st in &traj.states {
            assert!((st.mass() - 1.0).abs() < 1e-8);
            assert!(st.values.iter().all(|&f| f >= -1e-12));
            assert!((st.momentum() - p0).abs() < 1e-7);
            assert!((st.energy().unwrap() - e0).abs() < 1e-5);
            assert!(st.l2_squared() <= l2 + 1e-12);
            l2 = st.l2_squared();
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let s = gaussian_state(Potential::zero());
        assert!(matches!(evolve_vlasov(&s, Propagation::new(1.0, 0.5)), Err(Error::StepSize(_))));
    }
}
