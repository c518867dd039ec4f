use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{ArrayD, IxDyn};
use serde::Serialize;

use super::bounds::{closed_form_bounds, BoundParameters};
use super::observable::{sine_kernel, BaseObservable, FourierObservable};
use crate::meanfield::Propagation;
use crate::nbody::{evolve_nbody, nbody_dt_max, NBodyWavefunction};
use crate::spectral::quad::gauss_legendre;
use crate::spectral::{AxisFft, Grid, Potential};
use crate::{Error, Result, C64};

/// Time-dependent marginals `mu^(r)(s; xi, eta)` on the dual lattice of a one-dimensional grid.
pub trait MuFamily: Sync {
    fn grid(&self) -> Grid;
    fn particles(&self) -> usize;
    fn epsilon(&self) -> f64;
    /// Weight `lambda` of each unordered pair.
    fn coupling(&self) -> f64;
    fn potential(&self) -> &Potential;
    /// `mu^(r)(s; ., eta)` over `lattice^r` in FFT order, `r = eta.len()`.
    fn slice(&self, s: f64, eta: &[f64]) -> Result<ArrayD<C64>>;
}

/// Marginals of an exact `N`-body trajectory, propagated on demand and cached per time.
pub struct NBodyFamily {
    psi0: NBodyWavefunction,
    potential: Potential,
    dt: f64,
    plan: AxisFft,
    spectra: Mutex<HashMap<(u64, usize), Arc<ArrayD<C64>>>>,
}

fn nyquist_phase(k: f64, shift: f64, nyquist: bool) -> C64 {
    if nyquist {
        C64::new((k * shift).cos(), 0.0)
    } else {
        C64::from_polar(1.0, -k * shift)
    }
}

fn unflatten(mut flat: usize, n: usize, idx: &mut [usize]) {
    for v in idx.iter_mut().rev() {
        *v = flat % n;
        flat /= n;
    }
}

impl NBodyFamily {
    pub fn new(psi0: NBodyWavefunction, potential: Potential, dt: f64) -> Result<Self> {
        let limit = nbody_dt_max(&psi0, &potential);
        if !(dt > 0.0) || dt > limit {
            return Err(Error::StepSize(format!("dt = {dt:.3e} outside (0, {limit:.3e}]")));
        }
        let plan = AxisFft::new(psi0.grid.points);
        Ok(NBodyFamily { psi0, potential, dt, plan, spectra: Mutex::new(HashMap::new()) })
    }

    pub fn state(&self, s: f64) -> Result<NBodyWavefunction> {
        if s == 0.0 {
            return Ok(self.psi0.clone());
        }
        let steps = (s.abs() / self.dt).ceil().max(1.0);
        let traj = evolve_nbody(&self.psi0, &self.potential, Propagation::new(s, s / steps))?;
        Ok(traj.last().clone())
    }

    /// Spectrum of `psi(s)` along the first `r` axes, divided by `n^r`.
    fn partial_spectrum(&self, s: f64, r: usize) -> Result<Arc<ArrayD<C64>>> {
        let key = (s.to_bits(), r);
        if let Some(a) = self.spectra.lock().expect("spectrum cache").get(&key) {
            return Ok(a.clone());
        }
        let mut a = self.state(s)?.values;
        for axis in 0..r {
            self.plan.raw_axis(&mut a, axis, false);
        }
        let scale = 1.0 / (self.psi0.grid.points as f64).powi(r as i32);
        a.mapv_inplace(|z| z * scale);
        let a = Arc::new(a);
        self.spectra.lock().expect("spectrum cache").insert(key, a.clone());
        Ok(a)
    }
}

impl MuFamily for NBodyFamily {
    fn grid(&self) -> Grid {
        self.psi0.grid
    }

    fn particles(&self) -> usize {
        self.psi0.particles
    }

    fn epsilon(&self) -> f64 {
        self.psi0.epsilon
    }

    fn coupling(&self) -> f64 {
        self.psi0.coupling
    }

    fn potential(&self) -> &Potential {
        &self.potential
    }

    fn slice(&self, s: f64, eta: &[f64]) -> Result<ArrayD<C64>> {
        let nn = self.psi0.particles;
        let r = eta.len();
        if r == 0 || r > nn {
            return Err(Error::Arity(format!("marginal rank {r} outside 1..={nn}")));
        }
        let grid = self.psi0.grid;
        let n = grid.points;
        let ks = grid.frequencies();
        let h = grid.spacing();
        let spec = self.partial_spectrum(s, r)?;
        let shifted = |sign: f64| {
            let factors: Vec<Vec<C64>> = eta
                .iter()
                .map(|e| (0..n).map(|i| nyquist_phase(ks[i], sign * 0.5 * self.psi0.epsilon * e, i == n / 2)).collect())
                .collect();
            let mut a = (*spec).clone();
            let mut idx = vec![0usize; nn];
            for (flat, z) in a.as_slice_mut().expect("standard layout").iter_mut().enumerate() {
                unflatten(flat, n, &mut idx);
                for (j, f) in factors.iter().enumerate() {
                    *z *= f[idx[j]];
                }
            }
            for axis in 0..r {
                self.plan.raw_axis(&mut a, axis, true);
            }
            a
        };
        let lo = shifted(1.0);
        let hi = shifted(-1.0);
        let tail = n.pow((nn - r) as u32);
        let mut out = ArrayD::<C64>::zeros(IxDyn(&vec![n; r]));
        {
            let o = out.as_slice_mut().expect("standard layout");
            let (l, u) = (lo.as_slice().expect("standard layout"), hi.as_slice().expect("standard layout"));
            for (flat, (a, b)) in l.iter().zip(u).enumerate() {
                o[flat / tail] += a * b.conj();
            }
        }
        self.plan.raw_all(&mut out, false);
        let cell = h.powi(nn as i32);
        let mut idx = vec![0usize; r];
        for (flat, z) in out.as_slice_mut().expect("standard layout").iter_mut().enumerate() {
            unflatten(flat, n, &mut idx);
            let parity: usize = idx.iter().sum();
            *z *= if parity % 2 == 1 { -cell } else { cell };
        }
        Ok(out)
    }
}

/// How the finite-`N` weights of the collision terms are assigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Weighting {
    /// Every `B` at rank `k` carries `(N - k) lambda`.
    Exact,
    /// Unit weights on every chain plus the first-order corrections `-lambda (l + m - 1)`.
    Printed,
}

#[derive(Clone, Copy, Debug)]
pub struct DuhamelOptions {
    /// Gauss-Legendre order per time axis.
    pub time_order: usize,
    pub eta_extent: f64,
    pub eta_step: f64,
    pub weighting: Weighting,
    pub bound: Option<BoundParameters>,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        DuhamelOptions { time_order: 8, eta_extent: 12.0, eta_step: 0.25, weighting: Weighting::Exact, bound: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DuhamelTerm {
    pub name: String,
    /// Number of collision operators in the chain.
    pub order: usize,
    /// `true` for the terms kept by the truncation.
    pub principal: bool,
    pub weight: f64,
    /// Weighted value.
    pub value: C64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DuhamelReport {
    pub t: f64,
    pub ell: usize,
    pub n: usize,
    pub weighting: Weighting,
    /// `<O, mu^(l)(t)>`.
    pub lhs: C64,
    pub terms: Vec<DuhamelTerm>,
    pub total: C64,
    /// Free term plus the principal chains.
    pub truncated: C64,
    pub identity_gap: f64,
    pub truncation_gap: f64,
    pub kappa_t: Option<f64>,
    pub tail_bound: Option<f64>,
    pub notes: Vec<String>,
}

/// The geometric tail bound of the report, if `kappa_t < 1`.
pub fn require_tail_bound(report: &DuhamelReport) -> Result<f64> {
    match (report.kappa_t, report.tail_bound) {
        (_, Some(b)) => Ok(b),
        (Some(k), None) => Err(Error::BoundInapplicable(format!("kappa_t = {k} is not below one"))),
        (None, None) => Err(Error::BoundInapplicable("no bound parameters were supplied".into())),
    }
}

struct Pairing<'a> {
    base: &'a BaseObservable,
    ell: usize,
    n: usize,
    dk: f64,
    eps: f64,
    lambda: f64,
    modes: Vec<(i64, f64)>,
    etas: Vec<(Vec<f64>, f64)>,
    xis: Vec<Vec<i64>>,
}

impl Pairing<'_> {
    fn in_range(&self, m: i64) -> bool {
        let half = (self.n / 2) as i64;
        (-half..half).contains(&m)
    }

    fn slot(&self, m: i64) -> usize {
        m.rem_euclid(self.n as i64) as usize
    }

    fn at(&self, mu: &ArrayD<C64>, ms: &[i64]) -> C64 {
        if ms.iter().all(|&m| self.in_range(m)) {
            let idx: Vec<usize> = ms.iter().map(|&m| self.slot(m)).collect();
            mu[IxDyn(&idx)]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    fn cell(&self) -> f64 {
        self.dk.powi(self.ell as i32)
    }

    fn xi(&self, ms: &[i64]) -> Vec<f64> {
        ms.iter().map(|&m| m as f64 * self.dk).collect()
    }

    /// `(S_b O)(xi, eta) = O(xi, eta - b xi)`.
    fn flowed(&self, b: f64, xi: &[f64], eta: &[f64]) -> C64 {
        let e: Vec<f64> = eta.iter().zip(xi).map(|(e, x)| e - b * x).collect();
        self.base.value(xi, &e)
    }

    /// Smooth part of `S_c B S_{-c} S_total O` at `(xi, q; eta)` without `-U^(q)`.
    fn chain(&self, c: f64, total: f64, xi: &[f64], q: f64, eta: &[f64]) -> C64 {
        let mut a = xi.to_vec();
        let mut b = eta.to_vec();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.ell {
            a[i] += q;
            b[i] += c * q;
            acc += sine_kernel(self.eps, q * (eta[i] - c * xi[i])) * self.flowed(total, &a, &b);
            a[i] -= q;
            b[i] -= c * q;
        }
        acc
    }

    fn padded(e: &[f64], extra: &[f64]) -> Vec<f64> {
        e.iter().chain(extra).copied().collect()
    }

    /// `<S_b O, mu^(l)(tau)>`.
    fn free(&self, fam: &dyn MuFamily, b: f64, tau: f64) -> Result<C64> {
        let mut total = C64::new(0.0, 0.0);
        for (e, w) in &self.etas {
            let mu = fam.slice(tau, e)?;
            let mut acc = C64::new(0.0, 0.0);
            for ms in &self.xis {
                acc += self.flowed(b, &self.xi(ms), e).conj() * self.at(&mu, ms);
            }
            total += acc * *w;
        }
        Ok(total * self.cell())
    }

    /// `<S_a B S_b O, mu^(l+1)(tau)>`.
    fn one_b(&self, fam: &dyn MuFamily, a: f64, b: f64, tau: f64) -> Result<C64> {
        let mut total = C64::new(0.0, 0.0);
        let mut ms1 = vec![0i64; self.ell + 1];
        for (e, w) in &self.etas {
            let shared = if a == 0.0 { Some(fam.slice(tau, &Self::padded(e, &[0.0]))?) } else { None };
            for &(p, cq) in &self.modes {
                let q = p as f64 * self.dk;
                let own;
                let mu = match &shared {
                    Some(m) => m,
                    None => {
                        own = fam.slice(tau, &Self::padded(e, &[a * q]))?;
                        &own
                    }
                };
                let mut acc = C64::new(0.0, 0.0);
                for ms in &self.xis {
                    ms1[..self.ell].copy_from_slice(ms);
                    ms1[self.ell] = p;
                    let m = self.at(mu, &ms1);
                    if m == C64::new(0.0, 0.0) {
                        continue;
                    }
                    acc += self.chain(a, a + b, &self.xi(ms), q, e).conj() * m;
                }
                total -= acc * cq * *w;
            }
        }
        Ok(total * self.cell())
    }

    /// `<A S_b O, mu^(l)(tau)>`.
    fn a_only(&self, fam: &dyn MuFamily, b: f64, tau: f64) -> Result<C64> {
        let mut total = C64::new(0.0, 0.0);
        for (e, w) in &self.etas {
            let mu = fam.slice(tau, e)?;
            let mut acc = C64::new(0.0, 0.0);
            for ms in &self.xis {
                let m = self.at(&mu, ms);
                let xi = self.xi(ms);
                for j in 0..self.ell {
                    for k in j + 1..self.ell {
                        for &(p, cp) in &self.modes {
                            let q = p as f64 * self.dk;
                            let mut s = xi.clone();
                            s[j] += q;
                            s[k] -= q;
                            acc -= cp * sine_kernel(self.eps, q * (e[j] - e[k])) * self.flowed(b, &s, e).conj() * m;
                        }
                    }
                }
            }
            total += acc * *w;
        }
        Ok(total * self.cell() * self.lambda)
    }

    /// `<A S_c B S_b O, mu^(l+1)(tau)>`.
    fn a_after_b(&self, fam: &dyn MuFamily, c: f64, b: f64, tau: f64) -> Result<C64> {
        let l = self.ell;
        let mut total = C64::new(0.0, 0.0);
        let mut ms1 = vec![0i64; l + 1];
        for (e, w) in &self.etas {
            for &(pq, cq) in &self.modes {
                let q = pq as f64 * self.dk;
                let mu = fam.slice(tau, &Self::padded(e, &[c * q]))?;
                let mut acc = C64::new(0.0, 0.0);
                for ms in &self.xis {
                    let xi = self.xi(ms);
                    ms1[..l].copy_from_slice(ms);
                    for &(pp, cp) in &self.modes {
                        let p = pp as f64 * self.dk;
                        for j in 0..l {
                            for k in j + 1..l {
                                ms1[l] = pq;
                                let m = self.at(&mu, &ms1);
                                let mut s = xi.clone();
                                s[j] += p;
                                s[k] -= p;
                                acc += cp * sine_kernel(self.eps, p * (e[j] - e[k])) * self.chain(c, c + b, &s, q, e).conj() * m;
                            }
                            ms1[l] = pq + pp;
                            let m = self.at(&mu, &ms1);
                            if m != C64::new(0.0, 0.0) {
                                let mut s = xi.clone();
                                s[j] += p;
                                acc += cp * sine_kernel(self.eps, p * (e[j] - c * q)) * self.chain(c, c + b, &s, q, e).conj() * m;
                            }
                        }
                    }
                }
                total += acc * cq * *w;
            }
        }
        Ok(total * self.cell() * self.lambda)
    }

    /// `<B S_c B S_b O, mu^(l+2)(tau)>`.
    fn two_b(&self, fam: &dyn MuFamily, c: f64, b: f64, tau: f64) -> Result<C64> {
        let l = self.ell;
        let mut total = C64::new(0.0, 0.0);
        let mut ms2 = vec![0i64; l + 2];
        for (e, w) in &self.etas {
            for &(pq, cq) in &self.modes {
                let q = pq as f64 * self.dk;
                let mu = fam.slice(tau, &Self::padded(e, &[c * q, 0.0]))?;
                let mut acc = C64::new(0.0, 0.0);
                for ms in &self.xis {
                    let xi = self.xi(ms);
                    ms2[..l].copy_from_slice(ms);
                    for &(p2, c2) in &self.modes {
                        let q2 = p2 as f64 * self.dk;
                        ms2[l + 1] = p2;
                        ms2[l] = pq;
                        let m = self.at(&mu, &ms2);
                        if m != C64::new(0.0, 0.0) {
                            for i in 0..l {
                                let mut s = xi.clone();
                                s[i] += q2;
                                acc += c2 * sine_kernel(self.eps, q2 * e[i]) * self.chain(c, c + b, &s, q, e).conj() * m;
                            }
                        }
                        ms2[l] = pq - p2;
                        let m = self.at(&mu, &ms2);
                        if m != C64::new(0.0, 0.0) {
                            acc += c2 * sine_kernel(self.eps, q2 * c * q) * self.chain(c, c + b, &xi, q, e).conj() * m;
                        }
                    }
                }
                total += acc * cq * *w;
            }
        }
        Ok(total * self.cell())
    }
}

fn trapezoid(extent: f64, step: f64) -> Vec<(f64, f64)> {
    let m = (extent / step).round() as i64;
    (-m..=m).map(|i| (i as f64 * step, step)).collect()
}

fn tensor<T: Clone>(axis: &[T], dims: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for _ in 0..dims {
        out = out.into_iter().flat_map(|v| axis.iter().map(move |a| [v.clone(), vec![a.clone()]].concat())).collect();
    }
    out
}

/// Terms of the `n`-fold iterated Duhamel expansion of `<O, mu^(l)(t)>`, each
/// evaluated on the family's marginals; pinned slots are resolved exactly on the dual lattice.
pub fn duhamel_pair(obs: &FourierObservable, family: &dyn MuFamily, n: usize, t: f64, opts: &DuhamelOptions) -> Result<DuhamelReport> {
    let l = obs.base_rank;
    let nn = family.particles();
    if !obs.ops().is_empty() {
        return Err(Error::UnsupportedObservable("the expansion starts from a base observable".into()));
    }
    if l > 2 || n > 2 || l > nn {
        return Err(Error::Arity(format!("expansion covers l <= min(2, N), n <= 2; got l = {l}, n = {n}, N = {nn}")));
    }
    if (obs.epsilon - family.epsilon()).abs() > 1e-12 {
        return Err(Error::Precondition("observable and family use different epsilon".into()));
    }
    if opts.time_order < 8 {
        return Err(Error::Precondition("time quadrature order must be at least 8".into()));
    }
    let grid = family.grid();
    let pot = family.potential();
    let modes: Vec<(i64, f64)> = if pot.is_zero() {
        Vec::new()
    } else {
        let c = pot.lattice_coeffs(&grid)?;
        let cmax = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        c.iter().enumerate().filter(|(_, v)| v.abs() > 1e-14 * cmax).map(|(i, &v)| (grid.signed_index(i), v)).collect()
    };
    let half = (grid.points / 2) as i64;
    let axis: Vec<i64> = (-half..half).collect();
    let eta_axis = trapezoid(opts.eta_extent, opts.eta_step);
    let etas = tensor(&eta_axis, l)
        .into_iter()
        .map(|v| (v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.1).product()))
        .collect();
    let lambda = family.coupling();
    let pairing = Pairing {
        base: &obs.base,
        ell: l,
        n: grid.points,
        dk: grid.dual_spacing(),
        eps: family.epsilon(),
        lambda,
        modes,
        etas,
        xis: tensor(&axis, l),
    };
    let fam = family;
    let w = |k: usize| nn.saturating_sub(k) as f64 * lambda;
    let single = gauss_legendre(opts.time_order, 0.0, t);
    let unit = gauss_legendre(opts.time_order, 0.0, 1.0);
    let double: Vec<(f64, f64, f64)> = unit
        .iter()
        .flat_map(|&(u, wu)| unit.iter().map(move |&(v, wv)| (t * u, t * u * v, t * t * u * wu * wv)))
        .collect();
    let collide = !pairing.modes.is_empty();

    let lhs = pairing.free(fam, 0.0, t)?;
    let mut terms = vec![DuhamelTerm { name: "free".into(), order: 0, principal: true, weight: 1.0, value: pairing.free(fam, t, 0.0)? }];
    let mut notes = Vec::new();
    let mut push = |name: &str, order: usize, principal: bool, weight: f64, raw: C64| {
        terms.push(DuhamelTerm { name: name.into(), order, principal, weight, value: raw * weight });
    };
    let printed = opts.weighting == Weighting::Printed;
    if n >= 1 && collide {
        if l >= 2 {
            let mut v = C64::new(0.0, 0.0);
            for &(s, ws) in &single {
                v += pairing.a_only(fam, t - s, s)? * ws;
            }
            push("A1", 1, false, 1.0, v);
        }
        let need_rem1 = l < nn && (n == 1 || printed);
        if need_rem1 {
            let mut v = C64::new(0.0, 0.0);
            for &(s, ws) in &single {
                v += pairing.one_b(fam, 0.0, t - s, s)? * ws;
            }
            if n == 1 {
                push("B1", 1, false, if printed { 1.0 } else { w(l) }, v);
            }
            if printed {
                push("C1", 1, false, -lambda * l as f64, v);
            }
        }
        if n == 2 {
            if l < nn {
                let mut v = C64::new(0.0, 0.0);
                for &(s, ws) in &single {
                    v += pairing.one_b(fam, s, t - s, 0.0)? * ws;
                }
                push("main1", 1, true, if printed { 1.0 } else { w(l) }, v);
                let mut v = C64::new(0.0, 0.0);
                for &(s1, s2, ws) in &double {
                    v += pairing.a_after_b(fam, s1 - s2, t - s1, s2)? * ws;
                }
                push("A2", 2, false, if printed { 1.0 } else { w(l) }, v);
            }
            if l + 1 < nn {
                let mut v = C64::new(0.0, 0.0);
                for &(s1, s2, ws) in &double {
                    v += pairing.two_b(fam, s1 - s2, t - s1, s2)? * ws;
                }
                push("B2", 2, false, if printed { 1.0 } else { w(l) * w(l + 1) }, v);
                if printed {
                    push("C2", 2, false, -lambda * (l + 1) as f64, v);
                }
            } else {
                notes.push(format!("rank {} exceeds N = {nn}; the two-collision remainder vanishes", l + 2));
            }
        }
    }
    if printed && (lambda * nn as f64 - 1.0).abs() > 1e-12 {
        notes.push("printed weighting assumes lambda N = 1".into());
    }
    let total: C64 = terms.iter().map(|x| x.value).sum();
    let truncated: C64 = terms.iter().filter(|x| x.principal).map(|x| x.value).sum();
    let (kappa_t, tail_bound) = match &opts.bound {
        Some(p) => {
            let c = closed_form_bounds(&BoundParameters { t, ell: l, n, ..*p })?;
            if c.envelope.is_none() {
                notes.push(format!("kappa_t = {:.4} >= 1: geometric tail bound unavailable", c.kappa_t));
            }
            (Some(c.kappa_t), c.envelope)
        }
        None => (None, None),
    };
    Ok(DuhamelReport {
        t,
        ell: l,
        n,
        weighting: opts.weighting,
        lhs,
        terms,
        total,
        truncated,
        identity_gap: (lhs - total).norm(),
        truncation_gap: (lhs - truncated).norm(),
        kappa_t,
        tail_bound,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbody::nbody_marginal;
    use crate::states::families::{gaussian_packet, hermite_functions};
    use crate::states::{lowdin, OrbitalSet};
    use crate::transforms::MuSlices;

    fn pair(pot: Potential, points: usize, extent: f64) -> NBodyFamily {
        let grid = Grid::line(points, extent).unwrap();
        let eps = 0.5;
        let raw = vec![gaussian_packet(&grid, -0.8, 1.0, 0.5, eps), gaussian_packet(&grid, 0.9, 0.9, -0.3, eps)];
        let set = OrbitalSet::slater(grid, lowdin(&grid, &raw)).unwrap();
        let psi = NBodyWavefunction::slater(&set, eps).unwrap();
        NBodyFamily::new(psi, pot, 5e-4).unwrap()
    }

    fn observable() -> FourierObservable {
        let base = BaseObservable::Gaussian { delta1: 1.0, delta2: 1.0, x: 0.2, v: 0.3 };
        FourierObservable::new(base, 1, 0.5, 0.5).unwrap()
    }

    #[test]
    fn slices_match_the_marginal_transform() {
        let grid = Grid::line(32, 6.0).unwrap();
        let set = OrbitalSet::slater(grid, hermite_functions(&grid, 2, 1.0, 0.2)).unwrap();
        let psi = NBodyWavefunction::slater(&set, 0.5).unwrap();
        let fam = NBodyFamily::new(psi.clone(), Potential::zero(), 1e-3).unwrap();
        let s = fam.slice(0.0, &[0.7]).unwrap();
        let g1 = nbody_marginal(&psi, 1).unwrap();
        let direct = MuSlices::from_density(&g1, 0.5, &[0.7]).unwrap();
        let worst = (0..32).map(|m| (s[IxDyn(&[m])] - direct.values[[0, m]]).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
        let full = fam.slice(0.0, &[0.0, 0.0]).unwrap();
        assert!((full[IxDyn(&[0, 0])] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(matches!(fam.slice(0.0, &[0.0; 3]), Err(Error::Arity(_))));
    }

    #[test]
    fn free_dynamics_is_reproduced_exactly() {
        let fam = pair(Potential::zero(), 32, 6.0);
        let r = duhamel_pair(&observable(), &fam, 1, 0.3, &DuhamelOptions::default()).unwrap();
        assert_eq!(r.terms.len(), 1);
        assert!(r.identity_gap < 1e-8, "{}", r.identity_gap);
        let o2 = FourierObservable::gaussian(2, 1.0, 1.0, 0.5, 0.5).unwrap();
        let opts = DuhamelOptions { eta_step: 0.5, eta_extent: 10.0, ..Default::default() };
        let r2 = duhamel_pair(&o2, &fam, 0, 0.2, &opts).unwrap();
        assert!(r2.identity_gap < 1e-8, "{}", r2.identity_gap);
    }

    #[test]
    fn first_order_identity_holds() {
        let fam = pair(Potential::gaussian(2.0, 1.0), 32, 6.0);
        let r = duhamel_pair(&observable(), &fam, 1, 0.05, &DuhamelOptions::default()).unwrap();
        let b1 = r.terms.iter().find(|x| x.name == "B1").unwrap();
        assert!(b1.value.norm() > 1e-3, "{}", b1.value);
        assert!(r.identity_gap < 1e-4, "{}", r.identity_gap);
        let printed = duhamel_pair(&observable(), &fam, 1, 0.05, &DuhamelOptions { weighting: Weighting::Printed, ..Default::default() }).unwrap();
        assert!((printed.total - r.total).norm() < 1e-12);
    }

    #[test]
    fn second_truncation_is_closer() {
        let fam = pair(Potential::gaussian(2.0, 1.0), 32, 6.0);
        let o = observable();
        let opts = DuhamelOptions::default();
        let one = duhamel_pair(&o, &fam, 1, 0.05, &opts).unwrap();
        let two = duhamel_pair(&o, &fam, 2, 0.05, &opts).unwrap();
        assert!(two.truncation_gap < 0.5 * one.truncation_gap, "{} {}", one.truncation_gap, two.truncation_gap);
        assert!(two.identity_gap < 1e-4, "{}", two.identity_gap);
    }

    #[test]
    fn tail_bound_needs_small_kappa_t() {
        let fam = pair(Potential::zero(), 32, 6.0);
        let p = BoundParameters { kappa1: 1.0, kappa2: 1.0, c0: 13.0, t: 0.0, ell: 1, n: 1, particles: 2 };
        let opts = DuhamelOptions { bound: Some(p), eta_step: 0.5, ..Default::default() };
        let ok = duhamel_pair(&observable(), &fam, 1, 0.01, &opts).unwrap();
        assert!(require_tail_bound(&ok).is_ok());
        let late = duhamel_pair(&observable(), &fam, 1, 0.5, &opts).unwrap();
        assert!(matches!(require_tail_bound(&late), Err(Error::BoundInapplicable(_))));
        assert!(late.lhs.norm() > 0.0);
    }
}
