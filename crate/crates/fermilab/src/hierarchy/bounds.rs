use rayon::prelude::*;
use serde::Serialize;

use super::norms::observable_c0;
use super::observable::{sine_kernel, BaseObservable};
use crate::spectral::{Potential, PotentialKind};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundParameters {
    pub kappa1: f64,
    pub kappa2: f64,
    pub c0: f64,
    pub t: f64,
    pub ell: usize,
    pub n: usize,
    pub particles: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClosedFormBounds {
    pub kappa_t: f64,
    pub k_bound: f64,
    pub m_bound: f64,
    pub horizon: f64,
    /// Absent when `kappa_t >= 1`.
    pub envelope: Option<f64>,
}

impl ClosedFormBounds {
    pub fn envelope(&self) -> Result<f64> {
        self.envelope
            .ok_or_else(|| Error::BoundInapplicable(format!("kappa_t = {} is not below one", self.kappa_t)))
    }
}

/// `kappa_t = 9 kappa1 t (1 + 2t)(kappa1 + kappa2)`.
pub fn kappa_t(kappa1: f64, kappa2: f64, t: f64) -> f64 {
    9.0 * kappa1 * t * (1.0 + 2.0 * t) * (kappa1 + kappa2)
}

/// `T = (sqrt(1 + 1/(7 kappa1^2)) - 1) / 4`.
pub fn time_horizon(kappa1: f64) -> f64 {
    0.25 * ((1.0 + 1.0 / (7.0 * kappa1 * kappa1)).sqrt() - 1.0)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn closed_form_bounds(p: &BoundParameters) -> Result<ClosedFormBounds> {
    if !(p.kappa1 > 0.0 && p.kappa2 > 0.0 && p.c0 > 0.0) || p.t < 0.0 || p.particles == 0 {
        return Err(Error::Precondition(format!("invalid bound parameters {p:?}")));
    }
    let (l, n) = (p.ell, p.n);
    let kt = kappa_t(p.kappa1, p.kappa2, p.t);
    let k_bound = factorial(n)
        * binomial(n + l, l)
        * p.c0.powi(l as i32)
        * (9.0 * p.kappa1 * (p.kappa1 + p.kappa2) * (1.0 + 2.0 * p.t)).powi(n as i32)
        / p.kappa1;
    let lambda = 1.0 / p.particles as f64;
    let m_bound = lambda * (l + n).saturating_sub(2) as f64 * k_bound;
    let envelope = (kt < 1.0).then(|| {
        let lf = l as f64;
        (2.0 / p.kappa1) * (2.0 * p.c0).powi(l as i32) * (2.0 * kt).powi(n as i32)
            + (p.c0.powi(l as i32) / p.particles as f64)
                * (1.0 + (3.0 * kt / p.kappa1) * (lf + 2.0).powi(2) * (1.0 / (1.0 - kt)).powi(l as i32 + 3))
    });
    Ok(ClosedFormBounds { kappa_t: kt, k_bound, m_bound, horizon: time_horizon(p.kappa1), envelope })
}

/// Largest `kappa2` on a grid of step `1e-4` with `2 kappa_t <= 1/e`, if any.
pub fn kappa2_scan(kappa1: f64, t: f64) -> Option<f64> {
    let target = (-1.0f64).exp();
    (1..=100_000).rev().map(|i| i as f64 * 1e-4).find(|&k2| 2.0 * kappa_t(kappa1, k2, t) <= target)
}

/// Trapezoid lattices for the free variables of the `K` and `M` integrals.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundGrid {
    pub xi_step: f64,
    pub xi_extent: f64,
    pub eta_step: f64,
    pub eta_extent: f64,
    /// Collision momenta are sampled on `[-q_extent, q_extent]` with `xi_step`.
    pub q_extent: f64,
}

impl Default for BoundGrid {
    fn default() -> Self {
        BoundGrid { xi_step: 0.75, xi_extent: 7.5, eta_step: 0.75, eta_extent: 8.25, q_extent: 6.0 }
    }
}

fn lattice(step: f64, extent: f64) -> Vec<f64> {
    let m = (extent / step).round() as i64;
    (-m..=m).map(|i| i as f64 * step).collect()
}

/// Signed weights `(q, w)` with `sum w f(q) ~ int U^(q) f(q) dq`.
pub fn continuous_rule(potential: &Potential, grid: &BoundGrid) -> Vec<(f64, f64)> {
    match potential.kind {
        PotentialKind::Cosine { .. } => potential.spectral_rule(2).into_iter().filter(|(_, w)| *w != 0.0).collect(),
        PotentialKind::Gaussian { .. } if potential.is_zero() => Vec::new(),
        PotentialKind::Gaussian { .. } => lattice(grid.xi_step, grid.q_extent)
            .into_iter()
            .map(|q| (q, grid.xi_step * potential.fourier(&[q])))
            .collect(),
    }
}

#[derive(Clone, Debug)]
pub struct BoundConfig {
    pub ell: usize,
    pub n: usize,
    pub potential: Potential,
    pub delta1: f64,
    pub delta2: f64,
    pub kappa2: f64,
    pub t: f64,
    pub epsilon: f64,
    pub particles: usize,
    pub nodes: usize,
    pub grid: BoundGrid,
}

impl BoundConfig {
    pub fn new(ell: usize, n: usize, potential: Potential) -> Self {
        BoundConfig {
            ell,
            n,
            potential,
            delta1: 1.0,
            delta2: 1.0,
            kappa2: 1.0,
            t: 0.1,
            epsilon: 0.5,
            particles: 8,
            nodes: 10,
            grid: BoundGrid::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundSample {
    pub ell: usize,
    pub n: usize,
    pub s: Vec<f64>,
    pub k_numeric: f64,
    pub k_bound: f64,
    pub m_numeric: f64,
    pub m_bound: f64,
    /// `lambda (l + n - 2)` times the first-moment majorant of the same chain.
    pub m_majorant: f64,
}

impl BoundSample {
    pub fn holds(&self) -> bool {
        self.k_numeric <= self.k_bound && self.m_numeric <= self.m_bound && self.m_numeric <= self.m_majorant * (1.0 + 1e-12)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub potential: String,
    pub kappa1: f64,
    pub kappa2: f64,
    pub c0: f64,
    pub t: f64,
    pub samples: Vec<BoundSample>,
}

impl BoundReport {
    pub fn all_hold(&self) -> bool {
        self.samples.iter().all(BoundSample::holds)
    }

    pub fn worst_k_ratio(&self) -> f64 {
        self.samples.iter().map(|s| s.k_numeric / s.k_bound).fold(0.0, f64::max)
    }

    pub fn worst_m_ratio(&self) -> f64 {
        self.samples.iter().filter(|s| s.m_bound > 0.0).map(|s| s.m_numeric / s.m_bound).fold(0.0, f64::max)
    }
}

/// Deterministic nodes of `t >= s_1 >= .. >= s_n >= 0`.
pub fn simplex_nodes(n: usize, t: f64, count: usize) -> Vec<Vec<f64>> {
    let frac = |x: f64| x - x.floor();
    (0..count)
        .map(|i| match n {
            1 => vec![t * (i as f64 + 0.5) / count as f64],
            _ => {
                let mut u: Vec<f64> =
                    (0..n).map(|j| frac(0.5 + (i as f64 + 1.0) * [0.618_033_988_75, 0.754_877_666_25, 0.569_840_290_99][j % 3])).collect();
                u.sort_by(|a, b| b.partial_cmp(a).unwrap());
                u.into_iter().map(|x| t * x).collect()
            }
        })
        .collect()
}

/// One slot of the product observable at a lattice point `(xi, eta)`.
/// Rule pairs are stored at `b * m + a`, with `b` the later collision.
struct Slot {
    g0: C64,
    g1: Vec<C64>,
    g2: Vec<C64>,
    g21: Vec<C64>,
    sn1: Vec<f64>,
    sn2: Vec<f64>,
    sn21: Vec<f64>,
    smr: Vec<f64>,
    sc1: Vec<(f64, f64)>,
    sc2: Vec<(f64, f64)>,
    lever1: f64,
    lever2: f64,
}

struct Chain<'a> {
    base: &'a BaseObservable,
    ell: usize,
    eps: f64,
    t: f64,
    rule: &'a [(f64, f64)],
    mirror: Vec<usize>,
    xis: Vec<f64>,
    etas: Vec<f64>,
    cell: f64,
}

impl Chain<'_> {
    /// One-slot factor of `S_t O`.
    fn g(&self, a: f64, b: f64) -> C64 {
        self.base.value(&[a], &[b - self.t * a])
    }

    fn slots(&self, s1: f64, s2: f64) -> Vec<Slot> {
        let eps = self.eps;
        let m = self.rule.len();
        let qs: Vec<f64> = self.rule.iter().map(|r| r.0).collect();
        let mut out = Vec::with_capacity(self.xis.len() * self.etas.len());
        for &eta in &self.etas {
            for &xi in &self.xis {
                let u1 = eta - s1 * xi;
                let u2 = eta - s2 * xi;
                let mut g21 = Vec::with_capacity(m * m);
                let mut sn21 = Vec::with_capacity(m * m);
                let mut smr = Vec::with_capacity(m * m);
                for &qb in &qs {
                    for &qa in &qs {
                        g21.push(self.g(xi + qb + qa, eta + s2 * qb + s1 * qa));
                        sn21.push(sine_kernel(eps, qa * (eta + s2 * qb - s1 * (xi + qb))));
                        smr.push(sine_kernel(eps, qb * (u2 - (s1 - s2) * qa)));
                    }
                }
                out.push(Slot {
                    g0: self.g(xi, eta),
                    g1: qs.iter().map(|&q| self.g(xi + q, eta + s1 * q)).collect(),
                    g2: qs.iter().map(|&q| self.g(xi + q, eta + s2 * q)).collect(),
                    g21,
                    sn1: qs.iter().map(|&q| sine_kernel(eps, q * u1)).collect(),
                    sn2: qs.iter().map(|&q| sine_kernel(eps, q * u2)).collect(),
                    sn21,
                    smr,
                    sc1: qs.iter().map(|&q| (0.5 * eps * q * u1).sin_cos()).collect(),
                    sc2: qs.iter().map(|&q| (0.5 * eps * q * u2).sin_cos()).collect(),
                    lever1: u1.abs(),
                    lever2: u2.abs(),
                });
            }
        }
        out
    }

    /// Sum of `g` over all slot tuples of the base lattice, weighted by the trapezoid cell.
    fn integrate(&self, slots: &[Slot], g: impl Fn(&[&Slot]) -> f64 + Sync) -> f64 {
        let p = slots.len();
        let sum: f64 = match self.ell {
            1 => slots.par_iter().map(|s| g(&[s])).sum(),
            _ => (0..p * p).into_par_iter().map(|f| g(&[&slots[f % p], &slots[f / p]])).sum(),
        };
        sum * self.cell
    }

    /// Smooth part of `S_s B S_{-s} S_t O` at rule entry `a` without `U^(q)` and sign.
    fn f1(s: &[&Slot], a: usize) -> C64 {
        match s {
            [x] => x.sn1[a] * x.g1[a],
            [x, y] => x.sn1[a] * x.g1[a] * y.g0 + y.sn1[a] * y.g1[a] * x.g0,
            _ => unreachable!(),
        }
    }

    /// `f1` at entry `a` after slot `i` is shifted by entry `b` at the earlier time.
    fn f1_shifted(s: &[&Slot], i: usize, b: usize, a: usize, m: usize) -> C64 {
        let x = s[i];
        let own = x.sn21[b * m + a] * x.g21[b * m + a];
        match s.len() {
            1 => own,
            _ => {
                let y = s[1 - i];
                own * y.g0 + y.sn1[a] * y.g1[a] * x.g2[b]
            }
        }
    }

    /// `sine_kernel(eps, p (u - w))` from half-angle tables of `p u` and `p w`.
    fn pair_sine(&self, x: (f64, f64), y: (f64, f64)) -> f64 {
        (2.0 / self.eps) * (x.0 * y.1 - x.1 * y.0)
    }

    fn k1(&self, s1: f64) -> f64 {
        let slots = self.slots(s1, 0.0);
        self.integrate(&slots, |s| self.rule.iter().enumerate().map(|(a, &(_, w))| w.abs() * Self::f1(s, a).norm()).sum())
    }

    fn k2(&self, s1: f64, s2: f64) -> f64 {
        let m = self.rule.len();
        let spread: Vec<f64> = self
            .rule
            .iter()
            .map(|&(big, _)| self.rule.iter().map(|&(q2, w2)| w2.abs() * sine_kernel(self.eps, q2 * (s1 - s2) * big).abs()).sum())
            .collect();
        let slots = self.slots(s1, s2);
        self.integrate(&slots, |s| {
            let mut acc = 0.0;
            for (a, &(_, w1)) in self.rule.iter().enumerate() {
                for (b, &(_, w2)) in self.rule.iter().enumerate() {
                    let mut inner = C64::new(0.0, 0.0);
                    for (i, x) in s.iter().enumerate() {
                        inner += x.sn2[b] * Self::f1_shifted(s, i, b, a, m);
                    }
                    acc += w1.abs() * w2.abs() * inner.norm();
                }
                acc += w1.abs() * Self::f1(s, a).norm() * spread[a];
            }
            acc
        })
    }

    fn m1(&self, s1: f64) -> f64 {
        let slots = self.slots(s1, 0.0);
        self.integrate(&slots, |s| match s {
            [x, y] => {
                let mut acc = C64::new(0.0, 0.0);
                for (p, &(_, w)) in self.rule.iter().enumerate() {
                    acc += w * self.pair_sine(x.sc1[p], y.sc1[p]) * x.g1[p] * y.g1[self.mirror[p]];
                }
                acc.norm()
            }
            _ => 0.0,
        })
    }

    fn m2(&self, s1: f64, s2: f64) -> f64 {
        let m = self.rule.len();
        let slots = self.slots(s1, s2);
        self.integrate(&slots, |s| {
            let mut acc = 0.0;
            if let [x, y] = s {
                for (a, &(_, w1)) in self.rule.iter().enumerate() {
                    let mut inner = C64::new(0.0, 0.0);
                    for (p, &(_, wp)) in self.rule.iter().enumerate() {
                        let r = self.mirror[p];
                        let f = x.sn21[p * m + a] * x.g21[p * m + a] * y.g2[r] + y.sn21[r * m + a] * y.g21[r * m + a] * x.g2[p];
                        inner += wp * self.pair_sine(x.sc2[p], y.sc2[p]) * f;
                    }
                    acc += w1.abs() * inner.norm();
                }
            }
            for (p, &(_, wp)) in self.rule.iter().enumerate() {
                for (r, &(_, wr)) in self.rule.iter().enumerate() {
                    let mut inner = C64::new(0.0, 0.0);
                    for (j, x) in s.iter().enumerate() {
                        inner += x.smr[p * m + r] * Self::f1_shifted(s, j, p, r, m);
                    }
                    acc += wp.abs() * wr.abs() * inner.norm();
                }
            }
            acc
        })
    }

    fn first_moment(&self) -> f64 {
        self.rule.iter().map(|(q, w)| w.abs() * q.abs()).sum()
    }

    fn j1(&self, s1: f64) -> f64 {
        let slots = self.slots(s1, 0.0);
        self.first_moment()
            * self.integrate(&slots, |s| {
                let lever: f64 = s.iter().map(|x| x.lever1).sum();
                lever * s.iter().map(|x| x.g0).product::<C64>().norm()
            })
    }

    fn j2(&self, s1: f64, s2: f64) -> f64 {
        let slots = self.slots(s1, s2);
        self.first_moment()
            * self.integrate(&slots, |s| {
                let lever: f64 = s.iter().map(|x| x.lever2).sum();
                self.rule
                    .iter()
                    .enumerate()
                    .map(|(a, &(q1, w1))| w1.abs() * Self::f1(s, a).norm() * (lever + ((s1 - s2) * q1).abs()))
                    .sum::<f64>()
            })
    }
}

/// Index of `-q` for every rule entry `q`.
fn mirror_indices(rule: &[(f64, f64)]) -> Result<Vec<usize>> {
    rule.iter()
        .map(|&(q, _)| {
            rule.iter()
                .position(|&(p, _)| (p + q).abs() <= 1e-12 * (1.0 + q.abs()))
                .ok_or_else(|| Error::Precondition(format!("collision rule has no entry at {}", -q)))
        })
        .collect()
}

/// Quadratures of `K_{l,n}` and `M_{l,n}` with absolute values inside, at
/// `nodes` points of the time simplex, against the closed-form bounds.
pub fn bound_verification(cfg: &BoundConfig) -> Result<BoundReport> {
    if cfg.ell == 0 || cfg.ell > 2 || cfg.n == 0 || cfg.n > 2 {
        return Err(Error::Arity(format!("bound verification covers 1 <= l, n <= 2, got l = {}, n = {}", cfg.ell, cfg.n)));
    }
    if cfg.potential.dim != 1 {
        return Err(Error::Arity("bound verification is one-dimensional".into()));
    }
    let base = BaseObservable::Gaussian { delta1: cfg.delta1, delta2: cfg.delta2, x: 0.0, v: 0.0 };
    let g = cfg.grid;
    let xi_max = (g.xi_extent / g.xi_step).round() * g.xi_step;
    let eta_max = (g.eta_extent / g.eta_step).round() * g.eta_step;
    let edge = (-0.25 * (cfg.delta1 * xi_max).powi(2)).exp().max((-0.25 * (cfg.delta2 * (eta_max - cfg.t * xi_max)).powi(2)).exp());
    if edge > 1e-5 {
        return Err(Error::Resolution(format!("observable is {edge:.2e} at the edge of the integration window")));
    }
    let rule = continuous_rule(&cfg.potential, &g);
    let chain = Chain {
        base: &base,
        ell: cfg.ell,
        eps: cfg.epsilon,
        t: cfg.t,
        rule: &rule,
        mirror: mirror_indices(&rule)?,
        xis: lattice(g.xi_step, g.xi_extent),
        etas: lattice(g.eta_step, g.eta_extent),
        cell: (g.xi_step * g.eta_step).powi(cfg.ell as i32),
    };
    let kappa1 = if cfg.potential.is_zero() { 1.0 } else { cfg.potential.kappa1 };
    let c0 = observable_c0(cfg.delta1, cfg.delta2, cfg.kappa2);
    let params = BoundParameters { kappa1, kappa2: cfg.kappa2, c0, t: cfg.t, ell: cfg.ell, n: cfg.n, particles: cfg.particles };
    let closed = closed_form_bounds(&params)?;
    let lambda = 1.0 / cfg.particles as f64;
    let lever = (cfg.ell + cfg.n).saturating_sub(2) as f64;
    let samples = simplex_nodes(cfg.n, cfg.t, cfg.nodes)
        .into_iter()
        .map(|s| {
            let (k, m, j) = match cfg.n {
                1 => (chain.k1(s[0]), chain.m1(s[0]), chain.j1(s[0])),
                _ => (chain.k2(s[0], s[1]), chain.m2(s[0], s[1]), chain.j2(s[0], s[1])),
            };
            BoundSample {
                ell: cfg.ell,
                n: cfg.n,
                s,
                k_numeric: k,
                k_bound: closed.k_bound,
                m_numeric: lambda * m,
                m_bound: closed.m_bound,
                m_majorant: lambda * lever * j,
            }
        })
        .collect();
    Ok(BoundReport { potential: format!("{:?}", cfg.potential.kind), kappa1, kappa2: cfg.kappa2, c0, t: cfg.t, samples })
}
