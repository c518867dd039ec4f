use std::fmt;
use std::sync::Arc;

use crate::{Error, Result, C64};

/// `(2/eps) sin(eps z / 2)`, the semiclassical difference quotient.
pub fn sine_kernel(epsilon: f64, z: f64) -> f64 {
    (2.0 / epsilon) * (0.5 * epsilon * z).sin()
}

pub type BaseFn = Arc<dyn Fn(&[f64], &[f64]) -> C64 + Send + Sync>;

/// Smooth rank-`l` observable that the collision operators act on.
#[derive(Clone)]
pub enum BaseObservable {
    /// `prod_j exp(-d1^2 xi_j^2/4 - d2^2 eta_j^2/4 + i(x xi_j + v eta_j))`.
    Gaussian { delta1: f64, delta2: f64, x: f64, v: f64 },
    Custom(BaseFn),
}

impl BaseObservable {
    pub fn value(&self, xi: &[f64], eta: &[f64]) -> C64 {
        match self {
            BaseObservable::Gaussian { delta1, delta2, x, v } => {
                let mut re = 0.0;
                let mut im = 0.0;
                for (a, b) in xi.iter().zip(eta) {
                    re -= 0.25 * (delta1 * delta1 * a * a + delta2 * delta2 * b * b);
                    im += x * a + v * b;
                }
                C64::from_polar(re.exp(), im)
            }
            BaseObservable::Custom(f) => f(xi, eta),
        }
    }
}

impl fmt::Debug for BaseObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseObservable::Gaussian { delta1, delta2, x, v } => {
                write!(f, "Gaussian {{ delta1: {delta1}, delta2: {delta2}, x: {x}, v: {v} }}")
            }
            BaseObservable::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Operators in the order they were applied to the base observable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Collision {
    /// `S_t O (xi, eta) = O(xi, eta - t xi)`.
    Free(f64),
    /// Creation of a new slot `q` carrying `U^(q) delta(eta_new)`.
    B,
    /// Two-body term among the existing slots.
    A,
}

/// Fourier-side observable `O(xi_1..xi_r; eta_1..eta_r)` built from a smooth base
/// by free flows and collision operators.
///
/// Every `B` creates a pinned slot whose `eta` is tied to its `xi` through
/// `eta_p = c_p xi_p`; the factor `U^(xi_p)` of that slot is left to the
/// integration rule. Values are the densities with respect to the free
/// variables, each pinned slot being resolved on the hyperplane of the branch
/// that produced it.
#[derive(Clone, Debug)]
pub struct FourierObservable {
    pub base: BaseObservable,
    pub base_rank: usize,
    pub epsilon: f64,
    /// Two-body weight carried by `A`.
    pub coupling: f64,
    ops: Vec<Collision>,
}

impl FourierObservable {
    pub fn new(base: BaseObservable, base_rank: usize, epsilon: f64, coupling: f64) -> Result<Self> {
        if base_rank == 0 {
            return Err(Error::Arity("observables have rank at least one".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Precondition(format!("epsilon = {epsilon} must be positive")));
        }
        Ok(FourierObservable { base, base_rank, epsilon, coupling, ops: Vec::new() })
    }

    pub fn gaussian(rank: usize, delta1: f64, delta2: f64, epsilon: f64, coupling: f64) -> Result<Self> {
        Self::new(BaseObservable::Gaussian { delta1, delta2, x: 0.0, v: 0.0 }, rank, epsilon, coupling)
    }

    pub fn ops(&self) -> &[Collision] {
        &self.ops
    }

    pub fn rank(&self) -> usize {
        self.base_rank + self.ops.iter().filter(|o| **o == Collision::B).count()
    }

    /// `(slot, c)` for every pinned slot, meaning `eta_slot = c xi_slot`.
    pub fn pinned_etas(&self) -> Vec<(usize, f64)> {
        pins_after(self.base_rank, &self.ops)
    }

    fn with(&self, op: Collision) -> Self {
        let mut out = self.clone();
        match (out.ops.last_mut(), op) {
            (Some(Collision::Free(a)), Collision::Free(b)) => {
                *a += b;
                if *a == 0.0 {
                    out.ops.pop();
                }
            }
            (_, Collision::Free(b)) if b == 0.0 => {}
            _ => out.ops.push(op),
        }
        out
    }

    pub fn free_flow(&self, t: f64) -> Self {
        self.with(Collision::Free(t))
    }

    /// `S_s B S_{-s} O`; the new slot is pinned at coefficient `s`.
    pub fn apply_b(&self, s: f64) -> Self {
        self.free_flow(-s).with(Collision::B).free_flow(s)
    }

    /// `S_s A S_{-s} O`.
    pub fn apply_a(&self, s: f64) -> Self {
        self.free_flow(-s).with(Collision::A).free_flow(s)
    }

    /// Value at `(xi_1..xi_r; eta_1..eta_l)`: `xi` covers every slot, `eta` only the
    /// base slots. `rule` lists `(q, w)` with `sum w f(q) ~ int U^(q) f(q) dq` for `A`.
    pub fn value(&self, xi: &[f64], eta: &[f64], rule: &[(f64, f64)]) -> C64 {
        assert_eq!(xi.len(), self.rank(), "xi has one entry per slot");
        assert_eq!(eta.len(), self.base_rank, "eta has one entry per base slot");
        self.eval(self.ops.len(), xi, eta, rule)
    }

    /// Full `eta` vector (base entries followed by pinned ones) at level `k`.
    fn full_eta(&self, k: usize, xi: &[f64], eta: &[f64]) -> Vec<f64> {
        let mut full = eta.to_vec();
        for (slot, c) in pins_after(self.base_rank, &self.ops[..k]) {
            full.push(c * xi[slot]);
        }
        full
    }

    fn eval(&self, k: usize, xi: &[f64], eta: &[f64], rule: &[(f64, f64)]) -> C64 {
        if k == 0 {
            return self.base.value(xi, eta);
        }
        let eps = self.epsilon;
        match self.ops[k - 1] {
            Collision::Free(t) => {
                let shifted: Vec<f64> = eta.iter().zip(xi).map(|(e, x)| e - t * x).collect();
                self.eval(k - 1, xi, &shifted, rule)
            }
            Collision::B => {
                let m = xi.len() - 1;
                let q = xi[m];
                let full = self.full_eta(k, xi, eta);
                let mut inner = xi[..m].to_vec();
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..m {
                    inner[j] += q;
                    acc -= sine_kernel(eps, q * full[j]) * self.eval(k - 1, &inner, eta, rule);
                    inner[j] -= q;
                }
                acc
            }
            Collision::A => {
                let r = xi.len();
                let full = self.full_eta(k, xi, eta);
                let mut inner = xi.to_vec();
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..r {
                    for l in j + 1..r {
                        for &(q, w) in rule {
                            inner[j] += q;
                            inner[l] -= q;
                            acc -= w * sine_kernel(eps, q * (full[j] - full[l])) * self.eval(k - 1, &inner, eta, rule);
                            inner[j] -= q;
                            inner[l] += q;
                        }
                    }
                }
                acc * self.coupling
            }
        }
    }
}

fn pins_after(base_rank: usize, ops: &[Collision]) -> Vec<(usize, f64)> {
    let mut pins: Vec<(usize, f64)> = Vec::new();
    for op in ops {
        match op {
            Collision::Free(t) => pins.iter_mut().for_each(|p| p.1 += t),
            Collision::B => pins.push((base_rank + pins.len(), 0.0)),
            Collision::A => {}
        }
    }
    pins
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn observable(rank: usize) -> FourierObservable {
        let base = BaseObservable::Gaussian { delta1: 1.0, delta2: 0.8, x: 0.3, v: -0.4 };
        FourierObservable::new(base, rank, 0.7, 0.25).unwrap()
    }

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() <= 1e-12 * (1.0 + b.norm())
    }

    #[test]
    fn free_flow_substitutes() {
        let o = observable(1);
        assert_eq!(o.free_flow(0.0).ops().len(), 0);
        let s = o.free_flow(1.0);
        for &(x, e) in &[(0.3, -0.2), (1.5, 0.7), (-2.0, 1.1)] {
            assert!(close(s.value(&[x], &[e], &[]), o.base.value(&[x], &[e - x])));
        }
    }

    #[test]
    fn free_flow_group_law() {
        let o = observable(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (t, s) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let xi = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let eta = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let a = o.free_flow(s).free_flow(t).value(&xi, &eta, &[]);
            let b = o.free_flow(s + t).value(&xi, &eta, &[]);
            assert!(close(a, b));
            let back = o.free_flow(t).free_flow(-t);
            assert!(back.ops().is_empty());
        }
    }

    #[test]
    fn conjugated_b_matches_two_mode_expansion() {
        let o = observable(1);
        let (u0, k0, s) = (0.9, 1.3, 0.4);
        let rule = [(k0, u0 / 2.0), (-k0, u0 / 2.0)];
        let b = o.apply_b(s);
        assert_eq!(b.rank(), 2);
        assert_eq!(b.pinned_etas(), vec![(1, s)]);
        for &(x, e) in &[(0.2, 0.5), (-1.1, 0.3), (2.0, -1.7)] {
            let total: C64 = rule.iter().map(|&(q, w)| w * b.value(&[x, q], &[e], &rule)).sum();
            let hand: C64 = [k0, -k0]
                .iter()
                .map(|&q| -(u0 / 2.0) * sine_kernel(0.7, (e - s * x) * q) * o.base.value(&[x + q], &[e + s * q]))
                .sum();
            assert!(close(total, hand));
        }
    }

    #[test]
    fn a_vanishes_for_one_slot_and_matches_two_mode_expansion() {
        let rule = [(1.0, 0.5), (-1.0, 0.5)];
        let one = observable(1).apply_a(0.3);
        assert_eq!(one.value(&[0.4], &[0.2], &rule), C64::new(0.0, 0.0));
        let base = BaseObservable::Gaussian { delta1: 1.0, delta2: 1.0, x: 0.0, v: 0.5 };
        let o = FourierObservable::new(base, 2, 1.0, 0.5).unwrap();
        let s = 0.25;
        let a = o.apply_a(s);
        let (xi, eta) = ([0.3, -0.8], [1.2, 0.4]);
        let hand: C64 = [1.0f64, -1.0]
            .iter()
            .map(|&q| {
                let z = q * ((eta[0] - s * xi[0]) - (eta[1] - s * xi[1]));
                -0.5 * 0.5 * sine_kernel(1.0, z) * o.base.value(&[xi[0] + q, xi[1] - q], &[eta[0] + s * q, eta[1] - s * q])
            })
            .sum();
        assert!(close(a.value(&xi, &eta, &rule), hand));
    }

    #[test]
    fn zero_spectrum_gives_zero() {
        let o = observable(2).apply_a(0.1);
        assert_eq!(o.value(&[0.1, 0.2], &[0.3, 0.4], &[]), C64::new(0.0, 0.0));
    }

    #[test]
    fn sine_kernel_small_epsilon_limit() {
        let eps = 1e-3;
        for &z in &[0.1, 1.0, 5.0, 20.0] {
            let rel = ((sine_kernel(eps, z) - z) / z).abs();
            assert!(rel < eps * eps * z * z / 24.0, "{z} {rel}");
        }
    }
}
