//! One-dimensional quadrature helpers.

use gauss_quad::{GaussHermite, GaussLegendre};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration by interval bisection.
pub fn adaptive_gk(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    let mut stack = vec![(a, b, 0u32)];
    let (whole, _) = kronrod15(&f, a, b);
    let mut total = 0.0;
    let mut comp = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = kronrod15(&f, lo, hi);
        let share = (hi - lo) / (b - a);
        let tol = (rel_tol * whole.abs()).max(abs_tol) * share;
        if err <= tol || depth >= 48 {
            // Kahan summation keeps many small panels accurate
            let y = val - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// Gauss-Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(order.max(2)).expect("valid Gauss-Legendre order");
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.into_iter().map(|(x, w)| (c + h * x, h * w)).collect()
}

/// Gauss-Hermite nodes and weights for `int e^{-x^2} f(x) dx`.
pub fn gauss_hermite(order: usize) -> Vec<(f64, f64)> {
    let rule = GaussHermite::new(order.max(2)).expect("valid Gauss-Hermite order");
    rule.into_iter().collect()
}

/// Composite Gauss-Legendre rule with `panels` equal panels on `[a, b]`.
pub fn composite_legendre(order: usize, panels: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let w = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|p| gauss_legendre(order, a + p as f64 * w, a + (p + 1) as f64 * w))
        .collect()
}

/// Composite Simpson weights for `m + 1` equispaced samples (`m` even) with step `h`.
pub fn simpson_weights(m: usize, h: f64) -> Vec<f64> {
    assert!(m >= 2 && m % 2 == 0, "Simpson needs an even number of panels");
    (0..=m)
        .map(|i| {
            let c = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gk_polynomial_exact() {
        let v = adaptive_gk(|x| x.powi(6) - 2.0 * x, 0.0, 2.0, 1e-12, 0.0);
        assert!((v - (128.0 / 7.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn gk_gaussian_moment() {
        let v = adaptive_gk(|x| x.powi(4) * (-x * x).exp(), 0.0, 20.0, 1e-12, 0.0);
        assert!((v - 3.0 * PI.sqrt() / 8.0).abs() < 1e-12);
    }

    #[test]
    fn gk_peaked_integrand() {
        let v = adaptive_gk(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10, 0.0);
        let want = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - want).abs() / want < 1e-9);
    }

    #[test]
    fn legendre_and_hermite() {
        let v: f64 = gauss_legendre(8, 0.0, PI).iter().map(|(x, w)| w * x.sin()).sum();
        assert!((v - 2.0).abs() < 1e-10);
        let h: f64 = gauss_hermite(20).iter().map(|(x, w)| w * x * x).sum();
        assert!((h - PI.sqrt() / 2.0).abs() < 1e-12);
        let s: f64 = simpson_weights(10, 0.1).iter().enumerate().map(|(i, w)| w * (0.1 * i as f64).powi(3)).sum();
        assert!((s - 0.25).abs() < 1e-14);
    }
}
