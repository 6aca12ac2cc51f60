//! Independent numerical references for the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use statrs::function::erf::erf;

/// Composite Simpson rule with `panels` (rounded up to even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Adaptive Simpson to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * (1.0 + erf((x - mean) / (sd * 2f64.sqrt())))
}

/// `(K_h * N(mean, sd^2))(y)` for the one-dimensional Epanechnikov kernel, in
/// closed form from the truncated normal moments on `[y - h, y + h]`.
pub fn epan_smoothed_normal(y: f64, mean: f64, sd: f64, h: f64) -> f64 {
    // Integrate 0.75/h * (1 - ((c - s)/h)^2) * phi_sd(s) over s in [c - h, c + h].
    let c = y - mean;
    let (a, b) = (c - h, c + h);
    let m0 = normal_cdf(b, 0.0, sd) - normal_cdf(a, 0.0, sd);
    let pa = normal_pdf(a, 0.0, sd);
    let pb = normal_pdf(b, 0.0, sd);
    let var = sd * sd;
    let m1 = var * (pa - pb);
    let m2 = var * m0 + var * (a * pa - b * pb);
    0.75 / h * (m0 - (c * c * m0 - 2.0 * c * m1 + m2) / (h * h))
}

/// The same convolution by brute-force quadrature over the kernel support.
pub fn epan_smoothed_normal_quadrature(y: f64, mean: f64, sd: f64, h: f64) -> f64 {
    simpson(
        |u| 0.75 * (1.0 - u * u) * normal_pdf(y - h * u, mean, sd),
        -1.0,
        1.0,
        400,
    )
}

/// `int |p - q|` over `[lo, hi]` by adaptive Simpson.
pub fn l1_quadrature(p: impl Fn(f64) -> f64, q: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    // Split into unit cells so kinks of |p - q| are resolved locally.
    let cells = ((hi - lo).ceil() as usize).max(1) * 8;
    let w = (hi - lo) / cells as f64;
    let f = |x: f64| (p(x) - q(x)).abs();
    (0..cells)
        .map(|i| adaptive_simpson(&f, lo + i as f64 * w, lo + (i + 1) as f64 * w, 1e-11))
        .sum()
}

/// Smoothed L1 distance between `N(m1, s1^2)` and `N(m0, s0^2)` under the
/// Epanechnikov kernel of bandwidth `h`.
pub fn smoothed_normal_l1(m1: f64, s1: f64, m0: f64, s0: f64, h: f64) -> f64 {
    let lo = m1.min(m0) - 10.0 * s1.max(s0) - h;
    let hi = m1.max(m0) + 10.0 * s1.max(s0) + h;
    l1_quadrature(
        |y| epan_smoothed_normal(y, m1, s1, h),
        |y| epan_smoothed_normal(y, m0, s0, h),
        lo,
        hi,
    )
}

/// Smoothed density at `y` of the counterfactual outcome whose law given
/// `x1 ~ U(0,1)` is `N(base + slope * x1, noise^2)`.
pub fn smoothed_uniform_mixture(y: f64, base: f64, slope: f64, noise: f64, h: f64) -> f64 {
    if slope == 0.0 {
        return epan_smoothed_normal(y, base, noise, h);
    }
    simpson(
        |x| epan_smoothed_normal(y, base + slope * x, noise, h),
        0.0,
        1.0,
        200,
    )
}

/// Smoothed L1 distance between the two counterfactual marginals of the
/// linear confounded design.
pub fn confounded_oracle(effect: f64, slope: f64, noise: f64, h: f64) -> f64 {
    let lo = -8.0 * noise - h - slope.abs();
    let hi = effect.abs() + slope.abs() + 8.0 * noise + h;
    l1_quadrature(
        |y| smoothed_uniform_mixture(y, effect, slope, noise, h),
        |y| smoothed_uniform_mixture(y, 0.0, slope, noise, h),
        lo,
        hi,
    )
}

/// Median of absolute values.
pub fn median_abs(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
