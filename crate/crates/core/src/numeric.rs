//! Small numerical kernels shared across modules.

use crate::error::{Result, invalid, numerical};
use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = NeumaierSum::new();
    for v in values {
        s.add(v);
    }
    s.value()
}

/// Solves a tridiagonal system in place (Thomas algorithm).
///
/// `lower[0]` and `upper[n-1]` are ignored. `rhs` is overwritten with the solution.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    scratch: &mut Vec<f64>,
) -> Result<()> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(invalid("tridiagonal: length mismatch"));
    }
    if n == 0 {
        return Ok(());
    }
    scratch.clear();
    scratch.resize(n, 0.0);
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(numerical("tridiagonal: zero pivot"));
    }
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        if beta == 0.0 || !beta.is_finite() {
            return Err(numerical("tridiagonal: zero pivot"));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
    Ok(())
}

/// Cubic Hermite interpolant on one cell of width `h`, evaluated at fraction `s`.
#[inline]
pub fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Derivative (with respect to the abscissa) of [`hermite`].
#[inline]
pub fn hermite_derivative(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let dh00 = 6.0 * s2 - 6.0 * s;
    let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    let dh01 = -6.0 * s2 + 6.0 * s;
    let dh11 = 3.0 * s2 - 2.0 * s;
    (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1
}

/// Limits Hermite slopes so that the interpolant of nondecreasing data stays
/// nondecreasing (Fritsch–Carlson).
pub fn limit_monotone_slopes(y: &[f64], h: f64, d: &mut [f64]) {
    let n = y.len();
    for i in 0..n.saturating_sub(1) {
        let delta = (y[i + 1] - y[i]) / h;
        if delta <= 0.0 {
            d[i] = 0.0;
            d[i + 1] = 0.0;
            continue;
        }
        d[i] = d[i].max(0.0);
        d[i + 1] = d[i + 1].max(0.0);
        let a = d[i] / delta;
        let b = d[i + 1] / delta;
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            d[i] = tau * a * delta;
            d[i + 1] = tau * b * delta;
        }
    }
}

/// Monotone (PCHIP-style) slopes for data on a uniform grid.
pub fn pchip_slopes(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    let delta: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        d[i] = if a * b <= 0.0 { 0.0 } else { 2.0 * a * b / (a + b) };
    }
    d
}

/// Uniform-grid monotone cubic interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    pub x0: f64,
    pub h: f64,
    pub y: Vec<f64>,
    pub d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let d = pchip_slopes(&y, h);
        Self { x0, h, y, d }
    }

    /// Evaluates with constant extrapolation of the end slopes.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let pos = (x - self.x0) / self.h;
        if pos <= 0.0 {
            return self.y[0] + (x - self.x0) * self.d[0];
        }
        let last = (n - 1) as f64;
        if pos >= last {
            return self.y[n - 1] + (pos - last) * self.h * self.d[n - 1];
        }
        let i = (pos as usize).min(n - 2);
        let s = pos - i as f64;
        hermite(self.y[i], self.y[i + 1], self.d[i], self.d[i + 1], self.h, s)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let n = n.max(2);
    gauss_quad::legendre::GaussLegendre::new(n)
        .expect("degree >= 2")
        .into_iter()
        .collect()
}

/// Gauss–Hermite nodes and weights for the weight `exp(-x^2)`.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let n = n.max(2);
    gauss_quad::hermite::GaussHermite::new(n)
        .expect("degree >= 2")
        .into_iter()
        .collect()
}

/// Integrates `f` over `[a, b]` with a fixed Gauss–Legendre rule.
pub fn integrate_gl(rule: &[(f64, f64)], a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for &(x, w) in rule {
        s += w * f(mid + half * x);
    }
    s * half
}

/// Adaptive Gauss–Legendre quadrature (8 vs 16 points, bisection on disagreement).
pub fn integrate_adaptive(
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
    f: &mut impl FnMut(f64) -> f64,
) -> Result<f64> {
    thread_local! {
        static RULES: (Vec<(f64, f64)>, Vec<(f64, f64)>) = (gauss_legendre(8), gauss_legendre(16));
    }
    fn rec(
        a: f64,
        b: f64,
        tol: f64,
        depth: usize,
        r8: &[(f64, f64)],
        r16: &[(f64, f64)],
        f: &mut impl FnMut(f64) -> f64,
    ) -> Result<f64> {
        let i8 = integrate_gl(r8, a, b, &mut *f);
        let i16 = integrate_gl(r16, a, b, &mut *f);
        if !i16.is_finite() {
            return Err(numerical("quadrature produced a non-finite value"));
        }
        if (i16 - i8).abs() <= tol * (1.0 + i16.abs()) {
            return Ok(i16);
        }
        if depth == 0 {
            return Err(numerical("adaptive quadrature did not converge"));
        }
        let m = 0.5 * (a + b);
        Ok(rec(a, m, tol, depth - 1, r8, r16, f)? + rec(m, b, tol, depth - 1, r8, r16, f)?)
    }
    RULES.with(|(r8, r16)| rec(a, b, tol, max_depth, r8, r16, f))
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal quantile (full double precision).
pub fn norm_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    // erfc_inv is good to ~1e-11; one Halley step brings it to rounding level.
    let (z, e) = if u > 0.5 {
        let z = SQRT_2 * erfc_inv(2.0 * (1.0 - u));
        (z, (1.0 - u) - norm_sf(z))
    } else {
        let z = -SQRT_2 * erfc_inv(2.0 * u);
        (z, norm_cdf(z) - u)
    };
    let r = e / norm_pdf(z);
    z - r / (1.0 + 0.5 * z * r)
}

/// Rational approximation of the standard normal quantile (relative error
/// about 1.2e-9). Used for sampling, where speed matters.
#[inline]
pub fn norm_quantile_fast(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p > 1.0 - P_LOW {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Density of `N(mean, var)` at `x`.
#[inline]
pub fn gaussian_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier(v), 2.0);
        let naive: f64 = v.iter().sum();
        assert_ne!(naive, 2.0);
    }

    #[test]
    fn thomas_matches_dense_solution() {
        // [2 1 0; 1 3 1; 0 1 4] x = [3, 5, 5] -> x = [1, 1, 1]
        let lower = [0.0, 1.0, 1.0];
        let diag = [2.0, 3.0, 4.0];
        let upper = [1.0, 1.0, 0.0];
        let mut rhs = [3.0, 5.0, 5.0];
        let mut scratch = Vec::new();
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs, &mut scratch).unwrap();
        for v in rhs {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn normal_quantiles() {
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
        for &u in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.8, 0.999_999] {
            let z = norm_quantile(u);
            let tol = if u < 0.5 { 1e-13 * u } else { 1e-15 };
            assert!((norm_cdf(z) - u).abs() < tol, "{u}: {}", norm_cdf(z) - u);
            assert!((norm_quantile_fast(u) - z).abs() < 1e-8 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |x: f64| x * x * x - 2.0 * x + 1.0;
        let df = |x: f64| 3.0 * x * x - 2.0;
        let (a, h) = (0.3, 0.7);
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let v = hermite(f(a), f(a + h), df(a), df(a + h), h, s);
            assert!((v - f(a + s * h)).abs() < 1e-14);
            let dv = hermite_derivative(f(a), f(a + h), df(a), df(a + h), h, s);
            assert!((dv - df(a + s * h)).abs() < 1e-13);
        }
    }

    #[test]
    fn adaptive_quadrature_integrates_smooth_functions() {
        let v = integrate_adaptive(0.0, 3.0, 1e-14, 20, &mut |x: f64| (-x * x).exp()).unwrap();
        let exact = 0.5 * std::f64::consts::PI.sqrt() * libm::erf(3.0);
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn monotone_cubic_is_monotone() {
        let y = vec![0.0, 0.0, 0.1, 0.9, 1.0, 1.0, 1.0];
        let mc = MonotoneCubic::new(0.0, 1.0, y);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=600 {
            let v = mc.eval(k as f64 / 100.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }
}
