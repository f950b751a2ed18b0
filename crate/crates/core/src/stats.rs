//! Goodness-of-fit statistics and moment accumulators.

use crate::numeric::NeumaierSum;

/// Kolmogorov limiting survival function `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: f64,
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut v: Vec<f64> = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult { statistic: d, p_value: ks_p(d, n), n_effective: n }
}

/// Two-sample test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    KsResult { statistic: d, p_value: ks_p(d, ne), n_effective: ne }
}

/// Half-width of the Dvoretzky–Kiefer–Wolfowitz band at confidence `1 - alpha`.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Mean/variance accumulator with compensated sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub count: u64,
    sum: NeumaierSum,
    sum_sq: NeumaierSum,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum.add(v);
        self.sum_sq.add(v * v);
    }

    pub fn merge(&mut self, o: &Moments) {
        self.count += o.count;
        self.sum.merge(&o.sum);
        self.sum_sq.merge(&o.sum_sq);
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let m = self.mean();
        ((self.sum_sq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Sample mean and unbiased variance of a slice.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let mut m = Moments::new();
    for &x in v {
        m.push(x);
    }
    (m.mean(), m.variance())
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let mut s = NeumaierSum::new();
    for (x, y) in a.iter().zip(b) {
        s.add((x - ma) * (y - mb));
    }
    s.value() / (a.len() as f64 - 1.0) / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_known_values() {
        // P(K > 1.36) ≈ 0.0494, P(K > 1.63) ≈ 0.0098
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_sf(1.628) - 0.0100).abs() < 3e-4);
    }

    #[test]
    fn two_sample_statistic_by_hand() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[2.5, 3.5, 4.5]);
        assert!((r.statistic - 2.0 / 3.0).abs() < 1e-15);
        let same = ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]);
        assert_eq!(same.statistic, 0.0);
    }

    #[test]
    fn moments_match_direct() {
        let v = [1.0, 2.0, 4.0, 7.0];
        let (m, var) = mean_var(&v);
        assert!((m - 3.5).abs() < 1e-15);
        assert!((var - 7.0).abs() < 1e-14);
    }
}
