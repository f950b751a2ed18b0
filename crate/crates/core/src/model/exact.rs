use crate::numeric::{norm_cdf, norm_pdf};

/// Closed-form transition law `p_t(x, ·)`.
///
/// All three laws are monotone images of a standard normal `z`, which gives a
/// common sampling/CDF interface through [`ExactLaw::sample`] and
/// [`ExactLaw::to_normal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactLaw {
    BmDrift { b: f64, sigma: f64 },
    Ou { kappa: f64, sigma: f64 },
    Gbm { mu: f64, sigma: f64 },
}

impl ExactLaw {
    /// Mean and standard deviation of the Gaussian coordinate (`y`, or `ln y` for gbm).
    #[inline]
    pub fn gaussian_params(&self, t: f64, x: f64) -> (f64, f64) {
        match *self {
            ExactLaw::BmDrift { b, sigma } => (x + b * t, sigma * t.sqrt()),
            ExactLaw::Ou { kappa, sigma } => {
                if kappa == 0.0 {
                    return (x, sigma * t.sqrt());
                }
                let v = -sigma * sigma * (-2.0 * kappa * t).exp_m1() / (2.0 * kappa);
                (x * (-kappa * t).exp(), v.sqrt())
            }
            ExactLaw::Gbm { mu, sigma } => (x.ln() + (mu - 0.5 * sigma * sigma) * t, sigma * t.sqrt()),
        }
    }

    pub fn mean(&self, t: f64, x: f64) -> f64 {
        match *self {
            ExactLaw::Gbm { mu, .. } => x * (mu * t).exp(),
            _ => self.gaussian_params(t, x).0,
        }
    }

    pub fn variance(&self, t: f64, x: f64) -> f64 {
        match *self {
            ExactLaw::Gbm { mu, sigma } => x * x * (2.0 * mu * t).exp() * (sigma * sigma * t).exp_m1(),
            _ => {
                let s = self.gaussian_params(t, x).1;
                s * s
            }
        }
    }

    #[inline]
    pub fn sample(&self, t: f64, x: f64, z: f64) -> f64 {
        let (m, s) = self.gaussian_params(t, x);
        match self {
            ExactLaw::Gbm { .. } => (m + s * z).exp(),
            _ => m + s * z,
        }
    }

    /// One exact step driven by a Brownian increment `dw` over `dt`. For
    /// bm_drift this is the Euler step, operation for operation.
    #[inline]
    pub fn step_increment(&self, dt: f64, x: f64, dw: f64) -> f64 {
        match *self {
            ExactLaw::BmDrift { b, sigma } => x + sigma * dw + b * dt,
            ExactLaw::Ou { .. } => {
                let (m, s) = self.gaussian_params(dt, x);
                m + s * (dw / dt.sqrt())
            }
            ExactLaw::Gbm { mu, sigma } => x * ((mu - 0.5 * sigma * sigma) * dt + sigma * dw).exp(),
        }
    }

    /// Inverse of [`ExactLaw::sample`]: the standard normal score of `y`.
    #[inline]
    pub fn to_normal(&self, t: f64, x: f64, y: f64) -> f64 {
        let (m, s) = self.gaussian_params(t, x);
        match self {
            ExactLaw::Gbm { .. } => (y.ln() - m) / s,
            _ => (y - m) / s,
        }
    }

    pub fn cdf(&self, t: f64, x: f64, y: f64) -> f64 {
        if matches!(self, ExactLaw::Gbm { .. }) && y <= 0.0 {
            return 0.0;
        }
        norm_cdf(self.to_normal(t, x, y))
    }

    pub fn density(&self, t: f64, x: f64, y: f64) -> f64 {
        let (_, s) = self.gaussian_params(t, x);
        match self {
            ExactLaw::Gbm { .. } => {
                if y <= 0.0 {
                    0.0
                } else {
                    norm_pdf(self.to_normal(t, x, y)) / (s * y)
                }
            }
            _ => norm_pdf(self.to_normal(t, x, y)) / s,
        }
    }

    /// `∂_x log p_t(x, y)`.
    pub fn score(&self, t: f64, x: f64, y: f64) -> f64 {
        match *self {
            ExactLaw::BmDrift { b, sigma } => (y - x - b * t) / (sigma * sigma * t),
            ExactLaw::Ou { kappa, .. } => {
                let (m, s) = self.gaussian_params(t, x);
                (y - m) * (-kappa * t).exp() / (s * s)
            }
            ExactLaw::Gbm { mu, sigma } => {
                let nu = mu - 0.5 * sigma * sigma;
                (y.ln() - x.ln() - nu * t) / (sigma * sigma * t * x)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ou_moments() {
        let law = ExactLaw::Ou { kappa: 1.0, sigma: 1.0 };
        assert!((law.mean(1.0, 1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((law.variance(1.0, 1.0) - 0.432_332_358_381_693_6).abs() < 1e-15);
    }

    #[test]
    fn ou_score_hand_value() {
        let law = ExactLaw::Ou { kappa: 1.0, sigma: 1.0 };
        let s = law.score(2f64.ln(), 0.0, 1.0);
        assert!((s - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn score_is_x_gradient_of_log_density() {
        let laws = [
            ExactLaw::BmDrift { b: 0.3, sigma: 0.7 },
            ExactLaw::Ou { kappa: 0.8, sigma: 1.2 },
            ExactLaw::Gbm { mu: 0.05, sigma: 0.3 },
        ];
        for law in laws {
            let (t, x, y) = (0.4, 1.1, 1.3);
            let h = 1e-6;
            let fd = ((law.density(t, x + h, y)).ln() - (law.density(t, x - h, y)).ln()) / (2.0 * h);
            assert!((fd - law.score(t, x, y)).abs() < 1e-6, "{law:?}");
            assert!((law.sample(t, x, law.to_normal(t, x, y)) - y).abs() < 1e-14);
        }
    }

    #[test]
    fn gbm_moments_match_lognormal() {
        let law = ExactLaw::Gbm { mu: 0.05, sigma: 0.3 };
        let (m, s) = law.gaussian_params(1.0, 1.0);
        assert!((law.mean(1.0, 1.0) - (m + 0.5 * s * s).exp()).abs() < 1e-14);
    }
}
