//! Diffusion models `dX = σ(X) dW + b(X) dt`.

mod builtin;
mod exact;
mod lamperti;
mod validate;

pub use builtin::{builtin, builtin_names};
pub use exact::ExactLaw;
pub use lamperti::{LampertiModel, LampertiOptions, TableCoordinate, lamperti};
pub use validate::{Condition, Level, ProbeGrid, ValidationOptions, ValidationReport, validate_hypotheses};

use std::fmt;
use std::sync::Arc;

/// Scalar coefficient function.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Open interval of the real line.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const REAL: Domain = Domain { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
    pub const POSITIVE: Domain = Domain { lo: 0.0, hi: f64::INFINITY };

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Coefficients given by closures; `drift[k]` / `diffusion[k]` is the k-th derivative.
#[derive(Clone)]
pub struct CustomCoefficients {
    pub drift: Vec<ScalarFn>,
    pub diffusion: Vec<ScalarFn>,
}

#[derive(Clone)]
pub(crate) enum Kind {
    BmDrift { b: f64, sigma: f64 },
    Ou { kappa: f64, sigma: f64 },
    Gbm { mu: f64, sigma: f64 },
    SinElliptic,
    Custom(Arc<CustomCoefficients>),
}

/// Coefficient bundle of a one-dimensional diffusion.
///
/// Immutable after construction and cheap to clone.
#[derive(Clone)]
pub struct DiffusionModel {
    name: String,
    pub(crate) kind: Kind,
    x0: f64,
    domain: Domain,
    ellipticity_floor: f64,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("domain", &self.domain)
            .field("ellipticity_floor", &self.ellipticity_floor)
            .finish()
    }
}

// sin_elliptic: a = 1 + sin(x)/2, b = 0.3 cos(x)
const SE_AMP: f64 = 0.5;
const SE_DRIFT: f64 = 0.3;

impl DiffusionModel {
    pub(crate) fn from_kind(name: &str, kind: Kind, x0: f64, domain: Domain, floor: f64) -> Self {
        Self { name: name.to_string(), kind, x0, domain, ellipticity_floor: floor }
    }

    /// Model with user-supplied coefficients. `drift[0]` and `diffusion[0]` are
    /// required; further entries are successive derivatives.
    pub fn custom(
        name: &str,
        coefficients: CustomCoefficients,
        x0: f64,
        domain: Domain,
        ellipticity_floor: f64,
    ) -> crate::Result<Self> {
        if coefficients.drift.is_empty() || coefficients.diffusion.is_empty() {
            return Err(crate::error::invalid("custom model needs drift and diffusion"));
        }
        if !domain.contains(x0) {
            return Err(crate::error::invalid("x0 outside the model domain"));
        }
        Ok(Self::from_kind(name, Kind::Custom(Arc::new(coefficients)), x0, domain, ellipticity_floor))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Same model started elsewhere.
    pub fn with_x0(&self, x0: f64) -> Self {
        let mut m = self.clone();
        m.x0 = x0;
        m
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn ellipticity_floor(&self) -> f64 {
        self.ellipticity_floor
    }

    /// Constant drift and diffusion: the Euler scheme is exact.
    pub fn is_constant(&self) -> bool {
        matches!(self.kind, Kind::BmDrift { .. })
    }

    /// Constant σ (Euler marginals coincide with the diffusion's only if b is affine too).
    pub fn has_constant_sigma(&self) -> bool {
        matches!(self.kind, Kind::BmDrift { .. } | Kind::Ou { .. })
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::BmDrift { b, .. } => *b,
            Kind::Ou { kappa, .. } => -kappa * x,
            Kind::Gbm { mu, .. } => mu * x,
            Kind::SinElliptic => SE_DRIFT * x.cos(),
            Kind::Custom(c) => (c.drift[0])(x),
        }
    }

    #[inline]
    pub fn diffusion(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::BmDrift { sigma, .. } | Kind::Ou { sigma, .. } => *sigma,
            Kind::Gbm { sigma, .. } => sigma * x,
            Kind::SinElliptic => (1.0 + SE_AMP * x.sin()).sqrt(),
            Kind::Custom(c) => (c.diffusion[0])(x),
        }
    }

    /// `(b(x), σ(x))` with shared work where possible.
    #[inline]
    pub fn coefficients(&self, x: f64) -> (f64, f64) {
        match &self.kind {
            Kind::SinElliptic => {
                let (s, c) = x.sin_cos();
                (SE_DRIFT * c, (1.0 + SE_AMP * s).sqrt())
            }
            _ => (self.drift(x), self.diffusion(x)),
        }
    }

    /// `a = σ²`.
    #[inline]
    pub fn a(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::SinElliptic => 1.0 + SE_AMP * x.sin(),
            _ => {
                let s = self.diffusion(x);
                s * s
            }
        }
    }

    /// Highest available derivative order of b and σ.
    pub fn derivative_orders(&self) -> (usize, usize) {
        match &self.kind {
            Kind::Custom(c) => (c.drift.len() - 1, c.diffusion.len() - 1),
            _ => (4, 4),
        }
    }

    /// k-th derivative of b, if available.
    pub fn drift_derivative(&self, k: usize, x: f64) -> Option<f64> {
        if k == 0 {
            return Some(self.drift(x));
        }
        Some(match &self.kind {
            Kind::BmDrift { .. } => 0.0,
            Kind::Ou { kappa, .. } => {
                if k == 1 {
                    -kappa
                } else {
                    0.0
                }
            }
            Kind::Gbm { mu, .. } => {
                if k == 1 {
                    *mu
                } else {
                    0.0
                }
            }
            Kind::SinElliptic => {
                let (s, c) = x.sin_cos();
                SE_DRIFT
                    * match k % 4 {
                        1 => -s,
                        2 => -c,
                        3 => s,
                        _ => c,
                    }
            }
            Kind::Custom(c) => return c.drift.get(k).map(|f| f(x)),
        })
    }

    /// k-th derivative of a, if available.
    pub fn a_derivative(&self, k: usize, x: f64) -> Option<f64> {
        if k == 0 {
            return Some(self.a(x));
        }
        match &self.kind {
            Kind::SinElliptic => {
                let (s, c) = x.sin_cos();
                Some(
                    SE_AMP
                        * match k % 4 {
                            1 => c,
                            2 => -s,
                            3 => -c,
                            _ => s,
                        },
                )
            }
            _ => {
                // Leibniz rule for a = σ·σ.
                let mut d = Vec::with_capacity(k + 1);
                for j in 0..=k {
                    d.push(self.sigma_derivative(j, x)?);
                }
                let mut s = 0.0;
                let mut binom = 1.0;
                for j in 0..=k {
                    s += binom * d[j] * d[k - j];
                    binom = binom * (k - j) as f64 / (j + 1) as f64;
                }
                Some(s)
            }
        }
    }

    /// k-th derivative of σ, if available.
    pub fn sigma_derivative(&self, k: usize, x: f64) -> Option<f64> {
        if k == 0 {
            return Some(self.diffusion(x));
        }
        Some(match &self.kind {
            Kind::BmDrift { .. } | Kind::Ou { .. } => 0.0,
            Kind::Gbm { sigma, .. } => {
                if k == 1 {
                    *sigma
                } else {
                    0.0
                }
            }
            Kind::SinElliptic => {
                let (s, c) = x.sin_cos();
                let a = 1.0 + SE_AMP * s;
                let (a1, a2, a3, a4) = (SE_AMP * c, -SE_AMP * s, -SE_AMP * c, SE_AMP * s);
                let sg = a.sqrt();
                let s1 = a1 / (2.0 * sg);
                let s2 = a2 / (2.0 * sg) - a1 * a1 / (4.0 * sg * sg * sg);
                // σ = a^{1/2}: differentiate the identity 2σσ' = a' repeatedly.
                // 2(σ'σ' + σσ'') = a'' ; 2(3σ'σ'' + σσ''') = a''' ; 2(3σ''² + 4σ'σ''' + σσ'''') = a''''
                let s3 = (a3 / 2.0 - 3.0 * s1 * s2) / sg;
                match k {
                    1 => s1,
                    2 => s2,
                    3 => s3,
                    4 => (a4 / 2.0 - 3.0 * s2 * s2 - 4.0 * s1 * s3) / sg,
                    _ => return None,
                }
            }
            Kind::Custom(c) => return c.diffusion.get(k).map(|f| f(x)),
        })
    }

    /// Closed-form transition law, when one exists.
    pub fn exact_law(&self) -> Option<ExactLaw> {
        match self.kind {
            Kind::BmDrift { b, sigma } => Some(ExactLaw::BmDrift { b, sigma }),
            Kind::Ou { kappa, sigma } => Some(ExactLaw::Ou { kappa, sigma }),
            Kind::Gbm { mu, sigma } => Some(ExactLaw::Gbm { mu, sigma }),
            _ => None,
        }
    }

    #[inline]
    pub fn in_domain(&self, x: f64) -> bool {
        self.domain.contains(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn probes(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
        (0..101).map(move |i| lo + (hi - lo) * i as f64 / 100.0)
    }

    fn check_derivatives(model: &DiffusionModel, lo: f64, hi: f64) {
        let h = 1e-5;
        for x in probes(lo, hi) {
            for k in 1..=3 {
                let fd = |f: &dyn Fn(f64) -> Option<f64>| (f(x + h).unwrap() - f(x - h).unwrap()) / (2.0 * h);
                let checks: [(&str, Option<f64>, f64); 3] = [
                    ("b", model.drift_derivative(k, x), fd(&|y| model.drift_derivative(k - 1, y))),
                    ("sigma", model.sigma_derivative(k, x), fd(&|y| model.sigma_derivative(k - 1, y))),
                    ("a", model.a_derivative(k, x), fd(&|y| model.a_derivative(k - 1, y))),
                ];
                for (name, exact, approx) in checks {
                    let exact = exact.unwrap();
                    let scale = exact.abs().max(1e-3);
                    assert!(
                        (exact - approx).abs() <= 1e-6 * scale.max(1.0),
                        "{} {name}^({k}) at {x}: {exact} vs {approx}",
                        model.name()
                    );
                }
            }
        }
    }

    #[test]
    fn builtin_derivatives_match_central_differences() {
        let p = BTreeMap::new();
        for name in builtin_names() {
            let m = builtin(name, &p).unwrap();
            let (lo, hi) = if *name == "gbm" { (0.2, 3.0) } else { (-3.0, 3.0) };
            check_derivatives(&m, lo, hi);
            let x = 0.5 * (lo + hi);
            assert!((m.a_derivative(4, x).unwrap()
                - (m.a_derivative(3, x + 1e-4).unwrap() - m.a_derivative(3, x - 1e-4).unwrap()) / 2e-4)
                .abs()
                < 1e-6);
        }
    }

    #[test]
    fn sin_elliptic_bounds() {
        let m = builtin("sin_elliptic", &BTreeMap::new()).unwrap();
        for x in probes(-10.0, 10.0) {
            let a = m.a(x);
            assert!((0.5..=1.5).contains(&a));
            let (b, s) = m.coefficients(x);
            assert_eq!(b, m.drift(x));
            assert!((s * s - a).abs() < 1e-15);
        }
    }
}
