use super::DiffusionModel;
use crate::error::{Result, invalid, numerical};
use crate::numeric::{hermite, hermite_derivative, integrate_adaptive};

/// Variable in which φ is tabulated: `x` itself, or `ln x` on `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TableCoordinate {
    Identity,
    Log,
}

impl TableCoordinate {
    #[inline]
    fn to_xi(self, x: f64) -> f64 {
        match self {
            TableCoordinate::Identity => x,
            TableCoordinate::Log => x.ln(),
        }
    }

    #[inline]
    fn to_x(self, xi: f64) -> f64 {
        match self {
            TableCoordinate::Identity => xi,
            TableCoordinate::Log => xi.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LampertiOptions {
    /// Tabulated range in `x`.
    pub lo: f64,
    pub hi: f64,
    /// Table cells per unit of the table coordinate.
    pub cells_per_unit: f64,
    pub tol: f64,
}

impl LampertiOptions {
    /// A range that covers paths of horizon `horizon` with a wide margin.
    pub fn for_model(model: &DiffusionModel, horizon: f64) -> Self {
        let x0 = model.x0();
        let s0 = model.diffusion(x0).abs();
        if model.domain().lo == 0.0 {
            let w = (12.0 * (s0 / x0) * horizon.sqrt()).max(3.0);
            Self { lo: x0 * (-w).exp(), hi: x0 * w.exp(), cells_per_unit: 128.0, tol: 1e-14 }
        } else {
            let w = (20.0 * s0 * horizon.sqrt()).max(12.0);
            Self { lo: x0 - w, hi: x0 + w, cells_per_unit: 128.0, tol: 1e-14 }
        }
    }
}

/// Lamperti reduction of a model to unit diffusion coefficient.
///
/// `φ(x) = ∫_{anchor}^x dy/σ(y)` and `Ẑ = φ(X)` solves `dẐ = α(Ẑ)dt + dW` with
/// `α = (b/σ − σ'/2)∘φ⁻¹`. The anchor is 0 on the real line and 1 on `(0, ∞)`.
#[derive(Debug, Clone)]
pub struct LampertiModel {
    model: DiffusionModel,
    coord: TableCoordinate,
    anchor: f64,
    xi0: f64,
    h: f64,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    tol: f64,
    alpha_constant: bool,
}

/// Builds the Lamperti transform by adaptive quadrature of `1/σ`.
pub fn lamperti(model: &DiffusionModel, opts: &LampertiOptions) -> Result<LampertiModel> {
    if model.sigma_derivative(1, model.x0()).is_none() {
        return Err(invalid("Lamperti transform needs σ'"));
    }
    let dom = model.domain();
    let coord = if dom.lo == 0.0 && dom.hi == f64::INFINITY {
        TableCoordinate::Log
    } else if dom.lo == f64::NEG_INFINITY && dom.hi == f64::INFINITY {
        TableCoordinate::Identity
    } else {
        return Err(invalid("Lamperti transform supports the real line or (0, ∞)"));
    };
    let anchor = match coord {
        TableCoordinate::Identity => 0.0,
        TableCoordinate::Log => 1.0,
    };
    if !(opts.lo < opts.hi) || !dom.contains(opts.lo) || !dom.contains(opts.hi) {
        return Err(invalid("Lamperti table range must be a nonempty sub-interval of the domain"));
    }
    let (xi_lo, xi_hi) = (coord.to_xi(opts.lo.min(anchor)), coord.to_xi(opts.hi.max(anchor)));
    let xa = coord.to_xi(anchor);
    let h = 1.0 / opts.cells_per_unit;
    let below = ((xa - xi_lo) / h).ceil() as usize;
    let above = ((xi_hi - xa) / h).ceil() as usize;
    let n = below + above + 1;
    let xi0 = xa - below as f64 * h;

    let deriv = |xi: f64| -> f64 {
        let x = coord.to_x(xi);
        let s = model.diffusion(x);
        match coord {
            TableCoordinate::Identity => 1.0 / s,
            TableCoordinate::Log => x / s,
        }
    };
    let mut dphi = Vec::with_capacity(n);
    for i in 0..n {
        let x = coord.to_x(xi0 + i as f64 * h);
        let s = model.diffusion(x);
        if !(s > 0.0) || !s.is_finite() {
            return Err(numerical(format!("σ ≤ 0 encountered at x = {x}")));
        }
        dphi.push(deriv(xi0 + i as f64 * h));
    }
    let mut phi = vec![0.0; n];
    let mut f = |xi: f64| deriv(xi);
    for i in below + 1..n {
        let (a, b) = (xi0 + (i - 1) as f64 * h, xi0 + i as f64 * h);
        phi[i] = phi[i - 1] + integrate_adaptive(a, b, opts.tol, 30, &mut f)?;
    }
    for i in (0..below).rev() {
        let (a, b) = (xi0 + i as f64 * h, xi0 + (i + 1) as f64 * h);
        phi[i] = phi[i + 1] - integrate_adaptive(a, b, opts.tol, 30, &mut f)?;
    }

    let mut lm = LampertiModel {
        model: model.clone(),
        coord,
        anchor,
        xi0,
        h,
        phi,
        dphi,
        tol: opts.tol,
        alpha_constant: false,
    };
    let mut constant = true;
    for i in (0..n).step_by(4) {
        let x = coord.to_x(xi0 + i as f64 * h);
        match lm.alpha_derivatives_at_x(x) {
            Some((a, a1, a2)) => {
                let scale = 1e-12 * (1.0 + a.abs());
                if a1.abs() > scale || a2.abs() > scale {
                    constant = false;
                    break;
                }
            }
            None => {
                constant = false;
                break;
            }
        }
    }
    lm.alpha_constant = constant;
    Ok(lm)
}

impl LampertiModel {
    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn coordinate(&self) -> TableCoordinate {
        self.coord
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// True when α′ and α″ vanish on the whole table.
    pub fn alpha_is_constant(&self) -> bool {
        self.alpha_constant
    }

    /// Range of φ covered by the table.
    pub fn table_range(&self) -> (f64, f64) {
        (self.phi[0], self.phi[self.phi.len() - 1])
    }

    fn dphi_dxi(&self, xi: f64) -> f64 {
        let x = self.coord.to_x(xi);
        let s = self.model.diffusion(x);
        match self.coord {
            TableCoordinate::Identity => 1.0 / s,
            TableCoordinate::Log => x / s,
        }
    }

    fn phi_xi(&self, xi: f64) -> f64 {
        let n = self.phi.len();
        let pos = (xi - self.xi0) / self.h;
        if pos >= 0.0 && pos <= (n - 1) as f64 {
            let i = (pos as usize).min(n - 2);
            let s = pos - i as f64;
            return hermite(self.phi[i], self.phi[i + 1], self.dphi[i], self.dphi[i + 1], self.h, s);
        }
        let (i, sign) = if pos < 0.0 { (0, -1.0) } else { (n - 1, 1.0) };
        let edge = self.xi0 + i as f64 * self.h;
        let (a, b) = if sign > 0.0 { (edge, xi) } else { (xi, edge) };
        let mut f = |u: f64| self.dphi_dxi(u);
        match integrate_adaptive(a, b, self.tol, 40, &mut f) {
            Ok(v) => self.phi[i] + sign * v,
            Err(_) => f64::NAN,
        }
    }

    /// `φ(x)`; NaN outside the model domain.
    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        if !self.model.in_domain(x) {
            return f64::NAN;
        }
        self.phi_xi(self.coord.to_xi(x))
    }

    /// `φ⁻¹(z)` by safeguarded Newton iteration.
    pub fn phi_inverse(&self, z: f64) -> f64 {
        if !z.is_finite() {
            return f64::NAN;
        }
        let n = self.phi.len();
        if z >= self.phi[0] && z <= self.phi[n - 1] {
            let i = match self.phi.binary_search_by(|v| v.total_cmp(&z)) {
                Ok(i) => return self.coord.to_x(self.xi0 + i as f64 * self.h),
                Err(i) => i - 1,
            };
            let (y0, y1, d0, d1) = (self.phi[i], self.phi[i + 1], self.dphi[i], self.dphi[i + 1]);
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut s = ((z - y0) / (y1 - y0)).clamp(0.0, 1.0);
            for _ in 0..60 {
                let f = hermite(y0, y1, d0, d1, self.h, s) - z;
                if f.abs() <= 1e-15 * (1.0 + z.abs()) {
                    break;
                }
                if f > 0.0 {
                    hi = s;
                } else {
                    lo = s;
                }
                let df = hermite_derivative(y0, y1, d0, d1, self.h, s) * self.h;
                let mut next = s - f / df;
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if (next - s).abs() < 1e-17 {
                    s = next;
                    break;
                }
                s = next;
            }
            return self.coord.to_x(self.xi0 + (i as f64 + s) * self.h);
        }
        // Outside the table: Newton in the table coordinate.
        let mut xi = if z < self.phi[0] { self.xi0 } else { self.xi0 + (n - 1) as f64 * self.h };
        for _ in 0..100 {
            let f = self.phi_xi(xi) - z;
            if !f.is_finite() {
                return f64::NAN;
            }
            let step = f / self.dphi_dxi(xi);
            xi -= step;
            if step.abs() <= 1e-15 * (1.0 + xi.abs()) {
                break;
            }
        }
        self.coord.to_x(xi)
    }

    /// `b/σ − σ'/2` at `x`, i.e. `α(φ(x))`.
    #[inline]
    pub fn alpha_at_x(&self, x: f64) -> f64 {
        let (b, s) = self.model.coefficients(x);
        let s1 = self.model.sigma_derivative(1, x).unwrap_or(f64::NAN);
        b / s - 0.5 * s1
    }

    /// `(α, α′, α″)` at `z = φ(x)`, by the chain rule through `x`.
    pub fn alpha_derivatives_at_x(&self, x: f64) -> Option<(f64, f64, f64)> {
        let m = &self.model;
        let b = m.drift(x);
        let b1 = m.drift_derivative(1, x)?;
        let b2 = m.drift_derivative(2, x)?;
        let s = m.diffusion(x);
        let s1 = m.sigma_derivative(1, x)?;
        let s2 = m.sigma_derivative(2, x)?;
        let s3 = m.sigma_derivative(3, x)?;
        let f = b / s - 0.5 * s1;
        let f1 = (b1 * s - b * s1) / (s * s) - 0.5 * s2;
        let f2 = b2 / s - 2.0 * b1 * s1 / (s * s) - b * s2 / (s * s) + 2.0 * b * s1 * s1 / (s * s * s)
            - 0.5 * s3;
        Some((f, f1 * s, (f2 * s + f1 * s1) * s))
    }

    pub fn alpha(&self, z: f64) -> f64 {
        self.alpha_at_x(self.phi_inverse(z))
    }

    pub fn alpha_d1(&self, z: f64) -> Option<f64> {
        self.alpha_derivatives_at_x(self.phi_inverse(z)).map(|v| v.1)
    }

    pub fn alpha_d2(&self, z: f64) -> Option<f64> {
        self.alpha_derivatives_at_x(self.phi_inverse(z)).map(|v| v.2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use std::collections::BTreeMap;

    fn build(name: &str, kv: &[(&str, f64)]) -> LampertiModel {
        let p: BTreeMap<String, f64> = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let m = builtin(name, &p).unwrap();
        lamperti(&m, &LampertiOptions::for_model(&m, 1.0)).unwrap()
    }

    fn probes(m: &LampertiModel) -> Vec<f64> {
        match m.coordinate() {
            TableCoordinate::Identity => (0..=200).map(|i| -15.0 + 0.15 * i as f64).collect(),
            TableCoordinate::Log => (0..=200).map(|i| (-3.0 + 0.03 * i as f64).exp()).collect(),
        }
    }

    #[test]
    fn bm_drift_is_identity() {
        let lm = build("bm_drift", &[("b", 0.4)]);
        for x in probes(&lm) {
            assert!((lm.phi(x) - x).abs() < 1e-12);
            assert!((lm.alpha(x) - 0.4).abs() < 1e-14);
        }
        assert!(lm.alpha_is_constant());
    }

    #[test]
    fn gbm_alpha_constant() {
        let (mu, sigma) = (0.05, 0.3);
        let lm = build("gbm", &[("mu", mu), ("sigma", sigma)]);
        assert!(lm.alpha_is_constant());
        let expect = mu / sigma - sigma / 2.0;
        for x in probes(&lm) {
            let z = lm.phi(x);
            assert!((z - x.ln() / sigma).abs() < 1e-11);
            assert!((lm.alpha(z) - expect).abs() < 1e-13);
            // chain-rule check by finite differences in z
            let h = 1e-4;
            assert!(((lm.alpha(z + h) - lm.alpha(z - h)) / (2.0 * h)).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_and_alpha_identities() {
        for (name, kv) in [
            ("bm_drift", vec![("b", 0.1)]),
            ("ou", vec![]),
            ("gbm", vec![]),
            ("sin_elliptic", vec![]),
        ] {
            let lm = build(name, &kv);
            let m = lm.model().clone();
            for x in probes(&lm) {
                let z = lm.phi(x);
                assert!((lm.phi_inverse(z) - x).abs() < 1e-10 * (1.0 + x.abs()), "{name} {x}");
                let direct = m.drift(x) / m.diffusion(x) - 0.5 * m.sigma_derivative(1, x).unwrap();
                assert!((lm.alpha(z) - direct).abs() < 1e-8, "{name} {x}");
            }
        }
    }

    #[test]
    fn sin_elliptic_phi_matches_quadrature_and_derivatives() {
        let lm = build("sin_elliptic", &[]);
        let m = lm.model().clone();
        for &x in &[-3.7, -0.4, 0.0, 1.3, 5.2, 14.0, 25.0] {
            let mut f = |y: f64| 1.0 / m.diffusion(y);
            let q = integrate_adaptive(0.0f64.min(x), 0.0f64.max(x), 1e-15, 40, &mut f).unwrap();
            let q = if x < 0.0 { -q } else { q };
            assert!((lm.phi(x) - q).abs() < 1e-11, "{x}: {} vs {q}", lm.phi(x));
            let z = lm.phi(x);
            let h = 1e-4;
            let d1 = (lm.alpha(z + h) - lm.alpha(z - h)) / (2.0 * h);
            assert!((d1 - lm.alpha_d1(z).unwrap()).abs() < 1e-7);
            let d2 = (lm.alpha_d1(z + h).unwrap() - lm.alpha_d1(z - h).unwrap()) / (2.0 * h);
            assert!((d2 - lm.alpha_d2(z).unwrap()).abs() < 1e-7);
        }
        assert!(!lm.alpha_is_constant());
    }
}
