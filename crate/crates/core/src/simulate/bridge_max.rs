use crate::error::{Result, invalid};

/// Maximum of the Brownian bridge interpolating one Euler step, from one uniform.
///
/// `P(max > y) = exp(−2(y − a)(y − b)/(σ²Δ))` for `y ≥ max(a, b)`; this is its
/// inverse at `u`.
#[inline]
pub fn bridge_max(x_left: f64, x_right: f64, sigma_left: f64, dt: f64, u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(invalid("bridge maximum needs u in (0, 1]"));
    }
    if !(sigma_left > 0.0) || !(dt > 0.0) {
        return Err(invalid("bridge maximum needs σ > 0 and Δ > 0"));
    }
    let d = x_right - x_left;
    let v = (d * d - 2.0 * sigma_left * sigma_left * dt * u.ln()).sqrt();
    Ok((0.5 * (x_left + x_right + v)).max(x_left.max(x_right)))
}

/// `P(max > y)` for the bridge from `a` to `b`.
pub fn bridge_max_tail(a: f64, b: f64, sigma: f64, dt: f64, y: f64) -> f64 {
    if y <= a.max(b) {
        return 1.0;
    }
    (-2.0 * (y - a) * (y - b) / (sigma * sigma * dt)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_points() {
        assert_eq!(bridge_max(0.3, -0.2, 1.0, 0.5, 1.0).unwrap(), 0.3);
        let m = bridge_max(0.0, 0.0, 1.0, 1.0, (-2.0f64).exp()).unwrap();
        assert!((m - 1.0).abs() < 1e-15);
        assert!(bridge_max(0.0, 0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn inverts_tail() {
        for &u in &[0.9, 0.5, 0.1, 1e-6] {
            let m = bridge_max(0.2, 0.7, 0.8, 0.3, u).unwrap();
            assert!((bridge_max_tail(0.2, 0.7, 0.8, 0.3, m) - u).abs() < 1e-12);
        }
    }
}
