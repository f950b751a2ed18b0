use super::BridgeScore;
use crate::error::{Result, invalid};

/// Bridge Brownian increments of a path on `[s_l, s_{l+1}]`:
/// `ΔW^l_k = ΔW_k − σ(X_k)·∂_x ℓ_{s_{l+1}−t_k}(X_k, X_{s_{l+1}})·Δ` for all but the
/// last step, whose score integral is dropped (it is the pinned step of
/// [`super::bridge_values_into`]). Re-running the bridge with these increments
/// from `X_{s_l}` to `X_{s_{l+1}}` reproduces an Euler path exactly.
pub fn extract_into(score: &BridgeScore, values: &[f64], increments: &[f64], dt: f64, out: &mut Vec<f64>) -> Result<()> {
    let k_total = increments.len();
    if values.len() != k_total + 1 || k_total == 0 {
        return Err(invalid("extraction needs K increments and K + 1 values"));
    }
    let y = values[k_total];
    let model = score.model();
    out.clear();
    out.reserve(k_total);
    for k in 0..k_total - 1 {
        let rem = (k_total - k) as f64 * dt;
        let x = values[k];
        out.push(increments[k] - model.diffusion(x) * score.score(rem, x, y)? * dt);
    }
    out.push(increments[k_total - 1]);
    Ok(())
}

/// Allocating form of [`extract_into`]; `endpoint` must equal the last value.
pub fn extract_bridge_bm(score: &BridgeScore, values: &[f64], increments: &[f64], dt: f64, endpoint: f64) -> Result<Vec<f64>> {
    if values.last() != Some(&endpoint) {
        return Err(invalid("endpoint differs from the path value at the interval end"));
    }
    let mut out = Vec::new();
    extract_into(score, values, increments, dt, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{ScoreMode, ScoreOptions, bridge_values_into};
    use crate::model::builtin;
    use crate::simulate::{brownian_increments, euler_values};
    use std::collections::BTreeMap;

    #[test]
    fn hand_example() {
        let m = builtin("bm_drift", &BTreeMap::new()).unwrap();
        let s = BridgeScore::new(&m, ScoreOptions::new(ScoreMode::ClosedForm, 1.0)).unwrap();
        let dt = 0.25;
        let x = [0.0, 0.3, 0.2];
        let w = extract_bridge_bm(&s, &x, &[0.3, -0.1], dt, 0.2).unwrap();
        assert!((w[0] - (0.3 - (0.2 - 0.0) / (2.0 * dt) * dt)).abs() < 1e-15);
        assert_eq!(w[1], -0.1);
    }

    #[test]
    fn round_trip_reproduces_euler_path() {
        let m = builtin("sin_elliptic", &BTreeMap::new()).unwrap();
        let s = BridgeScore::auto(&m, 1.0).unwrap();
        let inc = brownian_increments(5, 3, 0.25, 64, 0).unwrap();
        let dt = 0.25 / 64.0;
        let mut x = Vec::new();
        euler_values(&m, 0.4, dt, &inc, &mut x).unwrap();
        let wl = extract_bridge_bm(&s, &x, &inc, dt, x[64]).unwrap();
        let mut z = Vec::new();
        bridge_values_into(&s, 0.4, x[64], dt, &wl, &mut z).unwrap();
        for (a, b) in x.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }
}
