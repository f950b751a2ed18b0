use super::BridgeScore;
use crate::error::{Error, Result, invalid};
use crate::simulate::{GridSpec, PathBundle};

/// Euler integration of the bridge SDE `dZ = [b(Z) + a(Z)∂_x ℓ_{s′−t}(Z, y)]dt + σ(Z)dB`
/// from `x`, on `K = increments.len()` steps of size `dt`. Stores
/// `Z_0, …, Z_{K−1}` and pins `Z_K = y`: the last step is the exact bridge step.
pub fn bridge_values_into(
    score: &BridgeScore,
    x: f64,
    y: f64,
    dt: f64,
    increments: &[f64],
    out: &mut Vec<f64>,
) -> Result<()> {
    let k_total = increments.len();
    if k_total == 0 || !(dt > 0.0) {
        return Err(invalid("bridge needs at least one step of positive length"));
    }
    let model = score.model();
    out.clear();
    out.reserve(k_total + 1);
    out.push(x);
    let mut z = x;
    for k in 0..k_total - 1 {
        let rem = (k_total - k) as f64 * dt;
        let (b, s) = model.coefficients(z);
        let sc = score.score(rem, z, y)?;
        z = z + (b + s * s * sc) * dt + s * increments[k];
        if !model.in_domain(z) || !z.is_finite() {
            return Err(Error::DomainExit { step: k + 1, value: z });
        }
        out.push(z);
    }
    out.push(y);
    Ok(())
}

/// Bridge from `x` at `s` to `y` at `s′` on the fine grid of `[s, s′]`.
pub fn bridge_path(score: &BridgeScore, x: f64, y: f64, interval: (f64, f64), increments: &[f64]) -> Result<PathBundle> {
    let len = interval.1 - interval.0;
    let grid = GridSpec::new(len, increments.len().max(1), 1)?;
    let mut values = Vec::new();
    bridge_values_into(score, x, y, grid.dt(), increments, &mut values)?;
    Ok(PathBundle { grid, values, increments: increments.to_vec(), lineage: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{ScoreMode, ScoreOptions};
    use crate::model::builtin;
    use crate::rng::{Purpose, StreamKey};
    use crate::stats::ks_one_sample;
    use std::collections::BTreeMap;

    #[test]
    fn brownian_bridge_midpoint_law() {
        let m = builtin("bm_drift", &BTreeMap::new()).unwrap();
        let s = BridgeScore::new(&m, ScoreOptions::new(ScoreMode::ClosedForm, 1.0)).unwrap();
        let key = StreamKey::new(2024, Purpose::BridgeNoise);
        let k = 128;
        let dt = 1.0 / k as f64;
        let mut mids = Vec::with_capacity(100_000);
        let mut near = Vec::with_capacity(10_000);
        let mut inc = vec![0.0; k];
        let mut out = Vec::new();
        for i in 0..100_000u64 {
            let mut c = key.cursor(i, 0, 0);
            for v in inc.iter_mut() {
                *v = dt.sqrt() * c.normal();
            }
            bridge_values_into(&s, 0.0, 0.0, dt, &inc, &mut out).unwrap();
            mids.push(out[k / 2]);
            if i < 10_000 {
                near.push(out[k - 1].abs());
            }
        }
        let r = ks_one_sample(&mids, |x| crate::numeric::norm_cdf(x / 0.5));
        assert!(r.p_value > 0.01, "{r:?}");
        near.sort_by(f64::total_cmp);
        assert!(near[near.len() / 2] <= 2.0 * dt.sqrt());
        assert_eq!(out[k], 0.0);
    }
}
