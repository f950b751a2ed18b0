use super::{BridgeScore, ScoreMode, ScoreOptions, bridge_values_into};
use crate::error::{Result, invalid};
use crate::model::DiffusionModel;
use crate::rng::{Purpose, StreamKey};
use crate::stats::{KsResult, ks_two_sample};

/// Two-sample tests comparing bridged paths with direct simulation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ReconstructReport {
    pub quarter: KsResult,
    pub midpoint: KsResult,
    /// `mid − (x0 + end)/2`, which depends on the pairing of path and endpoint.
    pub pairing: KsResult,
    /// Same statistic with the endpoint replaced by an independent draw; must fail.
    pub shuffled_control: KsResult,
    pub paths: usize,
    pub steps: usize,
}

impl ReconstructReport {
    pub fn passed(&self, alpha: f64) -> bool {
        self.quarter.p_value > alpha
            && self.midpoint.p_value > alpha
            && self.pairing.p_value > alpha
            && self.shuffled_control.p_value < 1e-3
    }
}

/// Draws `X_T` from the exact law, bridges `x0 → X_T` with `steps` Euler-bridge
/// steps, and compares the bridged quarter/mid points with exact direct draws.
pub fn reconstruct_check(model: &DiffusionModel, horizon: f64, paths: usize, steps: usize, seed: u64) -> Result<ReconstructReport> {
    let law = model.exact_law().ok_or_else(|| invalid(format!("{} has no exact law", model.name())))?;
    if steps < 4 || steps % 4 != 0 || paths < 10 {
        return Err(invalid("reconstruction needs steps divisible by 4 and at least 10 paths"));
    }
    let score = BridgeScore::new(model, ScoreOptions::new(ScoreMode::ClosedForm, horizon))?;
    let x0 = model.x0();
    let dt = horizon / steps as f64;
    let (end_key, noise_key, direct_key, shuffle_key) = (
        StreamKey::new(seed, Purpose::Endpoint),
        StreamKey::new(seed, Purpose::BridgeNoise),
        StreamKey::new(seed, Purpose::Probe),
        StreamKey::new(seed, Purpose::Shuffle),
    );
    let mut bq = Vec::with_capacity(paths);
    let mut bm = Vec::with_capacity(paths);
    let mut bd = Vec::with_capacity(paths);
    let mut bs = Vec::with_capacity(paths);
    let mut dq = Vec::with_capacity(paths);
    let mut dm = Vec::with_capacity(paths);
    let mut dd = Vec::with_capacity(paths);
    let mut inc = vec![0.0; steps];
    let mut z = Vec::new();
    for i in 0..paths as u64 {
        let y = law.sample(horizon, x0, end_key.cursor(i, 0, 0).normal());
        let mut c = noise_key.cursor(i, 0, 0);
        for v in inc.iter_mut() {
            *v = dt.sqrt() * c.normal();
        }
        bridge_values_into(&score, x0, y, dt, &inc, &mut z)?;
        let mid = z[steps / 2];
        bq.push(z[steps / 4]);
        bm.push(mid);
        bd.push(mid - 0.5 * (x0 + y));
        let y_other = law.sample(horizon, x0, shuffle_key.cursor(i, 0, 0).normal());
        bs.push(mid - 0.5 * (x0 + y_other));

        let mut c = direct_key.cursor(i, 0, 0);
        let q = law.sample(0.25 * horizon, x0, c.normal());
        let m = law.sample(0.25 * horizon, q, c.normal());
        let e = law.sample(0.5 * horizon, m, c.normal());
        dq.push(q);
        dm.push(m);
        dd.push(m - 0.5 * (x0 + e));
    }
    Ok(ReconstructReport {
        quarter: ks_two_sample(&bq, &dq),
        midpoint: ks_two_sample(&bm, &dm),
        pairing: ks_two_sample(&bd, &dd),
        shuffled_control: ks_two_sample(&bs, &dd),
        paths,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use std::collections::BTreeMap;

    #[test]
    fn bm_small_run_passes_and_control_fails() {
        let m = builtin("bm_drift", &[("b".to_string(), 0.2)].into()).unwrap();
        let r = reconstruct_check(&m, 1.0, 20_000, 64, 7).unwrap();
        assert!(r.passed(0.01), "{r:?}");
        assert!(reconstruct_check(&builtin("sin_elliptic", &BTreeMap::new()).unwrap(), 1.0, 100, 8, 1).is_err());
    }
}
