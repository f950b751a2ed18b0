use crate::error::{Error, Result, invalid};
use crate::model::DiffusionModel;
use crate::rng::{Purpose, StreamKey};
use crate::simulate::dyadic_split;

/// Brownian increments driving an Euler path: `β_k = (Ȳ_{k+1} − Ȳ_k − b(Ȳ_k)Δ)/σ(Ȳ_k)`.
pub fn reconstruct_beta(model: &DiffusionModel, values: &[f64], dt: f64) -> Result<Vec<f64>> {
    if values.len() < 2 || !(dt > 0.0) {
        return Err(invalid("β reconstruction needs at least two values and dt > 0"));
    }
    let mut out = Vec::with_capacity(values.len() - 1);
    for (k, w) in values.windows(2).enumerate() {
        let (b, s) = model.coefficients(w[0]);
        if !(s > 0.0) {
            return Err(Error::Numerical(format!("σ(Ȳ_{k}) = {s} vanishes")));
        }
        out.push((w[1] - w[0] - b * dt) / s);
    }
    Ok(out)
}

/// Refines `β` by `levels` dyadic bisections with conditionally Brownian
/// midpoints; level `r` draws from block `r` of the refinement stream of `path_index`.
pub fn refine_beta(beta: &[f64], dt: f64, levels: u32, seed: u64, path_index: u64) -> Vec<f64> {
    let key = StreamKey::new(seed, Purpose::BetaRefine);
    let mut cur = beta.to_vec();
    let mut next = Vec::new();
    let mut h = dt;
    for r in 1..=levels {
        let mut c = key.cursor(path_index, r as u64, 0);
        dyadic_split(&cur, h, &mut c, &mut next);
        std::mem::swap(&mut cur, &mut next);
        h *= 0.5;
    }
    cur
}
