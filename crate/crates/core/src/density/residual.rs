use super::{FpOptions, MarginalLaw, MeshSpec, fokker_planck_evolve};
use crate::error::{Result, invalid};
use crate::model::DiffusionModel;
use crate::numeric::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ResidualOptions {
    pub u_lo: f64,
    pub u_hi: f64,
    pub h_u: f64,
    /// Slices before this time are skipped.
    pub t_min: f64,
}

impl ResidualOptions {
    pub fn for_horizon(horizon: f64) -> Self {
        Self { u_lo: 0.05, u_hi: 0.95, h_u: 1e-3, t_min: 0.25 * horizon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ResidualReport {
    pub max: f64,
    pub l2: f64,
    pub slices: usize,
    pub points: usize,
    pub argmax_t: f64,
    pub argmax_u: f64,
}

/// Residual of `∂_t Q + ½∂_u(a(Q)/∂_u Q) − b(Q) = 0` for the quantile functions
/// of equally spaced laws, by conservative central differences.
pub fn inverse_cdf_pde_residual(
    laws: &[MarginalLaw],
    model: &DiffusionModel,
    opts: &ResidualOptions,
) -> Result<ResidualReport> {
    if laws.len() < 3 {
        return Err(invalid("residual needs at least three time slices"));
    }
    let ht = laws[1].time - laws[0].time;
    if !(ht > 0.0) || laws.windows(2).any(|w| ((w[1].time - w[0].time) - ht).abs() > 1e-9 * ht.max(1.0)) {
        return Err(invalid("residual needs equally spaced time slices"));
    }
    if !(opts.h_u > 0.0) || !(opts.u_lo - opts.h_u > 0.0) || !(opts.u_hi + opts.h_u < 1.0) || opts.u_lo >= opts.u_hi {
        return Err(invalid("u-range must satisfy 0 < u_lo − h_u < u_hi + h_u < 1"));
    }
    let hu = opts.h_u;
    let nu = ((opts.u_hi - opts.u_lo) / hu).round() as usize + 1;
    let us: Vec<f64> = (0..nu).map(|i| opts.u_lo + i as f64 * hu).collect();
    let quant = |law: &MarginalLaw, u: f64| law.quantile_unchecked(u);
    let mut best = (0.0f64, 0.0, 0.0);
    let mut sq = NeumaierSum::new();
    let mut count = 0usize;
    let mut slices = 0usize;
    for j in 1..laws.len() - 1 {
        if laws[j].time < opts.t_min - 1e-12 {
            continue;
        }
        slices += 1;
        for &u in &us {
            let q = quant(&laws[j], u);
            let qp = quant(&laws[j], u + hu);
            let qm = quant(&laws[j], u - hu);
            let dt = (quant(&laws[j + 1], u) - quant(&laws[j - 1], u)) / (2.0 * ht);
            let gp = model.a(0.5 * (q + qp)) * hu / (qp - q);
            let gm = model.a(0.5 * (q + qm)) * hu / (q - qm);
            let r = dt + 0.5 * (gp - gm) / hu - model.drift(q);
            sq.add(r * r);
            count += 1;
            if r.abs() > best.0 || !r.is_finite() {
                best = (r.abs(), laws[j].time, u);
            }
        }
    }
    if slices == 0 {
        return Err(invalid("no interior slice at or after t_min"));
    }
    Ok(ResidualReport {
        max: best.0,
        l2: (sq.value() / count as f64).sqrt(),
        slices,
        points: count,
        argmax_t: best.1,
        argmax_u: best.2,
    })
}

/// Solves the Fokker–Planck equation at slices `T/4 − h_t, …, T` and evaluates the
/// residual there.
pub fn fp_inverse_cdf_residual(
    model: &DiffusionModel,
    horizon: f64,
    mesh: &MeshSpec,
    fp: &FpOptions,
    h_t: f64,
    opts: &ResidualOptions,
) -> Result<(ResidualReport, Vec<MarginalLaw>)> {
    let k0 = ((opts.t_min / h_t).round() as usize).max(1) - 1;
    let k1 = (horizon / h_t).round() as usize;
    let times: Vec<f64> = (k0.max(1)..=k1).map(|k| k as f64 * h_t).collect();
    let laws = fokker_planck_evolve(model, &times, mesh, fp)?;
    Ok((inverse_cdf_pde_residual(&laws, model, opts)?, laws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use crate::numeric::norm_quantile;
    use std::collections::BTreeMap;

    #[test]
    fn gaussian_quantile_flow_is_a_solution() {
        // Exact bm_drift laws on a fine mesh: the residual is discretisation error only.
        let p: BTreeMap<String, f64> = [("b".to_string(), 0.2)].into();
        let m = builtin("bm_drift", &p).unwrap();
        let mesh = MeshSpec::new(-9.0, 9.0, 16385).unwrap();
        let ht = 1.0 / 256.0;
        let laws: Vec<MarginalLaw> =
            (63..=256).map(|k| MarginalLaw::gaussian(k as f64 * ht, mesh, 0.2 * k as f64 * ht, k as f64 * ht).unwrap()).collect();
        let r = inverse_cdf_pde_residual(&laws, &m, &ResidualOptions::for_horizon(1.0)).unwrap();
        assert!(r.max < 1e-3, "{r:?}");
        assert!(norm_quantile(0.5).abs() < 1e-15);
        assert!(inverse_cdf_pde_residual(&laws[..2], &m, &ResidualOptions::for_horizon(1.0)).is_err());
    }
}
