use super::{GridSpec, PathBundle};
use crate::error::{Error, Result, invalid};
use crate::model::DiffusionModel;

/// Euler values `X̄_0..X̄_N` into `out`; stops with [`Error::DomainExit`] when a
/// value leaves the model domain.
pub fn euler_values(model: &DiffusionModel, x0: f64, dt: f64, increments: &[f64], out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    out.reserve(increments.len() + 1);
    out.push(x0);
    let bounded = model.domain().lo.is_finite() || model.domain().hi.is_finite();
    let mut x = x0;
    for (k, &dw) in increments.iter().enumerate() {
        let (b, s) = model.coefficients(x);
        x = x + s * dw + b * dt;
        if (bounded && !model.in_domain(x)) || !x.is_finite() {
            return Err(Error::DomainExit { step: k + 1, value: x });
        }
        out.push(x);
    }
    Ok(())
}

/// Euler path on `grid` from the model's `x0`.
pub fn euler_path(model: &DiffusionModel, grid: &GridSpec, increments: &[f64]) -> Result<PathBundle> {
    if increments.len() != grid.steps {
        return Err(invalid(format!("expected {} increments, got {}", grid.steps, increments.len())));
    }
    let mut values = Vec::new();
    euler_values(model, model.x0(), grid.dt(), increments, &mut values)?;
    Ok(PathBundle { grid: *grid, values, increments: increments.to_vec(), lineage: None })
}

/// Continuous Euler interpolation inside step `k`: `X̄_{t_k} + σ(X̄_{t_k})(W_t − W_{t_k}) + b(X̄_{t_k})(t − t_k)`.
#[inline]
pub fn euler_interpolate(model: &DiffusionModel, x_left: f64, dw_partial: f64, tau: f64) -> f64 {
    let (b, s) = model.coefficients(x_left);
    x_left + s * dw_partial + b * tau
}

/// `L` independent Euler paths advanced in lockstep, recording every `stride`-th
/// value. Interleaving hides the latency of the coefficient evaluation.
/// Each `out[i]` must hold `incs[i].len() / stride + 1` values.
pub fn euler_values_lanes<const L: usize>(
    model: &DiffusionModel,
    x0: f64,
    dt: f64,
    incs: [&[f64]; L],
    stride: usize,
    out: [&mut [f64]; L],
) -> Result<()> {
    let n = incs[0].len();
    if stride == 0 || n % stride != 0 || incs.iter().any(|v| v.len() != n) || out.iter().any(|o| o.len() != n / stride + 1) {
        return Err(invalid("lane lengths disagree"));
    }
    let bounded = model.domain().lo.is_finite() || model.domain().hi.is_finite();
    let mut out = out;
    let mut x = [x0; L];
    for o in out.iter_mut() {
        o[0] = x0;
    }
    for k in 0..n {
        for i in 0..L {
            let (b, s) = model.coefficients(x[i]);
            x[i] = x[i] + s * incs[i][k] + b * dt;
        }
        if (k + 1) % stride == 0 {
            for i in 0..L {
                if (bounded && !model.in_domain(x[i])) || !x[i].is_finite() {
                    return Err(Error::DomainExit { step: k + 1, value: x[i] });
                }
                out[i][(k + 1) / stride] = x[i];
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CustomCoefficients, Domain, builtin};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    #[test]
    fn one_step_examples() {
        let bm = builtin("bm_drift", &BTreeMap::new()).unwrap();
        let g = GridSpec::new(1.0, 1, 1).unwrap();
        assert_eq!(euler_path(&bm, &g, &[0.7]).unwrap().values, vec![0.0, 0.7]);

        let lin = DiffusionModel::custom(
            "lin",
            CustomCoefficients { drift: vec![Arc::new(|x| 0.1 * x)], diffusion: vec![Arc::new(|x| 0.2 * x)] },
            1.0,
            Domain::REAL,
            0.0,
        )
        .unwrap();
        let g = GridSpec::new(0.5, 1, 1).unwrap();
        let v = euler_path(&lin, &g, &[0.3]).unwrap().values;
        assert!((v[1] - 1.11).abs() < 1e-15);
    }

    #[test]
    fn constant_coefficients_match_closed_form() {
        let p: BTreeMap<String, f64> = [("b".to_string(), 0.25), ("sigma".to_string(), 2.0)].into();
        let m = builtin("bm_drift", &p).unwrap();
        let g = GridSpec::new(1.0, 16, 1).unwrap();
        let incs = crate::simulate::brownian_increments(4, 1, 1.0, 16, 0).unwrap();
        let v = euler_path(&m, &g, &incs).unwrap().values;
        let mut w = 0.0;
        for k in 0..16 {
            w += incs[k];
            assert!((v[k + 1] - (0.25 * g.time(k + 1) + 2.0 * w)).abs() < 1e-13);
        }
    }

    #[test]
    fn gbm_exit_reported() {
        let m = builtin("gbm", &BTreeMap::new()).unwrap();
        let g = GridSpec::new(1.0, 2, 1).unwrap();
        match euler_path(&m, &g, &[0.1, -5.0]) {
            Err(Error::DomainExit { step, .. }) => assert_eq!(step, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lanes_match_scalar() {
        let m = builtin("sin_elliptic", &BTreeMap::new()).unwrap();
        let a = crate::simulate::brownian_increments(1, 0, 1.0, 64, 0).unwrap();
        let b = crate::simulate::brownian_increments(1, 1, 1.0, 64, 0).unwrap();
        let (mut oa, mut ob) = (vec![0.0; 9], vec![0.0; 9]);
        euler_values_lanes(&m, 0.0, 1.0 / 64.0, [&a, &b], 8, [&mut oa, &mut ob]).unwrap();
        let mut s = Vec::new();
        euler_values(&m, 0.0, 1.0 / 64.0, &b, &mut s).unwrap();
        for j in 0..9 {
            assert_eq!(ob[j], s[8 * j]);
        }
    }
}
