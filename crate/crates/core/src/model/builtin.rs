use super::{Domain, DiffusionModel, Kind};
use crate::error::{Error, Result, invalid};
use std::collections::BTreeMap;

pub fn builtin_names() -> &'static [&'static str] {
    &["bm_drift", "ou", "gbm", "sin_elliptic"]
}

fn take(params: &BTreeMap<String, f64>, allowed: &[&str], name: &str) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(invalid(format!("model `{name}` has no parameter `{k}`")));
        }
    }
    for (k, v) in params {
        if !v.is_finite() {
            return Err(invalid(format!("parameter `{k}` must be finite")));
        }
    }
    Ok(())
}

fn positive(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(format!("{what} must be positive, got {v}")))
    }
}

/// Instantiates one of the builtin models.
///
/// | name | parameters (defaults) |
/// |------|-----------------------|
/// | `bm_drift` | `b` (0), `sigma` (1), `x0` (0) |
/// | `ou` | `kappa` (1), `sigma` (1), `x0` (1) |
/// | `gbm` | `mu` (0.05), `sigma` (0.3), `x0` (1) |
/// | `sin_elliptic` | `x0` (0); `a = 1 + sin(x)/2`, `b = 0.3 cos(x)` |
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<DiffusionModel> {
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    match name {
        "bm_drift" => {
            take(params, &["b", "sigma", "x0"], name)?;
            let sigma = positive(get("sigma", 1.0), "sigma")?;
            let kind = Kind::BmDrift { b: get("b", 0.0), sigma };
            Ok(DiffusionModel::from_kind(name, kind, get("x0", 0.0), Domain::REAL, sigma * sigma))
        }
        "ou" => {
            take(params, &["kappa", "sigma", "x0"], name)?;
            let sigma = positive(get("sigma", 1.0), "sigma")?;
            let kappa = get("kappa", 1.0);
            if kappa < 0.0 {
                return Err(invalid("kappa must be nonnegative"));
            }
            let kind = Kind::Ou { kappa, sigma };
            Ok(DiffusionModel::from_kind(name, kind, get("x0", 1.0), Domain::REAL, sigma * sigma))
        }
        "gbm" => {
            take(params, &["mu", "sigma", "x0"], name)?;
            let sigma = positive(get("sigma", 0.3), "sigma")?;
            let x0 = positive(get("x0", 1.0), "x0")?;
            let kind = Kind::Gbm { mu: get("mu", 0.05), sigma };
            Ok(DiffusionModel::from_kind(name, kind, x0, Domain::POSITIVE, 0.0))
        }
        "sin_elliptic" => {
            take(params, &["x0"], name)?;
            Ok(DiffusionModel::from_kind(name, Kind::SinElliptic, get("x0", 0.0), Domain::REAL, 0.5))
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn errors() {
        assert_eq!(builtin("cir", &p(&[])).unwrap_err(), Error::UnknownModel("cir".into()));
        assert!(builtin("ou", &p(&[("sigma", 0.0)])).is_err());
        assert!(builtin("gbm", &p(&[("sigma", -1.0)])).is_err());
        assert!(builtin("bm_drift", &p(&[("kappa", 1.0)])).is_err());
    }

    #[test]
    fn bm_drift_is_constant() {
        let m = builtin("bm_drift", &p(&[("b", 0.1)])).unwrap();
        assert_eq!(m.diffusion(3.0), 1.0);
        assert_eq!(m.drift(-2.0), 0.1);
        assert_eq!(m.ellipticity_floor(), 1.0);
        assert!(m.is_constant());
        assert!(m.exact_law().is_some());
    }

    #[test]
    fn exact_laws_present() {
        assert!(builtin("gbm", &p(&[])).unwrap().exact_law().is_some());
        assert!(builtin("ou", &p(&[])).unwrap().exact_law().is_some());
        assert!(builtin("sin_elliptic", &p(&[])).unwrap().exact_law().is_none());
    }
}
