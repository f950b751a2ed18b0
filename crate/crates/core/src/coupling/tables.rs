use crate::density::{EulerKernel, FpOptions, MarginalLaw, MeshSpec, fokker_planck_evolve};
use crate::error::{Error, Result, invalid, numerical};
use crate::model::{DiffusionModel, ExactLaw};
use crate::numeric::{gaussian_density, hermite, hermite_derivative, limit_monotone_slopes, norm_pdf, norm_quantile};
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

/// Normal-score range covered by the quantile tables.
pub const Z_MAX: f64 = 6.5;
/// Node spacing in `z`.
pub const Z_STEP: f64 = 0.05;
pub const Z_NODES: usize = 261;
/// Spacing of the start lattice.
pub const START_SPACING: f64 = 0.02;
/// Mesh nodes of the per-start transition density.
const WINDOW_NODES: usize = 1201;

/// Normal score of the clipping level `1e-9`.
pub fn z_clip() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| -norm_quantile(1e-9))
}

/// Which transition law a map describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionKind {
    /// The diffusion over `duration`.
    Diffusion { duration: f64 },
    /// `steps` Euler steps of size `dt`.
    Euler { steps: usize, dt: f64 },
}

impl TransitionKind {
    pub fn duration(&self) -> f64 {
        match *self {
            TransitionKind::Diffusion { duration } => duration,
            TransitionKind::Euler { steps, dt } => steps as f64 * dt,
        }
    }
}

/// Quantile offsets `Q(Φ(z) | x) − x` and their `z`-derivatives at the z nodes.
#[derive(Debug, Clone)]
struct StartTable {
    values: Vec<f64>,
    slopes: Vec<f64>,
}

type Slot = Arc<OnceLock<std::result::Result<Arc<StartTable>, Error>>>;

struct TableSet {
    model: DiffusionModel,
    kind: TransitionKind,
    cache: RwLock<HashMap<i64, Slot>>,
}

enum Inner {
    Exact { law: ExactLaw, duration: f64 },
    /// `N(r·x + shift, sd²)`.
    Gaussian { r: f64, shift: f64, sd: f64 },
    Table(TableSet),
}

/// Conditional transition law `y ↦ z = Φ⁻¹(F(y | x))` and its inverse. Closed
/// forms are used when they exist; otherwise quantiles are tabulated lazily per
/// start on a lattice of spacing [`START_SPACING`], interpolated linearly in the
/// start and by monotone cubic Hermite in `z`.
pub struct TransitionMap {
    kind: TransitionKind,
    inner: Inner,
}

impl std::fmt::Debug for TransitionMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let form = match &self.inner {
            Inner::Exact { .. } => "exact",
            Inner::Gaussian { .. } => "gaussian",
            Inner::Table(_) => "table",
        };
        f.debug_struct("TransitionMap").field("kind", &self.kind).field("form", &form).finish()
    }
}

impl TransitionMap {
    pub fn new(model: &DiffusionModel, kind: TransitionKind) -> Result<Self> {
        let tau = kind.duration();
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(invalid("transition duration must be positive"));
        }
        let law = model.exact_law();
        let inner = match (kind, law) {
            (TransitionKind::Diffusion { duration }, Some(law)) => Inner::Exact { law, duration },
            (TransitionKind::Euler { .. }, Some(ExactLaw::BmDrift { b, sigma })) => {
                Inner::Gaussian { r: 1.0, shift: b * tau, sd: sigma * tau.sqrt() }
            }
            (TransitionKind::Euler { steps, dt }, Some(ExactLaw::Ou { kappa, sigma })) => {
                let r = 1.0 - kappa * dt;
                let mut var = 0.0;
                let mut pow = 1.0;
                for _ in 0..steps {
                    var += pow;
                    pow *= r * r;
                }
                Inner::Gaussian { r: r.powi(steps as i32), shift: 0.0, sd: (sigma * sigma * dt * var).sqrt() }
            }
            _ => {
                if !(model.ellipticity_floor() > 0.0) {
                    return Err(invalid(format!(
                        "model `{}` has neither a closed-form transition nor an ellipticity floor",
                        model.name()
                    )));
                }
                if let TransitionKind::Euler { steps, dt } = kind {
                    if steps == 0 || !(dt > 0.0) {
                        return Err(invalid("Euler transition needs steps ≥ 1 and dt > 0"));
                    }
                }
                Inner::Table(TableSet { model: model.clone(), kind, cache: RwLock::new(HashMap::new()) })
            }
        };
        Ok(Self { kind, inner })
    }

    pub fn kind(&self) -> TransitionKind {
        self.kind
    }

    /// Number of start tables built so far.
    pub fn table_count(&self) -> usize {
        match &self.inner {
            Inner::Table(t) => t.cache.read().unwrap().len(),
            _ => 0,
        }
    }

    /// Normal score of `y` under the law started at `x`, clamped to `±Z_MAX`.
    pub fn to_z(&self, x: f64, y: f64) -> Result<f64> {
        let z = match &self.inner {
            Inner::Exact { law, duration } => law.to_normal(*duration, x, y),
            Inner::Gaussian { r, shift, sd } => (y - (r * x + shift)) / sd,
            Inner::Table(t) => t.to_z(x, y)?,
        };
        if z.is_nan() {
            return Err(numerical(format!("normal score of {y} from {x} is NaN")));
        }
        Ok(z.clamp(-Z_MAX, Z_MAX))
    }

    /// Quantile at normal score `z` of the law started at `x`.
    pub fn from_z(&self, x: f64, z: f64) -> Result<f64> {
        Ok(match &self.inner {
            Inner::Exact { law, duration } => law.sample(*duration, x, z),
            Inner::Gaussian { r, shift, sd } => r * x + shift + sd * z,
            Inner::Table(t) => t.from_z(x, z)?,
        })
    }
}

impl TableSet {
    fn start(&self, i: i64) -> Result<Arc<StartTable>> {
        let slot = {
            let r = self.cache.read().unwrap();
            r.get(&i).cloned()
        };
        let slot = match slot {
            Some(s) => s,
            None => self.cache.write().unwrap().entry(i).or_default().clone(),
        };
        slot.get_or_init(|| build_table(&self.model, self.kind, i as f64 * START_SPACING).map(Arc::new)).clone()
    }

    fn pair(&self, x: f64) -> Result<(Arc<StartTable>, Arc<StartTable>, f64)> {
        let pos = x / START_SPACING;
        if !pos.is_finite() || pos.abs() > 1e15 {
            return Err(invalid(format!("start {x} outside the table lattice")));
        }
        let i = pos.floor();
        let w = pos - i;
        let i = i as i64;
        Ok((self.start(i)?, self.start(i + 1)?, w))
    }

    fn from_z(&self, x: f64, z: f64) -> Result<f64> {
        let (a, b, w) = self.pair(x)?;
        let pos = (z.clamp(-Z_MAX, Z_MAX) + Z_MAX) / Z_STEP;
        let j = (pos as usize).min(Z_NODES - 2);
        let s = pos - j as f64;
        let ha = hermite(a.values[j], a.values[j + 1], a.slopes[j], a.slopes[j + 1], Z_STEP, s);
        let hb = hermite(b.values[j], b.values[j + 1], b.slopes[j], b.slopes[j + 1], Z_STEP, s);
        Ok(x + (1.0 - w) * ha + w * hb)
    }

    fn to_z(&self, x: f64, y: f64) -> Result<f64> {
        let (a, b, w) = self.pair(x)?;
        let target = y - x;
        let val = |j: usize| (1.0 - w) * a.values[j] + w * b.values[j];
        let slope = |j: usize| (1.0 - w) * a.slopes[j] + w * b.slopes[j];
        if target <= val(0) {
            return Ok(-Z_MAX);
        }
        if target >= val(Z_NODES - 1) {
            return Ok(Z_MAX);
        }
        let (mut lo, mut hi) = (0usize, Z_NODES - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if val(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (y0, y1, d0, d1) = (val(lo), val(lo + 1), slope(lo), slope(lo + 1));
        let (mut sl, mut sh) = (0.0f64, 1.0f64);
        let mut s = if y1 > y0 { ((target - y0) / (y1 - y0)).clamp(0.0, 1.0) } else { 0.5 };
        for _ in 0..60 {
            let f = hermite(y0, y1, d0, d1, Z_STEP, s) - target;
            if f > 0.0 {
                sh = s;
            } else {
                sl = s;
            }
            let df = hermite_derivative(y0, y1, d0, d1, Z_STEP, s) * Z_STEP;
            let mut next = if df > 0.0 { s - f / df } else { f64::NAN };
            if !(next > sl && next < sh) {
                next = 0.5 * (sl + sh);
            }
            let done = (next - s).abs() <= 1e-15;
            s = next;
            if done {
                break;
            }
        }
        Ok(-Z_MAX + (lo as f64 + s) * Z_STEP)
    }
}

fn build_table(model: &DiffusionModel, kind: TransitionKind, x: f64) -> Result<StartTable> {
    if !model.in_domain(x) {
        return Err(invalid(format!("table start {x} outside the model domain")));
    }
    let tau = kind.duration();
    let (b0, _) = model.coefficients(x);
    let reach = 15.0 * (model.a(x) * tau).sqrt() + 2.0 * b0.abs() * tau;
    let (mut a_max, mut a_min, mut b_max) = (0.0f64, f64::INFINITY, 0.0f64);
    for k in 0..=200 {
        let y = x - reach + 2.0 * reach * k as f64 / 200.0;
        let a = model.a(y);
        a_max = a_max.max(a);
        a_min = a_min.min(a);
        b_max = b_max.max(model.drift(y).abs());
    }
    let half = 8.0 * (a_max * tau).sqrt() + b_max * tau;
    let center = x + b0 * tau;
    let (lo, hi) = (center - half, center + half);
    if !model.in_domain(lo) || !model.in_domain(hi) {
        return Err(invalid(format!("transition window [{lo}, {hi}] leaves the model domain")));
    }
    let law = match kind {
        TransitionKind::Diffusion { duration } => {
            let mesh = MeshSpec::new(lo, hi, WINDOW_NODES)?;
            let opts = FpOptions { dt: duration / 256.0, startup_steps: 4 };
            fokker_planck_evolve(&model.with_x0(x), &[duration], &mesh, &opts)?.pop().unwrap()
        }
        TransitionKind::Euler { steps, dt } => {
            // keep the one-step kernel at least 2.5 cells wide
            let need = (2.0 * half / ((a_min * dt).sqrt() / 2.5)).ceil() as usize + 1;
            let mesh = MeshSpec::new(lo, hi, WINDOW_NODES.max(need))?;
            let (b, s) = model.coefficients(x);
            let mut p: Vec<f64> = mesh.points().iter().map(|&y| gaussian_density(y, x + b * dt, s * s * dt)).collect();
            if steps > 1 {
                let kernel = EulerKernel::new(model, &mesh, dt)?;
                let mut next = Vec::new();
                for _ in 1..steps {
                    kernel.apply(&p, &mut next);
                    std::mem::swap(&mut p, &mut next);
                }
            }
            MarginalLaw::from_density(tau, mesh, p)?
        }
    };
    let mut values = Vec::with_capacity(Z_NODES);
    let mut slopes = Vec::with_capacity(Z_NODES);
    for j in 0..Z_NODES {
        let z = -Z_MAX + j as f64 * Z_STEP;
        let u = crate::numeric::norm_cdf(z);
        let q = law.quantile_unchecked(u);
        values.push(q - x);
        let p = law.pdf(q);
        slopes.push(if p > 0.0 { norm_pdf(z) / p } else { f64::NAN });
    }
    if values.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(numerical(format!("non-monotone transition quantiles from {x}")));
    }
    // unusable derivatives fall back to centred differences
    for j in 0..Z_NODES {
        if !slopes[j].is_finite() {
            let (l, r) = (j.saturating_sub(1), (j + 1).min(Z_NODES - 1));
            slopes[j] = (values[r] - values[l]) / ((r - l) as f64 * Z_STEP);
        }
    }
    limit_monotone_slopes(&values, Z_STEP, &mut slopes);
    Ok(StartTable { values, slopes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use std::collections::BTreeMap;

    #[test]
    fn closed_forms_round_trip() {
        let m = builtin("bm_drift", &BTreeMap::new()).unwrap();
        let d = TransitionMap::new(&m, TransitionKind::Diffusion { duration: 0.25 }).unwrap();
        let e = TransitionMap::new(&m, TransitionKind::Euler { steps: 8, dt: 0.25 / 8.0 }).unwrap();
        for &(x, y) in &[(0.0, 0.3), (1.2, 0.4), (-2.0, -2.5)] {
            let z = d.to_z(x, y).unwrap();
            assert!((e.from_z(x, z).unwrap() - y).abs() < 1e-13);
        }
        let ou = builtin("ou", &BTreeMap::new()).unwrap();
        let e = TransitionMap::new(&ou, TransitionKind::Euler { steps: 3, dt: 0.1 }).unwrap();
        let z = e.to_z(0.7, 1.1).unwrap();
        assert!((e.from_z(0.7, z).unwrap() - 1.1).abs() < 1e-13);
    }

    #[test]
    fn tables_invert_and_match_gaussian_limit() {
        let m = builtin("sin_elliptic", &BTreeMap::new()).unwrap();
        let tau = 1.0 / 16.0;
        let d = TransitionMap::new(&m, TransitionKind::Diffusion { duration: tau }).unwrap();
        let e = TransitionMap::new(&m, TransitionKind::Euler { steps: 1, dt: tau }).unwrap();
        for &x in &[0.0, 0.013, -1.37, 2.5] {
            for &z in &[-5.0, -1.0, 0.0, 0.4, 3.0] {
                let y = d.from_z(x, z).unwrap();
                assert!((d.to_z(x, y).unwrap() - z).abs() < 1e-9, "x={x} z={z}");
                // one Euler step is exactly Gaussian; linear interpolation across
                // starts costs (0.02)²/8·|∂²_x offset| ≲ 3.2e-5 at |z| = 5
                let (b, s) = m.coefficients(x);
                let err = e.from_z(x, z).unwrap() - (x + b * tau + s * tau.sqrt() * z);
                assert!(err.abs() < 4e-5, "x={x} z={z} err={err}");
            }
        }
        assert_eq!(d.table_count(), 6);
        // monotone in z
        let ys: Vec<f64> = (0..200).map(|k| d.from_z(0.31, -6.0 + 0.06 * k as f64).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
        assert!(d.to_z(0.0, 100.0).unwrap() == Z_MAX);
    }

    #[test]
    fn degenerate_models_are_rejected() {
        let m = builtin("gbm", &BTreeMap::new()).unwrap();
        assert!(TransitionMap::new(&m, TransitionKind::Euler { steps: 4, dt: 0.01 }).is_err());
        assert!(TransitionMap::new(&m, TransitionKind::Diffusion { duration: 0.1 }).is_ok());
        assert!((z_clip() - 5.997807015).abs() < 1e-8);
    }
}
