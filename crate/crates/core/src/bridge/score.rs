use super::g::{AlphaBundle, AlphaTable, GCache, GNodeSource, GQuadrature, g_estimate};
use crate::error::{Result, invalid};
use crate::model::{DiffusionModel, ExactLaw, LampertiModel, LampertiOptions, lamperti};
use std::str::FromStr;
use std::sync::Arc;

/// How `∂_x log p_t(x, y)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ScoreMode {
    /// Closed-form transition law (bm_drift, ou, gbm).
    ClosedForm,
    /// Lamperti reduction with Monte Carlo `g`.
    LampertiMc,
    /// Lamperti reduction with deterministic quadrature `g` on a cached lattice.
    LampertiQuad,
}

impl FromStr for ScoreMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" => Ok(ScoreMode::ClosedForm),
            "lamperti_mc" => Ok(ScoreMode::LampertiMc),
            "lamperti_quad" => Ok(ScoreMode::LampertiQuad),
            _ => Err(invalid(format!("unknown score mode `{s}`"))),
        }
    }
}

impl ScoreMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreMode::ClosedForm => "closed_form",
            ScoreMode::LampertiMc => "lamperti_mc",
            ScoreMode::LampertiQuad => "lamperti_quad",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScoreOptions {
    pub mode: ScoreMode,
    /// Horizon the Lamperti table and `g` lattice must cover.
    pub horizon: f64,
    /// Inner bridges per Monte Carlo `g` estimate.
    pub mg: usize,
    /// Inner-bridge time step `h_g`; bridges use `max(32, ⌈t/h_g⌉)` steps.
    pub inner_step: f64,
    /// Lattice time steps per horizon for the `g` cache; 0 disables the cache.
    pub cache_steps: usize,
    pub cache_dz: f64,
    pub seed: u64,
}

impl ScoreOptions {
    pub fn new(mode: ScoreMode, horizon: f64) -> Self {
        Self {
            mode,
            horizon,
            mg: 4096,
            inner_step: horizon / 64.0,
            cache_steps: if mode == ScoreMode::LampertiQuad { 256 } else { 0 },
            cache_dz: 0.05,
            seed: 0x5eed,
        }
    }
}

struct McSource {
    alpha: Arc<AlphaTable>,
    mg: usize,
    inner_step: f64,
    seed: u64,
}

fn lattice_stream(key: (i64, i64, i64)) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for v in [key.0, key.1, key.2] {
        h ^= v as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl GNodeSource for McSource {
    fn node(&self, t: f64, xh: f64, yh: f64, key: (i64, i64, i64)) -> Result<f64> {
        let steps = (t / self.inner_step).ceil().max(32.0) as usize;
        Ok(g_estimate(&*self.alpha, t, xh, yh, self.mg, steps, self.seed, lattice_stream(key))?.value)
    }
}

struct QuadSource {
    alpha: Arc<AlphaTable>,
    quad: GQuadrature,
}

impl GNodeSource for QuadSource {
    fn node(&self, t: f64, xh: f64, yh: f64, _: (i64, i64, i64)) -> Result<f64> {
        Ok(self.quad.eval(&*self.alpha, t, xh, yh))
    }
}

enum Engine {
    Exact(ExactLaw),
    Lamperti { alpha: Arc<AlphaTable>, cache: Option<GCache>, quad: Option<GQuadrature> },
}

/// Evaluator of the transition score `∂_x log p_t(x, y)`.
pub struct BridgeScore {
    model: DiffusionModel,
    opts: ScoreOptions,
    engine: Engine,
}

impl std::fmt::Debug for BridgeScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeScore").field("model", &self.model.name()).field("opts", &self.opts).finish()
    }
}

/// Score value with its Monte Carlo standard error (0 for deterministic modes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreValue {
    pub value: f64,
    pub std_error: f64,
}

impl BridgeScore {
    pub fn new(model: &DiffusionModel, opts: ScoreOptions) -> Result<Self> {
        let engine = match opts.mode {
            ScoreMode::ClosedForm => Engine::Exact(
                model
                    .exact_law()
                    .ok_or_else(|| invalid(format!("{} has no closed-form score", model.name())))?,
            ),
            ScoreMode::LampertiMc | ScoreMode::LampertiQuad => {
                let lm = lamperti(model, &LampertiOptions::for_model(model, opts.horizon))?;
                let alpha = Arc::new(AlphaTable::new(Arc::new(lm), 1.0 / 128.0));
                let quad = (opts.mode == ScoreMode::LampertiQuad).then(|| GQuadrature::new(3, 4, 12));
                let cache = if opts.cache_steps > 0 && !alpha.is_constant() {
                    let dt = opts.horizon / opts.cache_steps as f64;
                    let source: Box<dyn GNodeSource> = match opts.mode {
                        ScoreMode::LampertiQuad => {
                            Box::new(QuadSource { alpha: alpha.clone(), quad: GQuadrature::new(3, 4, 12) })
                        }
                        _ => Box::new(McSource {
                            alpha: alpha.clone(),
                            mg: opts.mg,
                            inner_step: opts.inner_step,
                            seed: opts.seed,
                        }),
                    };
                    Some(GCache::new(source, dt, opts.cache_dz))
                } else {
                    None
                };
                Engine::Lamperti { alpha, cache, quad }
            }
        };
        Ok(Self { model: model.clone(), opts, engine })
    }

    /// Closed form when available, deterministic quadrature otherwise.
    pub fn auto(model: &DiffusionModel, horizon: f64) -> Result<Self> {
        let mode = if model.exact_law().is_some() { ScoreMode::ClosedForm } else { ScoreMode::LampertiQuad };
        Self::new(model, ScoreOptions::new(mode, horizon))
    }

    pub fn mode(&self) -> ScoreMode {
        self.opts.mode
    }

    pub fn options(&self) -> &ScoreOptions {
        &self.opts
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn lamperti(&self) -> Option<&LampertiModel> {
        match &self.engine {
            Engine::Lamperti { alpha, .. } => Some(alpha.lamperti()),
            Engine::Exact(_) => None,
        }
    }

    /// `∂_x log p_t(x, y)`.
    #[inline]
    pub fn score(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        Ok(self.score_with_error(t, x, y)?.value)
    }

    pub fn score_with_error(&self, t: f64, x: f64, y: f64) -> Result<ScoreValue> {
        if !(t > 0.0) {
            return Err(invalid("score needs remaining time > 0"));
        }
        match &self.engine {
            Engine::Exact(law) => Ok(ScoreValue { value: law.score(t, x, y), std_error: 0.0 }),
            Engine::Lamperti { alpha, cache, quad } => {
                let lm = alpha.lamperti();
                let (xh, yh) = (lm.phi(x), lm.phi(y));
                if !xh.is_finite() || !yh.is_finite() {
                    return Err(invalid(format!("score arguments ({x}, {y}) outside the model domain")));
                }
                let (g, se) = if alpha.is_constant() {
                    (0.0, 0.0)
                } else if let Some(c) = cache {
                    (c.get(t, xh, yh)?, 0.0)
                } else if let Some(q) = quad {
                    (q.eval(&**alpha, t, xh, yh), 0.0)
                } else {
                    let steps = (t / self.opts.inner_step).ceil().max(32.0) as usize;
                    let stream = (t.to_bits() ^ xh.to_bits().rotate_left(21) ^ yh.to_bits().rotate_left(42)) >> 1;
                    let e = g_estimate(&**alpha, t, xh, yh, self.opts.mg, steps, self.opts.seed, stream)?;
                    (e.value, e.std_error)
                };
                let s = self.model.diffusion(x);
                let hat = (yh - xh) / t - alpha.alpha(xh) + g;
                Ok(ScoreValue { value: hat / s, std_error: se / s })
            }
        }
    }
}

/// Closed-form score of a model with an exact law.
pub fn score(model: &DiffusionModel, t_remaining: f64, x: f64, y: f64) -> Result<f64> {
    if !(t_remaining > 0.0) {
        return Err(invalid("score needs remaining time > 0"));
    }
    let law = model.exact_law().ok_or_else(|| invalid(format!("{} has no closed-form score", model.name())))?;
    Ok(law.score(t_remaining, x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use std::collections::BTreeMap;

    fn model(name: &str, kv: &[(&str, f64)]) -> DiffusionModel {
        builtin(name, &kv.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>()).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let bm = model("bm_drift", &[]);
        assert_eq!(score(&bm, 1.0, 0.0, 2.0).unwrap(), 2.0);
        let ou = model("ou", &[]);
        assert!((score(&ou, 2f64.ln(), 0.0, 1.0).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!(score(&bm, 0.0, 0.0, 1.0).is_err());
        assert!(score(&model("sin_elliptic", &[]), 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn lamperti_bm_matches_closed_form_exactly() {
        let bm = model("bm_drift", &[("b", 0.3)]);
        let s = BridgeScore::new(&bm, ScoreOptions::new(ScoreMode::LampertiMc, 1.0)).unwrap();
        let v = s.score_with_error(0.4, 0.2, -0.5).unwrap();
        assert_eq!(v.std_error, 0.0);
        assert!((v.value - score(&bm, 0.4, 0.2, -0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn lamperti_gbm_matches_closed_form() {
        let g = model("gbm", &[]);
        let s = BridgeScore::new(&g, ScoreOptions::new(ScoreMode::LampertiQuad, 1.0)).unwrap();
        for &(t, x, y) in &[(0.3, 1.0, 1.2), (1.0, 0.7, 0.5)] {
            assert!((s.score(t, x, y).unwrap() - score(&g, t, x, y).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_score_close_to_closed_form_for_ou() {
        let ou = model("ou", &[]);
        let s = BridgeScore::new(&ou, ScoreOptions::new(ScoreMode::LampertiQuad, 1.0)).unwrap();
        for &(t, x, y) in &[(0.1, 0.5, 0.6), (0.5, 1.0, 0.2), (1.0, -0.5, 0.8)] {
            let exact = score(&ou, t, x, y).unwrap();
            assert!((s.score(t, x, y).unwrap() - exact).abs() < 2e-2 * (1.0 + exact.abs()));
        }
    }
}
