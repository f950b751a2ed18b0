use crate::error::{Result, invalid, numerical};
use crate::model::LampertiModel;
use crate::numeric::{gauss_hermite, gauss_legendre};
use crate::rng::{Purpose, StreamKey};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// Drift `α` of a unit-diffusion process with its first two derivatives.
pub trait AlphaBundle: Send + Sync {
    /// `(α, α′, α″)` at `z`.
    fn derivs(&self, z: f64) -> (f64, f64, f64);

    /// True when `α′ ≡ α″ ≡ 0`.
    fn is_constant(&self) -> bool {
        false
    }

    /// `(V, V′)` with `V = α′ + α²`.
    #[inline]
    fn potential(&self, z: f64) -> (f64, f64) {
        let (a, a1, a2) = self.derivs(z);
        (a1 + a * a, a2 + 2.0 * a * a1)
    }
}

impl AlphaBundle for LampertiModel {
    fn derivs(&self, z: f64) -> (f64, f64, f64) {
        let x = self.phi_inverse(z);
        self.alpha_derivatives_at_x(x).unwrap_or((f64::NAN, f64::NAN, f64::NAN))
    }

    fn is_constant(&self) -> bool {
        self.alpha_is_constant()
    }
}

/// Closed-form `α` given as a closure, for tests and custom reductions.
pub struct AlphaFn<F: Fn(f64) -> (f64, f64, f64) + Send + Sync> {
    pub f: F,
    pub constant: bool,
}

impl<F: Fn(f64) -> (f64, f64, f64) + Send + Sync> AlphaBundle for AlphaFn<F> {
    fn derivs(&self, z: f64) -> (f64, f64, f64) {
        (self.f)(z)
    }

    fn is_constant(&self) -> bool {
        self.constant
    }
}

/// `α`, `V` and `V′` tabulated on a uniform `z`-grid (cubic interpolation with
/// central-difference slopes), falling back to the exact bundle off the table.
pub struct AlphaTable {
    exact: Arc<LampertiModel>,
    z0: f64,
    h: f64,
    alpha: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
}

impl AlphaTable {
    pub fn new(exact: Arc<LampertiModel>, h: f64) -> Self {
        let (lo, hi) = exact.table_range();
        let n = ((hi - lo) / h).floor() as usize + 1;
        let mut alpha = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut dv = Vec::with_capacity(n);
        for i in 0..n {
            let (a, a1, a2) = exact.derivs(lo + i as f64 * h);
            alpha.push(a);
            v.push(a1 + a * a);
            dv.push(a2 + 2.0 * a * a1);
        }
        Self { exact, z0: lo, h, alpha, v, dv }
    }

    pub fn lamperti(&self) -> &LampertiModel {
        &self.exact
    }

    #[inline]
    fn interp(y: &[f64], i: usize, s: f64) -> f64 {
        // Catmull–Rom on y[i-1..=i+2]
        let (p0, p1, p2, p3) = (y[i - 1], y[i], y[i + 1], y[i + 2]);
        let s2 = s * s;
        let s3 = s2 * s;
        0.5 * (2.0 * p1 + (p2 - p0) * s + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s2 + (3.0 * (p1 - p2) + p3 - p0) * s3)
    }

    #[inline]
    fn locate(&self, z: f64) -> Option<(usize, f64)> {
        let pos = (z - self.z0) / self.h;
        if pos >= 1.0 && pos < (self.v.len() - 2) as f64 {
            let i = pos as usize;
            Some((i, pos - i as f64))
        } else {
            None
        }
    }

    #[inline]
    pub fn alpha(&self, z: f64) -> f64 {
        match self.locate(z) {
            Some((i, s)) => Self::interp(&self.alpha, i, s),
            None => self.exact.derivs(z).0,
        }
    }
}

impl AlphaBundle for AlphaTable {
    fn derivs(&self, z: f64) -> (f64, f64, f64) {
        self.exact.derivs(z)
    }

    fn is_constant(&self) -> bool {
        self.exact.alpha_is_constant()
    }

    #[inline]
    fn potential(&self, z: f64) -> (f64, f64) {
        match self.locate(z) {
            Some((i, s)) => (Self::interp(&self.v, i, s), Self::interp(&self.dv, i, s)),
            None => self.exact.potential(z),
        }
    }
}

/// Monte Carlo estimate of `g_t(x̂, ŷ)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// `g_t(x̂, ŷ) = −½ E[e^{−½∫V(B)} ∫((t−s)/t)V′(B)ds] / E[e^{−½∫V(B)}]` over
/// Brownian bridges `B` from `x̂` to `ŷ` on `[0, t]`, estimated with `mg`
/// bridges sampled exactly on `steps` points (trapezoid rule in time).
/// `stream` selects the random stream within `seed`.
pub fn g_estimate(
    alpha: &dyn AlphaBundle,
    t: f64,
    xh: f64,
    yh: f64,
    mg: usize,
    steps: usize,
    seed: u64,
    stream: u64,
) -> Result<GEstimate> {
    if !(t > 0.0) {
        return Err(invalid("g needs t > 0"));
    }
    if mg < 2 || steps < 1 {
        return Err(invalid("g needs at least two bridges and one step"));
    }
    if alpha.is_constant() {
        return Ok(GEstimate { value: 0.0, std_error: 0.0 });
    }
    let key = StreamKey::new(seed, Purpose::InnerBridge);
    let dt = t / steps as f64;
    let mut logw = Vec::with_capacity(mg);
    let mut i2s = Vec::with_capacity(mg);
    for j in 0..mg {
        let mut c = key.cursor(stream, j as u64, 0);
        let mut b = xh;
        let (v0, d0) = alpha.potential(b);
        let mut i1 = 0.5 * v0;
        let mut i2 = 0.5 * d0;
        for k in 0..steps {
            let left = (steps - k) as f64;
            if k + 1 == steps {
                b = yh;
            } else {
                b += (yh - b) / left + (dt * (left - 1.0) / left).sqrt() * c.normal();
            }
            let (v, d) = alpha.potential(b);
            let wgt = if k + 1 == steps { 0.5 } else { 1.0 };
            let tw = (steps - k - 1) as f64 / steps as f64;
            i1 += wgt * v;
            i2 += wgt * d * tw;
        }
        logw.push(-0.5 * i1 * dt);
        i2s.push(i2 * dt);
    }
    let shift = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(numerical("non-finite bridge weight"));
    }
    let m = mg as f64;
    let w: Vec<f64> = logw.iter().map(|l| (l - shift).exp()).collect();
    let den = w.iter().sum::<f64>() / m;
    let num = w.iter().zip(&i2s).map(|(a, b)| a * b).sum::<f64>() / m;
    let r = num / den;
    let var_den = w.iter().map(|a| (a - den).powi(2)).sum::<f64>() / (m - 1.0);
    if den < 5.0 * (var_den / m).sqrt() {
        return Err(numerical("g denominator within 5 standard errors of zero; increase M_g"));
    }
    let var_lin = w.iter().zip(&i2s).map(|(a, b)| (a * b - r * a).powi(2)).sum::<f64>() / (m - 1.0);
    let se_r = (var_lin / m).sqrt() / den;
    Ok(GEstimate { value: -0.5 * r, std_error: 0.5 * se_r })
}

/// Deterministic `g` by a truncated Karhunen–Loève expansion of the bridge
/// (Gauss–Hermite in the leading modes, Gauss–Legendre in time).
#[derive(Debug, Clone)]
pub struct GQuadrature {
    /// `(s/t, weight/t)` time nodes on `[0, 1]`.
    time: Vec<(f64, f64)>,
    /// Per mode combination: product weight and `Σ_k ξ_k √2/(kπ) sin(kπ s_j/t)` per time node.
    combos: Vec<(f64, Vec<f64>)>,
}

impl GQuadrature {
    pub fn new(modes: usize, hermite_points: usize, time_points: usize) -> Self {
        let time: Vec<(f64, f64)> =
            gauss_legendre(time_points).into_iter().map(|(x, w)| (0.5 * (1.0 + x), 0.5 * w)).collect();
        let gh: Vec<(f64, f64)> = gauss_hermite(hermite_points)
            .into_iter()
            .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w / std::f64::consts::PI.sqrt()))
            .collect();
        let mut combos = Vec::new();
        let total = gh.len().pow(modes as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut weight = 1.0;
            let mut shape = vec![0.0; time.len()];
            for k in 1..=modes {
                let (xi, w) = gh[rem % gh.len()];
                rem /= gh.len();
                weight *= w;
                let kpi = k as f64 * std::f64::consts::PI;
                for (j, &(s, _)) in time.iter().enumerate() {
                    shape[j] += xi * std::f64::consts::SQRT_2 / kpi * (kpi * s).sin();
                }
            }
            combos.push((weight, shape));
        }
        Self { time, combos }
    }

    pub fn eval(&self, alpha: &dyn AlphaBundle, t: f64, xh: f64, yh: f64) -> f64 {
        if alpha.is_constant() || t <= 0.0 {
            return 0.0;
        }
        let st = t.sqrt();
        let mut lw = Vec::with_capacity(self.combos.len());
        let mut i2s = Vec::with_capacity(self.combos.len());
        for (_, shape) in &self.combos {
            let mut i1 = 0.0;
            let mut i2 = 0.0;
            for (j, &(s, w)) in self.time.iter().enumerate() {
                let b = xh + (yh - xh) * s + st * shape[j];
                let (v, d) = alpha.potential(b);
                i1 += w * v;
                i2 += w * d * (1.0 - s);
            }
            lw.push(-0.5 * i1 * t);
            i2s.push(i2 * t);
        }
        let shift = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (c, (l, i2)) in self.combos.iter().zip(lw.iter().zip(&i2s)) {
            let w = c.0 * (l - shift).exp();
            num += w * i2;
            den += w;
        }
        -0.5 * num / den
    }
}

/// Node values of `g` on the lattice `(i_t·Δt, i_x·Δz, i_y·Δz)`.
pub trait GNodeSource: Send + Sync {
    fn node(&self, t: f64, xh: f64, yh: f64, key: (i64, i64, i64)) -> Result<f64>;
}

const BT: i64 = 4;
const BX: i64 = 8;

struct Block {
    values: Vec<f64>,
}

/// Lazily filled lattice of `g` values with trilinear interpolation.
/// Blocks are computed outside the lock; a racing duplicate computes the same
/// values, and the first insert wins.
pub struct GCache {
    source: Box<dyn GNodeSource>,
    dt: f64,
    dz: f64,
    blocks: RwLock<HashMap<(i64, i64, i64), Arc<Block>>>,
}

impl GCache {
    pub fn new(source: Box<dyn GNodeSource>, dt: f64, dz: f64) -> Self {
        Self { source, dt, dz, blocks: RwLock::new(HashMap::new()) }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.read().map(|b| b.len()).unwrap_or(0)
    }

    fn block(&self, key: (i64, i64, i64)) -> Result<Arc<Block>> {
        if let Some(b) = self.blocks.read().expect("g cache lock").get(&key) {
            return Ok(b.clone());
        }
        let mut values = Vec::with_capacity(((BT + 1) * (BX + 1) * (BX + 1)) as usize);
        for it in 0..=BT {
            for ix in 0..=BX {
                for iy in 0..=BX {
                    let (gt, gx, gy) = (key.0 * BT + it, key.1 * BX + ix, key.2 * BX + iy);
                    let v = if gt <= 0 {
                        0.0
                    } else {
                        self.source.node(gt as f64 * self.dt, gx as f64 * self.dz, gy as f64 * self.dz, (gt, gx, gy))?
                    };
                    values.push(v);
                }
            }
        }
        let b = Arc::new(Block { values });
        let mut w = self.blocks.write().expect("g cache lock");
        Ok(w.entry(key).or_insert(b).clone())
    }

    pub fn get(&self, t: f64, xh: f64, yh: f64) -> Result<f64> {
        let pt = t / self.dt;
        let px = xh / self.dz;
        let py = yh / self.dz;
        if !(pt >= 0.0) || !px.is_finite() || !py.is_finite() {
            return Err(invalid("g lattice query outside range"));
        }
        let (ft, fx, fy) = (pt.floor(), px.floor(), py.floor());
        let (it, ix, iy) = (ft as i64, fx as i64, fy as i64);
        let (st, sx, sy) = (pt - ft, px - fx, py - fy);
        let key = (it.div_euclid(BT), ix.div_euclid(BX), iy.div_euclid(BX));
        let b = self.block(key)?;
        let (lt, lx, ly) = (it.rem_euclid(BT), ix.rem_euclid(BX), iy.rem_euclid(BX));
        let idx = |a: i64, c: i64, d: i64| ((a * (BX + 1) + c) * (BX + 1) + d) as usize;
        let mut acc = 0.0;
        for (da, wa) in [(0, 1.0 - st), (1, st)] {
            for (dc, wc) in [(0, 1.0 - sx), (1, sx)] {
                for (dd, wd) in [(0, 1.0 - sy), (1, sy)] {
                    let w = wa * wc * wd;
                    if w != 0.0 {
                        acc += w * b.values[idx(lt + da, lx + dc, ly + dd)];
                    }
                }
            }
        }
        Ok(acc)
    }
}
