use crate::error::{Result, invalid, numerical};
use crate::model::DiffusionModel;
use crate::rng::{Cursor, Purpose, StreamKey};
use crate::simulate::GridSpec;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// Kernel row `dx·p̄(x_i, x_j)` of a global lattice node, `j = first..first + vals.len()`.
struct Row {
    first: i64,
    vals: Vec<f64>,
}

/// Samples Euler paths between fixed coarse values.
///
/// The conditional law of the interior points given both ends is sampled
/// forward with the backward functions `h_k(x) = P(X̄_{t_m} ∈ dy | X̄_{t_k} = x)`:
/// `h_{m−1}` is the exact Gaussian density, earlier ones come from the kernel
/// recursion on a global lattice of spacing `√(a_min Δ)/3`. Constant
/// coefficients use the exact Gaussian random-walk bridge.
pub struct FillEngine {
    model: DiffusionModel,
    dt: f64,
    dx: f64,
    rows: RwLock<HashMap<i64, Arc<Row>>>,
}

impl std::fmt::Debug for FillEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FillEngine").field("model", &self.model.name()).field("dt", &self.dt).finish()
    }
}

const LOCAL_POINTS: usize = 256;
const SCAN_POINTS: usize = 64;
const LOG_FLOOR: f64 = -1e4;

impl FillEngine {
    pub fn new(model: &DiffusionModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("fill step must be positive"));
        }
        let floor = model.ellipticity_floor();
        if !model.is_constant() && !(floor > 0.0) {
            return Err(invalid(format!("bridge fill of `{}` needs an ellipticity floor", model.name())));
        }
        let dx = if floor > 0.0 { (floor * dt).sqrt() / 3.0 } else { f64::NAN };
        Ok(Self { model: model.clone(), dt, dx, rows: RwLock::new(HashMap::new()) })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Writes the `m + 1` values of one interval into `out`, with `out[0] = start`
    /// and `out[m] = end`. Consumes at most `m − 1` uniforms from `cursor`.
    pub fn fill_interval(&self, start: f64, end: f64, m: usize, cursor: &mut Cursor, out: &mut [f64]) -> Result<()> {
        if m == 0 || out.len() != m + 1 {
            return Err(invalid("fill needs m ≥ 1 and m + 1 output slots"));
        }
        out[0] = start;
        out[m] = end;
        if m == 1 {
            return Ok(());
        }
        if self.model.is_constant() {
            let s = self.model.diffusion(start);
            for k in 0..m - 1 {
                let left = (m - k) as f64;
                let var = s * s * self.dt * (left - 1.0) / left;
                out[k + 1] = out[k] + (end - out[k]) / left + var.sqrt() * cursor.normal();
            }
            return Ok(());
        }
        self.fill_general(start, end, m, cursor, out)
    }

    fn row(&self, i: i64) -> Arc<Row> {
        if let Some(r) = self.rows.read().unwrap().get(&i) {
            return r.clone();
        }
        let x = i as f64 * self.dx;
        let (b, s) = self.model.coefficients(x);
        let mean = x + b * self.dt;
        let sd = s * self.dt.sqrt();
        let first = ((mean - 8.0 * sd) / self.dx).ceil() as i64;
        let last = ((mean + 8.0 * sd) / self.dx).floor() as i64;
        let var = sd * sd;
        let vals = (first..=last)
            .map(|j| self.dx * crate::numeric::gaussian_density(j as f64 * self.dx, mean, var))
            .collect();
        let row = Arc::new(Row { first, vals });
        self.rows.write().unwrap().entry(i).or_insert(row).clone()
    }

    fn log_transition(&self, x: f64, y: f64) -> f64 {
        let (b, s) = self.model.coefficients(x);
        let var = s * s * self.dt;
        let d = y - x - b * self.dt;
        -0.5 * d * d / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
    }

    fn fill_general(&self, start: f64, end: f64, m: usize, cursor: &mut Cursor, out: &mut [f64]) -> Result<()> {
        let span = m as f64 * self.dt;
        let (lo0, hi0) = (start.min(end), start.max(end));
        let r0 = 10.0 * (self.model.a(lo0).max(self.model.a(hi0)) * span).sqrt();
        let mut a_hi = 0.0f64;
        for k in 0..=64 {
            let y = lo0 - r0 + (hi0 - lo0 + 2.0 * r0) * k as f64 / 64.0;
            a_hi = a_hi.max(self.model.a(y));
        }
        let pad = 6.0 * (a_hi * span).sqrt();
        let (wlo, whi) = (lo0 - pad, hi0 + pad);
        if !self.model.in_domain(wlo) || !self.model.in_domain(whi) {
            return Err(invalid(format!("fill window [{wlo}, {whi}] leaves the model domain")));
        }
        let i_lo = (wlo / self.dx).floor() as i64;
        let i_hi = (whi / self.dx).ceil() as i64;
        let width = (i_hi - i_lo + 1) as usize;
        // log h_k on the window for k = 1..=m-2; h_{m-1} is evaluated exactly.
        let mut logh: Vec<Vec<f64>> = vec![Vec::new(); m - 1];
        if m > 2 {
            let rows: Vec<Arc<Row>> = (i_lo..=i_hi).map(|i| self.row(i)).collect();
            let mut next: Vec<f64> = (0..width).map(|r| self.log_transition((i_lo + r as i64) as f64 * self.dx, end)).collect();
            let top = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut hv: Vec<f64> = next.iter().map(|v| (v - top).exp()).collect();
            let mut cur = vec![0.0; width];
            for k in (1..=m - 2).rev() {
                for (r, row) in rows.iter().enumerate() {
                    let off = row.first - i_lo;
                    let mut s = 0.0;
                    for (c, &kv) in row.vals.iter().enumerate() {
                        let j = off + c as i64;
                        if j >= 0 && (j as usize) < width {
                            s += kv * hv[j as usize];
                        }
                    }
                    cur[r] = s;
                }
                let top = cur.iter().cloned().fold(0.0f64, f64::max);
                if !(top > 0.0) || !top.is_finite() {
                    return Err(numerical(format!("fill: backward function vanished at step {k}")));
                }
                for v in cur.iter_mut() {
                    *v /= top;
                }
                next.clear();
                next.extend(cur.iter().map(|&v| if v > 0.0 { v.ln() } else { LOG_FLOOR }));
                logh[k] = next.clone();
                std::mem::swap(&mut hv, &mut cur);
            }
        }
        let interp = |tab: &[f64], x: f64| -> f64 {
            let pos = x / self.dx - i_lo as f64;
            if !(pos >= 1.0 && pos <= (width - 3) as f64) {
                return LOG_FLOOR;
            }
            let i = pos.floor() as usize;
            let t = pos - i as f64;
            let (p0, p1, p2, p3) = (tab[i - 1], tab[i], tab[i + 1], tab[i + 2]);
            // Catmull–Rom
            p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)))
        };
        let mut xs = [0.0; LOCAL_POINTS];
        let mut lf = [0.0; LOCAL_POINTS];
        let mut cdf = [0.0; LOCAL_POINTS];
        for k in 0..m - 1 {
            let xk = out[k];
            let (b, s) = self.model.coefficients(xk);
            let mu = xk + b * self.dt;
            let sd = s * self.dt.sqrt();
            let logf = |y: f64| -> f64 {
                let d = (y - mu) / sd;
                let lh = if k + 1 == m - 1 { self.log_transition(y, end) } else { interp(&logh[k + 1], y) };
                -0.5 * d * d + lh
            };
            let (mut best, mut arg) = (f64::NEG_INFINITY, mu);
            for j in 0..SCAN_POINTS {
                let y = mu - 10.0 * sd + 20.0 * sd * j as f64 / (SCAN_POINTS - 1) as f64;
                let v = logf(y);
                if v > best {
                    best = v;
                    arg = y;
                }
            }
            let half = 7.0 * sd;
            let step = 2.0 * half / (LOCAL_POINTS - 1) as f64;
            let mut top = f64::NEG_INFINITY;
            for j in 0..LOCAL_POINTS {
                xs[j] = arg - half + step * j as f64;
                lf[j] = logf(xs[j]);
                top = top.max(lf[j]);
            }
            if !top.is_finite() || top <= LOG_FLOOR {
                return Err(numerical(format!("fill: no admissible point at step {k} of {m}")));
            }
            for v in lf.iter_mut() {
                *v = (*v - top).exp();
            }
            cdf[0] = 0.0;
            for j in 1..LOCAL_POINTS {
                cdf[j] = cdf[j - 1] + 0.5 * step * (lf[j - 1] + lf[j]);
            }
            let total = cdf[LOCAL_POINTS - 1];
            let target = cursor.uniform() * total;
            let j = cdf.partition_point(|&c| c < target).clamp(1, LOCAL_POINTS - 1) - 1;
            // linear density across the cell: solve a·s²/2 + f0·s = rem for s ∈ [0, step]
            let (f0, f1) = (lf[j], lf[j + 1]);
            let rem = target - cdf[j];
            let a = (f1 - f0) / step;
            let frac = if a.abs() < 1e-300 {
                if f0 > 0.0 { rem / f0 } else { 0.5 * step }
            } else {
                let disc = (f0 * f0 + 2.0 * a * rem).max(0.0);
                2.0 * rem / (f0 + disc.sqrt())
            };
            out[k + 1] = xs[j] + frac.clamp(0.0, step);
        }
        Ok(())
    }
}

/// Fills the fine grid between given coarse values `Ȳ_{s_0}, …, Ȳ_{s_n}` with an
/// Euler chain conditioned on them. Interval `l` draws from the fill stream of
/// `path_index`, block `l`.
pub fn euler_bridge_fill(
    model: &DiffusionModel,
    grid: &GridSpec,
    coarse: &[f64],
    seed: u64,
    path_index: u64,
) -> Result<Vec<f64>> {
    let engine = FillEngine::new(model, grid.dt())?;
    fill_with(&engine, grid, coarse, seed, path_index)
}

pub(crate) fn fill_with(engine: &FillEngine, grid: &GridSpec, coarse: &[f64], seed: u64, path_index: u64) -> Result<Vec<f64>> {
    let n = grid.coarse_count();
    if coarse.len() != n + 1 {
        return Err(invalid(format!("expected {} coarse values, got {}", n + 1, coarse.len())));
    }
    let key = StreamKey::new(seed, Purpose::Fill);
    let mut out = vec![0.0; grid.steps + 1];
    for l in 0..n {
        let (a, b) = grid.coarse_span(l);
        let mut cursor = key.cursor(path_index, l as u64, 0);
        engine.fill_interval(coarse[l], coarse[l + 1], b - a, &mut cursor, &mut out[a..=b])?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use std::collections::BTreeMap;
    use crate::stats::ks_two_sample;

    #[test]
    fn constant_midpoint_is_brownian_bridge() {
        let m = builtin("bm_drift", &BTreeMap::new()).unwrap().with_x0(0.0);
        let eng = FillEngine::new(&m, 0.5).unwrap();
        let key = StreamKey::new(3, Purpose::Fill);
        let (a, c) = (0.2, 1.4);
        let n = 20000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut out = [0.0; 3];
        for p in 0..n {
            eng.fill_interval(a, c, 2, &mut key.cursor(p, 0, 0), &mut out).unwrap();
            sum += out[1];
            sq += out[1] * out[1];
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        let s = m.diffusion(0.0);
        assert!((mean - 0.8).abs() < 4.0 * (s * s * 0.25 / n as f64).sqrt());
        assert!((var / (s * s * 0.25) - 1.0).abs() < 0.05);
        assert_eq!(out[0], a);
        assert_eq!(out[2], c);
    }

    #[test]
    fn general_fill_matches_direct_euler_law() {
        // Composition check: coarse values from direct Euler chains, then fill,
        // compare an interior marginal with the direct chain's.
        let m = builtin("sin_elliptic", &BTreeMap::new()).unwrap();
        let grid = GridSpec::new(1.0, 16, 8).unwrap();
        let eng = FillEngine::new(&m, grid.dt()).unwrap();
        let key = StreamKey::new(11, Purpose::Probe);
        let paths = 3000;
        let (mut direct, mut filled) = (Vec::new(), Vec::new());
        let mut vals = Vec::new();
        for p in 0..paths {
            let mut c = key.cursor(p, 0, 0);
            let incs: Vec<f64> = (0..16).map(|_| grid.dt().sqrt() * c.normal()).collect();
            crate::simulate::euler_values(&m, m.x0(), grid.dt(), &incs, &mut vals).unwrap();
            direct.push(vals[5]);
            let coarse = [vals[0], vals[8], vals[16]];
            let f = fill_with(&eng, &grid, &coarse, 5, p).unwrap();
            assert_eq!(f[8], vals[8]);
            filled.push(f[5]);
        }
        let p = ks_two_sample(&direct, &filled).p_value;
        assert!(p > 0.01, "p = {p}");
    }
}
