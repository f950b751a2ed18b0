use super::beta::{reconstruct_beta, refine_beta};
use super::fill::{FillEngine, fill_with};
use super::tables::{TransitionKind, TransitionMap, z_clip};
use crate::bridge::{BridgeScore, bridge_values_into, extract_into};
use crate::error::{Error, Result, invalid};
use crate::model::DiffusionModel;
use crate::simulate::GridSpec;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

/// Shared state of the path coupling at one grid: transition maps per coarse
/// interval length, the fill engine and the bridge score. Paths live on a
/// sub-grid with `sub_ratio` sub-steps per fine step.
pub struct CouplingContext {
    model: DiffusionModel,
    grid: GridSpec,
    sub_ratio: usize,
    score: Arc<BridgeScore>,
    maps: Vec<(usize, TransitionMap, TransitionMap)>,
    fill: FillEngine,
    seed: u64,
}

impl std::fmt::Debug for CouplingContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CouplingContext")
            .field("model", &self.model.name())
            .field("grid", &self.grid)
            .field("sub_ratio", &self.sub_ratio)
            .finish()
    }
}

impl CouplingContext {
    pub fn new(model: &DiffusionModel, grid: GridSpec, sub_ratio: usize, score: Arc<BridgeScore>, seed: u64) -> Result<Self> {
        if !sub_ratio.is_power_of_two() {
            return Err(invalid(format!("sub-grid ratio {sub_ratio} is not a power of two")));
        }
        if grid.coarse_count() == 0 {
            return Err(invalid("coarse factor exceeds N"));
        }
        let dt = grid.dt();
        let mut maps: Vec<(usize, TransitionMap, TransitionMap)> = Vec::new();
        for l in 0..grid.coarse_count() {
            let (a, b) = grid.coarse_span(l);
            let steps = b - a;
            if maps.iter().any(|(s, _, _)| *s == steps) {
                continue;
            }
            let diffusion = TransitionMap::new(model, TransitionKind::Diffusion { duration: steps as f64 * dt })?;
            let euler = TransitionMap::new(model, TransitionKind::Euler { steps, dt })?;
            maps.push((steps, diffusion, euler));
        }
        let fill = FillEngine::new(model, dt)?;
        Ok(Self { model: model.clone(), grid, sub_ratio, score, maps, fill, seed })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sub_ratio(&self) -> usize {
        self.sub_ratio
    }

    pub fn sub_steps(&self) -> usize {
        self.grid.steps * self.sub_ratio
    }

    pub fn sub_dt(&self) -> f64 {
        self.grid.horizon / self.sub_steps() as f64
    }

    pub fn score(&self) -> &BridgeScore {
        &self.score
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    /// Start tables built so far across all maps.
    pub fn table_count(&self) -> usize {
        self.maps.iter().map(|(_, d, e)| d.table_count() + e.table_count()).sum()
    }

    fn maps_for(&self, steps: usize) -> &(usize, TransitionMap, TransitionMap) {
        self.maps.iter().find(|(s, _, _)| *s == steps).expect("map for every interval length")
    }
}

/// All components of one coupled path, on the sub-grid unless stated.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    /// `X_{s_l}`.
    pub coarse_x: Vec<f64>,
    /// `Ȳ_{s_l}`.
    pub coarse_y: Vec<f64>,
    /// Euler chain `Ȳ` on the fine grid.
    pub ybar: Vec<f64>,
    /// Refined Brownian motion `β` driving `Ȳ`, as sub-grid increments.
    pub beta: Vec<f64>,
    /// `χ`, restarted at `Ȳ_{s_l}` (values at `s_l` are the restarted ones).
    pub chi: Vec<f64>,
    /// Left limits `χ_{s_l−}`, `l = 1..=n`.
    pub chi_left: Vec<f64>,
    /// `χ̃` (values at `s_l` are the right limits; `χ̃_T = χ_T`).
    pub chi_tilde: Vec<f64>,
    pub max_coarse_gap: f64,
    pub sup_ybar_chi: f64,
    pub sup_x_chitilde: f64,
    /// Coupling variables clipped to `[1e-9, 1 − 1e-9]`.
    pub clipped: usize,
}

impl CoupledPaths {
    pub fn censored(&self) -> bool {
        self.clipped > 0
    }
}

/// Builds `Ȳ`, `χ` and `χ̃` from a reference path `X` on the sub-grid
/// (`x_values`: `K + 1` values, `x_increments`: its `K` Brownian increments).
///
/// 1. coarse values by the conditional quantile coupling of `X_{s_{l+1}} | X_{s_l}`
///    with the `m`-step Euler transition from `Ȳ_{s_l}`;
/// 2. Euler bridge fill of `Ȳ` and its driving increments `β`, refined to the sub-grid;
/// 3. `χ`: sub-grid Euler driven by `β`, restarted at every `Ȳ_{s_l}`;
/// 4. `χ̃`: on each interval, the bridge from `χ_{s_l}` to `χ_{s_{l+1}−}` driven by
///    the bridge Brownian motion of `X` on that interval.
pub fn assemble_coupled_paths(
    ctx: &CouplingContext,
    x_values: &[f64],
    x_increments: &[f64],
    path_index: u64,
) -> Result<CoupledPaths> {
    let grid = &ctx.grid;
    let r = ctx.sub_ratio;
    let k_sub = ctx.sub_steps();
    if x_values.len() != k_sub + 1 || x_increments.len() != k_sub {
        return Err(invalid(format!("reference path must have {k_sub} sub-steps")));
    }
    let model = &ctx.model;
    let n = grid.coarse_count();
    let dt = grid.dt();
    let delta = ctx.sub_dt();
    let zc = z_clip();

    let coarse_x: Vec<f64> = (0..=n).map(|l| x_values[grid.coarse_index(l) * r]).collect();
    let mut coarse_y = Vec::with_capacity(n + 1);
    coarse_y.push(coarse_x[0]);
    let mut clipped = 0;
    for l in 0..n {
        let (a, b) = grid.coarse_span(l);
        let (_, dmap, emap) = ctx.maps_for(b - a);
        let mut z = dmap.to_z(coarse_x[l], coarse_x[l + 1])?;
        if z.abs() > zc {
            z = z.clamp(-zc, zc);
            clipped += 1;
        }
        let y = emap.from_z(coarse_y[l], z)?;
        if !model.in_domain(y) || !y.is_finite() {
            return Err(Error::DomainExit { step: b, value: y });
        }
        coarse_y.push(y);
    }

    let ybar = fill_with(&ctx.fill, grid, &coarse_y, ctx.seed, path_index)?;
    let beta_fine = reconstruct_beta(model, &ybar, dt)?;
    let beta = refine_beta(&beta_fine, dt, r.trailing_zeros(), ctx.seed, path_index);

    let mut chi = Vec::with_capacity(k_sub + 1);
    let mut chi_left = Vec::with_capacity(n);
    let mut sup_ybar_chi = 0.0f64;
    let mut next_l = 1;
    let mut c = coarse_y[0];
    chi.push(c);
    for k in 0..grid.steps {
        let (yb, ys) = model.coefficients(ybar[k]);
        let mut partial = 0.0;
        for j in 0..r {
            let i = k * r + j;
            let (b, s) = model.coefficients(c);
            c = c + s * beta[i] + b * delta;
            partial += beta[i];
            let y_interp = if j + 1 == r { ybar[k + 1] } else { ybar[k] + ys * partial + yb * (j + 1) as f64 * delta };
            sup_ybar_chi = sup_ybar_chi.max((c - y_interp).abs());
            if !c.is_finite() || !model.in_domain(c) {
                return Err(Error::DomainExit { step: i + 1, value: c });
            }
            if next_l <= n && i + 1 == grid.coarse_index(next_l) * r {
                chi_left.push(c);
                if next_l < n {
                    c = coarse_y[next_l];
                }
                next_l += 1;
            }
            chi.push(c);
        }
    }

    let mut chi_tilde = vec![0.0; k_sub + 1];
    let mut sup_x_chitilde = 0.0f64;
    let mut wl = Vec::new();
    let mut seg = Vec::new();
    for l in 0..n {
        let (a, b) = grid.coarse_span(l);
        let (sa, sb) = (a * r, b * r);
        extract_into(&ctx.score, &x_values[sa..=sb], &x_increments[sa..sb], delta, &mut wl)?;
        bridge_values_into(&ctx.score, coarse_y[l], chi_left[l], delta, &wl, &mut seg)?;
        for (off, &v) in seg[..seg.len() - 1].iter().enumerate() {
            chi_tilde[sa + off] = v;
            sup_x_chitilde = sup_x_chitilde.max((x_values[sa + off] - v).abs());
        }
        sup_x_chitilde = sup_x_chitilde.max((x_values[sb] - chi_left[l]).abs());
    }
    chi_tilde[k_sub] = chi_left[n - 1];

    let max_coarse_gap = coarse_x.iter().zip(&coarse_y).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(CoupledPaths {
        coarse_x,
        coarse_y,
        ybar,
        beta,
        chi,
        chi_left,
        chi_tilde,
        max_coarse_gap,
        sup_ybar_chi,
        sup_x_chitilde,
        clipped,
    })
}

/// One CSV row per path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRow {
    pub path_index: u64,
    pub max_coarse_gap: f64,
    pub sup_ybar_chi: f64,
    pub sup_x_chitilde: f64,
    pub censored: bool,
}

impl CouplingRow {
    pub fn from_paths(path_index: u64, p: &CoupledPaths) -> Self {
        Self {
            path_index,
            max_coarse_gap: p.max_coarse_gap,
            sup_ybar_chi: p.sup_ybar_chi,
            sup_x_chitilde: p.sup_x_chitilde,
            censored: p.censored(),
        }
    }
}

pub const COUPLING_CSV_HEADER: &str = "path_index,max_coarse_gap,sup_ybar_chi,sup_x_chitilde,censored_flag";

pub fn write_coupling_csv(rows: &[CouplingRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{COUPLING_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            f,
            "{},{:.16e},{:.16e},{:.16e},{}",
            r.path_index, r.max_coarse_gap, r.sup_ybar_chi, r.sup_x_chitilde, r.censored as u8
        )?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{ScoreMode, ScoreOptions};
    use crate::model::builtin;
    use crate::simulate::{BrownianTree, euler_values};
    use std::collections::BTreeMap;

    fn reference(model: &DiffusionModel, steps: usize, path: u64) -> (Vec<f64>, Vec<f64>) {
        let tree = BrownianTree::for_steps(21, path, 1.0, steps);
        let incs = tree.level(tree.level_of(steps).unwrap()).unwrap();
        let mut v = Vec::new();
        euler_values(model, model.x0(), 1.0 / steps as f64, &incs, &mut v).unwrap();
        (v, incs)
    }

    #[test]
    fn constant_coefficients_give_zero_gaps() {
        let m = builtin("bm_drift", &BTreeMap::new()).unwrap();
        let score = Arc::new(BridgeScore::new(&m, ScoreOptions::new(ScoreMode::ClosedForm, 1.0)).unwrap());
        let grid = GridSpec::with_default_m(1.0, 16).unwrap();
        let ctx = CouplingContext::new(&m, grid, 8, score, 4).unwrap();
        for p in 0..5 {
            let (x, w) = reference(&m, 128, p);
            let c = assemble_coupled_paths(&ctx, &x, &w, p).unwrap();
            assert!(c.max_coarse_gap <= 1e-10, "{}", c.max_coarse_gap);
            assert!(c.sup_ybar_chi <= 1e-10, "{}", c.sup_ybar_chi);
            assert!(c.sup_x_chitilde <= 1e-10, "{}", c.sup_x_chitilde);
            assert_eq!(c.chi_left.len(), grid.coarse_count());
        }
    }

    #[test]
    fn variable_coefficients_stay_close() {
        let m = builtin("sin_elliptic", &BTreeMap::new()).unwrap();
        let score = Arc::new(BridgeScore::auto(&m, 1.0).unwrap());
        let grid = GridSpec::with_default_m(1.0, 16).unwrap();
        let ctx = CouplingContext::new(&m, grid, 16, score, 4).unwrap();
        let (x, w) = reference(&m, 256, 0);
        let c = assemble_coupled_paths(&ctx, &x, &w, 0).unwrap();
        assert!(c.max_coarse_gap < 0.1);
        assert!(c.sup_x_chitilde < 0.5);
        assert_eq!(c.chi.len(), 257);
        assert_eq!(c.chi_tilde[256], c.chi_left[1]);
        let again = assemble_coupled_paths(&ctx, &x, &w, 0).unwrap();
        assert_eq!(c, again);
    }
}
