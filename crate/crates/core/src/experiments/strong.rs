//! Strong-rate sweep: `E[sup_k |X_{t_k} − X̄_{t_k}|²]^{1/2}` against an exact
//! or fine-Euler reference driven by the same Brownian path.

use super::config::ExperimentConfig;
use super::fit::fit_rows;
use super::report::{Provenance, RateReport, RateRow};
use super::runner::{MeanAcc, map_chunks};
use crate::error::{Error, Result, invalid};
use crate::model::DiffusionModel;
use crate::rng::{Purpose, StreamKey};
use crate::simulate::{BrownianTree, Reference, bridge_max, euler_values, euler_values_lanes, exact_values};

const LANES: usize = 4;

#[derive(Clone, Default)]
struct NAcc {
    sq: MeanAcc,
    fourth: MeanAcc,
    fourth_cont: MeanAcc,
    censored: usize,
}

struct Plan {
    model: DiffusionModel,
    reference: Reference,
    horizon: f64,
    seed: u64,
    n_list: Vec<usize>,
    n_max: usize,
    levels: Vec<u32>,
    ref_level: u32,
}

impl Plan {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let model = cfg.model()?;
        let reference = Reference::for_model(&model, cfg.proxy_depth);
        let n_max = *cfg.n_list.last().ok_or_else(|| invalid("empty grid.N"))?;
        let tree = BrownianTree::for_steps(cfg.seed, 0, cfg.horizon, n_max);
        let levels = cfg.n_list.iter().map(|&n| tree.level_of(n)).collect::<Result<Vec<_>>>()?;
        let top = *levels.last().unwrap_or(&0);
        let ref_level = match reference {
            Reference::Exact => top,
            Reference::Proxy { depth } => top + depth,
        };
        Ok(Self { model, reference, horizon: cfg.horizon, seed: cfg.seed, n_list: cfg.n_list.clone(), n_max, levels, ref_level })
    }

    /// Reference values at the `N_max` grid nodes for a group of paths; `None`
    /// where the reference left the domain.
    fn references(&self, trees: &[Vec<Vec<f64>>]) -> Result<Vec<Option<Vec<f64>>>> {
        let x0 = self.model.x0();
        match self.reference {
            Reference::Exact => {
                let law = self.model.exact_law().ok_or_else(|| invalid("no exact law"))?;
                let dt = self.horizon / self.n_max as f64;
                Ok(trees
                    .iter()
                    .map(|t| {
                        let mut v = Vec::new();
                        exact_values(&law, x0, dt, &t[self.ref_level as usize], &mut v);
                        v.iter().all(|x| x.is_finite()).then_some(v)
                    })
                    .collect())
            }
            Reference::Proxy { depth } => {
                let stride = 1usize << depth;
                let fine = self.n_max * stride;
                let dt = self.horizon / fine as f64;
                let lvl = self.ref_level as usize;
                if trees.len() == LANES {
                    let mut outs = vec![vec![0.0; self.n_max + 1]; LANES];
                    let incs: [&[f64]; LANES] = std::array::from_fn(|i| trees[i][lvl].as_slice());
                    let [a, b, c, d] = &mut outs[..] else { unreachable!() };
                    let res = euler_values_lanes(&self.model, x0, dt, incs, stride, [a, b, c, d]);
                    match res {
                        Ok(()) => return Ok(outs.into_iter().map(Some).collect()),
                        Err(Error::DomainExit { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                let mut all = Vec::with_capacity(trees.len());
                let mut v = Vec::new();
                for t in trees {
                    match euler_values(&self.model, x0, dt, &t[lvl], &mut v) {
                        Ok(()) => all.push(Some(v.iter().step_by(stride).copied().collect())),
                        Err(Error::DomainExit { .. }) => all.push(None),
                        Err(e) => return Err(e),
                    }
                }
                Ok(all)
            }
        }
    }

    /// `sup_t |X̄_t|` of the interpolated Euler path: per step, the maximum and
    /// the minimum of the Brownian bridge are drawn from their marginal laws.
    fn continuous_sup(&self, x: &[f64], dt: f64, path: u64, block: u64) -> Result<f64> {
        let mut c = StreamKey::new(self.seed, Purpose::BridgeMax).cursor(path, block, 0);
        let mut sup = x[0].abs();
        for w in x.windows(2) {
            let s = self.model.diffusion(w[0]);
            let hi = bridge_max(w[0], w[1], s, dt, c.uniform())?;
            let lo = -bridge_max(-w[0], -w[1], s, dt, c.uniform())?;
            sup = sup.max(hi.abs()).max(lo.abs());
        }
        Ok(sup)
    }

    fn chunk(&self, first: u64, end: u64) -> Result<Vec<NAcc>> {
        let mut acc = vec![NAcc::default(); self.n_list.len()];
        let mut x = Vec::new();
        let mut start = first;
        while start < end {
            let stop = (start + LANES as u64).min(end);
            let trees = (start..stop)
                .map(|p| BrownianTree::for_steps(self.seed, p, self.horizon, self.n_max).levels(self.ref_level))
                .collect::<Result<Vec<_>>>()?;
            let refs = self.references(&trees)?;
            for ((tree, r), p) in trees.iter().zip(&refs).zip(start..) {
                for (i, &n) in self.n_list.iter().enumerate() {
                    let Some(r) = r else {
                        acc[i].censored += 1;
                        continue;
                    };
                    let dt = self.horizon / n as f64;
                    match euler_values(&self.model, self.model.x0(), dt, &tree[self.levels[i] as usize], &mut x) {
                        Ok(()) => {}
                        Err(Error::DomainExit { .. }) => {
                            acc[i].censored += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                    let ratio = self.n_max / n;
                    let mut gap = 0.0f64;
                    let mut sup4 = 0.0f64;
                    for (k, &xk) in x.iter().enumerate() {
                        gap = gap.max((r[k * ratio] - xk).abs());
                        sup4 = sup4.max(xk.powi(4));
                    }
                    acc[i].sq.push(gap * gap);
                    acc[i].fourth.push(sup4);
                    acc[i].fourth_cont.push(self.continuous_sup(&x, dt, p, i as u64)?.powi(4));
                }
            }
            start = stop;
        }
        Ok(acc)
    }
}

/// Runs the sweep; call inside [`super::runner::with_workers`] to bound threads.
pub fn run_strong_rate(cfg: &ExperimentConfig) -> Result<RateReport> {
    let plan = Plan::new(cfg)?;
    let paths = cfg.require_paths()? as u64;
    let parts = map_chunks(paths, |a, b| plan.chunk(a, b))?;
    let mut total = vec![NAcc::default(); plan.n_list.len()];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.sq.merge(&p.sq);
            t.fourth.merge(&p.fourth);
            t.fourth_cont.merge(&p.fourth_cont);
            t.censored += p.censored;
        }
    }
    let mut rows = Vec::new();
    for (i, &n) in plan.n_list.iter().enumerate() {
        let (e, se) = total[i].sq.rms();
        rows.push(
            RateRow::new(n, 0, e, se, total[i].censored)
                .with("sup_x4_mean", total[i].fourth.mean())
                .with("sup_cont_x4_mean", total[i].fourth_cont.mean())
                .with("paths_used", total[i].sq.count() as f64),
        );
    }
    let mut notes = Vec::new();
    let fit = fit_rows(&rows, true, &mut notes)?;
    let mut flags = vec![format!("reference: {}", plan.reference.label()), "sup over grid nodes t_k".to_string()];
    if let Reference::Proxy { depth } = plan.reference {
        flags.push(format!("proxy shared by all N at {}·2^{depth} steps", plan.n_max));
    }
    Ok(RateReport {
        experiment: "strong-rate".into(),
        model: plan.model.name().to_string(),
        estimate_label: "E[sup_k |X - Xbar|^2]^(1/2)".into(),
        rows,
        fit,
        notes,
        provenance: Provenance::new(cfg, flags),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sigma_rate_is_first_order() {
        let cfg = ExperimentConfig::parse(
            "model = ou\nmodel.params.kappa = 1.5\nmodel.params.sigma = 0.5\ngrid.N = 8, 16, 32, 64\nseed = 3\nsamples.M = 2000\n",
            None,
        )
        .unwrap();
        let r = run_strong_rate(&cfg).unwrap();
        let fit = r.fit.unwrap();
        assert!(fit.slope <= -0.9, "{}", fit.slope);
        assert!(r.rows.iter().all(|row| row.censored == 0));
    }

    #[test]
    fn continuous_sup_moment_is_flat_in_n() {
        let cfg = ExperimentConfig::parse(
            "model = ou\nmodel.params.kappa = 1\nmodel.params.sigma = 0.8\ngrid.N = 8, 32, 128, 512\nseed = 4\nsamples.M = 2000\n",
            None,
        )
        .unwrap();
        let r = run_strong_rate(&cfg).unwrap();
        let m: Vec<f64> = r.rows.iter().map(|row| row.extra["sup_cont_x4_mean"]).collect();
        let (lo, hi) = m.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo < 1.2, "{m:?}");
        for row in &r.rows {
            assert!(row.extra["sup_cont_x4_mean"] >= row.extra["sup_x4_mean"]);
        }
    }

    #[test]
    fn proxy_lanes_agree_with_scalar_path() {
        let cfg = ExperimentConfig::parse(
            "model = sin_elliptic\ngrid.N = 4, 8\nseed = 9\nsamples.M = 100\nstrong.proxy_depth = 3\n",
            None,
        )
        .unwrap();
        let plan = Plan::new(&cfg).unwrap();
        let trees: Vec<_> = (0..4).map(|p| BrownianTree::for_steps(9, p, 1.0, 8).levels(plan.ref_level).unwrap()).collect();
        let lanes = plan.references(&trees).unwrap();
        let single = plan.references(&trees[..1]).unwrap();
        assert_eq!(lanes[0], single[0]);
    }
}
