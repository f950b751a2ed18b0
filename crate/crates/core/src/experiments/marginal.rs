//! Marginal-rate sweep: `sup_t W_p` between the Euler marginal law and the
//! diffusion law, both computed on a mesh.

use super::config::ExperimentConfig;
use super::fit::fit_rows;
use super::report::{Provenance, RateReport, RateRow};
use crate::density::{
    FpOptions, MarginalLaw, MeshSpec, WpEstimate, euler_marginal_evolve, fokker_planck_evolve, wasserstein_quantile,
    wasserstein_quantile_fn,
};
use crate::error::{Result, numerical};
use crate::model::{DiffusionModel, ExactLaw};
use crate::numeric::norm_quantile;
use crate::simulate::GridSpec;
use std::path::Path;

/// Values below this are indistinguishable from the mesh error.
pub const MESH_TOLERANCE: f64 = 1e-6;

enum Target {
    Exact(ExactLaw),
    Fp(Vec<MarginalLaw>),
}

impl Target {
    fn distance(&self, i: usize, t: f64, x0: f64, euler: &MarginalLaw, p: f64) -> Result<WpEstimate> {
        match self {
            Target::Exact(law) => wasserstein_quantile_fn(
                |u| euler.quantile_unchecked(u),
                |u| law.sample(t, x0, norm_quantile(u)),
                p,
            ),
            Target::Fp(laws) => wasserstein_quantile(&laws[i], euler, p),
        }
    }
}

/// Output times `t_k + Δ/2, t_{k+1}` interleaved, `k = 0..N`.
fn sweep_times(grid: &GridSpec) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * grid.steps);
    for k in 0..grid.steps {
        v.push(grid.time(k) + 0.5 * grid.dt());
        v.push(grid.time(k + 1));
    }
    v
}

struct SweepPoint {
    sup_wp: f64,
    sup_w1: f64,
    argmax_t: f64,
    quad_err: f64,
    mass_err: f64,
}

fn sweep_one(
    model: &DiffusionModel,
    cfg: &ExperimentConfig,
    mesh: &MeshSpec,
    n: usize,
    laws_dir: Option<&Path>,
) -> Result<SweepPoint> {
    let grid = GridSpec::new(cfg.horizon, n, 1)?;
    let euler = euler_marginal_evolve(model, &grid, mesh, true)?;
    let times = sweep_times(&grid);
    let target = match model.exact_law() {
        Some(law) => Target::Exact(law),
        None => {
            let opts = FpOptions { dt: cfg.horizon / cfg.fp_steps as f64, startup_steps: 4 };
            Target::Fp(fokker_planck_evolve(model, &times, mesh, &opts)?)
        }
    };
    let x0 = model.x0();
    let mut pt = SweepPoint { sup_wp: 0.0, sup_w1: 0.0, argmax_t: 0.0, quad_err: 0.0, mass_err: 0.0 };
    for (i, &t) in times.iter().enumerate() {
        let law = if i % 2 == 0 { &euler.midpoints[i / 2] } else { &euler.nodes[i / 2] };
        let wp = target.distance(i, t, x0, law, cfg.marginal_p)?;
        let w1 = if cfg.marginal_p == 1.0 { wp } else { target.distance(i, t, x0, law, 1.0)? };
        if !wp.value.is_finite() {
            return Err(numerical(format!("non-finite W_p at t = {t}")));
        }
        if wp.value > pt.sup_wp {
            pt.sup_wp = wp.value;
            pt.argmax_t = t;
        }
        pt.sup_w1 = pt.sup_w1.max(w1.value);
        pt.quad_err = pt.quad_err.max(wp.quadrature_error);
        pt.mass_err = pt.mass_err.max((law.mass() - 1.0).abs());
        if let Target::Fp(l) = &target {
            pt.mass_err = pt.mass_err.max((l[i].mass() - 1.0).abs());
        }
    }
    if let Some(dir) = laws_dir {
        std::fs::create_dir_all(dir)?;
        euler.nodes[n - 1].write_csv(&dir.join(format!("euler_N{n}_T.csv")))?;
        if let Target::Fp(l) = &target {
            l[l.len() - 1].write_csv(&dir.join(format!("fp_N{n}_T.csv")))?;
        }
    }
    Ok(pt)
}

/// Runs the sweep over `grid.N`. `laws_dir` receives the laws at `T`.
pub fn run_marginal_rate(cfg: &ExperimentConfig, laws_dir: Option<&Path>) -> Result<RateReport> {
    let model = cfg.model()?;
    let mesh = MeshSpec::for_model(&model, cfg.horizon, cfg.mesh_nodes, cfg.mesh_width)?;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let pt = sweep_one(&model, cfg, &mesh, n, laws_dir)?;
        rows.push(
            RateRow::new(n, 0, pt.sup_wp, 0.0, 0)
                .with("sup_w1", pt.sup_w1)
                .with("argmax_t", pt.argmax_t)
                .with("quadrature_error", pt.quad_err)
                .with("mass_error", pt.mass_err),
        );
    }
    let mut notes = Vec::new();
    let fit = if rows.iter().all(|r| r.estimate < MESH_TOLERANCE) {
        notes.push(format!("all values below mesh tolerance {MESH_TOLERANCE:e}; no rate fitted"));
        None
    } else {
        fit_rows(&rows, false, &mut notes)?
    };
    let reference = if model.exact_law().is_some() { "closed-form marginal law" } else { "Fokker-Planck mesh solution" };
    let flags = vec![
        format!("reference: {reference}"),
        "sup over grid nodes and step midpoints".to_string(),
    ];
    Ok(RateReport {
        experiment: "marginal-rate".into(),
        model: model.name().to_string(),
        estimate_label: format!("sup_t W_{}", cfg.marginal_p),
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
    fn constant_sigma_is_below_mesh_tolerance() {
        let cfg = ExperimentConfig::parse(
            "model = bm_drift\nmodel.params.b = 0.3\ngrid.N = 4, 8, 16\nseed = 1\nmesh.nodes = 2048\n",
            None,
        )
        .unwrap();
        let r = run_marginal_rate(&cfg, None).unwrap();
        for row in &r.rows {
            assert!(row.estimate < MESH_TOLERANCE, "{}", row.estimate);
            assert!(row.extra["sup_w1"] <= row.estimate + 1e-12);
        }
        assert!(r.fit.is_none());
    }
}
