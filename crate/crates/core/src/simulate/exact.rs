use super::{GridSpec, PathBundle, euler_values};
use crate::error::{Result, invalid};
use crate::model::{DiffusionModel, ExactLaw};

/// Reference process standing in for the diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Reference {
    /// Closed-form transitions driven by the grid increments.
    Exact,
    /// Euler scheme `2^depth` times finer.
    Proxy { depth: u32 },
}

impl Reference {
    pub fn for_model(model: &DiffusionModel, proxy_depth: u32) -> Self {
        if model.exact_law().is_some() { Reference::Exact } else { Reference::Proxy { depth: proxy_depth } }
    }

    pub fn label(&self) -> String {
        match self {
            Reference::Exact => "exact transition law".into(),
            Reference::Proxy { depth } => format!("fine-Euler proxy depth {depth}"),
        }
    }
}

/// Exact values driven by the Brownian increments `dw` of step `dt`.
pub fn exact_values(law: &ExactLaw, x0: f64, dt: f64, increments: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.reserve(increments.len() + 1);
    out.push(x0);
    let mut x = x0;
    for &dw in increments {
        x = law.step_increment(dt, x, dw);
        out.push(x);
    }
}

/// Exact path on `grid`; errors when the model has no closed-form law.
pub fn exact_path(model: &DiffusionModel, grid: &GridSpec, increments: &[f64]) -> Result<PathBundle> {
    let law = model.exact_law().ok_or_else(|| invalid(format!("{} has no exact law; use a proxy", model.name())))?;
    if increments.len() != grid.steps {
        return Err(invalid("increment count differs from N"));
    }
    let mut values = Vec::new();
    exact_values(&law, model.x0(), grid.dt(), increments, &mut values);
    Ok(PathBundle { grid: *grid, values, increments: increments.to_vec(), lineage: None })
}

/// Fine Euler proxy at `N·2^depth` steps, sampled on `grid`. The bundle's
/// increments are the fine increments summed per grid step.
pub fn proxy_path(model: &DiffusionModel, grid: &GridSpec, fine_increments: &[f64], depth: u32) -> Result<PathBundle> {
    let r = 1usize << depth;
    if fine_increments.len() != grid.steps * r {
        return Err(invalid("fine increment count differs from N·2^depth"));
    }
    let mut fine = Vec::new();
    euler_values(model, model.x0(), grid.dt() / r as f64, fine_increments, &mut fine)?;
    let values = fine.iter().step_by(r).copied().collect();
    let increments = fine_increments.chunks(r).map(pairwise_sum).collect();
    Ok(PathBundle { grid: *grid, values, increments, lineage: None })
}

/// Pairwise sum; for a dyadic block this retraces the refinement tree.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}
