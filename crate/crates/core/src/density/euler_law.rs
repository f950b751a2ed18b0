use super::{MarginalLaw, MeshSpec};
use crate::error::{Result, invalid, numerical};
use crate::model::DiffusionModel;
use crate::numeric::gaussian_density;
use crate::simulate::GridSpec;

/// Banded one-step Euler transition `p̄(y_j, ·)` on a mesh, one column per
/// source node, each column normalised to unit trapezoid mass.
pub(crate) struct EulerKernel {
    start: Vec<usize>,
    cols: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl EulerKernel {
    pub(crate) fn new(model: &DiffusionModel, mesh: &MeshSpec, dt: f64) -> Result<Self> {
        let n = mesh.nodes;
        let h = mesh.h();
        let weights = mesh.weights();
        let mut start = Vec::with_capacity(n);
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let y = mesh.node(j);
            let (b, s) = model.coefficients(y);
            let mean = y + b * dt;
            let var = s * s * dt;
            let sd = var.sqrt();
            if !(sd >= 2.0 * h) {
                return Err(invalid(format!(
                    "mesh too coarse: kernel std {sd:e} below two cells ({:e}) at x = {y}",
                    2.0 * h
                )));
            }
            let lo = (((mean - 8.0 * sd) - mesh.lo) / h).ceil().max(0.0) as usize;
            let hi = ((((mean + 8.0 * sd) - mesh.lo) / h).floor().max(-1.0) + 1.0).min(n as f64) as usize;
            if lo >= hi {
                // Mass transported entirely off the mesh stays at the nearest end node.
                let k = if mean < mesh.lo { 0 } else { n - 1 };
                start.push(k);
                cols.push(vec![1.0 / weights[k]]);
                continue;
            }
            let mut col: Vec<f64> = (lo..hi).map(|i| gaussian_density(mesh.node(i), mean, var)).collect();
            let m: f64 = col.iter().enumerate().map(|(r, v)| v * weights[lo + r]).sum();
            for v in col.iter_mut() {
                *v /= m;
            }
            start.push(lo);
            cols.push(col);
        }
        Ok(Self { start, cols, weights })
    }

    /// `q(x_i) = Σ_j w_j p(y_j) K(y_j, x_i)`.
    pub(crate) fn apply(&self, p: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.resize(p.len(), 0.0);
        for (j, &pj) in p.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            let c = pj * self.weights[j];
            let s = self.start[j];
            for (r, &k) in self.cols[j].iter().enumerate() {
                out[s + r] += c * k;
            }
        }
    }
}

/// Euler marginal laws at every `t_k` and, optionally, at step midpoints.
#[derive(Debug, Clone)]
pub struct EulerLaws {
    pub grid: GridSpec,
    /// Laws at `t_1, …, t_N`.
    pub nodes: Vec<MarginalLaw>,
    /// Laws at `t_k + Δ/2`, `k = 0..N`.
    pub midpoints: Vec<MarginalLaw>,
}

/// Propagates the Euler scheme's marginal density on `mesh`. The first step is
/// the exact Gaussian from the point mass at `x0`; later steps apply the
/// one-step kernel by quadrature.
pub fn euler_marginal_evolve(
    model: &DiffusionModel,
    grid: &GridSpec,
    mesh: &MeshSpec,
    midpoints: bool,
) -> Result<EulerLaws> {
    let dt = grid.dt();
    let x0 = model.x0();
    let (b0, s0) = model.coefficients(x0);
    let first: Vec<f64> = mesh.points().iter().map(|&x| gaussian_density(x, x0 + b0 * dt, s0 * s0 * dt)).collect();
    let kernel = EulerKernel::new(model, mesh, dt)?;
    let half = if midpoints { Some(EulerKernel::new(model, mesh, 0.5 * dt)?) } else { None };
    let mut nodes = Vec::with_capacity(grid.steps);
    let mut mids = Vec::new();
    if midpoints {
        let p: Vec<f64> =
            mesh.points().iter().map(|&x| gaussian_density(x, x0 + b0 * 0.5 * dt, s0 * s0 * 0.5 * dt)).collect();
        mids.push(MarginalLaw::from_density(0.5 * dt, *mesh, p)?);
    }
    let mut p = first;
    let mut next = Vec::new();
    for k in 1..=grid.steps {
        if k > 1 {
            kernel.apply(&p, &mut next);
            std::mem::swap(&mut p, &mut next);
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(numerical(format!("non-finite Euler density at step {k}")));
        }
        nodes.push(MarginalLaw::from_density(grid.time(k), *mesh, p.clone())?);
        if let Some(hk) = &half {
            if k < grid.steps {
                hk.apply(&p, &mut next);
                mids.push(MarginalLaw::from_density(grid.time(k) + 0.5 * dt, *mesh, next.clone())?);
            }
        }
    }
    Ok(EulerLaws { grid: *grid, nodes, midpoints: mids })
}
