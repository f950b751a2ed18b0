use super::{MarginalLaw, MeshSpec};
use crate::error::{Result, invalid, numerical};
use crate::model::DiffusionModel;
use crate::numeric::{NeumaierSum, gaussian_density, solve_tridiagonal};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FpOptions {
    /// Target time step; output intervals are split into equal substeps no longer than this.
    pub dt: f64,
    /// Implicit-Euler quarter steps replacing the first Crank–Nicolson step.
    pub startup_steps: usize,
}

impl FpOptions {
    pub fn for_horizon(horizon: f64) -> Self {
        Self { dt: horizon / 4096.0, startup_steps: 4 }
    }
}

/// Finite-volume operator `L` of `∂_t p = ½∂_xx(ap) − ∂_x(bp)` with zero-flux ends,
/// stored as three diagonals. `Σ w_i (Lp)_i = 0` for trapezoid weights `w`.
struct FpOperator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl FpOperator {
    fn new(model: &DiffusionModel, mesh: &MeshSpec) -> Self {
        let n = mesh.nodes;
        let h = mesh.h();
        let w = mesh.weights();
        let a: Vec<f64> = (0..n).map(|i| model.a(mesh.node(i))).collect();
        // F_{i+1/2} = c_i p_i + d_i p_{i+1}
        let mut c = vec![0.0; n - 1];
        let mut d = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let bh = model.drift(0.5 * (mesh.node(i) + mesh.node(i + 1)));
            c[i] = 0.5 * bh + a[i] / (2.0 * h);
            d[i] = 0.5 * bh - a[i + 1] / (2.0 * h);
        }
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let mut dd = 0.0;
            if i + 1 < n {
                dd -= c[i];
                upper[i] = -d[i] / w[i];
            }
            if i > 0 {
                dd += d[i - 1];
                lower[i] = c[i - 1] / w[i];
            }
            diag[i] = dd / w[i];
        }
        Self { lower, diag, upper }
    }

    /// `p ← (I − θτL)⁻¹(I + (1 − θ)τL)p`.
    fn step(&self, p: &mut [f64], tau: f64, theta: f64, work: &mut Work) -> Result<()> {
        let n = p.len();
        let e = (1.0 - theta) * tau;
        work.rhs.clear();
        for i in 0..n {
            let mut v = p[i] + e * self.diag[i] * p[i];
            if i > 0 {
                v += e * self.lower[i] * p[i - 1];
            }
            if i + 1 < n {
                v += e * self.upper[i] * p[i + 1];
            }
            work.rhs.push(v);
        }
        let it = theta * tau;
        work.lo.clear();
        work.di.clear();
        work.up.clear();
        for i in 0..n {
            work.lo.push(-it * self.lower[i]);
            work.di.push(1.0 - it * self.diag[i]);
            work.up.push(-it * self.upper[i]);
        }
        solve_tridiagonal(&work.lo, &work.di, &work.up, &mut work.rhs, &mut work.scratch)?;
        p.copy_from_slice(&work.rhs);
        Ok(())
    }
}

#[derive(Default)]
struct Work {
    rhs: Vec<f64>,
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
    scratch: Vec<f64>,
}

/// Smoothing time of the initial condition: the point mass at `x0` is replaced
/// by a Gaussian of standard deviation two mesh cells at `τ0 = 4h²/a(x0)`.
pub fn fp_start_time(model: &DiffusionModel, mesh: &MeshSpec) -> f64 {
    let h = mesh.h();
    4.0 * h * h / model.a(model.x0())
}

/// Laws of the diffusion started at `x0` at the given increasing output times.
pub fn fokker_planck_evolve(
    model: &DiffusionModel,
    times: &[f64],
    mesh: &MeshSpec,
    opts: &FpOptions,
) -> Result<Vec<MarginalLaw>> {
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("output times must increase strictly"));
    }
    if !(opts.dt > 0.0) {
        return Err(invalid("time step must be positive"));
    }
    let x0 = model.x0();
    let tau0 = fp_start_time(model, mesh);
    if times[0] <= tau0 {
        return Err(invalid(format!("first output time {} is below the smoothing time {tau0:e}", times[0])));
    }
    for i in 0..mesh.nodes {
        let a = model.a(mesh.node(i));
        if !(a > 0.0) || !a.is_finite() {
            return Err(numerical(format!("a(x) = {a} at mesh node {}", mesh.node(i))));
        }
    }
    let op = FpOperator::new(model, mesh);
    let h = mesh.h();
    let mean = x0 + model.drift(x0) * tau0;
    let mut p: Vec<f64> = mesh.points().iter().map(|&x| gaussian_density(x, mean, 4.0 * h * h)).collect();
    let w = mesh.weights();
    let m0 = mass(&p, &w);
    for v in p.iter_mut() {
        *v /= m0;
    }
    let mut work = Work::default();
    let mut out = Vec::with_capacity(times.len());
    let mut t = tau0;
    let mut first = true;
    for &t_out in times {
        let span = t_out - t;
        let k = (span / opts.dt).ceil().max(1.0) as usize;
        let tau = span / k as f64;
        for _ in 0..k {
            if first && opts.startup_steps > 0 {
                let q = tau / opts.startup_steps as f64;
                for _ in 0..opts.startup_steps {
                    op.step(&mut p, q, 1.0, &mut work)?;
                }
                first = false;
            } else {
                op.step(&mut p, tau, 0.5, &mut work)?;
            }
        }
        t = t_out;
        let peak = p.iter().fold(0.0f64, |m, &v| m.max(v));
        if let Some(v) = p.iter().find(|&&v| v < -1e-12 * peak.max(1.0)) {
            return Err(numerical(format!("density {v:e} below −1e-12 at t = {t}")));
        }
        out.push(MarginalLaw::from_density(t_out, *mesh, p.clone())?);
    }
    Ok(out)
}

fn mass(p: &[f64], w: &[f64]) -> f64 {
    let mut s = NeumaierSum::new();
    for (a, b) in p.iter().zip(w) {
        s.add(a * b);
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use std::collections::BTreeMap;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn bm_drift_heat_kernel() {
        let m = builtin("bm_drift", &params(&[("b", 0.4)])).unwrap();
        let mesh = MeshSpec::new(-7.0, 7.0, 1401).unwrap();
        let laws = fokker_planck_evolve(&m, &[0.5, 1.0], &mesh, &FpOptions::for_horizon(1.0)).unwrap();
        for law in &laws {
            let t = law.time;
            let err = mesh
                .points()
                .iter()
                .zip(law.density_values())
                .map(|(&x, &p)| (p - gaussian_density(x, 0.4 * t, t)).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-4, "t = {t}: {err}");
        }
    }

    #[test]
    fn ou_moments() {
        let m = builtin("ou", &params(&[])).unwrap();
        let mesh = MeshSpec::for_model(&m, 1.0, 2049, 8.0).unwrap();
        let law = fokker_planck_evolve(&m, &[1.0], &mesh, &FpOptions::for_horizon(1.0)).unwrap().remove(0);
        assert!((law.mean() - (-1.0f64).exp()).abs() < 1e-4);
        assert!((law.variance() - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-4);
    }

    #[test]
    fn mass_conserved() {
        let m = builtin("sin_elliptic", &params(&[])).unwrap();
        let mesh = MeshSpec::for_model(&m, 1.0, 1025, 8.0).unwrap();
        let times: Vec<f64> = (1..=128).map(|k| k as f64 / 128.0).collect();
        let laws = fokker_planck_evolve(&m, &times, &mesh, &FpOptions { dt: 1.0 / 128.0, startup_steps: 4 }).unwrap();
        for l in &laws {
            assert!((l.mass() - 1.0).abs() < 1e-12);
        }
    }
}
