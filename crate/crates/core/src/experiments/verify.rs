//! Verification suite: distributional and exactness invariants of every layer.

use super::config::ExperimentConfig;
use super::ot_check::{OT_TOLERANCE, ot_instance};
use super::report::{Check, Provenance, SuiteReport};
use crate::bridge::{
    BridgeScore, GQuadrature, ScoreMode, ScoreOptions, bridge_values_into, extract_into, g_estimate, reconstruct_check,
};
use crate::coupling::{
    CouplingContext, DiscreteMeasure, assemble_coupled_paths, empirical_w1d, euler_bridge_fill, ot_bruteforce,
    reconstruct_beta,
};
use crate::density::{
    FpOptions, MeshSpec, ResidualOptions, euler_marginal_evolve, fokker_planck_evolve, fp_inverse_cdf_residual,
};
use crate::error::Result;
use crate::model::{DiffusionModel, LampertiOptions, builtin, lamperti};
use crate::numeric::norm_cdf;
use crate::rng::{Purpose, StreamKey};
use crate::simulate::{BrownianTree, GridSpec, bridge_max, bridge_max_tail, euler_values, exact_values};
use crate::stats::{KsResult, ks_one_sample, ks_two_sample};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Significance level of the distributional checks.
pub const KS_ALPHA: f64 = 0.01;

fn model(name: &str, kv: &[(&str, f64)]) -> Result<DiffusionModel> {
    let p: BTreeMap<String, f64> = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin(name, &p)
}

fn ks_check(name: &str, r: &KsResult) -> Check {
    Check::new(name, r.p_value > KS_ALPHA, r.p_value, KS_ALPHA, format!("KS p-value > {KS_ALPHA}, D = {:.4e}, n = {}", r.statistic, r.n_effective))
}

/// Sub-seed for check `k`, so checks never share random numbers.
fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Settings of [`bridge_suite`].
#[derive(Debug, Clone, Copy)]
pub struct BridgeSuiteOptions {
    pub horizon: f64,
    pub paths: usize,
    pub probes: usize,
    pub lipschitz_paths: usize,
    pub mg: usize,
    pub seed: u64,
}

impl BridgeSuiteOptions {
    pub fn new(seed: u64) -> Self {
        Self { horizon: 1.0, paths: 2000, probes: 50, lipschitz_paths: 200, mg: 4096, seed }
    }
}

/// Bridge reconstruction, bridge marginals, `g` and score accuracy, and the
/// stability of the endpoint-Lipschitz constant.
pub fn bridge_suite(o: &BridgeSuiteOptions) -> Result<Vec<Check>> {
    let t = o.horizon;
    let mut checks = Vec::new();

    for (k, (name, m)) in [("bm_drift", model("bm_drift", &[("b", 0.3)])?), ("ou", model("ou", &[])?)].into_iter().enumerate() {
        let r = reconstruct_check(&m, t, o.paths, 256, sub_seed(o.seed, k as u64))?;
        let p = r.quarter.p_value.min(r.midpoint.p_value).min(r.pairing.p_value);
        checks.push(Check::new(
            &format!("reconstruct_{name}"),
            p > KS_ALPHA,
            p,
            KS_ALPHA,
            "min KS p-value over quarter point, midpoint and pairing statistic",
        ));
        checks.push(Check::new(
            &format!("reconstruct_{name}_shuffled_control"),
            r.shuffled_control.p_value < 1e-3,
            r.shuffled_control.p_value,
            1e-3,
            "KS p-value of the mis-paired control must be < 0.001",
        ));
    }

    // Brownian bridge 0 → 0.7 on [0, T]: the midpoint is N(0.35, T/4).
    {
        let bm = model("bm_drift", &[])?;
        let score = BridgeScore::new(&bm, ScoreOptions::new(ScoreMode::ClosedForm, t))?;
        let steps = 256;
        let dt = t / steps as f64;
        let key = StreamKey::new(sub_seed(o.seed, 2), Purpose::BridgeNoise);
        let mut inc = vec![0.0; steps];
        let mut z = Vec::new();
        let mut mids = Vec::with_capacity(o.paths);
        for i in 0..o.paths as u64 {
            let mut c = key.cursor(i, 0, 0);
            inc.iter_mut().for_each(|v| *v = dt.sqrt() * c.normal());
            bridge_values_into(&score, 0.0, 0.7, dt, &inc, &mut z)?;
            mids.push(z[steps / 2]);
        }
        let sd = (0.25 * t).sqrt();
        checks.push(ks_check("bridge_midpoint_ks", &ks_one_sample(&mids, |x| norm_cdf((x - 0.35) / sd))));
    }

    // g vanishes identically when α is constant (gbm, bm_drift).
    {
        let mut worst = 0.0f64;
        let quad = GQuadrature::new(3, 4, 12);
        for m in [model("gbm", &[])?, model("bm_drift", &[("b", 0.4), ("sigma", 1.5)])?] {
            let lm = lamperti(&m, &LampertiOptions::for_model(&m, t))?;
            for &(tt, xh, yh) in &[(0.1, -0.3, 0.2), (0.5, 0.0, 1.0), (1.0, 0.7, -0.4)] {
                let g = g_estimate(&lm, tt, xh, yh, 64, 32, o.seed, 0)?;
                worst = worst.max(g.value.abs()).max(g.std_error).max(quad.eval(&lm, tt, xh, yh).abs());
            }
        }
        checks.push(Check::new("g_zero_constant_alpha", worst == 0.0, worst, 0.0, "max |g| must be exactly 0"));
    }

    // Monte Carlo score against the closed form (OU) at random probes.
    {
        let ou = model("ou", &[])?;
        let law = ou.exact_law().expect("ou has a closed form");
        let mut opts = ScoreOptions::new(ScoreMode::LampertiMc, t);
        opts.mg = o.mg;
        opts.seed = sub_seed(o.seed, 3);
        let s = BridgeScore::new(&ou, opts)?;
        let key = StreamKey::new(sub_seed(o.seed, 4), Purpose::Probe);
        let mut worst = 0.0f64;
        for i in 0..o.probes as u64 {
            let mut c = key.cursor(i, 0, 0);
            let tt = t * (0.05 + 0.95 * c.uniform());
            let x = ou.x0() + 2.0 * c.uniform() - 1.0;
            let y = ou.x0() + 2.0 * c.uniform() - 1.0;
            let v = s.score_with_error(tt, x, y)?;
            worst = worst.max((v.value - law.score(tt, x, y)).abs() / v.std_error);
        }
        checks.push(Check::new(
            "lamperti_mc_vs_closed_form",
            worst <= 3.0,
            worst,
            3.0,
            format!("max |score − exact| / SE over {} probes", o.probes),
        ));
    }

    // Endpoint-Lipschitz constant of the bridge map (same noise), ε vs ε/2.
    {
        let m = model("sin_elliptic", &[])?;
        let score = BridgeScore::auto(&m, t)?;
        let steps = 256;
        let dt = t / steps as f64;
        let (noise, ends) =
            (StreamKey::new(sub_seed(o.seed, 5), Purpose::BridgeNoise), StreamKey::new(sub_seed(o.seed, 5), Purpose::Endpoint));
        let x = m.x0();
        let mut inc = vec![0.0; steps];
        let (mut z0, mut z1) = (Vec::new(), Vec::new());
        let mut lip = |eps: f64| -> Result<f64> {
            let mut c_max = 0.0f64;
            for i in 0..o.lipschitz_paths as u64 {
                let mut c = noise.cursor(i, 0, 0);
                inc.iter_mut().for_each(|v| *v = dt.sqrt() * c.normal());
                let y = x + 0.8 * ends.cursor(i, 0, 0).normal();
                bridge_values_into(&score, x, y, dt, &inc, &mut z0)?;
                bridge_values_into(&score, x + eps, y - eps, dt, &inc, &mut z1)?;
                let sup = z0.iter().zip(&z1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                c_max = c_max.max(sup / (2.0 * eps));
            }
            Ok(c_max)
        };
        let (c1, c2) = (lip(0.02)?, lip(0.01)?);
        let ratio = c1 / c2;
        checks.push(Check::new(
            "endpoint_lipschitz_stability",
            (0.75..=1.25).contains(&ratio),
            ratio,
            0.25,
            format!("C(ε)/C(ε/2) within 1 ± 0.25; C(0.02) = {c1:.4}, C(0.01) = {c2:.4}"),
        ));
    }
    Ok(checks)
}

/// Settings of [`pde_suite`].
#[derive(Debug, Clone, Copy)]
pub struct PdeSuiteOptions {
    pub horizon: f64,
    pub mesh_nodes: usize,
    pub mesh_width: f64,
    pub fp_steps: usize,
}

impl Default for PdeSuiteOptions {
    fn default() -> Self {
        Self { horizon: 1.0, mesh_nodes: 4096, mesh_width: 8.0, fp_steps: 4096 }
    }
}

/// Inverse-CDF PDE residual with its refinement behaviour, and mass conservation
/// of the Fokker–Planck and Euler marginal solvers.
pub fn pde_suite(o: &PdeSuiteOptions) -> Result<Vec<Check>> {
    let t = o.horizon;
    let mut checks = Vec::new();
    let bm = model("bm_drift", &[("b", 0.1)])?;
    let mesh = MeshSpec::for_model(&bm, t, o.mesh_nodes, o.mesh_width)?;
    let fp = FpOptions { dt: t / o.fp_steps as f64, startup_steps: 4 };
    let ropts = ResidualOptions::for_horizon(t);
    let (r1, _) = fp_inverse_cdf_residual(&bm, t, &mesh, &fp, t / 256.0, &ropts)?;
    checks.push(Check::at_most("pde_residual_bm_drift", r1.max, 1e-3));
    let fine = MeshSpec::new(mesh.lo, mesh.hi, 2 * (mesh.nodes - 1) + 1)?;
    let fp2 = FpOptions { dt: 0.5 * fp.dt, ..fp };
    let r2opts = ResidualOptions { h_u: 0.5 * ropts.h_u, ..ropts };
    let (r2, _) = fp_inverse_cdf_residual(&bm, t, &fine, &fp2, t / 512.0, &r2opts)?;
    let mut c = Check::at_least("pde_residual_halving", r1.max / r2.max, 3.0);
    c.detail = format!("residual reduction under halving ({:.3e} → {:.3e})", r1.max, r2.max);
    checks.push(c);

    let se = model("sin_elliptic", &[])?;
    let mesh = MeshSpec::for_model(&se, t, o.mesh_nodes, o.mesh_width)?;
    let times: Vec<f64> = (1..=16).map(|k| k as f64 * t / 16.0).collect();
    let laws = fokker_planck_evolve(&se, &times, &mesh, &fp)?;
    let fp_mass = laws.iter().map(|l| (l.mass() - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("fp_mass", fp_mass, 1e-7));
    let grid = GridSpec::new(t, 64, 1)?;
    let el = euler_marginal_evolve(&se, &grid, &mesh, true)?;
    let e_mass = el.nodes.iter().chain(&el.midpoints).map(|l| (l.mass() - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("euler_mass", e_mass, 1e-7));
    Ok(checks)
}

/// Fixed optimal-transport examples and random agreement with brute force.
pub fn ot_suite(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let w = empirical_w1d(&[0.0, 1.0], &[0.5, 1.5], 1.0)?;
    checks.push(Check::at_most("ot_shift_example", (w - 0.5).abs(), 1e-15));
    let w = empirical_w1d(&[0.0, 2.0], &[1.0], 2.0)?;
    checks.push(Check::at_most("ot_point_mass_example", (w - 1.0).abs(), 1e-15));
    // unequal counts: splitting every atom to the common multiple gives the same cost
    let (a, b) = ([0.0, 1.0, 4.0], [0.5, 2.0]);
    let split = |v: &[f64], r: usize| v.iter().flat_map(|&x| std::iter::repeat_n(x, r)).collect::<Vec<_>>();
    let direct = empirical_w1d(&a, &b, 2.0)?;
    let brute = ot_bruteforce(&DiscreteMeasure::uniform(split(&a, 2))?, &DiscreteMeasure::uniform(split(&b, 3))?, 2.0, false)?;
    checks.push(Check::at_most("ot_unequal_counts", (direct - brute).abs(), OT_TOLERANCE));
    let mut worst = 0.0f64;
    for i in 0..instances as u64 {
        let (a, b, p) = ot_instance(seed, i, 7, &[1.0, 2.0, 3.0]);
        let s = empirical_w1d(&a, &b, p)?;
        let bf = ot_bruteforce(&DiscreteMeasure::uniform(a)?, &DiscreteMeasure::uniform(b)?, p, false)?;
        worst = worst.max((s - bf).abs());
    }
    checks.push(Check::at_most("ot_random_instances", worst, OT_TOLERANCE));
    Ok(checks)
}

/// Brownian refinement, bridge maxima, Euler-bridge fill and `β` reconstruction.
pub fn simulation_suite(seed: u64, paths: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    // children sum to their parent up to one rounding
    let mut worst = 0.0f64;
    for p in 0..20 {
        let lv = BrownianTree::for_steps(seed, p, 1.0, 64).levels(6)?;
        for r in 1..lv.len() {
            for (k, &parent) in lv[r - 1].iter().enumerate() {
                let (l, rr) = (lv[r][2 * k], lv[r][2 * k + 1]);
                worst = worst.max((l + rr - parent).abs() / (l.abs().max(rr.abs()) * f64::EPSILON));
            }
        }
    }
    // right = parent − left and left + right each round once: ≤ 1.5 ulp of max(|l|, |r|)
    checks.push(Check::at_most("brownian_refinement_ulps", worst, 1.5));

    // bridge maxima against their tail law
    let key = StreamKey::new(sub_seed(seed, 10), Purpose::BridgeMax);
    let (a, b, s, dt) = (0.2, -0.1, 0.8, 0.05);
    let mut maxima = Vec::with_capacity(paths);
    for i in 0..paths as u64 {
        maxima.push(bridge_max(a, b, s, dt, key.cursor(i, 0, 0).uniform())?);
    }
    checks.push(ks_check("bridge_max_tail_ks", &ks_one_sample(&maxima, |y| 1.0 - bridge_max_tail(a, b, s, dt, y))));

    // Euler-bridge fill of Euler coarse values: the filled path is an Euler path,
    // so its mid-interval value and its driving increments have the Euler laws.
    let m = model("sin_elliptic", &[])?;
    let grid = GridSpec::new(1.0, 16, 4)?;
    let dt = grid.dt();
    let mut orig = Vec::with_capacity(paths);
    let mut filled = Vec::with_capacity(paths);
    let mut betas = Vec::with_capacity(paths);
    let mut round_trip = 0.0f64;
    let mut x = Vec::new();
    let mut re = Vec::new();
    let fseed = sub_seed(seed, 11);
    for p in 0..paths as u64 {
        let tree = BrownianTree::for_steps(fseed, p, 1.0, 16);
        euler_values(&m, m.x0(), dt, &tree.level(4)?, &mut x)?;
        let coarse: Vec<f64> = (0..=grid.coarse_count()).map(|l| x[grid.coarse_index(l)]).collect();
        let f = euler_bridge_fill(&m, &grid, &coarse, fseed, p)?;
        let beta = reconstruct_beta(&m, &f, dt)?;
        euler_values(&m, m.x0(), dt, &beta, &mut re)?;
        round_trip = round_trip.max(re.iter().zip(&f).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
        orig.push(x[2]);
        filled.push(f[2]);
        betas.push(beta[1] / dt.sqrt());
    }
    checks.push(ks_check("fill_composition_ks", &ks_two_sample(&orig, &filled)));
    checks.push(ks_check("beta_normality_ks", &ks_one_sample(&betas, norm_cdf)));
    checks.push(Check::at_most("beta_round_trip", round_trip, 1e-12));
    Ok(checks)
}

/// Lamperti and extraction round trips, and exactness of the coupling for
/// constant coefficients.
pub fn coupling_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let se = model("sin_elliptic", &[])?;
    let lm = lamperti(&se, &LampertiOptions::for_model(&se, 1.0))?;
    let worst = (0..=100).map(|i| -3.0 + 0.06 * i as f64).map(|x| (lm.phi_inverse(lm.phi(x)) - x).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("lamperti_round_trip", worst, 1e-10));

    let score = BridgeScore::auto(&se, 1.0)?;
    let tree = BrownianTree::for_steps(seed, 0, 1.0, 64);
    let inc = tree.level(6)?;
    let dt = 1.0 / 64.0;
    let mut x = Vec::new();
    euler_values(&se, se.x0(), dt, &inc, &mut x)?;
    let mut wl = Vec::new();
    extract_into(&score, &x, &inc, dt, &mut wl)?;
    let mut z = Vec::new();
    bridge_values_into(&score, x[0], x[64], dt, &wl, &mut z)?;
    let worst = x.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("extract_bridge_round_trip", worst, 1e-12));

    let bm = model("bm_drift", &[("b", 0.3), ("sigma", 0.7)])?;
    let score = Arc::new(BridgeScore::new(&bm, ScoreOptions::new(ScoreMode::ClosedForm, 1.0))?);
    let ctx = CouplingContext::new(&bm, GridSpec::with_default_m(1.0, 32)?, 8, score, seed)?;
    let law = bm.exact_law().expect("bm_drift has a closed form");
    let mut worst = 0.0f64;
    for p in 0..10 {
        let inc = BrownianTree::for_steps(seed, p, 1.0, 256).level(8)?;
        exact_values(&law, bm.x0(), 1.0 / 256.0, &inc, &mut x);
        let c = assemble_coupled_paths(&ctx, &x, &inc, p)?;
        worst = worst.max(c.max_coarse_gap).max(c.sup_ybar_chi).max(c.sup_x_chitilde);
    }
    checks.push(Check::at_most("constant_coefficient_coupling_gap", worst, 1e-10));
    Ok(checks)
}

/// Runs every suite.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let mut opts = BridgeSuiteOptions::new(cfg.seed);
    opts.horizon = cfg.horizon;
    opts.paths = cfg.verify_paths;
    if let Some(mg) = cfg.bridge_mg {
        opts.mg = mg;
    }
    let mut checks = ot_suite(cfg.seed, 200)?;
    checks.extend(simulation_suite(cfg.seed, cfg.verify_paths)?);
    checks.extend(coupling_suite(cfg.seed)?);
    checks.extend(bridge_suite(&opts)?);
    checks.extend(pde_suite(&PdeSuiteOptions {
        horizon: cfg.horizon,
        mesh_nodes: cfg.mesh_nodes,
        mesh_width: cfg.mesh_width,
        fp_steps: cfg.fp_steps,
    })?);
    Ok(SuiteReport::new("verify", checks, Provenance::new(cfg, Vec::new())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suites_pass() {
        let mut checks = ot_suite(5, 50).unwrap();
        checks.extend(simulation_suite(5, 500).unwrap());
        checks.extend(coupling_suite(5).unwrap());
        for c in &checks {
            assert!(c.passed, "{c:?}");
        }
    }
}
