//! Lookback bias: Euler with Brownian-bridge maxima inside each step, against an
//! exact reference path sharing the Brownian path and the bridge uniforms.

use super::config::{ExperimentConfig, Payoff};
use super::fit::fit_rows;
use super::report::{Provenance, RateReport, RateRow};
use super::runner::{MeanAcc, map_chunks};
use crate::error::{Error, Result, invalid};
use crate::model::{DiffusionModel, ExactLaw};
use crate::numeric::{integrate_adaptive, norm_cdf};
use crate::rng::{Purpose, StreamKey};
use crate::simulate::{BrownianTree, bridge_max};

/// `P(max_{s ≤ t} (νs + σW_s) > y)` for `y ≥ 0`.
pub fn running_max_sf(nu: f64, sigma: f64, t: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    let s = sigma * t.sqrt();
    let tail = norm_cdf((-y - nu * t) / s);
    let reflected = if tail > 0.0 { (2.0 * nu * y / (sigma * sigma) + tail.ln()).exp() } else { 0.0 };
    (1.0 - norm_cdf((y - nu * t) / s) + reflected).min(1.0)
}

/// `∫_a^∞ w(y)·P(M > y) dy` with the integrand's mass below `y_hi`.
fn tail_integral(nu: f64, sigma: f64, t: f64, a: f64, y_hi: f64, w: impl Fn(f64) -> f64) -> Result<f64> {
    let a = a.max(0.0);
    if y_hi <= a {
        return Ok(0.0);
    }
    integrate_adaptive(a, y_hi, 1e-13, 40, &mut |y| w(y) * running_max_sf(nu, sigma, t, y))
}

/// `E[e^{M}]` for `M` the running maximum of `νs + σW_s` on `[0, t]`.
pub fn gbm_expected_exp_max(nu: f64, sigma: f64, t: f64) -> f64 {
    let s = sigma * t.sqrt();
    let c = 1.0 + 2.0 * nu / (sigma * sigma);
    let a = -norm_cdf(nu * t / s) + (nu * t + 0.5 * s * s).exp() * norm_cdf((nu * t + s * s) / s);
    let b = -norm_cdf(-nu * t / s) + (-c * nu * t + 0.5 * c * c * s * s).exp() * norm_cdf((-nu * t + c * s * s) / s);
    1.0 + a + b / c
}

/// `E[f(X_T, max_{t ≤ T} X_t)]` for bm_drift and gbm from `x0`.
pub fn lookback_closed_form(law: &ExactLaw, x0: f64, horizon: f64, payoff: &Payoff) -> Result<f64> {
    let t = horizon;
    match *law {
        ExactLaw::BmDrift { b, sigma } => {
            let hi = b.max(0.0) * t + 16.0 * sigma * t.sqrt();
            let e_max = x0 + tail_integral(b, sigma, t, 0.0, hi, |_| 1.0)?;
            Ok(match *payoff {
                Payoff::Identity => e_max,
                Payoff::Floating => e_max - (x0 + b * t),
                Payoff::Terminal => x0 + b * t,
                Payoff::Call { strike } if strike <= x0 => e_max - strike,
                Payoff::Call { strike } => tail_integral(b, sigma, t, strike - x0, hi, |_| 1.0)?,
            })
        }
        ExactLaw::Gbm { mu, sigma } => {
            let nu = mu - 0.5 * sigma * sigma;
            let s = sigma * t.sqrt();
            let hi = nu.max(0.0) * t + s * s + 16.0 * s;
            // E[S0 e^M] = S0 (1 + ∫_0^∞ e^y P(M > y) dy)
            let e_max = x0 * (1.0 + tail_integral(nu, sigma, t, 0.0, hi, f64::exp)?);
            Ok(match *payoff {
                Payoff::Identity => e_max,
                Payoff::Floating => e_max - x0 * (mu * t).exp(),
                Payoff::Terminal => x0 * (mu * t).exp(),
                Payoff::Call { strike } if strike <= x0 => e_max - strike,
                Payoff::Call { strike } => x0 * tail_integral(nu, sigma, t, (strike / x0).ln(), hi, f64::exp)?,
            })
        }
        ExactLaw::Ou { .. } => Err(invalid("no closed-form lookback for ou")),
    }
}

/// How the reference path is built on the sub-grid.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RefKind {
    /// Constant coefficients: the exact path is the sub-grid Euler recursion.
    Arithmetic { b: f64, sigma: f64 },
    /// Exact log path with bridge maxima in log space.
    Log { nu: f64, sigma: f64 },
    /// Euler at the sub-grid resolution.
    FineEuler,
}

struct Plan {
    model: DiffusionModel,
    horizon: f64,
    seed: u64,
    payoff: Payoff,
    n_list: Vec<usize>,
    sub_steps: usize,
    sub_level: u32,
    reference: RefKind,
}

#[derive(Clone, Default)]
struct NAcc {
    paired: MeanAcc,
    euler: MeanAcc,
    censored: usize,
}

#[derive(Clone, Default)]
struct ChunkAcc {
    per_n: Vec<NAcc>,
    reference: MeanAcc,
}

impl Plan {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let model = cfg.model()?;
        let n_max = *cfg.n_list.last().ok_or_else(|| invalid("empty grid.N"))?;
        let sub_steps = n_max << cfg.lookback_sub_depth;
        let tree = BrownianTree::for_steps(cfg.seed, 0, cfg.horizon, sub_steps);
        let sub_level = tree.level_of(sub_steps)?;
        for &n in &cfg.n_list {
            tree.level_of(n)?;
        }
        let reference = match model.exact_law() {
            Some(ExactLaw::BmDrift { b, sigma }) => RefKind::Arithmetic { b, sigma },
            Some(ExactLaw::Gbm { mu, sigma }) => RefKind::Log { nu: mu - 0.5 * sigma * sigma, sigma },
            _ => RefKind::FineEuler,
        };
        Ok(Self {
            model,
            horizon: cfg.horizon,
            seed: cfg.seed,
            payoff: cfg.payoff,
            n_list: cfg.n_list.clone(),
            sub_steps,
            sub_level,
            reference,
        })
    }

    /// Euler with `n` steps, sub-stepped on the shared increments with frozen
    /// coefficients; returns `(X̄_T, max)`.
    fn euler(&self, n: usize, dw: &[f64], u: &[f64]) -> Result<(f64, f64)> {
        let r = self.sub_steps / n;
        let d = self.horizon / self.sub_steps as f64;
        let mut y = self.model.x0();
        let mut mx = y;
        for k in 0..n {
            let (b, s) = self.model.coefficients(y);
            if !(s > 0.0) {
                return Err(Error::DomainExit { step: k, value: y });
            }
            let mut v = y;
            for j in k * r..(k + 1) * r {
                let next = v + s * dw[j] + b * d;
                mx = mx.max(bridge_max(v, next, s, d, u[j])?);
                v = next;
            }
            y = v;
            if !self.model.in_domain(y) || !y.is_finite() {
                return Err(Error::DomainExit { step: k + 1, value: y });
            }
        }
        Ok((y, mx))
    }

    fn reference(&self, dw: &[f64], u: &[f64]) -> Result<(f64, f64)> {
        let d = self.horizon / self.sub_steps as f64;
        match self.reference {
            RefKind::Arithmetic { b, sigma } => {
                let mut v = self.model.x0();
                let mut mx = v;
                for (j, &w) in dw.iter().enumerate() {
                    let next = v + sigma * w + b * d;
                    mx = mx.max(bridge_max(v, next, sigma, d, u[j])?);
                    v = next;
                }
                Ok((v, mx))
            }
            RefKind::Log { nu, sigma } => {
                let mut l = self.model.x0().ln();
                let mut mx = l;
                for (j, &w) in dw.iter().enumerate() {
                    let next = l + nu * d + sigma * w;
                    mx = mx.max(bridge_max(l, next, sigma, d, u[j])?);
                    l = next;
                }
                Ok((l.exp(), mx.exp()))
            }
            RefKind::FineEuler => self.euler(self.sub_steps, dw, u),
        }
    }

    fn chunk(&self, first: u64, end: u64) -> Result<ChunkAcc> {
        let mut acc = ChunkAcc { per_n: vec![NAcc::default(); self.n_list.len()], reference: MeanAcc::default() };
        let key = StreamKey::new(self.seed, Purpose::BridgeMax);
        let mut u = vec![0.0; self.sub_steps];
        for p in first..end {
            let dw = BrownianTree::for_steps(self.seed, p, self.horizon, self.sub_steps).level(self.sub_level)?;
            let mut c = key.cursor(p, 0, 0);
            u.iter_mut().for_each(|v| *v = c.uniform());
            let (rx, rm) = match self.reference(&dw, &u) {
                Ok(v) => v,
                Err(Error::DomainExit { .. }) => {
                    acc.per_n.iter_mut().for_each(|a| a.censored += 1);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let f_ref = self.payoff.eval(rx, rm);
            acc.reference.push(f_ref);
            for (i, &n) in self.n_list.iter().enumerate() {
                match self.euler(n, &dw, &u) {
                    Ok((x, m)) => {
                        let f = self.payoff.eval(x, m);
                        acc.per_n[i].euler.push(f);
                        acc.per_n[i].paired.push(f - f_ref);
                    }
                    Err(Error::DomainExit { .. }) => acc.per_n[i].censored += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(acc)
    }
}

/// Runs the sweep; call inside [`super::runner::with_workers`] to bound threads.
pub fn run_lookback_bias(cfg: &ExperimentConfig) -> Result<RateReport> {
    let plan = Plan::new(cfg)?;
    let paths = cfg.require_paths()? as u64;
    let parts = map_chunks(paths, |a, b| plan.chunk(a, b))?;
    let mut total = ChunkAcc { per_n: vec![NAcc::default(); plan.n_list.len()], reference: MeanAcc::default() };
    for part in &parts {
        total.reference.merge(&part.reference);
        for (t, p) in total.per_n.iter_mut().zip(&part.per_n) {
            t.paired.merge(&p.paired);
            t.euler.merge(&p.euler);
            t.censored += p.censored;
        }
    }
    let closed = match plan.model.exact_law() {
        Some(law @ (ExactLaw::BmDrift { .. } | ExactLaw::Gbm { .. })) => {
            Some(lookback_closed_form(&law, plan.model.x0(), plan.horizon, &plan.payoff)?)
        }
        _ => None,
    };
    let mut rows = Vec::new();
    for (i, &n) in plan.n_list.iter().enumerate() {
        let a = &total.per_n[i];
        let mut row = RateRow::new(n, 0, a.paired.mean(), a.paired.std_error(), a.censored)
            .with("euler_mean", a.euler.mean())
            .with("euler_std_error", a.euler.std_error());
        if let Some(c) = closed {
            row = row.with("closed_form", c).with("direct_bias", a.euler.mean() - c);
        }
        rows.push(row);
    }
    let mut notes = Vec::new();
    let resolved: Vec<RateRow> = rows
        .iter()
        .filter(|r| r.estimate.abs() > 3.0 * r.std_error)
        .map(|r| RateRow::new(r.n, r.m, r.estimate.abs(), r.std_error, r.censored))
        .collect();
    let fit = if resolved.len() < 3 {
        notes.push(format!("rate indeterminate at this M ({} of {} biases exceed 3 SE)", resolved.len(), rows.len()));
        None
    } else {
        fit_rows(&resolved, true, &mut notes)?
    };
    if let Some(c) = closed {
        let (rm, rse) = (total.reference.mean(), total.reference.std_error());
        notes.push(format!("reference mean {rm:.6e} (SE {rse:.2e}) against closed form {c:.6e}"));
    }
    let reference = match plan.reference {
        RefKind::Arithmetic { .. } => "exact path on the sub-grid (constant coefficients)",
        RefKind::Log { .. } => "exact log-space path on the sub-grid",
        RefKind::FineEuler => "sub-grid Euler proxy",
    };
    let flags = vec![
        format!("reference: {reference}"),
        format!("sub-grid {} steps; bridge maxima from shared uniforms", plan.sub_steps),
        "common random numbers across N".to_string(),
        format!("payoff: {}", plan.payoff.label()),
    ];
    Ok(RateReport {
        experiment: "lookback-bias".into(),
        model: plan.model.name().to_string(),
        estimate_label: format!("E[f(Xbar)] - E[f(X)] paired, f = {}", plan.payoff.label()),
        rows,
        fit,
        notes,
        provenance: Provenance::new(cfg, flags),
    })
}
