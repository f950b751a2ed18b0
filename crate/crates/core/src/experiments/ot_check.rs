//! Random check of sorted matching against exhaustive optimal transport.

use super::config::ExperimentConfig;
use super::report::{Check, Provenance, SuiteReport};
use crate::coupling::{DiscreteMeasure, empirical_w1d, ot_bruteforce};
use crate::error::{Result, invalid};
use crate::rng::{Purpose, StreamKey};

/// Agreement required between the two solvers.
pub const OT_TOLERANCE: f64 = 1e-12;

/// Instance `i`: atom count in `1..=max_atoms`, atoms uniform on `[−5, 5]`,
/// exponent drawn from `ps`.
pub fn ot_instance(seed: u64, i: u64, max_atoms: usize, ps: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let mut c = StreamKey::new(seed, Purpose::Probe).cursor(i, 0, 0);
    let n = 1 + ((c.uniform() * max_atoms as f64) as usize).min(max_atoms - 1);
    let p = ps[((c.uniform() * ps.len() as f64) as usize).min(ps.len() - 1)];
    let mut atoms = || (0..n).map(|_| -5.0 + 10.0 * c.uniform()).collect::<Vec<_>>();
    let a = atoms();
    let b = atoms();
    (a, b, p)
}

pub fn run_ot_check(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    if cfg.ot_max_atoms == 0 || cfg.ot_max_atoms > crate::coupling::BRUTE_FORCE_MAX {
        return Err(invalid(format!("ot.max_atoms must lie in 1..={}", crate::coupling::BRUTE_FORCE_MAX)));
    }
    let mut worst = vec![0.0f64; cfg.ot_p.len()];
    let mut count = vec![0usize; cfg.ot_p.len()];
    for i in 0..cfg.ot_instances as u64 {
        let (a, b, p) = ot_instance(cfg.seed, i, cfg.ot_max_atoms, &cfg.ot_p);
        let sorted = empirical_w1d(&a, &b, p)?;
        let brute = ot_bruteforce(&DiscreteMeasure::uniform(a)?, &DiscreteMeasure::uniform(b)?, p, false)?;
        let k = cfg.ot_p.iter().position(|&q| q == p).unwrap_or(0);
        worst[k] = worst[k].max((sorted - brute).abs());
        count[k] += 1;
    }
    let mut checks = Vec::new();
    for (k, &p) in cfg.ot_p.iter().enumerate() {
        let mut c = Check::at_most(&format!("sorted_vs_bruteforce_p{p}"), worst[k], OT_TOLERANCE);
        c.detail = format!("{} instances, max |difference|", count[k]);
        checks.push(c);
    }
    let all = worst.iter().copied().fold(0.0, f64::max);
    let mut c = Check::at_most("sorted_vs_bruteforce", all, OT_TOLERANCE);
    c.detail = format!("{} instances, up to {} atoms", cfg.ot_instances, cfg.ot_max_atoms);
    checks.push(c);
    Ok(SuiteReport::new("ot-check", checks, Provenance::new(cfg, Vec::new())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible_and_in_range() {
        let (a, b, p) = ot_instance(3, 17, 7, &[1.0, 2.0, 3.0]);
        assert_eq!((a.clone(), b.clone(), p), ot_instance(3, 17, 7, &[1.0, 2.0, 3.0]));
        assert!(a.len() == b.len() && (1..=7).contains(&a.len()));
        assert!(a.iter().chain(&b).all(|x| (-5.0..=5.0).contains(x)));
    }

    #[test]
    fn small_run_passes() {
        let cfg = ExperimentConfig::parse("model = bm_drift\ngrid.N = 1\nseed = 1\not.instances = 200\n", None).unwrap();
        let r = run_ot_check(&cfg).unwrap();
        assert!(r.passed, "{:?}", r.checks);
    }
}
