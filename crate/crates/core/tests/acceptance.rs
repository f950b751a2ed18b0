//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `WASSERPATH_ACCEPTANCE=1,3` restricts the run to the listed criteria.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use wasserpath::experiments::verify::{BridgeSuiteOptions, PdeSuiteOptions, bridge_suite, pde_suite};
use wasserpath::experiments::{
    Check, ExperimentConfig, RateReport, run_lookback_bias, run_marginal_rate, run_ot_check, run_pathwise_rate,
    run_strong_rate, with_workers,
};

const SEED: u64 = 20240601;

struct Outcome {
    passed: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { passed: true, lines: Vec::new() }
    }

    fn require(&mut self, ok: bool, what: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {what}", if ok { "ok  " } else { "FAIL" }));
    }

    fn checks(&mut self, checks: &[Check]) {
        for c in checks {
            self.require(c.passed, format!("{} value {:.4e} threshold {:.3e} {}", c.name, c.value, c.threshold, c.detail));
        }
    }

    fn within(&mut self, start: Instant, limit: Duration) {
        let t = start.elapsed();
        self.require(t < limit, format!("wall time {:.1} s < {} s", t.as_secs_f64(), limit.as_secs()));
    }
}

type Result<T> = std::result::Result<T, String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(&configs().join(name), None).map_err(|e| e.to_string())
}

fn par<T: Send>(f: impl FnOnce() -> wasserpath::Result<T> + Send) -> Result<T> {
    with_workers(None, f).and_then(|r| r).map_err(|e| e.to_string())
}

fn slope_line(o: &mut Outcome, r: &RateReport, lo: f64, hi: f64) -> Option<f64> {
    match &r.fit {
        Some(f) => {
            o.require((lo..=hi).contains(&f.slope), format!("slope {:.4} in [{lo}, {hi}]", f.slope));
            Some(f.slope)
        }
        None => {
            o.require(false, "no rate fit".into());
            None
        }
    }
}

fn ot() -> Result<Outcome> {
    let mut o = Outcome::new();
    let cfg = config("ot_check.cfg")?;
    o.require(cfg.ot_instances >= 1000 && cfg.ot_max_atoms <= 7, format!("{} instances, n ≤ {}", cfg.ot_instances, cfg.ot_max_atoms));
    let start = Instant::now();
    let r = par(|| run_ot_check(&cfg))?;
    o.checks(&r.checks);
    o.within(start, Duration::from_secs(10));
    Ok(o)
}

fn marginal() -> Result<Outcome> {
    let mut o = Outcome::new();
    let r = par(|| run_marginal_rate(&config("marginal_sin_elliptic.cfg").map_err(wasserpath::Error::Config)?, None))?;
    slope_line(&mut o, &r, -1.15, -0.85);
    if let Some(f) = &r.fit {
        o.require(f.r_squared >= 0.98, format!("R^2 {:.4} ≥ 0.98", f.r_squared));
    }
    Ok(o)
}

fn strong() -> Result<Outcome> {
    let mut o = Outcome::new();
    let cfg = config("strong_sin_elliptic.cfg")?;
    o.require(cfg.paths == Some(100_000) && cfg.proxy_depth == 8, format!("M {:?}, proxy depth {}", cfg.paths, cfg.proxy_depth));
    let start = Instant::now();
    let r = par(|| run_strong_rate(&cfg))?;
    o.within(start, Duration::from_secs(15 * 60));
    slope_line(&mut o, &r, -0.65, -0.35);
    let m: Vec<f64> = r.rows.iter().map(|row| row.extra["sup_cont_x4_mean"]).collect();
    let (lo, hi) = m.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    o.require(hi / lo < 1.2, format!("E[sup |Xbar|^4] between {lo:.4} and {hi:.4} (< 20% spread)"));
    Ok(o)
}

fn pathwise() -> Result<Outcome> {
    let mut o = Outcome::new();
    let cfg = config("pathwise_sin_elliptic.cfg")?;
    o.require(cfg.paths == Some(10_000), format!("M {:?}", cfg.paths));
    let start = Instant::now();
    let r = par(|| run_pathwise_rate(&cfg))?.report;
    o.within(start, Duration::from_secs(60 * 60));
    for row in &r.rows {
        let sync = row.extra["sync_estimate"];
        o.require(row.estimate < sync, format!("N {} (m {}): pathwise {:.5e} < sync {:.5e}", row.n, row.m, row.estimate, sync));
    }
    slope_line(&mut o, &r, f64::NEG_INFINITY, -0.55);
    Ok(o)
}

fn lookback() -> Result<Outcome> {
    let mut o = Outcome::new();
    let start = Instant::now();
    let bm = par(|| run_lookback_bias(&config("lookback_bm_drift.cfg").map_err(wasserpath::Error::Config)?))?;
    for row in &bm.rows {
        let direct = row.extra["direct_bias"];
        let se = row.extra["euler_std_error"];
        o.require(
            direct.abs() <= 3.0 * se && row.estimate.abs() <= 3.0 * row.std_error.max(f64::MIN_POSITIVE),
            format!("bm_drift N {}: bias vs closed form {direct:.3e} (SE {se:.3e}), paired {:.3e}", row.n, row.estimate),
        );
    }
    let cfg = config("lookback_gbm.cfg")?;
    o.require(cfg.paths.is_some_and(|m| m <= 1_000_000), format!("gbm M {:?} ≤ 1e6", cfg.paths));
    let gbm = par(|| run_lookback_bias(&cfg))?;
    for w in gbm.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        o.require(
            b.estimate.abs() < a.estimate.abs(),
            format!("gbm |bias| N {}→{}: {:.4e} → {:.4e}", a.n, b.n, a.estimate.abs(), b.estimate.abs()),
        );
        if b.estimate.abs() > 3.0 * b.std_error {
            let ratio = a.estimate.abs() / b.estimate.abs();
            o.require(ratio >= 2f64.sqrt(), format!("gbm ratio N {}→{}: {ratio:.3} ≥ √2", a.n, b.n));
        }
    }
    o.within(start, Duration::from_secs(45 * 60));
    Ok(o)
}

fn bridge() -> Result<Outcome> {
    let mut o = Outcome::new();
    let checks = par(|| bridge_suite(&BridgeSuiteOptions::new(SEED)))?;
    o.checks(&checks);
    Ok(o)
}

fn pde() -> Result<Outcome> {
    let mut o = Outcome::new();
    let checks = par(|| pde_suite(&PdeSuiteOptions::default()))?;
    o.checks(&checks);
    Ok(o)
}

fn cli(args: &[&str]) -> Result<()> {
    let out = Command::new(env!("CARGO_BIN_EXE_wasserpath")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() { Ok(()) } else { Err(String::from_utf8_lossy(&out.stderr).into_owned()) }
}

fn determinism() -> Result<Outcome> {
    let mut o = Outcome::new();
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
    let cases = [
        ("strong-rate", "model = sin_elliptic\ngrid.N = 8, 16, 32\nsamples.M = 1000\nstrong.proxy_depth = 4\nseed = 20240601\n"),
        ("pathwise-rate", "model = sin_elliptic\ngrid.N = 16, 32\nsamples.M = 300\npathwise.reference_steps = 256\nseed = 20240601\n"),
        ("lookback-bias", "model = gbm\ngrid.N = 8, 16\nsamples.M = 5000\nlookback.payoff = lookback_floating\nseed = 20240601\n"),
    ];
    for (cmd, text) in cases {
        let cfg = root.join(format!("{cmd}.cfg"));
        std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let mut csv = Vec::new();
        for w in ["1", "2"] {
            let out = root.join(format!("{cmd}-w{w}"));
            cli(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", w])?;
            csv.push(std::fs::read(out.join("rows.csv")).map_err(|e| e.to_string())?);
        }
        o.require(csv[0] == csv[1], format!("{cmd}: rows.csv identical for --workers 1 and 2 ({} bytes)", csv[0].len()));
    }
    Ok(o)
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>);

const CRITERIA: [Criterion; 8] = [
    (1, "sorted matching equals brute-force OT", ot),
    (2, "marginal W2 rate for sin_elliptic", marginal),
    (3, "synchronous strong rate for sin_elliptic", strong),
    (4, "pathwise coupling rate and dominance", pathwise),
    (5, "lookback bias with bridge maxima", lookback),
    (6, "bridge verification suite", bridge),
    (7, "PDE residual and mass conservation", pde),
    (8, "worker-count determinism of rows.csv", determinism),
];

fn main() -> ExitCode {
    // libtest flags (e.g. --nocapture) are accepted and ignored
    let only: Option<Vec<u32>> = std::env::var("WASSERPATH_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome { passed: false, lines: vec![format!("FAIL error: {e}")] });
        for l in &outcome.lines {
            println!("    {l}");
        }
        println!(
            "{} criterion {id}: {name} ({:.1} s)",
            if outcome.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!outcome.passed);
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
