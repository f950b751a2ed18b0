use super::config::ExperimentConfig;
use super::fit::RateFit;
use crate::error::Result;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

/// Configuration, hash, version and active deviations of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub deviation_flags: Vec<String>,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, deviation_flags: Vec<String>) -> Self {
        Self { version: crate::version(), config_hash: cfg.hash(), config: cfg.entries.clone(), deviation_flags }
    }
}

/// Per-N statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub m: usize,
    pub estimate: f64,
    pub std_error: f64,
    /// 95% normal interval of the estimate.
    pub ci: (f64, f64),
    /// Paths excluded after leaving the model domain.
    pub censored: usize,
    pub extra: BTreeMap<String, f64>,
}

impl RateRow {
    pub fn new(n: usize, m: usize, estimate: f64, std_error: f64, censored: usize) -> Self {
        let h = 1.959963984540054 * std_error;
        Self { n, m, estimate, std_error, ci: (estimate - h, estimate + h), censored, extra: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.extra.insert(key.to_string(), v);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub experiment: String,
    pub model: String,
    /// What `estimate` measures.
    pub estimate_label: String,
    pub rows: Vec<RateRow>,
    pub fit: Option<RateFit>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

/// Shortest round-trip-safe scientific form with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() { "NaN".into() } else { format!("{v:.16e}") }
}

impl RateReport {
    pub fn row(&self, n: usize) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn rows_csv(&self) -> String {
        let keys: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.extra.keys()).collect();
        let mut s = String::from("N,m,estimate,std_error,ci_lo,ci_hi,censored");
        for k in &keys {
            s.push(',');
            s.push_str(k);
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{}",
                r.n,
                r.m,
                fmt_f64(r.estimate),
                fmt_f64(r.std_error),
                fmt_f64(r.ci.0),
                fmt_f64(r.ci.1),
                r.censored
            );
            for k in &keys {
                s.push(',');
                if let Some(v) = r.extra.get(*k) {
                    s.push_str(&fmt_f64(*v));
                }
            }
            s.push('\n');
        }
        s
    }

    /// Pretty JSON as written to `report.json`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable report")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_outputs(dir, &self.to_json(), &self.rows_csv())
    }
}

/// One invariant of a verification suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, value, threshold, detail: detail.into() }
    }

    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value <= threshold, value, threshold, "value ≤ threshold")
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value >= threshold, value, threshold, "value ≥ threshold")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub experiment: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub provenance: Provenance,
}

impl SuiteReport {
    pub fn new(experiment: &str, checks: Vec<Check>, provenance: Provenance) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { experiment: experiment.to_string(), passed, checks, provenance }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn rows_csv(&self) -> String {
        let mut s = String::from("name,passed,value,threshold\n");
        for c in &self.checks {
            let _ = writeln!(s, "{},{},{},{}", c.name, c.passed as u8, fmt_f64(c.value), fmt_f64(c.threshold));
        }
        s
    }

    /// Pretty JSON as written to `report.json`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable report")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_outputs(dir, &self.to_json(), &self.rows_csv())
    }
}

fn write_outputs(dir: &Path, json: &str, csv: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), format!("{json}\n"))?;
    std::fs::write(dir.join("rows.csv"), csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_format() {
        let cfg = ExperimentConfig::parse("model = ou\ngrid.N = 8\nseed = 1\n", None).unwrap();
        let r = RateReport {
            experiment: "x".into(),
            model: "ou".into(),
            estimate_label: "e".into(),
            rows: vec![RateRow::new(8, 2, 0.1, 0.0, 0).with("w1", 1.0 / 3.0)],
            fit: None,
            notes: vec![],
            provenance: Provenance::new(&cfg, vec!["flag".into()]),
        };
        let csv = r.rows_csv();
        assert_eq!(
            csv,
            "N,m,estimate,std_error,ci_lo,ci_hi,censored,w1\n8,2,1.0000000000000001e-1,0.0000000000000000e0,1.0000000000000001e-1,1.0000000000000001e-1,0,3.3333333333333331e-1\n"
        );
        let v: f64 = "3.3333333333333331e-1".parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }
}
