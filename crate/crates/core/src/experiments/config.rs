use crate::bridge::ScoreMode;
use crate::error::{Error, Result};
use crate::model::{DiffusionModel, ProbeGrid, builtin};
use crate::simulate::default_coarse_factor;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Keys accepted besides `model.params.*`.
const KEYS: &[&str] = &[
    "model",
    "probe.range",
    "probe.points",
    "grid.T",
    "grid.N",
    "grid.m",
    "samples.M",
    "seed",
    "mesh.nodes",
    "mesh.width",
    "mesh.fp_steps",
    "marginal.p",
    "strong.proxy_depth",
    "pathwise.reference_steps",
    "bridge.score_mode",
    "bridge.mg",
    "bridge.cache_steps",
    "lookback.payoff",
    "lookback.strike",
    "lookback.sub_depth",
    "verify.paths",
    "ot.instances",
    "ot.max_atoms",
    "ot.p",
    "output.dir",
];

/// Coarse-factor rule of the path coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MRule {
    /// `⌈N^{2/3}⌉`.
    Auto,
    Fixed(usize),
}

/// Lookback payoff `f(X_T, max_t X_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payoff {
    /// `f(x, y) = y`.
    Identity,
    /// `f(x, y) = (y − K)^+`.
    Call { strike: f64 },
    /// `f(x, y) = y − x`.
    Floating,
    /// `f(x, y) = x`; no path dependence.
    Terminal,
}

impl Payoff {
    #[inline]
    pub fn eval(&self, x_t: f64, max: f64) -> f64 {
        match *self {
            Payoff::Identity => max,
            Payoff::Call { strike } => (max - strike).max(0.0),
            Payoff::Floating => max - x_t,
            Payoff::Terminal => x_t,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Payoff::Identity => "lookback_identity".into(),
            Payoff::Call { strike } => format!("lookback_call({strike})"),
            Payoff::Floating => "lookback_floating".into(),
            Payoff::Terminal => "terminal".into(),
        }
    }
}

/// Parsed experiment configuration.
///
/// The file is flat `section.key = value` text with `#` comments. Every entry
/// is kept verbatim (after CLI overrides) for embedding in reports and hashing.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub entries: BTreeMap<String, String>,
    pub model_name: String,
    pub model_params: BTreeMap<String, f64>,
    pub probe: Option<ProbeGrid>,
    pub horizon: f64,
    pub n_list: Vec<usize>,
    pub m_rule: MRule,
    pub paths: Option<usize>,
    pub seed: u64,
    pub mesh_nodes: usize,
    pub mesh_width: f64,
    pub fp_steps: usize,
    pub marginal_p: f64,
    pub proxy_depth: u32,
    pub reference_steps: Option<usize>,
    pub score_mode: Option<ScoreMode>,
    pub bridge_mg: Option<usize>,
    pub bridge_cache_steps: Option<usize>,
    pub payoff: Payoff,
    pub lookback_sub_depth: u32,
    pub verify_paths: usize,
    pub ot_instances: usize,
    pub ot_max_atoms: usize,
    pub ot_p: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse::<T>().map_err(|_| cfg_err(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text, seed_override)
    }

    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                return Err(cfg_err(format!("line {}: empty key", lineno + 1)));
            }
            if !KEYS.contains(&k.as_str()) && !k.starts_with("model.params.") {
                return Err(cfg_err(format!("line {}: unknown key `{k}`", lineno + 1)));
            }
            if entries.insert(k.clone(), v).is_some() {
                return Err(cfg_err(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        if let Some(s) = seed_override {
            entries.insert("seed".into(), s.to_string());
        }
        Self::from_entries(entries)
    }

    fn from_entries(entries: BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| entries.get(k).map(String::as_str);
        let model_name = get("model").ok_or_else(|| cfg_err("missing `model`"))?.to_string();
        let mut model_params = BTreeMap::new();
        for (k, v) in &entries {
            if let Some(p) = k.strip_prefix("model.params.") {
                model_params.insert(p.to_string(), parse_num::<f64>(k, v)?);
            }
        }
        let seed = parse_num::<u64>("seed", get("seed").ok_or_else(|| cfg_err("missing `seed` (no default seed)"))?)?;
        let horizon = get("grid.T").map(|v| parse_num::<f64>("grid.T", v)).transpose()?.unwrap_or(1.0);
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(cfg_err("`grid.T` must be positive"));
        }
        let n_list: Vec<usize> = parse_list("grid.N", get("grid.N").ok_or_else(|| cfg_err("missing `grid.N`"))?)?;
        if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err("`grid.N` must be a strictly increasing list of positive integers"));
        }
        let m_rule = match get("grid.m") {
            None | Some("auto") => MRule::Auto,
            Some(v) => {
                let m = parse_num::<usize>("grid.m", v)?;
                if m == 0 {
                    return Err(cfg_err("`grid.m` must be positive"));
                }
                MRule::Fixed(m)
            }
        };
        let paths = get("samples.M").map(|v| parse_num::<usize>("samples.M", v)).transpose()?;
        if let Some(m) = paths {
            if m < 100 {
                return Err(cfg_err(format!("`samples.M` = {m} is below 100")));
            }
        }
        let probe = match (get("probe.range"), get("probe.points")) {
            (None, None) => None,
            (r, p) => {
                let r: Vec<f64> = parse_list("probe.range", r.ok_or_else(|| cfg_err("`probe.points` needs `probe.range`"))?)?;
                if r.len() != 2 || !(r[1] > r[0]) {
                    return Err(cfg_err("`probe.range` must be `lo, hi` with lo < hi"));
                }
                let pts = p.map(|v| parse_num::<usize>("probe.points", v)).transpose()?.unwrap_or(1001);
                Some(ProbeGrid::new(r[0], r[1], pts))
            }
        };
        let usize_or = |k: &str, d: usize| -> Result<usize> { get(k).map(|v| parse_num(k, v)).transpose().map(|o| o.unwrap_or(d)) };
        let f64_or = |k: &str, d: f64| -> Result<f64> { get(k).map(|v| parse_num(k, v)).transpose().map(|o| o.unwrap_or(d)) };
        let score_mode = match get("bridge.score_mode") {
            None | Some("auto") => None,
            Some(v) => Some(ScoreMode::from_str(v).map_err(|e| cfg_err(e.to_string()))?),
        };
        let payoff = match get("lookback.payoff").unwrap_or("lookback_floating") {
            "lookback_identity" => Payoff::Identity,
            "lookback_floating" => Payoff::Floating,
            "terminal" => Payoff::Terminal,
            "lookback_call" => Payoff::Call { strike: f64_or("lookback.strike", 1.0)? },
            other => return Err(cfg_err(format!("unknown payoff `{other}`"))),
        };
        let ot_p: Vec<f64> = match get("ot.p") {
            Some(v) => parse_list("ot.p", v)?,
            None => vec![1.0, 2.0, 3.0],
        };
        if ot_p.is_empty() || ot_p.iter().any(|p| !(*p >= 1.0)) {
            return Err(cfg_err("`ot.p` must list exponents ≥ 1"));
        }
        let cfg = Self {
            model_name,
            model_params,
            probe,
            horizon,
            n_list,
            m_rule,
            paths,
            seed,
            mesh_nodes: usize_or("mesh.nodes", 4096)?,
            mesh_width: f64_or("mesh.width", 8.0)?,
            fp_steps: usize_or("mesh.fp_steps", 4096)?,
            marginal_p: f64_or("marginal.p", 2.0)?,
            proxy_depth: usize_or("strong.proxy_depth", 8)? as u32,
            reference_steps: get("pathwise.reference_steps").map(|v| parse_num("pathwise.reference_steps", v)).transpose()?,
            score_mode,
            bridge_mg: get("bridge.mg").map(|v| parse_num("bridge.mg", v)).transpose()?,
            bridge_cache_steps: get("bridge.cache_steps").map(|v| parse_num("bridge.cache_steps", v)).transpose()?,
            payoff,
            lookback_sub_depth: usize_or("lookback.sub_depth", 2)? as u32,
            verify_paths: usize_or("verify.paths", 2000)?,
            ot_instances: usize_or("ot.instances", 1000)?,
            ot_max_atoms: usize_or("ot.max_atoms", 7)?,
            ot_p,
            output_dir: get("output.dir").map(PathBuf::from),
            entries,
        };
        if cfg.mesh_nodes < 8 || cfg.fp_steps == 0 || !(cfg.mesh_width > 0.0) {
            return Err(cfg_err("mesh needs ≥ 8 nodes, fp_steps ≥ 1 and a positive width"));
        }
        if !(cfg.marginal_p >= 1.0) {
            return Err(cfg_err("`marginal.p` must be ≥ 1"));
        }
        if cfg.ot_max_atoms == 0 || cfg.ot_max_atoms > crate::coupling::BRUTE_FORCE_MAX {
            return Err(cfg_err(format!("`ot.max_atoms` must lie in 1..={}", crate::coupling::BRUTE_FORCE_MAX)));
        }
        Ok(cfg)
    }

    pub fn model(&self) -> Result<DiffusionModel> {
        builtin(&self.model_name, &self.model_params)
    }

    /// `samples.M`, required by Monte Carlo experiments.
    pub fn require_paths(&self) -> Result<usize> {
        self.paths.ok_or_else(|| cfg_err("missing `samples.M`"))
    }

    pub fn coarse_factor(&self, n: usize) -> Result<usize> {
        let m = match self.m_rule {
            MRule::Auto => default_coarse_factor(n),
            MRule::Fixed(m) => m,
        };
        if m > n {
            return Err(cfg_err(format!("coarse factor {m} exceeds N = {n}")));
        }
        Ok(m)
    }

    /// SHA-256 of the canonical `key = value` listing.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            h.update(k.as_bytes());
            h.update(b" = ");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "model = sin_elliptic\ngrid.N = 8, 16 ,32 # comment\nseed = 5\nsamples.M = 100\n";

    #[test]
    fn parses_and_hashes() {
        let c = ExperimentConfig::parse(BASE, None).unwrap();
        assert_eq!(c.n_list, vec![8, 16, 32]);
        assert_eq!(c.seed, 5);
        assert_eq!(c.coarse_factor(16).unwrap(), 7);
        let d = ExperimentConfig::parse(BASE, Some(6)).unwrap();
        assert_eq!(d.seed, 6);
        assert_ne!(c.hash(), d.hash());
        let reordered = "seed = 5\n# x\nsamples.M=100\ngrid.N=8,16,32\nmodel=sin_elliptic";
        assert_eq!(ExperimentConfig::parse(reordered, None).unwrap().hash(), ExperimentConfig::parse("model = sin_elliptic\ngrid.N = 8,16,32\nseed = 5\nsamples.M = 100", None).unwrap().hash());
    }

    #[test]
    fn rejects_invalid() {
        for bad in [
            "model = ou\ngrid.N = 8\n",
            "model = ou\ngrid.N = 16, 8\nseed = 1\n",
            "model = ou\ngrid.N = 8, 8\nseed = 1\n",
            "model = ou\ngrid.N = 8\nseed = 1\nsamples.M = 99\n",
            "model = ou\ngrid.N = 8\nseed = 1\ngrid.nn = 3\n",
            "model = ou\ngrid.N = 8\nseed = 1\nseed = 2\n",
            "model = ou\ngrid.N = 8\nseed = x\n",
            "model = ou\ngrid.N = 8\nseed = 1\nlookback.payoff = asian\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(bad, None), Err(Error::Config(_))), "{bad}");
        }
        assert!(ExperimentConfig::parse("model = ou\ngrid.N = 8\n", Some(3)).is_ok());
    }
}
