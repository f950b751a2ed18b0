use super::DiffusionModel;
use crate::error::{Result, invalid};

/// Strength of the hypothesis check. Each level includes the conditions of the
/// levels below it, so a pass is monotone in the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub enum Level {
    Lipschitz,
    Hyp1,
    Hyp2,
}

impl std::str::FromStr for Level {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lipschitz" => Ok(Level::Lipschitz),
            "hyp1" => Ok(Level::Hyp1),
            "hyp2" => Ok(Level::Hyp2),
            _ => Err(invalid(format!("unknown validation level `{s}`"))),
        }
    }
}

/// Uniform probe grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ProbeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl ProbeGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points }
    }

    /// `x0 ± 6 σ(x0) √T`, 1001 points, clipped to the model domain.
    pub fn default_for(model: &DiffusionModel, horizon: f64) -> Self {
        let x0 = model.x0();
        let w = 6.0 * model.diffusion(x0).abs() * horizon.sqrt();
        let dom = model.domain();
        let mut lo = x0 - w;
        let mut hi = x0 + w;
        if dom.lo.is_finite() && lo <= dom.lo {
            lo = dom.lo + 1e-3 * (hi - dom.lo);
        }
        if dom.hi.is_finite() && hi >= dom.hi {
            hi = dom.hi - 1e-3 * (dom.hi - lo);
        }
        Self { lo, hi, points: 1001 }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let n = self.points;
        (0..n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ValidationOptions {
    pub probe: ProbeGrid,
    /// Bound on |b| and σ beyond which boundedness is reported as violated.
    pub bound_threshold: f64,
    /// Bound on difference quotients of b and σ.
    pub lipschitz_threshold: f64,
    /// Bound on the second difference quotient of a.
    pub curvature_threshold: f64,
    /// `min a / max a` below this ratio counts as degenerate diffusion.
    pub ellipticity_ratio: f64,
}

impl ValidationOptions {
    pub fn new(probe: ProbeGrid) -> Self {
        Self {
            probe,
            bound_threshold: 10.0,
            lipschitz_threshold: 1e3,
            curvature_threshold: 1e3,
            ellipticity_ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Condition {
    pub name: String,
    pub level: Level,
    pub passed: bool,
    /// Probe point where the extreme value was observed.
    pub witness: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub level: Level,
    pub conditions: Vec<Condition>,
    /// Largest difference quotient of b and σ over adjacent probes.
    pub lipschitz_constant: f64,
    /// Smallest observed value of a.
    pub floor_estimate: f64,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn drift_unbounded_suspected(&self) -> bool {
        self.condition("bounded_drift").is_some_and(|c| !c.passed)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.is_nan() {
            return i;
        }
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerical check of the standing hypotheses on a finite probe grid.
pub fn validate_hypotheses(
    model: &DiffusionModel,
    level: Level,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    let p = opts.probe;
    if p.points < 3 || !(p.lo < p.hi) || !p.lo.is_finite() || !p.hi.is_finite() {
        return Err(invalid("empty probe grid"));
    }
    let xs = p.nodes();
    let h = (p.hi - p.lo) / (p.points - 1) as f64;
    let b: Vec<f64> = xs.iter().map(|&x| model.drift(x)).collect();
    let s: Vec<f64> = xs.iter().map(|&x| model.diffusion(x)).collect();
    let a: Vec<f64> = s.iter().map(|v| v * v).collect();
    let mut conditions = Vec::new();
    let mut warnings = Vec::new();

    let nonfinite = (0..xs.len()).find(|&i| !b[i].is_finite() || !s[i].is_finite());
    conditions.push(Condition {
        name: "finite_coefficients".into(),
        level: Level::Lipschitz,
        passed: nonfinite.is_none(),
        witness: nonfinite.map_or(f64::NAN, |i| xs[i]),
        value: nonfinite.map_or(0.0, |i| if b[i].is_finite() { s[i] } else { b[i] }),
    });

    let quot: Vec<f64> = (0..xs.len() - 1)
        .map(|i| ((b[i + 1] - b[i]).abs().max((s[i + 1] - s[i]).abs())) / h)
        .collect();
    let ik = argmax(&quot);
    let k = quot[ik];
    conditions.push(Condition {
        name: "lipschitz".into(),
        level: Level::Lipschitz,
        passed: k.is_finite() && k <= opts.lipschitz_threshold,
        witness: xs[ik],
        value: k,
    });

    if level >= Level::Hyp1 {
        let abs_b: Vec<f64> = b.iter().map(|v| v.abs()).collect();
        let ib = argmax(&abs_b);
        let drift_ok = abs_b[ib] <= opts.bound_threshold;
        if !drift_ok {
            warnings.push(format!("unbounded drift suspected: |b({})| = {}", xs[ib], abs_b[ib]));
        }
        conditions.push(Condition {
            name: "bounded_drift".into(),
            level: Level::Hyp1,
            passed: drift_ok,
            witness: xs[ib],
            value: abs_b[ib],
        });
        let abs_s: Vec<f64> = s.iter().map(|v| v.abs()).collect();
        let is = argmax(&abs_s);
        let diff_ok = abs_s[is] <= opts.bound_threshold;
        if !diff_ok {
            warnings.push(format!("unbounded diffusion suspected: σ({}) = {}", xs[is], abs_s[is]));
        }
        conditions.push(Condition {
            name: "bounded_diffusion".into(),
            level: Level::Hyp1,
            passed: diff_ok,
            witness: xs[is],
            value: abs_s[is],
        });
        let curv: Vec<f64> =
            (1..xs.len() - 1).map(|i| (a[i + 1] - 2.0 * a[i] + a[i - 1]).abs() / (h * h)).collect();
        let ic = argmax(&curv);
        conditions.push(Condition {
            name: "a_second_difference".into(),
            level: Level::Hyp1,
            passed: curv[ic].is_finite() && curv[ic] <= opts.curvature_threshold,
            witness: xs[ic + 1],
            value: curv[ic],
        });
    }

    let mut imin = 0;
    for i in 0..a.len() {
        if a[i] < a[imin] {
            imin = i;
        }
    }
    let amax = a.iter().cloned().fold(0.0, f64::max);
    let floor_estimate = a[imin];
    if level >= Level::Hyp2 {
        let floor = model.ellipticity_floor();
        let passed = floor_estimate > 0.0
            && floor_estimate >= opts.ellipticity_ratio * amax
            && (floor <= 0.0 || floor_estimate >= floor * (1.0 - 1e-12));
        conditions.push(Condition {
            name: "uniform_ellipticity".into(),
            level: Level::Hyp2,
            passed,
            witness: xs[imin],
            value: floor_estimate,
        });
    }

    Ok(ValidationReport { level, conditions, lipschitz_constant: k, floor_estimate, warnings })
}
