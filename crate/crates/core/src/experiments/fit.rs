use crate::error::{Result, invalid};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Log-log regression `ln e = intercept + slope·ln N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 95% confidence interval of the slope.
    pub slope_ci: (f64, f64),
    pub points: usize,
    pub weighted: bool,
}

/// Weighted least squares on `(ln N, ln e)`. With standard errors the weights
/// are `(e/se)²` (delta method on the log); zero or missing errors give equal weights.
pub fn rate_fit(points: &[(f64, f64)], std_errors: Option<&[f64]>) -> Result<RateFit> {
    let n = points.len();
    if n < 3 {
        return Err(invalid("a rate fit needs at least 3 points"));
    }
    if let Some(&(x, e)) = points.iter().find(|(x, e)| !(*e > 0.0) || !(*x > 0.0) || !e.is_finite()) {
        return Err(invalid(format!("non-positive value in rate fit: N = {x}, error = {e}")));
    }
    let mut w = vec![1.0; n];
    let mut weighted = false;
    if let Some(se) = std_errors {
        if se.len() != n {
            return Err(invalid("one standard error per point required"));
        }
        if se.iter().all(|s| *s > 0.0 && s.is_finite()) {
            weighted = true;
            for i in 0..n {
                let rel = se[i] / points[i].1;
                w[i] = 1.0 / (rel * rel);
            }
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (xs[i] - mx, ys[i] - my);
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(invalid("rate fit needs at least two distinct N"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = (0..n).map(|i| w[i] * (ys[i] - intercept - slope * xs[i]).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let df = (n - 2) as f64;
    let se_slope = (sse / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| invalid(e.to_string()))?.inverse_cdf(0.975);
    let half = t * se_slope;
    Ok(RateFit { slope, intercept, r_squared, slope_ci: (slope - half, slope + half), points: n, weighted })
}

/// Fit of `(N, estimate)` rows, or `None` with a note when fewer than three
/// positive estimates are available.
pub fn fit_rows(rows: &[super::report::RateRow], weighted: bool, notes: &mut Vec<String>) -> Result<Option<RateFit>> {
    if rows.len() < 3 {
        notes.push(format!("{} grid sizes; no rate fitted", rows.len()));
        return Ok(None);
    }
    if rows.iter().any(|r| !(r.estimate > 0.0)) {
        notes.push("zero error at some N; no rate fitted".into());
        return Ok(None);
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.estimate)).collect();
    let ses: Vec<f64> = rows.iter().map(|r| r.std_error).collect();
    rate_fit(&pts, weighted.then_some(ses.as_slice())).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(-0.5))).collect();
        let f = rate_fit(&pts, None).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.slope_ci.0 <= f.slope && f.slope <= f.slope_ci.1);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_factor_flattens() {
        // N^{-1}·√(ln N) over 4..128
        let pts: Vec<(f64, f64)> = (2..=7).map(|k| {
            let n = (1u32 << k) as f64;
            (n, n.powi(-1) * n.ln().sqrt())
        }).collect();
        let f = rate_fit(&pts, None).unwrap();
        // local slope is −1 + 1/(2 ln N), so the fit lies between its values at 128 and 4
        assert!(f.slope > -1.0 + 0.5 / 128f64.ln() && f.slope < -1.0 + 0.5 / 4f64.ln());
        assert!((f.slope + 0.823447).abs() < 1e-6, "{}", f.slope);
    }

    #[test]
    fn errors() {
        assert!(rate_fit(&[(1.0, 1.0), (2.0, 0.5)], None).is_err());
        assert!(rate_fit(&[(1.0, 1.0), (2.0, 0.0), (4.0, 0.2)], None).is_err());
        assert!(rate_fit(&[(1.0, 1.0), (2.0, -0.1), (4.0, 0.2)], None).is_err());
    }

    #[test]
    fn weights_follow_relative_errors() {
        let pts = [(8.0, 1.0), (16.0, 0.5), (32.0, 0.3)];
        let f = rate_fit(&pts, Some(&[0.01, 0.005, 0.3])).unwrap();
        assert!(f.weighted);
        // the noisy last point barely moves the fit away from the first two
        assert!((f.slope + 1.0).abs() < 0.05, "{}", f.slope);
        let g = rate_fit(&pts, Some(&[0.0, 0.0, 0.0])).unwrap();
        assert!(!g.weighted);
    }
}
