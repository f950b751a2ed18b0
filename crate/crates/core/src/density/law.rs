use crate::error::{Result, invalid, numerical};
use crate::model::DiffusionModel;
use crate::numeric::{NeumaierSum, hermite, hermite_derivative, limit_monotone_slopes};
use std::io::Write;
use std::path::Path;

/// Uniform spatial mesh `lo, lo + h, …, hi`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeshSpec {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl MeshSpec {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("mesh needs finite lo < hi"));
        }
        if nodes < 8 {
            return Err(invalid("mesh needs at least 8 nodes"));
        }
        Ok(Self { lo, hi, nodes })
    }

    /// `[x0 − wσ(x0)√T, x0 + wσ(x0)√T]`, clipped to the model domain; for
    /// `(0, ∞)` the width is taken in log space.
    pub fn for_model(model: &DiffusionModel, horizon: f64, nodes: usize, width: f64) -> Result<Self> {
        let x0 = model.x0();
        let s = model.diffusion(x0) * horizon.sqrt();
        if model.domain().lo == 0.0 {
            let r = width * s / x0;
            return Self::new(x0 * (-r).exp(), x0 * r.exp(), nodes);
        }
        Self::new(x0 - width * s, x0 + width * s, nodes)
    }

    #[inline]
    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes { self.hi } else { self.lo + i as f64 * self.h() }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.nodes];
        w[0] = 0.5 * h;
        w[self.nodes - 1] = 0.5 * h;
        w
    }

    /// Same range with `2(nodes − 1) + 1` nodes.
    pub fn refined(&self) -> Self {
        Self { nodes: 2 * (self.nodes - 1) + 1, ..*self }
    }
}

/// Law of a real random variable on a uniform mesh: density, CDF and quantiles.
///
/// The CDF is the cumulative Hermite-corrected trapezoid integral of the
/// density, normalised to end at 1. Between nodes it is the cubic Hermite
/// interpolant with (monotone-limited) density slopes, and the quantile is its
/// exact inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalLaw {
    pub time: f64,
    mesh: MeshSpec,
    density: Vec<f64>,
    cdf: Vec<f64>,
    slopes: Vec<f64>,
    mass: f64,
}

impl MarginalLaw {
    /// Builds a law from nodal density values. Negative values below
    /// `-1e-12·max` are rejected, smaller ones are set to zero.
    pub fn from_density(time: f64, mesh: MeshSpec, mut density: Vec<f64>) -> Result<Self> {
        if density.len() != mesh.nodes {
            return Err(invalid("density length differs from mesh"));
        }
        let peak = density.iter().fold(0.0f64, |m, &v| m.max(v));
        if !(peak > 0.0) || !peak.is_finite() {
            return Err(numerical("density is not positive and finite"));
        }
        for v in density.iter_mut() {
            if *v < 0.0 {
                if *v < -1e-12 * peak {
                    return Err(numerical(format!("negative density {v:e}")));
                }
                *v = 0.0;
            }
        }
        let h = mesh.h();
        let n = mesh.nodes;
        let mut mass = NeumaierSum::new();
        for (i, &p) in density.iter().enumerate() {
            mass.add(if i == 0 || i == n - 1 { 0.5 * h * p } else { h * p });
        }
        let d = |i: usize| -> f64 {
            if i == 0 {
                (density[1] - density[0]) / h
            } else if i == n - 1 {
                (density[n - 1] - density[n - 2]) / h
            } else {
                (density[i + 1] - density[i - 1]) / (2.0 * h)
            }
        };
        let mut cdf = Vec::with_capacity(n);
        let mut acc = NeumaierSum::new();
        cdf.push(0.0);
        for i in 0..n - 1 {
            let c = 0.5 * h * (density[i] + density[i + 1]) + h * h / 12.0 * (d(i) - d(i + 1));
            acc.add(c.max(0.0));
            cdf.push(acc.value());
        }
        let total = acc.value();
        for v in cdf.iter_mut() {
            *v /= total;
        }
        cdf[n - 1] = 1.0;
        let mut slopes: Vec<f64> = density.iter().map(|p| p / total).collect();
        limit_monotone_slopes(&cdf, h, &mut slopes);
        Ok(Self { time, mesh, density, cdf, slopes, mass: mass.value() })
    }

    /// Density values of a Gaussian on the mesh.
    pub fn gaussian(time: f64, mesh: MeshSpec, mean: f64, var: f64) -> Result<Self> {
        let p = mesh.points().iter().map(|&x| crate::numeric::gaussian_density(x, mean, var)).collect();
        Self::from_density(time, mesh, p)
    }

    pub fn mesh(&self) -> &MeshSpec {
        &self.mesh
    }

    pub fn density_values(&self) -> &[f64] {
        &self.density
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    /// Trapezoid mass of the nodal density (before normalisation of the CDF).
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.mesh.h();
        let pos = (x - self.mesh.lo) / h;
        if pos <= 0.0 {
            return 0.0;
        }
        let n = self.cdf.len();
        if pos >= (n - 1) as f64 {
            return 1.0;
        }
        let i = (pos as usize).min(n - 2);
        let s = pos - i as f64;
        hermite(self.cdf[i], self.cdf[i + 1], self.slopes[i], self.slopes[i + 1], h, s).clamp(0.0, 1.0)
    }

    /// Derivative of the interpolated CDF.
    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.mesh.h();
        let pos = (x - self.mesh.lo) / h;
        let n = self.cdf.len();
        if pos < 0.0 || pos > (n - 1) as f64 {
            return 0.0;
        }
        let i = (pos as usize).min(n - 2);
        let s = pos - i as f64;
        hermite_derivative(self.cdf[i], self.cdf[i + 1], self.slopes[i], self.slopes[i + 1], h, s).max(0.0)
    }

    /// Inverse CDF; errors for `u ∉ (0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid(format!("quantile level {u} outside (0, 1)")));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let n = self.cdf.len();
        let j = self.cdf.partition_point(|&v| v <= u).clamp(1, n - 1);
        let i = j - 1;
        let h = self.mesh.h();
        let (y0, y1, d0, d1) = (self.cdf[i], self.cdf[i + 1], self.slopes[i], self.slopes[i + 1]);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut s = if y1 > y0 { ((u - y0) / (y1 - y0)).clamp(0.0, 1.0) } else { 0.5 };
        for _ in 0..50 {
            let f = hermite(y0, y1, d0, d1, h, s) - u;
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let df = hermite_derivative(y0, y1, d0, d1, h, s) * h;
            let mut next = if df > 0.0 { s - f / df } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - s).abs() <= 1e-15 {
                s = next;
                break;
            }
            s = next;
        }
        self.mesh.lo + (i as f64 + s) * h
    }

    pub fn mean(&self) -> f64 {
        let w = self.mesh.weights();
        let mut s = NeumaierSum::new();
        for (i, &p) in self.density.iter().enumerate() {
            s.add(w[i] * p * self.mesh.node(i));
        }
        s.value() / self.mass
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let w = self.mesh.weights();
        let mut s = NeumaierSum::new();
        for (i, &p) in self.density.iter().enumerate() {
            let d = self.mesh.node(i) - m;
            s.add(w[i] * p * d * d);
        }
        s.value() / self.mass
    }

    /// Writes `x,density,cdf` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,density,cdf")?;
        for i in 0..self.mesh.nodes {
            writeln!(f, "{:.16e},{:.16e},{:.16e}", self.mesh.node(i), self.density[i], self.cdf[i])?;
        }
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{norm_cdf, norm_quantile};

    fn std_normal() -> MarginalLaw {
        MarginalLaw::gaussian(1.0, MeshSpec::new(-9.0, 9.0, 4097).unwrap(), 0.0, 1.0).unwrap()
    }

    #[test]
    fn gaussian_cdf_and_quantile() {
        let law = std_normal();
        assert!((law.mass() - 1.0).abs() < 1e-12);
        for &x in &[-3.0, -1.0, 0.0, 0.4, 2.5] {
            assert!((law.cdf(x) - norm_cdf(x)).abs() < 1e-10);
        }
        assert!((law.quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-6);
        assert!(law.quantile(0.5).unwrap().abs() < 1e-9);
        for &u in &[1e-6, 0.01, 0.3, 0.9] {
            assert!((law.quantile(u).unwrap() - norm_quantile(u)).abs() < 1e-6);
        }
        assert!(law.quantile(0.0).is_err() && law.quantile(1.0).is_err());
    }

    #[test]
    fn quantile_monotone_and_inverse() {
        let law = MarginalLaw::gaussian(1.0, MeshSpec::new(-4.0, 6.0, 513).unwrap(), 1.0, 0.7).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..1002 {
            let q = law.quantile(k as f64 / 1002.0).unwrap();
            assert!(q >= prev);
            prev = q;
            assert!((law.cdf(q) - k as f64 / 1002.0).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_negative_density() {
        let mesh = MeshSpec::new(0.0, 1.0, 9).unwrap();
        let mut p = vec![1.0; 9];
        p[3] = -0.1;
        assert!(MarginalLaw::from_density(0.0, mesh, p).is_err());
    }
}
