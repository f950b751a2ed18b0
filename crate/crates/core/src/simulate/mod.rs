//! Brownian paths, Euler and exact paths, and the one-step bridge maximum.

mod bridge_max;
mod brownian;
mod euler;
mod exact;

pub use bridge_max::{bridge_max, bridge_max_tail};
pub use brownian::{BrownianTree, MAX_STEPS, brownian_increments, dyadic_split};
pub use euler::{euler_interpolate, euler_path, euler_values, euler_values_lanes};
pub use exact::{Reference, exact_path, exact_values, proxy_path};

use crate::error::{Result, invalid};

/// Regular fine grid `t_k = kT/N` and coarse grid `s_l = l·m·T/N`, `s_n = T`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
    pub coarse_factor: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, steps: usize, coarse_factor: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid("horizon must be positive"));
        }
        if steps == 0 {
            return Err(invalid("N must be positive"));
        }
        if coarse_factor == 0 || coarse_factor > steps {
            return Err(invalid("coarse factor must lie in 1..=N"));
        }
        Ok(Self { horizon, steps, coarse_factor })
    }

    /// Grid with the default coarse factor `⌈N^{2/3}⌉`.
    pub fn with_default_m(horizon: f64, steps: usize) -> Result<Self> {
        Self::new(horizon, steps, default_coarse_factor(steps))
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_k`, with `t_N = T` exactly.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps { self.horizon } else { k as f64 * self.horizon / self.steps as f64 }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Number of coarse intervals `n = ⌊N/m⌋`.
    #[inline]
    pub fn coarse_count(&self) -> usize {
        self.steps / self.coarse_factor
    }

    /// Fine index of `s_l`; the last coarse node is `N`.
    #[inline]
    pub fn coarse_index(&self, l: usize) -> usize {
        if l >= self.coarse_count() { self.steps } else { l * self.coarse_factor }
    }

    #[inline]
    pub fn coarse_time(&self, l: usize) -> f64 {
        self.time(self.coarse_index(l))
    }

    /// Fine-step span `[start, end)` of coarse interval `l`.
    pub fn coarse_span(&self, l: usize) -> (usize, usize) {
        (self.coarse_index(l), self.coarse_index(l + 1))
    }
}

/// `⌈N^{2/3}⌉`, computed without floating-point drift at perfect cubes.
pub fn default_coarse_factor(steps: usize) -> usize {
    let mut m = (steps as f64).powf(2.0 / 3.0).floor() as usize;
    while (m as u128).pow(3) < (steps as u128).pow(2) {
        m += 1;
    }
    while m > 1 && ((m - 1) as u128).pow(3) >= (steps as u128).pow(2) {
        m -= 1;
    }
    m.clamp(1, steps)
}

/// Where a path's randomness came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Lineage {
    pub seed: u64,
    pub path_index: u64,
    pub level: u32,
}

/// Path values on the fine grid with the increments that drove them.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub increments: Vec<f64>,
    pub lineage: Option<Lineage>,
}

impl PathBundle {
    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_exact() {
        let g = GridSpec::new(1.7, 100, 7).unwrap();
        assert_eq!(g.time(100), 1.7);
        assert_eq!(g.coarse_count(), 14);
        assert_eq!(g.coarse_time(14), 1.7);
        assert_eq!(g.coarse_index(13), 91);
        assert_eq!(g.coarse_span(13), (91, 100));
        assert!(GridSpec::new(1.0, 4, 5).is_err());
        assert!(GridSpec::new(0.0, 4, 1).is_err());
    }

    #[test]
    fn default_m() {
        assert_eq!(default_coarse_factor(8), 4);
        assert_eq!(default_coarse_factor(64), 16);
        assert_eq!(default_coarse_factor(512), 64);
        assert_eq!(default_coarse_factor(16), 7);
        assert_eq!(default_coarse_factor(1), 1);
    }
}
