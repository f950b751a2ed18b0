use crate::error::{Error, Result, invalid};
use crate::rng::{Cursor, Purpose, StreamKey};

/// Largest number of increments a single path may hold.
pub const MAX_STEPS: usize = 1 << 26;

/// Splits each parent increment (of duration `parent_dt`) into two children by
/// the Brownian-bridge midpoint rule; `left + right == parent` up to one rounding.
pub fn dyadic_split(parent: &[f64], parent_dt: f64, cursor: &mut Cursor, out: &mut Vec<f64>) {
    let half_sd = 0.5 * parent_dt.sqrt();
    out.clear();
    out.reserve(2 * parent.len());
    for &p in parent {
        let left = 0.5 * p + half_sd * cursor.normal();
        out.push(left);
        out.push(p - left);
    }
}

/// Refinable Brownian path on `[0, T]`.
///
/// With `N = q·2^j` (q odd) the root holds `q` increments; tree level `r`
/// holds `q·2^r` increments and is refined from level `r − 1` with the normals
/// at block `r` of the path's stream. Every `N` sharing `q` therefore sees the
/// same Brownian path.
#[derive(Debug, Clone, Copy)]
pub struct BrownianTree {
    key: StreamKey,
    stream: u64,
    horizon: f64,
    root: usize,
}

/// `(q, j)` with `n = q·2^j`, q odd.
fn odd_part(n: usize) -> (usize, u32) {
    let j = n.trailing_zeros();
    (n >> j, j)
}

impl BrownianTree {
    pub fn new(seed: u64, purpose: Purpose, path_index: u64, horizon: f64, root: usize) -> Self {
        Self { key: StreamKey::new(seed, purpose), stream: path_index, horizon, root }
    }

    /// Tree whose root is the odd part of `steps`.
    pub fn for_steps(seed: u64, path_index: u64, horizon: f64, steps: usize) -> Self {
        Self::new(seed, Purpose::Brownian, path_index, horizon, odd_part(steps).0)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Tree level holding `steps` increments.
    pub fn level_of(&self, steps: usize) -> Result<u32> {
        let (q, j) = odd_part(steps);
        if steps == 0 || q != self.root {
            return Err(invalid(format!("{steps} steps is not {}·2^j", self.root)));
        }
        Ok(j)
    }

    fn root_increments(&self) -> Vec<f64> {
        let sd = (self.horizon / self.root as f64).sqrt();
        let mut c = self.key.cursor(self.stream, 0, 0);
        (0..self.root).map(|_| sd * c.normal()).collect()
    }

    /// All levels `0..=level`.
    pub fn levels(&self, level: u32) -> Result<Vec<Vec<f64>>> {
        let total = self.root.checked_shl(level).filter(|&n| n <= MAX_STEPS && n >> level == self.root);
        if total.is_none() {
            return Err(Error::SizeOverflow(format!("{}·2^{level} increments", self.root)));
        }
        let mut out = Vec::with_capacity(level as usize + 1);
        out.push(self.root_increments());
        for r in 1..=level {
            let parent = &out[r as usize - 1];
            let parent_dt = self.horizon / parent.len() as f64;
            let mut c = self.key.cursor(self.stream, r as u64, 0);
            let mut child = Vec::new();
            dyadic_split(parent, parent_dt, &mut c, &mut child);
            out.push(child);
        }
        Ok(out)
    }

    /// Increments at one level.
    pub fn level(&self, level: u32) -> Result<Vec<f64>> {
        Ok(self.levels(level)?.pop().unwrap_or_default())
    }
}

/// `N·2^level` increments of step `T/(N·2^level)` for path `path_index`.
pub fn brownian_increments(seed: u64, path_index: u64, horizon: f64, steps: usize, level: u32) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(invalid("N must be positive"));
    }
    let total = steps.checked_shl(level).filter(|&n| n <= MAX_STEPS && n >> level == steps);
    if total.is_none() {
        return Err(Error::SizeOverflow(format!("{steps}·2^{level} increments")));
    }
    let tree = BrownianTree::for_steps(seed, path_index, horizon, steps);
    let j = tree.level_of(steps)?;
    tree.level(j + level)
}
