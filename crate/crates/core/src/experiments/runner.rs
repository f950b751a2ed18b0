use crate::error::{Error, Result, numerical};
use crate::numeric::NeumaierSum;
use rayon::prelude::*;

/// Paths per work unit. Chunk results are merged in chunk order, so sums do
/// not depend on the worker count.
pub const CHUNK: u64 = 256;

/// Runs `f` inside a pool of `workers` threads (all cores when `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidArgument("--workers must be positive".into()));
        }
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| numerical(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Maps `f(first, end)` over consecutive path chunks of `0..paths` in parallel,
/// returning chunk results in order.
pub fn map_chunks<T: Send>(paths: u64, f: impl Fn(u64, u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let chunks = paths.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK, ((c + 1) * CHUNK).min(paths)))
        .collect()
}

/// Compensated first and second moments of one per-path statistic.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAcc {
    sum: NeumaierSum,
    sum_sq: NeumaierSum,
    count: u64,
}

impl MeanAcc {
    pub fn push(&mut self, v: f64) {
        self.sum.add(v);
        self.sum_sq.add(v * v);
        self.count += 1;
    }

    pub fn merge(&mut self, o: &MeanAcc) {
        self.sum.merge(&o.sum);
        self.sum_sq.merge(&o.sum_sq);
        self.count += o.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 { f64::NAN } else { self.sum.value() / self.count as f64 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let m = self.mean();
        ((self.sum_sq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// `(√mean, SE)` when the statistic is a squared error; delta method.
    pub fn rms(&self) -> (f64, f64) {
        let e = self.mean().sqrt();
        let se = if e > 0.0 { self.std_error() / (2.0 * e) } else { 0.0 };
        (e, se)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let v = map_chunks(1000, |a, b| Ok((a, b))).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], (0, 256));
        assert_eq!(v[3], (768, 1000));
    }

    #[test]
    fn accumulator_moments() {
        let mut a = MeanAcc::default();
        let mut b = MeanAcc::default();
        for v in [1.0, 2.0, 3.0] {
            a.push(v);
        }
        b.push(4.0);
        a.merge(&b);
        assert_eq!(a.mean(), 2.5);
        assert!((a.variance() - 5.0 / 3.0).abs() < 1e-15);
        let (e, _) = a.rms();
        assert!((e - 2.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn worker_count_does_not_change_sums() {
        let run = |w| {
            with_workers(Some(w), || {
                let parts = map_chunks(5000, |a, b| {
                    let mut acc = MeanAcc::default();
                    for i in a..b {
                        acc.push(((i as f64) * 0.37).sin());
                    }
                    Ok(acc)
                })
                .unwrap();
                let mut t = MeanAcc::default();
                parts.iter().for_each(|p| t.merge(p));
                t.mean()
            })
            .unwrap()
        };
        assert_eq!(run(1).to_bits(), run(3).to_bits());
    }
}
