use crate::error::{Result, invalid};
use crate::numeric::NeumaierSum;

/// Finite measure on the line with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(invalid("measure needs as many weights as atoms, at least one"));
        }
        if atoms.iter().any(|a| !a.is_finite()) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("atoms must be finite and weights nonnegative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("weights sum to {s}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    pub fn uniform(atoms: Vec<f64>) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(invalid("measure needs at least one atom"));
        }
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.atoms.len() as f64;
        self.weights.iter().all(|&v| (v - w).abs() <= 1e-15)
    }
}

/// `W_p` between two empirical measures by monotone (sorted) matching. Unequal
/// sample counts are matched through the merged quantile steps, which equals
/// splitting every atom to the least common multiple of the counts.
pub fn empirical_w1d(samples1: &[f64], samples2: &[f64], p: f64) -> Result<f64> {
    if samples1.is_empty() || samples2.is_empty() {
        return Err(invalid("empirical W_p needs nonempty samples"));
    }
    if !(p >= 1.0) {
        return Err(invalid("W_p needs p ≥ 1"));
    }
    let mut a = samples1.to_vec();
    let mut b = samples2.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut s = NeumaierSum::new();
    if a.len() == b.len() {
        for (x, y) in a.iter().zip(&b) {
            s.add((x - y).abs().powf(p));
        }
        return Ok((s.value() / a.len() as f64).powf(1.0 / p));
    }
    let (n, m) = (a.len() as u128, b.len() as u128);
    // Walk the common refinement of {i/n} and {j/m} in integer units of 1/(n·m).
    let (mut i, mut j) = (0u128, 0u128);
    let mut pos = 0u128;
    while i < n && j < m {
        let next = ((i + 1) * m).min((j + 1) * n);
        let len = (next - pos) as f64;
        s.add(len * (a[i as usize] - b[j as usize]).abs().powf(p));
        pos = next;
        if pos == (i + 1) * m {
            i += 1;
        }
        if pos == (j + 1) * n {
            j += 1;
        }
    }
    Ok((s.value() / (n * m) as f64).powf(1.0 / p))
}

/// Largest size solved by enumerating permutations.
pub const BRUTE_FORCE_MAX: usize = 9;

/// Exact optimal transport cost `W_p` between two uniform measures with the same
/// number of atoms: permutation enumeration up to [`BRUTE_FORCE_MAX`] atoms,
/// Hungarian assignment beyond when `allow_assignment` is set.
pub fn ot_bruteforce(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, allow_assignment: bool) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid("W_p needs p ≥ 1"));
    }
    let n = mu.atoms().len();
    if n != nu.atoms().len() || !mu.is_uniform() || !nu.is_uniform() {
        return Err(invalid("brute force needs uniform measures with equal atom counts"));
    }
    let cost: Vec<Vec<f64>> =
        mu.atoms().iter().map(|&x| nu.atoms().iter().map(|&y| (x - y).abs().powf(p)).collect()).collect();
    let best = if n <= BRUTE_FORCE_MAX {
        min_over_permutations(&cost)
    } else if allow_assignment {
        hungarian(&cost)
    } else {
        return Err(invalid(format!("{n} atoms exceed the enumeration limit {BRUTE_FORCE_MAX}")));
    };
    Ok((best / n as f64).powf(1.0 / p))
}

fn min_over_permutations(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |perm: &[usize]| {
        let mut s = NeumaierSum::new();
        for (i, &j) in perm.iter().enumerate() {
            s.add(cost[i][j]);
        }
        s.value()
    };
    let mut best = eval(&perm);
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Minimum-cost perfect assignment (Hungarian method with potentials).
fn hungarian(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut s = NeumaierSum::new();
    for j in 1..=n {
        s.add(cost[p[j] - 1][j - 1]);
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(empirical_w1d(&[1.0, 2.0], &[2.0, 1.0], 2.0).unwrap(), 0.0);
        let w = empirical_w1d(&[0.0, 1.0, 3.0], &[0.0, 2.0, 3.0], 1.0).unwrap();
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
        let mu = DiscreteMeasure::uniform(vec![0.0, 1.0]).unwrap();
        let nu = DiscreteMeasure::uniform(vec![0.5, 0.5]).unwrap();
        assert!((ot_bruteforce(&mu, &nu, 2.0, false).unwrap() - 0.5).abs() < 1e-15);
        assert!(empirical_w1d(&[], &[1.0], 1.0).is_err());
    }

    #[test]
    fn unequal_counts_match_atom_splitting() {
        let a = [0.3, -1.0, 2.0];
        let b = [0.0, 1.0];
        let split_a: Vec<f64> = a.iter().flat_map(|&x| [x, x]).collect();
        let split_b: Vec<f64> = b.iter().flat_map(|&x| [x, x, x]).collect();
        for p in [1.0, 2.0, 3.0] {
            let direct = empirical_w1d(&a, &b, p).unwrap();
            let split = empirical_w1d(&split_a, &split_b, p).unwrap();
            assert!((direct - split).abs() < 1e-14);
        }
    }

    #[test]
    fn hungarian_matches_enumeration() {
        let mut s = 12345u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 10.0 - 5.0
        };
        for _ in 0..50 {
            let x: Vec<f64> = (0..7).map(|_| next()).collect();
            let y: Vec<f64> = (0..7).map(|_| next()).collect();
            let cost: Vec<Vec<f64>> = x.iter().map(|a| y.iter().map(|b| (a - b).abs().powi(3)).collect()).collect();
            assert!((hungarian(&cost) - min_over_permutations(&cost)).abs() < 1e-12);
        }
        let mu = DiscreteMeasure::uniform((0..12).map(|i| i as f64).collect()).unwrap();
        let nu = DiscreteMeasure::uniform((0..12).map(|i| 11.5 - i as f64).collect()).unwrap();
        assert!(ot_bruteforce(&mu, &nu, 1.0, false).is_err());
        assert!((ot_bruteforce(&mu, &nu, 1.0, true).unwrap() - 0.5).abs() < 1e-14);
    }
}
