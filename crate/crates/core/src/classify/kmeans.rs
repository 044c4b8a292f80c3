use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_LLOYD_ITERATIONS: usize = 300;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centre; the lowest index wins ties.
pub(crate) fn nearest(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing. Empty clusters keep their previous centre.
pub fn kmeans(x: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k-means needs 1 <= K <= {n} rows, got K = {k}")));
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![x[rng.gen_range(0..n)].clone()];
    let mut dist: Vec<f64> = x.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let pick = WeightedIndex::new(&dist)
            .map_err(|_| Error::DegenerateData(format!("fewer than {k} distinct rows available for k-means")))?
            .sample(&mut rng);
        centers.push(x[pick].clone());
        let c = centers.last().expect("just pushed");
        for (di, r) in dist.iter_mut().zip(x) {
            *di = di.min(sq_dist(r, c));
        }
    }

    let mut assignment: Vec<usize> = x.iter().map(|r| nearest(r, &centers)).collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (r, &a) in x.iter().zip(&assignment) {
            counts[a] += 1;
            sums[a].iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        for ((c, s), &cnt) in centers.iter_mut().zip(sums).zip(&counts) {
            if cnt > 0 {
                *c = s.into_iter().map(|v| v / cnt as f64).collect();
            }
        }
        let next: Vec<usize> = x.iter().map(|r| nearest(r, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Ok(centers)
}
