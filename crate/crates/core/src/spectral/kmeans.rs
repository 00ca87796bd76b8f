use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_ITERATIONS: usize = 100;
pub const RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Relabeled by ascending cluster size, ties by first occurrence.
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares.
    pub wcss: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(row, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centers(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centers = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| dist2(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(dist2(r, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn lloyd(rows: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> (Vec<usize>, f64) {
    let dim = rows[0].len();
    let k = centers.len();
    let mut labels = vec![usize::MAX; rows.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let (c, _) = nearest(r, &centers);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &c) in rows.iter().zip(&labels) {
            counts[c] += 1;
            sums[c].iter_mut().zip(r).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            // an emptied cluster keeps its previous center
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let wcss = rows.iter().zip(&labels).map(|(r, &c)| dist2(r, &centers[c])).sum();
    (labels, wcss)
}

/// k-means++ seeding followed by Lloyd iterations, best of [`RESTARTS`] runs
/// by within-cluster sum of squares. Requires `1 ≤ k ≤ rows.len()`.
pub fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64) -> KMeans {
    assert!(k >= 1 && k <= rows.len(), "k must lie in [1, n]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..RESTARTS {
        let centers = seed_centers(rows, k, &mut rng);
        let (labels, wcss) = lloyd(rows, centers);
        if best.as_ref().is_none_or(|b| wcss < b.1) {
            best = Some((labels, wcss));
        }
    }
    let (labels, wcss) = best.expect("at least one restart");
    KMeans {
        labels: relabel_by_size(&labels),
        wcss,
    }
}

/// Renames labels so that cluster 0 is the smallest, ties broken by the
/// first index at which each cluster occurs.
pub fn relabel_by_size(labels: &[usize]) -> Vec<usize> {
    let mut seen: Vec<(usize, usize, usize)> = Vec::new(); // (label, size, first)
    for (i, &l) in labels.iter().enumerate() {
        match seen.iter_mut().find(|s| s.0 == l) {
            Some(s) => s.1 += 1,
            None => seen.push((l, 1, i)),
        }
    }
    seen.sort_by_key(|&(_, size, first)| (size, first));
    labels
        .iter()
        .map(|l| seen.iter().position(|s| s.0 == *l).expect("label seen"))
        .collect()
}
