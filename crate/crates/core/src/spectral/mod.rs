//! Spectral analysis of a similarity matrix: normalized Laplacian, spectrum,
//! bipartition and k-way clustering, an eigengap cluster-count suggestion and
//! the heatmap ordering.
//!
//! A vertex whose only similarity is with itself is isolated. Isolated
//! vertices are left out of the clustering and each receives its own
//! singleton label after the regular clusters.

mod eigen;
mod kmeans;

pub use eigen::{eigendecompose, Eigen, MAX_QL_ITERATIONS};
pub use kmeans::{kmeans, relabel_by_size, KMeans};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::SimilarityMatrix;

/// Number of leading eigenvalues scanned for the eigengap.
pub const EIGENGAP_WINDOW: usize = 10;
/// `λ₂` at or above this marks a "no structure" verdict as low confidence.
pub const LOW_CONFIDENCE_LAMBDA2: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("eigensolver did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("k = {k} clusters requested for {n} datapoints")]
    BadClusterCount { k: usize, n: usize },
}

/// `I − D^{-1/2} S D^{-1/2}` with `d_i = Σ_j s_ij` (self-similarity
/// included). Row-major.
pub fn graph_laplacian(s: &SimilarityMatrix) -> Vec<f64> {
    let n = s.n();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = s.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let off = inv_sqrt[i] * s.get(i, j) * inv_sqrt[j];
            l[i * n + j] = if i == j { 1.0 - off } else { -off };
        }
    }
    l
}

/// Degrees `d_i = Σ_j s_ij`.
pub fn degrees(s: &SimilarityMatrix) -> Vec<f64> {
    (0..s.n()).map(|i| s.row(i).iter().sum()).collect()
}

/// Eigenvalues within this distance of `λ₁` count as one null space.
pub const NULL_SPACE_TOLERANCE: f64 = 1e-8;

/// Re-bases a degenerate bottom eigenspace so that its first vector is
/// `D^{1/2}·1` (normalized) and the others are orthogonal to it. Without this
/// the second vector of a disconnected graph could be an indicator of a
/// single component and carry no sign change.
pub fn align_null_space(eig: &mut Eigen, degrees: &[f64]) {
    let n = eig.n();
    let m = eig.values.iter().take_while(|&&l| l - eig.values[0] <= NULL_SPACE_TOLERANCE).count();
    if m < 2 {
        return;
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let trivial: Vec<f64> = degrees.iter().map(|d| d.max(0.0).sqrt()).collect();
    // project into the null space, then orthonormalize the rest against it
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut p = vec![0.0; n];
    for v in &eig.vectors[..m] {
        let c = dot(&trivial, v);
        p.iter_mut().zip(v).for_each(|(x, y)| *x += c * y);
    }
    let candidates = std::iter::once(p).chain(eig.vectors[..m].iter().cloned());
    for mut v in candidates {
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 && basis.len() < m {
            v.iter_mut().for_each(|x| *x /= norm);
            eigen::fix_sign(&mut v);
            basis.push(v);
        }
    }
    for (k, v) in basis.into_iter().enumerate() {
        eig.vectors[k] = v;
    }
}

/// Labels from the signs of the Fiedler vector: components `≥ 0` get 0.
pub fn bipartition(eig: &Eigen) -> Vec<usize> {
    match eig.vectors.get(1) {
        Some(fiedler) => fiedler.iter().map(|&x| usize::from(x < 0.0)).collect(),
        None => vec![0; eig.n()],
    }
}

/// Rows of the first `k` eigenvectors, each scaled to unit length.
pub fn spectral_embedding(eig: &Eigen, k: usize) -> Vec<Vec<f64>> {
    (0..eig.n())
        .map(|i| {
            let row: Vec<f64> = eig.vectors[..k].iter().map(|v| v[i]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                row
            }
        })
        .collect()
}

pub fn kway_cluster(eig: &Eigen, k: usize, seed: u64) -> Result<Vec<usize>, SpectralError> {
    let n = eig.n();
    if k < 1 || k > n {
        return Err(SpectralError::BadClusterCount { k, n });
    }
    Ok(kmeans(&spectral_embedding(eig, k), k, seed).labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KSuggestion {
    pub k: usize,
    /// Largest gap divided by the spread of the scanned eigenvalues.
    pub confidence: f64,
    /// The largest gap is `λ₂ − λ₁` although `λ₂` is not small.
    pub low_confidence: bool,
}

/// Largest-eigengap cluster count over the first `min(n, 10)` eigenvalues:
/// `k = argmax_i (λ_{i+1} − λ_i)`, 1-indexed, first maximum on ties.
pub fn suggest_k(eigenvalues: &[f64]) -> KSuggestion {
    let m = eigenvalues.len().min(EIGENGAP_WINDOW);
    if m < 2 {
        return KSuggestion {
            k: 1,
            confidence: 0.0,
            low_confidence: false,
        };
    }
    let window = &eigenvalues[..m];
    let mut k = 1;
    let mut best = window[1] - window[0];
    for i in 1..m - 1 {
        let gap = window[i + 1] - window[i];
        if gap > best {
            best = gap;
            k = i + 1;
        }
    }
    let spread = window[m - 1] - window[0];
    if spread <= 1e-12 {
        return KSuggestion {
            k: 1,
            confidence: 0.0,
            low_confidence: false,
        };
    }
    KSuggestion {
        k,
        confidence: best / spread,
        low_confidence: k == 1 && window[1] >= LOW_CONFIDENCE_LAMBDA2,
    }
}

/// Permutation sorted by (label, Fiedler component, index).
pub fn reorder(labels: &[usize], fiedler: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| {
        labels[a]
            .cmp(&labels[b])
            .then(fiedler[a].total_cmp(&fiedler[b]))
            .then(a.cmp(&b))
    });
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectralResult {
    /// Spectrum of the full Laplacian, ascending.
    pub eigenvalues: Vec<f64>,
    /// Row-normalized leading eigenvectors of the connected part; isolated
    /// rows are zero.
    pub embedding: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub suggested_k: usize,
    pub confidence: f64,
    pub low_confidence: bool,
    /// Cluster count used for the labels, excluding isolated singletons.
    pub k: usize,
    pub isolated: Vec<usize>,
    pub fiedler: Vec<f64>,
    pub order: Vec<usize>,
}

impl SpectralResult {
    pub fn cluster_count(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Vertices with no similarity to any other vertex.
pub fn isolated_vertices(s: &SimilarityMatrix) -> Vec<usize> {
    let n = s.n();
    (0..n)
        .filter(|&i| n > 1 && (0..n).all(|j| j == i || s.get(i, j) == 0.0))
        .collect()
}

/// Full spectral pass. With `k` absent the eigengap suggestion is used;
/// `k = 2` bipartitions, larger `k` runs k-means on the embedding.
pub fn spectral_analysis(s: &SimilarityMatrix, k: Option<usize>, seed: u64) -> Result<SpectralResult, SpectralError> {
    let n = s.n();
    let mut full = eigendecompose(&graph_laplacian(s), n)?;
    align_null_space(&mut full, &degrees(s));
    let suggestion = suggest_k(&full.values);

    let isolated = isolated_vertices(s);
    let active: Vec<usize> = (0..n).filter(|i| isolated.binary_search(i).is_err()).collect();
    let m = active.len();
    if let Some(k) = k {
        if k == 0 || k > n {
            return Err(SpectralError::BadClusterCount { k, n });
        }
    }
    let k_used = k.unwrap_or(suggestion.k).min(m).max(usize::from(m > 0));

    let sub = if isolated.is_empty() {
        full.clone()
    } else {
        let values = active.iter().flat_map(|&i| active.iter().map(move |&j| (i, j)));
        let dense = SimilarityMatrix::from_dense(m, values.map(|(i, j)| s.get(i, j)).collect());
        let mut eig = eigendecompose(&graph_laplacian(&dense), m)?;
        align_null_space(&mut eig, &degrees(&dense));
        eig
    };
    let sub_labels = match k_used {
        0 | 1 => vec![0; m],
        2 => bipartition(&sub),
        k => kway_cluster(&sub, k, seed)?,
    };

    let mut labels = vec![0; n];
    let mut fiedler = vec![0.0; n];
    let mut embedding = vec![vec![0.0; k_used]; n];
    let sub_embedding = spectral_embedding(&sub, k_used);
    for (pos, &i) in active.iter().enumerate() {
        labels[i] = sub_labels[pos];
        if let Some(v) = sub.vectors.get(1) {
            fiedler[i] = v[pos];
        }
        embedding[i] = sub_embedding[pos].clone();
    }
    let base = sub_labels.iter().copied().max().map_or(0, |l| l + 1);
    for (t, &i) in isolated.iter().enumerate() {
        labels[i] = base + t;
    }
    let order = reorder(&labels, &fiedler);
    Ok(SpectralResult {
        eigenvalues: full.values,
        embedding,
        labels,
        suggested_k: suggestion.k,
        confidence: suggestion.confidence,
        low_confidence: suggestion.low_confidence,
        k: k_used,
        isolated,
        fiedler,
        order,
    })
}
