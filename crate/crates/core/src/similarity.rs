//! Pairwise similarity from masked signatures: `1 − hamming / unmasked`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::signatures::{MaskedSignatures, SignatureError};

/// How the distance between two signatures is normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SimilarityMode {
    /// Hamming distance over all surviving bands.
    #[default]
    Hamming,
    /// Hamming distance over the bands where either signature has a 1. Two
    /// distinct datapoints with empty signatures get similarity 0.
    Jaccard,
}

/// Exact count of differing positions between two packed bit strings.
pub fn hamming_distance(a: &[u64], b: &[u64]) -> Result<usize, SignatureError> {
    if a.len() != b.len() {
        return Err(SignatureError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum())
}

/// Dense symmetric similarity matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
    pub tau: f64,
    pub unmasked_band_count: usize,
}

impl SimilarityMatrix {
    /// Wraps a caller-supplied matrix (used for spectral and layout inputs
    /// that do not come from signatures). Panics unless `values` is `n × n`.
    pub fn from_dense(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n, "similarity matrix must be n × n");
        Self {
            n,
            values,
            tau: f64::INFINITY,
            unmasked_band_count: 0,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        Self::from_dense(n, rows.iter().flatten().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows and columns permuted by `order` (new position `k` holds old index
    /// `order[k]`).
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.n;
        let mut values = Vec::with_capacity(n * n);
        for &i in order {
            for &j in order {
                values.push(self.get(i, j));
            }
        }
        Self {
            n,
            values,
            tau: self.tau,
            unmasked_band_count: self.unmasked_band_count,
        }
    }

    /// Entries as rows of 32-bit floats, the export precision.
    pub fn rows_f32(&self, order: Option<&[usize]>) -> Vec<Vec<f32>> {
        let identity: Vec<usize>;
        let order = match order {
            Some(o) => o,
            None => {
                identity = (0..self.n).collect();
                &identity
            }
        };
        order
            .iter()
            .map(|&i| order.iter().map(|&j| self.get(i, j) as f32).collect())
            .collect()
    }

    /// CSV with one row per datapoint, in `order` when given.
    pub fn to_csv(&self, order: Option<&[usize]>) -> String {
        let mut out = String::new();
        for row in self.rows_f32(order) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// `{"tau":..., "order":[...], "values":[[...]]}` with values reordered.
    pub fn to_json(&self, order: &[usize]) -> serde_json::Value {
        serde_json::json!({
            "tau": crate::pipeline::tau_json(self.tau),
            "unmaskedBandCount": self.unmasked_band_count,
            "order": order,
            "values": self.rows_f32(Some(order)),
        })
    }
}

pub fn similarity_matrix(masked: &MaskedSignatures<'_>) -> Result<SimilarityMatrix, SignatureError> {
    similarity_matrix_with(masked, SimilarityMode::Hamming)
}

pub fn similarity_matrix_with(
    masked: &MaskedSignatures<'_>,
    mode: SimilarityMode,
) -> Result<SimilarityMatrix, SignatureError> {
    let unmasked = masked.unmasked_count();
    if unmasked == 0 {
        return Err(SignatureError::NoBands(masked.tau()));
    }
    let n = masked.n();
    let denom = unmasked as f64;
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let h = masked.hamming(i, j) as f64;
                    match mode {
                        SimilarityMode::Hamming => 1.0 - h / denom,
                        SimilarityMode::Jaccard => {
                            let either = masked.union_ones(i, j);
                            if either == 0 {
                                0.0
                            } else {
                                1.0 - h / either as f64
                            }
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        values[i * n + i] = 1.0;
        for (k, v) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(SimilarityMatrix {
        n,
        values,
        tau: masked.tau(),
        unmasked_band_count: unmasked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::plan_bands;
    use crate::dataset::{AttributeKind, AttributeSchema, AttributeValue, Dataset};
    use crate::signatures::{build_inclusion_matrix, mask_by_tau};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalars(xs: &[f64]) -> Dataset {
        Dataset::new(
            "t",
            vec![AttributeSchema::new("x", AttributeKind::Scalar)],
            xs.iter().map(|&x| vec![AttributeValue::Scalar(x)]).collect(),
            None,
        )
        .unwrap()
    }

    fn naive_hamming(a: &[u64], b: &[u64], bits: usize) -> usize {
        (0..bits)
            .filter(|&k| (a[k / 64] >> (k % 64)) & 1 != (b[k / 64] >> (k % 64)) & 1)
            .count()
    }

    #[test]
    fn hamming_examples() {
        // bit k of the word is position k
        assert_eq!(hamming_distance(&[0b011], &[0b001]).unwrap(), 1);
        assert_eq!(hamming_distance(&[0b101], &[0b101]).unwrap(), 0);
        assert_eq!(hamming_distance(&[0b1111], &[0]).unwrap(), 4);
        assert!(hamming_distance(&[0, 0], &[0]).is_err());
    }

    #[test]
    fn popcount_matches_bit_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let bits = rng.random_range(1..300);
            let words = (bits as usize).div_ceil(64);
            let mask_tail = |w: &mut Vec<u64>| {
                if bits % 64 != 0 {
                    let last = w.len() - 1;
                    w[last] &= (1u64 << (bits % 64)) - 1;
                }
            };
            let mut a: Vec<u64> = (0..words).map(|_| rng.random()).collect();
            let mut b: Vec<u64> = (0..words).map(|_| rng.random()).collect();
            mask_tail(&mut a);
            mask_tail(&mut b);
            assert_eq!(hamming_distance(&a, &b).unwrap(), naive_hamming(&a, &b, bits as usize));
        }
    }

    #[test]
    fn three_scalars() {
        let d = scalars(&[1.0, 2.0, 3.0]);
        let m = build_inclusion_matrix(&d, &plan_bands(&d, None, 0).unwrap()).unwrap();
        let s = similarity_matrix(&mask_by_tau(&m, f64::INFINITY).unwrap()).unwrap();
        assert!((s.get(0, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.get(1, 1), 1.0);
        assert_eq!(s.get(0, 2), s.get(2, 0));
    }

    #[test]
    fn identical_points_fully_similar() {
        let d = scalars(&[1.0, 1.0, 4.0, 2.5]);
        let m = build_inclusion_matrix(&d, &plan_bands(&d, None, 0).unwrap()).unwrap();
        let s = similarity_matrix(&mask_by_tau(&m, f64::INFINITY).unwrap()).unwrap();
        assert_eq!(s.get(0, 1), 1.0);
    }

    #[test]
    fn jaccard_empty_signatures_are_dissimilar() {
        // at tau = 1 only (0,1) survives; points 2 and 3 are outside it
        let d = scalars(&[0.0, 1.0, 5.0, 9.0]);
        let m = build_inclusion_matrix(&d, &plan_bands(&d, None, 0).unwrap()).unwrap();
        let masked = mask_by_tau(&m, 1.0).unwrap();
        let hamming = similarity_matrix(&masked).unwrap();
        let jaccard = similarity_matrix_with(&masked, SimilarityMode::Jaccard).unwrap();
        assert_eq!(hamming.get(2, 3), 1.0);
        assert_eq!(jaccard.get(2, 3), 0.0);
        assert_eq!(jaccard.get(0, 1), 1.0);
    }

    #[test]
    fn exports() {
        let s = SimilarityMatrix::from_rows(&[vec![1.0, 0.25], vec![0.25, 1.0]]);
        assert_eq!(s.to_csv(Some(&[1, 0])), "1,0.25\n0.25,1\n");
        let json = s.to_json(&[1, 0]);
        assert_eq!(json["order"], serde_json::json!([1, 0]));
    }

    proptest! {
        #[test]
        fn pseudometric_and_equivariant(
            xs in prop::collection::vec(-5.0f64..5.0, 4..9),
            tau_q in 0.3f64..1.0,
            rot in 0usize..8,
        ) {
            let d = scalars(&xs);
            let m = build_inclusion_matrix(&d, &plan_bands(&d, None, 0).unwrap()).unwrap();
            let tau = m.size_quantile(tau_q);
            let s = similarity_matrix(&mask_by_tau(&m, tau).unwrap()).unwrap();
            let n = xs.len();
            for i in 0..n {
                prop_assert_eq!(s.get(i, i), 1.0);
                for j in 0..n {
                    prop_assert_eq!(s.get(i, j), s.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&s.get(i, j)));
                    for k in 0..n {
                        let dist = |a, b| 1.0 - s.get(a, b);
                        prop_assert!(dist(i, k) <= dist(i, j) + dist(j, k) + 1e-12);
                    }
                }
            }
            // rotate the rows of the dataset and compare
            let perm: Vec<usize> = (0..n).map(|k| (k + rot) % n).collect();
            let shuffled: Vec<f64> = perm.iter().map(|&k| xs[k]).collect();
            let d2 = scalars(&shuffled);
            let m2 = build_inclusion_matrix(&d2, &plan_bands(&d2, None, 0).unwrap()).unwrap();
            let s2 = similarity_matrix(&mask_by_tau(&m2, tau).unwrap()).unwrap();
            for a in 0..n {
                for b in 0..n {
                    prop_assert!((s2.get(a, b) - s.get(perm[a], perm[b])).abs() < 1e-12);
                }
            }
        }
    }
}
