//! Depth ranking, depth coloring, Tukey outliers, the band-size histogram and
//! per-attribute summaries.
//!
//! Every quantile here uses linear interpolation at position `(n − 1)·p` of
//! the ascending sample.

use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeKind, AttributeValue, Dataset};

pub const COLOR_BIN_FRACTIONS: [f64; 3] = [0.2, 0.4, 0.8];
pub const DEFAULT_HISTOGRAM_BINS: usize = 50;
pub const TUKEY_K: f64 = 1.5;

/// Quantile of an ascending sample. NaN for an empty sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    let frac = pos - lo as f64;
    if frac == 0.0 || a == b {
        a
    } else {
        a + frac * (b - a)
    }
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Self {
        let s = sorted_copy(values);
        Self {
            min: quantile_sorted(&s, 0.0),
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q3: quantile_sorted(&s, 0.75),
            max: quantile_sorted(&s, 1.0),
        }
    }
}

/// Four-step depth coloring; bin 0 holds the most central datapoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthColoring {
    pub bin: Vec<u8>,
    /// Depth of the last datapoint admitted to bins 0, 1 and 2.
    pub thresholds: Vec<f64>,
}

/// Datapoint indices ordered by decreasing depth, ties by index.
pub fn depth_ranking(depths: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..depths.len()).collect();
    order.sort_by(|&a, &b| depths[b].total_cmp(&depths[a]).then(a.cmp(&b)));
    order
}

pub fn color_bins(depths: &[f64]) -> DepthColoring {
    let n = depths.len();
    let cuts: Vec<usize> = COLOR_BIN_FRACTIONS
        .iter()
        .map(|f| ((f * n as f64) - 1e-9).ceil() as usize)
        .collect();
    let ranking = depth_ranking(depths);
    let mut bin = vec![3u8; n];
    for (rank, &i) in ranking.iter().enumerate() {
        bin[i] = cuts.iter().position(|&c| rank < c).unwrap_or(3) as u8;
    }
    let thresholds = cuts
        .iter()
        .map(|&c| if c == 0 { f64::NAN } else { depths[ranking[c.min(n) - 1]] })
        .collect();
    DepthColoring { bin, thresholds }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutlierFlags {
    pub is_outlier: Vec<bool>,
    pub lower_fence: f64,
    pub q1: f64,
    pub q3: f64,
}

impl OutlierFlags {
    pub fn count(&self) -> usize {
        self.is_outlier.iter().filter(|&&f| f).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.is_outlier.len()).filter(|&i| self.is_outlier[i]).collect()
    }
}

/// Flags depth below `Q1 − 1.5·IQR`, and every zero depth.
pub fn tukey_outliers(depths: &[f64]) -> OutlierFlags {
    let s = sorted_copy(depths);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let lower_fence = q1 - TUKEY_K * (q3 - q1);
    OutlierFlags {
        is_outlier: depths.iter().map(|&d| d < lower_fence || d == 0.0).collect(),
        lower_fence,
        q1,
        q3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BandSizeHistogram {
    pub log_scale: bool,
    /// `bins + 1` ascending edges (in linear units even when log-scaled).
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub band_count: usize,
    pub min: f64,
    pub max: f64,
    /// Band size at each whole percentile 0..=100, for slider snapping.
    pub percentiles: Vec<f64>,
}

impl BandSizeHistogram {
    /// Whether `tau` lies within the observed band-size range.
    pub fn is_selectable(&self, tau: f64) -> bool {
        tau >= self.min && tau <= self.max
    }
}

/// Equal-width (or equal-log-width) histogram of band sizes. Zero sizes go to
/// the first bin in log scale and non-finite sizes to the last.
pub fn band_size_histogram(sizes: &[f64], bins: usize, log_scale: bool) -> BandSizeHistogram {
    let bins = bins.max(1);
    let sorted = sorted_copy(sizes);
    let finite: Vec<f64> = sorted.iter().copied().filter(|v| v.is_finite()).collect();
    let (min, max) = match (finite.first(), finite.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0.0, 0.0),
    };
    let log_min = finite.iter().copied().find(|&v| v > 0.0).map(f64::ln);
    let use_log = log_scale && log_min.is_some() && max > 0.0;
    let (lo, hi) = if use_log {
        (log_min.unwrap(), max.ln())
    } else {
        (min, max)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|k| {
            let e = if k == bins { hi } else { lo + width * k as f64 };
            if use_log {
                e.exp()
            } else {
                e
            }
        })
        .collect();
    let mut counts = vec![0usize; bins];
    for &s in sizes {
        let k = if !s.is_finite() {
            bins - 1
        } else {
            let x = if use_log {
                if s > 0.0 {
                    s.ln()
                } else {
                    lo
                }
            } else {
                s
            };
            if width > 0.0 {
                (((x - lo) / width).floor().max(0.0) as usize).min(bins - 1)
            } else {
                0
            }
        };
        counts[k] += 1;
    }
    BandSizeHistogram {
        log_scale: use_log,
        edges,
        counts,
        band_count: sizes.len(),
        min,
        max,
        percentiles: (0..=100).map(|p| quantile_sorted(&sorted, p as f64 / 100.0)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CategoryCounts {
    pub label: String,
    pub total: usize,
    /// Datapoints holding the category, split by color bin.
    pub by_bin: [usize; 4],
    /// Datapoints holding the category, split by cluster label.
    pub by_cluster: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum AttributeSummary {
    Categorical {
        name: String,
        categories: Vec<CategoryCounts>,
    },
    /// `outliers` are the values outside the boxplot fences.
    Scalar {
        name: String,
        summary: FiveNumber,
        outliers: Vec<usize>,
    },
    /// One summary per coordinate; `outliers` are the depth outliers.
    Point {
        name: String,
        coordinates: Vec<FiveNumber>,
        outliers: Vec<usize>,
    },
    /// One summary per grid sample.
    Function {
        name: String,
        grid: Vec<f64>,
        pointwise: Vec<FiveNumber>,
        outliers: Vec<usize>,
    },
    /// `pointwise[t][c]` summarizes coordinate `c` at time `t`.
    #[serde(rename_all = "camelCase")]
    Curve {
        name: String,
        time_points: usize,
        pointwise: Vec<Vec<FiveNumber>>,
        outliers: Vec<usize>,
    },
}

impl AttributeSummary {
    pub fn name(&self) -> &str {
        match self {
            AttributeSummary::Categorical { name, .. }
            | AttributeSummary::Scalar { name, .. }
            | AttributeSummary::Point { name, .. }
            | AttributeSummary::Function { name, .. }
            | AttributeSummary::Curve { name, .. } => name,
        }
    }
}

pub fn attribute_summaries(
    dataset: &Dataset,
    coloring: &DepthColoring,
    labels: &[usize],
    outliers: &OutlierFlags,
) -> Vec<AttributeSummary> {
    let clusters = labels.iter().copied().max().map_or(0, |m| m + 1);
    let depth_outliers = outliers.indices();
    dataset
        .schema()
        .iter()
        .enumerate()
        .map(|(a, attr)| {
            let name = attr.name.clone();
            let column: Vec<&AttributeValue> = dataset.column(a).collect();
            match &attr.kind {
                AttributeKind::CategoricalSet { universe } => {
                    let mut categories: Vec<CategoryCounts> = universe
                        .iter()
                        .map(|label| CategoryCounts {
                            label: label.clone(),
                            total: 0,
                            by_bin: [0; 4],
                            by_cluster: vec![0; clusters],
                        })
                        .collect();
                    for (i, v) in column.iter().enumerate() {
                        if let AttributeValue::CategoricalSet(set) = v {
                            for c in set.iter() {
                                let counts = &mut categories[c];
                                counts.total += 1;
                                counts.by_bin[coloring.bin[i] as usize] += 1;
                                counts.by_cluster[labels[i]] += 1;
                            }
                        }
                    }
                    AttributeSummary::Categorical { name, categories }
                }
                AttributeKind::Scalar => {
                    let xs: Vec<f64> = column.iter().map(|v| scalar_of(v)).collect();
                    let summary = FiveNumber::of(&xs);
                    let iqr = summary.q3 - summary.q1;
                    let (lo, hi) = (summary.q1 - TUKEY_K * iqr, summary.q3 + TUKEY_K * iqr);
                    let outliers = (0..xs.len()).filter(|&i| xs[i] < lo || xs[i] > hi).collect();
                    AttributeSummary::Scalar { name, summary, outliers }
                }
                AttributeKind::Point { dim } => AttributeSummary::Point {
                    name,
                    coordinates: (0..*dim)
                        .map(|c| {
                            let xs: Vec<f64> = column
                                .iter()
                                .map(|v| match v {
                                    AttributeValue::Point(p) => p[c],
                                    _ => unreachable!("schema-checked"),
                                })
                                .collect();
                            FiveNumber::of(&xs)
                        })
                        .collect(),
                    outliers: depth_outliers.clone(),
                },
                AttributeKind::Function { grid } => AttributeSummary::Function {
                    name,
                    grid: grid.clone(),
                    pointwise: (0..grid.len())
                        .map(|g| {
                            let xs: Vec<f64> = column
                                .iter()
                                .map(|v| match v {
                                    AttributeValue::Function(f) => f[g],
                                    _ => unreachable!("schema-checked"),
                                })
                                .collect();
                            FiveNumber::of(&xs)
                        })
                        .collect(),
                    outliers: depth_outliers.clone(),
                },
                AttributeKind::Curve { dim, time_points } => AttributeSummary::Curve {
                    name,
                    time_points: *time_points,
                    pointwise: (0..*time_points)
                        .map(|t| {
                            (0..*dim)
                                .map(|c| {
                                    let xs: Vec<f64> = column
                                        .iter()
                                        .map(|v| match v {
                                            AttributeValue::Curve(curve) => curve[t][c],
                                            _ => unreachable!("schema-checked"),
                                        })
                                        .collect();
                                    FiveNumber::of(&xs)
                                })
                                .collect()
                        })
                        .collect(),
                    outliers: depth_outliers.clone(),
                },
            }
        })
        .collect()
}

fn scalar_of(v: &AttributeValue) -> f64 {
    match v {
        AttributeValue::Scalar(x) => *x,
        _ => unreachable!("schema-checked"),
    }
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation. A constant input correlates 1 with another
/// constant input and 0 with anything else.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs equal lengths");
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    match (saa == 0.0, sbb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => sab / (saa * sbb).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AttributeSchema, CategorySet};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bin_sizes(c: &DepthColoring) -> [usize; 4] {
        let mut s = [0; 4];
        for &b in &c.bin {
            s[b as usize] += 1;
        }
        s
    }

    #[test]
    fn quantiles() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile_sorted(&xs, 0.5), 50.5);
        assert_eq!(quantile_sorted(&xs, 0.25), 25.75);
        assert_eq!(quantile_sorted(&xs, 0.75), 75.25);
        assert_eq!(quantile_sorted(&[1.0, f64::INFINITY], 1.0), f64::INFINITY);
        assert_eq!(quantile_sorted(&[f64::INFINITY, f64::INFINITY], 0.5), f64::INFINITY);
        assert!(quantile_sorted(&[], 0.5).is_nan());
    }

    #[test]
    fn bins_for_ten_and_hundred() {
        let d: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let c = color_bins(&d);
        assert_eq!(bin_sizes(&c), [2, 2, 4, 2]);
        assert_eq!(c.bin[9], 0);
        assert_eq!(c.bin[0], 3);
        let d: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).sin()).collect();
        assert_eq!(bin_sizes(&color_bins(&d)), [20, 20, 40, 20]);
    }

    #[test]
    fn equal_depths_bin_by_index() {
        let c = color_bins(&[0.5; 10]);
        assert_eq!(c.bin, vec![0, 0, 1, 1, 2, 2, 2, 2, 3, 3]);
    }

    #[test]
    fn tukey_examples() {
        let f = tukey_outliers(&[0.9, 0.85, 0.8, 0.05]);
        assert_eq!(f.is_outlier, vec![false, false, false, true]);
        assert!((f.q1 - 0.6125).abs() < 1e-12);
        assert!((f.lower_fence - 0.2375).abs() < 1e-12);
        assert_eq!(tukey_outliers(&[0.4; 8]).count(), 0);
        let f = tukey_outliers(&[0.0, 0.9, 0.9, 0.9, 0.9, 0.9]);
        assert_eq!(f.indices(), vec![0]);
    }

    #[test]
    fn histogram_single_value() {
        let h = band_size_histogram(&[1.0, 1.0, 1.0], 50, false);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts[0], 3);
        assert!(h.is_selectable(1.0));
        assert!(!h.is_selectable(1.5));
    }

    #[test]
    fn histogram_uniform_within_four_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sizes: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let h = band_size_histogram(&sizes, 10, false);
        let expected = 1000.0;
        let sigma = (10_000.0f64 * 0.1 * 0.9).sqrt();
        for &c in &h.counts {
            assert!((c as f64 - expected).abs() < 4.0 * sigma, "{c}");
        }
        assert_eq!(h.percentiles.len(), 101);
        assert_eq!(h.edges.len(), 11);
    }

    #[test]
    fn histogram_log_scale() {
        let sizes = [0.0, 1.0, 10.0, 100.0, 1000.0, f64::INFINITY];
        let h = band_size_histogram(&sizes, 3, true);
        assert!(h.log_scale);
        assert_eq!(h.counts, vec![2, 1, 3]);
        assert!((h.edges[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn summaries() {
        let universe = vec!["a".to_string(), "b".to_string()];
        let schema = vec![
            AttributeSchema::new("c", AttributeKind::CategoricalSet { universe }),
            AttributeSchema::new("x", AttributeKind::Scalar),
        ];
        let rows = (1..=100)
            .map(|i| {
                vec![
                    AttributeValue::CategoricalSet(CategorySet::from_indices(2, [0])),
                    AttributeValue::Scalar(i as f64),
                ]
            })
            .collect();
        let d = Dataset::new("s", schema, rows, None).unwrap();
        let depths: Vec<f64> = (0..100).map(|i| 1.0 - i as f64 / 200.0).collect();
        let coloring = color_bins(&depths);
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let out = attribute_summaries(&d, &coloring, &labels, &tukey_outliers(&depths));
        match &out[0] {
            AttributeSummary::Categorical { categories, .. } => {
                assert_eq!(categories[0].total, 100);
                assert_eq!(categories[0].by_bin, [20, 20, 40, 20]);
                assert_eq!(categories[0].by_cluster, vec![50, 50]);
                assert_eq!(categories[1].total, 0);
            }
            other => panic!("{other:?}"),
        }
        match &out[1] {
            AttributeSummary::Scalar { summary, outliers, .. } => {
                assert_eq!((summary.q1, summary.median, summary.q3), (25.75, 50.5, 75.25));
                assert!(outliers.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spearman_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        assert_eq!(spearman(&[1.0; 4], &[1.0; 4]), 1.0);
    }

    proptest! {
        #[test]
        fn bins_respect_depth_order(depths in prop::collection::vec(0.0f64..1.0, 5..60)) {
            let c = color_bins(&depths);
            for i in 0..depths.len() {
                for j in 0..depths.len() {
                    if depths[i] > depths[j] {
                        prop_assert!(c.bin[i] <= c.bin[j]);
                    }
                }
            }
        }

        #[test]
        fn bins_follow_relabeling(depths in prop::collection::vec(0.0f64..1.0, 5..40), rot in 0usize..40) {
            let n = depths.len();
            let perm: Vec<usize> = (0..n).map(|k| (k + rot) % n).collect();
            let moved: Vec<f64> = perm.iter().map(|&k| depths[k]).collect();
            let (a, b) = (color_bins(&depths), color_bins(&moved));
            // distinct depths make the tie rule irrelevant
            let mut s = depths.clone();
            s.sort_by(f64::total_cmp);
            s.dedup();
            if s.len() == n {
                for k in 0..n {
                    prop_assert_eq!(b.bin[k], a.bin[perm[k]]);
                }
            }
        }

        #[test]
        fn tukey_invariant_under_positive_scaling(
            depths in prop::collection::vec(0.0f64..1.0, 4..40),
            exponent in -8i32..8,
        ) {
            // powers of two keep the scaling exact
            let scale = 2f64.powi(exponent);
            let scaled: Vec<f64> = depths.iter().map(|d| d * scale).collect();
            prop_assert_eq!(tukey_outliers(&depths).is_outlier, tukey_outliers(&scaled).is_outlier);
        }

        #[test]
        fn histogram_counts_sum(sizes in prop::collection::vec(0.0f64..1e6, 1..300), log in any::<bool>()) {
            let h = band_size_histogram(&sizes, DEFAULT_HISTOGRAM_BINS, log);
            prop_assert_eq!(h.counts.iter().sum::<usize>(), sizes.len());
        }
    }
}
