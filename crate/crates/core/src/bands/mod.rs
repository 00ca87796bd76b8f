//! Bands over random datapoint subsets: per-datatype inclusion tests and band
//! sizes, combined across attributes by conjunction (inclusion) and product
//! (size).
//!
//! | datatype    | band                          | size                                  |
//! |-------------|-------------------------------|---------------------------------------|
//! | scalar      | closed interval [min, max]    | max − min                             |
//! | point (d)   | convex hull of members        | hull volume                           |
//! | categorical | sets S with ∩ ⊆ S ⊆ ∪         | 2^\|∪ \ ∩\|                            |
//! | function    | pointwise min/max envelope    | trapezoid integral of (max − min)     |
//! | curve (d)   | per-time convex hull          | product over time of hull volumes     |

pub mod geometry;
mod plan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttributeKind, AttributeSchema, AttributeValue, CategorySet, Dataset};
use geometry::{hull_volume, in_hull};

pub use plan::{binomial, plan_bands, plan_for_shape, subset_size, BandPlan, Enumeration, DEFAULT_BUDGET};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BandError {
    #[error("dataset has {n} datapoints but bands need {r} members")]
    TooFewPoints { n: usize, r: usize },
    #[error("band budget {budget} is below the dataset size {n}")]
    BudgetTooSmall { budget: usize, n: usize },
}

pub fn band_includes_scalar(v: f64, members: &[f64]) -> bool {
    let (lo, hi) = min_max(members.iter().copied());
    lo <= v && v <= hi
}

pub fn band_includes_point(p: &[f64], members: &[&[f64]]) -> bool {
    in_hull(p, members)
}

pub fn band_includes_set(s: &CategorySet, members: &[&CategorySet]) -> bool {
    let (inter, union) = set_envelope(members);
    inter.is_subset(s) && s.is_subset(&union)
}

pub fn band_includes_function(f: &[f64], members: &[&[f64]]) -> bool {
    f.iter().enumerate().all(|(t, &v)| {
        let (lo, hi) = min_max(members.iter().map(|m| m[t]));
        lo <= v && v <= hi
    })
}

pub fn band_includes_curve(c: &[Vec<f64>], members: &[&[Vec<f64>]]) -> bool {
    let mut at_t: Vec<&[f64]> = Vec::with_capacity(members.len());
    c.iter().enumerate().all(|(t, p)| {
        at_t.clear();
        at_t.extend(members.iter().map(|m| m[t].as_slice()));
        in_hull(p, &at_t)
    })
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn set_envelope(members: &[&CategorySet]) -> (CategorySet, CategorySet) {
    let mut inter = members[0].clone();
    let mut union = members[0].clone();
    for m in &members[1..] {
        inter = inter.intersection(m);
        union = union.union(m);
    }
    (inter, union)
}

fn trapezoid(grid: &[f64], values: impl Fn(usize) -> f64) -> f64 {
    grid.windows(2)
        .enumerate()
        .map(|(i, w)| (w[1] - w[0]) * (values(i) + values(i + 1)) / 2.0)
        .sum()
}

/// Size of a band, per attribute and in total. Log sizes are carried
/// alongside because curve volumes multiply over every time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BandSize {
    pub per_attribute: Vec<f64>,
    pub per_attribute_log: Vec<f64>,
    pub total: f64,
    pub log_total: f64,
}

/// The derived region of one attribute for one band.
#[derive(Debug, Clone)]
enum Envelope {
    Interval { lo: f64, hi: f64 },
    Hull { vertices: Vec<Vec<f64>> },
    Lattice { inter: CategorySet, union: CategorySet },
    Tube { lo: Vec<f64>, hi: Vec<f64> },
    /// Per time point, the members' positions.
    HullSweep { vertices: Vec<Vec<Vec<f64>>> },
}

impl Envelope {
    fn build(attr: usize, kind: &AttributeKind, members: &[&[AttributeValue]]) -> Self {
        match kind {
            AttributeKind::Scalar => {
                let (lo, hi) = min_max(members.iter().map(|m| scalar(&m[attr])));
                Envelope::Interval { lo, hi }
            }
            AttributeKind::Point { .. } => Envelope::Hull {
                vertices: members.iter().map(|m| vector(&m[attr]).to_vec()).collect(),
            },
            AttributeKind::CategoricalSet { .. } => {
                let sets: Vec<&CategorySet> = members.iter().map(|m| set(&m[attr])).collect();
                let (inter, union) = set_envelope(&sets);
                Envelope::Lattice { inter, union }
            }
            AttributeKind::Function { grid } => {
                let (lo, hi) = (0..grid.len())
                    .map(|t| min_max(members.iter().map(|m| vector(&m[attr])[t])))
                    .unzip();
                Envelope::Tube { lo, hi }
            }
            AttributeKind::Curve { time_points, .. } => Envelope::HullSweep {
                vertices: (0..*time_points)
                    .map(|t| members.iter().map(|m| curve(&m[attr])[t].clone()).collect())
                    .collect(),
            },
        }
    }

    fn contains(&self, value: &AttributeValue) -> bool {
        match (self, value) {
            (Envelope::Interval { lo, hi }, AttributeValue::Scalar(v)) => lo <= v && v <= hi,
            (Envelope::Hull { vertices }, AttributeValue::Point(p)) => {
                let refs: Vec<&[f64]> = vertices.iter().map(Vec::as_slice).collect();
                in_hull(p, &refs)
            }
            (Envelope::Lattice { inter, union }, AttributeValue::CategoricalSet(s)) => {
                inter.is_subset(s) && s.is_subset(union)
            }
            (Envelope::Tube { lo, hi }, AttributeValue::Function(f)) => f
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| l <= v && v <= h),
            (Envelope::HullSweep { vertices }, AttributeValue::Curve(c)) => {
                let mut refs: Vec<&[f64]> = Vec::new();
                c.iter().zip(vertices).all(|(p, at_t)| {
                    refs.clear();
                    refs.extend(at_t.iter().map(Vec::as_slice));
                    in_hull(p, &refs)
                })
            }
            _ => unreachable!("values are validated against the schema"),
        }
    }

    /// `(size, ln size)`.
    fn size(&self, kind: &AttributeKind) -> (f64, f64) {
        match (self, kind) {
            (Envelope::Interval { lo, hi }, _) => {
                let s = hi - lo;
                (s, s.ln())
            }
            (Envelope::Hull { vertices }, _) => {
                let refs: Vec<&[f64]> = vertices.iter().map(Vec::as_slice).collect();
                let v = hull_volume(&refs);
                (v, v.ln())
            }
            (Envelope::Lattice { inter, union }, _) => {
                let free = union.len() - inter.len();
                let log = free as f64 * std::f64::consts::LN_2;
                (2f64.powi(free as i32), log)
            }
            (Envelope::Tube { lo, hi }, AttributeKind::Function { grid }) => {
                let v = trapezoid(grid, |i| hi[i] - lo[i]);
                (v, v.ln())
            }
            (Envelope::HullSweep { vertices }, _) => {
                let mut log = 0.0;
                for at_t in vertices {
                    let refs: Vec<&[f64]> = at_t.iter().map(Vec::as_slice).collect();
                    log += hull_volume(&refs).ln();
                    if log == f64::NEG_INFINITY {
                        break;
                    }
                }
                (log.exp(), log)
            }
            _ => unreachable!("envelope built from this kind"),
        }
    }
}

fn scalar(v: &AttributeValue) -> f64 {
    match v {
        AttributeValue::Scalar(x) => *x,
        _ => unreachable!("validated"),
    }
}

fn vector(v: &AttributeValue) -> &[f64] {
    match v {
        AttributeValue::Point(p) | AttributeValue::Function(p) => p,
        _ => unreachable!("validated"),
    }
}

fn set(v: &AttributeValue) -> &CategorySet {
    match v {
        AttributeValue::CategoricalSet(s) => s,
        _ => unreachable!("validated"),
    }
}

fn curve(v: &AttributeValue) -> &[Vec<f64>] {
    match v {
        AttributeValue::Curve(c) => c,
        _ => unreachable!("validated"),
    }
}

/// A band over a heterogeneous schema: one envelope per attribute.
#[derive(Debug, Clone)]
pub struct Band {
    members: Vec<u32>,
    envelopes: Vec<Envelope>,
}

impl Band {
    pub fn new(dataset: &Dataset, members: &[u32]) -> Self {
        let rows: Vec<&[AttributeValue]> = members.iter().map(|&i| dataset.point(i as usize)).collect();
        Self::from_rows(dataset.schema(), members.to_vec(), &rows)
    }

    fn from_rows(schema: &[AttributeSchema], members: Vec<u32>, rows: &[&[AttributeValue]]) -> Self {
        let envelopes = schema
            .iter()
            .enumerate()
            .map(|(a, attr)| Envelope::build(a, &attr.kind, rows))
            .collect();
        Self { members, envelopes }
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    /// Conjunction of the per-attribute inclusions.
    pub fn includes(&self, point: &[AttributeValue]) -> bool {
        self.envelopes.iter().zip(point).all(|(e, v)| e.contains(v))
    }

    pub fn size(&self, schema: &[AttributeSchema]) -> BandSize {
        let (per_attribute, per_attribute_log): (Vec<f64>, Vec<f64>) = self
            .envelopes
            .iter()
            .zip(schema)
            .map(|(e, a)| e.size(&a.kind))
            .unzip();
        let log_total = per_attribute_log.iter().sum();
        let total = per_attribute.iter().product();
        BandSize {
            per_attribute,
            per_attribute_log,
            total,
            log_total,
        }
    }
}

/// Per-attribute and total size of the band spanned by `members`.
pub fn band_size(members: &[&[AttributeValue]], schema: &[AttributeSchema]) -> BandSize {
    Band::from_rows(schema, Vec::new(), members).size(schema)
}

pub fn heterogeneous_inclusion(
    point: &[AttributeValue],
    members: &[&[AttributeValue]],
    schema: &[AttributeSchema],
) -> bool {
    Band::from_rows(schema, Vec::new(), members).includes(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set_of(bits: &[usize]) -> CategorySet {
        CategorySet::from_indices(3, bits.iter().copied())
    }

    #[test]
    fn scalar_inclusion() {
        assert!(band_includes_scalar(2.0, &[1.0, 3.0]));
        assert!(band_includes_scalar(1.0, &[1.0, 3.0]));
        assert!(!band_includes_scalar(5.0, &[1.0, 3.0]));
    }

    #[test]
    fn point_inclusion() {
        let tri: [&[f64]; 3] = [&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]];
        assert!(band_includes_point(&[0.1, 0.1], &tri));
        assert!(!band_includes_point(&[1.0, 1.0], &tri));
        assert!(band_includes_point(&[0.5, 0.0], &tri));
    }

    #[test]
    fn set_inclusion() {
        let (a, ab) = (set_of(&[0]), set_of(&[0, 1]));
        let members = [&a, &ab];
        assert!(band_includes_set(&set_of(&[0]), &members));
        assert!(!band_includes_set(&set_of(&[1]), &members));
        assert!(!band_includes_set(&set_of(&[0, 2]), &members));
        assert!(band_includes_set(&set_of(&[0, 1]), &members));
    }

    #[test]
    fn function_inclusion() {
        let (zero, one) = (vec![0.0; 5], vec![1.0; 5]);
        let members = [zero.as_slice(), one.as_slice()];
        assert!(band_includes_function(&[0.5; 5], &members));
        assert!(!band_includes_function(&[0.5, 0.5, 1.5, 0.5, 0.5], &members));
        assert!(band_includes_function(&zero, &members));
    }

    #[test]
    fn curve_inclusion() {
        let c1 = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let c2 = vec![vec![1.0, 0.0], vec![2.0, 0.0]];
        let c3 = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        let members = [c1.as_slice(), c2.as_slice(), c3.as_slice()];
        let mean: Vec<Vec<f64>> = (0..2)
            .map(|t| (0..2).map(|k| (c1[t][k] + c2[t][k] + c3[t][k]) / 3.0).collect())
            .collect();
        assert!(band_includes_curve(&mean, &members));
        assert!(band_includes_curve(&c2, &members));
        let far = vec![vec![10.0, 10.0], vec![1.2, 0.2]];
        assert!(!band_includes_curve(&far, &members));
    }

    fn schema(kinds: Vec<AttributeKind>) -> Vec<AttributeSchema> {
        kinds
            .into_iter()
            .enumerate()
            .map(|(i, k)| AttributeSchema::new(format!("a{i}"), k))
            .collect()
    }

    #[test]
    fn sizes() {
        let s = schema(vec![AttributeKind::Scalar]);
        let (m1, m2) = ([AttributeValue::Scalar(1.0)], [AttributeValue::Scalar(3.0)]);
        assert_eq!(band_size(&[&m1, &m2], &s).total, 2.0);

        let s = schema(vec![AttributeKind::CategoricalSet {
            universe: vec!["a".into(), "b".into(), "c".into()],
        }]);
        let (m1, m2) = (
            [AttributeValue::CategoricalSet(set_of(&[0]))],
            [AttributeValue::CategoricalSet(set_of(&[0, 1]))],
        );
        assert_eq!(band_size(&[&m1, &m2], &s).total, 2.0);

        let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let s = schema(vec![AttributeKind::Function { grid }]);
        let (m1, m2) = ([AttributeValue::Function(vec![0.0; 11])], [AttributeValue::Function(vec![1.0; 11])]);
        assert!((band_size(&[&m1, &m2], &s).total - 1.0).abs() < 1e-12);

        let s = schema(vec![AttributeKind::Point { dim: 2 }]);
        let tri: Vec<[AttributeValue; 1]> = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
            .iter()
            .map(|p| [AttributeValue::Point(p.to_vec())])
            .collect();
        let refs: Vec<&[AttributeValue]> = tri.iter().map(|r| r.as_slice()).collect();
        assert!((band_size(&refs, &s).total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn curve_size_is_product_and_zero_volume_is_neg_infinity() {
        let s = schema(vec![AttributeKind::Curve { dim: 1, time_points: 3 }]);
        let a = [AttributeValue::Curve(vec![vec![0.0], vec![0.0], vec![0.0]])];
        let b = [AttributeValue::Curve(vec![vec![2.0], vec![3.0], vec![0.5]])];
        let size = band_size(&[&a, &b], &s);
        assert!((size.total - 3.0).abs() < 1e-12);
        assert!((size.log_total - 3f64.ln()).abs() < 1e-12);
        let c = [AttributeValue::Curve(vec![vec![2.0], vec![3.0], vec![0.0]])];
        let size = band_size(&[&a, &c], &s);
        assert_eq!(size.log_total, f64::NEG_INFINITY);
        assert_eq!(size.total, 0.0);
    }

    #[test]
    fn heterogeneous_conjunction() {
        let s = schema(vec![
            AttributeKind::Scalar,
            AttributeKind::CategoricalSet {
                universe: vec!["a".into(), "b".into(), "c".into()],
            },
        ]);
        let m1 = [AttributeValue::Scalar(1.0), AttributeValue::CategoricalSet(set_of(&[0]))];
        let m2 = [AttributeValue::Scalar(3.0), AttributeValue::CategoricalSet(set_of(&[0, 1]))];
        let inside = [AttributeValue::Scalar(2.0), AttributeValue::CategoricalSet(set_of(&[0]))];
        let set_out = [AttributeValue::Scalar(2.0), AttributeValue::CategoricalSet(set_of(&[1]))];
        assert!(heterogeneous_inclusion(&inside, &[&m1, &m2], &s));
        assert!(!heterogeneous_inclusion(&set_out, &[&m1, &m2], &s));
        let size = band_size(&[&m1, &m2], &s);
        assert_eq!(size.per_attribute, vec![2.0, 2.0]);
        assert_eq!(size.total, 4.0);
    }

    proptest! {
        #[test]
        fn set_band_monotone_in_members(
            sets in prop::collection::vec(0u8..8, 3..6),
            probe in 0u8..8,
        ) {
            let sets: Vec<CategorySet> = sets
                .iter()
                .map(|&b| CategorySet::from_indices(3, (0..3).filter(|i| b & (1 << i) != 0)))
                .collect();
            let probe = CategorySet::from_indices(3, (0..3).filter(|i| probe & (1 << i) != 0));
            let refs: Vec<&CategorySet> = sets.iter().collect();
            for k in 2..refs.len() {
                if band_includes_set(&probe, &refs[..k]) {
                    prop_assert!(band_includes_set(&probe, &refs[..k + 1]));
                }
            }
        }

        #[test]
        fn generators_are_included(
            xs in prop::collection::vec(-10.0f64..10.0, 3),
            pts in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 3),
        ) {
            for &x in &xs {
                prop_assert!(band_includes_scalar(x, &xs));
            }
            let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
            for p in &pts {
                prop_assert!(band_includes_point(p, &refs));
            }
        }

        #[test]
        fn band_sizes_nonnegative(xs in prop::collection::vec(-10.0f64..10.0, 2..5)) {
            let rows: Vec<[AttributeValue; 1]> = xs.iter().map(|&x| [AttributeValue::Scalar(x)]).collect();
            let refs: Vec<&[AttributeValue]> = rows.iter().map(|r| r.as_slice()).collect();
            let size = band_size(&refs, &schema(vec![AttributeKind::Scalar]));
            prop_assert!(size.total >= 0.0);
        }
    }
}
