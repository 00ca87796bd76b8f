//! Heterogeneous dataset representation.
//!
//! A [`Dataset`] is an ordered schema of typed attributes plus `n` rows whose
//! cells are [`AttributeValue`]s aligned with that schema. Construction goes
//! through [`Dataset::new`], which enforces every shape invariant; once built
//! a dataset is immutable.

mod io;
mod synthetic;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use io::{parse_dataset, parse_schema, to_json_bytes, to_json_value, DatasetFormat};
pub use synthetic::{generate_synthetic, subsample, SyntheticSpec};

/// Largest dimension accepted for points and curves.
pub const MAX_DIM: usize = 3;

/// Smallest dataset the engine accepts.
pub const MIN_POINTS: usize = 3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema mismatch at row {row}, attribute `{attribute}`: {detail}")]
    SchemaMismatch {
        row: usize,
        attribute: String,
        detail: String,
    },
    #[error("unknown category `{label}` at row {row}, attribute `{attribute}`")]
    UnknownCategory {
        row: usize,
        attribute: String,
        label: String,
    },
    #[error("ragged samples at row {row}, attribute `{attribute}`: expected {expected}, found {found}")]
    Ragged {
        row: usize,
        attribute: String,
        expected: usize,
        found: usize,
    },
    #[error("missing value at row {row}, attribute `{attribute}`")]
    Missing { row: usize, attribute: String },
    #[error("dataset needs at least {MIN_POINTS} datapoints, got {0}")]
    TooFewPoints(usize),
    #[error("invalid synthetic spec: {0}")]
    Synthetic(String),
}

/// The datatype of one attribute column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum AttributeKind {
    Scalar,
    Point {
        dim: usize,
    },
    #[serde(rename = "categorical")]
    CategoricalSet {
        universe: Vec<String>,
    },
    Function {
        grid: Vec<f64>,
    },
    Curve {
        dim: usize,
        #[serde(rename = "timePoints")]
        time_points: usize,
    },
}

impl AttributeKind {
    /// Smallest band cardinality for which this datatype's band is
    /// non-trivial: two for intervals, envelopes and set lattices, `d + 1`
    /// for simplices.
    pub fn minimal_band_cardinality(&self) -> usize {
        match self {
            AttributeKind::Scalar
            | AttributeKind::CategoricalSet { .. }
            | AttributeKind::Function { .. } => 2,
            AttributeKind::Point { dim } | AttributeKind::Curve { dim, .. } => dim + 1,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            AttributeKind::Scalar => "scalar",
            AttributeKind::Point { .. } => "point",
            AttributeKind::CategoricalSet { .. } => "categorical",
            AttributeKind::Function { .. } => "function",
            AttributeKind::Curve { .. } => "curve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
}

impl AttributeSchema {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |msg: String| Err(DatasetError::InvalidSchema(format!("`{}`: {msg}", self.name)));
        match &self.kind {
            AttributeKind::Scalar => {}
            AttributeKind::Point { dim } => {
                if !(1..=MAX_DIM).contains(dim) {
                    return bad(format!("point dim must be in 1..={MAX_DIM}, got {dim}"));
                }
            }
            AttributeKind::CategoricalSet { universe } => {
                if universe.is_empty() {
                    return bad("empty category universe".into());
                }
                for (i, label) in universe.iter().enumerate() {
                    if universe[..i].contains(label) {
                        return bad(format!("duplicate category label `{label}`"));
                    }
                }
            }
            AttributeKind::Function { grid } => {
                if grid.is_empty() {
                    return bad("empty function grid".into());
                }
                if grid.iter().any(|g| !g.is_finite()) {
                    return bad("non-finite grid abscissa".into());
                }
                if grid.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("grid abscissae must be strictly increasing".into());
                }
            }
            AttributeKind::Curve { dim, time_points } => {
                if !(1..=MAX_DIM).contains(dim) {
                    return bad(format!("curve dim must be in 1..={MAX_DIM}, got {dim}"));
                }
                if *time_points < 2 {
                    return bad(format!("curves need at least 2 time points, got {time_points}"));
                }
            }
        }
        Ok(())
    }
}

/// A subset of a categorical universe, stored as packed bits.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct CategorySet {
    words: Vec<u64>,
}

impl CategorySet {
    pub fn empty(universe_len: usize) -> Self {
        Self {
            words: vec![0; universe_len.div_ceil(64).max(1)],
        }
    }

    pub fn from_indices(universe_len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(universe_len);
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn insert(&mut self, index: usize) {
        self.words[index / 64] |= 1 << (index % 64);
    }

    pub fn contains(&self, index: usize) -> bool {
        self.words
            .get(index / 64)
            .is_some_and(|w| w & (1 << (index % 64)) != 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w & (1 << b) != 0).map(move |b| wi * 64 + b)
        })
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
        }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}

impl fmt::Debug for CategorySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// One typed cell of a datapoint.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Scalar(f64),
    Point(Vec<f64>),
    CategoricalSet(CategorySet),
    Function(Vec<f64>),
    /// `timePoints` positions, each of length `dim`.
    Curve(Vec<Vec<f64>>),
}

impl AttributeValue {
    fn check(&self, kind: &AttributeKind, row: usize, attr: &str) -> Result<(), DatasetError> {
        let mismatch = |detail: String| DatasetError::SchemaMismatch {
            row,
            attribute: attr.to_string(),
            detail,
        };
        let ragged = |expected, found| DatasetError::Ragged {
            row,
            attribute: attr.to_string(),
            expected,
            found,
        };
        let finite = |xs: &[f64]| {
            if xs.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(DatasetError::Missing {
                    row,
                    attribute: attr.to_string(),
                })
            }
        };
        match (self, kind) {
            (AttributeValue::Scalar(v), AttributeKind::Scalar) => finite(std::slice::from_ref(v)),
            (AttributeValue::Point(p), AttributeKind::Point { dim }) => {
                if p.len() != *dim {
                    return Err(ragged(*dim, p.len()));
                }
                finite(p)
            }
            (AttributeValue::CategoricalSet(s), AttributeKind::CategoricalSet { universe }) => {
                if s.words.len() != universe.len().div_ceil(64).max(1)
                    || s.iter().any(|i| i >= universe.len())
                {
                    return Err(mismatch("set members outside the universe".into()));
                }
                Ok(())
            }
            (AttributeValue::Function(f), AttributeKind::Function { grid }) => {
                if f.len() != grid.len() {
                    return Err(ragged(grid.len(), f.len()));
                }
                finite(f)
            }
            (AttributeValue::Curve(c), AttributeKind::Curve { dim, time_points }) => {
                if c.len() != *time_points {
                    return Err(ragged(*time_points, c.len()));
                }
                for p in c {
                    if p.len() != *dim {
                        return Err(ragged(*dim, p.len()));
                    }
                    finite(p)?;
                }
                Ok(())
            }
            (v, k) => Err(mismatch(format!(
                "expected {} value, found {}",
                k.type_name(),
                v.type_name()
            ))),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            AttributeValue::Scalar(_) => "scalar",
            AttributeValue::Point(_) => "point",
            AttributeValue::CategoricalSet(_) => "categorical",
            AttributeValue::Function(_) => "function",
            AttributeValue::Curve(_) => "curve",
        }
    }
}

/// An immutable, validated heterogeneous dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: String,
    schema: Vec<AttributeSchema>,
    points: Vec<Vec<AttributeValue>>,
    labels: Option<Vec<String>>,
    ground_truth: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        schema: Vec<AttributeSchema>,
        points: Vec<Vec<AttributeValue>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self, DatasetError> {
        if schema.is_empty() {
            return Err(DatasetError::InvalidSchema("schema has no attributes".into()));
        }
        for (i, attr) in schema.iter().enumerate() {
            attr.validate()?;
            if schema[..i].iter().any(|a| a.name == attr.name) {
                return Err(DatasetError::InvalidSchema(format!(
                    "duplicate attribute name `{}`",
                    attr.name
                )));
            }
        }
        if points.len() < MIN_POINTS {
            return Err(DatasetError::TooFewPoints(points.len()));
        }
        for (row, values) in points.iter().enumerate() {
            if values.len() != schema.len() {
                return Err(DatasetError::SchemaMismatch {
                    row,
                    attribute: "*".into(),
                    detail: format!("expected {} values, found {}", schema.len(), values.len()),
                });
            }
            for (value, attr) in values.iter().zip(&schema) {
                value.check(&attr.kind, row, &attr.name)?;
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != points.len() {
                return Err(DatasetError::InvalidSchema(format!(
                    "{} labels for {} datapoints",
                    labels.len(),
                    points.len()
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            schema,
            points,
            labels,
            ground_truth: None,
        })
    }

    /// Attach generator labels. These are metadata, never an attribute.
    pub fn with_ground_truth(mut self, truth: Vec<usize>) -> Result<Self, DatasetError> {
        if truth.len() != self.points.len() {
            return Err(DatasetError::InvalidSchema(format!(
                "{} ground-truth labels for {} datapoints",
                truth.len(),
                self.points.len()
            )));
        }
        self.ground_truth = Some(truth);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn schema(&self) -> &[AttributeSchema] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<AttributeValue>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[AttributeValue] {
        &self.points[i]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn ground_truth(&self) -> Option<&[usize]> {
        self.ground_truth.as_deref()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == name)
    }

    /// Column `attr` across all datapoints.
    pub fn column(&self, attr: usize) -> impl Iterator<Item = &AttributeValue> + '_ {
        self.points.iter().map(move |row| &row[attr])
    }

    /// Hex SHA-256 of the canonical JSON encoding; stable across whitespace
    /// and key order differences in the source file.
    pub fn content_hash(&self) -> String {
        let bytes = to_json_bytes(self);
        hex::encode(Sha256::digest(&bytes))
    }
}
