//! Dataset → bands → inclusion matrix → per-τ snapshot.
//!
//! The [`Engine`] keeps the τ-independent part (band plan and inclusion
//! matrix) per dataset and plan parameters; everything downstream of masking
//! is recomputed per τ and memoized by snapshot key.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::AtomicUsize;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bands::{plan_bands, BandError, BandPlan, Enumeration};
use crate::dataset::Dataset;
use crate::layout::{geospatial_positions, similarity_layout, LayoutConfig, LayoutError, LayoutResult};
use crate::signatures::{build_inclusion_matrix_with_progress, depth_values, mask_by_tau, InclusionMatrix, SignatureError};
use crate::similarity::{similarity_matrix_with, SimilarityMatrix, SimilarityMode};
use crate::spectral::{spectral_analysis, SpectralError, SpectralResult};
use crate::stats::{
    attribute_summaries, band_size_histogram, color_bins, spearman, tukey_outliers, AttributeSummary,
    BandSizeHistogram, DepthColoring, OutlierFlags, DEFAULT_HISTOGRAM_BINS,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Snapshots kept in memory before the snapshot cache is flushed.
pub const SNAPSHOT_CACHE_CAPACITY: usize = 256;
/// Band sizes spanning more than this ratio get a log-scale histogram.
pub const LOG_HISTOGRAM_RATIO: f64 = 1e3;

/// `τ` as JSON: a number, or the string `"inf"`.
pub fn tau_json(tau: f64) -> serde_json::Value {
    if tau.is_finite() {
        serde_json::json!(tau)
    } else {
        serde_json::json!("inf")
    }
}

fn serialize_tau<S: Serializer>(tau: &f64, s: S) -> Result<S::Ok, S::Error> {
    tau_json(*tau).serialize(s)
}

/// Band-size threshold, absolute or as a quantile of the band sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSpec {
    Absolute(f64),
    Quantile(f64),
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TauParseError {
    #[error("tau must be nonnegative")]
    Negative,
    #[error("tau quantile must lie in [0, 1], got {0}")]
    QuantileRange(String),
    #[error("cannot parse tau {0:?}: expected a number, \"inf\" or \"q:<quantile>\"")]
    Syntax(String),
}

impl TauSpec {
    pub fn absolute(tau: f64) -> Result<Self, TauParseError> {
        if tau.is_nan() || tau < 0.0 {
            Err(TauParseError::Negative)
        } else if tau.is_infinite() {
            Ok(TauSpec::Infinite)
        } else {
            Ok(TauSpec::Absolute(tau))
        }
    }

    pub fn quantile(q: f64) -> Result<Self, TauParseError> {
        if (0.0..=1.0).contains(&q) {
            Ok(TauSpec::Quantile(q))
        } else {
            Err(TauParseError::QuantileRange(q.to_string()))
        }
    }

    pub fn resolve(&self, matrix: &InclusionMatrix) -> f64 {
        match *self {
            TauSpec::Absolute(t) => t,
            TauSpec::Quantile(q) => matrix.size_quantile(q),
            TauSpec::Infinite => f64::INFINITY,
        }
    }
}

impl FromStr for TauSpec {
    type Err = TauParseError;

    /// `inf`, `q:<quantile>` or a nonnegative number.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(TauSpec::Infinite);
        }
        if let Some(q) = s.strip_prefix("q:") {
            let q: f64 = q.parse().map_err(|_| TauParseError::QuantileRange(q.to_string()))?;
            return TauSpec::quantile(q);
        }
        let t: f64 = s.parse().map_err(|_| TauParseError::Syntax(s.to_string()))?;
        TauSpec::absolute(t)
    }
}

impl fmt::Display for TauSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauSpec::Absolute(t) => write!(f, "{t}"),
            TauSpec::Quantile(q) => write!(f, "q:{q}"),
            TauSpec::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for TauSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TauSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => {
                TauSpec::absolute(n.as_f64().unwrap_or(f64::NAN)).map_err(serde::de::Error::custom)
            }
            serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            other => Err(serde::de::Error::custom(format!("bad tau {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "camelCase")]
pub enum LayoutChoice {
    #[default]
    ForceDirected,
    Geospatial { attribute: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalysisConfig {
    /// Band budget; `None` uses the default.
    pub budget: Option<usize>,
    pub seed: u64,
    pub tau: TauSpec,
    /// Cluster count; `None` uses the eigengap suggestion.
    pub k: Option<usize>,
    pub layout: LayoutChoice,
    pub similarity: SimilarityMode,
    /// Layout iterations; `None` uses the default.
    pub layout_iterations: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            budget: None,
            seed: 0,
            tau: TauSpec::Infinite,
            k: None,
            layout: LayoutChoice::default(),
            similarity: SimilarityMode::default(),
            layout_iterations: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("band planning: {0}")]
    Bands(#[from] BandError),
    #[error("inclusion: {0}")]
    Signatures(#[from] SignatureError),
    #[error("spectral: {0}")]
    Spectral(#[from] SpectralError),
    #[error("layout: {0}")]
    Layout(#[from] LayoutError),
    #[error("config: {0}")]
    Config(String),
    #[error("no cached analysis for key {0}")]
    CacheMiss(String),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Bands(_) => "bands",
            PipelineError::Signatures(_) => "signatures",
            PipelineError::Spectral(_) => "spectral",
            PipelineError::Layout(_) => "layout",
            PipelineError::Config(_) => "config",
            PipelineError::CacheMiss(_) => "cache",
        }
    }
}

/// The τ-independent part of an analysis.
#[derive(Debug)]
pub struct Prepared {
    pub dataset: Arc<Dataset>,
    pub plan: BandPlan,
    pub matrix: InclusionMatrix,
    pub key: String,
    pub histogram: BandSizeHistogram,
}

/// Every view's data at one τ. Serialized field order is fixed, so equal
/// snapshots serialize to identical bytes.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalysisSnapshot {
    pub schema_version: u32,
    pub cache_key: String,
    pub dataset_id: String,
    pub dataset_hash: String,
    pub config: AnalysisConfig,
    #[serde(serialize_with = "serialize_tau")]
    pub tau: f64,
    pub n: usize,
    pub band_count: usize,
    pub unmasked_band_count: usize,
    pub enumeration: Enumeration,
    pub depths: Vec<f64>,
    pub coloring: DepthColoring,
    pub outliers: OutlierFlags,
    #[serde(serialize_with = "serialize_similarity")]
    pub similarity: SimilarityMatrix,
    pub spectral: SpectralResult,
    pub layout: LayoutResult,
    pub histogram: BandSizeHistogram,
    pub summaries: Vec<AttributeSummary>,
    /// Wall-clock stage durations; excluded from the JSON so that snapshots
    /// stay byte-identical across runs.
    #[serde(skip)]
    pub timings_ms: Vec<(&'static str, f64)>,
}

fn serialize_similarity<S: Serializer>(m: &SimilarityMatrix, s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    #[serde(rename_all = "camelCase")]
    struct Json {
        unmasked_band_count: usize,
        /// Rows in datapoint order.
        values: Vec<Vec<f32>>,
    }
    Json {
        unmasked_band_count: m.unmasked_band_count,
        values: m.rows_f32(None),
    }
    .serialize(s)
}

impl AnalysisSnapshot {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("snapshot serializes")
    }

    /// Hex SHA-256 of [`Self::to_json_bytes`].
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_bytes()))
    }

    pub fn cluster_count(&self) -> usize {
        self.spectral.cluster_count()
    }

    pub fn total_ms(&self) -> f64 {
        self.timings_ms.iter().map(|(_, t)| t).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PrepKey {
    budget: Option<usize>,
    seed: u64,
}

type SnapshotEntry = (Arc<Prepared>, AnalysisConfig, Arc<AnalysisSnapshot>);

/// Shared analysis state. Readers run concurrently; each cache insertion
/// takes the write lock briefly.
#[derive(Debug, Default)]
pub struct Engine {
    prepared: RwLock<HashMap<(String, PrepKey), Arc<Prepared>>>,
    snapshots: RwLock<HashMap<String, SnapshotEntry>>,
    cache_dir: Option<PathBuf>,
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inclusion matrices are also written to and read from `dir`.
    pub fn with_cache_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            cache_dir: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn cache_dir(&self) -> Option<&std::path::Path> {
        self.cache_dir.as_deref()
    }

    /// Cached preparation for these plan parameters, if any.
    pub fn prepared(&self, dataset_hash: &str, budget: Option<usize>, seed: u64) -> Option<Arc<Prepared>> {
        let key = (dataset_hash.to_string(), PrepKey { budget, seed });
        self.prepared.read().expect("lock").get(&key).cloned()
    }

    /// Plans bands and builds (or loads) the inclusion matrix. `progress`
    /// counts evaluated bands.
    pub fn prepare(
        &self,
        dataset: Arc<Dataset>,
        budget: Option<usize>,
        seed: u64,
        progress: Option<&AtomicUsize>,
    ) -> Result<Arc<Prepared>, PipelineError> {
        let hash = dataset.content_hash();
        if let Some(p) = self.prepared(&hash, budget, seed) {
            return Ok(p);
        }
        let plan = plan_bands(&dataset, budget, seed)?;
        let key = prepared_key(&hash, &plan);
        let matrix = match self.load_matrix(&key, &plan) {
            Some(m) => m,
            None => {
                let m = build_inclusion_matrix_with_progress(&dataset, &plan, progress)?;
                self.store_matrix(&key, &m);
                m
            }
        };
        let histogram = histogram_for(&matrix);
        let prepared = Arc::new(Prepared {
            dataset,
            plan,
            matrix,
            key,
            histogram,
        });
        let mut map = self.prepared.write().expect("lock");
        Ok(map
            .entry((hash, PrepKey { budget, seed }))
            .or_insert(prepared)
            .clone())
    }

    fn matrix_path(&self, key: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("{key}.dsim")))
    }

    fn load_matrix(&self, key: &str, plan: &BandPlan) -> Option<InclusionMatrix> {
        let path = self.matrix_path(key)?;
        let file = fs::File::open(&path).ok()?;
        match InclusionMatrix::read_from(std::io::BufReader::new(file)) {
            Ok(m) if m.n() == plan.n && m.band_count() == plan.band_count() => Some(m),
            Ok(_) => None,
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "ignoring unreadable inclusion cache");
                None
            }
        }
    }

    fn store_matrix(&self, key: &str, matrix: &InclusionMatrix) {
        let Some(path) = self.matrix_path(key) else { return };
        let tmp = path.with_extension("dsim.tmp");
        let result = path
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|_| fs::write(&tmp, matrix.to_bytes()))
            .and_then(|_| fs::rename(&tmp, &path));
        if let Err(e) = result {
            tracing::warn!(path = %path.display(), error = %e, "could not write inclusion cache");
        }
    }

    /// Full analysis, reusing any cached preparation and snapshot.
    pub fn analyze(&self, dataset: Arc<Dataset>, config: &AnalysisConfig) -> Result<Arc<AnalysisSnapshot>, PipelineError> {
        let start = Instant::now();
        let prepared = self.prepare(dataset, config.budget, config.seed, None)?;
        let prepare_ms = start.elapsed().as_secs_f64() * 1e3;
        self.snapshot_for(&prepared, config, Some(prepare_ms))
    }

    /// Re-runs the masking-onward stages of the analysis behind `cache_key`
    /// at a new τ. Band construction is never repeated.
    pub fn retune(&self, cache_key: &str, tau: TauSpec) -> Result<Arc<AnalysisSnapshot>, PipelineError> {
        let (prepared, mut config) = {
            let map = self.snapshots.read().expect("lock");
            let (p, c, _) = map
                .get(cache_key)
                .ok_or_else(|| PipelineError::CacheMiss(cache_key.to_string()))?;
            (p.clone(), c.clone())
        };
        config.tau = tau;
        self.snapshot_for(&prepared, &config, None)
    }

    /// Snapshot at `config` over an existing preparation.
    pub fn snapshot_for(
        &self,
        prepared: &Arc<Prepared>,
        config: &AnalysisConfig,
        prepare_ms: Option<f64>,
    ) -> Result<Arc<AnalysisSnapshot>, PipelineError> {
        let tau = config.tau.resolve(&prepared.matrix);
        let key = snapshot_key(&prepared.key, config, tau);
        if let Some((_, _, s)) = self.snapshots.read().expect("lock").get(&key) {
            return Ok(s.clone());
        }
        let mut snapshot = compute_snapshot(prepared, config, tau, key.clone())?;
        if let Some(ms) = prepare_ms {
            snapshot.timings_ms.insert(0, ("inclusion", ms));
        }
        let snapshot = Arc::new(snapshot);
        let mut map = self.snapshots.write().expect("lock");
        if map.len() >= SNAPSHOT_CACHE_CAPACITY {
            map.clear();
        }
        Ok(map
            .entry(key)
            .or_insert_with(|| (prepared.clone(), config.clone(), snapshot))
            .2
            .clone())
    }

    /// One snapshot per τ quantile, in parallel, with the Spearman correlation
    /// of each depth vector against the unrestricted depths.
    pub fn sweep(
        &self,
        dataset: Arc<Dataset>,
        config: &AnalysisConfig,
        quantiles: &[f64],
    ) -> Result<Vec<SweepRow>, PipelineError> {
        if quantiles.is_empty() {
            return Err(PipelineError::Config("quantile list is empty".into()));
        }
        let taus = quantiles
            .iter()
            .map(|&q| TauSpec::quantile(q).map_err(|e| PipelineError::Config(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let prepared = self.prepare(dataset, config.budget, config.seed, None)?;
        let reference = depth_values(&mask_by_tau(&prepared.matrix, f64::INFINITY)?)?;
        taus.par_iter()
            .map(|&tau| {
                let cfg = AnalysisConfig { tau, ..config.clone() };
                let snapshot = self.snapshot_for(&prepared, &cfg, None)?;
                Ok(SweepRow {
                    tau_spec: tau,
                    spearman_vs_unrestricted: spearman(&snapshot.depths, &reference),
                    snapshot,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub tau_spec: TauSpec,
    pub snapshot: Arc<AnalysisSnapshot>,
    pub spearman_vs_unrestricted: f64,
}

/// One-shot analysis without a shared engine.
pub fn analyze(dataset: &Dataset, config: &AnalysisConfig) -> Result<AnalysisSnapshot, PipelineError> {
    let engine = Engine::new();
    let snapshot = engine.analyze(Arc::new(dataset.clone()), config)?;
    Ok(Arc::unwrap_or_clone(snapshot))
}

fn prepared_key(dataset_hash: &str, plan: &BandPlan) -> String {
    let mut h = Sha256::new();
    h.update(dataset_hash.as_bytes());
    h.update(serde_json::to_vec(&plan.enumeration).expect("serializes"));
    h.update((plan.subset_size as u64).to_le_bytes());
    for m in &plan.member_indices {
        h.update(m.to_le_bytes());
    }
    hex::encode(h.finalize())[..32].to_string()
}

fn snapshot_key(prepared_key: &str, config: &AnalysisConfig, tau: f64) -> String {
    let mut h = Sha256::new();
    h.update(prepared_key.as_bytes());
    h.update(tau.to_bits().to_le_bytes());
    let rest = serde_json::json!({
        "k": config.k,
        "seed": config.seed,
        "layout": config.layout,
        "similarity": config.similarity,
        "layoutIterations": config.layout_iterations,
    });
    h.update(rest.to_string().as_bytes());
    hex::encode(h.finalize())[..32].to_string()
}

fn histogram_for(matrix: &InclusionMatrix) -> BandSizeHistogram {
    let sizes = matrix.band_sizes();
    let positive = sizes.iter().copied().filter(|&s| s > 0.0 && s.is_finite());
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(a, b), s| (a.min(s), b.max(s)));
    let log = hi > 0.0 && hi / lo > LOG_HISTOGRAM_RATIO;
    band_size_histogram(sizes, DEFAULT_HISTOGRAM_BINS, log)
}

fn compute_snapshot(
    prepared: &Prepared,
    config: &AnalysisConfig,
    tau: f64,
    cache_key: String,
) -> Result<AnalysisSnapshot, PipelineError> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
        timings.push((name, clock.elapsed().as_secs_f64() * 1e3));
        clock = Instant::now();
    };
    let dataset = &prepared.dataset;
    if let Some(k) = config.k {
        if k == 0 || k > dataset.len() {
            return Err(PipelineError::Config(format!("k must lie in [1, {}], got {k}", dataset.len())));
        }
    }

    let masked = mask_by_tau(&prepared.matrix, tau)?;
    let depths = depth_values(&masked)?;
    lap("depth", &mut timings);
    let similarity = similarity_matrix_with(&masked, config.similarity)?;
    lap("similarity", &mut timings);
    let spectral = spectral_analysis(&similarity, config.k, config.seed)?;
    lap("spectral", &mut timings);
    let coloring = color_bins(&depths);
    let outliers = tukey_outliers(&depths);
    let summaries = attribute_summaries(dataset, &coloring, &spectral.labels, &outliers);
    lap("stats", &mut timings);
    let layout = match &config.layout {
        LayoutChoice::ForceDirected => {
            let layout_config = LayoutConfig {
                iterations: config.layout_iterations.unwrap_or(LayoutConfig::default().iterations),
                ..LayoutConfig::default()
            };
            similarity_layout(&similarity, config.seed, &layout_config)
        }
        LayoutChoice::Geospatial { attribute } => geospatial_positions(dataset, attribute)?,
    };
    lap("layout", &mut timings);

    Ok(AnalysisSnapshot {
        schema_version: SCHEMA_VERSION,
        cache_key,
        dataset_id: dataset.id().to_string(),
        dataset_hash: dataset.content_hash(),
        config: config.clone(),
        tau,
        n: dataset.len(),
        band_count: prepared.matrix.band_count(),
        unmasked_band_count: masked.unmasked_count(),
        enumeration: prepared.plan.enumeration,
        depths,
        coloring,
        outliers,
        similarity,
        spectral,
        layout,
        histogram: prepared.histogram.clone(),
        summaries,
        timings_ms: timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};

    fn bimodal() -> Arc<Dataset> {
        Arc::new(generate_synthetic(&SyntheticSpec::bimodal(40), 3).unwrap())
    }

    #[test]
    fn tau_parsing() {
        assert_eq!("inf".parse::<TauSpec>().unwrap(), TauSpec::Infinite);
        assert_eq!("q:0.25".parse::<TauSpec>().unwrap(), TauSpec::Quantile(0.25));
        assert_eq!("3.5".parse::<TauSpec>().unwrap(), TauSpec::Absolute(3.5));
        assert_eq!("-1".parse::<TauSpec>().unwrap_err(), TauParseError::Negative);
        assert_eq!("-1".parse::<TauSpec>().unwrap_err().to_string(), "tau must be nonnegative");
        assert!(matches!("q:2.0".parse::<TauSpec>(), Err(TauParseError::QuantileRange(_))));
        assert!(matches!("abc".parse::<TauSpec>(), Err(TauParseError::Syntax(_))));
        let json = serde_json::to_string(&TauSpec::Quantile(0.5)).unwrap();
        assert_eq!(serde_json::from_str::<TauSpec>(&json).unwrap(), TauSpec::Quantile(0.5));
        assert_eq!(serde_json::from_str::<TauSpec>("2").unwrap(), TauSpec::Absolute(2.0));
    }

    #[test]
    fn snapshot_is_consistent() {
        let engine = Engine::new();
        let config = AnalysisConfig {
            tau: TauSpec::Quantile(0.5),
            ..AnalysisConfig::default()
        };
        let s = engine.analyze(bimodal(), &config).unwrap();
        assert_eq!(s.n, 40);
        assert_eq!(s.depths.len(), 40);
        assert_eq!(s.coloring.bin.len(), 40);
        assert_eq!(s.spectral.labels.len(), 40);
        assert_eq!(s.layout.positions.len(), 40);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), s.band_count);
        let mut order = s.spectral.order.clone();
        order.sort();
        assert_eq!(order, (0..40).collect::<Vec<_>>());
        let json: serde_json::Value = serde_json::from_slice(&s.to_json_bytes()).unwrap();
        assert_eq!(json["schemaVersion"], 1);
        assert!(json.get("timingsMs").is_none());
    }

    #[test]
    fn retune_matches_fresh_analysis() {
        let engine = Engine::new();
        let config = AnalysisConfig::default();
        let first = engine.analyze(bimodal(), &config).unwrap();
        let retuned = engine.retune(&first.cache_key, TauSpec::Quantile(0.3)).unwrap();
        let fresh = analyze(
            &bimodal(),
            &AnalysisConfig {
                tau: TauSpec::Quantile(0.3),
                ..config
            },
        )
        .unwrap();
        assert_eq!(retuned.to_json_bytes(), fresh.to_json_bytes());
        assert!(matches!(engine.retune("nope", TauSpec::Infinite), Err(PipelineError::CacheMiss(_))));
    }

    #[test]
    fn same_tau_hits_cache() {
        let engine = Engine::new();
        let a = engine.analyze(bimodal(), &AnalysisConfig::default()).unwrap();
        let b = engine.retune(&a.cache_key, TauSpec::Infinite).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn saturated_tau_equals_unrestricted() {
        let engine = Engine::new();
        let inf = engine.analyze(bimodal(), &AnalysisConfig::default()).unwrap();
        let big = engine.retune(&inf.cache_key, TauSpec::Absolute(1e12)).unwrap();
        assert_eq!(big.depths, inf.depths);
        assert_eq!(big.spectral, inf.spectral);
        assert_eq!(big.layout, inf.layout);
    }

    #[test]
    fn decreasing_tau_never_adds_bits() {
        let engine = Engine::new();
        let prepared = engine.prepare(bimodal(), None, 0, None).unwrap();
        let mut previous: Option<Vec<usize>> = None;
        for q in [1.0, 0.75, 0.5, 0.25, 0.1] {
            let tau = TauSpec::Quantile(q).resolve(&prepared.matrix);
            let masked = mask_by_tau(&prepared.matrix, tau).unwrap();
            let ones: Vec<usize> = (0..masked.n()).map(|i| masked.ones(i)).collect();
            if let Some(p) = &previous {
                assert!(ones.iter().zip(p).all(|(a, b)| a <= b));
            }
            previous = Some(ones);
        }
    }

    #[test]
    fn errors_name_the_stage() {
        let engine = Engine::new();
        let err = engine
            .analyze(
                bimodal(),
                &AnalysisConfig {
                    tau: TauSpec::Absolute(0.0),
                    ..AnalysisConfig::default()
                },
            )
            .unwrap_err();
        assert_eq!(err.stage(), "signatures");
        assert!(err.to_string().starts_with("inclusion: "));
        let err = engine
            .analyze(
                bimodal(),
                &AnalysisConfig {
                    k: Some(0),
                    ..AnalysisConfig::default()
                },
            )
            .unwrap_err();
        assert_eq!(err.stage(), "config");
        let err = engine
            .analyze(
                bimodal(),
                &AnalysisConfig {
                    layout: LayoutChoice::Geospatial { attribute: "x".into() },
                    ..AnalysisConfig::default()
                },
            )
            .unwrap_err();
        assert_eq!(err.stage(), "layout");
    }

    #[test]
    fn disk_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = Engine::with_cache_dir(dir.path());
        let first = a.analyze(bimodal(), &AnalysisConfig::default()).unwrap();
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let b = Engine::with_cache_dir(dir.path());
        let second = b.analyze(bimodal(), &AnalysisConfig::default()).unwrap();
        assert_eq!(first.to_json_bytes(), second.to_json_bytes());
    }

    #[test]
    fn sweep_rows() {
        let engine = Engine::new();
        let rows = engine.sweep(bimodal(), &AnalysisConfig::default(), &[0.5, 1.0]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[1].spearman_vs_unrestricted - 1.0).abs() < 1e-12);
        assert!(engine.sweep(bimodal(), &AnalysisConfig::default(), &[]).is_err());
    }
}
