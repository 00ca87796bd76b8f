//! Similarity-induced 2D layout.
//!
//! Force model: every pair attracts with force `k_a · s_ij · d` (a spring of
//! rest length 0 and stiffness `s_ij`) and repels with `k_r / d`, where
//! `k_a = k_r = 1/n`. The matching energy is
//! `E = Σ_{i<j} k_a s_ij d²/2 − k_r Σ_{i<j} ln d`.
//! Repulsion is approximated with a Barnes–Hut quadtree. Steps are capped by
//! a linearly cooling limit and all points move simultaneously, so the run
//! is a pure function of the similarity matrix and the seed.

mod quadtree;

pub use quadtree::QuadTree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttributeKind, AttributeValue, Dataset};
use crate::similarity::SimilarityMatrix;
use crate::spectral::isolated_vertices;

pub const DEFAULT_ITERATIONS: usize = 500;
pub const BARNES_HUT_THETA: f64 = 0.7;
pub const INITIAL_STEP: f64 = 0.1;
/// Fraction of the diagonal Newton step taken per iteration.
pub const STEP_DAMPING: f64 = 0.5;
pub const MAX_COLLISION_PASSES: usize = 50;
/// Width of the border band that receives isolated points.
pub const OUTLIER_MARGIN: f64 = 0.05;
/// Laid-out points are rescaled into `[PADDING, 1 − PADDING]²`.
pub const PADDING: f64 = 0.1;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("attribute {name:?} is {kind}, not a 2D point or curve")]
    NotPositional { name: String, kind: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LayoutMode {
    #[default]
    ForceDirected,
    Geospatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CollisionReport {
    pub passes: usize,
    /// Pairs still closer than `2r` when the pass budget ran out.
    pub remaining_overlaps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LayoutResult {
    pub mode: LayoutMode,
    pub positions: Vec<[f64; 2]>,
    pub iterations: usize,
    pub energy: f64,
    /// Iterations in the final tenth at which the energy rose.
    pub energy_increases: usize,
    pub isolated: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collisions: Option<CollisionReport>,
    /// Geospatial curves, normalized like `positions`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polylines: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutConfig {
    pub iterations: usize,
    pub theta: f64,
    /// Node radius for collision resolution; `None` uses `0.4/√n`, zero
    /// disables it.
    pub radius: Option<f64>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            theta: BARNES_HUT_THETA,
            radius: None,
        }
    }
}

pub fn default_radius(n: usize) -> f64 {
    0.4 / (n.max(1) as f64).sqrt()
}

fn energy(s: &SimilarityMatrix, pos: &[[f64; 2]], active: &[usize], k: f64) -> f64 {
    let mut e = 0.0;
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            let d2 = (pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2);
            e += k * s.get(i, j) * d2 / 2.0 - k * 0.5 * d2.max(1e-300).ln();
        }
    }
    e
}

/// Force-directed positions, rescaled into the unit square; isolated points
/// go to the border band. No collision resolution.
pub fn force_layout(s: &SimilarityMatrix, seed: u64, iterations: usize) -> LayoutResult {
    force_layout_with(s, seed, iterations, BARNES_HUT_THETA)
}

fn force_layout_with(s: &SimilarityMatrix, seed: u64, iterations: usize, theta: f64) -> LayoutResult {
    let n = s.n();
    let isolated = isolated_vertices(s);
    let active: Vec<usize> = (0..n).filter(|i| isolated.binary_search(i).is_err()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = vec![[0.5, 0.5]; n];
    for &i in &active {
        pos[i] = [rng.random(), rng.random()];
    }
    let m = active.len();
    let k = 1.0 / m.max(1) as f64;
    let tail_start = iterations - iterations / 10;
    let mut last_energy = f64::NAN;
    let mut energy_increases = 0;
    let mut final_energy = 0.0;
    if m == 1 {
        pos[active[0]] = [0.5, 0.5];
    }
    if m >= 2 {
        let mut forces = vec![[0.0; 2]; n];
        for t in 0..iterations {
            let cap = INITIAL_STEP * (1.0 - t as f64 / iterations as f64);
            let tree = QuadTree::build(&pos, &active);
            for &i in &active {
                let (rep, curvature) = tree.repulsion_with_curvature(pos[i], i, theta);
                let mut f = [k * rep[0], k * rep[1]];
                let mut stiffness = k * curvature;
                for &j in &active {
                    let w = s.get(i, j);
                    if j != i && w != 0.0 {
                        f[0] += k * w * (pos[j][0] - pos[i][0]);
                        f[1] += k * w * (pos[j][1] - pos[i][1]);
                        stiffness += k * w;
                    }
                }
                // diagonally preconditioned step; the cap below still applies
                let eta = STEP_DAMPING / stiffness.max(f64::MIN_POSITIVE);
                forces[i] = [f[0] * eta, f[1] * eta];
            }
            for &i in &active {
                let f = forces[i];
                let len = (f[0] * f[0] + f[1] * f[1]).sqrt();
                let scale = if len > cap { cap / len } else { 1.0 };
                pos[i][0] += f[0] * scale;
                pos[i][1] += f[1] * scale;
            }
            if t >= tail_start {
                let e = energy(s, &pos, &active, k);
                if e > last_energy + 1e-12 * e.abs().max(1.0) {
                    energy_increases += 1;
                    tracing::debug!(iteration = t, energy = e, previous = last_energy, "layout energy increased");
                }
                last_energy = e;
                final_energy = e;
            }
        }
        rescale(&mut pos, &active);
        if iterations == 0 {
            final_energy = energy(s, &pos, &active, k);
        }
    }
    for (&i, p) in isolated.iter().zip(place_outliers(&isolated, seed)) {
        pos[i] = p;
    }
    LayoutResult {
        mode: LayoutMode::ForceDirected,
        positions: pos,
        iterations,
        energy: final_energy,
        energy_increases,
        isolated,
        collisions: None,
        polylines: None,
    }
}

/// Uniformly scales and centres the active points into the padded square.
fn rescale(pos: &mut [[f64; 2]], active: &[usize]) {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &i in active {
        for k in 0..2 {
            lo[k] = lo[k].min(pos[i][k]);
            hi[k] = hi[k].max(pos[i][k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let span = 1.0 - 2.0 * PADDING;
    for &i in active {
        for k in 0..2 {
            pos[i][k] = if extent > 0.0 {
                0.5 + (pos[i][k] - (lo[k] + hi[k]) / 2.0) / extent * span
            } else {
                0.5
            };
        }
    }
}

/// Force layout followed by collision resolution among the non-isolated
/// points.
pub fn similarity_layout(s: &SimilarityMatrix, seed: u64, config: &LayoutConfig) -> LayoutResult {
    let mut result = force_layout_with(s, seed, config.iterations, config.theta);
    let radius = config.radius.unwrap_or_else(|| default_radius(s.n()));
    if radius > 0.0 {
        let active: Vec<usize> = (0..s.n()).filter(|i| result.isolated.binary_search(i).is_err()).collect();
        let mut sub: Vec<[f64; 2]> = active.iter().map(|&i| result.positions[i]).collect();
        let report = resolve_collisions(&mut sub, radius, seed);
        for (&i, p) in active.iter().zip(sub) {
            result.positions[i] = p;
        }
        result.collisions = Some(report);
    }
    result
}

/// Pushes apart every pair closer than `2r`, symmetrically along their
/// separation (a seeded random direction for coincident pairs), for at most
/// [`MAX_COLLISION_PASSES`] passes. Displaced points are clamped to the unit
/// square; points without an overlapping neighbour never move.
pub fn resolve_collisions(positions: &mut [[f64; 2]], r: f64, seed: u64) -> CollisionReport {
    assert!(r > 0.0, "radius must be positive");
    let n = positions.len();
    let all: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c011);
    let min_dist = 2.0 * r;
    let target = min_dist * (1.0 + 1e-9);
    let mut passes = 0;
    loop {
        let overlaps = overlapping_pairs(positions, &all, min_dist);
        if overlaps.is_empty() {
            return CollisionReport {
                passes,
                remaining_overlaps: 0,
            };
        }
        if passes == MAX_COLLISION_PASSES {
            return CollisionReport {
                passes,
                remaining_overlaps: overlaps.len(),
            };
        }
        passes += 1;
        let mut delta = vec![[0.0; 2]; n];
        let mut moved = vec![false; n];
        for (i, j) in overlaps {
            let (pi, pj) = (positions[i], positions[j]);
            let (dx, dy) = (pj[0] - pi[0], pj[1] - pi[1]);
            let d = (dx * dx + dy * dy).sqrt();
            let dir = if d > 0.0 {
                [dx / d, dy / d]
            } else {
                let a = rng.random::<f64>() * std::f64::consts::TAU;
                [a.cos(), a.sin()]
            };
            let push = (target - d) / 2.0;
            delta[i][0] -= dir[0] * push;
            delta[i][1] -= dir[1] * push;
            delta[j][0] += dir[0] * push;
            delta[j][1] += dir[1] * push;
            moved[i] = true;
            moved[j] = true;
        }
        for i in 0..n {
            if moved[i] {
                for k in 0..2 {
                    positions[i][k] = (positions[i][k] + delta[i][k]).clamp(0.0, 1.0);
                }
            }
        }
    }
}

fn overlapping_pairs(positions: &[[f64; 2]], members: &[usize], min_dist: f64) -> Vec<(usize, usize)> {
    let tree = QuadTree::build(positions, members);
    let mut pairs = Vec::new();
    for &i in members {
        for j in tree.within(positions[i], min_dist) {
            if j > i {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Seeded positions within [`OUTLIER_MARGIN`] of the unit-square border,
/// one per index.
pub fn place_outliers(indices: &[usize], seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b0d_e5a1);
    indices
        .iter()
        .map(|_| {
            let t: f64 = rng.random();
            let inset = rng.random::<f64>() * OUTLIER_MARGIN;
            match rng.random_range(0..4) {
                0 => [t, inset],
                1 => [t, 1.0 - inset],
                2 => [inset, t],
                _ => [1.0 - inset, t],
            }
        })
        .collect()
}

/// Positions taken from a `Point(2)` or `Curve(2)` attribute, normalized by
/// the joint bounding box with one scale for both axes. For curves the whole
/// polyline is kept and the first time point is the representative position.
pub fn geospatial_positions(dataset: &Dataset, attribute: &str) -> Result<LayoutResult, LayoutError> {
    let a = dataset
        .attribute_index(attribute)
        .ok_or_else(|| LayoutError::UnknownAttribute(attribute.to_string()))?;
    let kind = &dataset.schema()[a].kind;
    let polylines: Vec<Vec<[f64; 2]>> = match kind {
        AttributeKind::Point { dim: 2 } | AttributeKind::Curve { dim: 2, .. } => dataset
            .column(a)
            .map(|v| match v {
                AttributeValue::Point(p) => vec![[p[0], p[1]]],
                AttributeValue::Curve(c) => c.iter().map(|p| [p[0], p[1]]).collect(),
                _ => unreachable!("schema-checked"),
            })
            .collect(),
        other => {
            return Err(LayoutError::NotPositional {
                name: attribute.to_string(),
                kind: other.type_name(),
            })
        }
    };
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in polylines.iter().flatten() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let norm = |p: &[f64; 2]| -> [f64; 2] {
        if extent > 0.0 {
            [(p[0] - lo[0]) / extent, (p[1] - lo[1]) / extent]
        } else {
            [0.5, 0.5]
        }
    };
    let polylines: Vec<Vec<[f64; 2]>> = polylines.iter().map(|l| l.iter().map(norm).collect()).collect();
    let positions = polylines.iter().map(|l| l[0]).collect();
    let is_curve = matches!(kind, AttributeKind::Curve { .. });
    Ok(LayoutResult {
        mode: LayoutMode::Geospatial,
        positions,
        iterations: 0,
        energy: 0.0,
        energy_increases: 0,
        isolated: Vec::new(),
        collisions: None,
        polylines: is_curve.then_some(polylines),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Pairs `i < j` with `s_ij ≥ threshold` and `s_ij > 0`. Rendering only.
pub fn edge_list(s: &SimilarityMatrix, threshold: f64) -> Vec<Edge> {
    let n = s.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w = s.get(i, j);
            if w >= threshold && w > 0.0 {
                edges.push(Edge { i, j, weight: w });
            }
        }
    }
    edges
}
