//! Seeded synthetic datasets with ground-truth mode labels.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AttributeKind, AttributeSchema, AttributeValue, CategorySet, Dataset, DatasetError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum SyntheticSpec {
    Unimodal1D {
        n: usize,
        mean: f64,
        sd: f64,
    },
    /// Two normal components; `mixture` is the probability of the first.
    Bimodal1D {
        n: usize,
        means: [f64; 2],
        sds: [f64; 2],
        mixture: f64,
    },
    /// Storm-track-like ensemble: a 2D track curve plus wind-speed and
    /// pressure functions on the same time grid (four values per time point).
    /// Members split into `modes` headings after a common initial segment.
    CurveEnsemble {
        n: usize,
        time_points: usize,
        modes: usize,
    },
    /// Mixed categorical/numeric table with latent clusters. Each categorical
    /// attribute has a cluster-dependent dominant category; scalars and
    /// functions have cluster-dependent means.
    Mixed {
        n: usize,
        categorical: usize,
        scalar: usize,
        functions: usize,
        points2d: usize,
        modes: usize,
    },
}

impl SyntheticSpec {
    pub fn n(&self) -> usize {
        match *self {
            SyntheticSpec::Unimodal1D { n, .. }
            | SyntheticSpec::Bimodal1D { n, .. }
            | SyntheticSpec::CurveEnsemble { n, .. }
            | SyntheticSpec::Mixed { n, .. } => n,
        }
    }

    /// The 6σ-separated, equal-weight bimodal sample used throughout the tests.
    pub fn bimodal(n: usize) -> Self {
        SyntheticSpec::Bimodal1D {
            n,
            means: [-3.0, 3.0],
            sds: [1.0, 1.0],
            mixture: 0.5,
        }
    }

    pub fn unimodal(n: usize) -> Self {
        SyntheticSpec::Unimodal1D { n, mean: 0.0, sd: 1.0 }
    }
}

fn normal(mean: f64, sd: f64) -> Result<Normal<f64>, DatasetError> {
    Normal::new(mean, sd).map_err(|e| DatasetError::Synthetic(e.to_string()))
}

/// Deterministic in `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset, DatasetError> {
    if spec.n() == 0 {
        return Err(DatasetError::Synthetic("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dataset, truth) = match *spec {
        SyntheticSpec::Unimodal1D { n, mean, sd } => {
            let dist = normal(mean, sd)?;
            let rows = (0..n)
                .map(|_| vec![AttributeValue::Scalar(dist.sample(&mut rng))])
                .collect();
            let schema = vec![AttributeSchema::new("x", AttributeKind::Scalar)];
            (Dataset::new("unimodal", schema, rows, None)?, vec![0; n])
        }
        SyntheticSpec::Bimodal1D { n, means, sds, mixture } => {
            if !(mixture > 0.0 && mixture < 1.0) {
                return Err(DatasetError::Synthetic(format!(
                    "mixture weight must lie strictly inside (0, 1), got {mixture}"
                )));
            }
            let dists = [normal(means[0], sds[0])?, normal(means[1], sds[1])?];
            let mut rows = Vec::with_capacity(n);
            let mut truth = Vec::with_capacity(n);
            for _ in 0..n {
                let c = usize::from(rng.random::<f64>() >= mixture);
                rows.push(vec![AttributeValue::Scalar(dists[c].sample(&mut rng))]);
                truth.push(c);
            }
            let schema = vec![AttributeSchema::new("x", AttributeKind::Scalar)];
            (Dataset::new("bimodal", schema, rows, None)?, truth)
        }
        SyntheticSpec::CurveEnsemble { n, time_points, modes } => {
            curve_ensemble(&mut rng, n, time_points, modes)?
        }
        SyntheticSpec::Mixed {
            n,
            categorical,
            scalar,
            functions,
            points2d,
            modes,
        } => mixed(&mut rng, n, categorical, scalar, functions, points2d, modes)?,
    };
    dataset.with_ground_truth(truth)
}

fn curve_ensemble(
    rng: &mut ChaCha8Rng,
    n: usize,
    time_points: usize,
    modes: usize,
) -> Result<(Dataset, Vec<usize>), DatasetError> {
    if modes == 0 {
        return Err(DatasetError::Synthetic("empty mixture: modes must be positive".into()));
    }
    if time_points < 2 {
        return Err(DatasetError::Synthetic("curves need at least 2 time points".into()));
    }
    let grid: Vec<f64> = (0..time_points).map(|t| t as f64).collect();
    let schema = vec![
        AttributeSchema::new("track", AttributeKind::Curve { dim: 2, time_points }),
        AttributeSchema::new("wind", AttributeKind::Function { grid: grid.clone() }),
        AttributeSchema::new("pressure", AttributeKind::Function { grid }),
    ];
    let latent = normal(0.0, 1.0)?;
    let jitter = normal(0.0, 0.002)?;
    let split = 0.4;
    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let mode = rng.random_range(0..modes);
        // Two latent track parameters (cross-track drift, along-track speed).
        // Intensity follows speed: track and profiles come from one run, and
        // an independent third factor would leave almost no datapoint inside
        // the conjunction of three-member bands.
        let (drift, speed) = (latent.sample(rng), latent.sample(rng));
        let intensity = speed;
        let turn = (mode as f64 - (modes as f64 - 1.0) / 2.0) * 0.8;
        let mut track = Vec::with_capacity(time_points);
        let mut wind = Vec::with_capacity(time_points);
        let mut pressure = Vec::with_capacity(time_points);
        for t in 0..time_points {
            let s = t as f64 / (time_points - 1) as f64;
            let progress = s * (1.0 + 0.05 * speed);
            let bend = (s - split).max(0.0);
            let heading = 0.6 + turn * bend;
            let x = progress * heading.cos() + 0.04 * drift * s;
            let y = progress * heading.sin() - 0.04 * drift * s;
            // Noise scales with the deterministic spread: members share the
            // initial position, and the profiles pinch at both ends.
            track.push(vec![
                -75.0 + 10.0 * x + s * jitter.sample(rng),
                25.0 + 10.0 * y + s * jitter.sample(rng),
            ]);
            let swell = (std::f64::consts::PI * s).sin();
            let w = 35.0 + 30.0 * swell * (1.0 + 0.1 * intensity);
            wind.push(w + swell * jitter.sample(rng));
            pressure.push(1010.0 - 0.9 * (w - 35.0) + swell * jitter.sample(rng));
        }
        rows.push(vec![
            AttributeValue::Curve(track),
            AttributeValue::Function(wind),
            AttributeValue::Function(pressure),
        ]);
        truth.push(mode);
    }
    Ok((Dataset::new("curves", schema, rows, None)?, truth))
}

#[allow(clippy::too_many_arguments)]
fn mixed(
    rng: &mut ChaCha8Rng,
    n: usize,
    categorical: usize,
    scalar: usize,
    functions: usize,
    points2d: usize,
    modes: usize,
) -> Result<(Dataset, Vec<usize>), DatasetError> {
    if modes == 0 {
        return Err(DatasetError::Synthetic("empty mixture: modes must be positive".into()));
    }
    if categorical + scalar + functions + points2d == 0 {
        return Err(DatasetError::Synthetic("no attributes requested".into()));
    }
    let unit = normal(0.0, 1.0)?;
    let grid: Vec<f64> = (0..8).map(|g| g as f64 / 7.0).collect();

    let mut schema = Vec::new();
    // Per categorical attribute: universe size and the dominant category for
    // each mode.
    let mut cat_plan = Vec::with_capacity(categorical);
    for a in 0..categorical {
        let size = 2 + rng.random_range(0..5usize);
        let dominant: Vec<usize> = (0..modes).map(|m| (m + a) % size).collect();
        schema.push(AttributeSchema::new(
            format!("cat{a}"),
            AttributeKind::CategoricalSet {
                universe: (0..size).map(|c| format!("c{c}")).collect(),
            },
        ));
        cat_plan.push((size, dominant));
    }
    for a in 0..scalar {
        schema.push(AttributeSchema::new(format!("num{a}"), AttributeKind::Scalar));
    }
    for a in 0..functions {
        schema.push(AttributeSchema::new(
            format!("fn{a}"),
            AttributeKind::Function { grid: grid.clone() },
        ));
    }
    for a in 0..points2d {
        schema.push(AttributeSchema::new(format!("pt{a}"), AttributeKind::Point { dim: 2 }));
    }

    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let mode = rng.random_range(0..modes);
        let center = 4.0 * mode as f64;
        let mut row = Vec::with_capacity(schema.len());
        for (size, dominant) in &cat_plan {
            let cat = if rng.random::<f64>() < 0.9 {
                dominant[mode]
            } else {
                rng.random_range(0..*size)
            };
            row.push(AttributeValue::CategoricalSet(CategorySet::from_indices(*size, [cat])));
        }
        for _ in 0..scalar {
            row.push(AttributeValue::Scalar(center + unit.sample(rng)));
        }
        for _ in 0..functions {
            let level = center + unit.sample(rng);
            let slope = unit.sample(rng) * 0.3;
            row.push(AttributeValue::Function(
                grid.iter().map(|g| level + slope * g + 0.05 * unit.sample(rng)).collect(),
            ));
        }
        for _ in 0..points2d {
            row.push(AttributeValue::Point(vec![
                center + unit.sample(rng),
                unit.sample(rng),
            ]));
        }
        rows.push(row);
        truth.push(mode);
    }
    Ok((Dataset::new("mixed", schema, rows, None)?, truth))
}

/// Seeded uniform subsample of `size` rows, keeping original row order.
pub fn subsample(dataset: &Dataset, size: usize, seed: u64) -> Result<Dataset, DatasetError> {
    if size > dataset.len() {
        return Err(DatasetError::Synthetic(format!(
            "cannot draw {size} rows from {}",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, dataset.len(), size).into_vec();
    picked.sort_unstable();
    let rows = picked.iter().map(|&i| dataset.point(i).to_vec()).collect();
    let labels = dataset
        .labels()
        .map(|l| picked.iter().map(|&i| l[i].clone()).collect());
    let out = Dataset::new(dataset.id(), dataset.schema().to_vec(), rows, labels)?;
    match dataset.ground_truth() {
        Some(t) => out.with_ground_truth(picked.iter().map(|&i| t[i]).collect()),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_dataset, to_json_bytes, DatasetFormat};

    #[test]
    fn unimodal_single_label() {
        let d = generate_synthetic(&SyntheticSpec::Unimodal1D { n: 99, mean: 0.0, sd: 1.0 }, 7).unwrap();
        assert_eq!(d.len(), 99);
        assert!(d.ground_truth().unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn bimodal_two_labels() {
        let d = generate_synthetic(&SyntheticSpec::bimodal(99), 7).unwrap();
        assert_eq!(d.len(), 99);
        let truth = d.ground_truth().unwrap();
        assert!(truth.contains(&0) && truth.contains(&1));
    }

    #[test]
    fn curve_ensemble_shape() {
        let spec = SyntheticSpec::CurveEnsemble { n: 21, time_points: 60, modes: 2 };
        let d = generate_synthetic(&spec, 1).unwrap();
        assert_eq!(d.len(), 21);
        match &d.point(0)[0] {
            AttributeValue::Curve(c) => {
                assert_eq!(c.len(), 60);
                assert_eq!(c[0].len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_n_and_empty_mixture_rejected() {
        assert!(generate_synthetic(&SyntheticSpec::unimodal(0), 1).is_err());
        let bad = SyntheticSpec::Bimodal1D { n: 10, means: [0.0, 1.0], sds: [1.0, 1.0], mixture: 0.0 };
        assert!(generate_synthetic(&bad, 1).is_err());
        let bad = SyntheticSpec::CurveEnsemble { n: 10, time_points: 5, modes: 0 };
        assert!(generate_synthetic(&bad, 1).is_err());
    }

    #[test]
    fn deterministic_and_round_trips() {
        let specs = [
            SyntheticSpec::bimodal(30),
            SyntheticSpec::CurveEnsemble { n: 5, time_points: 7, modes: 2 },
            SyntheticSpec::Mixed { n: 12, categorical: 3, scalar: 2, functions: 1, points2d: 1, modes: 2 },
        ];
        for spec in &specs {
            let a = generate_synthetic(spec, 42).unwrap();
            let b = generate_synthetic(spec, 42).unwrap();
            assert_eq!(a, b);
            let parsed = parse_dataset(&to_json_bytes(&a), DatasetFormat::JsonV1).unwrap();
            assert_eq!(parsed, a);
        }
    }

    #[test]
    fn subsample_keeps_order_and_truth() {
        let d = generate_synthetic(&SyntheticSpec::bimodal(50), 3).unwrap();
        let s = subsample(&d, 10, 9).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s, subsample(&d, 10, 9).unwrap());
        assert!(subsample(&d, 51, 9).is_err());
    }
}
