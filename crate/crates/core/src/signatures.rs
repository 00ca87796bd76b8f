//! Band-inclusion signatures.
//!
//! The full, unmasked inclusion matrix is computed once per (dataset, plan).
//! A τ threshold is applied afterwards as a bitmask over bands, so moving τ
//! never re-evaluates any inclusion.
//!
//! Bits are stored datapoint-major: row `i` holds datapoint `i`'s signature,
//! packed 64 bands per word (band `b` is bit `b % 64` of word `b / 64`).

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::bands::{Band, BandPlan};
use crate::dataset::Dataset;
use crate::stats::quantile_sorted;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"DSIM";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("tau below minimum band size: no band survives tau = {0}")]
    NoBands(f64),
    #[error("tau must be nonnegative, got {0}")]
    NegativeTau(f64),
    #[error("band plan was built for {plan} datapoints, dataset has {dataset}")]
    PlanMismatch { plan: usize, dataset: usize },
    #[error("signature lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bad inclusion snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionMatrix {
    n: usize,
    band_count: usize,
    words: usize,
    bits: Vec<u64>,
    band_sizes: Vec<f64>,
    band_log_sizes: Vec<f64>,
}

pub fn build_inclusion_matrix(dataset: &Dataset, plan: &BandPlan) -> Result<InclusionMatrix, SignatureError> {
    build_inclusion_matrix_with_progress(dataset, plan, None)
}

/// As [`build_inclusion_matrix`], incrementing `progress` by the number of
/// bands evaluated as work completes. Runs on the current rayon pool.
pub fn build_inclusion_matrix_with_progress(
    dataset: &Dataset,
    plan: &BandPlan,
    progress: Option<&AtomicUsize>,
) -> Result<InclusionMatrix, SignatureError> {
    if plan.n != dataset.len() {
        return Err(SignatureError::PlanMismatch {
            plan: plan.n,
            dataset: dataset.len(),
        });
    }
    let n = dataset.len();
    let band_count = plan.band_count();
    let words = band_count.div_ceil(64);
    let schema = dataset.schema();

    // One task per 64-band word: the word of every datapoint plus the sizes.
    let chunks: Vec<(Vec<u64>, Vec<(f64, f64)>)> = (0..words)
        .into_par_iter()
        .map(|w| {
            let mut column = vec![0u64; n];
            let lo = w * 64;
            let hi = (lo + 64).min(band_count);
            let mut sizes = Vec::with_capacity(hi - lo);
            for b in lo..hi {
                let band = Band::new(dataset, plan.members(b));
                let bit = 1u64 << (b - lo);
                for (i, point) in dataset.points().iter().enumerate() {
                    if band.includes(point) {
                        column[i] |= bit;
                    }
                }
                let size = band.size(schema);
                sizes.push((size.total, size.log_total));
            }
            if let Some(p) = progress {
                p.fetch_add(hi - lo, Ordering::Relaxed);
            }
            (column, sizes)
        })
        .collect();

    let mut bits = vec![0u64; n * words];
    let mut band_sizes = Vec::with_capacity(band_count);
    let mut band_log_sizes = Vec::with_capacity(band_count);
    for (w, (column, sizes)) in chunks.into_iter().enumerate() {
        for (i, word) in column.into_iter().enumerate() {
            bits[i * words + w] = word;
        }
        for (s, l) in sizes {
            band_sizes.push(s);
            band_log_sizes.push(l);
        }
    }
    Ok(InclusionMatrix {
        n,
        band_count,
        words,
        bits,
        band_sizes,
        band_log_sizes,
    })
}

impl InclusionMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn band_count(&self) -> usize {
        self.band_count
    }

    pub fn words_per_signature(&self) -> usize {
        self.words
    }

    /// Raw (unmasked) packed signature of datapoint `i`.
    pub fn raw_signature(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn bit(&self, band: usize, point: usize) -> bool {
        self.raw_signature(point)[band / 64] & (1 << (band % 64)) != 0
    }

    pub fn band_sizes(&self) -> &[f64] {
        &self.band_sizes
    }

    pub fn band_log_sizes(&self) -> &[f64] {
        &self.band_log_sizes
    }

    /// Whether band `b` is larger than `tau`. Compared in linear space when
    /// the size is representable, in log space otherwise.
    pub fn band_exceeds(&self, b: usize, tau: f64) -> bool {
        let size = self.band_sizes[b];
        let log = self.band_log_sizes[b];
        if (size.is_finite() && size > 0.0) || log == f64::NEG_INFINITY {
            size > tau
        } else {
            log > tau.ln()
        }
    }

    /// Band-size quantile (linear interpolation at position `(count − 1)·q`).
    pub fn size_quantile(&self, q: f64) -> f64 {
        let mut sorted = self.band_sizes.clone();
        sorted.sort_by(f64::total_cmp);
        quantile_sorted(&sorted, q)
    }

    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        out.write_all(&SNAPSHOT_MAGIC)?;
        out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.band_count as u64).to_le_bytes())?;
        out.write_all(&(self.words as u64).to_le_bytes())?;
        for w in &self.bits {
            out.write_all(&w.to_le_bytes())?;
        }
        for s in self.band_sizes.iter().chain(&self.band_log_sizes) {
            out.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(36 + 8 * (self.bits.len() + 2 * self.band_count));
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut input: impl Read) -> Result<Self, SignatureError> {
        let mut header = [0u8; 36];
        input.read_exact(&mut header)?;
        if header[..4] != SNAPSHOT_MAGIC {
            return Err(SignatureError::Format("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap()) as usize;
        if u32_at(4) != SNAPSHOT_VERSION {
            return Err(SignatureError::Format(format!("unsupported version {}", u32_at(4))));
        }
        let (n, band_count, words) = (u64_at(12), u64_at(20), u64_at(28));
        if words != band_count.div_ceil(64) {
            return Err(SignatureError::Format("word count does not match band count".into()));
        }
        let mut read_words = |count: usize| -> Result<Vec<u64>, SignatureError> {
            let mut buf = vec![0u8; count * 8];
            input.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let bits = read_words(n * words)?;
        let band_sizes = read_words(band_count)?.into_iter().map(f64::from_bits).collect();
        let band_log_sizes = read_words(band_count)?.into_iter().map(f64::from_bits).collect();
        Ok(Self {
            n,
            band_count,
            words,
            bits,
            band_sizes,
            band_log_sizes,
        })
    }
}

/// The τ-restricted view of an inclusion matrix.
#[derive(Debug, Clone)]
pub struct MaskedSignatures<'a> {
    matrix: &'a InclusionMatrix,
    tau: f64,
    mask: Vec<u64>,
    unmasked: usize,
}

/// One datapoint's masked signature and its depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub bits: Vec<u64>,
    pub depth: f64,
}

/// Zero out every band larger than `tau` (`f64::INFINITY` keeps all bands).
pub fn mask_by_tau(matrix: &InclusionMatrix, tau: f64) -> Result<MaskedSignatures<'_>, SignatureError> {
    if tau.is_nan() || tau < 0.0 {
        return Err(SignatureError::NegativeTau(tau));
    }
    let mut mask = vec![0u64; matrix.words];
    let mut unmasked = 0;
    for b in 0..matrix.band_count {
        if !matrix.band_exceeds(b, tau) {
            mask[b / 64] |= 1 << (b % 64);
            unmasked += 1;
        }
    }
    Ok(MaskedSignatures {
        matrix,
        tau,
        mask,
        unmasked,
    })
}

impl<'a> MaskedSignatures<'a> {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.matrix.n
    }

    pub fn band_count(&self) -> usize {
        self.matrix.band_count
    }

    pub fn unmasked_count(&self) -> usize {
        self.unmasked
    }

    pub fn mask(&self) -> &[u64] {
        &self.mask
    }

    pub fn matrix(&self) -> &'a InclusionMatrix {
        self.matrix
    }

    /// Number of surviving bands that contain datapoint `i`.
    pub fn ones(&self, i: usize) -> usize {
        self.matrix
            .raw_signature(i)
            .iter()
            .zip(&self.mask)
            .map(|(s, m)| (s & m).count_ones() as usize)
            .sum()
    }

    pub fn signature_bits(&self, i: usize) -> Vec<u64> {
        self.matrix
            .raw_signature(i)
            .iter()
            .zip(&self.mask)
            .map(|(s, m)| s & m)
            .collect()
    }

    pub fn signature(&self, i: usize) -> Result<Signature, SignatureError> {
        if self.unmasked == 0 {
            return Err(SignatureError::NoBands(self.tau));
        }
        Ok(Signature {
            bits: self.signature_bits(i),
            depth: self.ones(i) as f64 / self.unmasked as f64,
        })
    }

    /// Hamming distance between the masked signatures of `i` and `j`.
    pub fn hamming(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.matrix.raw_signature(i), self.matrix.raw_signature(j));
        a.iter()
            .zip(b)
            .zip(&self.mask)
            .map(|((x, y), m)| ((x ^ y) & m).count_ones() as usize)
            .sum()
    }

    /// Positions where either masked signature has a 1.
    pub fn union_ones(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.matrix.raw_signature(i), self.matrix.raw_signature(j));
        a.iter()
            .zip(b)
            .zip(&self.mask)
            .map(|((x, y), m)| ((x | y) & m).count_ones() as usize)
            .sum()
    }
}

/// Mean of each masked signature over the surviving bands.
pub fn depth_values(masked: &MaskedSignatures<'_>) -> Result<Vec<f64>, SignatureError> {
    if masked.unmasked == 0 {
        return Err(SignatureError::NoBands(masked.tau));
    }
    let denom = masked.unmasked as f64;
    Ok((0..masked.n())
        .into_par_iter()
        .map(|i| masked.ones(i) as f64 / denom)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::plan_bands;
    use crate::dataset::{AttributeKind, AttributeSchema, AttributeValue};

    pub(crate) fn scalars(xs: &[f64]) -> Dataset {
        Dataset::new(
            "t",
            vec![AttributeSchema::new("x", AttributeKind::Scalar)],
            xs.iter().map(|&x| vec![AttributeValue::Scalar(x)]).collect(),
            None,
        )
        .unwrap()
    }

    fn matrix(xs: &[f64]) -> InclusionMatrix {
        let d = scalars(xs);
        let plan = plan_bands(&d, None, 0).unwrap();
        build_inclusion_matrix(&d, &plan).unwrap()
    }

    #[test]
    fn three_scalars_by_hand() {
        // bands (1,2), (1,3), (2,3)
        let m = matrix(&[1.0, 2.0, 3.0]);
        assert_eq!(m.band_count(), 3);
        let col = |i| (0..3).map(|b| m.bit(b, i)).collect::<Vec<_>>();
        assert_eq!(col(1), vec![true, true, true]);
        assert_eq!(col(0), vec![true, true, false]);
        assert_eq!(col(2), vec![false, true, true]);
        assert_eq!(m.band_sizes(), &[1.0, 2.0, 1.0]);

        let masked = mask_by_tau(&m, f64::INFINITY).unwrap();
        let d = depth_values(&masked).unwrap();
        assert_eq!(d, vec![2.0 / 3.0, 1.0, 2.0 / 3.0]);
    }

    #[test]
    fn ten_scalars_45_rows() {
        let m = matrix(&(0..10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(m.band_count(), 45);
        assert_eq!(m.words_per_signature(), 1);
    }

    #[test]
    fn tau_infinite_is_identity_and_zero_kills_generic_bands() {
        let m = matrix(&[0.3, 1.7, 2.2, 5.0, 4.1]);
        let all = mask_by_tau(&m, f64::INFINITY).unwrap();
        assert_eq!(all.unmasked_count(), m.band_count());
        for i in 0..m.n() {
            assert_eq!(all.signature_bits(i), m.raw_signature(i));
        }
        let none = mask_by_tau(&m, 0.0).unwrap();
        assert_eq!(none.unmasked_count(), 0);
        assert!(matches!(depth_values(&none), Err(SignatureError::NoBands(_))));
        assert!(matches!(mask_by_tau(&m, -1.0), Err(SignatureError::NegativeTau(_))));
    }

    #[test]
    fn identical_points_have_depth_one() {
        let m = matrix(&[2.0; 6]);
        for tau in [0.0, 1.0, f64::INFINITY] {
            let masked = mask_by_tau(&m, tau).unwrap();
            assert!(depth_values(&masked).unwrap().iter().all(|&d| d == 1.0));
        }
    }

    /// Two tight groups of three around a lone middle point. At tau = 1.3 only
    /// within-group pairs survive and the group centres (the 2nd and 6th
    /// points) hold the most ones; without a threshold the middle point is
    /// deepest.
    #[test]
    fn restricted_tau_favours_mode_centres() {
        let m = matrix(&[0.1, 0.6, 1.1, 3.0, 4.4, 5.0, 5.5]);
        let local = mask_by_tau(&m, 1.3).unwrap();
        let ones: Vec<usize> = (0..7).map(|i| local.ones(i)).collect();
        assert_eq!(ones, vec![2, 3, 2, 0, 2, 3, 2]);
        let global = depth_values(&mask_by_tau(&m, f64::INFINITY).unwrap()).unwrap();
        let deepest = (0..7).max_by(|&a, &b| global[a].total_cmp(&global[b])).unwrap();
        assert_eq!(deepest, 3);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let m = matrix(&(0..70).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>());
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"DSIM");
        let back = InclusionMatrix::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(InclusionMatrix::read_from(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn plan_mismatch() {
        let d = scalars(&[1.0, 2.0, 3.0]);
        let plan = crate::bands::plan_for_shape(4, 2, None, 0).unwrap();
        assert!(matches!(
            build_inclusion_matrix(&d, &plan),
            Err(SignatureError::PlanMismatch { .. })
        ));
    }

    #[test]
    fn progress_counts_every_band() {
        let d = scalars(&(0..20).map(f64::from).collect::<Vec<_>>());
        let plan = plan_bands(&d, None, 0).unwrap();
        let progress = AtomicUsize::new(0);
        build_inclusion_matrix_with_progress(&d, &plan, Some(&progress)).unwrap();
        assert_eq!(progress.load(Ordering::Relaxed), plan.band_count());
    }
}
