use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BandError;
use crate::dataset::Dataset;

/// Default cap on the number of bands; plans at or under it are exhaustive.
pub const DEFAULT_BUDGET: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Enumeration {
    Exhaustive,
    Sampled { budget: usize, seed: u64 },
}

/// Ordered list of band member subsets. Position in the list is the band's
/// position in every signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "PlanJson", try_from = "PlanJson")]
pub struct BandPlan {
    pub n: usize,
    pub subset_size: usize,
    pub enumeration: Enumeration,
    /// Flat, `subset_size` entries per band.
    pub member_indices: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct PlanJson {
    n: usize,
    subset_size: usize,
    enumeration: Enumeration,
    member_indices: Vec<Vec<u32>>,
}

impl From<BandPlan> for PlanJson {
    fn from(plan: BandPlan) -> Self {
        PlanJson {
            n: plan.n,
            subset_size: plan.subset_size,
            enumeration: plan.enumeration,
            member_indices: plan.iter().map(<[u32]>::to_vec).collect(),
        }
    }
}

impl TryFrom<PlanJson> for BandPlan {
    type Error = String;

    fn try_from(json: PlanJson) -> Result<Self, String> {
        if json.subset_size < 2 {
            return Err(format!("subset size must be at least 2, got {}", json.subset_size));
        }
        let mut flat = Vec::with_capacity(json.member_indices.len() * json.subset_size);
        for band in &json.member_indices {
            if band.len() != json.subset_size {
                return Err(format!("band with {} members, expected {}", band.len(), json.subset_size));
            }
            if band.windows(2).any(|w| w[0] >= w[1]) || band.iter().any(|&i| i as usize >= json.n) {
                return Err(format!("band members {band:?} not sorted, distinct and below n"));
            }
            flat.extend_from_slice(band);
        }
        Ok(BandPlan {
            n: json.n,
            subset_size: json.subset_size,
            enumeration: json.enumeration,
            member_indices: flat,
        })
    }
}

impl BandPlan {
    pub fn band_count(&self) -> usize {
        self.member_indices.len() / self.subset_size
    }

    pub fn members(&self, band: usize) -> &[u32] {
        let r = self.subset_size;
        &self.member_indices[band * r..(band + 1) * r]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.member_indices.chunks_exact(self.subset_size)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan is always serializable")
    }
}

/// `C(n, k)`; saturates at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// Largest minimal band cardinality over the schema.
pub fn subset_size(dataset: &Dataset) -> usize {
    dataset
        .schema()
        .iter()
        .map(|a| a.kind.minimal_band_cardinality())
        .max()
        .unwrap_or(2)
}

/// Lexicographic `rank`-th `r`-subset of `0..n`.
fn unrank(mut rank: u128, n: usize, r: usize, out: &mut Vec<u32>) {
    let mut next = 0usize;
    for slot in 0..r {
        let mut c = next;
        loop {
            let count = binomial((n - 1 - c) as u64, (r - 1 - slot) as u64);
            if rank < count {
                break;
            }
            rank -= count;
            c += 1;
        }
        out.push(c as u32);
        next = c + 1;
    }
}

fn push_all_subsets(n: usize, r: usize, out: &mut Vec<u32>) {
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.extend(idx.iter().map(|&i| i as u32));
        let Some(i) = (0..r).rev().find(|&i| idx[i] < i + n - r) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exhaustive lexicographic enumeration when `C(n, r) <= budget`, otherwise
/// `budget` distinct subsets drawn uniformly without replacement (Floyd's
/// algorithm over subset ranks) and sorted lexicographically.
pub fn plan_bands(dataset: &Dataset, budget: Option<usize>, seed: u64) -> Result<BandPlan, BandError> {
    plan_for_shape(dataset.len(), subset_size(dataset), budget, seed)
}

pub fn plan_for_shape(n: usize, r: usize, budget: Option<usize>, seed: u64) -> Result<BandPlan, BandError> {
    if n < r {
        return Err(BandError::TooFewPoints { n, r });
    }
    let budget = budget.unwrap_or(DEFAULT_BUDGET);
    if budget < n {
        return Err(BandError::BudgetTooSmall { budget, n });
    }
    let total = binomial(n as u64, r as u64);
    let mut members = Vec::new();
    let enumeration = if total <= budget as u128 {
        members.reserve(total as usize * r);
        push_all_subsets(n, r, &mut members);
        Enumeration::Exhaustive
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen: HashSet<u128> = HashSet::with_capacity(budget);
        let m = budget as u128;
        for j in (total - m)..total {
            let t = rng.random_range(0..=j);
            if !chosen.insert(t) {
                chosen.insert(j);
            }
        }
        let mut ranks: Vec<u128> = chosen.into_iter().collect();
        ranks.sort_unstable();
        members.reserve(budget * r);
        for rank in ranks {
            unrank(rank, n, r, &mut members);
        }
        Enumeration::Sampled { budget, seed }
    };
    Ok(BandPlan {
        n,
        subset_size: r,
        enumeration,
        member_indices: members,
    })
}
