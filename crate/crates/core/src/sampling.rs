//! Seeded test-set sampling with a bound on class imbalance.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::claim::{DatasetRecord, VeracityLabel};

pub const DEFAULT_SAMPLE_SIZE: usize = 100;

/// Limit on how far one class may outnumber the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioConstraint {
    Unconstrained,
    /// Neither class may exceed `k` times the other.
    MaxRatio(u32),
}

impl Default for RatioConstraint {
    fn default() -> Self {
        RatioConstraint::MaxRatio(2)
    }
}

impl RatioConstraint {
    pub fn admits(&self, real: usize, fake: usize) -> bool {
        match *self {
            RatioConstraint::Unconstrained => true,
            RatioConstraint::MaxRatio(k) => {
                let k = k as usize;
                real <= k * fake && fake <= k * real
            }
        }
    }

    /// Inclusive range of real-class counts admissible in a sample of size
    /// `m` drawn from `pool_real` reals and `pool_fake` fakes.
    fn real_range(&self, m: usize, pool_real: usize, pool_fake: usize) -> Option<(usize, usize)> {
        let mut lo = m.saturating_sub(pool_fake);
        let mut hi = pool_real.min(m);
        if let RatioConstraint::MaxRatio(k) = *self {
            let k = k as usize;
            // real <= k * (m - real) and (m - real) <= k * real
            lo = lo.max(m.div_ceil(k + 1));
            hi = hi.min(k * m / (k + 1));
        }
        (lo <= hi).then_some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub n: usize,
    pub seed: u64,
    pub constraint: RatioConstraint,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            n: DEFAULT_SAMPLE_SIZE,
            seed: 0,
            constraint: RatioConstraint::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SamplingError {
    #[error("no records to sample from")]
    EmptyInput,
    #[error("sample size must be positive")]
    ZeroSize,
    #[error(
        "cannot draw {size} records within the class-ratio limit from {real} real / {fake} fake"
    )]
    InfeasibleConstraint {
        size: usize,
        real: usize,
        fake: usize,
    },
}

/// Draws `min(n, records.len())` records. A seeded shuffle picks the
/// candidates; if their class mix breaks the ratio limit, the nearest
/// admissible mix is taken instead. Output keeps input order.
pub fn sample_test_set(
    records: &[DatasetRecord],
    spec: &SamplingSpec,
) -> Result<Vec<DatasetRecord>, SamplingError> {
    if records.is_empty() {
        return Err(SamplingError::EmptyInput);
    }
    if spec.n == 0 {
        return Err(SamplingError::ZeroSize);
    }
    let m = spec.n.min(records.len());

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (reals, fakes): (Vec<usize>, Vec<usize>) = order
        .iter()
        .partition(|&&i| records[i].gold_label == VeracityLabel::Real);

    let (lo, hi) = spec
        .constraint
        .real_range(m, reals.len(), fakes.len())
        .ok_or(SamplingError::InfeasibleConstraint {
            size: m,
            real: reals.len(),
            fake: fakes.len(),
        })?;
    let natural = order[..m]
        .iter()
        .filter(|&&i| records[i].gold_label == VeracityLabel::Real)
        .count();
    let take_real = natural.clamp(lo, hi);

    let mut picked: Vec<usize> = reals[..take_real]
        .iter()
        .chain(&fakes[..m - take_real])
        .copied()
        .collect();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| records[i].clone()).collect())
}
