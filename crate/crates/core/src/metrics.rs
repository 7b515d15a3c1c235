//! Accuracy and per-class F1 over (gold, predicted) pairs, and tool-usage
//! frequency over plans.

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::claim::VeracityLabel;
use crate::tools::ToolKind;
use crate::workflow::WorkflowPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no input to aggregate")]
    EmptyInput,
}

/// Confusion counts with Fake as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp_fake: usize,
    pub fp_fake: usize,
    pub fn_fake: usize,
    pub tn_fake: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: &[(VeracityLabel, VeracityLabel)]) -> Self {
        use VeracityLabel::*;
        let mut c = Confusion::default();
        for &(gold, predicted) in pairs {
            match (gold, predicted) {
                (Fake, Fake) => c.tp_fake += 1,
                (Real, Fake) => c.fp_fake += 1,
                (Fake, Real) => c.fn_fake += 1,
                (Real, Real) => c.tn_fake += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp_fake + self.fp_fake + self.fn_fake + self.tn_fake
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub n: usize,
    pub accuracy: f64,
    /// Mean of `f1_real` and `f1_fake`.
    pub f1_macro: f64,
    pub f1_real: f64,
    pub f1_fake: f64,
    pub confusion: Confusion,
}

/// F1 for one class; 0 when the class never occurs in gold or predictions.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

pub fn compute_metrics(
    pairs: &[(VeracityLabel, VeracityLabel)],
) -> Result<MetricScores, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let c = Confusion::from_pairs(pairs);
    let n = c.total();
    let f1_fake = f1(c.tp_fake, c.fp_fake, c.fn_fake);
    // For Real, the roles flip: tn_fake are its true positives.
    let f1_real = f1(c.tn_fake, c.fn_fake, c.fp_fake);
    Ok(MetricScores {
        n,
        accuracy: (c.tp_fake + c.tn_fake) as f64 / n as f64,
        f1_macro: (f1_real + f1_fake) / 2.0,
        f1_real,
        f1_fake,
        confusion: c,
    })
}

/// Fraction of plans that contain each tool. Every tool is present in the
/// map, unused ones at 0.
pub fn tool_usage_frequency(
    plans: &[WorkflowPlan],
) -> Result<BTreeMap<ToolKind, f64>, MetricsError> {
    if plans.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut counts: BTreeMap<ToolKind, usize> = ToolKind::ALL.into_iter().map(|k| (k, 0)).collect();
    for plan in plans {
        for kind in ToolKind::ALL {
            if plan.contains(kind) {
                *counts.get_mut(&kind).unwrap() += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / plans.len() as f64))
        .collect())
}
