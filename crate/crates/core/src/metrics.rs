//! Unsupervised segmentation metrics: foreground ARI, foreground mean
//! segmentation covering, background IoU.

use ndarray::Array2;
use std::collections::BTreeMap;

use crate::error::{CoreError, Result};

/// Per-pixel labels: 0 is background, ids >= 1 are instances. Ids need not
/// be contiguous.
#[derive(Debug, Clone)]
pub struct Labeling {
    pub labels: Array2<u32>,
}

impl Labeling {
    pub fn new(labels: Array2<u32>) -> Self {
        Labeling { labels }
    }
}

/// The three scores, each in `[0, 1]`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SegScores {
    pub ari_fg: f64,
    pub msc_fg: f64,
    pub miou_bg: f64,
}

fn check_dims(pred: &Labeling, truth: &Labeling) -> Result<()> {
    if pred.labels.dim() != truth.labels.dim() {
        return Err(CoreError::ShapeMismatch(format!(
            "pred {:?} vs truth {:?}",
            pred.labels.dim(),
            truth.labels.dim()
        )));
    }
    Ok(())
}

fn comb2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index over the ground-truth foreground pixels.
///
/// The degenerate case where both partitions are a single cluster (the
/// standard formula's 0/0) is defined as 1.
pub fn ari_fg(pred: &Labeling, truth: &Labeling) -> Result<f64> {
    check_dims(pred, truth)?;
    let mut table: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut truth_sums: BTreeMap<u32, u64> = BTreeMap::new();
    let mut pred_sums: BTreeMap<u32, u64> = BTreeMap::new();
    let mut n: u64 = 0;
    for (t, p) in truth.labels.iter().zip(pred.labels.iter()) {
        if *t == 0 {
            continue;
        }
        *table.entry((*t, *p)).or_insert(0) += 1;
        *truth_sums.entry(*t).or_insert(0) += 1;
        *pred_sums.entry(*p).or_insert(0) += 1;
        n += 1;
    }
    if n == 0 {
        return Err(CoreError::NoForeground);
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = truth_sums.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = pred_sums.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Mean segmentation covering over ground-truth foreground instances:
/// unweighted mean of each instance's best IoU against any predicted
/// foreground segment. Evaluation is restricted to ground-truth foreground
/// pixels, and predicted label 0 is never a candidate segment.
pub fn msc_fg(pred: &Labeling, truth: &Labeling) -> Result<f64> {
    check_dims(pred, truth)?;
    let mut intersect: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut truth_sizes: BTreeMap<u32, u64> = BTreeMap::new();
    let mut pred_sizes: BTreeMap<u32, u64> = BTreeMap::new();
    for (t, p) in truth.labels.iter().zip(pred.labels.iter()) {
        if *t == 0 {
            continue;
        }
        *truth_sizes.entry(*t).or_insert(0) += 1;
        if *p != 0 {
            *intersect.entry((*t, *p)).or_insert(0) += 1;
            *pred_sizes.entry(*p).or_insert(0) += 1;
        }
    }
    if truth_sizes.is_empty() {
        return Err(CoreError::NoForeground);
    }
    let mut covering = 0.0;
    for (&t, &t_size) in &truth_sizes {
        let mut best = 0.0f64;
        for (&(ti, p), &inter) in &intersect {
            if ti != t {
                continue;
            }
            let union = t_size + pred_sizes[&p] - inter;
            best = best.max(inter as f64 / union as f64);
        }
        covering += best;
    }
    Ok(covering / truth_sizes.len() as f64)
}

/// IoU of predicted against true background masks over all pixels; an empty
/// union counts as 1.
pub fn miou_bg(pred: &Labeling, truth: &Labeling) -> Result<f64> {
    check_dims(pred, truth)?;
    let mut inter: u64 = 0;
    let mut union: u64 = 0;
    for (t, p) in truth.labels.iter().zip(pred.labels.iter()) {
        let tb = *t == 0;
        let pb = *p == 0;
        if tb && pb {
            inter += 1;
        }
        if tb || pb {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// All three scores at once, normalised to `[0, 1]`: the raw ARI can dip
/// below zero for worse-than-chance predictions and is clamped here.
pub fn seg_scores(pred: &Labeling, truth: &Labeling) -> Result<SegScores> {
    Ok(SegScores {
        ari_fg: ari_fg(pred, truth)?.max(0.0),
        msc_fg: msc_fg(pred, truth)?,
        miou_bg: miou_bg(pred, truth)?,
    })
}
