//! Evaluation metrics for target-present / no-target grounding.
//!
//! A prediction is a hit on a target-present item when its IoU with the
//! ground truth exceeds 0.5. Items whose program could not be produced or
//! executed are `Failed`: they are left out of the confusion counts and
//! counted as wrong only by the inclusive accuracy.

use alloc::vec::Vec;

use crate::interp::Outcome;
use crate::scene::{iou, BBox};

pub const IOU_HIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GroundTruth {
    /// One or more acceptable boxes; the best-overlapping one is used.
    Boxes(Vec<BBox>),
    NoTarget,
}

impl GroundTruth {
    pub fn single(b: BBox) -> Self {
        GroundTruth::Boxes(alloc::vec![b])
    }

    pub fn is_present(&self) -> bool {
        matches!(self, GroundTruth::Boxes(b) if !b.is_empty())
    }

    /// Max IoU of `pred` over the ground-truth boxes, 0 when absent.
    pub fn best_iou(&self, pred: &BBox) -> f64 {
        match self {
            GroundTruth::Boxes(bs) => bs.iter().map(|g| iou(pred, g)).fold(0.0, f64::max),
            GroundTruth::NoTarget => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Prediction {
    Box(BBox),
    NoTarget,
    Failed,
}

impl From<&Outcome> for Prediction {
    fn from(o: &Outcome) -> Self {
        match o.target() {
            Some(b) => Prediction::Box(b),
            None => Prediction::NoTarget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verdict {
    TruePositive,
    TrueNegative,
    FalsePositive,
    FalseNegative,
    Failed,
}

/// Classifies one item.
pub fn classify(gt: &GroundTruth, pred: &Prediction) -> Verdict {
    match (gt.is_present(), pred) {
        (_, Prediction::Failed) => Verdict::Failed,
        (true, Prediction::Box(b)) if gt.best_iou(b) > IOU_HIT => Verdict::TruePositive,
        (true, _) => Verdict::FalseNegative,
        (false, Prediction::NoTarget) => Verdict::TrueNegative,
        (false, Prediction::Box(_)) => Verdict::FalsePositive,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub items: usize,
    pub failed: usize,
    pub counts: ConfusionCounts,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    /// Same quantity as `tpr`, under its grounding-benchmark name.
    pub acc_at_05: Option<f64>,
    pub failure_rate: Option<f64>,
    /// Correct / all items, failures counted as wrong.
    pub acc_inc: Option<f64>,
    /// Correct / non-failed items.
    pub acc_exc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("{items} items but {predictions} predictions")]
pub struct LengthMismatch {
    pub items: usize,
    pub predictions: usize,
}

pub fn score(gts: &[GroundTruth], preds: &[Prediction]) -> Result<(Vec<Verdict>, MetricsReport), LengthMismatch> {
    if gts.len() != preds.len() {
        return Err(LengthMismatch { items: gts.len(), predictions: preds.len() });
    }
    let verdicts: Vec<Verdict> = gts.iter().zip(preds).map(|(g, p)| classify(g, p)).collect();
    let mut c = ConfusionCounts::default();
    let mut failed = 0usize;
    for v in &verdicts {
        match v {
            Verdict::TruePositive => c.tp += 1,
            Verdict::TrueNegative => c.tn += 1,
            Verdict::FalsePositive => c.fp += 1,
            Verdict::FalseNegative => c.fn_ += 1,
            Verdict::Failed => failed += 1,
        }
    }
    let n = verdicts.len() as u64;
    let tpr = ratio(c.tp, c.tp + c.fn_);
    let tnr = ratio(c.tn, c.tn + c.fp);
    let report = MetricsReport {
        items: verdicts.len(),
        failed,
        counts: c,
        tpr,
        tnr,
        fpr: tnr.map(|t| 1.0 - t),
        balanced_accuracy: match (tpr, tnr) {
            (Some(a), Some(b)) => Some((a + b) / 2.0),
            _ => None,
        },
        acc_at_05: tpr,
        failure_rate: ratio(failed as u64, n),
        acc_inc: ratio(c.tp + c.tn, n),
        acc_exc: ratio(c.tp + c.tn, c.total()),
    };
    Ok((verdicts, report))
}

/// One video frame: predicted and ground-truth box, `None` for no box.
pub type Frame = (Option<BBox>, Option<BBox>);

/// Summed intersections over summed unions across a clip. A clip whose
/// frames are all empty on both sides scores 1.
pub fn stiou(frames: &[Frame]) -> f64 {
    let (mut inter, mut union) = (0.0, 0.0);
    for (p, g) in frames {
        match (p, g) {
            (Some(p), Some(g)) => {
                inter += p.intersection_area(g);
                union += p.union_area(g);
            }
            (Some(b), None) | (None, Some(b)) => union += b.area(),
            (None, None) => {}
        }
    }
    if union == 0.0 {
        1.0
    } else {
        inter / union
    }
}

/// Mean STIoU over clips; `None` for no clips.
pub fn mstiou(clips: &[Vec<Frame>]) -> Option<f64> {
    if clips.is_empty() {
        return None;
    }
    Some(clips.iter().map(|c| stiou(c)).sum::<f64>() / clips.len() as f64)
}

/// Per-frame accuracy: a frame scores 1 if a present target is hit with IoU
/// above 0.5, or an absent target is correctly left empty.
pub fn acc_at_05_plus_n(frames: &[Frame]) -> Option<f64> {
    if frames.is_empty() {
        return None;
    }
    let hits = frames
        .iter()
        .filter(|(p, g)| match (p, g) {
            (Some(p), Some(g)) => iou(p, g) > IOU_HIT,
            (None, None) => true,
            _ => false,
        })
        .count();
    Some(hits as f64 / frames.len() as f64)
}
