//! Verification scoring: pairwise-softmax uncertainty against a category
//! bank, per-label threshold calibration, and the attribute weighted-sum
//! filter.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::scene::{MissingEntry, Proposal, Scene};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Missing(#[from] MissingEntry),
}

fn domain(msg: impl Into<String>) -> VerifyError {
    VerifyError::Domain(msg.into())
}

/// The 80 COCO object categories.
pub const COCO_CATEGORIES: [&str; 80] = [
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train", "truck", "boat", "traffic light",
    "fire hydrant", "stop sign", "parking meter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella", "handbag", "tie", "suitcase", "frisbee",
    "skis", "snowboard", "sports ball", "kite", "baseball bat", "baseball glove", "skateboard", "surfboard",
    "tennis racket", "bottle", "wine glass", "cup", "fork", "knife", "spoon", "bowl", "banana", "apple",
    "sandwich", "orange", "broccoli", "carrot", "hot dog", "pizza", "donut", "cake", "chair", "couch",
    "potted plant", "bed", "dining table", "toilet", "tv", "laptop", "mouse", "remote", "keyboard",
    "cell phone", "microwave", "oven", "toaster", "sink", "refrigerator", "book", "clock", "vase",
    "scissors", "teddy bear", "hair drier", "toothbrush",
];

/// Negative categories each proposal is compared against one-on-one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryBank {
    categories: Vec<String>,
}

impl CategoryBank {
    pub fn new<I, S>(categories: I) -> Result<Self, VerifyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for c in categories {
            let c = c.into();
            if c.trim().is_empty() {
                return Err(domain("category bank entries must be non-empty"));
            }
            if out.iter().any(|e| e.eq_ignore_ascii_case(&c)) {
                return Err(domain(alloc::format!("duplicate category '{c}'")));
            }
            out.push(c);
        }
        if out.is_empty() {
            return Err(domain("category bank must not be empty"));
        }
        Ok(CategoryBank { categories: out })
    }

    pub fn coco() -> Self {
        CategoryBank { categories: COCO_CATEGORIES.iter().map(|s| s.to_string()).collect() }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// The bank with `label` itself removed (case-insensitive exact match).
    pub fn against<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.categories.iter().map(String::as_str).filter(move |c| !c.eq_ignore_ascii_case(label))
    }
}

impl Default for CategoryBank {
    fn default() -> Self {
        Self::coco()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    /// Softmax temperature, > 0.
    pub temperature: f64,
    /// Used for labels absent from the threshold table.
    pub fixed_threshold: f64,
    /// Percentage of auxiliary samples kept above the calibrated threshold.
    pub top_k_percent: f64,
    /// Weight of the attribute softmax in the attribute filter.
    pub property_weight: f64,
    /// The attribute filter keeps candidates scoring at least `beta / n`.
    pub property_beta: f64,
    /// When set, the attribute filter may return the empty set.
    pub property_strict: bool,
    /// Proposals below this detector score are dropped before verification.
    pub detection_floor: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            temperature: 0.01,
            fixed_threshold: 0.5,
            top_k_percent: 10.0,
            property_weight: 0.5,
            property_beta: 1.0,
            property_strict: false,
            detection_floor: 0.2,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(domain("temperature must be > 0"));
        }
        if !(self.fixed_threshold > 0.0 && self.fixed_threshold < 1.0) {
            return Err(domain("fixed_threshold must lie in (0, 1)"));
        }
        if !(self.top_k_percent > 0.0 && self.top_k_percent <= 100.0) {
            return Err(domain("top_k_percent must lie in (0, 100]"));
        }
        if !(0.0..=1.0).contains(&self.property_weight) {
            return Err(domain("property_weight must lie in [0, 1]"));
        }
        if !(self.property_beta.is_finite() && self.property_beta >= 0.0) {
            return Err(domain("property_beta must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.detection_floor) {
            return Err(domain("detection_floor must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub aux_dataset_id: String,
    /// Total auxiliary samples the table was calibrated from.
    pub n: usize,
    pub k: f64,
}

/// Per-label acceptance thresholds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThresholdTable {
    thresholds: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

impl ThresholdTable {
    pub fn new(provenance: Provenance) -> Self {
        ThresholdTable { thresholds: BTreeMap::new(), provenance }
    }

    /// Thresholds must lie in `(0, 1]`; 1 is reachable because the logistic
    /// saturates in floating point.
    pub fn insert(&mut self, label: impl Into<String>, delta: f64) -> Result<(), VerifyError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(domain(alloc::format!("threshold {delta} outside (0, 1]")));
        }
        self.thresholds.insert(label.into(), delta);
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.thresholds.get(label).copied()
    }

    pub fn thresholds(&self) -> &BTreeMap<String, f64> {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Mean over the bank of the two-way softmax probability that the crop is
/// the target rather than the bank category.
///
/// `exp(t/τ) / (exp(t/τ) + exp(c/τ))` equals `σ((t − c)/τ)`; the subtraction
/// form cannot overflow.
pub fn uv_score(sim_target: f64, sims_bank: &[f64], temperature: f64) -> Result<f64, VerifyError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(domain("temperature must be > 0"));
    }
    if sims_bank.is_empty() {
        return Err(domain("category bank is empty"));
    }
    let sum: f64 = sims_bank.iter().map(|&c| sigmoid((sim_target - c) / temperature)).sum();
    Ok(sum / sims_bank.len() as f64)
}

/// The `⌈k·n/100⌉`-th largest score, so the top `k` percent of samples
/// score at least the returned threshold.
pub fn calibrate_threshold(scores: &[f64], k_percent: f64) -> Result<f64, VerifyError> {
    if scores.is_empty() {
        return Err(domain("no auxiliary scores"));
    }
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(domain("k must lie in (0, 100]"));
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(domain("auxiliary scores must lie in [0, 1]"));
    }
    let n = scores.len();
    let rank = (libm::ceil(k_percent * n as f64 / 100.0) as usize).clamp(1, n);
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[rank - 1])
}

/// Score one proposal against `label`.
pub fn proposal_uv_score(
    p: &Proposal,
    label: &str,
    scene: &Scene,
    bank: &CategoryBank,
    temperature: f64,
) -> Result<f64, VerifyError> {
    let target = scene.similarity(&p.id, label)?;
    let bank_sims = bank.against(label).map(|c| scene.similarity(&p.id, c)).collect::<Result<Vec<_>, _>>()?;
    uv_score(target, &bank_sims, temperature)
}

/// The threshold that applies to `label`.
pub fn threshold_for(label: &str, cfg: &VerifyConfig, table: Option<&ThresholdTable>) -> f64 {
    table.and_then(|t| t.get(label)).unwrap_or(cfg.fixed_threshold)
}

/// Keeps proposals whose uncertainty score reaches the label threshold
/// (inclusive). Input order is preserved.
pub fn uv_filter(
    proposals: &[Proposal],
    label: &str,
    scene: &Scene,
    bank: &CategoryBank,
    cfg: &VerifyConfig,
    table: Option<&ThresholdTable>,
) -> Result<Vec<Proposal>, VerifyError> {
    let delta = threshold_for(label, cfg, table);
    let mut kept = Vec::new();
    for p in proposals {
        if proposal_uv_score(p, label, scene, bank, cfg.temperature)? >= delta {
            kept.push(p.clone());
        }
    }
    Ok(kept)
}

/// Combined attribute score per candidate: `α·softmax(sim/τ) + (1−α)·score`.
pub fn property_scores(
    proposals: &[Proposal],
    attribute: &str,
    scene: &Scene,
    cfg: &VerifyConfig,
) -> Result<Vec<f64>, VerifyError> {
    let logits = proposals
        .iter()
        .map(|p| scene.similarity(&p.id, attribute).map(|s| s / cfg.temperature))
        .collect::<Result<Vec<_>, _>>()?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
    let total: f64 = exps.iter().sum();
    let alpha = cfg.property_weight;
    Ok(proposals
        .iter()
        .zip(&exps)
        .map(|(p, e)| alpha * (e / total) + (1.0 - alpha) * p.score)
        .collect())
}

/// Keeps candidates whose combined score is at least `β/n`. Unless
/// `property_strict` is set, an empty result falls back to the candidates
/// attaining the maximum combined score.
pub fn property_filter(
    proposals: &[Proposal],
    attribute: &str,
    scene: &Scene,
    cfg: &VerifyConfig,
) -> Result<Vec<Proposal>, VerifyError> {
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    let combined = property_scores(proposals, attribute, scene, cfg)?;
    let cutoff = cfg.property_beta / proposals.len() as f64;
    let kept: Vec<Proposal> = proposals
        .iter()
        .zip(&combined)
        .filter(|(_, &c)| c >= cutoff)
        .map(|(p, _)| p.clone())
        .collect();
    if !kept.is_empty() || cfg.property_strict {
        return Ok(kept);
    }
    let best = combined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(proposals
        .iter()
        .zip(&combined)
        .filter(|(_, &c)| c == best)
        .map(|(p, _)| p.clone())
        .collect())
}
