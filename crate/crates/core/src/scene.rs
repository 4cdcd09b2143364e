//! Per-image perception records: proposals, similarities, depth.
//!
//! Everything the interpreter reads about an image lives in a [`Scene`].
//! Scenes are validated at construction and immutable afterwards.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

/// A box in pixel units, `(x, y)` is the center. Image y grows downward.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[f64; 4]", into = "[f64; 4]"))]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    /// Builds from corner coordinates `(x0, y0, x1, y1)`.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox { x: (x0 + x1) / 2.0, y: (y0 + y1) / 2.0, w: x1 - x0, h: y1 - y0 }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite() && self.w > 0.0 && self.h > 0.0
    }

    /// `(x0, y0, x1, y1)`
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        (self.x - hw, self.y - hh, self.x + hw, self.y + hh)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        libm::hypot(self.w, self.h)
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let (ax0, ay0, ax1, ay1) = self.corners();
        let (bx0, by0, bx1, by1) = other.corners();
        let iw = ax1.min(bx1) - ax0.max(bx0);
        let ih = ay1.min(by1) - ay0.max(by0);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn union_area(&self, other: &BBox) -> f64 {
        self.area() + other.area() - self.intersection_area(other)
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Proposal {
    pub id: String,
    #[cfg_attr(feature = "serde", serde(rename = "box"))]
    pub bbox: BBox,
    pub score: f64,
    /// The label this proposal was detected for.
    pub source_label: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("invalid value for {field}: {detail}")]
    InvalidValue { field: String, detail: String },
    #[error("proposal id '{0}' appears more than once")]
    DuplicateProposal(String),
    #[error("{table} entry references unknown proposal id '{id}'")]
    UnknownProposal { table: &'static str, id: String },
}

/// Precomputed data the scene does not carry.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "entry", rename_all = "snake_case"))]
pub enum MissingEntry {
    #[error("label '{label}' was never queried for this scene")]
    Detections { label: String },
    #[error("no similarity for proposal '{id}' and text '{text}'")]
    Similarity { id: String, text: String },
    #[error("no depth value for proposal '{id}'")]
    Depth { id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    image_id: String,
    width: f64,
    height: f64,
    detections: BTreeMap<String, Vec<Proposal>>,
    similarity: BTreeMap<String, BTreeMap<String, f64>>,
    depth: BTreeMap<String, f64>,
}

fn invalid(field: impl Into<String>, detail: impl Into<String>) -> SceneError {
    SceneError::InvalidValue { field: field.into(), detail: detail.into() }
}

impl Scene {
    /// Validates and normalizes: detection lists end up sorted by descending
    /// score (ties by id).
    pub fn new(
        image_id: impl Into<String>,
        width: f64,
        height: f64,
        mut detections: BTreeMap<String, Vec<Proposal>>,
        similarity: BTreeMap<String, BTreeMap<String, f64>>,
        depth: BTreeMap<String, f64>,
    ) -> Result<Scene, SceneError> {
        if !(width.is_finite() && width > 0.0) {
            return Err(invalid("width", "must be a positive number"));
        }
        if !(height.is_finite() && height > 0.0) {
            return Err(invalid("height", "must be a positive number"));
        }
        let mut ids = BTreeSet::new();
        for (label, props) in detections.iter_mut() {
            for p in props.iter_mut() {
                if !p.bbox.is_valid() {
                    return Err(invalid(alloc::format!("detections.{label}.{}.box", p.id), "box needs finite values and w, h > 0"));
                }
                if !(0.0..=1.0).contains(&p.score) {
                    return Err(invalid(alloc::format!("detections.{label}.{}.score", p.id), "score must lie in [0, 1]"));
                }
                if !ids.insert(p.id.clone()) {
                    return Err(SceneError::DuplicateProposal(p.id.clone()));
                }
                if p.source_label != *label {
                    p.source_label.clone_from(label);
                }
            }
            props.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        }
        for (id, row) in &similarity {
            if !ids.contains(id) {
                return Err(SceneError::UnknownProposal { table: "similarity", id: id.clone() });
            }
            for (text, &v) in row {
                if !(v.is_finite() && (-1.0..=1.0).contains(&v)) {
                    return Err(invalid(alloc::format!("similarity[{id}, {text}]"), "similarity must lie in [-1, 1]"));
                }
            }
        }
        for (id, &v) in &depth {
            if !ids.contains(id) {
                return Err(SceneError::UnknownProposal { table: "depth", id: id.clone() });
            }
            if !v.is_finite() {
                return Err(invalid(alloc::format!("depth[{id}]"), "depth must be finite"));
            }
        }
        Ok(Scene { image_id: image_id.into(), width, height, detections, similarity, depth })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn detections(&self) -> &BTreeMap<String, Vec<Proposal>> {
        &self.detections
    }

    pub fn similarity_table(&self) -> &BTreeMap<String, BTreeMap<String, f64>> {
        &self.similarity
    }

    pub fn depth_table(&self) -> &BTreeMap<String, f64> {
        &self.depth
    }

    /// Detections for `label`, best first. An empty slice means the label
    /// was queried and nothing was found.
    pub fn lookup_detections(&self, label: &str) -> Result<&[Proposal], MissingEntry> {
        self.detections
            .get(label)
            .map(Vec::as_slice)
            .ok_or_else(|| MissingEntry::Detections { label: label.into() })
    }

    pub fn similarity(&self, id: &str, text: &str) -> Result<f64, MissingEntry> {
        self.similarity
            .get(id)
            .and_then(|row| row.get(text))
            .copied()
            .ok_or_else(|| MissingEntry::Similarity { id: id.into(), text: text.into() })
    }

    pub fn depth(&self, id: &str) -> Result<f64, MissingEntry> {
        self.depth.get(id).copied().ok_or_else(|| MissingEntry::Depth { id: id.into() })
    }

    pub fn proposal_count(&self) -> usize {
        self.detections.values().map(Vec::len).sum()
    }
}

/// Incremental construction, mostly for fixtures and tests.
#[derive(Debug, Clone, Default)]
pub struct SceneBuilder {
    image_id: String,
    width: f64,
    height: f64,
    detections: BTreeMap<String, Vec<Proposal>>,
    similarity: BTreeMap<String, BTreeMap<String, f64>>,
    depth: BTreeMap<String, f64>,
}

impl SceneBuilder {
    pub fn new(image_id: impl Into<String>, width: f64, height: f64) -> Self {
        SceneBuilder { image_id: image_id.into(), width, height, ..Default::default() }
    }

    /// Registers `label` as queried, possibly with no detections.
    pub fn label(mut self, label: &str) -> Self {
        self.detections.entry(label.into()).or_default();
        self
    }

    pub fn detection(mut self, label: &str, id: &str, bbox: BBox, score: f64) -> Self {
        self.detections.entry(label.into()).or_default().push(Proposal {
            id: id.into(),
            bbox,
            score,
            source_label: label.into(),
        });
        self
    }

    pub fn similarity(mut self, id: &str, text: &str, sim: f64) -> Self {
        self.similarity.entry(id.into()).or_default().insert(text.into(), sim);
        self
    }

    pub fn depth(mut self, id: &str, value: f64) -> Self {
        self.depth.insert(id.into(), value);
        self
    }

    pub fn build(self) -> Result<Scene, SceneError> {
        Scene::new(self.image_id, self.width, self.height, self.detections, self.similarity, self.depth)
    }
}
