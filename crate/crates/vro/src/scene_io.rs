//! `vro-scene/1` JSON scene files.
//!
//! ```json
//! {"schema": "vro-scene/1", "image_id": "img1", "width": 640, "height": 480,
//!  "detections": {"dog": [{"id": "d0", "box": [100, 120, 40, 30], "score": 0.8}]},
//!  "similarity": [{"id": "d0", "text": "dog", "sim": 0.31}],
//!  "depth": [{"id": "d0", "value": 2.5}]}
//! ```
//!
//! Boxes are `[center_x, center_y, width, height]` in pixels. `similarity`
//! and `depth` may be omitted. Unknown top-level fields are kept in
//! [`SceneDoc::extra`] and written back on save.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vro_core::scene::{BBox, Proposal, Scene, SceneError};

pub const SCENE_SCHEMA: &str = "vro-scene/1";

#[derive(Debug, thiserror::Error)]
pub enum SceneIoError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    /// Malformed JSON, missing fields, wrong types, out-of-range values.
    #[error("schema error: {0}")]
    Schema(String),
    /// References to unknown proposals, duplicate ids or entries.
    #[error("consistency error: {0}")]
    Consistency(String),
}

impl From<SceneError> for SceneIoError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::InvalidValue { .. } => SceneIoError::Schema(e.to_string()),
            SceneError::DuplicateProposal(_) | SceneError::UnknownProposal { .. } => SceneIoError::Consistency(e.to_string()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawProposal {
    id: String,
    #[serde(rename = "box")]
    bbox: BBox,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSimilarity {
    id: String,
    text: String,
    sim: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDepth {
    id: String,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawScene {
    schema: String,
    image_id: String,
    width: f64,
    height: f64,
    detections: BTreeMap<String, Vec<RawProposal>>,
    #[serde(default)]
    similarity: Vec<RawSimilarity>,
    #[serde(default)]
    depth: Vec<RawDepth>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

/// A scene plus the unrecognized top-level fields of its file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDoc {
    pub scene: Scene,
    pub extra: BTreeMap<String, Value>,
}

pub fn parse_scene_doc(bytes: &[u8]) -> Result<SceneDoc, SceneIoError> {
    let raw: RawScene = serde_json::from_slice(bytes).map_err(|e| SceneIoError::Schema(e.to_string()))?;
    if raw.schema != SCENE_SCHEMA {
        return Err(SceneIoError::Schema(format!("expected schema '{SCENE_SCHEMA}', found '{}'", raw.schema)));
    }
    let detections = raw
        .detections
        .into_iter()
        .map(|(label, props)| {
            let props = props
                .into_iter()
                .map(|p| Proposal { id: p.id, bbox: p.bbox, score: p.score, source_label: label.clone() })
                .collect();
            (label, props)
        })
        .collect();
    let mut similarity: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for s in raw.similarity {
        if similarity.entry(s.id.clone()).or_default().insert(s.text.clone(), s.sim).is_some() {
            return Err(SceneIoError::Consistency(format!("duplicate similarity entry for ('{}', '{}')", s.id, s.text)));
        }
    }
    let mut depth = BTreeMap::new();
    for d in raw.depth {
        if depth.insert(d.id.clone(), d.value).is_some() {
            return Err(SceneIoError::Consistency(format!("duplicate depth entry for '{}'", d.id)));
        }
    }
    let scene = Scene::new(raw.image_id, raw.width, raw.height, detections, similarity, depth)?;
    Ok(SceneDoc { scene, extra: raw.extra })
}

pub fn parse_scene(bytes: &[u8]) -> Result<Scene, SceneIoError> {
    parse_scene_doc(bytes).map(|d| d.scene)
}

pub fn load_scene(path: &Path) -> Result<Scene, SceneIoError> {
    let bytes = std::fs::read(path).map_err(|source| SceneIoError::Io { path: path.display().to_string(), source })?;
    parse_scene(&bytes)
}

/// Canonical form: keys and entries sorted, detections best first, two-space
/// indentation, trailing newline. Equal scenes give identical bytes.
pub fn save_scene_doc(doc: &SceneDoc) -> Vec<u8> {
    let s = &doc.scene;
    let raw = RawScene {
        schema: SCENE_SCHEMA.into(),
        image_id: s.image_id().into(),
        width: s.width(),
        height: s.height(),
        detections: s
            .detections()
            .iter()
            .map(|(label, props)| {
                let props = props.iter().map(|p| RawProposal { id: p.id.clone(), bbox: p.bbox, score: p.score }).collect();
                (label.clone(), props)
            })
            .collect(),
        similarity: s
            .similarity_table()
            .iter()
            .flat_map(|(id, row)| row.iter().map(move |(text, &sim)| RawSimilarity { id: id.clone(), text: text.clone(), sim }))
            .collect(),
        depth: s.depth_table().iter().map(|(id, &value)| RawDepth { id: id.clone(), value }).collect(),
        extra: doc.extra.clone(),
    };
    // through Value so every object, including flattened extras, is key-sorted
    let value = serde_json::to_value(&raw).expect("scene serializes");
    let mut out = serde_json::to_vec_pretty(&value).expect("value serializes");
    out.push(b'\n');
    out
}

pub fn save_scene(scene: &Scene) -> Vec<u8> {
    save_scene_doc(&SceneDoc { scene: scene.clone(), extra: BTreeMap::new() })
}
