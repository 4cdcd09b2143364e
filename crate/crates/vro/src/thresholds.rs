//! Calibration inputs and outputs.
//!
//! Auxiliary scores: `{"label": [score, ...], ...}`, each score in `[0, 1]`.
//!
//! Threshold table (`vro-thresholds/1`):
//! `{"schema": "vro-thresholds/1", "k": 10, "aux_dataset_id": "...", "n": 50,
//!   "thresholds": {"label": 0.83}}`

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use vro_core::verify::{calibrate_threshold, Provenance, ThresholdTable};

pub const THRESHOLD_SCHEMA: &str = "vro-thresholds/1";

#[derive(Debug, thiserror::Error)]
pub enum ThresholdError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("label '{label}': {detail}")]
    Label { label: String, detail: String },
}

pub type AuxScores = BTreeMap<String, Vec<f64>>;

pub fn parse_aux_scores(bytes: &[u8]) -> Result<AuxScores, ThresholdError> {
    serde_json::from_slice(bytes).map_err(|e| ThresholdError::Schema(e.to_string()))
}

/// One threshold per label: the `⌈k·n/100⌉`-th largest of its scores.
pub fn calibrate(aux: &AuxScores, k_percent: f64, aux_dataset_id: &str) -> Result<ThresholdTable, ThresholdError> {
    let n = aux.values().map(Vec::len).sum();
    let mut table = ThresholdTable::new(Provenance { aux_dataset_id: aux_dataset_id.into(), n, k: k_percent });
    for (label, scores) in aux {
        let err = |e: vro_core::verify::VerifyError| ThresholdError::Label { label: label.clone(), detail: e.to_string() };
        let delta = calibrate_threshold(scores, k_percent).map_err(err)?;
        table.insert(label.clone(), delta).map_err(err)?;
    }
    Ok(table)
}

#[derive(Debug, Serialize, Deserialize)]
struct RawTable {
    schema: String,
    k: f64,
    aux_dataset_id: String,
    #[serde(default)]
    n: usize,
    thresholds: BTreeMap<String, f64>,
}

pub fn parse_threshold_table(bytes: &[u8]) -> Result<ThresholdTable, ThresholdError> {
    let raw: RawTable = serde_json::from_slice(bytes).map_err(|e| ThresholdError::Schema(e.to_string()))?;
    if raw.schema != THRESHOLD_SCHEMA {
        return Err(ThresholdError::Schema(format!("expected schema '{THRESHOLD_SCHEMA}', found '{}'", raw.schema)));
    }
    let mut table = ThresholdTable::new(Provenance { aux_dataset_id: raw.aux_dataset_id, n: raw.n, k: raw.k });
    for (label, delta) in raw.thresholds {
        table
            .insert(label.clone(), delta)
            .map_err(|e| ThresholdError::Label { label, detail: e.to_string() })?;
    }
    Ok(table)
}

pub fn save_threshold_table(table: &ThresholdTable) -> Vec<u8> {
    let raw = RawTable {
        schema: THRESHOLD_SCHEMA.into(),
        k: table.provenance.k,
        aux_dataset_id: table.provenance.aux_dataset_id.clone(),
        n: table.provenance.n,
        thresholds: table.thresholds().clone(),
    };
    let mut out = serde_json::to_vec_pretty(&raw).expect("table serializes");
    out.push(b'\n');
    out
}
