//! Pre-written programs keyed by query, one JSON object per line:
//! `{"query": "red mug", "program": "B0 = FIND(...)\n..."}`.

use std::collections::BTreeMap;

use serde::Deserialize;
use vro_core::validator::{check_text, Diagnostic, ValidProgram};

#[derive(Debug, thiserror::Error)]
pub enum CannedError {
    #[error("line {line}: {detail}")]
    Schema { line: usize, detail: String },
    #[error("line {line}: query '{query}' appears more than once")]
    Duplicate { line: usize, query: String },
    #[error("line {line}: program for '{query}' is invalid: {}", summarize(.diagnostics))]
    Invalid { line: usize, query: String, diagnostics: Vec<Diagnostic> },
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("line {} [{}] {}", d.line, d.rule, d.message)).collect::<Vec<_>>().join("; ")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    query: String,
    program: String,
}

pub type CannedPrograms = BTreeMap<String, ValidProgram>;

/// Parses and validates every entry; the first bad line fails the load.
pub fn parse_canned(text: &str) -> Result<CannedPrograms, CannedError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let e: Entry = serde_json::from_str(raw).map_err(|e| CannedError::Schema { line, detail: e.to_string() })?;
        if out.contains_key(&e.query) {
            return Err(CannedError::Duplicate { line, query: e.query });
        }
        let program = check_text(&e.program).map_err(|diagnostics| CannedError::Invalid { line, query: e.query.clone(), diagnostics })?;
        out.insert(e.query, program);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(q: &str, p: &str) -> String {
        serde_json::json!({"query": q, "program": p}).to_string()
    }

    const OK: &str = "B0 = FIND(object_name='cat')\nFINAL_RESULT = RESULT(object=B0)";

    #[test]
    fn loads_valid_pairs() {
        let text = [entry("a", OK), entry("b", OK), String::new(), entry("c", OK)].join("\n");
        assert_eq!(parse_canned(&text).unwrap().len(), 3);
    }

    #[test]
    fn rejects_invalid_and_duplicate() {
        let bad = [entry("a", OK), entry("broken", "B0 = FIND(object_name='cat')")].join("\n");
        match parse_canned(&bad) {
            Err(CannedError::Invalid { query, line, .. }) => assert_eq!((query.as_str(), line), ("broken", 2)),
            other => panic!("{other:?}"),
        }
        let dup = [entry("a", OK), entry("a", OK)].join("\n");
        assert!(matches!(parse_canned(&dup), Err(CannedError::Duplicate { line: 2, .. })));
        assert!(matches!(parse_canned("{\"query\": 1}"), Err(CannedError::Schema { .. })));
    }
}
