//! Externally generated STP candidate sets.
//!
//! One JSON object per line:
//! `{"dialogue_id": "...", "candidates": ["...", ...], "generator": {...}}`.
//! An optional `"h_l"` field scopes a line to one history length; lines
//! without it apply to every history length of that dialogue.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::EvalError;

#[derive(Deserialize)]
struct CandidateLine {
    dialogue_id: String,
    candidates: Vec<String>,
    #[serde(default)]
    h_l: Option<usize>,
    #[serde(default)]
    generator: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateIndex {
    sets: HashMap<(String, Option<usize>), Vec<String>>,
    generators: BTreeSet<String>,
}

impl CandidateIndex {
    pub fn insert(&mut self, dialogue_id: impl Into<String>, h_l: Option<usize>, candidates: Vec<String>) {
        self.sets.insert((dialogue_id.into(), h_l), candidates);
    }

    /// Candidates for a dialogue at history length `h_l`, preferring a
    /// length-scoped entry.
    pub fn get(&self, dialogue_id: &str, h_l: usize) -> Option<&[String]> {
        let key = |h| (dialogue_id.to_string(), h);
        self.sets
            .get(&key(Some(h_l)))
            .or_else(|| self.sets.get(&key(None)))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Distinct generator fingerprints (compact JSON) seen in the file.
    pub fn generators(&self) -> impl Iterator<Item = &str> {
        self.generators.iter().map(String::as_str)
    }
}

pub fn parse_candidates(raw: &str) -> Result<CandidateIndex, EvalError> {
    let mut index = CandidateIndex::default();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| EvalError::Candidates {
                line: i + 1,
                reason: e.to_string(),
            })?;
        if value.get("_meta").is_some() {
            continue;
        }
        let parsed: CandidateLine =
            serde_json::from_value(value).map_err(|e| EvalError::Candidates {
                line: i + 1,
                reason: e.to_string(),
            })?;
        if let Some(g) = parsed.generator {
            index.generators.insert(g.to_string());
        }
        index.insert(parsed.dialogue_id, parsed.h_l, parsed.candidates);
    }
    Ok(index)
}

pub fn load_candidates(path: &Path) -> Result<CandidateIndex, EvalError> {
    if !path.exists() {
        return Err(EvalError::CandidateFileMissing(path.to_path_buf()));
    }
    parse_candidates(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scoped_lookup_and_generators() {
        let raw = r#"{"dialogue_id":"a","candidates":["x","y"],"generator":{"name":"g","p":0.8,"t":0.8}}
{"dialogue_id":"a","h_l":5,"candidates":["z"]}
"#;
        let idx = parse_candidates(raw).unwrap();
        assert_eq!(idx.get("a", 2).unwrap(), ["x", "y"]);
        assert_eq!(idx.get("a", 5).unwrap(), ["z"]);
        assert!(idx.get("b", 2).is_none());
        assert_eq!(idx.generators().count(), 1);
    }

    #[test]
    fn malformed_and_missing() {
        assert!(matches!(
            parse_candidates("{\"dialogue_id\":\"a\"}"),
            Err(EvalError::Candidates { line: 1, .. })
        ));
        assert!(matches!(
            load_candidates(Path::new("/nonexistent/cands.jsonl")),
            Err(EvalError::CandidateFileMissing(_))
        ));
    }
}
