//! Dialogue corpora: loading, same-speaker merging, length filtering and
//! per-domain tail splits.
//!
//! Two input formats are understood. DailyDialog's native text format holds
//! one dialogue per line with utterances separated by `__eou__`; speakers
//! are assigned by strict alternation since the format carries no labels.
//! The canonical interchange format is JSONL, one dialogue object per line:
//!
//! ```text
//! {"id": "a", "turns": [{"speaker": 0, "text": "hi"}], "domain": "taxi"}
//! ```

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// DailyDialog's end-of-utterance separator.
pub const EOU: &str = "__eou__";

/// Default token limit for [`filter_long`].
pub const DEFAULT_MAX_TOKENS: usize = 200;

/// Default number of held-out dialogues per domain for [`split_tail_per_domain`].
pub const DEFAULT_TAIL_PER_DOMAIN: usize = 333;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus contains no dialogues")]
    EmptyCorpus,
    #[error("line {line}: malformed JSON: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("dialogue {0:?} has no domain tag")]
    MissingDomainTag(String),
    #[error("domain {domain:?} has {have} dialogues, need more than {need}")]
    DomainTooSmall {
        domain: String,
        have: usize,
        need: usize,
    },
}

impl CorpusError {
    /// 1-based line number for parse and schema failures.
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Parse { line, .. } | CorpusError::Schema { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    /// 0 or 1.
    pub speaker: u8,
    /// Position in the dialogue after merging.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Utterance>,
    pub domain: Option<String>,
}

impl Dialogue {
    /// Build a dialogue from `(speaker, text)` pairs, assigning indices.
    pub fn from_turns<S: Into<String>>(
        id: impl Into<String>,
        turns: impl IntoIterator<Item = (u8, S)>,
    ) -> Self {
        let turns = turns
            .into_iter()
            .enumerate()
            .map(|(index, (speaker, text))| Utterance {
                text: text.into(),
                speaker,
                index,
            })
            .collect();
        Dialogue {
            id: id.into(),
            turns,
            domain: None,
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn text(&self, index: usize) -> &str {
        &self.turns[index].text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub name: String,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, dialogues: Vec<Dialogue>) -> Self {
        Corpus {
            name: name.into(),
            dialogues,
        }
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    /// Serialize to the canonical JSONL format, one dialogue per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.dialogues {
            let line = WireDialogue {
                id: d.id.clone(),
                turns: d
                    .turns
                    .iter()
                    .map(|u| WireTurn {
                        speaker: i64::from(u.speaker),
                        text: u.text.clone(),
                    })
                    .collect(),
                domain: d.domain.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("dialogue serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct WireTurn {
    speaker: i64,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct WireDialogue {
    id: String,
    turns: Vec<WireTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
}

/// Parse DailyDialog's `__eou__`-separated format.
pub fn parse_dailydialog(raw: &str) -> Result<Corpus, CorpusError> {
    let mut dialogues = Vec::new();
    for line in raw.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let id = dialogues.len().to_string();
        let texts = line
            .split(EOU)
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .enumerate()
            .map(|(i, t)| ((i % 2) as u8, t.to_string()));
        let dialogue = Dialogue::from_turns(id, texts);
        if !dialogue.is_empty() {
            dialogues.push(dialogue);
        }
    }
    if dialogues.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(Corpus::new("dailydialog", dialogues))
}

/// Parse the canonical JSONL dialogue format. A `{"_meta": ...}` header
/// line is skipped.
pub fn parse_jsonl_dialogues(raw: &str) -> Result<Corpus, CorpusError> {
    let mut dialogues = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|source| {
            CorpusError::Parse {
                line: line_no,
                source,
            }
        })?;
        if value.get("_meta").is_some() {
            continue;
        }
        let wire: WireDialogue =
            serde_json::from_value(value).map_err(|e| CorpusError::Schema {
                line: line_no,
                reason: e.to_string(),
            })?;
        let schema = |reason: String| CorpusError::Schema {
            line: line_no,
            reason,
        };
        if wire.turns.is_empty() {
            return Err(schema(format!("dialogue {:?} has no turns", wire.id)));
        }
        let mut turns = Vec::with_capacity(wire.turns.len());
        for (index, t) in wire.turns.into_iter().enumerate() {
            let speaker = match t.speaker {
                0 => 0,
                1 => 1,
                other => return Err(schema(format!("speaker {other} not in {{0, 1}}"))),
            };
            if t.text.trim().is_empty() {
                return Err(schema(format!("turn {index} has empty text")));
            }
            turns.push(Utterance {
                text: t.text,
                speaker,
                index,
            });
        }
        if !seen.insert(wire.id.clone()) {
            return Err(schema(format!("duplicate dialogue id {:?}", wire.id)));
        }
        dialogues.push(Dialogue {
            id: wire.id,
            turns,
            domain: wire.domain,
        });
    }
    Ok(Corpus::new("jsonl", dialogues))
}

/// Concatenate runs of same-speaker turns with a single space.
pub fn merge_consecutive_turns(d: &Dialogue) -> Dialogue {
    let mut turns: Vec<Utterance> = Vec::with_capacity(d.turns.len());
    for u in &d.turns {
        match turns.last_mut() {
            Some(last) if last.speaker == u.speaker => {
                last.text.push(' ');
                last.text.push_str(&u.text);
            }
            _ => turns.push(Utterance {
                text: u.text.clone(),
                speaker: u.speaker,
                index: turns.len(),
            }),
        }
    }
    Dialogue {
        id: d.id.clone(),
        turns,
        domain: d.domain.clone(),
    }
}

pub fn merge_corpus(c: &Corpus) -> Corpus {
    Corpus::new(
        c.name.clone(),
        c.dialogues.iter().map(merge_consecutive_turns).collect(),
    )
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Drop every dialogue holding an utterance longer than `max_tokens`
/// whitespace-delimited tokens. Returns the kept corpus and the number of
/// dropped dialogues. `usize::MAX` disables the filter.
pub fn filter_long(c: &Corpus, max_tokens: usize) -> (Corpus, usize) {
    let before = c.dialogues.len();
    let kept: Vec<Dialogue> = c
        .dialogues
        .iter()
        .filter(|d| d.turns.iter().all(|u| token_count(&u.text) <= max_tokens))
        .cloned()
        .collect();
    let dropped = before - kept.len();
    (Corpus::new(c.name.clone(), kept), dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub max_tokens: usize,
    /// Apply the length filter before same-speaker merging.
    pub filter_before_merge: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            max_tokens: DEFAULT_MAX_TOKENS,
            filter_before_merge: false,
        }
    }
}

/// Merge same-speaker runs and drop over-long dialogues.
pub fn preprocess(c: &Corpus, opts: PreprocessOptions) -> (Corpus, usize) {
    if opts.filter_before_merge {
        let (filtered, dropped) = filter_long(c, opts.max_tokens);
        (merge_corpus(&filtered), dropped)
    } else {
        filter_long(&merge_corpus(c), opts.max_tokens)
    }
}

/// Hold out the last `n_per_domain` dialogues (file order) of every domain.
pub fn split_tail_per_domain(
    c: &Corpus,
    n_per_domain: usize,
) -> Result<(Corpus, Corpus), CorpusError> {
    if n_per_domain == 0 {
        return Ok((c.clone(), Corpus::new(c.name.clone(), Vec::new())));
    }
    let mut by_domain: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in c.dialogues.iter().enumerate() {
        let domain = d
            .domain
            .as_deref()
            .ok_or_else(|| CorpusError::MissingDomainTag(d.id.clone()))?;
        by_domain.entry(domain).or_default().push(i);
    }
    let mut held_out = vec![false; c.dialogues.len()];
    for (domain, members) in &by_domain {
        if members.len() <= n_per_domain {
            return Err(CorpusError::DomainTooSmall {
                domain: domain.to_string(),
                have: members.len(),
                need: n_per_domain,
            });
        }
        for &i in &members[members.len() - n_per_domain..] {
            held_out[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (d, out) in c.dialogues.iter().zip(held_out) {
        if out {
            test.push(d.clone());
        } else {
            train.push(d.clone());
        }
    }
    Ok((
        Corpus::new(format!("{}-train", c.name), train),
        Corpus::new(format!("{}-test", c.name), test),
    ))
}
