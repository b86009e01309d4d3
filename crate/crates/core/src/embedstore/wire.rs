//! Two-file store format.
//!
//! `<base>.meta.jsonl`: line 0 is `{"dim","count","encoder_id"}`, lines
//! 1..=N are `{"text","direction","speaker","row"}`.
//! `<base>.vec`: contiguous little-endian f32, row-major, row `r` at byte
//! offset `r * dim * 4`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    l2_norm, Direction, EmbeddingKey, EmbeddingStore, EncodingMode, SpeakerToken, StoreBuilder,
    StoreError, NORM_REJECT, NORM_TOLERANCE,
};
use crate::io::atomic_write;

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    count: usize,
    encoder_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    created: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RowMeta {
    text: String,
    direction: Direction,
    speaker: SpeakerToken,
    row: usize,
}

/// Non-fatal findings from [`read_store`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadStats {
    /// Rows whose norm was off by more than 1e-5 but at most 1e-3.
    pub renormalized: usize,
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn meta_path(base: &Path) -> PathBuf {
    with_suffix(base, ".meta.jsonl")
}

pub fn vec_path(base: &Path) -> PathBuf {
    with_suffix(base, ".vec")
}

pub fn write_store(store: &EmbeddingStore, base: impl AsRef<Path>) -> Result<(), StoreError> {
    let base = base.as_ref();
    let mut meta = serde_json::to_string(&Header {
        dim: store.dim(),
        count: store.len(),
        encoder_id: store.encoder_id().to_string(),
        created: store.created().map(str::to_string),
    })
    .expect("header serializes");
    meta.push('\n');
    let mut vecs = Vec::with_capacity(store.len() * store.dim() * 4);
    for (row, (key, v)) in store.iter().enumerate() {
        let line = RowMeta {
            text: key.text.clone(),
            direction: key.mode.direction(),
            speaker: key.mode.speaker(),
            row,
        };
        meta.push_str(&serde_json::to_string(&line).expect("row serializes"));
        meta.push('\n');
        for x in v {
            vecs.extend_from_slice(&x.to_le_bytes());
        }
    }
    atomic_write(&vec_path(base), &vecs)?;
    atomic_write(&meta_path(base), meta.as_bytes())?;
    Ok(())
}

pub fn read_store(base: impl AsRef<Path>) -> Result<(EmbeddingStore, ReadStats), StoreError> {
    let base = base.as_ref();
    let meta = fs::read_to_string(meta_path(base))?;
    let vecs = fs::read(vec_path(base))?;
    let format = |msg: String| StoreError::Format(msg);

    let mut lines = meta.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| format("empty meta file".into()))?;
    let header: Header =
        serde_json::from_str(first).map_err(|e| format(format!("header: {e}")))?;
    if header.dim < 1 {
        return Err(format("dim must be positive".into()));
    }
    let row_bytes = header.dim * 4;
    if vecs.len() % row_bytes != 0 {
        return Err(format(format!(
            "vector file length {} is not a multiple of {row_bytes}",
            vecs.len()
        )));
    }
    let rows_on_disk = vecs.len() / row_bytes;
    if rows_on_disk != header.count {
        return Err(format(format!(
            "meta declares {} rows, vector file holds {rows_on_disk}",
            header.count
        )));
    }

    let mut records: Vec<Option<EmbeddingKey>> = vec![None; header.count];
    let mut listed = 0usize;
    for (i, line) in lines {
        let rm: RowMeta =
            serde_json::from_str(line).map_err(|e| format(format!("meta line {}: {e}", i + 1)))?;
        let mode = EncodingMode::new(rm.direction, rm.speaker).ok_or_else(|| {
            format(format!("meta line {}: speaker token on an [AFTER] row", i + 1))
        })?;
        let slot = records
            .get_mut(rm.row)
            .ok_or_else(|| format(format!("meta line {}: row {} out of range", i + 1, rm.row)))?;
        if slot.is_some() {
            return Err(format(format!("row {} listed twice", rm.row)));
        }
        *slot = Some(EmbeddingKey::new(rm.text, mode));
        listed += 1;
    }
    if listed != header.count {
        return Err(format(format!(
            "meta declares {} rows but lists {listed}",
            header.count
        )));
    }

    let mut builder = StoreBuilder::new(header.dim, header.encoder_id);
    if let Some(created) = header.created {
        builder = builder.created(created);
    }
    let mut stats = ReadStats::default();
    let mut row_buf = vec![0f32; header.dim];
    for (row, key) in records.into_iter().enumerate() {
        let key = key.expect("every row listed");
        let bytes = &vecs[row * row_bytes..(row + 1) * row_bytes];
        for (x, chunk) in row_buf.iter_mut().zip(bytes.chunks_exact(4)) {
            *x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
        let norm = l2_norm(&row_buf);
        let deviation = (norm - 1.0).abs();
        if !norm.is_finite() || deviation > NORM_REJECT {
            return Err(StoreError::NormError { row, norm });
        }
        if deviation > NORM_TOLERANCE {
            stats.renormalized += 1;
            for x in row_buf.iter_mut() {
                *x = (f64::from(*x) / norm) as f32;
            }
        }
        builder.push_unchecked(key, &row_buf)?;
    }
    Ok((builder.build(), stats))
}

#[derive(Serialize, Deserialize)]
struct RequestLine {
    text: String,
    direction: Direction,
    speaker: SpeakerToken,
}

/// One `{"text","direction","speaker"}` line per key, in the given order.
pub fn render_requests<'a>(keys: impl IntoIterator<Item = &'a EmbeddingKey>) -> String {
    let mut out = String::new();
    for k in keys {
        let line = RequestLine {
            text: k.text.clone(),
            direction: k.mode.direction(),
            speaker: k.mode.speaker(),
        };
        out.push_str(&serde_json::to_string(&line).expect("request serializes"));
        out.push('\n');
    }
    out
}

/// Parse a request file. `_meta` lines are skipped; repeated keys are kept
/// once, in first-seen order.
pub fn parse_requests(raw: &str) -> Result<Vec<EmbeddingKey>, StoreError> {
    let mut seen = std::collections::HashSet::new();
    let mut keys = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| StoreError::Format(format!("request line {}: {e}", i + 1)))?;
        if value.get("_meta").is_some() {
            continue;
        }
        let r: RequestLine = serde_json::from_value(value)
            .map_err(|e| StoreError::Format(format!("request line {}: {e}", i + 1)))?;
        let mode = EncodingMode::new(r.direction, r.speaker).ok_or_else(|| {
            StoreError::Format(format!("request line {}: speaker token on an [AFTER] request", i + 1))
        })?;
        let key = EmbeddingKey::new(r.text, mode);
        if seen.insert(key.clone()) {
            keys.push(key);
        }
    }
    Ok(keys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedstore::{mock_encode, MockEncoder};

    fn sample_store() -> EmbeddingStore {
        let enc = MockEncoder::new(4, 11).unwrap();
        let keys = [
            EmbeddingKey::new("hi", EncodingMode::BEFORE),
            EmbeddingKey::new("hi", EncodingMode::AFTER),
            EmbeddingKey::new("bye", EncodingMode::before(SpeakerToken::E)),
        ];
        EmbeddingStore::encode_all(&enc, keys.iter()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("s");
        let store = sample_store();
        write_store(&store, &base).unwrap();
        assert_eq!(fs::metadata(vec_path(&base)).unwrap().len(), 48);
        let (back, stats) = read_store(&base).unwrap();
        assert_eq!(stats, ReadStats::default());
        assert_eq!(back, store);
        let meta = fs::read_to_string(meta_path(&base)).unwrap();
        assert!(meta.starts_with(r#"{"dim":4,"count":3,"encoder_id":"mock-d4-s11"}"#));
        assert!(meta.contains(r#"{"text":"bye","direction":"before","speaker":"E","row":2}"#));
    }

    #[test]
    fn count_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("s");
        write_store(&sample_store(), &base).unwrap();
        let mut v = fs::read(vec_path(&base)).unwrap();
        v.truncate(32);
        fs::write(vec_path(&base), v).unwrap();
        assert!(matches!(read_store(&base), Err(StoreError::Format(_))));
    }

    fn write_raw(base: &Path, rows: &[Vec<f32>]) {
        let mut meta = format!(r#"{{"dim":{},"count":{},"encoder_id":"raw"}}"#, rows[0].len(), rows.len());
        meta.push('\n');
        let mut bytes = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            meta.push_str(&format!(r#"{{"text":"t{i}","direction":"after","speaker":"none","row":{i}}}"#));
            meta.push('\n');
            bytes.extend(r.iter().flat_map(|x| x.to_le_bytes()));
        }
        fs::write(meta_path(base), meta).unwrap();
        fs::write(vec_path(base), bytes).unwrap();
    }

    #[test]
    fn norm_policy() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("s");

        write_raw(&base, &[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(read_store(&base), Err(StoreError::NormError { row: 1, .. })));

        write_raw(&base, &[vec![1.0005, 0.0], vec![0.0, 1.0]]);
        let (s, stats) = read_store(&base).unwrap();
        assert_eq!(stats.renormalized, 1);
        assert!((l2_norm(s.row(0)) - 1.0).abs() < 1e-6);

        write_raw(&base, &[vec![1.01, 0.0]]);
        assert!(matches!(read_store(&base), Err(StoreError::NormError { row: 0, .. })));
    }

    #[test]
    fn duplicate_and_bad_mode_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("s");
        let v = mock_encode("x", EncodingMode::AFTER, 2, 0).unwrap();
        let bytes: Vec<u8> = v.iter().chain(v.iter()).flat_map(|x| x.to_le_bytes()).collect();
        fs::write(vec_path(&base), &bytes).unwrap();
        fs::write(
            meta_path(&base),
            "{\"dim\":2,\"count\":2,\"encoder_id\":\"x\"}\n\
             {\"text\":\"a\",\"direction\":\"after\",\"speaker\":\"none\",\"row\":0}\n\
             {\"text\":\"a\",\"direction\":\"after\",\"speaker\":\"none\",\"row\":1}\n",
        )
        .unwrap();
        assert!(matches!(read_store(&base), Err(StoreError::DuplicateKey(_))));

        fs::write(
            meta_path(&base),
            "{\"dim\":2,\"count\":2,\"encoder_id\":\"x\"}\n\
             {\"text\":\"a\",\"direction\":\"after\",\"speaker\":\"E\",\"row\":0}\n\
             {\"text\":\"b\",\"direction\":\"after\",\"speaker\":\"none\",\"row\":1}\n",
        )
        .unwrap();
        assert!(matches!(read_store(&base), Err(StoreError::Format(_))));
    }

    #[test]
    fn requests_round_trip() {
        let keys = [
            EmbeddingKey::new("hi", EncodingMode::before(SpeakerToken::O)),
            EmbeddingKey::new("hi", EncodingMode::AFTER),
        ];
        let raw = render_requests(&keys);
        assert_eq!(
            raw.lines().next().unwrap(),
            r#"{"text":"hi","direction":"before","speaker":"O"}"#
        );
        let doubled = format!("{{\"_meta\":{{}}}}\n{raw}{raw}");
        assert_eq!(parse_requests(&doubled).unwrap(), keys);
        assert!(matches!(
            parse_requests(r#"{"text":"x","direction":"after","speaker":"E"}"#),
            Err(StoreError::Format(_))
        ));
        assert!(parse_requests("").unwrap().is_empty());
    }
}
