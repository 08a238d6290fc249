use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use super::CaptionRecord;

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate record id {id:?}")]
    DuplicateId { line: usize, id: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    #[serde(default)]
    record_id: Option<String>,
    prompt: String,
    caption: String,
    #[serde(rename = "match")]
    matched: bool,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    image_ref: Option<String>,
}

pub fn import_records(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>, RecordError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_records(&text)
}

/// Parses one JSON record per line. Blank lines are skipped; a record
/// without `record_id` gets its 1-based line number.
pub fn parse_records(text: &str) -> Result<Vec<CaptionRecord>, RecordError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| RecordError::Malformed {
            line: line_no,
            message,
        };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if raw.prompt.trim().is_empty() {
            return Err(malformed("prompt is empty".into()));
        }
        if let Some(score) = raw.score {
            if !(0.0..=1.0).contains(&score) {
                return Err(malformed(format!("score {score} outside [0, 1]")));
            }
        }
        let record_id = raw.record_id.unwrap_or_else(|| line_no.to_string());
        if !seen.insert(record_id.clone()) {
            return Err(RecordError::DuplicateId {
                line: line_no,
                id: record_id,
            });
        }
        records.push(CaptionRecord {
            record_id,
            prompt: raw.prompt,
            caption: raw.caption,
            matched: raw.matched,
            score: raw.score,
            image_ref: raw.image_ref,
        });
    }
    Ok(records)
}

/// One compact JSON object per line, newline-terminated.
pub fn export_records(records: &[CaptionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}
