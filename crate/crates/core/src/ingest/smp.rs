//! Similar Music Pair (SMP) ground-truth manifests, CSV or JSON.
//!
//! Columns: `original_id, comparison_id, relation, original_times_s,
//! comparison_times_s, pair_no`. In CSV the time lists are written as
//! `"[73, 82, 134]"` (brackets optional, `,` `;` or whitespace separated).

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Remake,
    PlagiarismCase,
    Influence,
    Coincidental,
    Other,
}

impl Relation {
    /// Maps a free-text relation label; unknown labels become `Other`.
    pub fn parse_lenient(label: &str) -> Relation {
        let norm: String = label
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        match norm.as_str() {
            "remake" | "remix" | "cover" => Relation::Remake,
            "plagiarism_case" | "plagiarism" => Relation::PlagiarismCase,
            "influence" => Relation::Influence,
            "coincidental" | "coincidence" => Relation::Coincidental,
            "other" => Relation::Other,
            _ => {
                warn!("unknown SMP relation {label:?}, mapped to other");
                Relation::Other
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmpPair {
    pub original_id: String,
    pub comparison_id: String,
    pub relation: Relation,
    pub original_times_s: Vec<f64>,
    pub comparison_times_s: Vec<f64>,
    pub pair_no: i64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TimeList {
    Numbers(Vec<f64>),
    Text(String),
}

#[derive(Deserialize)]
struct Row {
    original_id: String,
    comparison_id: String,
    relation: String,
    original_times_s: TimeList,
    comparison_times_s: TimeList,
    pair_no: i64,
}

fn parse_time_text(text: &str, row: usize, column: &str) -> Result<Vec<f64>, IngestError> {
    text.trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| IngestError::Schema(format!("row {row}: bad time {tok:?} in {column}")))
        })
        .collect()
}

fn times(list: TimeList, row: usize, column: &str) -> Result<Vec<f64>, IngestError> {
    let values = match list {
        TimeList::Numbers(v) => v,
        TimeList::Text(t) => parse_time_text(&t, row, column)?,
    };
    if values.is_empty() {
        return Err(IngestError::Validation(format!("row {row}: {column} is empty")));
    }
    if values.iter().any(|t| !t.is_finite()) || values.windows(2).any(|w| w[1] < w[0]) {
        return Err(IngestError::Validation(format!("row {row}: {column} is not ascending")));
    }
    Ok(values)
}

fn convert(row: Row, idx: usize) -> Result<SmpPair, IngestError> {
    Ok(SmpPair {
        relation: Relation::parse_lenient(&row.relation),
        original_times_s: times(row.original_times_s, idx, "original_times_s")?,
        comparison_times_s: times(row.comparison_times_s, idx, "comparison_times_s")?,
        original_id: row.original_id,
        comparison_id: row.comparison_id,
        pair_no: row.pair_no,
    })
}

/// Parses a manifest document. JSON is detected by a leading `[`/`{`
/// (an object must carry a `pairs` array); anything else is read as CSV.
pub fn load_smp_manifest(document: &str) -> Result<Vec<SmpPair>, IngestError> {
    let trimmed = document.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<Row> = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Doc {
            List(Vec<Row>),
            Wrapped { pairs: Vec<Row> },
        }
        match serde_json::from_str::<Doc>(trimmed) {
            Ok(Doc::List(rows)) | Ok(Doc::Wrapped { pairs: rows }) => rows,
            Err(e) => return Err(IngestError::Schema(format!("SMP manifest: {e}"))),
        }
    } else {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(trimmed.as_bytes());
        reader
            .deserialize()
            .collect::<Result<Vec<Row>, _>>()
            .map_err(|e| IngestError::Schema(format!("SMP manifest: {e}")))?
    };
    rows.into_iter().enumerate().map(|(i, r)| convert(r, i)).collect()
}

pub fn load_smp_manifest_file(path: &Path) -> Result<Vec<SmpPair>, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    load_smp_manifest(&text)
}
