//! Dataset loading and subsampling.
//!
//! Datasets are JSONL: one question object per line with required `input`
//! and `output` fields, optional `instruction`, `data_source`, and `id`.
//! Rows missing required fields are skipped and counted rather than
//! aborting the load; rows without an `id` get their 1-based line number,
//! zero-padded so ids sort in file order.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::{rng_for, shuffle};
use crate::types::Question;

/// A loaded dataset plus load accounting.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub questions: Vec<Question>,
    pub source_path: String,
    /// Rows dropped for being malformed or missing required fields.
    pub skipped_rows: u32,
}

#[derive(Deserialize)]
struct RawRow {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    input: Option<String>,
    #[serde(default)]
    output: Option<String>,
    #[serde(default)]
    instruction: Option<String>,
    #[serde(default)]
    data_source: Option<String>,
}

/// Loads a JSONL dataset, skipping and counting bad rows. Fails when the
/// file is unreadable, when no valid rows remain, or when two rows share
/// an id.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))?;

    let mut questions = Vec::new();
    let mut skipped = 0u32;

    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: RawRow = match serde_json::from_str(line) {
            Ok(row) => row,
            Err(e) => {
                log::warn!(
                    "{}:{}: skipping malformed row: {e}",
                    path.display(),
                    line_no + 1
                );
                skipped += 1;
                continue;
            }
        };
        let input = row.input.unwrap_or_default();
        let output = row.output.unwrap_or_default();
        if input.trim().is_empty() || output.trim().is_empty() {
            log::warn!(
                "{}:{}: skipping row with missing input or output",
                path.display(),
                line_no + 1
            );
            skipped += 1;
            continue;
        }
        let id = match row.id {
            Some(id) if !id.trim().is_empty() => id,
            _ => format!("{:06}", line_no + 1),
        };
        questions.push(Question {
            id,
            input,
            instruction: row.instruction.filter(|s| !s.trim().is_empty()),
            expected_output: output,
            data_source: row.data_source,
        });
    }

    if questions.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: no valid questions ({skipped} rows skipped)",
            path.display()
        )));
    }

    let mut seen = std::collections::BTreeSet::new();
    for q in &questions {
        if !seen.insert(q.id.as_str()) {
            return Err(Error::Dataset(format!(
                "{}: duplicate question id {:?}",
                path.display(),
                q.id
            )));
        }
    }

    Ok(Dataset {
        questions,
        source_path: path.display().to_string(),
        skipped_rows: skipped,
    })
}

/// Selects `limit` questions by a seeded shuffle of the whole dataset
/// followed by truncation. The selection depends only on (seed, limit, and
/// the questions' order in the file), so repeated runs agree.
pub fn subsample(dataset: &Dataset, limit: usize, seed: u64) -> Dataset {
    let mut questions = dataset.questions.clone();
    shuffle(&mut rng_for(seed, &["subsample"]), &mut questions);
    questions.truncate(limit.min(dataset.questions.len()));
    Dataset {
        questions,
        source_path: dataset.source_path.clone(),
        skipped_rows: dataset.skipped_rows,
    }
}
