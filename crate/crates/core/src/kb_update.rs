//! Nightly knowledge-base growth from expert corrections.
//!
//! At the evening firing every correction completed since the previous
//! firing goes into a review sheet for the knowledge-base expert. Rows
//! they mark `Yes` are queued and appended to the expert-FAQ document at
//! the early-morning firing.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{LocalZone, Timestamp};
use crate::knowledge::FaqEntry;

pub const REVIEW_HEADER: [&str; 7] = [
    "row_id",
    "question",
    "bot_answer",
    "expert_correction",
    "merged_final_answer",
    "should_update",
    "final_answer_for_kb",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ShouldUpdate {
    Yes,
    No,
    #[default]
    Unset,
}

impl TryFrom<String> for ShouldUpdate {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" => Ok(Self::Yes),
            "no" | "n" => Ok(Self::No),
            "" => Ok(Self::Unset),
            other => Err(format!("should_update must be Yes, No or empty, got {other:?}")),
        }
    }
}

impl From<ShouldUpdate> for String {
    fn from(s: ShouldUpdate) -> String {
        match s {
            ShouldUpdate::Yes => "Yes",
            ShouldUpdate::No => "No",
            ShouldUpdate::Unset => "",
        }
        .to_owned()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub row_id: String,
    pub question: String,
    pub bot_answer: String,
    pub expert_correction: String,
    pub merged_final_answer: String,
    pub should_update: ShouldUpdate,
    pub final_answer_for_kb: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KbError {
    #[error("review sheet: {0}")]
    Csv(String),
    #[error("review sheet header must be {expected:?}, got {got:?}")]
    Header { expected: String, got: String },
    #[error("row {0} was not part of any emitted digest")]
    UnknownRow(String),
    #[error("row {0} is marked Yes but has no final answer")]
    MissingFinalAnswer(String),
    #[error("row {0} appears more than once")]
    DuplicateRow(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbConfig {
    #[serde(with = "crate::clock::serde_time")]
    pub digest_time: NaiveTime,
    #[serde(with = "crate::clock::serde_time")]
    pub apply_time: NaiveTime,
}

impl Default for KbConfig {
    fn default() -> Self {
        Self {
            digest_time: NaiveTime::from_hms_opt(20, 0, 0).expect("valid time"),
            apply_time: NaiveTime::from_hms_opt(3, 0, 0).expect("valid time"),
        }
    }
}

/// Corrections covered by the digest of local `day`: from the previous
/// day's firing (inclusive) to this day's firing (exclusive). Corrections
/// made after the evening firing roll into the next day's sheet.
pub fn digest_window(zone: &LocalZone, day: NaiveDate, digest_time: NaiveTime) -> (Timestamp, Timestamp) {
    let end = zone.at(day, digest_time);
    (end - Duration::days(1), end)
}

pub fn write_csv(rows: &[ReviewRow]) -> Result<String, KbError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let err = |e: csv::Error| KbError::Csv(e.to_string());
    w.write_record(REVIEW_HEADER).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| KbError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| KbError::Csv(e.to_string()))
}

pub fn read_csv(text: &str) -> Result<Vec<ReviewRow>, KbError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| KbError::Csv(e.to_string()))?.clone();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != REVIEW_HEADER {
        return Err(KbError::Header {
            expected: REVIEW_HEADER.join(","),
            got: got.join(","),
        });
    }
    r.deserialize()
        .map(|row| row.map_err(|e: csv::Error| KbError::Csv(e.to_string())))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    /// Entries to append, keyed by row id.
    pub queued: BTreeMap<String, FaqEntry>,
    /// Rows marked No or left empty.
    pub dropped: Vec<String>,
    /// Rows whose entries were already applied on an earlier night.
    pub already_applied: Vec<String>,
}

/// Validate a reviewed sheet against the rows that were emitted. The whole
/// sheet is rejected on the first bad row.
pub fn validate_review(
    rows: &[ReviewRow],
    emitted: &BTreeMap<String, ReviewRow>,
    applied: &std::collections::BTreeSet<String>,
) -> Result<ReviewOutcome, KbError> {
    let mut out = ReviewOutcome::default();
    let mut seen = std::collections::BTreeSet::new();
    for row in rows {
        let id = row.row_id.trim().to_owned();
        let Some(original) = emitted.get(&id) else {
            return Err(KbError::UnknownRow(id));
        };
        if !seen.insert(id.clone()) {
            return Err(KbError::DuplicateRow(id));
        }
        match row.should_update {
            ShouldUpdate::Yes => {
                let answer = row.final_answer_for_kb.trim();
                if answer.is_empty() {
                    return Err(KbError::MissingFinalAnswer(id));
                }
                if applied.contains(&id) {
                    out.already_applied.push(id);
                    continue;
                }
                // the question column is informational; the emitted one is authoritative
                out.queued.insert(id, FaqEntry::new(original.question.trim(), answer));
            }
            ShouldUpdate::No | ShouldUpdate::Unset => {
                tracing::info!(row = %id, "review row not added to the knowledge base");
                out.dropped.push(id);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn row(id: &str, should: ShouldUpdate, kb: &str) -> ReviewRow {
        ReviewRow {
            row_id: id.into(),
            question: format!("question {id}?"),
            bot_answer: "bot".into(),
            expert_correction: "fix".into(),
            merged_final_answer: "merged".into(),
            should_update: should,
            final_answer_for_kb: kb.into(),
        }
    }

    fn emitted(ids: &[&str]) -> BTreeMap<String, ReviewRow> {
        ids.iter()
            .map(|i| (i.to_string(), row(i, ShouldUpdate::Unset, "merged")))
            .collect()
    }

    #[test]
    fn empty_sheet_is_header_only() {
        assert_eq!(
            write_csv(&[]).unwrap(),
            "row_id,question,bot_answer,expert_correction,merged_final_answer,should_update,final_answer_for_kb\n"
        );
    }

    #[test]
    fn csv_round_trip_with_commas_and_quotes() {
        let mut r = row("tsk_1", ShouldUpdate::Unset, "Yes, \"really\"\nsecond line");
        r.question = "How many days after surgery can I wash my hair?".into();
        let text = write_csv(&[r.clone()]).unwrap();
        assert_eq!(read_csv(&text).unwrap(), vec![r]);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(read_csv("row_id,question\n"), Err(KbError::Header { .. })));
    }

    #[test]
    fn yes_rows_queued_others_dropped() {
        let rows = [
            row("a", ShouldUpdate::Yes, "one"),
            row("b", ShouldUpdate::Yes, "two"),
            row("c", ShouldUpdate::No, "three"),
        ];
        let out = validate_review(&rows, &emitted(&["a", "b", "c"]), &BTreeSet::new()).unwrap();
        assert_eq!(out.queued.len(), 2);
        assert_eq!(out.dropped, ["c"]);
    }

    #[test]
    fn edited_answer_wins() {
        let rows = [row("a", ShouldUpdate::Yes, "edited by the reviewer")];
        let out = validate_review(&rows, &emitted(&["a"]), &BTreeSet::new()).unwrap();
        assert_eq!(out.queued["a"].answer, "edited by the reviewer");
    }

    #[test]
    fn guards() {
        let e = emitted(&["a"]);
        assert_eq!(
            validate_review(&[row("a", ShouldUpdate::Yes, " ")], &e, &BTreeSet::new()),
            Err(KbError::MissingFinalAnswer("a".into()))
        );
        assert_eq!(
            validate_review(&[row("zz", ShouldUpdate::No, "")], &e, &BTreeSet::new()),
            Err(KbError::UnknownRow("zz".into()))
        );
    }

    #[test]
    fn window_covers_previous_evening() {
        let zone = LocalZone::parse("+05:30").unwrap();
        let day = NaiveDate::from_ymd_opt(2024, 3, 5).unwrap();
        let (start, end) = digest_window(&zone, day, KbConfig::default().digest_time);
        assert_eq!(start.to_rfc3339(), "2024-03-04T14:30:00+00:00");
        assert_eq!(end.to_rfc3339(), "2024-03-05T14:30:00+00:00");
    }
}
