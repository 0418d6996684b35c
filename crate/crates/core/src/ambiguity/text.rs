use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before", "both", "but",
    "by", "can", "do", "does", "each", "either", "for", "from", "has", "have", "if", "in", "into", "is", "it", "its",
    "may", "more", "must", "no", "not", "of", "on", "only", "or", "other", "per", "such", "than", "that", "the",
    "their", "then", "there", "these", "they", "this", "those", "through", "to", "under", "was", "were", "when",
    "where", "whether", "which", "who", "whom", "whose", "will", "with", "within", "without",
];

/// Lowercased alphanumeric runs, minus stopwords, pure numbers and single
/// characters. Underscores separate tokens.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() > 1 && !w.chars().all(|c| c.is_ascii_digit()))
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Share of query tokens found in the segment.
pub fn overlap_score(query: &BTreeSet<String>, segment: &BTreeSet<String>) -> f64 {
    if query.is_empty() {
        return 0.0;
    }
    query.intersection(segment).count() as f64 / query.len() as f64
}

pub(crate) fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    /// Byte range into the document text.
    pub range: Range<usize>,
    pub text: String,
}

/// Explicit segmentation, e.g. from a sidecar file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("segment `{id}` range {start}..{end} is out of bounds or not on a character boundary")]
    BadRange { id: String, start: usize, end: usize },
    #[error("segment `{0}` overlaps or precedes the previous segment")]
    Overlap(String),
    #[error("duplicate segment id `{0}`")]
    DuplicateId(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrativeDocument {
    pub doc_id: String,
    pub text: String,
    /// Ordered and non-overlapping.
    pub segments: Vec<Segment>,
}

impl NarrativeDocument {
    /// Splits on blank lines; segments are `P1`, `P2`, ... with surrounding
    /// whitespace trimmed.
    pub fn from_paragraphs(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let mut segments = Vec::new();
        let mut start: Option<usize> = None;
        let mut end = 0;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let body = line.trim_end_matches(['\n', '\r']);
            if body.trim().is_empty() {
                if let Some(s) = start.take() {
                    segments.push(s..end);
                }
            } else {
                let lead = body.len() - body.trim_start().len();
                start.get_or_insert(offset + lead);
                end = offset + body.trim_end().len();
            }
            offset += line.len();
        }
        if let Some(s) = start {
            segments.push(s..end);
        }
        let segments = segments
            .into_iter()
            .enumerate()
            .map(|(i, r)| Segment { id: format!("P{}", i + 1), text: text[r.clone()].to_string(), range: r })
            .collect();
        NarrativeDocument { doc_id: doc_id.into(), text, segments }
    }

    pub fn with_segments(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        specs: &[SegmentSpec],
    ) -> Result<Self, SegmentError> {
        let text = text.into();
        let mut segments: Vec<Segment> = Vec::with_capacity(specs.len());
        let mut ids = BTreeSet::new();
        for s in specs {
            if s.start > s.end || s.end > text.len() || !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end)
            {
                return Err(SegmentError::BadRange { id: s.id.clone(), start: s.start, end: s.end });
            }
            if !ids.insert(s.id.as_str()) {
                return Err(SegmentError::DuplicateId(s.id.clone()));
            }
            if segments.last().is_some_and(|p| p.range.end > s.start) {
                return Err(SegmentError::Overlap(s.id.clone()));
            }
            segments.push(Segment { id: s.id.clone(), range: s.start..s.end, text: text[s.start..s.end].to_string() });
        }
        Ok(NarrativeDocument { doc_id: doc_id.into(), text, segments })
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }
}
