use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::provider::{ProviderError, RepairRequest, RewriteProvider};
use super::text::NarrativeDocument;
use super::{AmbiguityInstance, AmbiguityReport};
use crate::exec::{self, Execution};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub ambiguity_id: String,
    /// Span of the segment being replaced; the whole excerpt when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_excerpt: Option<String>,
    pub revised_excerpt: String,
    pub rationale: String,
    pub evidence_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_interpretation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRepair {
    pub ambiguity_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub accepted: Vec<RepairRecord>,
    pub rejected: Vec<RejectedRepair>,
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Checks a provider record against its request; returns the reason for
/// rejection.
fn validate(rec: &RepairRecord, inst: &AmbiguityInstance, segment: &str, supplemental: &str) -> Result<(), String> {
    if rec.ambiguity_id != inst.ambiguity_id {
        return Err(format!("answers `{}` instead", rec.ambiguity_id));
    }
    if rec.rationale.trim().is_empty() {
        return Err("empty rationale".into());
    }
    if rec.evidence_refs.iter().all(|e| e.trim().is_empty()) {
        return Err("no evidence_refs".into());
    }
    if rec.revised_excerpt.trim().is_empty() {
        return Err("empty revised_excerpt".into());
    }
    let supp = squash(supplemental);
    if let Some(e) = rec.evidence_refs.iter().find(|e| !e.trim().is_empty() && !supp.contains(&squash(e))) {
        return Err(format!("evidence not found in supplemental material: {e:?}"));
    }
    if !segment.contains(&inst.excerpt) {
        return Err(format!("excerpt no longer matches segment {}", inst.segment_id));
    }
    if let Some(o) = &rec.original_excerpt {
        if o.is_empty() || !segment.contains(o.as_str()) {
            return Err(format!("original_excerpt is not a verbatim part of segment {}", inst.segment_id));
        }
    }
    Ok(())
}

/// Asks the provider for one repair per ambiguity and validates each
/// answer. Provider outages abort; bad answers are rejected per record.
pub fn propose_repairs(
    report: &AmbiguityReport,
    doc: &NarrativeDocument,
    supplemental: &NarrativeDocument,
    provider: &dyn RewriteProvider,
    execution: Execution,
) -> Result<RepairOutcome, ProviderError> {
    let excerpts: Vec<String> = supplemental.segments.iter().map(|s| s.text.clone()).collect();
    let answers = exec::map_ordered(execution, &report.ambiguities, |inst| {
        let segment = doc.segment(&inst.segment_id).map(|s| s.text.clone()).unwrap_or_default();
        let req = RepairRequest::new(inst.clone(), segment.clone(), excerpts.clone());
        (provider.propose(&req), segment)
    });
    let mut out = RepairOutcome { accepted: Vec::new(), rejected: Vec::new() };
    for (inst, (answer, segment)) in report.ambiguities.iter().zip(answers) {
        let reject = |reason: String| RejectedRepair { ambiguity_id: inst.ambiguity_id.clone(), reason };
        match answer {
            Err(ProviderError::Malformed { detail, .. }) => out.rejected.push(reject(detail)),
            Err(e @ ProviderError::Unavailable(_)) => return Err(e),
            Ok(rec) => match validate(&rec, inst, &segment, &supplemental.text) {
                Ok(()) => out.accepted.push(rec),
                Err(reason) => out.rejected.push(reject(reason)),
            },
        }
    }
    Ok(out)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RepairError {
    #[error("repair for unknown ambiguity `{0}`")]
    UnknownAmbiguity(String),
    #[error("more than one repair for `{0}`")]
    DuplicateRepair(String),
    #[error("segment `{segment_id}` for {ambiguity_id} is not in the document")]
    SegmentMissing { ambiguity_id: String, segment_id: String },
    #[error("excerpt for {0} not found in its segment; the report is stale")]
    ExcerptNotFound(String),
    #[error("repairs for {0} and {1} overlap")]
    Overlap(String, String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairTrace {
    pub ambiguity_id: String,
    pub segment_id: String,
    /// Byte range replaced, in the original text.
    pub range: Range<usize>,
    pub original_excerpt: String,
    pub revised_excerpt: String,
    pub rationale: String,
    pub evidence_refs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairedNarrative {
    pub doc_id: String,
    pub text: String,
    /// In document order.
    pub trace: Vec<RepairTrace>,
}

/// Replaces each anchored excerpt with its revision. Bytes outside the
/// replaced spans are copied unchanged.
pub fn reconstruct_narrative(
    doc: &NarrativeDocument,
    repairs: &[RepairRecord],
    instances: &[AmbiguityInstance],
) -> Result<RepairedNarrative, RepairError> {
    let by_id: BTreeMap<&str, &AmbiguityInstance> = instances.iter().map(|i| (i.ambiguity_id.as_str(), i)).collect();
    let mut seen = BTreeMap::new();
    let mut trace = Vec::with_capacity(repairs.len());
    for rec in repairs {
        let id = rec.ambiguity_id.as_str();
        if seen.insert(id, ()).is_some() {
            return Err(RepairError::DuplicateRepair(id.to_string()));
        }
        let inst = by_id.get(id).ok_or_else(|| RepairError::UnknownAmbiguity(id.to_string()))?;
        let seg = doc.segment(&inst.segment_id).ok_or_else(|| RepairError::SegmentMissing {
            ambiguity_id: id.to_string(),
            segment_id: inst.segment_id.clone(),
        })?;
        let seg_text = &doc.text[seg.range.clone()];
        if !seg_text.contains(&inst.excerpt) {
            return Err(RepairError::ExcerptNotFound(id.to_string()));
        }
        let anchor = rec.original_excerpt.as_deref().unwrap_or(&inst.excerpt);
        let at = seg_text.find(anchor).ok_or_else(|| RepairError::ExcerptNotFound(id.to_string()))?;
        let start = seg.range.start + at;
        trace.push(RepairTrace {
            ambiguity_id: id.to_string(),
            segment_id: seg.id.clone(),
            range: start..start + anchor.len(),
            original_excerpt: anchor.to_string(),
            revised_excerpt: rec.revised_excerpt.clone(),
            rationale: rec.rationale.clone(),
            evidence_refs: rec.evidence_refs.clone(),
        });
    }
    trace.sort_by_key(|t| (t.range.start, t.range.end));
    for w in trace.windows(2) {
        if w[0].range.end > w[1].range.start {
            return Err(RepairError::Overlap(w[0].ambiguity_id.clone(), w[1].ambiguity_id.clone()));
        }
    }
    let mut text = doc.text.clone();
    for t in trace.iter().rev() {
        text.replace_range(t.range.clone(), &t.revised_excerpt);
    }
    Ok(RepairedNarrative { doc_id: doc.doc_id.clone(), text, trace })
}

/// Serialized output of the repair step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    pub doc_id: String,
    pub provider: String,
    pub repairs: Vec<RepairRecord>,
    pub rejected: Vec<RejectedRepair>,
    pub trace: Vec<RepairTrace>,
    pub repaired_text: String,
}
