//! From diagnosed gateways back to the narrative text they were generated
//! from, and from there to evidence-backed rewrites.

mod provider;
mod repair;
mod text;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpmn::{GatewayView, ProcessModel};
use crate::diagnosis::OrientedDiagnosis;
use crate::distribution::{ConsistencyCategory, EmpiricalDistribution};

pub use provider::{
    CannedProvider, HttpProvider, HttpProviderConfig, ProviderError, RepairRequest, RewriteProvider, REPAIR_STEPS,
};
pub use repair::{
    propose_repairs, reconstruct_narrative, RejectedRepair, RepairError, RepairOutcome, RepairRecord, RepairReport,
    RepairTrace, RepairedNarrative,
};
pub use text::{overlap_score, tokens, NarrativeDocument, Segment, SegmentError, SegmentSpec};

pub const DEFAULT_LOCALIZATION_THRESHOLD: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayRole {
    Target,
    Reference,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayRef {
    pub role: GatewayRole,
    pub model_id: String,
    pub gateway_id: String,
    pub label: String,
}

/// One model's reading of an ambiguous decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpretation {
    pub model_id: String,
    pub gateway_id: Option<String>,
    pub reading: String,
    /// Canonical text of the gateway's branch conditions, document order.
    pub conditions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityInstance {
    pub ambiguity_id: String,
    pub gateways: Vec<GatewayRef>,
    pub segment_id: String,
    /// Verbatim text of the segment.
    pub excerpt: String,
    pub score: f64,
    pub interpretations: Vec<Interpretation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unlocalized {
    pub gateway_id: String,
    pub label: String,
    pub best_score: f64,
    pub best_segment: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub instances: Vec<AmbiguityInstance>,
    pub unlocalized: Vec<Unlocalized>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LocalizeError {
    #[error("gateway `{0}` is not in the target model")]
    UnknownGateway(String),
}

fn describe(m: &ProcessModel, g: &GatewayView) -> String {
    let target_label = |flow: &str| {
        m.flow(flow)
            .and_then(|f| m.node(&f.target))
            .map(|n| if n.label.is_empty() { n.id.clone() } else { n.label.clone() })
            .unwrap_or_default()
    };
    let mut parts: Vec<String> =
        g.branches.iter().map(|(f, c)| format!("to `{}` when {}", target_label(f), c.normalize())).collect();
    if let Some(d) = g.default_flow.as_ref().or(g.unconditioned.first()) {
        parts.push(format!("otherwise to `{}`", target_label(d)));
    }
    format!("`{}` routes {}", if g.label.is_empty() { &g.gateway_id } else { &g.label }, parts.join("; "))
}

fn interpretation(m: &ProcessModel, g: Option<&GatewayView>) -> Interpretation {
    match g {
        Some(g) => Interpretation {
            model_id: m.model_id.clone(),
            gateway_id: Some(g.gateway_id.clone()),
            reading: describe(m, g),
            conditions: g.branches.iter().map(|(_, c)| c.canonical()).collect(),
        },
        None => Interpretation {
            model_id: m.model_id.clone(),
            gateway_id: None,
            reading: "no corresponding decision".into(),
            conditions: Vec::new(),
        },
    }
}

/// Query tokens of a gateway: label words and condition variable parts.
fn gateway_tokens(g: &GatewayView) -> BTreeSet<String> {
    let mut text = g.label.clone();
    for (_, c) in &g.branches {
        for v in c.variables() {
            text.push(' ');
            text.push_str(&v);
        }
    }
    tokens(&text)
}

/// Reference gateway standing for `g`: same label (case-insensitive), then
/// same id, then the highest token overlap.
pub fn counterpart<'a>(g: &GatewayView, reference: &'a [GatewayView]) -> Option<&'a GatewayView> {
    let label = g.label.to_lowercase();
    if let Some(r) = reference.iter().find(|r| !label.is_empty() && r.label.to_lowercase() == label) {
        return Some(r);
    }
    if let Some(r) = reference.iter().find(|r| r.gateway_id == g.gateway_id) {
        return Some(r);
    }
    let q = gateway_tokens(g);
    let mut best: Option<(f64, &GatewayView)> = None;
    for r in reference {
        let s = text::jaccard(&q, &gateway_tokens(r));
        if s > 0.0 && best.is_none_or(|(b, _)| s > b) {
            best = Some((s, r));
        }
    }
    best.map(|(_, r)| r)
}

/// Gateways named by the minimum-cardinality diagnoses, sorted.
pub fn diagnosed_gateways(diag: &OrientedDiagnosis) -> BTreeSet<String> {
    let eff = diag.effective();
    let min = eff.iter().map(|d| d.cardinality).min().unwrap_or(0);
    eff.iter().filter(|d| d.cardinality == min).flat_map(|d| d.gateways.iter().cloned()).collect()
}

/// Maps each gateway to its best-scoring segment. Gateways landing in the
/// same segment share one instance; instances are numbered in document
/// order.
pub fn localize_ambiguity(
    gateways: &BTreeSet<String>,
    tgt_m: &ProcessModel,
    ref_m: &ProcessModel,
    doc: &NarrativeDocument,
    threshold: f64,
) -> Result<Localization, LocalizeError> {
    let tgt_views = tgt_m.gateways();
    let ref_views = ref_m.gateways();
    let seg_tokens: Vec<BTreeSet<String>> = doc.segments.iter().map(|s| tokens(&s.text)).collect();
    let mut by_segment: BTreeMap<usize, Vec<(&GatewayView, f64)>> = BTreeMap::new();
    let mut unlocalized = Vec::new();
    for gid in gateways {
        let g = tgt_views
            .iter()
            .find(|v| &v.gateway_id == gid)
            .ok_or_else(|| LocalizeError::UnknownGateway(gid.clone()))?;
        let q = gateway_tokens(g);
        let mut best: Option<(usize, (f64, f64))> = None;
        for (i, s) in seg_tokens.iter().enumerate() {
            let key = (overlap_score(&q, s), text::jaccard(&q, s));
            if best.is_none_or(|(_, b)| key.0 > b.0 || (key.0 == b.0 && key.1 > b.1)) {
                best = Some((i, key));
            }
        }
        match best {
            Some((i, (score, _))) if score >= threshold && score > 0.0 => {
                by_segment.entry(i).or_default().push((g, score))
            }
            _ => unlocalized.push(Unlocalized {
                gateway_id: g.gateway_id.clone(),
                label: g.label.clone(),
                best_score: best.map_or(0.0, |(_, (s, _))| s),
                best_segment: best.map(|(i, _)| doc.segments[i].id.clone()),
            }),
        }
    }
    let instances = by_segment
        .into_iter()
        .enumerate()
        .map(|(n, (seg, gs))| {
            let segment = &doc.segments[seg];
            let mut refs = Vec::new();
            let mut interpretations = Vec::new();
            let mut seen_ref = BTreeSet::new();
            for (g, _) in &gs {
                refs.push(GatewayRef {
                    role: GatewayRole::Target,
                    model_id: tgt_m.model_id.clone(),
                    gateway_id: g.gateway_id.clone(),
                    label: g.label.clone(),
                });
                interpretations.push(interpretation(tgt_m, Some(g)));
                let cp = counterpart(g, &ref_views);
                if let Some(r) = cp {
                    if !seen_ref.insert(r.gateway_id.clone()) {
                        continue;
                    }
                    refs.push(GatewayRef {
                        role: GatewayRole::Reference,
                        model_id: ref_m.model_id.clone(),
                        gateway_id: r.gateway_id.clone(),
                        label: r.label.clone(),
                    });
                }
                interpretations.push(interpretation(ref_m, cp));
            }
            AmbiguityInstance {
                ambiguity_id: format!("AMB-{}", n + 1),
                gateways: refs,
                segment_id: segment.id.clone(),
                excerpt: segment.text.clone(),
                score: gs.iter().map(|(_, s)| *s).fold(0.0, f64::max),
                interpretations,
            }
        })
        .collect();
    Ok(Localization { instances, unlocalized })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboSummary {
    pub kpis: String,
    pub count: usize,
    pub probability: rust_decimal::Decimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    pub h_norm: f64,
    pub category: ConsistencyCategory,
    pub models: usize,
    pub combos: Vec<ComboSummary>,
}

impl EntropySummary {
    pub fn new(d: &EmpiricalDistribution, h_norm: f64, category: ConsistencyCategory) -> Self {
        EntropySummary {
            h_norm,
            category,
            models: d.total,
            combos: d
                .combos
                .iter()
                .map(|c| ComboSummary { kpis: c.kpis.to_string(), count: c.count, probability: c.probability })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisSummary {
    pub reference: String,
    pub target: String,
    pub note: String,
    pub minimal_diagnoses: Vec<crate::diagnosis::Diagnosis>,
    pub refined_diagnoses: Vec<crate::diagnosis::Diagnosis>,
    pub gateway_labels: BTreeMap<String, String>,
}

impl From<&crate::diagnosis::DirectionReport> for DiagnosisSummary {
    fn from(r: &crate::diagnosis::DirectionReport) -> Self {
        DiagnosisSummary {
            reference: r.reference_model_id.clone(),
            target: r.target_model_id.clone(),
            note: r.note.clone(),
            minimal_diagnoses: r.chosen.minimal_diagnoses.clone(),
            refined_diagnoses: r.chosen.refined_diagnoses.clone(),
            gateway_labels: r.chosen.gateway_labels.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    AmbiguitiesFound,
    NoDivergence,
    NothingLocalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub doc_id: String,
    pub status: ReportStatus,
    pub note: Option<String>,
    pub entropy: Option<EntropySummary>,
    pub diagnosis: Option<DiagnosisSummary>,
    pub ambiguities: Vec<AmbiguityInstance>,
    pub unlocalized: Vec<Unlocalized>,
}

/// Assembles the report. `diagnosis` is `None` when the models never
/// diverged.
pub fn build_ambiguity_report(
    doc_id: &str,
    localization: Localization,
    entropy: Option<EntropySummary>,
    diagnosis: Option<DiagnosisSummary>,
) -> AmbiguityReport {
    let (status, note) = match (&diagnosis, localization.instances.is_empty()) {
        (None, _) => {
            (ReportStatus::NoDivergence, Some("the compared models produce identical KPI outputs".to_string()))
        }
        (Some(_), true) => (
            ReportStatus::NothingLocalized,
            Some("no diagnosed gateway matched a narrative segment above the threshold".to_string()),
        ),
        (Some(_), false) => (ReportStatus::AmbiguitiesFound, None),
    };
    AmbiguityReport {
        doc_id: doc_id.to_string(),
        status,
        note,
        entropy,
        diagnosis,
        ambiguities: localization.instances,
        unlocalized: localization.unlocalized,
    }
}

#[cfg(test)]
mod tests;
