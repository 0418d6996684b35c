use std::collections::{BTreeMap, BTreeSet};

use super::hitting::Diagnosis;
use super::ConflictSet;
use crate::bpmn::ProcessModel;
use crate::condition::{ast_equal, Condition};
use crate::simulation::Trace;

/// Conditions on the flows a trace took at gateway `g`, or `None` if at
/// least one visit left through a default or unconditioned flow.
fn taken_conditions<'m>(m: &'m ProcessModel, t: &Trace, g: Option<&str>) -> Option<Vec<&'m Condition>> {
    let mut out = Vec::new();
    for d in t.decisions.iter().filter(|d| g.is_none_or(|g| d.gateway == g)) {
        match m.flow(&d.flow).and_then(|f| f.condition.as_ref()) {
            Some(c) => out.push(c),
            None if g.is_some() => return None,
            None => {}
        }
    }
    Some(out)
}

/// Whether target gateway `g` is explained away: in every supporting case,
/// each condition it took is AST-equal to a condition the reference took
/// somewhere on the same case.
fn explained(
    g: &str,
    cases: &BTreeSet<&str>,
    ref_m: &ProcessModel,
    tgt_m: &ProcessModel,
    ref_traces: &BTreeMap<&str, &Trace>,
    tgt_traces: &BTreeMap<&str, &Trace>,
) -> bool {
    !cases.is_empty()
        && cases.iter().all(|case| {
            let (Some(rt), Some(tt)) = (ref_traces.get(case), tgt_traces.get(case)) else {
                return false;
            };
            let Some(taken) = taken_conditions(tgt_m, tt, Some(g)) else {
                return false;
            };
            let exercised = taken_conditions(ref_m, rt, None).unwrap_or_default();
            !taken.is_empty() && taken.iter().all(|c| exercised.iter().any(|r| ast_equal(c, r)))
        })
}

/// Conflict gateways that [`explained`] clears.
pub fn explained_gateways(
    conflicts: &[ConflictSet],
    ref_m: &ProcessModel,
    tgt_m: &ProcessModel,
    ref_traces: &[Trace],
    tgt_traces: &[Trace],
) -> BTreeSet<String> {
    let (rt, tt) = (super::by_case(ref_traces), super::by_case(tgt_traces));
    let mut support: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for c in conflicts {
        for g in &c.gateways {
            support.entry(g.as_str()).or_default().extend(c.cases.iter().map(String::as_str));
        }
    }
    support
        .into_iter()
        .filter(|(g, cases)| explained(g, cases, ref_m, tgt_m, &rt, &tt))
        .map(|(g, _)| g.to_string())
        .collect()
}

/// Drops explained gateways from each diagnosis, then removes empty
/// diagnoses, duplicates and proper supersets.
pub fn refine_diagnoses(
    diagnoses: &[Diagnosis],
    conflicts: &[ConflictSet],
    ref_m: &ProcessModel,
    tgt_m: &ProcessModel,
    ref_traces: &[Trace],
    tgt_traces: &[Trace],
) -> Vec<Diagnosis> {
    let explained = explained_gateways(conflicts, ref_m, tgt_m, ref_traces, tgt_traces);
    let pruned: BTreeSet<Diagnosis> = diagnoses
        .iter()
        .map(|d| Diagnosis::new(d.gateways.difference(&explained).cloned().collect()))
        .filter(|d| d.cardinality > 0)
        .collect();
    let all: Vec<Diagnosis> = pruned.into_iter().collect();
    let mut out: Vec<Diagnosis> = all
        .iter()
        .filter(|d| !all.iter().any(|o| o.cardinality < d.cardinality && o.gateways.is_subset(&d.gateways)))
        .cloned()
        .collect();
    out.sort();
    out
}
