//! Localizing behavioral differences between two models to target gateways.
//!
//! Both models run on the same cases. Cases whose activity-level KPI outputs
//! differ are aligned pairwise; the first point of divergence bounds a
//! window on the target trace, and the gateways inside that window form a
//! conflict set. Minimal hitting sets of the conflict family are the
//! candidate diagnoses, which are then pruned of gateways whose exercised
//! conditions the reference also exercised on the same cases.
//!
//! Elements are matched across models by label, never by id.

mod hitting;
mod refine;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpmn::{NodeKind, ProcessModel};
use crate::case::CaseRecord;
use crate::exec;
use crate::simulation::{simulate_population, CaseFailure, KpiConfig, KpiSequence, PopulationRun, SimOptions, Trace};

pub use hitting::{minimal_hitting_sets, Diagnosis, HittingSets, DEFAULT_CARDINALITY_CAP};
pub use refine::{explained_gateways, refine_diagnoses};

pub const ORIENTATION_NOTE: &str =
    "Orientation only selects the more localized explanation; it makes no claim about which model is correct.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiagnosisError {
    #[error("trace lists cover different cases (only in reference: {only_ref:?}, only in target: {only_tgt:?})")]
    CaseMismatch { only_ref: Vec<String>, only_tgt: Vec<String> },
    #[error("models `{0}` and `{1}` produce identical KPI outputs on every case")]
    NoDivergence(String, String),
    #[error("no case could be simulated on both models")]
    NoComparableCases,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub case_id: String,
    pub task_label: String,
    pub kpi_name: String,
    pub ref_emitted: bool,
    pub tgt_emitted: bool,
}

impl Observation {
    pub fn discrepant(&self) -> bool {
        self.ref_emitted != self.tgt_emitted
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    MissingOutput,
    ExtraOutput,
    IncorrectOutput,
}

/// A task occurrence on the target trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMark {
    pub label: String,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frontier {
    Task(TaskMark),
    /// The target emits nothing further; the window runs to the trace end.
    EndOfTrace,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub case_id: String,
    pub kind: DivergenceKind,
    /// Position of the first differing pair in the aligned sequences.
    pub index: usize,
    /// `None` only when `index == 0`.
    pub t_last: Option<TaskMark>,
    pub t_first: Frontier,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictSet {
    pub gateways: BTreeSet<String>,
    /// Cases that produced this set, sorted.
    pub cases: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisProblem {
    pub reference_model_id: String,
    pub target_model_id: String,
    pub conflicts: Vec<ConflictSet>,
    pub components: BTreeSet<String>,
}

impl DiagnosisProblem {
    pub fn conflict_family(&self) -> Vec<BTreeSet<String>> {
        self.conflicts.iter().map(|c| c.gateways.clone()).collect()
    }
}

fn by_case(ts: &[Trace]) -> BTreeMap<&str, &Trace> {
    ts.iter().map(|t| (t.case_id.as_str(), t)).collect()
}

fn emitted_pairs(t: &Trace, m: &ProcessModel) -> BTreeSet<(String, String)> {
    t.emissions
        .iter()
        .map(|e| (m.node(&e.task).map_or_else(|| e.task.clone(), |n| n.label.clone()), e.kpi.clone()))
        .collect()
}

/// One observation per (case, task label, KPI) emitted on either side,
/// sorted by case id, then label and KPI.
pub fn compare_observations(
    ref_traces: &[Trace],
    tgt_traces: &[Trace],
    ref_m: &ProcessModel,
    tgt_m: &ProcessModel,
) -> Result<Vec<Observation>, DiagnosisError> {
    let (r, t) = (by_case(ref_traces), by_case(tgt_traces));
    let only = |a: &BTreeMap<&str, &Trace>, b: &BTreeMap<&str, &Trace>| {
        a.keys().filter(|k| !b.contains_key(*k)).map(|k| k.to_string()).collect::<Vec<_>>()
    };
    let (only_ref, only_tgt) = (only(&r, &t), only(&t, &r));
    if !only_ref.is_empty() || !only_tgt.is_empty() {
        return Err(DiagnosisError::CaseMismatch { only_ref, only_tgt });
    }
    let mut out = Vec::new();
    for (case, rt) in &r {
        let rp = emitted_pairs(rt, ref_m);
        let tp = emitted_pairs(t[case], tgt_m);
        for (label, kpi) in rp.union(&tp) {
            let key = (label.clone(), kpi.clone());
            out.push(Observation {
                case_id: case.to_string(),
                task_label: label.clone(),
                kpi_name: kpi.clone(),
                ref_emitted: rp.contains(&key),
                tgt_emitted: tp.contains(&key),
            });
        }
    }
    Ok(out)
}

/// Earliest position at which the two sequences disagree, judged on
/// (task label, KPI) pairs. Marks refer to the target side.
pub fn first_divergence(ref_seq: &KpiSequence, tgt_seq: &KpiSequence) -> Option<Divergence> {
    let same = |i: usize| {
        let (r, t) = (&ref_seq.pairs[i], &tgt_seq.pairs[i]);
        r.task_label == t.task_label && r.kpi == t.kpi
    };
    let common = ref_seq.pairs.len().min(tgt_seq.pairs.len());
    let index = (0..common).find(|&i| !same(i)).unwrap_or(common);
    let mark = |i: usize| {
        let p = &tgt_seq.pairs[i];
        TaskMark { label: p.task_label.clone(), step: p.step }
    };
    let (kind, t_first) = if index < common {
        (DivergenceKind::IncorrectOutput, Frontier::Task(mark(index)))
    } else if index < ref_seq.pairs.len() {
        (DivergenceKind::MissingOutput, Frontier::EndOfTrace)
    } else if index < tgt_seq.pairs.len() {
        (DivergenceKind::ExtraOutput, Frontier::Task(mark(index)))
    } else {
        return None;
    };
    Some(Divergence { case_id: tgt_seq.case_id.clone(), kind, index, t_last: index.checked_sub(1).map(mark), t_first })
}

/// Gateways executed on the target trace strictly between `t_last` and
/// `t_first`. `None` when the window holds no gateway.
pub fn conflict_from_divergence(div: &Divergence, tgt_trace: &Trace, tgt_m: &ProcessModel) -> Option<ConflictSet> {
    let lo = div.t_last.as_ref().map_or(0, |m| m.step + 1);
    let hi = match &div.t_first {
        Frontier::Task(m) => m.step,
        Frontier::EndOfTrace => tgt_trace.steps.len(),
    };
    let gateways: BTreeSet<String> = tgt_trace
        .steps
        .get(lo..hi.max(lo))
        .unwrap_or_default()
        .iter()
        .filter(|id| tgt_m.node(id).is_some_and(|n| n.kind == NodeKind::ExclusiveGateway))
        .cloned()
        .collect();
    (!gateways.is_empty()).then(|| ConflictSet { gateways, cases: vec![div.case_id.clone()] })
}

/// Everything derived from comparing one oriented model pair.
#[derive(Clone, Debug)]
pub struct ConflictAnalysis {
    pub problem: DiagnosisProblem,
    pub ref_run: PopulationRun,
    pub tgt_run: PopulationRun,
    pub observations: Vec<Observation>,
    pub divergences: Vec<Divergence>,
    pub unattributable: Vec<Divergence>,
    /// Cases that failed on either side, with the first error seen.
    pub excluded: Vec<CaseFailure>,
}

impl ConflictAnalysis {
    pub fn discrepant_cases(&self) -> BTreeSet<&str> {
        self.observations.iter().filter(|o| o.discrepant()).map(|o| o.case_id.as_str()).collect()
    }
}

fn excluded_cases(ref_run: &PopulationRun, tgt_run: &PopulationRun) -> Vec<CaseFailure> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for (side, run) in [("reference", ref_run), ("target", tgt_run)] {
        for f in run.failure_summary() {
            out.entry(f.case_id).or_insert_with(|| format!("{side}: {}", f.error));
        }
    }
    out.into_iter().map(|(case_id, error)| CaseFailure { case_id, error }).collect()
}

/// Builds the conflict family from already simulated runs.
pub fn analyze_runs(
    ref_m: &ProcessModel,
    tgt_m: &ProcessModel,
    ref_run: PopulationRun,
    tgt_run: PopulationRun,
) -> Result<ConflictAnalysis, DiagnosisError> {
    let excluded = excluded_cases(&ref_run, &tgt_run);
    let skip: BTreeSet<&str> = excluded.iter().map(|f| f.case_id.as_str()).collect();
    let keep = |run: &PopulationRun| -> Vec<Trace> {
        run.traces.iter().filter(|t| !skip.contains(t.case_id.as_str())).cloned().collect()
    };
    let (rts, tts) = (keep(&ref_run), keep(&tgt_run));
    if rts.is_empty() && !excluded.is_empty() {
        return Err(DiagnosisError::NoComparableCases);
    }
    let observations = compare_observations(&rts, &tts, ref_m, tgt_m)?;
    let discrepant: BTreeSet<&str> =
        observations.iter().filter(|o| o.discrepant()).map(|o| o.case_id.as_str()).collect();

    let tgt_by_case: BTreeMap<&str, &Trace> = tts.iter().map(|t| (t.case_id.as_str(), t)).collect();
    let mut divergences = Vec::new();
    let mut unattributable = Vec::new();
    let mut merged: BTreeMap<BTreeSet<String>, Vec<String>> = BTreeMap::new();
    for rt in rts.iter().filter(|t| discrepant.contains(t.case_id.as_str())) {
        let tt = tgt_by_case[rt.case_id.as_str()];
        let rs = crate::simulation::kpi_sequence(rt, ref_m);
        let ts = crate::simulation::kpi_sequence(tt, tgt_m);
        let Some(div) = first_divergence(&rs, &ts) else {
            continue;
        };
        match conflict_from_divergence(&div, tt, tgt_m) {
            Some(c) => merged.entry(c.gateways).or_default().push(div.case_id.clone()),
            None => unattributable.push(div.clone()),
        }
        divergences.push(div);
    }
    let mut conflicts: Vec<ConflictSet> = merged
        .into_iter()
        .map(|(gateways, mut cases)| {
            cases.sort();
            ConflictSet { gateways, cases }
        })
        .collect();
    conflicts.sort_by(|a, b| a.gateways.len().cmp(&b.gateways.len()).then_with(|| a.gateways.cmp(&b.gateways)));

    let problem = DiagnosisProblem {
        reference_model_id: ref_m.model_id.clone(),
        target_model_id: tgt_m.model_id.clone(),
        conflicts,
        components: tgt_m.gateways().into_iter().map(|g| g.gateway_id).collect(),
    };
    Ok(ConflictAnalysis { problem, ref_run, tgt_run, observations, divergences, unattributable, excluded })
}

/// Simulates both models on `cases` and builds the conflict family.
pub fn collect_conflicts(
    ref_m: &ProcessModel,
    tgt_m: &ProcessModel,
    cases: &[CaseRecord],
    cfg: &KpiConfig,
    opts: &SimOptions,
) -> Result<ConflictAnalysis, DiagnosisError> {
    let (ref_run, tgt_run) = exec::join(
        opts.execution,
        || simulate_population(ref_m, cases, cfg, opts),
        || simulate_population(tgt_m, cases, cfg, opts),
    );
    analyze_runs(ref_m, tgt_m, ref_run, tgt_run)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiagnosisOptions {
    pub sim: SimOptions,
    pub cardinality_cap: usize,
}

impl Default for DiagnosisOptions {
    fn default() -> Self {
        DiagnosisOptions { sim: SimOptions::default(), cardinality_cap: DEFAULT_CARDINALITY_CAP }
    }
}

/// Serialized diagnosis of one orientation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrientedDiagnosis {
    pub reference_model_id: String,
    pub target_model_id: String,
    pub cases_compared: usize,
    pub discrepant_cases: Vec<String>,
    pub excluded_cases: Vec<CaseFailure>,
    pub conflicts: Vec<ConflictSet>,
    pub unattributable: Vec<Divergence>,
    pub divergences: Vec<Divergence>,
    pub minimal_diagnoses: Vec<Diagnosis>,
    pub refined_diagnoses: Vec<Diagnosis>,
    pub truncated: bool,
    /// Labels of the target gateways that appear in any conflict.
    pub gateway_labels: BTreeMap<String, String>,
    pub observations: Vec<Observation>,
}

impl OrientedDiagnosis {
    /// Refined diagnoses, or the unrefined ones when refinement removed all.
    pub fn effective(&self) -> &[Diagnosis] {
        if self.refined_diagnoses.is_empty() {
            &self.minimal_diagnoses
        } else {
            &self.refined_diagnoses
        }
    }

    fn rank_key(&self) -> (usize, usize, &str) {
        let d = self.effective();
        (d.iter().map(|d| d.cardinality).min().unwrap_or(usize::MAX), d.len(), &self.reference_model_id)
    }
}

/// Full diagnosis with `ref_m` taken as the reference.
pub fn diagnose(
    ref_m: &ProcessModel,
    tgt_m: &ProcessModel,
    cases: &[CaseRecord],
    cfg: &KpiConfig,
    opts: &DiagnosisOptions,
) -> Result<OrientedDiagnosis, DiagnosisError> {
    let analysis = collect_conflicts(ref_m, tgt_m, cases, cfg, &opts.sim)?;
    Ok(finish(ref_m, tgt_m, &analysis, opts.cardinality_cap))
}

pub fn finish(ref_m: &ProcessModel, tgt_m: &ProcessModel, a: &ConflictAnalysis, cap: usize) -> OrientedDiagnosis {
    let hs = minimal_hitting_sets(&a.problem.conflict_family(), cap);
    let refined =
        refine_diagnoses(&hs.diagnoses, &a.problem.conflicts, ref_m, tgt_m, &a.ref_run.traces, &a.tgt_run.traces);
    let gateway_labels = a
        .problem
        .conflicts
        .iter()
        .flat_map(|c| &c.gateways)
        .map(|g| (g.clone(), tgt_m.node(g).map(|n| n.label.clone()).unwrap_or_default()))
        .collect();
    let excluded: BTreeSet<&str> = a.excluded.iter().map(|f| f.case_id.as_str()).collect();
    OrientedDiagnosis {
        reference_model_id: ref_m.model_id.clone(),
        target_model_id: tgt_m.model_id.clone(),
        cases_compared: a.ref_run.traces.iter().filter(|t| !excluded.contains(t.case_id.as_str())).count(),
        discrepant_cases: a.discrepant_cases().into_iter().map(str::to_string).collect(),
        excluded_cases: a.excluded.clone(),
        conflicts: a.problem.conflicts.clone(),
        unattributable: a.unattributable.clone(),
        divergences: a.divergences.clone(),
        minimal_diagnoses: hs.diagnoses,
        refined_diagnoses: refined,
        truncated: hs.truncated,
        gateway_labels,
        observations: a.observations.clone(),
    }
}

/// Both orientations of a model pair, with the chosen one first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub reference_model_id: String,
    pub target_model_id: String,
    pub note: String,
    pub chosen: OrientedDiagnosis,
    pub alternative: OrientedDiagnosis,
}

/// Diagnoses in both orientations and keeps the one with the smaller
/// minimum diagnosis; ties go to fewer diagnoses, then to the
/// lexicographically smaller reference id.
pub fn choose_direction(
    a: &ProcessModel,
    b: &ProcessModel,
    cases: &[CaseRecord],
    cfg: &KpiConfig,
    opts: &DiagnosisOptions,
) -> Result<DirectionReport, DiagnosisError> {
    let (ra, rb) = exec::join(
        opts.sim.execution,
        || simulate_population(a, cases, cfg, &opts.sim),
        || simulate_population(b, cases, cfg, &opts.sim),
    );
    let ab = analyze_runs(a, b, ra.clone(), rb.clone())?;
    if ab.discrepant_cases().is_empty() {
        return Err(DiagnosisError::NoDivergence(a.model_id.clone(), b.model_id.clone()));
    }
    let ba = analyze_runs(b, a, rb, ra)?;
    let (ab, ba) = exec::join(
        opts.sim.execution,
        || finish(a, b, &ab, opts.cardinality_cap),
        || finish(b, a, &ba, opts.cardinality_cap),
    );
    let (chosen, alternative) = if ab.rank_key() <= ba.rank_key() { (ab, ba) } else { (ba, ab) };
    Ok(DirectionReport {
        reference_model_id: chosen.reference_model_id.clone(),
        target_model_id: chosen.target_model_id.clone(),
        note: ORIENTATION_NOTE.to_string(),
        chosen,
        alternative,
    })
}

#[cfg(test)]
mod tests;
