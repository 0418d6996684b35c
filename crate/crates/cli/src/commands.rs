//! One function per subcommand. Each reads its inputs, writes its artifacts
//! under the output directory and returns a one-line summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ambiguity_core::ambiguity::{
    build_ambiguity_report, diagnosed_gateways, localize_ambiguity, propose_repairs, reconstruct_narrative,
    AmbiguityReport, CannedProvider, DiagnosisSummary, EntropySummary, HttpProvider, Localization, NarrativeDocument,
    RepairReport, RewriteProvider,
};
use ambiguity_core::bpmn::{parse_bpmn_with, validate_structure};
use ambiguity_core::case::load_population;
use ambiguity_core::diagnosis::{choose_direction, DiagnosisError, DiagnosisOptions, DirectionReport};
use ambiguity_core::distribution::{
    build_labeled_distribution, consistency_category, entropy_bits, load_kpi_vectors, normalized_entropy,
    select_representatives, ConsistencyCategory, DistributionError,
};
use ambiguity_core::exec::{self, Execution};
use ambiguity_core::simulation::{simulate_population, CaseFailure, KpiVector, SimOptions, Trace};
use serde::{Deserialize, Serialize};

use crate::config::{ProviderKind, RunConfig};
use crate::io::{load_model, model_files, read_json, read_text, resolve_model, stem, write_atomic, write_json};
use crate::CliError;

pub const KPI_DIR: &str = "kpis";
pub const SIMULATE_SUMMARY: &str = "simulate_summary.json";
pub const ENTROPY_FILE: &str = "entropy.json";
pub const DIAGNOSIS_FILE: &str = "diagnosis.json";
pub const REPORT_FILE: &str = "ambiguity_report.json";
pub const REPAIR_FILE: &str = "repair_report.json";
pub const REPAIRED_TEXT: &str = "repaired_narrative.txt";
pub const VERIFY_FILE: &str = "verify.json";

fn execution(cfg: &RunConfig) -> Execution {
    if cfg.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn sim_options(cfg: &RunConfig) -> SimOptions {
    SimOptions { step_cap: cfg.step_cap, execution: execution(cfg) }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn distribution_err(e: DistributionError) -> CliError {
    match e {
        DistributionError::Io(e) => CliError::Data(format!("cannot read KPI files: {e}")),
        e => data_err(e),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelKpis {
    pub model_id: String,
    pub cases_total: usize,
    pub cases_succeeded: usize,
    pub kpis: KpiVector,
    pub failures: Vec<CaseFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<Trace>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SkippedModel {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub models_found: usize,
    pub models_simulated: usize,
    pub cases: usize,
    pub skipped: Vec<SkippedModel>,
    /// Failed case count per model, for models with failures.
    pub case_failures: BTreeMap<String, usize>,
}

pub fn simulate(cfg: &RunConfig, with_traces: bool, warn: &mut dyn FnMut(String)) -> Result<String, CliError> {
    let models_dir = cfg.require("models", &cfg.models)?;
    let cases = load_population(cfg.require("cases", &cfg.cases)?).map_err(data_err)?;
    let files = model_files(models_dir)?;
    let opts = sim_options(cfg);
    let tags = cfg.kpi.tag_table();
    let results = exec::map_ordered(opts.execution, &files, |path| {
        let xml = fs::read_to_string(path).map_err(|e| e.to_string())?;
        let mut m = parse_bpmn_with(&xml, &tags).map_err(|e| e.to_string())?;
        m.model_id = stem(path);
        let run = simulate_population(&m, &cases, &cfg.kpi, &opts);
        Ok::<_, String>(ModelKpis {
            model_id: m.model_id,
            cases_total: cases.len(),
            cases_succeeded: run.traces.len(),
            failures: run.failure_summary(),
            kpis: run.kpis,
            traces: with_traces.then_some(run.traces),
        })
    });

    let kpi_dir = cfg.out.join(KPI_DIR);
    let mut summary = SimulateSummary {
        models_found: files.len(),
        models_simulated: 0,
        cases: cases.len(),
        skipped: Vec::new(),
        case_failures: BTreeMap::new(),
    };
    let mut written = BTreeSet::new();
    for (path, r) in files.iter().zip(results) {
        let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match r {
            Ok(rec) => {
                if !rec.failures.is_empty() {
                    warn(format!("{}: {} of {} cases failed", rec.model_id, rec.failures.len(), rec.cases_total));
                    summary.case_failures.insert(rec.model_id.clone(), rec.failures.len());
                }
                write_json(&kpi_dir.join(format!("{}.json", rec.model_id)), &rec)?;
                written.insert(format!("{}.json", rec.model_id));
                summary.models_simulated += 1;
            }
            Err(error) => {
                warn(format!("skipping {file}: {error}"));
                summary.skipped.push(SkippedModel { file, error });
            }
        }
    }
    // Files left from an earlier run over a different model set would skew
    // the distribution.
    if let Ok(entries) = fs::read_dir(&kpi_dir) {
        for p in entries.filter_map(|e| e.ok().map(|e| e.path())) {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if name.ends_with(".json") && !written.contains(&name) {
                fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
            }
        }
    }
    write_json(&cfg.out.join(SIMULATE_SUMMARY), &summary)?;
    if summary.models_simulated == 0 {
        return Err(CliError::Data(format!("none of the {} model files could be simulated", files.len())));
    }
    Ok(format!("simulated {} of {} models over {} cases", summary.models_simulated, summary.models_found, cases.len()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EntropyFile {
    pub summary: EntropySummary,
    pub k: usize,
    pub entropy_bits: f64,
    pub round_decimals: u32,
    /// Model ids behind each combo, aligned with `summary.combos`.
    pub members: Vec<Vec<String>>,
    /// Lowest model id of the two most frequent combos, if there are two.
    pub representatives: Option<(String, String)>,
}

pub fn family_entropy(path: &Path, round_decimals: u32) -> Result<EntropyFile, CliError> {
    let runs = load_kpi_vectors(path).map_err(|e| match e {
        DistributionError::EmptyInput => {
            CliError::Data(format!("{} is empty: no KPI vectors to compare", path.display()))
        }
        e => distribution_err(e),
    })?;
    let (d, members) = build_labeled_distribution(&runs, round_decimals).map_err(distribution_err)?;
    let h = normalized_entropy(&d);
    let category = consistency_category(h).map_err(distribution_err)?;
    Ok(EntropyFile {
        k: d.k(),
        entropy_bits: entropy_bits(&d),
        round_decimals,
        representatives: select_representatives(&d, &members).ok(),
        members,
        summary: EntropySummary::new(&d, h, category),
    })
}

fn kpi_source(cfg: &RunConfig, explicit: Option<&Path>) -> Result<PathBuf, CliError> {
    let p = explicit.map_or_else(|| cfg.out.join(KPI_DIR), Path::to_path_buf);
    if !p.exists() {
        return Err(CliError::Usage(format!("KPI input {} does not exist; run `simulate` first", p.display())));
    }
    Ok(p)
}

pub fn entropy(cfg: &RunConfig, kpis: Option<&Path>, out: &mut dyn FnMut(String)) -> Result<String, CliError> {
    let src = kpi_source(cfg, kpis)?;
    let e = family_entropy(&src, cfg.round_decimals)?;
    write_json(&cfg.out.join(ENTROPY_FILE), &e)?;
    let width = e.summary.combos.iter().map(|c| c.count).max().unwrap_or(0).to_string().len();
    for c in &e.summary.combos {
        out(format!("{:>width$}  {}", c.count, c.kpis));
    }
    Ok(format!(
        "{} models, {} distinct KPI vectors, H_norm = {:.6} ({})",
        e.summary.models, e.k, e.summary.h_norm, e.summary.category
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnoseStatus {
    Diagnosed,
    NoDivergence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Explicit,
    Representatives,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiagnosisFile {
    pub status: DiagnoseStatus,
    pub models: (String, String),
    pub selection: Selection,
    pub report: Option<DirectionReport>,
}

pub fn diagnose(
    cfg: &RunConfig,
    pair: Option<(&str, &str)>,
    kpis: Option<&Path>,
    warn: &mut dyn FnMut(String),
) -> Result<String, CliError> {
    let (a, b, selection) = match pair {
        Some((a, b)) => (a.to_string(), b.to_string(), Selection::Explicit),
        None => {
            let e = family_entropy(&kpi_source(cfg, kpis)?, cfg.round_decimals)?;
            let (a, b) = e.representatives.ok_or_else(|| {
                CliError::Data("all models share one KPI vector; there is no pair to diagnose".into())
            })?;
            (a, b, Selection::Representatives)
        }
    };
    let models_dir = cfg.models.as_deref();
    let ma = load_model(&resolve_model(&a, models_dir)?, &cfg.kpi)?;
    let mb = load_model(&resolve_model(&b, models_dir)?, &cfg.kpi)?;
    let cases = load_population(cfg.require("cases", &cfg.cases)?).map_err(data_err)?;
    let opts = DiagnosisOptions { sim: sim_options(cfg), cardinality_cap: cfg.cardinality_cap };
    let models = (ma.model_id.clone(), mb.model_id.clone());
    let (file, line) = match choose_direction(&ma, &mb, &cases, &cfg.kpi, &opts) {
        Ok(r) => {
            if r.chosen.truncated {
                warn(format!("hitting-set search stopped at cardinality {}", cfg.cardinality_cap));
            }
            let line = format!(
                "reference {} / target {}: {} discrepant cases, diagnoses {}",
                r.reference_model_id,
                r.target_model_id,
                r.chosen.discrepant_cases.len(),
                show_diagnoses(r.chosen.effective().iter().map(|d| &d.gateways)),
            );
            (DiagnosisFile { status: DiagnoseStatus::Diagnosed, models, selection, report: Some(r) }, line)
        }
        Err(DiagnosisError::NoDivergence(a, b)) => (
            DiagnosisFile { status: DiagnoseStatus::NoDivergence, models, selection, report: None },
            format!("{a} and {b} produce identical KPI outputs on every case"),
        ),
        Err(e) => return Err(data_err(e)),
    };
    write_json(&cfg.out.join(DIAGNOSIS_FILE), &file)?;
    Ok(line)
}

fn show_diagnoses<'a>(ds: impl Iterator<Item = &'a BTreeSet<String>>) -> String {
    let parts: Vec<String> =
        ds.map(|g| format!("{{{}}}", g.iter().map(String::as_str).collect::<Vec<_>>().join(", "))).collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(" ")
    }
}

pub fn report(cfg: &RunConfig) -> Result<String, CliError> {
    let diag: DiagnosisFile = read_json(&cfg.out.join(DIAGNOSIS_FILE))?;
    let narrative_path = cfg.require("narrative", &cfg.narrative)?;
    let doc = NarrativeDocument::from_paragraphs(stem(narrative_path), read_text(narrative_path)?);
    let entropy_path = cfg.out.join(ENTROPY_FILE);
    let entropy = if entropy_path.exists() { Some(read_json::<EntropyFile>(&entropy_path)?.summary) } else { None };
    let report = match &diag.report {
        None => build_ambiguity_report(&doc.doc_id, Localization::default(), entropy, None),
        Some(r) => {
            let models_dir = cfg.models.as_deref();
            let ref_m = load_model(&resolve_model(&r.reference_model_id, models_dir)?, &cfg.kpi)?;
            let tgt_m = load_model(&resolve_model(&r.target_model_id, models_dir)?, &cfg.kpi)?;
            let loc =
                localize_ambiguity(&diagnosed_gateways(&r.chosen), &tgt_m, &ref_m, &doc, cfg.localization_threshold)
                    .map_err(|e| CliError::Data(format!("{DIAGNOSIS_FILE} does not match the models: {e}")))?;
            build_ambiguity_report(&doc.doc_id, loc, entropy, Some(DiagnosisSummary::from(r)))
        }
    };
    write_json(&cfg.out.join(REPORT_FILE), &report)?;
    let segs: Vec<&str> = report.ambiguities.iter().map(|a| a.segment_id.as_str()).collect();
    Ok(format!(
        "{} ambiguities ({}), {} unlocalized gateways",
        report.ambiguities.len(),
        if segs.is_empty() { "none".into() } else { segs.join(", ") },
        report.unlocalized.len()
    ))
}

fn provider(cfg: &RunConfig) -> Result<Box<dyn RewriteProvider>, CliError> {
    let kind = cfg.provider.kind.or(cfg.provider.canned.as_ref().map(|_| ProviderKind::Canned));
    match kind {
        None => Err(CliError::Provider(
            "no rewrite provider configured; set provider.kind or pass --provider / --canned".into(),
        )),
        Some(ProviderKind::Canned) => {
            let path = cfg
                .provider
                .canned
                .as_deref()
                .ok_or_else(|| CliError::Provider("canned provider needs a response file (--canned)".into()))?;
            Ok(Box::new(CannedProvider::from_file(path).map_err(|e| CliError::Provider(e.to_string()))?))
        }
        Some(ProviderKind::Http) => {
            Ok(Box::new(HttpProvider::new(cfg.http_provider()).map_err(|e| CliError::Provider(e.to_string()))?))
        }
    }
}

pub fn repair(cfg: &RunConfig, warn: &mut dyn FnMut(String)) -> Result<String, CliError> {
    let report: AmbiguityReport = read_json(&cfg.out.join(REPORT_FILE))?;
    let narrative_path = cfg.require("narrative", &cfg.narrative)?;
    let doc = NarrativeDocument::from_paragraphs(stem(narrative_path), read_text(narrative_path)?);
    if doc.doc_id != report.doc_id {
        return Err(CliError::Data(format!("{REPORT_FILE} was built for `{}`, not `{}`", report.doc_id, doc.doc_id)));
    }
    let (provider_name, outcome) = if report.ambiguities.is_empty() {
        ("none".to_string(), Default::default())
    } else {
        let supp_path = cfg.require("supplemental", &cfg.supplemental)?;
        let supplemental = NarrativeDocument::from_paragraphs(stem(supp_path), read_text(supp_path)?);
        let p = provider(cfg)?;
        let outcome = propose_repairs(&report, &doc, &supplemental, p.as_ref(), execution(cfg))
            .map_err(|e| CliError::Provider(e.to_string()))?;
        (p.name().to_string(), outcome)
    };
    for r in &outcome.rejected {
        warn(format!("rejected repair for {}: {}", r.ambiguity_id, r.reason));
    }
    let repaired = reconstruct_narrative(&doc, &outcome.accepted, &report.ambiguities).map_err(data_err)?;
    let out = RepairReport {
        doc_id: doc.doc_id.clone(),
        provider: provider_name,
        repairs: outcome.accepted,
        rejected: outcome.rejected,
        trace: repaired.trace,
        repaired_text: repaired.text,
    };
    write_json(&cfg.out.join(REPAIR_FILE), &out)?;
    write_atomic(&cfg.out.join(REPAIRED_TEXT), out.repaired_text.as_bytes())?;
    Ok(format!("{} repairs applied, {} rejected", out.repairs.len(), out.rejected.len()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FamilySummary {
    pub models: usize,
    pub k: usize,
    pub h_norm: f64,
    pub category: ConsistencyCategory,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyFile {
    pub before: FamilySummary,
    pub after: FamilySummary,
    /// `after.h_norm - before.h_norm`; negative means more consistent.
    pub delta: f64,
    pub improved: bool,
}

pub fn verify(cfg: &RunConfig, before: &Path, after: &Path) -> Result<String, CliError> {
    let summarize = |p: &Path| -> Result<FamilySummary, CliError> {
        if !p.exists() {
            return Err(CliError::Usage(format!("{} does not exist", p.display())));
        }
        let e = family_entropy(p, cfg.round_decimals)?;
        Ok(FamilySummary { models: e.summary.models, k: e.k, h_norm: e.summary.h_norm, category: e.summary.category })
    };
    let b = summarize(before)?;
    let a = summarize(after)?;
    let delta = a.h_norm - b.h_norm;
    let v = VerifyFile { improved: delta < 0.0, delta, before: b, after: a };
    write_json(&cfg.out.join(VERIFY_FILE), &v)?;
    Ok(format!(
        "H_norm {:.6} ({}) -> {:.6} ({}), delta {:+.6}",
        v.before.h_norm, v.before.category, v.after.h_norm, v.after.category, v.delta
    ))
}

pub fn validate(cfg: &RunConfig, paths: &[PathBuf], out: &mut dyn FnMut(String)) -> Result<String, CliError> {
    let paths: Vec<PathBuf> =
        if paths.is_empty() { vec![cfg.require("models", &cfg.models)?.to_path_buf()] } else { paths.to_vec() };
    let mut files = Vec::new();
    for p in &paths {
        if !p.exists() {
            return Err(CliError::Usage(format!("{} does not exist", p.display())));
        }
        files.extend(model_files(p)?);
    }
    let mut bad = 0;
    for f in &files {
        match load_model(f, &cfg.kpi) {
            Err(e) => {
                bad += 1;
                out(format!("error  {e}"));
            }
            Ok(m) => {
                let issues = validate_structure(&m);
                if !issues.is_empty() {
                    bad += 1;
                }
                for i in issues {
                    out(format!("issue  {}: {:?} at `{}`", f.display(), i.category, i.node_id));
                }
            }
        }
    }
    if bad > 0 {
        return Err(CliError::Data(format!("{bad} of {} models have problems", files.len())));
    }
    Ok(format!("{} models valid", files.len()))
}
