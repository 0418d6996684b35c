use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bpmn::{Node, NodeKind, SequenceFlow};
use crate::condition::parse_condition;

const NARRATIVE: &str = "\
Purpose: the ward runs a programme to slow kidney disease among residents living with diabetes.

Selection: residents treated for diabetes at a clinic and showing reduced kidney function. \
Checkup criteria among those examined: fasting blood glucose ≥126 mg/dL or HbA1c ≥6.5.

Enrolment: a resident who wants to join hands a consent form to the family doctor, \
who forwards it with a referral to the ward. Nurses then hold monthly guidance sessions.

Reporting: outcomes are reviewed every year by the steering committee.
";

const SUPPLEMENTAL: &str = "\
Eligible persons meet a diabetes criterion and a kidney criterion at the same time.

Guidance starts only after the physician has submitted the signed consent form.
";

fn model(id: &str, elig_label: &str, elig: &str, acc: &str) -> ProcessModel {
    let c = |s: &str| parse_condition(s).unwrap();
    ProcessModel::new(
        id,
        vec![
            Node::new("s", NodeKind::StartEvent, ""),
            Node::new("g_elig", NodeKind::ExclusiveGateway, elig_label),
            Node::new("notify", NodeKind::Task, "Send Recommendation Notification").with_kpis(["NC"]),
            Node::new("g_acc", NodeKind::ExclusiveGateway, "Check Health Guidance Acceptance"),
            Node::new("guide", NodeKind::Task, "Provide Health Guidance").with_kpis(["HC"]),
            Node::new("e", NodeKind::EndEvent, ""),
        ],
        vec![
            SequenceFlow::new("f0", "s", "g_elig"),
            SequenceFlow::new("f1", "g_elig", "notify").when(c(elig)),
            SequenceFlow::new("f2", "g_elig", "e").default_flow(),
            SequenceFlow::new("f3", "notify", "g_acc"),
            SequenceFlow::new("f4", "g_acc", "guide").when(c(acc)),
            SequenceFlow::new("f5", "g_acc", "e").default_flow(),
            SequenceFlow::new("f6", "guide", "e"),
        ],
        BTreeMap::new(),
    )
    .unwrap()
}

fn pair() -> (ProcessModel, ProcessModel) {
    let reference = model(
        "ref",
        "Check Clinical Eligibility",
        "(Fasting_Blood_Glucose >= 126 OR HbA1c >= 6.5) AND Renal_Function_Impaired == 1",
        "Health_Guidance == 1 AND Consent_Submitted == 1",
    );
    let target = model(
        "tgt",
        "Check Inclusion Eligibility",
        "Fasting_Blood_Glucose >= 126 OR HbA1c >= 6.5 OR Diabetes_Under_Treatment == 1",
        "Consent_Submitted == 1",
    );
    (reference, target)
}

fn both() -> BTreeSet<String> {
    ["g_elig".to_string(), "g_acc".to_string()].into()
}

fn doc() -> NarrativeDocument {
    NarrativeDocument::from_paragraphs("city", NARRATIVE)
}

fn localized() -> Localization {
    let (r, t) = pair();
    localize_ambiguity(&both(), &t, &r, &doc(), DEFAULT_LOCALIZATION_THRESHOLD).unwrap()
}

#[test]
fn gateways_map_to_their_paragraphs() {
    let l = localized();
    assert!(l.unlocalized.is_empty());
    let got: Vec<(&str, &str)> = l.instances.iter().map(|i| (i.ambiguity_id.as_str(), i.segment_id.as_str())).collect();
    assert_eq!(got, [("AMB-1", "P2"), ("AMB-2", "P3")]);
    let amb1 = &l.instances[0];
    assert!(amb1.excerpt.contains("fasting blood glucose ≥126 mg/dL or HbA1c ≥6.5"));
    assert!(NARRATIVE.contains(&amb1.excerpt));
    let labels: Vec<(&GatewayRole, &str)> = amb1.gateways.iter().map(|g| (&g.role, g.label.as_str())).collect();
    assert_eq!(
        labels,
        [
            (&GatewayRole::Target, "Check Inclusion Eligibility"),
            (&GatewayRole::Reference, "Check Clinical Eligibility")
        ]
    );
    assert_eq!(amb1.interpretations.len(), 2);
    assert_eq!(
        amb1.interpretations[1].conditions,
        ["(Fasting_Blood_Glucose >= 126 OR HbA1c >= 6.5) AND Renal_Function_Impaired == 1"]
    );
    assert!(amb1.interpretations[0].reading.contains("otherwise to `e`"));
}

#[test]
fn localization_is_deterministic() {
    assert_eq!(localized(), localized());
}

#[test]
fn unrelated_label_is_unlocalized() {
    let (r, _) = pair();
    let odd = model("odd", "Verify Zzyzx Quux", "Qwerty_Flag == 1", "Consent_Submitted == 1");
    let l =
        localize_ambiguity(&["g_elig".to_string()].into(), &odd, &r, &doc(), DEFAULT_LOCALIZATION_THRESHOLD).unwrap();
    assert!(l.instances.is_empty());
    assert_eq!(l.unlocalized.len(), 1);
    assert_eq!(l.unlocalized[0].best_score, 0.0);
    assert!(matches!(
        localize_ambiguity(&["nope".to_string()].into(), &odd, &r, &doc(), 0.25),
        Err(LocalizeError::UnknownGateway(_))
    ));
}

#[test]
fn shared_segment_merges_instances() {
    let (r, t) = pair();
    let one = NarrativeDocument::from_paragraphs("one", NARRATIVE.replace("\n\n", " "));
    let l = localize_ambiguity(&both(), &t, &r, &one, DEFAULT_LOCALIZATION_THRESHOLD).unwrap();
    assert_eq!(l.instances.len(), 1);
    assert_eq!(l.instances[0].gateways.len(), 4);
    assert_eq!(l.instances[0].interpretations.len(), 4);
}

/// Bag-of-words coverage computed from scratch.
fn oracle_score(query: &str, segment: &str) -> f64 {
    let stop: BTreeSet<&str> = ["the", "of", "and", "or", "to", "a", "in", "for", "with"].into();
    let bag = |s: &str| -> BTreeSet<String> {
        s.to_lowercase()
            .replace(|c: char| !c.is_alphanumeric(), " ")
            .split(' ')
            .filter(|w| w.len() > 1 && w.parse::<u64>().is_err() && !stop.contains(w))
            .map(String::from)
            .collect()
    };
    let (q, s) = (bag(query), bag(segment));
    if q.is_empty() {
        0.0
    } else {
        q.iter().filter(|w| s.contains(*w)).count() as f64 / q.len() as f64
    }
}

#[test]
fn overlap_matches_bag_of_words_oracle() {
    let vocab = [
        "health",
        "guidance",
        "consent",
        "renal",
        "glucose",
        "form",
        "ward",
        "check",
        "hba1c",
        "eligibility",
        "kidney",
        "nurse",
    ];
    let filler = ["the", "of", "and", "42", "x"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut phrase = |n: usize| -> String {
        (0..n)
            .map(|_| {
                if rng.random_bool(0.8) {
                    vocab[rng.random_range(0..vocab.len())]
                } else {
                    filler[rng.random_range(0..filler.len())]
                }
            })
            .collect::<Vec<_>>()
            .join(if rng.random_bool(0.5) { " " } else { "_" })
    };
    for _ in 0..10 {
        let (q, s) = (phrase(4), phrase(12));
        assert_eq!(overlap_score(&tokens(&q), &tokens(&s)), oracle_score(&q, &s), "{q} / {s}");
    }
}

fn report(l: Localization) -> AmbiguityReport {
    let diag = DiagnosisSummary {
        reference: "ref".into(),
        target: "tgt".into(),
        note: crate::diagnosis::ORIENTATION_NOTE.into(),
        minimal_diagnoses: vec![],
        refined_diagnoses: vec![],
        gateway_labels: BTreeMap::new(),
    };
    build_ambiguity_report("city", l, None, Some(diag))
}

#[test]
fn report_statuses_and_round_trip() {
    let empty = build_ambiguity_report("city", Localization { instances: vec![], unlocalized: vec![] }, None, None);
    assert_eq!(empty.status, ReportStatus::NoDivergence);
    assert!(empty.ambiguities.is_empty());

    let r = report(localized());
    assert_eq!(r.status, ReportStatus::AmbiguitiesFound);
    let json = serde_json::to_string_pretty(&r).unwrap();
    let back: AmbiguityReport = serde_json::from_str(&json).unwrap();
    assert_eq!(serde_json::to_string_pretty(&back).unwrap(), json);
}

fn supplemental() -> NarrativeDocument {
    NarrativeDocument::from_paragraphs("supp", SUPPLEMENTAL)
}

const AMB1_REVISION: &str =
    "Selection: residents who satisfy BOTH (treated for diabetes at a clinic, or fasting blood \
glucose ≥126 mg/dL, or HbA1c ≥6.5) AND (reduced kidney function).";

fn canned() -> String {
    serde_json::json!([
        {
            "ambiguity_id": "AMB-1",
            "revised_excerpt": AMB1_REVISION,
            "rationale": "The programme requires a diabetes criterion and a kidney criterion together.",
            "evidence_refs": ["Eligible persons meet a diabetes criterion and a kidney criterion at the same time."]
        },
        {
            "ambiguity_id": "AMB-2",
            "original_excerpt": "a resident who wants to join hands a consent form to the family doctor",
            "revised_excerpt": "an eligible resident who wants to join hands a signed consent form to the family doctor",
            "rationale": "",
            "evidence_refs": ["Guidance starts only after the physician has submitted the signed consent form."]
        }
    ])
    .to_string()
}

#[test]
fn canned_repairs_are_validated() {
    let r = report(localized());
    let p = CannedProvider::from_json(&canned()).unwrap();
    let out = propose_repairs(&r, &doc(), &supplemental(), &p, crate::exec::Execution::Sequential).unwrap();
    assert_eq!(out.accepted.len(), 1);
    assert_eq!(out.accepted[0].revised_excerpt, AMB1_REVISION);
    assert_eq!(out.rejected, [RejectedRepair { ambiguity_id: "AMB-2".into(), reason: "empty rationale".into() }]);

    let no_evidence = canned()
        .replace(r#"["Eligible persons meet a diabetes criterion and a kidney criterion at the same time."]"#, "[]");
    let p = CannedProvider::from_json(&no_evidence).unwrap();
    let out = propose_repairs(&r, &doc(), &supplemental(), &p, crate::exec::Execution::Parallel).unwrap();
    assert_eq!(out.rejected[0], RejectedRepair { ambiguity_id: "AMB-1".into(), reason: "no evidence_refs".into() });

    let invented = canned().replace("at the same time", "in most cases");
    let p = CannedProvider::from_json(&invented).unwrap();
    let out = propose_repairs(&r, &doc(), &supplemental(), &p, crate::exec::Execution::Sequential).unwrap();
    assert!(out.rejected[0].reason.starts_with("evidence not found"));

    let p = CannedProvider::from_json("[]").unwrap();
    let out = propose_repairs(&r, &doc(), &supplemental(), &p, crate::exec::Execution::Sequential).unwrap();
    assert_eq!(out.rejected.len(), 2);
    assert!(CannedProvider::from_json("{}").is_err());
}

fn record(id: &str, original: Option<&str>, revised: &str) -> RepairRecord {
    RepairRecord {
        ambiguity_id: id.into(),
        original_excerpt: original.map(String::from),
        revised_excerpt: revised.into(),
        rationale: "r".into(),
        evidence_refs: vec!["e".into()],
        selected_interpretation: None,
    }
}

#[test]
fn reconstruction_touches_only_repaired_spans() {
    let l = localized();
    let d = doc();
    let same = reconstruct_narrative(&d, &[], &l.instances).unwrap();
    assert_eq!(same.text, NARRATIVE);

    let one = reconstruct_narrative(&d, &[record("AMB-1", None, AMB1_REVISION)], &l.instances).unwrap();
    let seg = d.segment("P2").unwrap().range.clone();
    assert_eq!(&one.text[..seg.start], &NARRATIVE[..seg.start]);
    assert_eq!(&one.text[seg.start + AMB1_REVISION.len()..], &NARRATIVE[seg.end..]);

    let a = record("AMB-1", None, AMB1_REVISION);
    let b = record("AMB-2", Some("hands a consent form"), "hands a signed consent form");
    let ab = reconstruct_narrative(&d, &[a.clone(), b.clone()], &l.instances).unwrap();
    let ba = reconstruct_narrative(&d, &[b, a], &l.instances).unwrap();
    assert_eq!(ab, ba);
    assert!(ab.text.contains("hands a signed consent form"));
    assert_eq!(ab.trace.iter().map(|t| t.ambiguity_id.as_str()).collect::<Vec<_>>(), ["AMB-1", "AMB-2"]);
}

#[test]
fn reconstruction_errors() {
    let l = localized();
    let stale = NarrativeDocument::from_paragraphs("city", NARRATIVE.replace("reduced kidney", "lower kidney"));
    assert_eq!(
        reconstruct_narrative(&stale, &[record("AMB-1", None, "x")], &l.instances),
        Err(RepairError::ExcerptNotFound("AMB-1".into()))
    );
    assert_eq!(
        reconstruct_narrative(&doc(), &[record("AMB-9", None, "x")], &l.instances),
        Err(RepairError::UnknownAmbiguity("AMB-9".into()))
    );
    let mut inst = l.instances.clone();
    inst.push(AmbiguityInstance { ambiguity_id: "AMB-3".into(), ..inst[0].clone() });
    assert_eq!(
        reconstruct_narrative(&doc(), &[record("AMB-1", None, "x"), record("AMB-3", Some("Selection"), "y")], &inst),
        Err(RepairError::Overlap("AMB-3".into(), "AMB-1".into()))
    );
}
