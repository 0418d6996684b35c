use std::collections::BTreeMap;

use rust_decimal::Decimal;

use super::*;
use crate::bpmn::{Node, SequenceFlow};
use crate::condition::{parse_condition, Value};
use crate::simulation::{execute_case, kpi_sequence, Emission, KpiPair};

fn seq(case: &str, pairs: &[(&str, &str, usize)]) -> KpiSequence {
    KpiSequence {
        case_id: case.into(),
        pairs: pairs.iter().map(|&(l, k, s)| KpiPair { task_label: l.into(), kpi: k.into(), step: s }).collect(),
    }
}

fn mark(label: &str, step: usize) -> TaskMark {
    TaskMark { label: label.into(), step }
}

/// start -> [g_i: cond -> task_i -> next ; default -> next]* -> end.
/// A stage without a KPI gets a silent task labelled after the gateway; a
/// stage with an empty condition is a plain task with id `g_i`.
/// (condition, task label, optional (second condition, second label)).
type StageSpec<'a> = (&'a str, &'a str, Option<(&'a str, &'a str)>);

fn chain(id: &str, stages: &[StageSpec]) -> ProcessModel {
    let mut nodes = vec![Node::new("start", NodeKind::StartEvent, "")];
    let mut flows = Vec::new();
    for (i, (g, cond, task)) in stages.iter().enumerate() {
        let next = stages.get(i + 1).map_or("end".to_string(), |s| s.0.to_string());
        if i == 0 {
            flows.push(SequenceFlow::new("in", "start", *g));
        }
        if cond.is_empty() {
            let (label, kpi) = task.expect("plain stages emit");
            nodes.push(Node::new(*g, NodeKind::Task, label).with_kpis([kpi]));
            flows.push(SequenceFlow::new(format!("out_{g}"), *g, &next));
            continue;
        }
        let t = format!("t_{g}");
        nodes.push(Node::new(*g, NodeKind::ExclusiveGateway, format!("Check {g}")));
        nodes.push(match task {
            Some((label, kpi)) => Node::new(&t, NodeKind::Task, *label).with_kpis([*kpi]),
            None => Node::new(&t, NodeKind::Task, format!("Pass {g}")),
        });
        flows.push(SequenceFlow::new(format!("yes_{g}"), *g, &t).when(parse_condition(cond).unwrap()));
        flows.push(SequenceFlow::new(format!("no_{g}"), *g, &next).default_flow());
        flows.push(SequenceFlow::new(format!("out_{g}"), &t, &next));
    }
    if stages.is_empty() {
        flows.push(SequenceFlow::new("in_end", "start", "end"));
    }
    nodes.push(Node::new("end", NodeKind::EndEvent, ""));
    ProcessModel::new(id, nodes, flows, BTreeMap::new()).unwrap()
}

fn case(id: &str, vars: &[(&str, i64)]) -> CaseRecord {
    vars.iter().fold(CaseRecord::new(id), |c, &(k, v)| c.with(k, Value::Number(Decimal::from(v))))
}

fn cfg() -> KpiConfig {
    KpiConfig::default()
}

fn opts() -> DiagnosisOptions {
    DiagnosisOptions::default()
}

fn sets(ds: &[Diagnosis]) -> Vec<Vec<&str>> {
    ds.iter().map(|d| d.gateways.iter().map(String::as_str).collect()).collect()
}

#[test]
fn divergence_classification() {
    let r = seq("c", &[("A", "K1", 1), ("B", "K2", 3)]);
    assert_eq!(first_divergence(&r, &r.clone()), None);

    let d = first_divergence(&r, &seq("c", &[("A", "K1", 1)])).unwrap();
    assert_eq!(d.kind, DivergenceKind::MissingOutput);
    assert_eq!((d.index, d.t_last, d.t_first), (1, Some(mark("A", 1)), Frontier::EndOfTrace));

    let d = first_divergence(&r, &seq("c", &[("A", "K1", 1), ("C", "K3", 4)])).unwrap();
    assert_eq!(d.kind, DivergenceKind::IncorrectOutput);
    assert_eq!((d.index, d.t_last, d.t_first), (1, Some(mark("A", 1)), Frontier::Task(mark("C", 4))));

    let d = first_divergence(&seq("c", &[]), &seq("c", &[("X", "NC", 2)])).unwrap();
    assert_eq!(d.kind, DivergenceKind::ExtraOutput);
    assert_eq!((d.index, d.t_last, d.t_first), (0, None, Frontier::Task(mark("X", 2))));
}

#[test]
fn conflict_window() {
    let m = ProcessModel::new(
        "m",
        vec![
            Node::new("start", NodeKind::StartEvent, ""),
            Node::new("T1", NodeKind::Task, "T1"),
            Node::new("g1", NodeKind::ExclusiveGateway, ""),
            Node::new("g2", NodeKind::ExclusiveGateway, ""),
            Node::new("T2", NodeKind::Task, "T2"),
            Node::new("end", NodeKind::EndEvent, ""),
        ],
        vec![
            SequenceFlow::new("f1", "start", "T1"),
            SequenceFlow::new("f2", "T1", "g1"),
            SequenceFlow::new("f3", "g1", "g2"),
            SequenceFlow::new("f4", "g2", "T2"),
            SequenceFlow::new("f5", "T2", "end"),
        ],
        BTreeMap::new(),
    )
    .unwrap();
    let trace = execute_case(&m, &CaseRecord::new("c"), 100).unwrap();
    let div = |t_last, t_first| Divergence {
        case_id: "c".into(),
        kind: DivergenceKind::IncorrectOutput,
        index: 1,
        t_last,
        t_first,
    };
    let c = conflict_from_divergence(&div(Some(mark("T1", 1)), Frontier::Task(mark("T2", 4))), &trace, &m).unwrap();
    assert_eq!(c.gateways.iter().map(String::as_str).collect::<Vec<_>>(), ["g1", "g2"]);
    assert_eq!(c.cases, ["c"]);
    assert!(conflict_from_divergence(&div(Some(mark("T2", 4)), Frontier::EndOfTrace), &trace, &m).is_none());
    let from_start = conflict_from_divergence(&div(None, Frontier::Task(mark("T1", 1))), &trace, &m);
    assert!(from_start.is_none());
}

#[test]
fn observation_table() {
    let m = chain("m", &[("g", "x >= 1", Some(("Guidance", "HC")))]);
    let run = |c: &CaseRecord| execute_case(&m, c, 100).unwrap();
    let on = run(&case("c7", &[("x", 1)]));
    let off = Trace { case_id: "c7".into(), ..run(&case("c7", &[("x", 0)])) };
    assert!(compare_observations(std::slice::from_ref(&on), std::slice::from_ref(&on), &m, &m)
        .unwrap()
        .iter()
        .all(|o| !o.discrepant()));
    let obs = compare_observations(std::slice::from_ref(&on), &[off], &m, &m).unwrap();
    assert_eq!(
        obs,
        [Observation {
            case_id: "c7".into(),
            task_label: "Guidance".into(),
            kpi_name: "HC".into(),
            ref_emitted: true,
            tgt_emitted: false
        }]
    );
    let other = Trace { case_id: "c8".into(), ..on.clone() };
    assert!(matches!(compare_observations(&[on], &[other], &m, &m), Err(DiagnosisError::CaseMismatch { .. })));
}

#[test]
fn identical_models_have_no_conflicts() {
    let m = chain("m", &[("g", "x >= 1", Some(("Notify", "NC")))]);
    let cases = [case("a", &[("x", 0)]), case("b", &[("x", 3)])];
    let a = collect_conflicts(&m, &m, &cases, &cfg(), &SimOptions::default()).unwrap();
    assert!(a.problem.conflicts.is_empty());
    assert_eq!(
        choose_direction(&m, &m, &cases, &cfg(), &opts()),
        Err(DiagnosisError::NoDivergence("m".into(), "m".into()))
    );
}

#[test]
fn one_and_two_gateway_differences() {
    let r = chain("r", &[("g1", "x >= 5", Some(("Notify", "NC"))), ("g2", "y == 1", Some(("Guide", "HC")))]);
    let one = chain("t", &[("g1", "x > 5", Some(("Notify", "NC"))), ("g2", "y == 1", Some(("Guide", "HC")))]);
    let cases: Vec<CaseRecord> = (0..10).map(|i| case(&format!("c{i}"), &[("x", i), ("y", i % 2)])).collect();
    let a = collect_conflicts(&r, &one, &cases, &cfg(), &SimOptions::default()).unwrap();
    // c5 reaches g2 before its first differing output, so g2 is a suspect
    // until refinement sees the reference take the same condition there.
    assert_eq!(a.problem.conflict_family(), [["g1".to_string(), "g2".to_string()].into()]);
    assert_eq!(a.problem.conflicts[0].cases, ["c5"]);
    let d = finish(&r, &one, &a, 8);
    assert_eq!(sets(&d.minimal_diagnoses), [vec!["g1"], vec!["g2"]]);
    assert_eq!(sets(&d.refined_diagnoses), [vec!["g1"]]);

    // A shared emission separates the gateways; x = 5 exercises only g1's
    // difference and y = 2 only g2's.
    let r = chain(
        "r",
        &[
            ("g1", "x >= 5", Some(("Notify", "NC"))),
            ("reg", "", Some(("Register", "HC"))),
            ("g2", "y == 1", Some(("Guide", "HC"))),
        ],
    );
    let two = chain(
        "t",
        &[
            ("g1", "x > 5", Some(("Notify", "NC"))),
            ("reg", "", Some(("Register", "HC"))),
            ("g2", "y >= 1", Some(("Guide", "HC"))),
        ],
    );
    let cases = [case("p", &[("x", 5), ("y", 0)]), case("q", &[("x", 0), ("y", 2)]), case("z", &[("x", 0), ("y", 0)])];
    let a = collect_conflicts(&r, &two, &cases, &cfg(), &SimOptions::default()).unwrap();
    let fam: Vec<Vec<&str>> =
        a.problem.conflicts.iter().map(|c| c.gateways.iter().map(String::as_str).collect()).collect();
    assert_eq!(fam, [vec!["g1"], vec!["g2"]]);
    let d = finish(&r, &two, &a, 8);
    assert_eq!(sets(&d.minimal_diagnoses), [vec!["g1", "g2"]]);
    assert_eq!(d.discrepant_cases, ["p", "q"]);
}

#[test]
fn refinement_prunes_permuted_conditions_only() {
    let r = chain("r", &[("gA", "x >= 5 AND y == 1", None), ("gB", "z == 1", Some(("Guide", "HC")))]);
    let permuted = chain("t", &[("gA", "y == 1 AND x >= 5", None), ("gB", "z == 2", Some(("Guide", "HC")))]);
    let perturbed = chain("t", &[("gA", "x > 5 AND y == 1", None), ("gB", "z == 2", Some(("Guide", "HC")))]);
    let cases = [case("c", &[("x", 6), ("y", 1), ("z", 1)])];

    let d = diagnose(&r, &permuted, &cases, &cfg(), &opts()).unwrap();
    assert_eq!(sets(&d.minimal_diagnoses), [vec!["gA"], vec!["gB"]]);
    assert_eq!(sets(&d.refined_diagnoses), [vec!["gB"]]);

    let d = diagnose(&r, &perturbed, &cases, &cfg(), &opts()).unwrap();
    assert_eq!(sets(&d.refined_diagnoses), [vec!["gA"], vec!["gB"]]);
}

/// `b` routes everything through one gateway; `a` splits over two branches
/// after a shared preparation step, so its conflicts are disjoint.
fn asymmetric_pair() -> (ProcessModel, ProcessModel) {
    let c = |s: &str| parse_condition(s).unwrap();
    let a = ProcessModel::new(
        "a",
        vec![
            Node::new("s", NodeKind::StartEvent, ""),
            Node::new("g0", NodeKind::ExclusiveGateway, ""),
            Node::new("p1", NodeKind::Task, "Prep").with_kpis(["HC"]),
            Node::new("p2", NodeKind::Task, "Prep").with_kpis(["HC"]),
            Node::new("ga", NodeKind::ExclusiveGateway, ""),
            Node::new("gb", NodeKind::ExclusiveGateway, ""),
            Node::new("t1", NodeKind::Task, "Notify").with_kpis(["NC"]),
            Node::new("t2", NodeKind::Task, "Notify").with_kpis(["NC"]),
            Node::new("e", NodeKind::EndEvent, ""),
        ],
        vec![
            SequenceFlow::new("f0", "s", "g0"),
            SequenceFlow::new("f1", "g0", "p1").when(c("z == 1")),
            SequenceFlow::new("f2", "g0", "p2").default_flow(),
            SequenceFlow::new("f3", "p1", "ga"),
            SequenceFlow::new("f4", "p2", "gb"),
            SequenceFlow::new("f5", "ga", "t1").when(c("y == 1")),
            SequenceFlow::new("f6", "ga", "e").default_flow(),
            SequenceFlow::new("f7", "gb", "t2").when(c("y == 2")),
            SequenceFlow::new("f8", "gb", "e").default_flow(),
            SequenceFlow::new("f9", "t1", "e"),
            SequenceFlow::new("f10", "t2", "e"),
        ],
        BTreeMap::new(),
    )
    .unwrap();
    let b = ProcessModel::new(
        "b",
        vec![
            Node::new("s", NodeKind::StartEvent, ""),
            Node::new("p", NodeKind::Task, "Prep").with_kpis(["HC"]),
            Node::new("g", NodeKind::ExclusiveGateway, ""),
            Node::new("t", NodeKind::Task, "Notify").with_kpis(["NC"]),
            Node::new("e", NodeKind::EndEvent, ""),
        ],
        vec![
            SequenceFlow::new("f0", "s", "p"),
            SequenceFlow::new("f1", "p", "g"),
            SequenceFlow::new("f2", "g", "t").when(c("x > 100")),
            SequenceFlow::new("f3", "g", "e").default_flow(),
            SequenceFlow::new("f4", "t", "e"),
        ],
        BTreeMap::new(),
    )
    .unwrap();
    (a, b)
}

#[test]
fn direction_prefers_smaller_minimum_diagnosis() {
    let (a, b) = asymmetric_pair();
    let cases = [case("c1", &[("x", 0), ("y", 1), ("z", 1)]), case("c2", &[("x", 0), ("y", 2), ("z", 0)])];
    let report = choose_direction(&a, &b, &cases, &cfg(), &opts()).unwrap();
    assert_eq!((report.reference_model_id.as_str(), report.target_model_id.as_str()), ("a", "b"));
    assert_eq!(sets(report.chosen.effective()), [vec!["g"]]);
    assert_eq!(sets(report.alternative.effective()), [vec!["ga", "gb"]]);
    assert_eq!(report.note, ORIENTATION_NOTE);
}

#[test]
fn symmetric_difference_breaks_tie_on_model_id() {
    let a = chain("alpha", &[("g", "x > 5", Some(("Notify", "NC")))]);
    let b = chain("beta", &[("g", "x > 6", Some(("Notify", "NC")))]);
    let cases = [case("c", &[("x", 6)])];
    for (l, r) in [(&a, &b), (&b, &a)] {
        let report = choose_direction(l, r, &cases, &cfg(), &opts()).unwrap();
        assert_eq!(report.reference_model_id, "alpha");
        assert_eq!(sets(report.chosen.effective()), [vec!["g"]]);
    }
}

#[test]
fn failing_cases_are_excluded() {
    let r = chain("r", &[("g", "x >= 5", Some(("Notify", "NC")))]);
    let t = chain("t", &[("g", "w >= 5", Some(("Notify", "NC")))]);
    let cases = [case("ok", &[("x", 6), ("w", 1)]), case("bad", &[("x", 6)])];
    let a = collect_conflicts(&r, &t, &cases, &cfg(), &SimOptions::default()).unwrap();
    assert_eq!(a.excluded.len(), 1);
    assert_eq!(a.excluded[0].case_id, "bad");
    assert_eq!(a.problem.conflicts.len(), 1);
}

#[test]
fn emission_sequence_uses_labels() {
    let m = chain("m", &[("g", "x >= 1", Some(("Notify", "NC")))]);
    let t = execute_case(&m, &case("c", &[("x", 1)]), 100).unwrap();
    assert_eq!(t.emissions, [Emission { task: "t_g".into(), kpi: "NC".into(), step: 2 }]);
    assert_eq!(kpi_sequence(&t, &m).labels(), [("Notify", "NC")]);
}
