//! Deterministic execution of process models over a case population.
//!
//! A case is walked token-by-token from the start event. At an exclusive
//! gateway the conditioned branches are tried in document order and the
//! first true one is taken; otherwise the default (or the single
//! unconditioned) flow is used. Every KPI-tagged task emits its KPIs, sorted
//! by name.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpmn::{BpmnError, KpiTagTable, NodeKind, ProcessModel};
use crate::case::CaseRecord;
use crate::condition::EvalError;
use crate::exec::{self, Execution};

pub const KPI_NAMES: [&str; 5] = ["NC", "HC", "RU", "HI", "CS"];
pub const DEFAULT_STEP_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("gateway `{gateway}` has no enabled branch")]
    NoEnabledBranch { gateway: String },
    #[error("at gateway `{gateway}`: {source}")]
    Condition {
        gateway: String,
        #[source]
        source: EvalError,
    },
    #[error("step limit of {limit} exceeded")]
    StepLimitExceeded { limit: usize },
}

impl SimError {
    pub fn missing_variable(&self) -> Option<&str> {
        match self {
            SimError::Condition { source: EvalError::MissingVariable(v), .. } => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emission {
    pub task: String,
    pub kpi: String,
    /// Index into [`Trace::steps`] of the emitting task.
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub gateway: String,
    pub flow: String,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub steps: Vec<String>,
    pub emissions: Vec<Emission>,
    pub decisions: Vec<Decision>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpiPair {
    pub task_label: String,
    pub kpi: String,
    /// Step index of the emitting task on the originating trace.
    pub step: usize,
}

/// The ordered (task, KPI) outputs of one trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpiSequence {
    pub case_id: String,
    pub pairs: Vec<KpiPair>,
}

impl KpiSequence {
    pub fn labels(&self) -> Vec<(&str, &str)> {
        self.pairs.iter().map(|p| (p.task_label.as_str(), p.kpi.as_str())).collect()
    }
}

/// Aggregate KPI outputs of one model over one population.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KpiVector {
    pub values: IndexMap<String, Decimal>,
}

impl KpiVector {
    pub fn new<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Decimal)>,
        S: Into<String>,
    {
        KpiVector { values: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }

    pub fn get(&self, name: &str) -> Option<Decimal> {
        self.values.get(name).copied()
    }

    /// Rounds every component half-to-even and strips trailing zeros.
    pub fn quantized(&self, decimals: u32) -> KpiVector {
        KpiVector {
            values: self
                .values
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        v.round_dp_with_strategy(decimals, rust_decimal::RoundingStrategy::MidpointNearestEven)
                            .normalize(),
                    )
                })
                .collect(),
        }
    }
}

impl fmt::Display for KpiVector {
    /// Canonical print, e.g. `NC=12, HC=4, RU=0.08, HI=0.012, CS=1200`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={}", v.normalize())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("invalid KPI configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KpiConfig {
    pub guidance_capacity: u32,
    pub overload_penalty_alpha: Decimal,
    pub response_rate: Decimal,
    pub cost_saving_per_improved_patient: Decimal,
    /// Label rules for tasks that carry no `kpi:outputs` attribute.
    pub kpi_task_tags: std::collections::BTreeMap<String, Vec<String>>,
}

impl Default for KpiConfig {
    fn default() -> Self {
        KpiConfig {
            guidance_capacity: 50,
            overload_penalty_alpha: Decimal::new(5, 1),
            response_rate: Decimal::new(30, 2),
            cost_saving_per_improved_patient: Decimal::new(1000, 0),
            kpi_task_tags: Default::default(),
        }
    }
}

impl KpiConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name: &str, v: Decimal| {
            if v < Decimal::ZERO || v > Decimal::ONE {
                Err(ConfigError(format!("{name} must lie in [0, 1], got {v}")))
            } else {
                Ok(())
            }
        };
        if self.guidance_capacity == 0 {
            return Err(ConfigError("guidance_capacity must be positive".into()));
        }
        unit("overload_penalty_alpha", self.overload_penalty_alpha)?;
        unit("response_rate", self.response_rate)?;
        if self.cost_saving_per_improved_patient < Decimal::ZERO {
            return Err(ConfigError("cost_saving_per_improved_patient must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn tag_table(&self) -> KpiTagTable {
        KpiTagTable { rules: self.kpi_task_tags.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimOptions {
    pub step_cap: usize,
    pub execution: Execution,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { step_cap: DEFAULT_STEP_CAP, execution: Execution::default() }
    }
}

/// Walks one case through the model.
pub fn execute_case(m: &ProcessModel, case: &CaseRecord, step_cap: usize) -> Result<Trace, SimError> {
    let mut trace =
        Trace { case_id: case.case_id.clone(), steps: Vec::new(), emissions: Vec::new(), decisions: Vec::new() };
    let mut current = m.node_position(&m.start_node().id).expect("start node is indexed");
    loop {
        if trace.steps.len() >= step_cap {
            return Err(SimError::StepLimitExceeded { limit: step_cap });
        }
        let node = &m.nodes()[current];
        let step = trace.steps.len();
        trace.steps.push(node.id.clone());
        let out = m.outgoing_indices(current);
        let next_flow = match node.kind {
            NodeKind::EndEvent => return Ok(trace),
            NodeKind::StartEvent => out[0],
            NodeKind::Task => {
                let kpis: BTreeSet<&String> = node.kpi_outputs.iter().collect();
                trace.emissions.extend(kpis.into_iter().map(|k| Emission {
                    task: node.id.clone(),
                    kpi: k.clone(),
                    step,
                }));
                out[0]
            }
            NodeKind::ExclusiveGateway => {
                let flows = m.flows();
                let mut chosen = None;
                for &fi in out {
                    if let (Some(cond), false) = (&flows[fi].condition, flows[fi].is_default) {
                        let hit = cond
                            .evaluate(|k| case.get(k))
                            .map_err(|source| SimError::Condition { gateway: node.id.clone(), source })?;
                        if hit {
                            chosen = Some(fi);
                            break;
                        }
                    }
                }
                let chosen = chosen
                    .or_else(|| out.iter().copied().find(|&fi| flows[fi].is_default))
                    .or_else(|| out.iter().copied().find(|&fi| flows[fi].condition.is_none()))
                    .ok_or_else(|| SimError::NoEnabledBranch { gateway: node.id.clone() })?;
                trace.decisions.push(Decision { gateway: node.id.clone(), flow: flows[chosen].id.clone(), step });
                chosen
            }
        };
        current = m.node_position(&m.flows()[next_flow].target).expect("flow targets are indexed");
    }
}

/// The (task label, KPI) sequence of a trace, in execution order.
pub fn kpi_sequence(t: &Trace, m: &ProcessModel) -> KpiSequence {
    KpiSequence {
        case_id: t.case_id.clone(),
        pairs: t
            .emissions
            .iter()
            .map(|e| KpiPair {
                task_label: m.node(&e.task).map(|n| n.label.clone()).unwrap_or_else(|| e.task.clone()),
                kpi: e.kpi.clone(),
                step: e.step,
            })
            .collect(),
    }
}

/// Five-KPI aggregate over successful traces.
///
/// NC counts NC emissions; HC counts distinct cases with an HC emission;
/// RU is guidance load (HC / capacity), linearly penalized above 1 and
/// floored at 0; HI = HC · response_rate / cases_total; CS = HC ·
/// response_rate · cost_saving_per_improved_patient.
pub fn aggregate_kpis(traces: &[Trace], cases_total: usize, cfg: &KpiConfig) -> KpiVector {
    let nc = traces.iter().flat_map(|t| &t.emissions).filter(|e| e.kpi == "NC").count();
    let hc = traces.iter().filter(|t| t.emissions.iter().any(|e| e.kpi == "HC")).count();
    let hc_d = Decimal::from(hc);
    let load = hc_d / Decimal::from(cfg.guidance_capacity);
    let ru = if load <= Decimal::ONE {
        load
    } else {
        (Decimal::ONE - cfg.overload_penalty_alpha * (load - Decimal::ONE)).max(Decimal::ZERO)
    };
    let improved = hc_d * cfg.response_rate;
    let hi = if cases_total == 0 { Decimal::ZERO } else { improved / Decimal::from(cases_total) };
    let cs = improved * cfg.cost_saving_per_improved_patient;
    KpiVector::new([
        ("NC", Decimal::from(nc)),
        ("HC", hc_d),
        ("RU", ru.normalize()),
        ("HI", hi.normalize()),
        ("CS", cs.normalize()),
    ])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub error: String,
}

/// Outcome of running one model over a population.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopulationRun {
    /// Successful traces, in input case order.
    pub traces: Vec<Trace>,
    pub failures: Vec<(CaseRecord, SimError)>,
    pub kpis: KpiVector,
}

impl PopulationRun {
    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.case_id == case_id)
    }

    pub fn failure_summary(&self) -> Vec<CaseFailure> {
        self.failures.iter().map(|(c, e)| CaseFailure { case_id: c.case_id.clone(), error: e.to_string() }).collect()
    }
}

/// Runs every case; per-case failures are collected, and the KPI aggregate
/// is computed over the successful cases only.
pub fn simulate_population(
    m: &ProcessModel,
    cases: &[CaseRecord],
    cfg: &KpiConfig,
    opts: &SimOptions,
) -> PopulationRun {
    let results = exec::map_ordered(opts.execution, cases, |c| execute_case(m, c, opts.step_cap));
    let mut traces = Vec::with_capacity(cases.len());
    let mut failures = Vec::new();
    for (case, r) in cases.iter().zip(results) {
        match r {
            Ok(t) => traces.push(t),
            Err(e) => failures.push((case.clone(), e)),
        }
    }
    let kpis = aggregate_kpis(&traces, traces.len(), cfg);
    PopulationRun { traces, failures, kpis }
}

/// Convenience for callers holding model text.
pub fn parse_and_simulate(
    xml: &str,
    cases: &[CaseRecord],
    cfg: &KpiConfig,
    opts: &SimOptions,
) -> Result<(ProcessModel, PopulationRun), BpmnError> {
    let m = crate::bpmn::parse_bpmn_with(xml, &cfg.tag_table())?;
    let run = simulate_population(&m, cases, cfg, opts);
    Ok((m, run))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::bpmn::{Node, SequenceFlow};
    use crate::condition::{parse_condition, Value};

    fn d(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    fn linear() -> ProcessModel {
        ProcessModel::new(
            "lin",
            vec![
                Node::new("s", NodeKind::StartEvent, "Start"),
                Node::new("t", NodeKind::Task, "Notify").with_kpis(["NC"]),
                Node::new("e", NodeKind::EndEvent, "End"),
            ],
            vec![SequenceFlow::new("f1", "s", "t"), SequenceFlow::new("f2", "t", "e")],
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn gated(default: bool) -> ProcessModel {
        let mut flows = vec![
            SequenceFlow::new("f1", "s", "g"),
            SequenceFlow::new("f2", "g", "t").when(parse_condition("x >= 5").unwrap()),
            SequenceFlow::new("f4", "t", "e"),
        ];
        if default {
            flows.push(SequenceFlow::new("f3", "g", "e").default_flow());
        } else {
            flows.push(SequenceFlow::new("f3", "g", "e").when(parse_condition("x < 0").unwrap()));
        }
        ProcessModel::new(
            "gated",
            vec![
                Node::new("s", NodeKind::StartEvent, ""),
                Node::new("g", NodeKind::ExclusiveGateway, "Check"),
                Node::new("t", NodeKind::Task, "Guide").with_kpis(["NC", "HC"]),
                Node::new("e", NodeKind::EndEvent, ""),
            ],
            flows,
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn case(id: &str, x: &str) -> CaseRecord {
        CaseRecord::new(id).with("x", Value::Number(d(x)))
    }

    #[test]
    fn linear_trace() {
        let t = execute_case(&linear(), &CaseRecord::new("c"), 100).unwrap();
        assert_eq!(t.steps, ["s", "t", "e"]);
        assert_eq!(t.emissions, [Emission { task: "t".into(), kpi: "NC".into(), step: 1 }]);
    }

    #[test]
    fn gateway_routing_and_errors() {
        let m = gated(true);
        assert_eq!(execute_case(&m, &case("a", "7"), 100).unwrap().steps, ["s", "g", "t", "e"]);
        assert_eq!(execute_case(&m, &case("b", "2"), 100).unwrap().steps, ["s", "g", "e"]);
        let none = gated(false);
        assert_eq!(execute_case(&none, &case("c", "2"), 100), Err(SimError::NoEnabledBranch { gateway: "g".into() }));
        let missing = execute_case(&m, &CaseRecord::new("d"), 100).unwrap_err();
        assert_eq!(missing.missing_variable(), Some("x"));
        assert_eq!(execute_case(&m, &case("a", "7"), 3), Err(SimError::StepLimitExceeded { limit: 3 }));
    }

    #[test]
    fn sequence_sorts_kpis_within_task() {
        let m = ProcessModel::new(
            "m",
            vec![
                Node::new("s", NodeKind::StartEvent, ""),
                Node::new("a", NodeKind::Task, "A").with_kpis(["NC"]),
                Node::new("b", NodeKind::Task, "B").with_kpis(["NC", "HC"]),
                Node::new("e", NodeKind::EndEvent, ""),
            ],
            vec![
                SequenceFlow::new("f1", "s", "a"),
                SequenceFlow::new("f2", "a", "b"),
                SequenceFlow::new("f3", "b", "e"),
            ],
            BTreeMap::new(),
        )
        .unwrap();
        let t = execute_case(&m, &CaseRecord::new("c"), 100).unwrap();
        let seq = kpi_sequence(&t, &m);
        assert_eq!(seq.labels(), [("A", "NC"), ("B", "HC"), ("B", "NC")]);

        let silent = execute_case(&linear_without_kpis(), &CaseRecord::new("c"), 100).unwrap();
        assert!(kpi_sequence(&silent, &linear_without_kpis()).pairs.is_empty());
    }

    fn linear_without_kpis() -> ProcessModel {
        ProcessModel::new(
            "m",
            vec![Node::new("s", NodeKind::StartEvent, ""), Node::new("e", NodeKind::EndEvent, "")],
            vec![SequenceFlow::new("f", "s", "e")],
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn single_case_population() {
        let run =
            simulate_population(&linear(), &[CaseRecord::new("c")], &KpiConfig::default(), &SimOptions::default());
        assert_eq!(run.kpis.to_string(), "NC=1, HC=0, RU=0, HI=0, CS=0");
    }

    fn hc_traces(n: usize) -> Vec<Trace> {
        (0..n)
            .map(|i| Trace {
                case_id: format!("c{i}"),
                steps: vec![],
                emissions: vec![
                    Emission { task: "t".into(), kpi: "HC".into(), step: 0 },
                    Emission { task: "t".into(), kpi: "HC".into(), step: 1 },
                ],
                decisions: vec![],
            })
            .collect()
    }

    #[test]
    fn aggregation_formulas() {
        let cfg = KpiConfig { guidance_capacity: 20, ..KpiConfig::default() };
        assert_eq!(aggregate_kpis(&[], 0, &cfg).to_string(), "NC=0, HC=0, RU=0, HI=0, CS=0");

        let v = aggregate_kpis(&hc_traces(10), 40, &cfg);
        assert_eq!(v.get("HC"), Some(d("10")));
        assert_eq!(v.get("RU"), Some(d("0.5")));
        assert_eq!(v.get("HI"), Some(d("0.075")));
        assert_eq!(v.get("CS"), Some(d("3000")));

        // 30 guided against capacity 20: load 1.5, RU = 1 - 0.5 * 0.5
        let v = aggregate_kpis(&hc_traces(30), 30, &cfg);
        assert_eq!(v.get("RU"), Some(d("0.75")));

        let v = aggregate_kpis(&hc_traces(100), 100, &cfg);
        assert_eq!(v.get("RU"), Some(Decimal::ZERO));
    }

    #[test]
    fn failures_are_collected_not_fatal() {
        let m = gated(false);
        let cases = vec![case("ok", "7"), case("stuck", "2"), CaseRecord::new("blank")];
        let run = simulate_population(&m, &cases, &KpiConfig::default(), &SimOptions::default());
        assert_eq!(run.traces.len(), 1);
        assert_eq!(run.failures.len(), 2);
        assert_eq!(run.kpis.get("NC"), Some(d("1")));
        assert_eq!(run.failure_summary()[0].case_id, "stuck");
    }

    #[test]
    fn config_validation() {
        assert!(KpiConfig::default().validate().is_ok());
        assert!(KpiConfig { guidance_capacity: 0, ..Default::default() }.validate().is_err());
        assert!(KpiConfig { response_rate: d("1.2"), ..Default::default() }.validate().is_err());
        assert!(KpiConfig { cost_saving_per_improved_patient: d("-1"), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn quantization_is_half_even() {
        let v = KpiVector::new([("A", d("0.1234565")), ("B", d("0.1234575")), ("C", d("2.50"))]);
        assert_eq!(v.quantized(6).to_string(), "A=0.123456, B=0.123458, C=2.5");
    }
}
