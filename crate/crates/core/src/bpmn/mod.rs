//! The executable BPMN subset: start/end events, tasks, exclusive gateways
//! and sequence flows, with KPI tags on tasks.
//!
//! KPI tags travel as the extension attribute `kpi:outputs="NC;HC"` on task
//! elements (namespace [`KPI_NS`]). Gateway conditions are plain text in the
//! `conditionExpression` child of a sequence flow.

mod parse;
mod validate;
mod write;

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::condition::{Condition, ConditionParseError};

pub use parse::{parse_bpmn, parse_bpmn_with, KpiTagTable};
pub use validate::{validate_structure, Issue, IssueCategory};
pub use write::serialize_bpmn;

pub const BPMN_NS: &str = "http://www.omg.org/spec/BPMN/20100524/MODEL";
pub const KPI_NS: &str = "urn:ambiguity:kpi:1.0";
pub const XSI_NS: &str = "http://www.w3.org/2001/XMLSchema-instance";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    StartEvent,
    EndEvent,
    Task,
    ExclusiveGateway,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
    pub kpi_outputs: Vec<String>,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind, label: impl Into<String>) -> Self {
        Node { id: id.into(), kind, label: label.into(), kpi_outputs: Vec::new() }
    }

    pub fn with_kpis<I, S>(mut self, kpis: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.kpi_outputs = kpis.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceFlow {
    pub id: String,
    pub source: String,
    pub target: String,
    pub condition: Option<Condition>,
    pub is_default: bool,
}

impl SequenceFlow {
    pub fn new(id: impl Into<String>, source: impl Into<String>, target: impl Into<String>) -> Self {
        SequenceFlow { id: id.into(), source: source.into(), target: target.into(), condition: None, is_default: false }
    }

    pub fn when(mut self, condition: Condition) -> Self {
        self.condition = Some(condition);
        self
    }

    pub fn default_flow(mut self) -> Self {
        self.is_default = true;
        self
    }
}

#[derive(Debug, Error)]
pub enum BpmnError {
    #[error("malformed XML: {0}")]
    XmlSyntax(String),
    #[error("unsupported BPMN element `{element}`{}", id.as_ref().map(|i| format!(" (id `{i}`)")).unwrap_or_default())]
    UnsupportedElement { element: String, id: Option<String> },
    #[error("flow `{flow}` references unknown node `{node}`")]
    DanglingReference { flow: String, node: String },
    #[error("condition on flow `{flow}` from gateway `{gateway}`: {source}")]
    ConditionParse {
        gateway: String,
        flow: String,
        #[source]
        source: ConditionParseError,
    },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// A parsed, immutable process model.
///
/// Construction through [`ProcessModel::new`] checks the structural
/// invariants: unique ids, exactly one start event, at least one end event,
/// every flow endpoint exists, every non-end node has an outgoing flow,
/// conditions only leave exclusive gateways, and each gateway has at most one
/// default flow.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessModel {
    pub model_id: String,
    pub metadata: BTreeMap<String, String>,
    nodes: Vec<Node>,
    flows: Vec<SequenceFlow>,
    start: usize,
    node_index: HashMap<String, usize>,
    outgoing: Vec<Vec<usize>>,
}

/// Read-only projection of one exclusive gateway.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GatewayView {
    pub gateway_id: String,
    pub label: String,
    /// Conditioned outgoing flows in document order.
    pub branches: Vec<(String, Condition)>,
    pub default_flow: Option<String>,
    /// Non-default outgoing flows without a condition.
    pub unconditioned: Vec<String>,
}

impl ProcessModel {
    pub fn new(
        model_id: impl Into<String>,
        nodes: Vec<Node>,
        flows: Vec<SequenceFlow>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, BpmnError> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(BpmnError::Invalid(format!("duplicate node id `{}`", n.id)));
            }
            if n.kind != NodeKind::Task && !n.kpi_outputs.is_empty() {
                return Err(BpmnError::Invalid(format!("KPI outputs on non-task node `{}`", n.id)));
            }
            let mut seen = HashSet::new();
            if let Some(dup) = n.kpi_outputs.iter().find(|k| !seen.insert(k.as_str())) {
                return Err(BpmnError::Invalid(format!("duplicate KPI `{dup}` on task `{}`", n.id)));
            }
        }
        let starts: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].kind == NodeKind::StartEvent).collect();
        if starts.len() != 1 {
            return Err(BpmnError::Invalid(format!("expected exactly one start event, found {}", starts.len())));
        }
        if !nodes.iter().any(|n| n.kind == NodeKind::EndEvent) {
            return Err(BpmnError::Invalid("model has no end event".into()));
        }

        let mut flow_ids = HashSet::new();
        let mut outgoing = vec![Vec::new(); nodes.len()];
        let mut defaults = HashSet::new();
        for (fi, f) in flows.iter().enumerate() {
            if !flow_ids.insert(f.id.as_str()) || node_index.contains_key(&f.id) {
                return Err(BpmnError::Invalid(format!("duplicate element id `{}`", f.id)));
            }
            for end in [&f.source, &f.target] {
                if !node_index.contains_key(end) {
                    return Err(BpmnError::DanglingReference { flow: f.id.clone(), node: end.clone() });
                }
            }
            let src = node_index[&f.source];
            let from_gateway = nodes[src].kind == NodeKind::ExclusiveGateway;
            if f.condition.is_some() && !from_gateway {
                return Err(BpmnError::Invalid(format!(
                    "flow `{}` has a condition but its source is not a gateway",
                    f.id
                )));
            }
            if f.is_default {
                if !from_gateway {
                    return Err(BpmnError::Invalid(format!("default flow `{}` does not leave a gateway", f.id)));
                }
                if f.condition.is_some() {
                    return Err(BpmnError::Invalid(format!("default flow `{}` carries a condition", f.id)));
                }
                if !defaults.insert(src) {
                    return Err(BpmnError::Invalid(format!("gateway `{}` has more than one default flow", f.source)));
                }
            }
            outgoing[src].push(fi);
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.kind == NodeKind::EndEvent {
                if !outgoing[i].is_empty() {
                    return Err(BpmnError::Invalid(format!("end event `{}` has outgoing flows", n.id)));
                }
            } else if outgoing[i].is_empty() {
                return Err(BpmnError::Invalid(format!("node `{}` has no outgoing flow", n.id)));
            }
        }

        Ok(ProcessModel { model_id: model_id.into(), metadata, nodes, flows, start: starts[0], node_index, outgoing })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn flows(&self) -> &[SequenceFlow] {
        &self.flows
    }

    pub fn start_node(&self) -> &Node {
        &self.nodes[self.start]
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.node_index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn flow(&self, id: &str) -> Option<&SequenceFlow> {
        self.flows.iter().find(|f| f.id == id)
    }

    /// Outgoing flows of `node_id` in document order.
    pub fn outgoing(&self, node_id: &str) -> impl Iterator<Item = &SequenceFlow> + '_ {
        let idx = self.node_index.get(node_id).copied();
        idx.into_iter().flat_map(move |i| self.outgoing[i].iter().map(move |&fi| &self.flows[fi]))
    }

    pub(crate) fn node_position(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub(crate) fn outgoing_indices(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    /// All exclusive gateways in document order.
    pub fn gateways(&self) -> Vec<GatewayView> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::ExclusiveGateway)
            .map(|n| {
                let mut view = GatewayView {
                    gateway_id: n.id.clone(),
                    label: n.label.clone(),
                    branches: Vec::new(),
                    default_flow: None,
                    unconditioned: Vec::new(),
                };
                for f in self.outgoing(&n.id) {
                    match (&f.condition, f.is_default) {
                        (_, true) => view.default_flow = Some(f.id.clone()),
                        (Some(c), false) => view.branches.push((f.id.clone(), c.clone())),
                        (None, false) => view.unconditioned.push(f.id.clone()),
                    }
                }
                view
            })
            .collect()
    }

    pub fn gateway(&self, id: &str) -> Option<GatewayView> {
        self.gateways().into_iter().find(|g| g.gateway_id == id)
    }
}
