use std::collections::BTreeMap;

use roxmltree::{Document, Node as XmlNode};

use super::{BpmnError, Node, NodeKind, ProcessModel, SequenceFlow, BPMN_NS, KPI_NS};
use crate::condition::parse_condition;

/// Fallback KPI tagging for tasks that carry no `kpi:outputs` attribute:
/// KPI name → label fragments, matched case-insensitively as substrings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KpiTagTable {
    pub rules: BTreeMap<String, Vec<String>>,
}

impl KpiTagTable {
    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// KPI names whose rules match `label`, in name order.
    pub fn kpis_for(&self, label: &str) -> Vec<String> {
        let label = label.to_lowercase();
        self.rules
            .iter()
            .filter(|(_, fragments)| fragments.iter().any(|f| !f.is_empty() && label.contains(&f.to_lowercase())))
            .map(|(k, _)| k.clone())
            .collect()
    }
}

const TASK_ELEMENTS: &[&str] =
    &["task", "userTask", "serviceTask", "scriptTask", "manualTask", "businessRuleTask", "sendTask", "receiveTask"];

// Children that carry nothing the executable subset needs.
const IGNORED_CHILDREN: &[&str] = &[
    "incoming",
    "outgoing",
    "documentation",
    "extensionElements",
    "script",
    "ioSpecification",
    "dataInputAssociation",
    "dataOutputAssociation",
    "property",
];

fn is_bpmn(n: &XmlNode) -> bool {
    matches!(n.tag_name().namespace(), Some(BPMN_NS) | None)
}

fn unsupported(n: &XmlNode) -> BpmnError {
    BpmnError::UnsupportedElement { element: n.tag_name().name().to_string(), id: n.attribute("id").map(String::from) }
}

fn required_attr<'a>(n: &XmlNode<'a, '_>, name: &str) -> Result<&'a str, BpmnError> {
    n.attribute(name).ok_or_else(|| {
        BpmnError::Invalid(format!("`{}` element is missing the `{name}` attribute", n.tag_name().name()))
    })
}

fn check_children(n: &XmlNode, allowed: &[&str]) -> Result<(), BpmnError> {
    for child in n.children().filter(XmlNode::is_element) {
        if !is_bpmn(&child) {
            continue;
        }
        let name = child.tag_name().name();
        if !IGNORED_CHILDREN.contains(&name) && !allowed.contains(&name) {
            return Err(unsupported(&child));
        }
    }
    Ok(())
}

pub fn parse_bpmn(xml_text: &str) -> Result<ProcessModel, BpmnError> {
    parse_bpmn_with(xml_text, &KpiTagTable::default())
}

/// Parses a BPMN document; tasks without a `kpi:outputs` attribute are tagged
/// through `tags`.
pub fn parse_bpmn_with(xml_text: &str, tags: &KpiTagTable) -> Result<ProcessModel, BpmnError> {
    let doc = Document::parse(xml_text).map_err(|e| BpmnError::XmlSyntax(e.to_string()))?;
    let root = doc.root_element();
    if !is_bpmn(&root) || root.tag_name().name() != "definitions" {
        return Err(BpmnError::Invalid(format!(
            "root element is `{}`, expected `definitions`",
            root.tag_name().name()
        )));
    }

    let mut process = None;
    for child in root.children().filter(XmlNode::is_element) {
        if !is_bpmn(&child) {
            continue; // diagram interchange and vendor extensions
        }
        match child.tag_name().name() {
            "process" => {
                if process.replace(child).is_some() {
                    return Err(BpmnError::UnsupportedElement { element: "process (more than one)".into(), id: None });
                }
            }
            "documentation" | "extensionElements" | "itemDefinition" => {}
            _ => return Err(unsupported(&child)),
        }
    }
    let process = process.ok_or_else(|| BpmnError::Invalid("no `process` element".into()))?;
    let model_id = required_attr(&process, "id")?.to_string();

    let mut nodes = Vec::new();
    let mut flows = Vec::new();
    let mut defaults: Vec<(String, String)> = Vec::new();
    let mut metadata = BTreeMap::new();

    for el in process.children().filter(XmlNode::is_element) {
        if !is_bpmn(&el) {
            continue;
        }
        let name = el.tag_name().name();
        let label = || el.attribute("name").unwrap_or_default().to_string();
        match name {
            "startEvent" | "endEvent" => {
                check_children(&el, &[])?;
                let kind = if name == "startEvent" { NodeKind::StartEvent } else { NodeKind::EndEvent };
                nodes.push(Node::new(required_attr(&el, "id")?, kind, label()));
            }
            n if TASK_ELEMENTS.contains(&n) => {
                check_children(&el, &[])?;
                let label = label();
                let kpi_outputs = match el.attribute((KPI_NS, "outputs")) {
                    Some(raw) => raw.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
                    None => tags.kpis_for(&label),
                };
                let mut node = Node::new(required_attr(&el, "id")?, NodeKind::Task, label);
                node.kpi_outputs = kpi_outputs;
                nodes.push(node);
            }
            "exclusiveGateway" => {
                check_children(&el, &[])?;
                let id = required_attr(&el, "id")?;
                if let Some(d) = el.attribute("default") {
                    defaults.push((id.to_string(), d.to_string()));
                }
                nodes.push(Node::new(id, NodeKind::ExclusiveGateway, label()));
            }
            "sequenceFlow" => {
                check_children(&el, &["conditionExpression"])?;
                let mut flow = SequenceFlow::new(
                    required_attr(&el, "id")?,
                    required_attr(&el, "sourceRef")?,
                    required_attr(&el, "targetRef")?,
                );
                let cond =
                    el.children().find(|c| c.is_element() && is_bpmn(c) && c.has_tag_name("conditionExpression"));
                if let Some(cond) = cond {
                    let text: String = cond.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect();
                    let text = text.trim();
                    if !text.is_empty() {
                        let parsed = parse_condition(text).map_err(|source| BpmnError::ConditionParse {
                            gateway: flow.source.clone(),
                            flow: flow.id.clone(),
                            source,
                        })?;
                        flow.condition = Some(parsed);
                    }
                }
                flows.push(flow);
            }
            "extensionElements" => {
                for meta in el.children().filter(|c| c.is_element() && c.tag_name().namespace() == Some(KPI_NS)) {
                    if meta.tag_name().name() == "meta" {
                        metadata.insert(
                            required_attr(&meta, "name")?.to_string(),
                            meta.attribute("value").unwrap_or_default().to_string(),
                        );
                    }
                }
            }
            "documentation" => {}
            _ => return Err(unsupported(&el)),
        }
    }

    for (gateway, flow_id) in defaults {
        match flows.iter_mut().find(|f| f.id == flow_id) {
            Some(f) if f.source == gateway => f.is_default = true,
            Some(f) => {
                return Err(BpmnError::Invalid(format!(
                    "default flow `{}` of gateway `{gateway}` starts at `{}`",
                    f.id, f.source
                )))
            }
            None => return Err(BpmnError::DanglingReference { flow: flow_id, node: gateway }),
        }
    }

    ProcessModel::new(model_id, nodes, flows, metadata)
}
