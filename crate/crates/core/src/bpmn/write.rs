use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::Writer;

use super::{NodeKind, ProcessModel, BPMN_NS, KPI_NS, XSI_NS};

fn emit(w: &mut Writer<Vec<u8>>, ev: Event<'_>) {
    w.write_event(ev).expect("writing to memory cannot fail");
}

/// Serializes a model to BPMN XML that [`super::parse_bpmn`] maps back to an
/// equal model.
pub fn serialize_bpmn(m: &ProcessModel) -> String {
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    emit(&mut w, Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)));

    let defs_id = format!("Definitions_{}", m.model_id);
    let defs = BytesStart::new("bpmn:definitions").with_attributes([
        ("xmlns:bpmn", BPMN_NS),
        ("xmlns:kpi", KPI_NS),
        ("xmlns:xsi", XSI_NS),
        ("id", defs_id.as_str()),
        ("targetNamespace", "urn:ambiguity:models"),
    ]);
    emit(&mut w, Event::Start(defs));
    emit(
        &mut w,
        Event::Start(
            BytesStart::new("bpmn:process").with_attributes([("id", m.model_id.as_str()), ("isExecutable", "true")]),
        ),
    );

    if !m.metadata.is_empty() {
        emit(&mut w, Event::Start(BytesStart::new("bpmn:extensionElements")));
        for (k, v) in &m.metadata {
            emit(
                &mut w,
                Event::Empty(
                    BytesStart::new("kpi:meta").with_attributes([("name", k.as_str()), ("value", v.as_str())]),
                ),
            );
        }
        emit(&mut w, Event::End(BytesEnd::new("bpmn:extensionElements")));
    }

    for n in m.nodes() {
        let tag = match n.kind {
            NodeKind::StartEvent => "bpmn:startEvent",
            NodeKind::EndEvent => "bpmn:endEvent",
            NodeKind::Task => "bpmn:task",
            NodeKind::ExclusiveGateway => "bpmn:exclusiveGateway",
        };
        let mut el = BytesStart::new(tag).with_attributes([("id", n.id.as_str())]);
        if !n.label.is_empty() {
            el.push_attribute(("name", n.label.as_str()));
        }
        let kpis = n.kpi_outputs.join(";");
        if !kpis.is_empty() {
            el.push_attribute(("kpi:outputs", kpis.as_str()));
        }
        if n.kind == NodeKind::ExclusiveGateway {
            if let Some(d) = m.outgoing(&n.id).find(|f| f.is_default) {
                el.push_attribute(("default", d.id.as_str()));
            }
        }
        emit(&mut w, Event::Empty(el));
    }

    for f in m.flows() {
        let el = BytesStart::new("bpmn:sequenceFlow").with_attributes([
            ("id", f.id.as_str()),
            ("sourceRef", f.source.as_str()),
            ("targetRef", f.target.as_str()),
        ]);
        match &f.condition {
            None => emit(&mut w, Event::Empty(el)),
            Some(c) => {
                emit(&mut w, Event::Start(el));
                let text = c.to_string();
                emit(
                    &mut w,
                    Event::Start(
                        BytesStart::new("bpmn:conditionExpression")
                            .with_attributes([("xsi:type", "bpmn:tFormalExpression")]),
                    ),
                );
                emit(&mut w, Event::Text(BytesText::new(&text)));
                emit(&mut w, Event::End(BytesEnd::new("bpmn:conditionExpression")));
                emit(&mut w, Event::End(BytesEnd::new("bpmn:sequenceFlow")));
            }
        }
    }

    emit(&mut w, Event::End(BytesEnd::new("bpmn:process")));
    emit(&mut w, Event::End(BytesEnd::new("bpmn:definitions")));
    let mut out = String::from_utf8(w.into_inner()).expect("writer emits UTF-8");
    out.push('\n');
    out
}
