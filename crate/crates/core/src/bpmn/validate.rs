use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{NodeKind, ProcessModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCategory {
    /// Not reachable from the start event.
    Unreachable,
    /// No path to any end event.
    NoTermination,
    /// Gateway whose branches are all conditioned and that has no default.
    NoDefaultPath,
    /// Gateway with more than one fallback (unconditioned or default) flow.
    MultipleUnconditioned,
    /// Non-gateway node with several outgoing flows (an implicit split).
    ImplicitSplit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub node_id: String,
    pub category: IssueCategory,
}

fn reach(n: usize, start: &[usize], edges: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = start.iter().copied().collect();
    for &s in start {
        seen[s] = true;
    }
    while let Some(u) = queue.pop_front() {
        for &v in &edges[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Minimal well-formedness checks. Issues are listed in node document order.
pub fn validate_structure(m: &ProcessModel) -> Vec<Issue> {
    let nodes = m.nodes();
    let n = nodes.len();
    let pos = |id: &str| m.node_position(id).expect("flows reference existing nodes");
    let mut fwd = vec![Vec::new(); n];
    let mut rev = vec![Vec::new(); n];
    for f in m.flows() {
        let (s, t) = (pos(&f.source), pos(&f.target));
        fwd[s].push(t);
        rev[t].push(s);
    }
    let from_start = reach(n, &[pos(&m.start_node().id)], &fwd);
    let ends: Vec<usize> = (0..n).filter(|&i| nodes[i].kind == NodeKind::EndEvent).collect();
    let to_end = reach(n, &ends, &rev);

    let mut issues = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let mut push = |category| issues.push(Issue { node_id: node.id.clone(), category });
        if !from_start[i] {
            push(IssueCategory::Unreachable);
        }
        if !to_end[i] {
            push(IssueCategory::NoTermination);
        }
        let out = m.outgoing_indices(i);
        match node.kind {
            NodeKind::ExclusiveGateway => {
                let flows = || out.iter().map(|&fi| &m.flows()[fi]);
                let defaults = flows().filter(|f| f.is_default).count();
                let bare = flows().filter(|f| !f.is_default && f.condition.is_none()).count();
                match (defaults, bare) {
                    (1, 0) | (0, 1) => {}
                    (0, 0) => push(IssueCategory::NoDefaultPath),
                    _ => push(IssueCategory::MultipleUnconditioned),
                }
            }
            NodeKind::StartEvent | NodeKind::Task if out.len() > 1 => push(IssueCategory::ImplicitSplit),
            _ => {}
        }
    }
    issues
}
