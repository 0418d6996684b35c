//! Exact enumeration of subset-minimal hitting sets.
//!
//! Depth-first branch-and-bound over the conflict family: pick the first
//! conflict not yet hit and branch on each of its members. Members tried
//! earlier at the same branch point are forbidden in the subtree, so every
//! candidate set is generated along exactly one path. Candidates that are
//! not minimal are filtered afterwards.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub const DEFAULT_CARDINALITY_CAP: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnosis {
    pub cardinality: usize,
    pub gateways: BTreeSet<String>,
}

impl Diagnosis {
    pub fn new(gateways: BTreeSet<String>) -> Self {
        Diagnosis { cardinality: gateways.len(), gateways }
    }

    pub fn hits(&self, conflict: &BTreeSet<String>) -> bool {
        !self.gateways.is_disjoint(conflict)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HittingSets {
    /// Ascending cardinality, then lexicographic gateway ids.
    pub diagnoses: Vec<Diagnosis>,
    /// Some branch reached the cardinality cap with conflicts still unhit,
    /// so larger minimal hitting sets may be missing.
    pub truncated: bool,
}

struct Search<'a> {
    conflicts: &'a [Vec<usize>],
    cap: usize,
    chosen: Vec<usize>,
    forbidden: Vec<bool>,
    found: Vec<Vec<usize>>,
    truncated: bool,
}

impl Search<'_> {
    fn run(&mut self) {
        let hit = |c: &Vec<usize>, chosen: &[usize]| c.iter().any(|e| chosen.contains(e));
        let Some(open) = self.conflicts.iter().find(|c| !hit(c, &self.chosen)) else {
            let mut set = self.chosen.clone();
            set.sort_unstable();
            self.found.push(set);
            return;
        };
        if self.chosen.len() >= self.cap {
            self.truncated = true;
            return;
        }
        let mut banned = Vec::new();
        for &e in open {
            if self.forbidden[e] {
                continue;
            }
            self.chosen.push(e);
            self.run();
            self.chosen.pop();
            self.forbidden[e] = true;
            banned.push(e);
        }
        for e in banned {
            self.forbidden[e] = false;
        }
    }
}

fn is_minimal(set: &[usize], conflicts: &[Vec<usize>]) -> bool {
    // Every member must be the only hit of some conflict.
    set.iter().all(|&e| conflicts.iter().any(|c| c.contains(&e) && c.iter().filter(|x| set.contains(x)).count() == 1))
}

/// All subset-minimal hitting sets of `conflicts` with at most `cap` elements.
///
/// An empty family yields the single empty diagnosis. An empty conflict can
/// never be hit, so it yields no diagnoses.
pub fn minimal_hitting_sets(conflicts: &[BTreeSet<String>], cap: usize) -> HittingSets {
    let universe: Vec<&String> = conflicts.iter().flatten().collect::<BTreeSet<_>>().into_iter().collect();
    let index = |g: &String| universe.binary_search(&g).expect("member of universe");
    let mut family: Vec<Vec<usize>> = conflicts.iter().map(|c| c.iter().map(index).collect()).collect();
    family.sort();
    family.dedup();
    if family.iter().any(Vec::is_empty) {
        return HittingSets { diagnoses: Vec::new(), truncated: false };
    }
    // A superset of another conflict is hit whenever the subset is.
    let reduced: Vec<Vec<usize>> = family
        .iter()
        .filter(|c| !family.iter().any(|d| d != *c && d.len() < c.len() && d.iter().all(|x| c.contains(x))))
        .cloned()
        .collect();
    let mut reduced = reduced;
    reduced.sort_by_key(Vec::len);

    let mut search = Search {
        conflicts: &reduced,
        cap,
        chosen: Vec::new(),
        forbidden: vec![false; universe.len()],
        found: Vec::new(),
        truncated: false,
    };
    search.run();

    let mut diagnoses: Vec<Diagnosis> = search
        .found
        .iter()
        .filter(|s| is_minimal(s, &reduced))
        .map(|s| Diagnosis::new(s.iter().map(|&i| universe[i].clone()).collect()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    diagnoses.sort();
    HittingSets { diagnoses, truncated: search.truncated }
}
