use std::collections::HashMap;

use super::{EdgeKind, NodeId, Snapshot};

/// Directed message-passing relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    ApToAp,
    StaToAp,
    ApToSta,
}

pub const RELATIONS: [Relation; 3] = [Relation::ApToAp, Relation::StaToAp, Relation::ApToSta];

impl Relation {
    pub fn index(self) -> usize {
        match self {
            Relation::ApToAp => 0,
            Relation::StaToAp => 1,
            Relation::ApToSta => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::ApToAp => "ap_ap",
            Relation::StaToAp => "sta_ap",
            Relation::ApToSta => "ap_sta",
        }
    }
}

/// One directed copy of an undirected edge. `src`/`dst` index into
/// `Snapshot::nodes`, `edge` into `Snapshot::edges`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedEdge {
    pub src: usize,
    pub dst: usize,
    pub edge: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirectedEdges {
    /// Indexed by [`Relation::index`].
    pub by_relation: [Vec<DirectedEdge>; 3],
    /// STAs with no serving AP; they take no part in message passing.
    pub excluded_stas: usize,
}

impl DirectedEdges {
    pub fn relation(&self, r: Relation) -> &[DirectedEdge] {
        &self.by_relation[r.index()]
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (
            self.by_relation[0].len(),
            self.by_relation[1].len(),
            self.by_relation[2].len(),
        )
    }

    pub fn total(&self) -> usize {
        self.by_relation.iter().map(Vec::len).sum()
    }
}

/// Splits every undirected edge into its two directed copies, grouped by
/// relation: `n(n-1)` AP→AP, `m` STA→AP and `m` AP→STA for `n` APs and `m`
/// attached STAs.
pub fn build_directed_edges(snapshot: &Snapshot) -> DirectedEdges {
    let pos: HashMap<NodeId, usize> = snapshot
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id, i))
        .collect();
    let mut out = DirectedEdges {
        excluded_stas: snapshot
            .nodes
            .iter()
            .filter(|n| n.is_sta() && n.ap.is_none())
            .count(),
        ..Default::default()
    };
    for (k, e) in snapshot.edges.iter().enumerate() {
        let (Some(&u), Some(&v)) = (pos.get(&e.u), pos.get(&e.v)) else {
            continue;
        };
        match e.kind {
            EdgeKind::ApAp => {
                out.by_relation[0].push(DirectedEdge { src: u, dst: v, edge: k });
                out.by_relation[0].push(DirectedEdge { src: v, dst: u, edge: k });
            }
            EdgeKind::ApSta => {
                let (ap, sta) = if snapshot.nodes[u].is_ap() { (u, v) } else { (v, u) };
                if snapshot.nodes[sta].ap.is_none() {
                    continue;
                }
                out.by_relation[1].push(DirectedEdge { src: sta, dst: ap, edge: k });
                out.by_relation[2].push(DirectedEdge { src: ap, dst: sta, edge: k });
            }
        }
    }
    out
}
