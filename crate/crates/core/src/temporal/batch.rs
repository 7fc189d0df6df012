use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use super::{ModelError, Scaler};
use crate::autodiff::{RowIndex, Tensor};
use crate::graph::{
    assemble_edge_features, assemble_node_features, build_directed_edges, DeploymentSequence, NodeId,
    EDGE_FEATURES, NODE_FEATURES,
};
use crate::htl::Topology;

/// One STA at one snapshot whose throughput the model predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    /// Position of the deployment inside the batch.
    pub deployment: usize,
    pub deployment_id: u64,
    /// Snapshot position within its sequence.
    pub step: usize,
    /// Snapshot time index as stored in the file.
    pub t: u32,
    pub sta: NodeId,
    /// Node row in the union graph.
    pub row: usize,
    /// Recurrent-state slot of the STA.
    pub slot: usize,
    pub y: Option<f64>,
}

/// Disjoint union of every snapshot of a set of deployments, plus the
/// bookkeeping needed to run per-STA recurrences over it.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub topo: Topology,
    /// `nodes × 21`
    pub node_x: Tensor,
    /// `directed edges × 4`, rows ordered as in `topo`.
    pub edge_x: Tensor,
    pub steps: usize,
    /// Number of recurrent-state slots (tracked STAs over all deployments).
    pub slots: usize,
    /// For each step, the union row feeding each slot, if attached.
    pub step_rows: Vec<RowIndex>,
    /// For each step, whether each slot advances its state.
    pub step_active: Vec<Arc<Vec<bool>>>,
    pub targets: Vec<Target>,
    /// Detached STA occurrences left out of the graph.
    pub excluded_stas: usize,
}

impl SequenceBatch {
    pub fn build(deployments: &[&DeploymentSequence], scaler: Option<&Scaler>) -> Result<Self, ModelError> {
        let steps = deployments.iter().map(|d| d.len()).max().unwrap_or(0);
        let mut node_rows: Vec<[f64; NODE_FEATURES]> = Vec::new();
        let mut edge_rows: [Vec<[f64; EDGE_FEATURES]>; 3] = Default::default();
        let mut rel: [Vec<(usize, usize)>; 3] = Default::default();
        let mut slots = 0;
        let mut step_rows: Vec<Vec<Option<usize>>> = vec![Vec::new(); steps];
        let mut targets = Vec::new();
        let mut excluded = 0;

        for (di, dep) in deployments.iter().enumerate() {
            let tracked: BTreeSet<NodeId> = dep
                .snapshots
                .iter()
                .flat_map(|s| s.nodes.iter().filter(|n| n.is_sta() && !n.interferer).map(|n| n.id))
                .collect();
            let slot_of: HashMap<NodeId, usize> = tracked.iter().enumerate().map(|(i, &id)| (id, slots + i)).collect();
            slots += tracked.len();
            for rows in &mut step_rows {
                rows.resize(slots, None);
            }

            for (step, snap) in dep.snapshots.iter().enumerate() {
                let mut row_of = vec![usize::MAX; snap.nodes.len()];
                for (i, n) in snap.nodes.iter().enumerate() {
                    if n.is_sta() && n.ap.is_none() {
                        excluded += 1;
                        continue;
                    }
                    let mut f = assemble_node_features(n)?;
                    if let Some(s) = scaler {
                        s.node(&mut f);
                    }
                    row_of[i] = node_rows.len();
                    node_rows.push(f);
                    if n.is_target() {
                        let slot = slot_of[&n.id];
                        step_rows[step][slot] = Some(row_of[i]);
                        targets.push(Target {
                            deployment: di,
                            deployment_id: dep.id,
                            step,
                            t: snap.t,
                            sta: n.id,
                            row: row_of[i],
                            slot,
                            y: snap.labels.get(&n.id).copied(),
                        });
                    }
                }
                let directed = build_directed_edges(snap);
                for (r, list) in directed.by_relation.iter().enumerate() {
                    for e in list {
                        let mut f = assemble_edge_features(&snap.edges[e.edge])?;
                        if let Some(s) = scaler {
                            s.edge(&mut f);
                        }
                        edge_rows[r].push(f);
                        rel[r].push((row_of[e.src], row_of[e.dst]));
                    }
                }
            }
        }

        let n = node_rows.len();
        let node_x = Tensor::from_shape_vec((n, NODE_FEATURES), node_rows.into_iter().flatten().collect())
            .expect("node feature width");
        let edges: Vec<[f64; EDGE_FEATURES]> = edge_rows.into_iter().flatten().collect();
        let edge_x = Tensor::from_shape_vec((edges.len(), EDGE_FEATURES), edges.into_iter().flatten().collect())
            .expect("edge feature width");
        let step_active = step_rows
            .iter()
            .map(|rows| Arc::new(rows.iter().map(Option::is_some).collect()))
            .collect();
        Ok(Self {
            topo: Topology::new(n, rel),
            node_x,
            edge_x,
            steps,
            slots,
            step_rows: step_rows.into_iter().map(Arc::new).collect(),
            step_active,
            targets,
            excluded_stas: excluded,
        })
    }

    /// Indices into `targets` that carry a label.
    pub fn labelled(&self) -> Vec<usize> {
        (0..self.targets.len()).filter(|&i| self.targets[i].y.is_some()).collect()
    }
}
