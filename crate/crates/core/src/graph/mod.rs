//! Domain model for dynamic WLAN deployments.
//!
//! A [`DeploymentSequence`] is a discrete-time dynamic graph: an ordered
//! list of [`Snapshot`]s, each holding AP and STA nodes, undirected AP-AP
//! and AP-STA edges, and per-STA throughput labels in Mbps.

mod dataset;
mod edges;
mod features;

pub use dataset::{read_dataset, read_dataset_from, write_dataset, write_dataset_to, DatasetError};
pub use edges::{build_directed_edges, DirectedEdges, Relation, RELATIONS};
pub use features::{
    assemble_edge_features, assemble_node_features, edge_feature_matrix, node_feature_matrix,
    FeatureError, EDGE_FEATURES, MIN_DISTANCE_M, NODE_FEATURES,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Number of consecutive 20 MHz channels available to a deployment.
pub const NUM_CHANNELS: u8 = 8;

/// Bandwidth of one channel in MHz.
pub const CHANNEL_WIDTH_MHZ: f64 = 20.0;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    #[serde(rename = "AP")]
    Ap,
    #[serde(rename = "STA")]
    Sta,
}

/// Contiguous inclusive channel range `[lo, hi]`, serialized as a
/// two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u8; 2]", into = "[u8; 2]")]
pub struct ChannelRange {
    pub lo: u8,
    pub hi: u8,
}

impl From<[u8; 2]> for ChannelRange {
    fn from([lo, hi]: [u8; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<ChannelRange> for [u8; 2] {
    fn from(r: ChannelRange) -> Self {
        [r.lo, r.hi]
    }
}

impl ChannelRange {
    pub fn new(lo: u8, hi: u8) -> Self {
        Self { lo, hi }
    }

    pub fn full() -> Self {
        Self::new(0, NUM_CHANNELS - 1)
    }

    pub fn is_valid(&self) -> bool {
        self.lo <= self.hi && self.hi < NUM_CHANNELS
    }

    pub fn width(&self) -> u8 {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, ch: u8) -> bool {
        (self.lo..=self.hi).contains(&ch)
    }

    /// Number of channels shared with `other`.
    pub fn overlap(&self, other: &ChannelRange) -> u8 {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }

    pub fn bandwidth_mhz(&self) -> f64 {
        f64::from(self.width()) * CHANNEL_WIDTH_MHZ
    }
}

/// Primary channel plus the available (bonded) range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub primary: u8,
    pub range: ChannelRange,
}

impl ChannelConfig {
    pub fn is_valid(&self) -> bool {
        self.range.is_valid() && self.range.contains(self.primary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlanNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    /// `None` encodes a node with no channel information (all-zero slots).
    pub channels: Option<ChannelConfig>,
    /// AP only; 0 for STAs.
    #[serde(default)]
    pub airtime: f64,
    /// STA only, in dB; 0 for APs.
    #[serde(default)]
    pub sinr: f64,
    /// Serving AP of an STA; `None` for APs and out-of-coverage STAs.
    #[serde(default)]
    pub ap: Option<NodeId>,
    /// Member of an external interference-source pair.
    #[serde(default)]
    pub interferer: bool,
    /// STA picked to move during the sequence.
    #[serde(default)]
    pub mobile: bool,
}

impl WlanNode {
    pub fn is_ap(&self) -> bool {
        self.kind == NodeKind::Ap
    }

    pub fn is_sta(&self) -> bool {
        self.kind == NodeKind::Sta
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn distance_to(&self, other: &WlanNode) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    /// STA that takes part in prediction: attached and not an interferer.
    pub fn is_target(&self) -> bool {
        self.is_sta() && self.ap.is_some() && !self.interferer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "AP-STA")]
    ApSta,
    #[serde(rename = "AP-AP")]
    ApAp,
}

/// Undirected edge. For AP-STA edges `u` is the AP and `v` the STA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlanEdge {
    pub u: NodeId,
    pub v: NodeId,
    pub kind: EdgeKind,
    pub distance: f64,
    /// dBm, AP-STA only.
    #[serde(default)]
    pub rssi: f64,
    /// dBm, AP-AP only.
    #[serde(default)]
    pub interference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Snapshot index; wall-clock time is `t * t_g`.
    pub t: u32,
    pub nodes: Vec<WlanNode>,
    pub edges: Vec<WlanEdge>,
    /// Throughput in Mbps per attached STA.
    #[serde(default)]
    pub labels: BTreeMap<NodeId, f64>,
}

impl Snapshot {
    pub fn node(&self, id: NodeId) -> Option<&WlanNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn aps(&self) -> impl Iterator<Item = &WlanNode> {
        self.nodes.iter().filter(|n| n.is_ap())
    }

    pub fn stas(&self) -> impl Iterator<Item = &WlanNode> {
        self.nodes.iter().filter(|n| n.is_sta())
    }

    /// `(target STA id, label)` pairs used for loss and evaluation.
    pub fn targets(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.is_target())
            .filter_map(|n| self.labels.get(&n.id).map(|&y| (n.id, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSize {
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentSequence {
    pub id: u64,
    pub setup: u8,
    /// Seconds per snapshot.
    pub t_g: f64,
    pub map: MapSize,
    pub snapshots: Vec<Snapshot>,
}

impl DeploymentSequence {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Number of labelled target STA-time pairs.
    pub fn target_count(&self) -> usize {
        self.snapshots.iter().map(|s| s.targets().count()).sum()
    }
}
