use thiserror::Error;

use super::{EdgeKind, NodeId, NodeKind, WlanEdge, WlanNode, NUM_CHANNELS};
use crate::autodiff::Tensor;

/// Width of an assembled node feature vector.
pub const NODE_FEATURES: usize = 21;
/// Width of an assembled edge feature vector.
pub const EDGE_FEATURES: usize = 4;
/// Distances below this (co-located transmitter and receiver) are clamped.
pub const MIN_DISTANCE_M: f64 = 0.01;

const PRIMARY_AT: usize = 3;
const AVAILABLE_AT: usize = PRIMARY_AT + NUM_CHANNELS as usize;
const AIRTIME_AT: usize = AVAILABLE_AT + NUM_CHANNELS as usize;
const SINR_AT: usize = AIRTIME_AT + 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("node {id}: channel {channel} outside [0, {NUM_CHANNELS})")]
    InvalidChannel { id: NodeId, channel: u8 },
    #[error("node {id}: primary channel {primary} not in available range [{lo}, {hi}]")]
    PrimaryOutsideRange { id: NodeId, primary: u8, lo: u8, hi: u8 },
    #[error("edge {u}-{v}: negative distance {distance}")]
    NegativeDistance { u: NodeId, v: NodeId, distance: f64 },
}

/// Layout: `[kind | x, y | primary one-hot (8) | available multi-hot (8) |
/// airtime | sinr]`, with kind 0 for AP and 1 for STA.
pub fn assemble_node_features(node: &WlanNode) -> Result<[f64; NODE_FEATURES], FeatureError> {
    let mut f = [0.0; NODE_FEATURES];
    f[0] = match node.kind {
        NodeKind::Ap => 0.0,
        NodeKind::Sta => 1.0,
    };
    f[1] = node.x;
    f[2] = node.y;
    if let Some(cfg) = node.channels {
        for ch in [cfg.primary, cfg.range.lo, cfg.range.hi] {
            if ch >= NUM_CHANNELS {
                return Err(FeatureError::InvalidChannel { id: node.id, channel: ch });
            }
        }
        if !cfg.is_valid() {
            return Err(FeatureError::PrimaryOutsideRange {
                id: node.id,
                primary: cfg.primary,
                lo: cfg.range.lo,
                hi: cfg.range.hi,
            });
        }
        f[PRIMARY_AT + cfg.primary as usize] = 1.0;
        for ch in cfg.range.lo..=cfg.range.hi {
            f[AVAILABLE_AT + ch as usize] = 1.0;
        }
    }
    if node.is_ap() {
        f[AIRTIME_AT] = node.airtime;
    } else {
        f[SINR_AT] = node.sinr;
    }
    Ok(f)
}

/// Layout: `[kind | distance | rssi | interference]`, kind 0 for AP-STA and
/// 1 for AP-AP. Both directed copies of an edge share this vector.
pub fn assemble_edge_features(edge: &WlanEdge) -> Result<[f64; EDGE_FEATURES], FeatureError> {
    if edge.distance < 0.0 || edge.distance.is_nan() {
        return Err(FeatureError::NegativeDistance {
            u: edge.u,
            v: edge.v,
            distance: edge.distance,
        });
    }
    let distance = edge.distance.max(MIN_DISTANCE_M);
    Ok(match edge.kind {
        EdgeKind::ApSta => [0.0, distance, edge.rssi, 0.0],
        EdgeKind::ApAp => [1.0, distance, 0.0, edge.interference],
    })
}

/// Stacks node feature vectors into a matrix, one row per node.
pub fn node_feature_matrix<'a>(
    nodes: impl IntoIterator<Item = &'a WlanNode>,
) -> Result<Tensor, FeatureError> {
    let rows = nodes
        .into_iter()
        .map(assemble_node_features)
        .collect::<Result<Vec<_>, _>>()?;
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Tensor::from_shape_vec((rows.len(), NODE_FEATURES), flat).expect("row width"))
}

pub fn edge_feature_matrix<'a>(
    edges: impl IntoIterator<Item = &'a WlanEdge>,
) -> Result<Tensor, FeatureError> {
    let rows = edges
        .into_iter()
        .map(assemble_edge_features)
        .collect::<Result<Vec<_>, _>>()?;
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Tensor::from_shape_vec((rows.len(), EDGE_FEATURES), flat).expect("row width"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ChannelConfig, ChannelRange};

    fn ap(primary: u8, lo: u8, hi: u8) -> WlanNode {
        WlanNode {
            id: 0,
            kind: NodeKind::Ap,
            x: 1.0,
            y: 2.0,
            channels: Some(ChannelConfig {
                primary,
                range: ChannelRange::new(lo, hi),
            }),
            airtime: 0.5,
            sinr: 0.0,
            ap: None,
            interferer: false,
            mobile: false,
        }
    }

    #[test]
    fn ap_layout() {
        let f = assemble_node_features(&ap(3, 2, 4)).unwrap();
        let expected = [
            0.0, 1.0, 2.0, //
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, //
            0.5, 0.0,
        ];
        assert_eq!(f, expected);
    }

    #[test]
    fn sta_without_channels() {
        let sta = WlanNode {
            id: 7,
            kind: NodeKind::Sta,
            x: -3.5,
            y: 12.25,
            channels: None,
            airtime: 0.9,
            sinr: 0.0,
            ap: Some(0),
            interferer: false,
            mobile: true,
        };
        let f = assemble_node_features(&sta).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!((f[1], f[2]), (-3.5, 12.25));
        // airtime is an AP-only slot
        assert!(f[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_channels_rejected() {
        assert!(matches!(
            assemble_node_features(&ap(8, 2, 4)),
            Err(FeatureError::InvalidChannel { channel: 8, .. })
        ));
        assert!(matches!(
            assemble_node_features(&ap(1, 2, 4)),
            Err(FeatureError::PrimaryOutsideRange { .. })
        ));
    }

    fn edge(kind: EdgeKind, distance: f64, rssi: f64, interference: f64) -> WlanEdge {
        WlanEdge {
            u: 0,
            v: 1,
            kind,
            distance,
            rssi,
            interference,
        }
    }

    #[test]
    fn edge_layouts() {
        assert_eq!(
            assemble_edge_features(&edge(EdgeKind::ApSta, 3.0, -60.0, 0.0)).unwrap(),
            [0.0, 3.0, -60.0, 0.0]
        );
        assert_eq!(
            assemble_edge_features(&edge(EdgeKind::ApAp, 10.0, 0.0, -70.0)).unwrap(),
            [1.0, 10.0, 0.0, -70.0]
        );
        assert_eq!(
            assemble_edge_features(&edge(EdgeKind::ApAp, 0.0, 0.0, -31.0)).unwrap(),
            [1.0, 0.01, 0.0, -31.0]
        );
        assert!(assemble_edge_features(&edge(EdgeKind::ApAp, -1.0, 0.0, 0.0)).is_err());
    }
}
