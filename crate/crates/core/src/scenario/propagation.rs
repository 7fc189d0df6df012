use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::{EdgeKind, NodeId, Snapshot, WlanEdge, WlanNode, MIN_DISTANCE_M};

/// Fraction of the Shannon rate a link actually delivers.
pub const EFFICIENCY: f64 = 0.8;
/// Cap on `log2(1 + SINR)` in bits/s/Hz.
pub const MAX_SPECTRAL_EFFICIENCY: f64 = 10.0;
/// Reported interference for AP pairs without channel overlap.
pub const INTERFERENCE_FLOOR_DBM: f64 = -120.0;

/// Log-distance path loss with a clear-channel-assessment threshold that
/// doubles as the coverage boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationModel {
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    /// Loss at 1 m.
    pub reference_loss_db: f64,
    pub noise_floor_dbm: f64,
    pub cca_dbm: f64,
}

impl Default for PropagationModel {
    fn default() -> Self {
        Self {
            tx_power_dbm: 20.0,
            path_loss_exponent: 3.5,
            reference_loss_db: 40.0,
            noise_floor_dbm: -95.0,
            cca_dbm: -82.0,
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

impl PropagationModel {
    pub fn path_loss_db(&self, distance: f64) -> f64 {
        self.reference_loss_db + 10.0 * self.path_loss_exponent * distance.max(MIN_DISTANCE_M).log10()
    }

    pub fn received_dbm(&self, distance: f64) -> f64 {
        self.tx_power_dbm - self.path_loss_db(distance)
    }

    /// Largest distance at which the received power still reaches the CCA
    /// threshold.
    pub fn coverage_radius(&self) -> f64 {
        let budget = self.tx_power_dbm - self.cca_dbm - self.reference_loss_db;
        10f64.powf(budget / (10.0 * self.path_loss_exponent))
    }

    pub fn covers(&self, distance: f64) -> bool {
        self.received_dbm(distance) >= self.cca_dbm
    }
}

/// Share of `a`'s channels that `b` also occupies.
fn overlap_fraction(a: &WlanNode, b: &WlanNode) -> f64 {
    match (a.channels, b.channels) {
        (Some(ca), Some(cb)) => f64::from(ca.range.overlap(&cb.range)) / f64::from(ca.range.width()),
        _ => 0.0,
    }
}

/// Undirected AP-AP edges for every AP pair (ascending ids) and one AP-STA
/// edge per attached STA. Channel-state fields are left at zero.
pub fn build_edges(nodes: &[WlanNode]) -> Vec<WlanEdge> {
    let by_id: HashMap<NodeId, &WlanNode> = nodes.iter().map(|n| (n.id, n)).collect();
    let mut aps: Vec<&WlanNode> = nodes.iter().filter(|n| n.is_ap()).collect();
    aps.sort_by_key(|n| n.id);
    let mut edges = Vec::new();
    for (i, a) in aps.iter().enumerate() {
        for b in &aps[i + 1..] {
            edges.push(WlanEdge {
                u: a.id,
                v: b.id,
                kind: EdgeKind::ApAp,
                distance: a.distance_to(b),
                rssi: 0.0,
                interference: 0.0,
            });
        }
    }
    for sta in nodes.iter().filter(|n| n.is_sta()) {
        if let Some(ap) = sta.ap.and_then(|id| by_id.get(&id)) {
            edges.push(WlanEdge {
                u: ap.id,
                v: sta.id,
                kind: EdgeKind::ApSta,
                distance: ap.distance_to(sta),
                rssi: 0.0,
                interference: 0.0,
            });
        }
    }
    edges
}

/// Fills RSSI, SINR, AP-AP interference and airtime from positions and
/// channel ranges.
///
/// * RSSI of an STA is the power received from its serving AP.
/// * SINR sums every other AP's received power weighted by the fraction
///   of the serving AP's channels it overlaps.
/// * AP-AP interference is the received power scaled by the larger of the
///   two directed overlap fractions (so the undirected edge is symmetric),
///   floored at [`INTERFERENCE_FLOOR_DBM`].
/// * Airtime of an AP is `1 / (1 + contenders)`, counting APs heard above
///   CCA on at least one shared channel.
pub fn channel_state(snapshot: &mut Snapshot, prop: &PropagationModel) {
    let nodes = &mut snapshot.nodes;
    let ap_idx: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].is_ap()).collect();
    let pos: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let noise = dbm_to_mw(prop.noise_floor_dbm);

    let mut airtime = vec![0.0; nodes.len()];
    for &a in &ap_idx {
        let contenders = ap_idx
            .iter()
            .filter(|&&b| b != a)
            .filter(|&&b| {
                prop.covers(nodes[a].distance_to(&nodes[b])) && overlap_fraction(&nodes[a], &nodes[b]) > 0.0
            })
            .count();
        airtime[a] = 1.0 / (1.0 + contenders as f64);
    }

    let mut sinr = vec![0.0; nodes.len()];
    for (i, sta) in nodes.iter().enumerate().filter(|(_, n)| n.is_sta()) {
        let Some(&own) = sta.ap.and_then(|id| pos.get(&id)) else {
            continue;
        };
        let signal = dbm_to_mw(prop.received_dbm(nodes[own].distance_to(sta)));
        let interference: f64 = ap_idx
            .iter()
            .filter(|&&b| b != own)
            .map(|&b| overlap_fraction(&nodes[own], &nodes[b]) * dbm_to_mw(prop.received_dbm(nodes[b].distance_to(sta))))
            .sum();
        sinr[i] = mw_to_dbm(signal / (noise + interference));
    }

    for (i, n) in nodes.iter_mut().enumerate() {
        if n.is_ap() {
            n.airtime = airtime[i];
            n.sinr = 0.0;
        } else {
            n.airtime = 0.0;
            n.sinr = sinr[i];
        }
    }

    for e in &mut snapshot.edges {
        let (u, v) = (&nodes[pos[&e.u]], &nodes[pos[&e.v]]);
        e.distance = u.distance_to(v);
        match e.kind {
            EdgeKind::ApSta => {
                e.rssi = prop.received_dbm(e.distance);
                e.interference = 0.0;
            }
            EdgeKind::ApAp => {
                let frac = overlap_fraction(u, v).max(overlap_fraction(v, u));
                let p = dbm_to_mw(prop.received_dbm(e.distance)) * frac;
                e.interference = if p > 0.0 {
                    mw_to_dbm(p).max(INTERFERENCE_FLOOR_DBM)
                } else {
                    INTERFERENCE_FLOOR_DBM
                };
                e.rssi = 0.0;
            }
        }
    }
}

/// `airtime × bandwidth × min(log2(1 + SINR), cap) × η / stas_on_ap` in Mbps.
pub fn link_throughput(airtime: f64, bandwidth_mhz: f64, sinr_db: f64, stas_on_ap: usize) -> f64 {
    if stas_on_ap == 0 {
        return 0.0;
    }
    let se = (1.0 + 10f64.powf(sinr_db / 10.0)).log2().min(MAX_SPECTRAL_EFFICIENCY);
    airtime * bandwidth_mhz * se * EFFICIENCY / stas_on_ap as f64
}

/// Analytic per-STA throughput labels for a snapshot whose channel state
/// has been filled by [`channel_state`].
pub fn oracle_throughput(snapshot: &Snapshot) -> BTreeMap<NodeId, f64> {
    let mut load: HashMap<NodeId, usize> = HashMap::new();
    for sta in snapshot.stas() {
        if let Some(ap) = sta.ap {
            *load.entry(ap).or_default() += 1;
        }
    }
    let aps: HashMap<NodeId, &WlanNode> = snapshot.aps().map(|a| (a.id, a)).collect();
    snapshot
        .stas()
        .filter_map(|sta| {
            let ap = aps.get(&sta.ap?)?;
            let bw = ap.channels.map_or(0.0, |c| c.range.bandwidth_mhz());
            Some((sta.id, link_throughput(ap.airtime, bw, sta.sinr, load[&ap.id])))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ChannelConfig, ChannelRange, NodeKind};

    fn ap(id: NodeId, x: f64, y: f64, lo: u8, hi: u8) -> WlanNode {
        WlanNode {
            id,
            kind: NodeKind::Ap,
            x,
            y,
            channels: Some(ChannelConfig {
                primary: lo,
                range: ChannelRange::new(lo, hi),
            }),
            airtime: 0.0,
            sinr: 0.0,
            ap: None,
            interferer: false,
            mobile: false,
        }
    }

    fn sta(id: NodeId, x: f64, y: f64, serving: NodeId) -> WlanNode {
        WlanNode {
            id,
            kind: NodeKind::Sta,
            x,
            y,
            channels: None,
            airtime: 0.0,
            sinr: 0.0,
            ap: Some(serving),
            interferer: false,
            mobile: false,
        }
    }

    fn snapshot(nodes: Vec<WlanNode>) -> Snapshot {
        let edges = build_edges(&nodes);
        let mut s = Snapshot {
            t: 0,
            nodes,
            edges,
            labels: BTreeMap::new(),
        };
        channel_state(&mut s, &PropagationModel::default());
        s
    }

    #[test]
    fn coverage_radius_matches_cca() {
        let p = PropagationModel::default();
        let r = p.coverage_radius();
        assert!((p.received_dbm(r) - p.cca_dbm).abs() < 1e-9);
        assert!(p.covers(r * 0.999) && !p.covers(r * 1.001));
        assert!((r - 59.08).abs() < 0.01, "{r}");
    }

    #[test]
    fn doubling_distance_costs_ten_gamma_log2() {
        let p = PropagationModel::default();
        let drop = p.received_dbm(5.0) - p.received_dbm(10.0);
        assert!((drop - 10.0 * 3.5 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn isolated_pair_is_noise_limited() {
        let s = snapshot(vec![ap(0, 0.0, 0.0, 0, 1), sta(1, 3.0, 4.0, 0)]);
        let p = PropagationModel::default();
        let rssi = s.edges[0].rssi;
        assert!((rssi - p.received_dbm(5.0)).abs() < 1e-12);
        assert!((s.nodes[1].sinr - (rssi - p.noise_floor_dbm)).abs() < 1e-9);
        assert_eq!(s.nodes[0].airtime, 1.0);
    }

    #[test]
    fn disjoint_channels_do_not_interfere() {
        let s = snapshot(vec![
            ap(0, 0.0, 0.0, 0, 3),
            ap(1, 10.0, 0.0, 4, 7),
            sta(2, 2.0, 0.0, 0),
        ]);
        assert_eq!(s.nodes[0].airtime, 1.0);
        assert_eq!(s.nodes[1].airtime, 1.0);
        let p = PropagationModel::default();
        assert!((s.nodes[2].sinr - (p.received_dbm(2.0) - p.noise_floor_dbm)).abs() < 1e-9);
        let ap_ap = s.edges.iter().find(|e| e.kind == EdgeKind::ApAp).unwrap();
        assert_eq!(ap_ap.interference, INTERFERENCE_FLOOR_DBM);
    }

    #[test]
    fn throughput_formula_edges() {
        // SINR_linear = 0
        assert_eq!(link_throughput(1.0, 20.0, f64::NEG_INFINITY, 1), 0.0);
        let one = link_throughput(0.5, 40.0, 7.3, 3);
        let two = link_throughput(0.5, 80.0, 7.3, 3);
        assert_eq!(two, 2.0 * one);
        // capped spectral efficiency
        assert_eq!(link_throughput(1.0, 20.0, 200.0, 1), 20.0 * 10.0 * 0.8);
    }

    /// Two APs 20 m apart on [0,3] and [2,3]; four STAs at fixed offsets.
    /// Expected values below were computed by hand from the closed-form
    /// model (dBm = 20 - 40 - 35 log10 d, noise -95 dBm).
    #[test]
    fn reference_micro_scenario() {
        let s = snapshot(vec![
            ap(0, 0.0, 0.0, 0, 3),
            ap(1, 20.0, 0.0, 2, 3),
            sta(2, 5.0, 0.0, 0),
            sta(3, 0.0, 10.0, 0),
            sta(4, 24.0, 0.0, 1),
            sta(5, 20.0, -2.0, 1),
        ]);
        let labels = oracle_throughput(&s);

        let mw = |d: f64| 10f64.powf((-20.0 - 35.0 * d.log10()) / 10.0);
        let noise = 10f64.powf(-9.5);
        // Both APs hear each other (20 m < 59 m) and share channels 2-3.
        let airtime = 0.5;
        // overlap seen from AP0: 2/4; from AP1: 2/2.
        let sinr = |sig: f64, intf: f64, frac: f64| 10.0 * (sig / (noise + frac * intf)).log10();
        let d = |x: f64, y: f64, ax: f64, ay: f64| ((x - ax).powi(2) + (y - ay).powi(2)).sqrt();
        let cases = [
            (2, sinr(mw(5.0), mw(15.0), 0.5), 80.0, 2.0),
            (3, sinr(mw(10.0), mw(d(0.0, 10.0, 20.0, 0.0)), 0.5), 80.0, 2.0),
            (4, sinr(mw(4.0), mw(24.0), 1.0), 40.0, 2.0),
            (5, sinr(mw(2.0), mw(d(20.0, -2.0, 0.0, 0.0)), 1.0), 40.0, 2.0),
        ];
        for (id, sinr_db, bw, load) in cases {
            let se = (1.0 + 10f64.powf(sinr_db / 10.0)).log2().min(10.0);
            let expected = airtime * bw * se * 0.8 / load;
            let got = labels[&id];
            assert!((got - expected).abs() < 1e-9 * expected.max(1.0), "sta {id}: {got} vs {expected}");
        }
        // Interference edge: 20 m, symmetric fraction max(0.5, 1.0) = 1.
        let e = s.edges.iter().find(|e| e.kind == EdgeKind::ApAp).unwrap();
        assert!((e.interference - 10.0 * mw(20.0).log10()).abs() < 1e-9);
    }
}
