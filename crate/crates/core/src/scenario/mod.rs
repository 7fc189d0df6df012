//! Synthetic dynamic WLAN deployments for the six scenario setups, with
//! channel state and throughput labels from an analytic oracle.
//!
//! | setup | dynamics                                           | length |
//! |-------|----------------------------------------------------|--------|
//! | 1     | half the STAs move slowly, stop at coverage edge    | 10     |
//! | 2     | faster movement, handover to nearest covering AP    | 10     |
//! | 3     | three moving full-band interferer pairs             | 10     |
//! | 4     | per-snapshot random channel-bonding mutations       | 10     |
//! | 5     | setups 2 and 4 combined                             | 10     |
//! | 6     | setup 5 over 100 snapshots                          | 100    |

mod propagation;

pub use propagation::{
    build_edges, channel_state, dbm_to_mw, link_throughput, mw_to_dbm, oracle_throughput, PropagationModel,
    EFFICIENCY, INTERFERENCE_FLOOR_DBM, MAX_SPECTRAL_EFFICIENCY,
};

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    ChannelConfig, ChannelRange, DeploymentSequence, MapSize, NodeId, NodeKind, Snapshot, WlanNode, NUM_CHANNELS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
}

/// What a mobile STA does when its next position leaves its AP's coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityPolicy {
    Static,
    StopAtCoverage,
    Handover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPolicy {
    Fixed,
    /// Each AP applies one of five unit mutations per snapshot.
    RandomMutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub setup: u8,
    pub map_width: (f64, f64),
    pub map_height: (f64, f64),
    pub n_aps: (usize, usize),
    pub stas_per_ap: (usize, usize),
    pub sequence_length: usize,
    /// Seconds per snapshot.
    pub t_g: f64,
    pub mobility: MobilityPolicy,
    pub mobile_fraction: f64,
    /// Metres per snapshot.
    pub speed: (f64, f64),
    pub n_interferers: usize,
    pub interferer_speed: (f64, f64),
    pub channel_policy: ChannelPolicy,
    pub min_ap_spacing: f64,
    pub propagation: PropagationModel,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn for_setup(setup: u8, seed: u64) -> Result<Self, ScenarioError> {
        let mut c = Self {
            setup,
            map_width: (40.0, 80.0),
            map_height: (20.0, 60.0),
            n_aps: (8, 12),
            stas_per_ap: (5, 20),
            sequence_length: 10,
            t_g: 10.0,
            mobility: MobilityPolicy::Static,
            mobile_fraction: 0.5,
            speed: (0.1, 0.5),
            n_interferers: 0,
            interferer_speed: (1.0, 3.0),
            channel_policy: ChannelPolicy::Fixed,
            min_ap_spacing: 10.0,
            propagation: PropagationModel::default(),
            seed,
        };
        match setup {
            1 => c.mobility = MobilityPolicy::StopAtCoverage,
            2 => {
                c.mobility = MobilityPolicy::Handover;
                c.speed = (0.1, 1.0);
            }
            3 => c.n_interferers = 3,
            4 => c.channel_policy = ChannelPolicy::RandomMutation,
            5 | 6 => {
                c.mobility = MobilityPolicy::Handover;
                c.speed = (0.1, 1.0);
                c.channel_policy = ChannelPolicy::RandomMutation;
                if setup == 6 {
                    c.sequence_length = 100;
                }
            }
            _ => return Err(ScenarioError::InvalidConfig(format!("setup must be 1..=6, got {setup}"))),
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(1..=6).contains(&self.setup) {
            return bad(format!("setup must be 1..=6, got {}", self.setup));
        }
        if self.n_aps.0 == 0 || self.n_aps.0 > self.n_aps.1 {
            return bad(format!("AP count range {:?} must be nonempty and positive", self.n_aps));
        }
        if self.stas_per_ap.0 > self.stas_per_ap.1 {
            return bad(format!("STA count range {:?} is empty", self.stas_per_ap));
        }
        if self.sequence_length == 0 {
            return bad("sequence length must be positive".into());
        }
        if !(self.t_g.is_finite() && self.t_g > 0.0) {
            return bad("t_g must be positive".into());
        }
        for (name, r) in [
            ("map width", self.map_width),
            ("map height", self.map_height),
            ("speed", self.speed),
            ("interferer speed", self.interferer_speed),
        ] {
            if !range_ok(r) || r.0 < 0.0 {
                return bad(format!("{name} range {r:?} is invalid"));
            }
        }
        if self.map_width.0 <= 0.0 || self.map_height.0 <= 0.0 {
            return bad("map dimensions must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mobile_fraction) {
            return bad(format!("mobile fraction {} outside [0, 1]", self.mobile_fraction));
        }
        if !(self.min_ap_spacing.is_finite() && self.min_ap_spacing >= 0.0) {
            return bad("AP spacing must be nonnegative".into());
        }
        Ok(())
    }
}

/// One of the five setup-4 channel mutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMutation {
    RaiseLo,
    LowerLo,
    RaiseHi,
    LowerHi,
    Shift(i8),
}

impl ChannelMutation {
    fn sample(rng: &mut impl Rng) -> Self {
        match rng.gen_range(0..5) {
            0 => Self::RaiseLo,
            1 => Self::LowerLo,
            2 => Self::RaiseHi,
            3 => Self::LowerHi,
            _ => Self::Shift(if rng.gen_bool(0.5) { 1 } else { -1 }),
        }
    }
}

/// Applies `m`; a mutation that would leave `[0, NUM_CHANNELS)` or invert
/// the range is a no-op. The primary channel snaps to the nearest channel
/// of the new range.
pub fn mutate_channels(cfg: ChannelConfig, m: ChannelMutation) -> ChannelConfig {
    let (lo, hi) = (i16::from(cfg.range.lo), i16::from(cfg.range.hi));
    let (lo, hi) = match m {
        ChannelMutation::RaiseLo => (lo + 1, hi),
        ChannelMutation::LowerLo => (lo - 1, hi),
        ChannelMutation::RaiseHi => (lo, hi + 1),
        ChannelMutation::LowerHi => (lo, hi - 1),
        ChannelMutation::Shift(d) => (lo + i16::from(d), hi + i16::from(d)),
    };
    if lo < 0 || hi >= i16::from(NUM_CHANNELS) || lo > hi {
        return cfg;
    }
    let range = ChannelRange::new(lo as u8, hi as u8);
    ChannelConfig {
        primary: cfg.primary.clamp(range.lo, range.hi),
        range,
    }
}

#[derive(Debug, Clone)]
struct Mover {
    /// Index into the STA list.
    sta: usize,
    dx: f64,
    dy: f64,
    stopped: bool,
}

#[derive(Debug, Clone)]
struct Interferer {
    x: f64,
    y: f64,
    dx: f64,
    dy: f64,
}

#[derive(Debug, Clone)]
struct State {
    aps: Vec<(f64, f64, ChannelConfig)>,
    /// `(x, y, serving AP index)`
    stas: Vec<(f64, f64, usize)>,
    movers: Vec<Mover>,
    interferers: Vec<Interferer>,
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn place_aps(rng: &mut impl Rng, n: usize, map: MapSize, spacing: f64) -> Vec<(f64, f64)> {
    const TRIES: usize = 2_000;
    let mut spacing = spacing;
    loop {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n);
        let mut tries = 0;
        while pts.len() < n && tries < TRIES * n {
            tries += 1;
            let p = (rng.gen_range(0.0..map.w), rng.gen_range(0.0..map.h));
            if pts.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) >= spacing) {
                pts.push(p);
            }
        }
        if pts.len() == n {
            return pts;
        }
        spacing *= 0.8;
    }
}

fn random_channels(rng: &mut impl Rng) -> ChannelConfig {
    let a = rng.gen_range(0..NUM_CHANNELS);
    let b = rng.gen_range(0..NUM_CHANNELS);
    let range = ChannelRange::new(a.min(b), a.max(b));
    ChannelConfig {
        primary: rng.gen_range(range.lo..=range.hi),
        range,
    }
}

fn initial_state(config: &ScenarioConfig, rng: &mut impl Rng, map: MapSize) -> State {
    let radius = config.propagation.coverage_radius();
    let n_aps = rng.gen_range(config.n_aps.0..=config.n_aps.1);
    let positions = place_aps(rng, n_aps, map, config.min_ap_spacing);
    let aps: Vec<_> = positions.into_iter().map(|(x, y)| (x, y, random_channels(rng))).collect();

    let mut stas = Vec::new();
    let mut movers = Vec::new();
    for (a, &(ax, ay, _)) in aps.iter().enumerate() {
        let k = rng.gen_range(config.stas_per_ap.0..=config.stas_per_ap.1);
        let first = stas.len();
        for _ in 0..k {
            let r = radius * rng.gen::<f64>().sqrt();
            let th = rng.gen_range(0.0..TAU);
            stas.push((ax + r * th.cos(), ay + r * th.sin(), a));
        }
        let n_mobile = (k as f64 * config.mobile_fraction).round() as usize;
        let mut picks: Vec<usize> = (first..first + k).collect();
        picks.shuffle(rng);
        picks.truncate(n_mobile);
        picks.sort_unstable();
        for sta in picks {
            let th = rng.gen_range(0.0..TAU);
            let v = uniform(rng, config.speed);
            if config.mobility != MobilityPolicy::Static {
                movers.push(Mover {
                    sta,
                    dx: v * th.cos(),
                    dy: v * th.sin(),
                    stopped: false,
                });
            }
        }
    }

    let interferers = (0..config.n_interferers)
        .map(|_| {
            let th = rng.gen_range(0.0..TAU);
            let v = uniform(rng, config.interferer_speed);
            Interferer {
                x: rng.gen_range(0.0..map.w),
                y: rng.gen_range(0.0..map.h),
                dx: v * th.cos(),
                dy: v * th.sin(),
            }
        })
        .collect();

    State {
        aps,
        stas,
        movers,
        interferers,
    }
}

/// Nearest AP whose coverage contains `(x, y)`; ties go to the lowest index.
fn nearest_covering(aps: &[(f64, f64, ChannelConfig)], prop: &PropagationModel, x: f64, y: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &(ax, ay, _)) in aps.iter().enumerate() {
        let d = (x - ax).hypot(y - ay);
        if prop.covers(d) && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

fn advance(config: &ScenarioConfig, state: &mut State, rng: &mut impl Rng) {
    let prop = &config.propagation;
    for m in &mut state.movers {
        if m.stopped {
            continue;
        }
        let (x, y, ap) = state.stas[m.sta];
        let (nx, ny) = (x + m.dx, y + m.dy);
        let (ax, ay, _) = state.aps[ap];
        if prop.covers((nx - ax).hypot(ny - ay)) {
            state.stas[m.sta] = (nx, ny, ap);
            continue;
        }
        match config.mobility {
            MobilityPolicy::Handover => match nearest_covering(&state.aps, prop, nx, ny) {
                Some(to) => state.stas[m.sta] = (nx, ny, to),
                None => m.stopped = true,
            },
            _ => m.stopped = true,
        }
    }
    for i in &mut state.interferers {
        i.x += i.dx;
        i.y += i.dy;
    }
    if config.channel_policy == ChannelPolicy::RandomMutation {
        for ap in &mut state.aps {
            ap.2 = mutate_channels(ap.2, ChannelMutation::sample(rng));
        }
    }
}

/// Vertical offset of an interferer STA above its AP (1 cm).
const INTERFERER_STA_OFFSET: f64 = 0.01;

fn snapshot(config: &ScenarioConfig, state: &State, t: u32) -> Snapshot {
    let n_aps = state.aps.len();
    let n_int = state.interferers.len();
    let int_ap_id = |k: usize| (n_aps + state.stas.len() + k) as NodeId;
    let mut nodes = Vec::with_capacity(n_aps + state.stas.len() + 2 * n_int);
    let mobile: std::collections::HashSet<usize> = state.movers.iter().map(|m| m.sta).collect();

    for (i, &(x, y, ch)) in state.aps.iter().enumerate() {
        nodes.push(WlanNode {
            id: i as NodeId,
            kind: NodeKind::Ap,
            x,
            y,
            channels: Some(ch),
            airtime: 0.0,
            sinr: 0.0,
            ap: None,
            interferer: false,
            mobile: false,
        });
    }
    let full = ChannelConfig {
        primary: 0,
        range: ChannelRange::full(),
    };
    for (k, i) in state.interferers.iter().enumerate() {
        nodes.push(WlanNode {
            id: int_ap_id(k),
            kind: NodeKind::Ap,
            x: i.x,
            y: i.y,
            channels: Some(full),
            airtime: 0.0,
            sinr: 0.0,
            ap: None,
            interferer: true,
            mobile: true,
        });
    }
    for (j, &(x, y, ap)) in state.stas.iter().enumerate() {
        nodes.push(WlanNode {
            id: (n_aps + j) as NodeId,
            kind: NodeKind::Sta,
            x,
            y,
            channels: Some(state.aps[ap].2),
            airtime: 0.0,
            sinr: 0.0,
            ap: Some(ap as NodeId),
            interferer: false,
            mobile: mobile.contains(&j),
        });
    }
    for (k, i) in state.interferers.iter().enumerate() {
        nodes.push(WlanNode {
            id: int_ap_id(n_int + k),
            kind: NodeKind::Sta,
            x: i.x,
            y: i.y + INTERFERER_STA_OFFSET,
            channels: Some(full),
            airtime: 0.0,
            sinr: 0.0,
            ap: Some(int_ap_id(k)),
            interferer: true,
            mobile: true,
        });
    }

    let edges = build_edges(&nodes);
    let mut snap = Snapshot {
        t,
        nodes,
        edges,
        labels: Default::default(),
    };
    channel_state(&mut snap, &config.propagation);
    snap.labels = oracle_throughput(&snap);
    snap
}

/// Generates deployment `index` of the stream defined by `config`.
///
/// Each deployment draws from its own ChaCha8 stream, so any subset can
/// be regenerated independently and in parallel.
pub fn generate_one(config: &ScenarioConfig, index: u64) -> Result<DeploymentSequence, ScenarioError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);
    let map = MapSize {
        w: uniform(&mut rng, config.map_width),
        h: uniform(&mut rng, config.map_height),
    };
    let mut state = initial_state(config, &mut rng, map);
    let mut snapshots = Vec::with_capacity(config.sequence_length);
    for t in 0..config.sequence_length {
        if t > 0 {
            advance(config, &mut state, &mut rng);
        }
        snapshots.push(snapshot(config, &state, t as u32));
    }
    Ok(DeploymentSequence {
        id: index,
        setup: config.setup,
        t_g: config.t_g,
        map,
        snapshots,
    })
}

/// Generates deployments `0..count`.
pub fn generate(config: &ScenarioConfig, count: usize) -> Result<Vec<DeploymentSequence>, ScenarioError> {
    config.validate()?;
    (0..count as u64).map(|i| generate_one(config, i)).collect()
}

/// Summary row in the style of a dataset-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub deployments: usize,
    pub sequence_length: usize,
    pub mean_throughput: f64,
    pub std_throughput: f64,
    pub labelled_pairs: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Statistics over target STA labels; `sequence_length` is the longest
/// sequence, and the split sizes follow the 3/1/1 rule.
pub fn dataset_stats(deployments: &[DeploymentSequence]) -> DatasetStats {
    let ys: Vec<f64> = deployments
        .iter()
        .flat_map(|d| d.snapshots.iter().flat_map(|s| s.targets().map(|(_, y)| y)))
        .collect();
    let n = ys.len().max(1) as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let (train, val, test) = crate::training::split_sizes(deployments.len());
    DatasetStats {
        deployments: deployments.len(),
        sequence_length: deployments.iter().map(|d| d.len()).max().unwrap_or(0),
        mean_throughput: mean,
        std_throughput: var.sqrt(),
        labelled_pairs: ys.len(),
        train,
        val,
        test,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sta_nodes(s: &Snapshot) -> impl Iterator<Item = &WlanNode> {
        s.stas().filter(|n| !n.interferer)
    }

    #[test]
    fn setup_lengths_and_errors() {
        assert_eq!(ScenarioConfig::for_setup(6, 0).unwrap().sequence_length, 100);
        assert_eq!(ScenarioConfig::for_setup(3, 0).unwrap().sequence_length, 10);
        assert!(ScenarioConfig::for_setup(0, 0).is_err());
        assert!(ScenarioConfig::for_setup(7, 0).is_err());
        let mut c = ScenarioConfig::for_setup(1, 0).unwrap();
        c.n_aps = (0, 0);
        assert!(generate(&c, 1).is_err());
    }

    #[test]
    fn half_the_stas_move() {
        let c = ScenarioConfig::for_setup(1, 11).unwrap();
        for d in generate(&c, 5).unwrap() {
            let s0 = &d.snapshots[0];
            for ap in s0.aps() {
                let mine: Vec<_> = sta_nodes(s0).filter(|s| s.ap == Some(ap.id)).collect();
                let mobile = mine.iter().filter(|s| s.mobile).count() as f64;
                assert!((mobile - 0.5 * mine.len() as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn zero_speed_is_static() {
        let mut c = ScenarioConfig::for_setup(2, 5).unwrap();
        c.speed = (0.0, 0.0);
        let d = generate_one(&c, 0).unwrap();
        for s in &d.snapshots[1..] {
            assert_eq!(s.nodes, d.snapshots[0].nodes);
            assert_eq!(s.edges, d.snapshots[0].edges);
            assert_eq!(s.labels, d.snapshots[0].labels);
        }
    }

    #[test]
    fn stop_rule_keeps_stas_covered() {
        let c = ScenarioConfig::for_setup(1, 3).unwrap();
        let r = c.propagation.coverage_radius();
        for d in generate(&c, 10).unwrap() {
            for s in &d.snapshots {
                for sta in sta_nodes(s) {
                    let ap = s.node(sta.ap.unwrap()).unwrap();
                    assert!(sta.distance_to(ap) <= r + 1e-9);
                }
            }
        }
    }

    #[test]
    fn interferers_are_colocated_full_band() {
        let c = ScenarioConfig::for_setup(3, 9).unwrap();
        let d = generate_one(&c, 2).unwrap();
        for s in &d.snapshots {
            let ints: Vec<_> = s.nodes.iter().filter(|n| n.interferer).collect();
            assert_eq!(ints.len(), 6);
            for sta in ints.iter().filter(|n| n.is_sta()) {
                let ap = s.node(sta.ap.unwrap()).unwrap();
                assert!(ap.interferer && ap.channels.unwrap().range == ChannelRange::full());
                assert!((sta.distance_to(ap) - 0.01).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let c = ScenarioConfig::for_setup(5, 42).unwrap();
        let a = generate(&c, 3).unwrap();
        assert_eq!(a, generate(&c, 3).unwrap());
        assert_eq!(a[2], generate_one(&c, 2).unwrap());
        let mut buf = Vec::new();
        crate::graph::write_dataset_to(&mut buf, &a).unwrap();
        let back = crate::graph::read_dataset_from(buf.as_slice()).unwrap();
        assert_eq!(back, a);
        for s in a.iter().flat_map(|d| &d.snapshots) {
            assert!(s.labels.values().all(|y| y.is_finite() && *y >= 0.0));
        }
    }

    #[test]
    fn stats_of_constant_labels() {
        let c = ScenarioConfig::for_setup(1, 1).unwrap();
        let mut d = generate(&c, 5).unwrap();
        for s in d.iter_mut().flat_map(|d| d.snapshots.iter_mut()) {
            s.labels.values_mut().for_each(|y| *y = 2.5);
        }
        let st = dataset_stats(&d);
        assert_eq!((st.train, st.val, st.test), (3, 1, 1));
        assert!((st.mean_throughput - 2.5).abs() < 1e-12 && st.std_throughput < 1e-12);
        assert_eq!(st.sequence_length, 10);
    }

    fn any_mutation() -> impl Strategy<Value = ChannelMutation> {
        prop_oneof![
            Just(ChannelMutation::RaiseLo),
            Just(ChannelMutation::LowerLo),
            Just(ChannelMutation::RaiseHi),
            Just(ChannelMutation::LowerHi),
            Just(ChannelMutation::Shift(1)),
            Just(ChannelMutation::Shift(-1)),
        ]
    }

    proptest! {
        #[test]
        fn mutation_chain_stays_valid(
            lo in 0u8..8, w in 0u8..8, p in 0u8..8,
            steps in prop::collection::vec(any_mutation(), 0..60),
        ) {
            let hi = (lo + w).min(7);
            let mut cfg = ChannelConfig { primary: p.clamp(lo, hi), range: ChannelRange::new(lo, hi) };
            for m in steps {
                cfg = mutate_channels(cfg, m);
                prop_assert!(cfg.is_valid());
            }
        }
    }
}
