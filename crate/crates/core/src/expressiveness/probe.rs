use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HetGraph;
use crate::autodiff::{Tape, Tensor};
use crate::graph::NodeKind;
use crate::htl::{AttentionMode, BnStats, HtlLayer, HtlOptions, RunningStats, Topology};
use crate::params::{glorot, zeros, ParamSet};

/// Input features given to every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// One constant feature; only structure and kinds differ.
    Bare,
    /// Four random features per node, drawn from the given seed.
    Attributed(u64),
}

impl FeatureMode {
    pub fn features(self, nodes: usize) -> Tensor {
        match self {
            Self::Bare => Tensor::ones((nodes, 1)),
            Self::Attributed(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Tensor::from_shape_simple_fn((nodes, 4), || rng.gen_range(-1.0..1.0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Sum aggregation is what makes multiset counts visible; softmax
    /// attention averages and cannot count identical neighbors.
    pub attention: AttentionMode,
    pub trials: usize,
    pub seed: u64,
    /// Pooled embeddings differ when their max-abs difference exceeds this.
    pub tolerance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 8,
            attention: AttentionMode::Raw,
            trials: 8,
            seed: 0,
            tolerance: 1e-6,
        }
    }
}

/// Typed message-passing topology: AP-AP both ways, STA→AP and AP→STA.
pub fn topology(g: &HetGraph) -> Topology {
    let mut rel: [Vec<(usize, usize)>; 3] = Default::default();
    for (a, b) in g.edges() {
        match (g.kinds[a], g.kinds[b]) {
            (NodeKind::Ap, NodeKind::Ap) => {
                rel[0].push((a, b));
                rel[0].push((b, a));
            }
            (NodeKind::Ap, NodeKind::Sta) => {
                rel[1].push((b, a));
                rel[2].push((a, b));
            }
            (NodeKind::Sta, NodeKind::Ap) => {
                rel[1].push((a, b));
                rel[2].push((b, a));
            }
            (NodeKind::Sta, NodeKind::Sta) => panic!("STA-STA edge ({a}, {b})"),
        }
    }
    Topology::new(g.len(), rel)
}

/// Final-layer node embeddings of a randomly initialized HTL stack; the
/// weights depend only on `seed` and the feature width. Edge inputs are a
/// single constant feature.
pub fn htl_embedding(g: &HetGraph, features: &Tensor, config: &ProbeConfig, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let (mut d, mut de) = (features.ncols(), 1);
    let mut layers = Vec::new();
    for k in 0..config.layers {
        let l = HtlLayer::new(&mut params, &mut rng, &format!("probe{k}"), d, de, config.hidden, config.hidden);
        d = l.out_dim();
        de = config.hidden;
        layers.push(l);
    }
    // Nonzero biases so that empty relations are not trivially zero.
    for t in params.tensors_mut() {
        if t.nrows() == 1 {
            t.mapv_inplace(|v| v + rng.gen_range(-0.5..0.5));
        }
    }
    let topo = topology(g);
    let opts = HtlOptions {
        attention: config.attention,
        ..HtlOptions::default()
    };
    let stats: Vec<RunningStats> = layers.iter().map(|l| RunningStats::new(l.out_dim())).collect();
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let mut h = tape.constant(features.clone());
    let mut e = tape.constant(Tensor::ones((topo.edges(), 1)));
    for (l, s) in layers.iter().zip(&stats) {
        let out = l
            .forward(&mut tape, &vars, h, e, &topo, &opts, BnStats::Fixed(&s.mean, &s.var))
            .expect("probe shapes are consistent");
        h = out.nodes;
        e = out.edges;
    }
    tape.value(h).clone()
}

/// Kind-blind sum aggregation `h' = ReLU((h_v + Σ_u h_u) Wᵀ + b)` over the
/// untyped graph.
pub fn sum_aggregator_embedding(g: &HetGraph, features: &Tensor, config: &ProbeConfig, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = features.clone();
    for _ in 0..config.layers {
        let w = glorot(&mut rng, config.hidden, h.ncols());
        let b = zeros(1, config.hidden).mapv(|_| rng.gen_range(-0.5..0.5));
        let mut agg = h.clone();
        for v in 0..g.len() {
            for &u in &g.adj[v] {
                let row = h.row(u).to_owned();
                let mut dst = agg.row_mut(v);
                dst += &row;
            }
        }
        h = (agg.dot(&w.t()) + &b).mapv(|x| x.max(0.0));
    }
    h
}

fn pooled(x: &Tensor) -> Vec<f64> {
    x.sum_axis(ndarray::Axis(0)).to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub trials: usize,
    /// Trials whose pooled embeddings differ beyond the tolerance.
    pub distinguished: usize,
    pub max_abs_diff: Vec<f64>,
}

impl ProbeReport {
    pub fn always_distinguished(&self) -> bool {
        self.distinguished == self.trials
    }

    pub fn always_collides(&self) -> bool {
        self.distinguished == 0
    }
}

/// Compares sum-pooled embeddings of `a` and `b` under `config.trials`
/// independently seeded models. `kind_blind` switches from HTL to the
/// untyped sum aggregator.
pub fn collision_probe(a: &HetGraph, b: &HetGraph, features: FeatureMode, config: &ProbeConfig, kind_blind: bool) -> ProbeReport {
    let (fa, fb) = (features.features(a.len()), features.features(b.len()));
    let mut diffs = Vec::with_capacity(config.trials);
    for t in 0..config.trials {
        let seed = config.seed.wrapping_add(t as u64);
        let (ea, eb) = if kind_blind {
            (sum_aggregator_embedding(a, &fa, config, seed), sum_aggregator_embedding(b, &fb, config, seed))
        } else {
            (htl_embedding(a, &fa, config, seed), htl_embedding(b, &fb, config, seed))
        };
        let (pa, pb) = (pooled(&ea), pooled(&eb));
        diffs.push(pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    ProbeReport {
        trials: config.trials,
        distinguished: diffs.iter().filter(|&&d| d > config.tolerance).count(),
        max_abs_diff: diffs,
    }
}

/// Two snapshots on the same untyped graph, a path `s - a - x` plus a
/// second leaf on `a`, where `x` is an AP in the first and an STA in the
/// second. The link `a - x` is AP-AP in one and AP-STA in the other.
pub fn kind_swap_fixture() -> (HetGraph, HetGraph) {
    use NodeKind::{Ap, Sta};
    let edges = [(0, 1), (0, 2), (0, 3)];
    (
        HetGraph::new(vec![Ap, Ap, Sta, Sta], &edges),
        HetGraph::new(vec![Ap, Sta, Sta, Sta], &edges),
    )
}
