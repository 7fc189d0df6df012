//! Expressiveness checks for heterogeneous message passing on WLAN-shaped
//! graphs.
//!
//! A linked-star graph has one internal node per star (an AP), each with
//! its own leaves (STAs), and the internal nodes form a clique. Two such
//! graphs are isomorphic exactly when their multisets of leaf counts
//! agree. [`wl_check`] enumerates every linked star up to a node budget and
//! verifies, pair by pair, that 1-WL color refinement separates exactly the
//! pairs a brute-force isomorphism search separates. [`probe`] asks the
//! same question of randomly initialized HTL stacks.

mod probe;

pub use probe::{topology,
    collision_probe, htl_embedding, kind_swap_fixture, sum_aggregator_embedding, FeatureMode, ProbeConfig,
    ProbeReport,
};

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::graph::NodeKind;

/// Undirected graph with one kind label per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HetGraph {
    pub kinds: Vec<NodeKind>,
    pub adj: Vec<Vec<usize>>,
}

impl HetGraph {
    pub fn new(kinds: Vec<NodeKind>, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); kinds.len()];
        for &(a, b) in edges {
            assert!(a != b && a < kinds.len() && b < kinds.len(), "invalid edge ({a}, {b})");
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self { kinds, adj }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|a| self.adj[a].iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Node `v` of `self` becomes node `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut kinds = self.kinds.clone();
        for (v, &p) in perm.iter().enumerate() {
            kinds[p] = self.kinds[v];
        }
        let edges: Vec<_> = self.edges().into_iter().map(|(a, b)| (perm[a], perm[b])).collect();
        Self::new(kinds, &edges)
    }

    /// Largest shortest-path distance, or `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.len() {
            let mut dist = vec![usize::MAX; self.len()];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &u in &self.adj[v] {
                    if dist[u] == usize::MAX {
                        dist[u] = dist[v] + 1;
                        queue.push_back(u);
                    }
                }
            }
            best = best.max(*dist.iter().max()?);
            if dist.contains(&usize::MAX) {
                return None;
            }
        }
        Some(best)
    }
}

/// Leaf counts of each star, in internal-node order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkedStar {
    pub sizes: Vec<usize>,
}

impl LinkedStar {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(!sizes.is_empty() && sizes.iter().all(|&s| s >= 1), "every star needs a leaf");
        Self { sizes }
    }

    pub fn nodes(&self) -> usize {
        self.sizes.len() + self.sizes.iter().sum::<usize>()
    }

    /// Internal nodes first (as APs), then the leaves of each star in
    /// order (as STAs).
    pub fn graph(&self) -> HetGraph {
        let k = self.sizes.len();
        let mut kinds = vec![NodeKind::Ap; k];
        let mut edges = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                edges.push((a, b));
            }
        }
        for (a, &leaves) in self.sizes.iter().enumerate() {
            for _ in 0..leaves {
                edges.push((a, kinds.len()));
                kinds.push(NodeKind::Sta);
            }
        }
        HetGraph::new(kinds, &edges)
    }

    /// Every ordered size sequence with `1..=max_stars` stars and at most
    /// `max_nodes` nodes in total.
    pub fn enumerate(max_nodes: usize, max_stars: usize) -> Vec<Self> {
        fn rec(prefix: &mut Vec<usize>, budget: usize, max_stars: usize, out: &mut Vec<LinkedStar>) {
            if !prefix.is_empty() {
                out.push(LinkedStar::new(prefix.clone()));
            }
            if prefix.len() == max_stars {
                return;
            }
            // A new star costs its internal node plus at least one leaf.
            for leaves in 1..budget {
                prefix.push(leaves);
                rec(prefix, budget - leaves - 1, max_stars, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), max_nodes, max_stars, &mut out);
        out
    }
}

/// Colors of every node after each refinement round; round 0 is the
/// kind labelling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WlColoring {
    pub rounds: Vec<Vec<u32>>,
}

impl WlColoring {
    pub fn stable(&self) -> &[u32] {
        self.rounds.last().expect("at least the initial round")
    }

    /// Color histogram of the stable round, tagged with the round count.
    pub fn histogram(&self) -> (usize, BTreeMap<u32, usize>) {
        let mut h = BTreeMap::new();
        for &c in self.stable() {
            *h.entry(c).or_insert(0) += 1;
        }
        (self.rounds.len(), h)
    }
}

/// Shared color dictionary, so colorings of different graphs refined with
/// the same refiner are comparable.
#[derive(Debug, Default)]
pub struct WlRefiner {
    colors: HashMap<(u32, Vec<u32>), u32>,
}

impl WlRefiner {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, key: (u32, Vec<u32>)) -> u32 {
        let next = self.colors.len() as u32;
        *self.colors.entry(key).or_insert(next)
    }

    /// Refines until the partition stops splitting, at most `|V|` rounds.
    pub fn refine(&mut self, g: &HetGraph) -> WlColoring {
        let initial: Vec<u32> = g
            .kinds
            .iter()
            .map(|k| {
                let tag = match k {
                    NodeKind::Ap => u32::MAX,
                    NodeKind::Sta => u32::MAX - 1,
                };
                self.intern((tag, Vec::new()))
            })
            .collect();
        let classes = |c: &[u32]| {
            let mut s = c.to_vec();
            s.sort_unstable();
            s.dedup();
            s.len()
        };
        let mut rounds = vec![initial];
        for _ in 0..g.len() {
            let prev = rounds.last().expect("non-empty");
            let next: Vec<u32> = (0..g.len())
                .map(|v| {
                    let mut nb: Vec<u32> = g.adj[v].iter().map(|&u| prev[u]).collect();
                    nb.sort_unstable();
                    self.intern((prev[v], nb))
                })
                .collect();
            let stable = classes(&next) == classes(prev);
            rounds.push(next);
            if stable {
                break;
            }
        }
        WlColoring { rounds }
    }
}

/// 1-WL verdict for a pair: `true` when the color histograms differ.
pub fn wl_distinguishes(a: &HetGraph, b: &HetGraph) -> bool {
    let mut r = WlRefiner::new();
    r.refine(a).histogram() != r.refine(b).histogram()
}

/// Exhaustive search for a kind- and adjacency-preserving bijection.
pub fn isomorphic(a: &HetGraph, b: &HetGraph) -> bool {
    if a.len() != b.len() || a.edges().len() != b.edges().len() {
        return false;
    }
    let n = a.len();
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn extend(a: &HetGraph, b: &HetGraph, v: usize, map: &mut [usize], used: &mut [bool]) -> bool {
        if v == a.len() {
            return true;
        }
        for w in 0..b.len() {
            if used[w] || a.kinds[v] != b.kinds[w] || a.degree(v) != b.degree(w) {
                continue;
            }
            if (0..v).any(|u| a.has_edge(u, v) != b.has_edge(map[u], w)) {
                continue;
            }
            map[v] = w;
            used[w] = true;
            if extend(a, b, v + 1, map, used) {
                return true;
            }
            used[w] = false;
        }
        map[v] = usize::MAX;
        false
    }
    extend(a, b, 0, &mut map, &mut used)
}

/// Outcome of the exhaustive linked-star check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlCheckReport {
    pub max_nodes: usize,
    pub graphs: usize,
    pub pairs: usize,
    pub isomorphic_pairs: usize,
    /// Non-isomorphic pairs that 1-WL fails to separate.
    pub indistinguishable: Vec<(LinkedStar, LinkedStar)>,
    /// Isomorphic pairs that 1-WL separates (would break invariance).
    pub invariance_violations: Vec<(LinkedStar, LinkedStar)>,
    pub max_diameter: usize,
    pub seconds: f64,
}

impl WlCheckReport {
    pub fn passed(&self) -> bool {
        self.indistinguishable.is_empty() && self.invariance_violations.is_empty() && self.max_diameter <= 3
    }
}

/// Compares 1-WL with brute-force isomorphism over every pair of ordered
/// linked stars with at most `max_nodes` nodes. Each star needs at least
/// one leaf, so there are at most `max_nodes / 2` stars.
pub fn wl_check(max_nodes: usize) -> WlCheckReport {
    let start = Instant::now();
    let stars = LinkedStar::enumerate(max_nodes, max_nodes / 2);
    let graphs: Vec<HetGraph> = stars.iter().map(LinkedStar::graph).collect();
    let mut refiner = WlRefiner::new();
    let hist: Vec<_> = graphs.iter().map(|g| refiner.refine(g).histogram()).collect();
    let max_diameter = graphs.iter().map(|g| g.diameter().unwrap_or(usize::MAX)).max().unwrap_or(0);
    let mut report = WlCheckReport {
        max_nodes,
        graphs: graphs.len(),
        pairs: 0,
        isomorphic_pairs: 0,
        indistinguishable: Vec::new(),
        invariance_violations: Vec::new(),
        max_diameter,
        seconds: 0.0,
    };
    for i in 0..graphs.len() {
        for j in i + 1..graphs.len() {
            report.pairs += 1;
            let iso = isomorphic(&graphs[i], &graphs[j]);
            let same = hist[i] == hist[j];
            if iso {
                report.isomorphic_pairs += 1;
                if !same {
                    report.invariance_violations.push((stars[i].clone(), stars[j].clone()));
                }
            } else if same {
                report.indistinguishable.push((stars[i].clone(), stars[j].clone()));
            }
        }
    }
    report.seconds = start.elapsed().as_secs_f64();
    report
}

#[cfg(test)]
mod tests;
