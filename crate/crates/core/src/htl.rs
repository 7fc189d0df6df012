//! Heterogeneous attention layers over a snapshot (or a disjoint union of
//! snapshots), plus the jumping-knowledge combiner.
//!
//! One layer computes, for every directed edge `u → v`,
//!
//! ```text
//! h_uv  = LeakyReLU(W_a [h_u ‖ h_uv ‖ h_v])
//! a_uv  = w_a · h_uv            (optionally softmax-normalized per v and r)
//! h_v(r) = ReLU(Σ_{u ∈ N_r(v)} a_uv W_r h_u + b_r)
//! h_v   = BatchNorm(h_v(AP→AP) ‖ h_v(STA→AP) ‖ h_v(AP→STA))
//! ```
//!
//! where a node with no incoming edge of relation `r` gets an all-zero
//! `h_v(r)` block.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{DiffError, Index, Tape, Tensor, Var};
use crate::params::{glorot, ones, zeros, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// Scores normalized over each destination's neighbors per relation.
    #[default]
    Softmax,
    /// Scores used as-is.
    Raw,
}

/// Relation-partitioned directed edges over a node set of size `nodes`.
///
/// Edges are stored contiguously by relation: edges of relation `r` are
/// rows `offsets[r]..offsets[r + 1]` of every per-edge matrix.
#[derive(Debug, Clone)]
pub struct Topology {
    pub nodes: usize,
    pub src: Index,
    pub dst: Index,
    pub offsets: [usize; 4],
    pub rel_src: [Index; 3],
    pub rel_dst: [Index; 3],
    /// Distinct source nodes of each relation, ascending.
    pub rel_sources: [Index; 3],
    /// Per edge of each relation, the position of its source in `rel_sources`.
    pub rel_source_pos: [Index; 3],
    /// `r · nodes + dst` per edge, the softmax grouping.
    pub segments: Index,
    /// `nodes × 1` indicator of at least one incoming edge per relation.
    pub has_incoming: [Tensor; 3],
}

impl Topology {
    /// `edges[r]` lists `(src, dst)` node indices of relation `r`.
    pub fn new(nodes: usize, edges: [Vec<(usize, usize)>; 3]) -> Self {
        let mut offsets = [0; 4];
        let (mut src, mut dst, mut segments) = (Vec::new(), Vec::new(), Vec::new());
        let mut rel_src: [Vec<usize>; 3] = Default::default();
        let mut rel_dst: [Vec<usize>; 3] = Default::default();
        let mut has_incoming = [zeros(nodes, 1), zeros(nodes, 1), zeros(nodes, 1)];
        for (r, list) in edges.iter().enumerate() {
            for &(s, d) in list {
                assert!(s < nodes && d < nodes, "edge ({s}, {d}) outside {nodes} nodes");
                src.push(s);
                dst.push(d);
                segments.push(r * nodes + d);
                rel_src[r].push(s);
                rel_dst[r].push(d);
                has_incoming[r][[d, 0]] = 1.0;
            }
            offsets[r + 1] = src.len();
        }
        let mut rel_sources: [Vec<usize>; 3] = Default::default();
        let mut rel_source_pos: [Vec<usize>; 3] = Default::default();
        for r in 0..3 {
            let mut pos = vec![usize::MAX; nodes];
            let mut uniq: Vec<usize> = rel_src[r].clone();
            uniq.sort_unstable();
            uniq.dedup();
            for (i, &u) in uniq.iter().enumerate() {
                pos[u] = i;
            }
            rel_source_pos[r] = rel_src[r].iter().map(|&u| pos[u]).collect();
            rel_sources[r] = uniq;
        }
        Self {
            nodes,
            src: Arc::new(src),
            dst: Arc::new(dst),
            offsets,
            rel_src: rel_src.map(Arc::new),
            rel_dst: rel_dst.map(Arc::new),
            rel_sources: rel_sources.map(Arc::new),
            rel_source_pos: rel_source_pos.map(Arc::new),
            segments: Arc::new(segments),
            has_incoming,
        }
    }

    pub fn edges(&self) -> usize {
        self.src.len()
    }

    pub fn relation_len(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HtlOptions {
    pub attention: AttentionMode,
    pub leaky_slope: f64,
    pub bn_eps: f64,
}

impl Default for HtlOptions {
    fn default() -> Self {
        Self {
            attention: AttentionMode::Softmax,
            leaky_slope: 0.2,
            bn_eps: 1e-5,
        }
    }
}

/// Normalization statistics source.
#[derive(Debug, Clone, Copy)]
pub enum BnStats<'a> {
    /// Statistics of the current batch (training).
    Batch,
    /// Fixed running statistics (inference).
    Fixed(&'a Tensor, &'a Tensor),
}

/// Output of one layer.
pub struct LayerOutput {
    pub nodes: Var,
    pub edges: Var,
    /// `(mean, var)` actually used by batch normalization.
    pub stats: (Tensor, Tensor),
}

/// Parameter handles of one layer.
#[derive(Debug, Clone)]
pub struct HtlLayer {
    pub d_in: usize,
    pub d_e_in: usize,
    pub hidden: usize,
    pub edge_hidden: usize,
    pub w_r: [ParamId; 3],
    pub b_r: [ParamId; 3],
    /// `edge_hidden × (2 d_in + d_e_in)`, columns ordered `[u | uv | v]`.
    pub w_edge: ParamId,
    /// `1 × edge_hidden`
    pub w_att: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl HtlLayer {
    pub fn new(
        params: &mut ParamSet,
        rng: &mut impl Rng,
        prefix: &str,
        d_in: usize,
        d_e_in: usize,
        hidden: usize,
        edge_hidden: usize,
    ) -> Self {
        let rel = ["ap_ap", "sta_ap", "ap_sta"];
        let w_r = rel.map(|r| params.insert(format!("{prefix}.w_{r}"), glorot(rng, hidden, d_in)));
        let b_r = rel.map(|r| params.insert(format!("{prefix}.b_{r}"), zeros(1, hidden)));
        let w_edge = params.insert(
            format!("{prefix}.w_edge"),
            glorot(rng, edge_hidden, 2 * d_in + d_e_in),
        );
        let w_att = params.insert(format!("{prefix}.w_att"), glorot(rng, 1, edge_hidden));
        let gamma = params.insert(format!("{prefix}.bn_gamma"), ones(1, 3 * hidden));
        let beta = params.insert(format!("{prefix}.bn_beta"), zeros(1, 3 * hidden));
        Self {
            d_in,
            d_e_in,
            hidden,
            edge_hidden,
            w_r,
            b_r,
            w_edge,
            w_att,
            gamma,
            beta,
        }
    }

    pub fn out_dim(&self) -> usize {
        3 * self.hidden
    }

    /// Edge hidden states for every directed edge of every relation.
    pub fn edge_hidden(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        h: Var,
        e: Var,
        topo: &Topology,
        opts: &HtlOptions,
    ) -> Result<Var, DiffError> {
        let w = vars[self.w_edge.index()];
        // Split W_a into its node and edge column blocks so node terms are
        // projected once per node rather than once per edge.
        let a_u = tape.slice_cols(w, 0, self.d_in)?;
        let a_e = tape.slice_cols(w, self.d_in, self.d_e_in)?;
        let a_v = tape.slice_cols(w, self.d_in + self.d_e_in, self.d_in)?;
        let pu = tape.matmul_t(h, a_u)?;
        let pv = tape.matmul_t(h, a_v)?;
        let pe = tape.matmul_t(e, a_e)?;
        let gu = tape.gather(pu, &topo.src)?;
        let gv = tape.gather(pv, &topo.dst)?;
        let s = tape.add(gu, pe)?;
        let s = tape.add(s, gv)?;
        tape.leaky_relu(s, opts.leaky_slope)
    }

    /// Per-edge attention weights given the edge hidden states.
    pub fn attention(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        h_uv: Var,
        topo: &Topology,
        opts: &HtlOptions,
    ) -> Result<Var, DiffError> {
        let score = tape.matmul_t(h_uv, vars[self.w_att.index()])?;
        match opts.attention {
            AttentionMode::Raw => Ok(score),
            AttentionMode::Softmax => tape.segment_softmax(score, &topo.segments, 3 * topo.nodes),
        }
    }

    /// Relation blocks concatenated, before normalization; also returns
    /// the edge hidden states.
    pub fn aggregate(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        h: Var,
        e: Var,
        topo: &Topology,
        opts: &HtlOptions,
    ) -> Result<(Var, Var), DiffError> {
        let h_uv = self.edge_hidden(tape, vars, h, e, topo, opts)?;
        let att = self.attention(tape, vars, h_uv, topo, opts)?;
        let mut blocks = Vec::with_capacity(3);
        for r in 0..3 {
            // Project only the nodes that send messages along r.
            let sources = tape.gather(h, &topo.rel_sources[r])?;
            let proj = tape.matmul_t(sources, vars[self.w_r[r].index()])?;
            let msg = tape.gather(proj, &topo.rel_source_pos[r])?;
            let a = tape.slice_rows(att, topo.offsets[r], topo.relation_len(r))?;
            let msg = tape.mul_col(msg, a)?;
            let sum = tape.segment_sum(msg, &topo.rel_dst[r], topo.nodes)?;
            let sum = tape.add_row(sum, vars[self.b_r[r].index()])?;
            let act = tape.relu(sum)?;
            let mask = tape.constant(topo.has_incoming[r].clone());
            blocks.push(tape.mul_col(act, mask)?);
        }
        Ok((tape.concat_cols(&blocks)?, h_uv))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        h: Var,
        e: Var,
        topo: &Topology,
        opts: &HtlOptions,
        bn: BnStats<'_>,
    ) -> Result<LayerOutput, DiffError> {
        let (cat, h_uv) = self.aggregate(tape, vars, h, e, topo, opts)?;
        let fixed = match bn {
            BnStats::Batch => None,
            BnStats::Fixed(m, v) => Some((m, v)),
        };
        let (out, mean, var) = tape.batch_norm(cat, vars[self.gamma.index()], vars[self.beta.index()], fixed, opts.bn_eps)?;
        Ok(LayerOutput {
            nodes: out,
            edges: h_uv,
            stats: (mean, var),
        })
    }
}

/// One-layer MLP over the concatenation of the input features and every
/// layer output: `ReLU(W [h⁰ ‖ … ‖ hᴷ] + b)`.
#[derive(Debug, Clone)]
pub struct JkCombiner {
    pub d_in: usize,
    pub d_out: usize,
    pub w: ParamId,
    pub b: ParamId,
}

impl JkCombiner {
    pub fn new(params: &mut ParamSet, rng: &mut impl Rng, prefix: &str, d_in: usize, d_out: usize) -> Self {
        let w = params.insert(format!("{prefix}.w"), glorot(rng, d_out, d_in));
        let b = params.insert(format!("{prefix}.b"), zeros(1, d_out));
        Self { d_in, d_out, w, b }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], layers: &[Var]) -> Result<Var, DiffError> {
        let cat = if layers.len() == 1 {
            layers[0]
        } else {
            tape.concat_cols(layers)?
        };
        let z = tape.matmul_t(cat, vars[self.w.index()])?;
        let z = tape.add_row(z, vars[self.b.index()])?;
        tape.relu(z)
    }
}

/// Running batch-norm statistics with exponential averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
}

impl RunningStats {
    pub fn new(cols: usize) -> Self {
        Self {
            mean: Array2::zeros((1, cols)),
            var: Array2::ones((1, cols)),
        }
    }

    /// `running ← (1 − momentum) running + momentum batch`.
    pub fn update(&mut self, mean: &Tensor, var: &Tensor, momentum: f64) {
        self.mean = &self.mean * (1.0 - momentum) + mean * momentum;
        self.var = &self.var * (1.0 - momentum) + var * momentum;
    }
}
