//! The full model: HTL stack and jumping-knowledge combine per snapshot,
//! a stacked LSTM per STA across snapshots, and a softplus head.

mod batch;
mod config;
mod lstm;
mod scaler;

pub use batch::{SequenceBatch, Target};
pub use config::{CellActivation, ModelConfig};
pub use lstm::LstmLayer;
pub use scaler::{Moments, Scaler};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{DiffError, Index, Tape, Tensor, Var};
use crate::graph::{DeploymentSequence, FeatureError, NodeId, EDGE_FEATURES, NODE_FEATURES};
use crate::htl::{BnStats, HtlLayer, HtlOptions, JkCombiner, RunningStats};
use crate::params::{glorot, ParamId, ParamSet};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("parameter mismatch: {0}")]
    Parameters(String),
    #[error("no labelled targets in batch")]
    NoTargets,
}

/// Batch-norm statistics source for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; returned for running-average updates.
    Train,
    /// Running statistics; every snapshot is processed independently.
    Eval,
}

pub struct ForwardOutput {
    /// `targets × 1`, in the order of [`SequenceBatch::targets`].
    pub predictions: Var,
    /// Per HTL layer, the `(mean, var)` used.
    pub bn_stats: Vec<(Tensor, Tensor)>,
}

/// One prediction row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub deployment_id: u64,
    pub t: u32,
    pub sta: NodeId,
    pub y: Option<f64>,
    pub y_hat: f64,
}

#[derive(Debug, Clone)]
pub struct Htnet {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub layers: Vec<HtlLayer>,
    pub jk: JkCombiner,
    pub lstm: Vec<LstmLayer>,
    /// `1 × width`, no bias.
    pub head: ParamId,
    pub running: Vec<RunningStats>,
    pub scaler: Option<Scaler>,
}

impl Htnet {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut layers = Vec::with_capacity(config.layers);
        let (mut d, mut de) = (NODE_FEATURES, EDGE_FEATURES);
        let mut jk_in = NODE_FEATURES;
        for k in 0..config.layers {
            let l = HtlLayer::new(&mut params, &mut rng, &format!("htl{k}"), d, de, config.hidden, config.edge_hidden);
            d = l.out_dim();
            de = config.edge_hidden;
            jk_in += d;
            layers.push(l);
        }
        let jk = JkCombiner::new(&mut params, &mut rng, "jk", jk_in, config.embed);
        let mut lstm = Vec::new();
        let mut width = config.embed;
        if config.temporal {
            for l in 0..config.lstm_layers {
                lstm.push(LstmLayer::new(&mut params, &mut rng, &format!("lstm{l}"), width, config.lstm_hidden));
                width = config.lstm_hidden;
            }
        }
        let head = params.insert("head.w", glorot(&mut rng, 1, width));
        let running = layers.iter().map(|l| RunningStats::new(l.out_dim())).collect();
        Ok(Self {
            config,
            params,
            layers,
            jk,
            lstm,
            head,
            running,
            scaler: None,
        })
    }

    /// Rebuilds a model from stored tensors, checking every name and shape.
    pub fn from_parts(
        config: ModelConfig,
        tensors: Vec<(String, Tensor)>,
        running: Vec<RunningStats>,
        scaler: Option<Scaler>,
    ) -> Result<Self, ModelError> {
        let mut model = Self::new(config, 0)?;
        if tensors.len() != model.params.len() {
            return Err(ModelError::Parameters(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                tensors.len()
            )));
        }
        for (name, t) in tensors {
            let id = model
                .params
                .id(&name)
                .ok_or_else(|| ModelError::Parameters(format!("unknown tensor {name}")))?;
            let slot = model.params.get_mut(id);
            if slot.dim() != t.dim() {
                return Err(ModelError::Parameters(format!(
                    "{name}: expected shape {:?}, found {:?}",
                    slot.dim(),
                    t.dim()
                )));
            }
            *slot = t;
        }
        if running.len() != model.running.len()
            || running.iter().zip(&model.running).any(|(a, b)| a.mean.dim() != b.mean.dim() || a.var.dim() != b.var.dim())
        {
            return Err(ModelError::Parameters("batch-norm statistics do not match the layer layout".into()));
        }
        model.running = running;
        model.scaler = scaler;
        Ok(model)
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    fn options(&self) -> HtlOptions {
        HtlOptions {
            attention: self.config.attention,
            leaky_slope: self.config.leaky_slope,
            bn_eps: self.config.bn_eps,
        }
    }

    pub fn batch(&self, deployments: &[&DeploymentSequence]) -> Result<SequenceBatch, ModelError> {
        let scaler = if self.config.standardize { self.scaler.as_ref() } else { None };
        SequenceBatch::build(deployments, scaler)
    }

    /// Snapshot embeddings of every union node, `nodes × embed`.
    pub fn embed(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &SequenceBatch,
        mode: Mode,
    ) -> Result<(Var, Vec<(Tensor, Tensor)>), ModelError> {
        let opts = self.options();
        let mut h = tape.constant(batch.node_x.clone());
        let mut e = tape.constant(batch.edge_x.clone());
        let mut outs = vec![h];
        let mut stats = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let bn = match mode {
                Mode::Train => BnStats::Batch,
                Mode::Eval => BnStats::Fixed(&self.running[k].mean, &self.running[k].var),
            };
            let out = layer.forward(tape, vars, h, e, &batch.topo, &opts, bn)?;
            h = out.nodes;
            e = out.edges;
            outs.push(h);
            stats.push(out.stats);
        }
        Ok((self.jk.forward(tape, vars, &outs)?, stats))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &SequenceBatch,
        mode: Mode,
    ) -> Result<ForwardOutput, ModelError> {
        let (emb, bn_stats) = self.embed(tape, vars, batch, mode)?;
        let features = if self.config.temporal {
            let (u, steps) = (batch.slots, batch.steps);
            let inputs: Vec<Option<usize>> = batch.step_rows.iter().flat_map(|r| r.iter().copied()).collect();
            // Layer by layer over the whole sequence, so input projections
            // are one matrix product per layer.
            let mut xs = tape.gather_or_zero(emb, &Arc::new(inputs))?;
            for layer in &self.lstm {
                let zx = layer.project_input(tape, vars, xs)?;
                let zero = tape.constant(Tensor::zeros((u, layer.hidden)));
                let (mut h, mut c) = (zero, zero);
                let mut outs = Vec::with_capacity(steps);
                for t in 0..steps {
                    let zx_t = tape.slice_rows(zx, t * u, u)?;
                    let (h_new, c_new) = layer.step_projected(tape, vars, zx_t, h, c, self.config.cell)?;
                    // Detached STAs keep their state until they reattach.
                    h = tape.select(&batch.step_active[t], h_new, h)?;
                    c = tape.select(&batch.step_active[t], c_new, c)?;
                    outs.push(h);
                }
                xs = tape.concat_rows(&outs)?;
            }
            let index: Index = Arc::new(batch.targets.iter().map(|g| g.step * u + g.slot).collect());
            tape.gather(xs, &index)?
        } else {
            let index: Index = Arc::new(batch.targets.iter().map(|g| g.row).collect());
            tape.gather(emb, &index)?
        };
        let logits = tape.matmul_t(features, vars[self.head.index()])?;
        let mut predictions = tape.softplus(logits)?;
        if let Some(s) = self.scaler.as_ref().filter(|_| self.config.standardize) {
            predictions = tape.scale(predictions, s.label)?;
        }
        Ok(ForwardOutput { predictions, bn_stats })
    }

    /// RMSE over the labelled targets of `batch`.
    pub fn loss(&self, tape: &mut Tape, predictions: Var, batch: &SequenceBatch) -> Result<Var, ModelError> {
        let labelled = batch.labelled();
        let y: Vec<f64> = labelled.iter().map(|&i| batch.targets[i].y.unwrap_or(0.0)).collect();
        let pred = tape.gather(predictions, &Arc::new(labelled))?;
        rmse_loss(tape, pred, &y)
    }

    /// Inference over whole deployments with running statistics.
    pub fn predict(&self, deployments: &[DeploymentSequence]) -> Result<Vec<Prediction>, ModelError> {
        let mut out = Vec::new();
        let vars_template = &self.params;
        for dep in deployments {
            let batch = self.batch(&[dep])?;
            let mut tape = Tape::new();
            let vars = vars_template.bind(&mut tape);
            let f = self.forward(&mut tape, &vars, &batch, Mode::Eval)?;
            let pred = tape.value(f.predictions);
            out.extend(batch.targets.iter().enumerate().map(|(i, g)| Prediction {
                deployment_id: g.deployment_id,
                t: g.t,
                sta: g.sta,
                y: g.y,
                y_hat: pred[[i, 0]],
            }));
        }
        Ok(out)
    }
}

/// `sqrt(mean((ŷ − y)²))`; an empty set is an error rather than NaN.
pub fn rmse_loss(tape: &mut Tape, predictions: Var, y: &[f64]) -> Result<Var, ModelError> {
    if y.is_empty() {
        return Err(ModelError::NoTargets);
    }
    let target = tape.constant(Tensor::from_shape_vec((y.len(), 1), y.to_vec()).expect("column"));
    let mse = tape.mse(predictions, target)?;
    Ok(tape.sqrt(mse)?)
}

#[cfg(test)]
mod tests;
