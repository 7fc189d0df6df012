//! Training, evaluation and the depth study.
//!
//! [`train`] fits an [`Htnet`] with Adam on batches of whole deployments,
//! keeps the parameters with the best validation RMSE and records one
//! [`EpochRecord`] per epoch. Every model is scored through the
//! [`Predictor`] trait by [`evaluate`], so baselines and HTNet share one
//! report format.

mod adam;
mod checkpoint;
mod config;
mod eval;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{SavedModel, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{TrainConfig, CONFIG_VERSION};
pub use eval::{evaluate, resolve_threads, EvalReport, Metrics, Predictor};

use std::io::{self, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, Tensor};
use crate::graph::DeploymentSequence;
use crate::temporal::{Htnet, Mode, ModelError, Scaler};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{what} format version {found} is not supported (expected {expected})")]
    Version { what: &'static str, found: u32, expected: u32 },
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("empty training split")]
    EmptyTrainingSet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Train/validation/test sizes under a 3/1/1 split by deployment order.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 3 / 5;
    let val = (n - train) / 2;
    (train, val, n - train - val)
}

/// Splits `deployments` in order into train, validation and test.
pub fn split(deployments: &[DeploymentSequence]) -> [&[DeploymentSequence]; 3] {
    let (a, b, _) = split_sizes(deployments.len());
    let (train, rest) = deployments.split_at(a);
    let (val, test) = rest.split_at(b);
    [train, val, test]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Pooled over every labelled pair seen during the epoch.
    pub train_rmse: f64,
    pub val_rmse: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Parameters of the best validation epoch, or of the last epoch when
    /// there is no validation split.
    pub model: Htnet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Trains a fresh model; see [`train_with`].
pub fn train(
    train_set: &[DeploymentSequence],
    val_set: &[DeploymentSequence],
    config: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    train_with(train_set, val_set, config, |_| {})
}

/// Trains a fresh model, calling `on_epoch` after every epoch.
///
/// Fully deterministic for a given config: the shuffle stream, parameter
/// initialization and reduction order depend only on `config.seed`.
pub fn train_with(
    train_set: &[DeploymentSequence],
    val_set: &[DeploymentSequence],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut model = Htnet::new(config.model.clone(), config.seed)?;
    model.scaler = Some(Scaler::fit(train_set));
    let mut adam = Adam::new(config.learning_rate, config.adam, model.params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Htnet)> = None;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let diverged = |detail: String| TrainError::Diverged { epoch, detail };
        order.shuffle(&mut rng);
        let (mut sq, mut count) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let deps: Vec<&DeploymentSequence> = chunk.iter().map(|&i| &train_set[i]).collect();
            let batch = model.batch(&deps)?;
            let labelled = batch.labelled().len();
            if labelled == 0 {
                continue;
            }
            let mut tape = Tape::new();
            let vars = model.params.bind(&mut tape);
            let out = model.forward(&mut tape, &vars, &batch, Mode::Train)?;
            let loss = model.loss(&mut tape, out.predictions, &batch)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                let at = tape.first_non_finite().map_or(String::new(), |(i, op)| format!(" (first at {op}, node {i})"));
                return Err(diverged(format!("loss is {value}{at}")));
            }
            let grads = tape.backward(loss).map_err(|e| diverged(e.to_string()))?;
            let g: Vec<Tensor> = vars
                .iter()
                .zip(model.params.tensors())
                .map(|(&v, p)| grads.get_or_zeros(v, p.nrows(), p.ncols()))
                .collect();
            if let Some(i) = g.iter().position(|t| t.iter().any(|x| !x.is_finite())) {
                return Err(diverged(format!("non-finite gradient for {}", model.params.iter().nth(i).map_or("?", |p| p.0))));
            }
            adam.step(model.params.tensors_mut(), &g);
            for (running, (mean, var)) in model.running.iter_mut().zip(&out.bn_stats) {
                running.update(mean, var, config.model.bn_momentum);
            }
            sq += value * value * labelled as f64;
            count += labelled;
        }
        let train_rmse = if count == 0 { 0.0 } else { (sq / count as f64).sqrt() };
        let val_rmse = if val_set.is_empty() {
            None
        } else {
            Some(Metrics::of(&model.predict(val_set)?).rmse)
        };
        if let Some(v) = val_rmse {
            if !v.is_finite() {
                return Err(diverged(format!("validation RMSE is {v}")));
            }
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, epoch, model.clone()));
            }
        }
        let record = EpochRecord {
            epoch,
            train_rmse,
            val_rmse,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.push(record);
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, Some(e)),
        None => (model, None),
    };
    Ok(TrainOutput {
        model,
        history,
        best_epoch,
    })
}

/// Writes `epoch,train_rmse,val_rmse,seconds` rows; a missing validation
/// value is left empty.
pub fn write_history_csv(mut w: impl Write, history: &[EpochRecord]) -> io::Result<()> {
    writeln!(w, "epoch,train_rmse,val_rmse,seconds")?;
    for r in history {
        let val = r.val_rmse.map_or(String::new(), |v| v.to_string());
        writeln!(w, "{},{},{},{}", r.epoch, r.train_rmse, val, r.seconds)?;
    }
    Ok(())
}

/// One row of the depth study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub layers: usize,
    pub test_rmse: f64,
    pub test_mae: f64,
    /// Median wall-clock inference time of one test sequence.
    pub inference_ms: f64,
    pub num_params: usize,
}

/// Median over `repeats` timed single-threaded predictions of `deployment`,
/// after one untimed warm-up run.
pub fn time_inference(model: &dyn Predictor, deployment: &DeploymentSequence, repeats: usize) -> Result<f64, ModelError> {
    let one = std::slice::from_ref(deployment);
    model.predict(one)?;
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        model.predict(one)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Trains one model per entry of `depths` with identical seeds and data,
/// then scores each on `test` and times inference on its first sequence.
pub fn depth_study(
    train_set: &[DeploymentSequence],
    val_set: &[DeploymentSequence],
    test_set: &[DeploymentSequence],
    base: &TrainConfig,
    depths: &[usize],
    threads: usize,
    mut on_row: impl FnMut(&DepthRow),
) -> Result<Vec<DepthRow>, TrainError> {
    let mut rows = Vec::with_capacity(depths.len());
    for &k in depths {
        let mut config = base.clone();
        config.model.layers = k;
        let out = train(train_set, val_set, &config)?;
        let (report, _) = evaluate(&out.model, test_set, threads)?;
        let inference_ms = match test_set.first() {
            Some(d) => time_inference(&out.model, d, 5)?,
            None => 0.0,
        };
        let row = DepthRow {
            layers: k,
            test_rmse: report.rmse,
            test_mae: report.mae,
            inference_ms,
            num_params: out.model.num_params(),
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Least-squares line `y = a + b·x`, returned as `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (my - b * mx, b)
}
