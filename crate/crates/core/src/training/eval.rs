use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::graph::DeploymentSequence;
use crate::temporal::{Htnet, ModelError, Prediction};

/// Anything that maps whole deployments to per-STA, per-snapshot
/// predictions.
pub trait Predictor: Sync {
    fn name(&self) -> &str;

    fn num_params(&self) -> usize;

    /// One row per target STA per snapshot, in snapshot order.
    fn predict(&self, deployments: &[DeploymentSequence]) -> Result<Vec<Prediction>, ModelError>;
}

impl Predictor for Htnet {
    fn name(&self) -> &str {
        if self.config.temporal {
            "htnet"
        } else {
            "htnet-static"
        }
    }

    fn num_params(&self) -> usize {
        Htnet::num_params(self)
    }

    fn predict(&self, deployments: &[DeploymentSequence]) -> Result<Vec<Prediction>, ModelError> {
        Htnet::predict(self, deployments)
    }
}

/// Error metrics over a set of labelled predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub rmse: f64,
    pub mae: f64,
}

impl Metrics {
    /// Pooled over `(y, ŷ)` pairs; an empty set gives zeros.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let (mut n, mut sq, mut abs) = (0usize, 0.0, 0.0);
        for (y, p) in pairs {
            n += 1;
            sq += (p - y) * (p - y);
            abs += (p - y).abs();
        }
        if n == 0 {
            return Self::default();
        }
        Self {
            count: n,
            rmse: (sq / n as f64).sqrt(),
            mae: abs / n as f64,
        }
    }

    pub fn of(predictions: &[Prediction]) -> Self {
        Self::from_pairs(predictions.iter().filter_map(|p| p.y.map(|y| (y, p.y_hat))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    /// Over every labelled STA-time pair, in Mbps.
    pub rmse: f64,
    pub mae: f64,
    pub count: usize,
    pub per_setup: BTreeMap<u8, Metrics>,
    pub sequences: usize,
    /// Mean wall-clock inference time of one whole sequence.
    pub inference_ms_per_sequence: f64,
    pub num_params: usize,
}

/// Number of worker threads for `threads`, where 0 means all cores.
pub fn resolve_threads(threads: usize) -> usize {
    if threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        threads
    }
}

/// Runs `predictor` on each deployment separately, timing every sequence.
/// Work is split into contiguous chunks, so output order does not depend on
/// `threads`.
pub fn evaluate(
    predictor: &dyn Predictor,
    deployments: &[DeploymentSequence],
    threads: usize,
) -> Result<(EvalReport, Vec<Prediction>), ModelError> {
    let threads = resolve_threads(threads).clamp(1, deployments.len().max(1));
    let chunk = deployments.len().div_ceil(threads).max(1);
    let run = |part: &[DeploymentSequence]| -> Result<Vec<(Vec<Prediction>, f64)>, ModelError> {
        part.iter()
            .map(|d| {
                let start = Instant::now();
                let p = predictor.predict(std::slice::from_ref(d))?;
                Ok((p, start.elapsed().as_secs_f64() * 1e3))
            })
            .collect()
    };
    let results: Vec<(Vec<Prediction>, f64)> = if threads == 1 {
        run(deployments)?
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = deployments.chunks(chunk).map(|part| s.spawn(move || run(part))).collect();
            let mut out = Vec::new();
            for h in handles {
                out.extend(h.join().expect("evaluation worker panicked")?);
            }
            Ok::<_, ModelError>(out)
        })?
    };

    let mut per_setup: BTreeMap<u8, Vec<(f64, f64)>> = BTreeMap::new();
    let mut all = Vec::new();
    let mut total_ms = 0.0;
    for (dep, (preds, ms)) in deployments.iter().zip(&results) {
        total_ms += ms;
        let pairs = preds.iter().filter_map(|p| p.y.map(|y| (y, p.y_hat)));
        per_setup.entry(dep.setup).or_default().extend(pairs);
    }
    for (preds, _) in results {
        all.extend(preds);
    }
    let overall = Metrics::of(&all);
    let report = EvalReport {
        model: predictor.name().to_string(),
        rmse: overall.rmse,
        mae: overall.mae,
        count: overall.count,
        per_setup: per_setup.into_iter().map(|(k, v)| (k, Metrics::from_pairs(v))).collect(),
        sequences: deployments.len(),
        inference_ms_per_sequence: if deployments.is_empty() { 0.0 } else { total_ms / deployments.len() as f64 },
        num_params: predictor.num_params(),
    };
    Ok((report, all))
}
