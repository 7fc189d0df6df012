//! Non-graph reference predictors.
//!
//! [`SinrBaseline`] scales the single-link capacity `log2(1 + SINR)` by one
//! fitted factor; [`MlpBaseline`] regresses each STA from its own features
//! and its serving link. Both ignore topology and time. [`OracleModel`]
//! recomputes the analytic label from the stored channel state and serves
//! as a perfect reference.

mod mlp;

pub use mlp::{MlpBaseline, MlpConfig};

use serde::{Deserialize, Serialize};

use crate::graph::{DeploymentSequence, Snapshot, WlanNode};
use crate::scenario::oracle_throughput;
use crate::temporal::{ModelError, Prediction};
use crate::training::Predictor;

/// `log2(1 + 10^(SINR_dB / 10))`.
pub fn capacity_term(sinr_db: f64) -> f64 {
    (10f64.powf(sinr_db / 10.0)).ln_1p() / std::f64::consts::LN_2
}

/// Visits every target STA of every snapshot in prediction order.
pub(crate) fn for_each_target<'a>(
    deployments: &'a [DeploymentSequence],
) -> impl Iterator<Item = (&'a DeploymentSequence, &'a Snapshot, &'a WlanNode)> + 'a {
    deployments.iter().flat_map(|d| {
        d.snapshots
            .iter()
            .flat_map(move |s| s.nodes.iter().filter(|n| n.is_target()).map(move |n| (d, s, n)))
    })
}

fn prediction(d: &DeploymentSequence, s: &Snapshot, n: &WlanNode, y_hat: f64) -> Prediction {
    Prediction {
        deployment_id: d.id,
        t: s.t,
        sta: n.id,
        y: s.labels.get(&n.id).copied(),
        y_hat,
    }
}

/// `ŷ = Γ · log2(1 + SINR)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrBaseline {
    pub gamma: f64,
}

impl SinrBaseline {
    /// Least-squares `Γ = Σ y·x / Σ x²` over labelled targets.
    pub fn fit(deployments: &[DeploymentSequence]) -> Result<Self, ModelError> {
        let (mut xy, mut xx) = (0.0, 0.0);
        for (_, s, n) in for_each_target(deployments) {
            if let Some(&y) = s.labels.get(&n.id) {
                let x = capacity_term(n.sinr);
                xy += x * y;
                xx += x * x;
            }
        }
        if xx == 0.0 {
            return Err(ModelError::NoTargets);
        }
        Ok(Self { gamma: xy / xx })
    }

    pub fn predict_one(&self, sinr_db: f64) -> f64 {
        self.gamma * capacity_term(sinr_db)
    }
}

impl Predictor for SinrBaseline {
    fn name(&self) -> &str {
        "sinr"
    }

    fn num_params(&self) -> usize {
        1
    }

    fn predict(&self, deployments: &[DeploymentSequence]) -> Result<Vec<Prediction>, ModelError> {
        Ok(for_each_target(deployments)
            .map(|(d, s, n)| prediction(d, s, n, self.predict_one(n.sinr)))
            .collect())
    }
}

/// Predicts the analytic throughput from the stored channel state, which
/// reproduces generated labels exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleModel;

impl Predictor for OracleModel {
    fn name(&self) -> &str {
        "oracle"
    }

    fn num_params(&self) -> usize {
        0
    }

    fn predict(&self, deployments: &[DeploymentSequence]) -> Result<Vec<Prediction>, ModelError> {
        let mut out = Vec::new();
        for d in deployments {
            for s in &d.snapshots {
                let y = oracle_throughput(s);
                out.extend(
                    s.nodes
                        .iter()
                        .filter(|n| n.is_target())
                        .map(|n| prediction(d, s, n, y.get(&n.id).copied().unwrap_or(0.0))),
                );
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, ScenarioConfig};
    use crate::training::evaluate;

    fn data(setup: u8, n: usize) -> Vec<DeploymentSequence> {
        let mut c = ScenarioConfig::for_setup(setup, 21).unwrap();
        c.n_aps = (2, 4);
        c.stas_per_ap = (2, 5);
        c.sequence_length = 3;
        generate(&c, n).unwrap()
    }

    #[test]
    fn capacity_examples() {
        let b = SinrBaseline { gamma: 1.0 };
        assert_eq!(b.predict_one(f64::NEG_INFINITY), 0.0);
        assert!((b.predict_one(0.0) - 1.0).abs() < 1e-15);
        let mut last = f64::MIN;
        for db in -20..40 {
            let y = b.predict_one(db as f64);
            assert!(y > last);
            last = y;
        }
    }

    #[test]
    fn fit_matches_closed_form() {
        let d = data(1, 3);
        let (mut xy, mut xx) = (0.0, 0.0);
        for dep in &d {
            for s in &dep.snapshots {
                for (id, y) in s.targets() {
                    let sinr = s.node(id).unwrap().sinr;
                    let x = (1.0 + 10f64.powf(sinr / 10.0)).log2();
                    xy += x * y;
                    xx += x * x;
                }
            }
        }
        let b = SinrBaseline::fit(&d).unwrap();
        assert!(b.gamma > 0.0);
        assert!((b.gamma - xy / xx).abs() < 1e-12 * b.gamma);
        assert!(matches!(SinrBaseline::fit(&[]), Err(ModelError::NoTargets)));
    }

    #[test]
    fn time_blind_under_snapshot_permutation() {
        let d = data(2, 1);
        let b = SinrBaseline::fit(&d).unwrap();
        let mut rev = d.clone();
        rev[0].snapshots.reverse();
        let key = |p: &Prediction| (p.t, p.sta);
        let mut a = b.predict(&d).unwrap();
        let mut r = b.predict(&rev).unwrap();
        a.sort_by_key(key);
        r.sort_by_key(key);
        assert_eq!(a, r);
    }

    #[test]
    fn oracle_reproduces_labels() {
        let d = data(5, 3);
        let (r, p) = evaluate(&OracleModel, &d, 1).unwrap();
        assert_eq!((r.rmse, r.mae), (0.0, 0.0));
        assert_eq!(p.len(), d.iter().map(|d| d.target_count()).sum::<usize>());
    }
}
