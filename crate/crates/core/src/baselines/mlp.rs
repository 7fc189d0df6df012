
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{for_each_target, prediction};
use crate::autodiff::{DiffError, Tape, Tensor, Var};
use crate::graph::{
    assemble_edge_features, assemble_node_features, DeploymentSequence, EdgeKind, EDGE_FEATURES, NODE_FEATURES,
};
use crate::params::{glorot, zeros, ParamId, ParamSet};
use crate::temporal::{rmse_loss, ModelError, Prediction, Scaler};
use crate::training::{Adam, AdamConfig, Predictor};

/// Input width: STA node features followed by its serving-link features.
pub const MLP_INPUT: usize = NODE_FEATURES + EDGE_FEATURES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Two ReLU hidden layers and a softplus output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBaseline {
    pub config: MlpConfig,
    pub params: ParamSet,
    pub scaler: Option<Scaler>,
    layers: [(ParamId, ParamId); 3],
}

impl MlpBaseline {
    pub fn new(config: MlpConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let dims = [(MLP_INPUT, config.hidden), (config.hidden, config.hidden), (config.hidden, 1)];
        let layers = [0, 1, 2].map(|l| {
            let (i, o) = dims[l];
            (
                params.insert(format!("mlp.w{l}"), glorot(&mut rng, o, i)),
                params.insert(format!("mlp.b{l}"), zeros(1, o)),
            )
        });
        Self {
            config,
            params,
            scaler: None,
            layers,
        }
    }

    /// Rebuilds a model from stored tensors, checking names and shapes.
    pub fn from_parts(config: MlpConfig, tensors: Vec<(String, Tensor)>, scaler: Option<Scaler>) -> Result<Self, ModelError> {
        let mut m = Self::new(config);
        if tensors.len() != m.params.len() {
            return Err(ModelError::Parameters(format!("expected {} tensors, found {}", m.params.len(), tensors.len())));
        }
        for (name, t) in tensors {
            let id = m.params.id(&name).ok_or_else(|| ModelError::Parameters(format!("unknown tensor {name}")))?;
            if m.params.get(id).dim() != t.dim() {
                return Err(ModelError::Parameters(format!("{name}: shape {:?}", t.dim())));
            }
            *m.params.get_mut(id) = t;
        }
        m.scaler = scaler;
        Ok(m)
    }

    /// Feature rows and labels of every target STA, in prediction order.
    pub fn rows(&self, deployments: &[DeploymentSequence]) -> Result<(Tensor, Vec<Option<f64>>), ModelError> {
        let mut data = Vec::new();
        let mut y = Vec::new();
        for (_, s, n) in for_each_target(deployments) {
            let mut f = assemble_node_features(n)?;
            let link = s.edges.iter().find(|e| e.kind == EdgeKind::ApSta && Some(e.u) == n.ap && e.v == n.id);
            let mut g = match link {
                Some(e) => assemble_edge_features(e)?,
                None => [0.0; EDGE_FEATURES],
            };
            if let Some(sc) = &self.scaler {
                sc.node(&mut f);
                sc.edge(&mut g);
            }
            data.extend_from_slice(&f);
            data.extend_from_slice(&g);
            y.push(s.labels.get(&n.id).copied());
        }
        let x = Tensor::from_shape_vec((y.len(), MLP_INPUT), data).expect("row width");
        Ok((x, y))
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var, DiffError> {
        let mut h = x;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.matmul_t(h, vars[w.index()])?;
            h = tape.add_row(h, vars[b.index()])?;
            h = if l < 2 { tape.relu(h)? } else { tape.softplus(h)? };
        }
        Ok(h)
    }

    /// Fits the scaler on `train`, then minimizes RMSE with Adam over
    /// shuffled batches of deployments.
    pub fn fit(train: &[DeploymentSequence], config: MlpConfig) -> Result<Self, ModelError> {
        let mut m = Self::new(config);
        m.scaler = Some(Scaler::fit(train));
        let per_dep: Vec<(Tensor, Vec<f64>, Vec<usize>)> = train
            .iter()
            .map(|d| {
                let (x, y) = m.rows(std::slice::from_ref(d))?;
                let keep: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
                Ok((x, keep.iter().map(|&i| y[i].unwrap_or(0.0)).collect(), keep))
            })
            .collect::<Result<_, ModelError>>()?;
        let mut adam = Adam::new(m.config.learning_rate, AdamConfig::default(), m.params.tensors());
        let mut rng = ChaCha8Rng::seed_from_u64(m.config.seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for _ in 0..m.config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(m.config.batch_size.max(1)) {
                let mut rows = Vec::new();
                let mut ys = Vec::new();
                for &i in chunk {
                    let (x, y, keep) = &per_dep[i];
                    rows.extend(keep.iter().map(|&r| x.row(r).to_owned()));
                    ys.extend_from_slice(y);
                }
                if ys.is_empty() {
                    continue;
                }
                let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
                let x = ndarray::stack(ndarray::Axis(0), &views).expect("equal rows");
                let mut tape = Tape::new();
                let vars = m.params.bind(&mut tape);
                let xv = tape.constant(x);
                let pred = m.forward(&mut tape, &vars, xv)?;
                let loss = rmse_loss(&mut tape, pred, &ys)?;
                let grads = tape.backward(loss)?;
                let g: Vec<Tensor> = vars
                    .iter()
                    .zip(m.params.tensors())
                    .map(|(&v, p)| grads.get_or_zeros(v, p.nrows(), p.ncols()))
                    .collect();
                adam.step(m.params.tensors_mut(), &g);
            }
        }
        Ok(m)
    }
}

impl Predictor for MlpBaseline {
    fn name(&self) -> &str {
        "mlp"
    }

    fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    fn predict(&self, deployments: &[DeploymentSequence]) -> Result<Vec<Prediction>, ModelError> {
        let (x, _) = self.rows(deployments)?;
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let xv = tape.constant(x);
        let pred = self.forward(&mut tape, &vars, xv)?;
        let pred = tape.value(pred);
        Ok(for_each_target(deployments)
            .enumerate()
            .map(|(i, (d, s, n))| prediction(d, s, n, pred[[i, 0]]))
            .collect())
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::scenario::{generate, ScenarioConfig};
    use crate::training::evaluate;
    use rand::Rng;

    fn data(n: usize) -> Vec<DeploymentSequence> {
        let mut c = ScenarioConfig::for_setup(1, 31).unwrap();
        c.n_aps = (2, 3);
        c.stas_per_ap = (2, 4);
        c.sequence_length = 3;
        generate(&c, n).unwrap()
    }

    #[test]
    fn input_width_is_25() {
        let m = MlpBaseline::new(MlpConfig::default());
        let (x, y) = m.rows(&data(2)).unwrap();
        assert_eq!(x.ncols(), 25);
        assert_eq!(x.nrows(), y.len());
    }

    #[test]
    fn gradient_check() {
        let m = MlpBaseline::new(MlpConfig {
            hidden: 5,
            ..MlpConfig::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut inputs: Vec<(String, Tensor)> = m
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.mapv(|v| v + rng.gen_range(-0.2..0.2))))
            .collect();
        inputs.push(("x".into(), Tensor::from_shape_simple_fn((6, MLP_INPUT), || rng.gen_range(-1.0..1.0))));
        let y: Vec<f64> = (0..6).map(|i| 0.5 + i as f64 * 0.3).collect();
        let report = gradcheck(&inputs, 1e-5, 1e-4, |tape, v| {
            let p = m.forward(tape, v, v[6])?;
            rmse_loss(tape, p, &y).map_err(|e| match e {
                ModelError::Diff(d) => d,
                other => panic!("{other}"),
            })
        });
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn learns_constant_labels() {
        let mut d = data(4);
        for dep in &mut d {
            for s in &mut dep.snapshots {
                s.labels.values_mut().for_each(|y| *y = 2.5);
            }
        }
        let m = MlpBaseline::fit(
            &d,
            MlpConfig {
                hidden: 16,
                epochs: 400,
                learning_rate: 1e-2,
                ..MlpConfig::default()
            },
        )
        .unwrap();
        let (r, _) = evaluate(&m, &d, 1).unwrap();
        assert!(r.rmse < 0.05, "{}", r.rmse);
    }

    #[test]
    fn rebuild_from_parts() {
        let m = MlpBaseline::new(MlpConfig::default());
        let t: Vec<(String, Tensor)> = m.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        assert_eq!(MlpBaseline::from_parts(m.config.clone(), t, None).unwrap(), m);
    }
}
