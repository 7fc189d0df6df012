//! Versioned binary checkpoints.
//!
//! Layout: the 8-byte magic `HTNETCKP`, the format version as `u32` LE,
//! the JSON header length as `u64` LE, the JSON header, then every tensor
//! listed in the header as row-major `f64` LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Predictor, TrainError};
use crate::autodiff::Tensor;
use crate::baselines::{MlpBaseline, MlpConfig, OracleModel, SinrBaseline};
use crate::graph::DeploymentSequence;
use crate::htl::RunningStats;
use crate::temporal::{Htnet, ModelConfig, ModelError, Prediction, Scaler};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HTNETCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Any model the command line can train, store and evaluate.
#[derive(Debug, Clone)]
pub enum SavedModel {
    Htnet(Htnet),
    Sinr(SinrBaseline),
    Mlp(MlpBaseline),
    Oracle(OracleModel),
}

impl SavedModel {
    fn inner(&self) -> &dyn Predictor {
        match self {
            Self::Htnet(m) => m,
            Self::Sinr(m) => m,
            Self::Mlp(m) => m,
            Self::Oracle(m) => m,
        }
    }
}

impl Predictor for SavedModel {
    fn name(&self) -> &str {
        self.inner().name()
    }

    fn num_params(&self) -> usize {
        self.inner().num_params()
    }

    fn predict(&self, deployments: &[DeploymentSequence]) -> Result<Vec<Prediction>, ModelError> {
        self.inner().predict(deployments)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelHeader {
    Htnet { config: ModelConfig, scaler: Option<Scaler> },
    Sinr { gamma: f64 },
    Mlp { config: MlpConfig, scaler: Option<Scaler> },
    Oracle,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelHeader,
    tensors: Vec<TensorInfo>,
}

fn running_names(k: usize) -> [String; 2] {
    [format!("htl{k}.running_mean"), format!("htl{k}.running_var")]
}

impl SavedModel {
    fn parts(&self) -> (ModelHeader, Vec<(String, Tensor)>) {
        let named = |p: &crate::params::ParamSet| p.iter().map(|(n, t)| (n.to_string(), t.clone())).collect::<Vec<_>>();
        match self {
            Self::Htnet(m) => {
                let mut t = named(&m.params);
                for (k, r) in m.running.iter().enumerate() {
                    let [a, b] = running_names(k);
                    t.push((a, r.mean.clone()));
                    t.push((b, r.var.clone()));
                }
                (
                    ModelHeader::Htnet {
                        config: m.config.clone(),
                        scaler: m.scaler.clone(),
                    },
                    t,
                )
            }
            Self::Sinr(m) => (ModelHeader::Sinr { gamma: m.gamma }, Vec::new()),
            Self::Mlp(m) => (
                ModelHeader::Mlp {
                    config: m.config.clone(),
                    scaler: m.scaler.clone(),
                },
                named(&m.params),
            ),
            Self::Oracle(_) => (ModelHeader::Oracle, Vec::new()),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), TrainError> {
        let (model, tensors) = self.parts();
        let header = Header {
            model,
            tensors: tensors
                .iter()
                .map(|(n, t)| TensorInfo {
                    name: n.clone(),
                    rows: t.nrows(),
                    cols: t.ncols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in &tensors {
            for v in t.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, TrainError> {
        let bad = |m: &str| TrainError::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::Version {
                what: "checkpoint",
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| bad("header too large"))?;
        if len > 1 << 26 {
            return Err(bad("header too large"));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for info in header.tensors {
            let n = info.rows.checked_mul(info.cols).ok_or_else(|| bad("tensor too large"))?;
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes).map_err(|_| bad("truncated tensor data"))?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let t = Tensor::from_shape_vec((info.rows, info.cols), data).expect("shape matches length");
            tensors.push((info.name, t));
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(match header.model {
            ModelHeader::Htnet { config, scaler } => {
                let layers = config.layers;
                let mut running = Vec::with_capacity(layers);
                for k in (0..layers).rev() {
                    let [a, b] = running_names(k);
                    let var = tensors.pop().filter(|(n, _)| *n == b);
                    let mean = tensors.pop().filter(|(n, _)| *n == a);
                    match (mean, var) {
                        (Some((_, mean)), Some((_, var))) => running.push(RunningStats { mean, var }),
                        _ => return Err(bad("missing batch-norm statistics")),
                    }
                }
                running.reverse();
                Self::Htnet(Htnet::from_parts(config, tensors, running, scaler)?)
            }
            ModelHeader::Sinr { gamma } => Self::Sinr(SinrBaseline { gamma }),
            ModelHeader::Mlp { config, scaler } => Self::Mlp(MlpBaseline::from_parts(config, tensors, scaler)?),
            ModelHeader::Oracle => Self::Oracle(OracleModel),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, ScenarioConfig};

    fn round_trip(m: &SavedModel) -> SavedModel {
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        SavedModel::read_from(buf.as_slice()).unwrap()
    }

    #[test]
    fn htnet_round_trip_preserves_predictions() {
        let mut c = ScenarioConfig::for_setup(2, 4).unwrap();
        c.n_aps = (2, 2);
        c.stas_per_ap = (3, 3);
        c.sequence_length = 3;
        let d = generate(&c, 2).unwrap();
        let mut m = Htnet::new(ModelConfig::with_width(5), 3).unwrap();
        m.scaler = Some(Scaler::fit(&d));
        m.running[1].mean.fill(0.3);
        m.running[1].var.fill(2.0);
        let saved = SavedModel::Htnet(m.clone());
        let SavedModel::Htnet(back) = round_trip(&saved) else {
            panic!("kind changed")
        };
        assert_eq!(back.params, m.params);
        assert_eq!(back.running, m.running);
        assert_eq!(back.predict(&d).unwrap(), m.predict(&d).unwrap());
    }

    #[test]
    fn baselines_round_trip() {
        let SavedModel::Sinr(s) = round_trip(&SavedModel::Sinr(SinrBaseline { gamma: 1.25 })) else {
            panic!()
        };
        assert_eq!(s.gamma, 1.25);
        assert!(matches!(round_trip(&SavedModel::Oracle(OracleModel)), SavedModel::Oracle(_)));
        let mlp = MlpBaseline::new(MlpConfig::default());
        let SavedModel::Mlp(back) = round_trip(&SavedModel::Mlp(mlp.clone())) else {
            panic!()
        };
        assert_eq!(back, mlp);
    }

    #[test]
    fn rejects_corrupt_and_foreign_files() {
        let mut buf = Vec::new();
        SavedModel::Sinr(SinrBaseline { gamma: 1.0 }).write_to(&mut buf).unwrap();
        let mut wrong_version = buf.clone();
        wrong_version[8] = 9;
        assert!(matches!(
            SavedModel::read_from(wrong_version.as_slice()),
            Err(TrainError::Version { found: 9, .. })
        ));
        assert!(SavedModel::read_from(&b"NOTACKPT"[..]).is_err());
        assert!(SavedModel::read_from(&buf[..buf.len() - 2]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(SavedModel::read_from(extra.as_slice()).is_err());
    }
}
