//! HTNet: a heterogeneous temporal graph network that predicts per-station
//! throughput on dynamic WLAN deployments.
//!
//! Each snapshot is a typed graph of access points (APs) and stations
//! (STAs). HTL attention layers embed every snapshot, a stacked LSTM
//! carries each STA's state across snapshots, and a softplus head emits
//! strictly positive throughput. The crate also ships the synthetic
//! deployment generator with an analytic throughput oracle, the SINR and
//! MLP baselines, and a 1-WL checker for linked-star graphs.

pub mod autodiff;
pub mod baselines;
pub mod expressiveness;
pub mod graph;
pub mod htl;
pub mod params;
pub mod runtime;
pub mod scenario;
pub mod temporal;
pub mod training;

pub use baselines::{MlpBaseline, OracleModel, SinrBaseline};
pub use graph::{DeploymentSequence, NodeId, NodeKind, Snapshot, WlanEdge, WlanNode};
pub use scenario::{generate, generate_one, ScenarioConfig};
pub use temporal::{Htnet, ModelConfig, Prediction};
pub use training::{evaluate, train, EvalReport, Predictor, SavedModel, TrainConfig};
