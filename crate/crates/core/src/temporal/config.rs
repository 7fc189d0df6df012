use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::htl::AttentionMode;

/// Nonlinearity of the LSTM candidate and cell output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CellActivation {
    #[default]
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of HTL layers `K`.
    pub layers: usize,
    /// Per-relation node width; layer outputs are three times this.
    pub hidden: usize,
    pub edge_hidden: usize,
    /// Width of the combined snapshot embedding.
    pub embed: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub attention: AttentionMode,
    pub cell: CellActivation,
    /// `false` drops the LSTM: the head reads snapshot embeddings directly.
    pub temporal: bool,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Standardize continuous inputs with statistics of the training split.
    pub standardize: bool,
    /// Only 0 is supported.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 128,
            edge_hidden: 128,
            embed: 128,
            lstm_hidden: 128,
            lstm_layers: 2,
            attention: AttentionMode::Softmax,
            cell: CellActivation::Sigmoid,
            temporal: true,
            leaky_slope: 0.2,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            standardize: true,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    /// All widths set to `w`.
    pub fn with_width(w: usize) -> Self {
        Self {
            hidden: w,
            edge_hidden: w,
            embed: w,
            lstm_hidden: w,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.hidden == 0 || self.edge_hidden == 0 || self.embed == 0 {
            return bad("widths must be positive");
        }
        if self.temporal && (self.lstm_layers == 0 || self.lstm_hidden == 0) {
            return bad("a temporal model needs at least one LSTM layer of positive width");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad("bn_momentum must lie in [0, 1]");
        }
        if !(self.bn_eps >= 0.0 && self.leaky_slope.is_finite()) {
            return bad("bn_eps must be nonnegative and leaky_slope finite");
        }
        if self.dropout != 0.0 {
            return bad("dropout is not implemented; only 0 is accepted");
        }
        Ok(())
    }
}
