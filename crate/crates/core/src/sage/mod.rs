//! GraphSAGE graph classifier with hand-derived gradients.
//!
//! Architecture: optional embedding layer (a dense layer over one-hot
//! opcodes, realized as a row lookup), a stack of mean-aggregator SAGE
//! layers `h' = act(W · [h ; mean(h_neighbors)] + b)`, global mean pooling,
//! and a sigmoid output unit. All math is `f64`.

mod adam;
mod model;
mod params;
mod sampling;

use serde::{Deserialize, Serialize};

pub use adam::{adam_update, Adam, AdamHyper};
pub use model::{backward, bce_loss, forward, forward_sampled, neighborhoods, ForwardCache, Neighborhood};
pub use params::{init_params, LayerParams, ModelParams, Weights};
pub(crate) use params::WeightsDoc;
pub use sampling::{sample_neighbors, sampling_cap};

/// Gradients share the layout of the weights they differentiate.
pub type Gradients = Weights;

pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Probability clamp used by the loss and by reported scores.
pub const SCORE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SageError {
    #[error("node opcode index {index} is outside the vocabulary of size {vocab_size}")]
    VocabMismatch { index: usize, vocab_size: usize },
    #[error("activation cache does not match: {0}")]
    CacheMismatch(String),
    #[error("shape mismatch in `{0}`")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu if z <= 0.0 => LEAKY_RELU_SLOPE * z,
            Activation::Relu if z <= 0.0 => 0.0,
            _ => z,
        }
    }

    /// Derivative expressed through the activation output, which carries
    /// the sign of the pre-activation for both variants.
    #[inline]
    pub fn grad_from_output(self, h: f64) -> f64 {
        match self {
            _ if h > 0.0 => 1.0,
            Activation::LeakyRelu => LEAKY_RELU_SLOPE,
            Activation::Relu => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborView {
    Undirected,
    /// Only predecessors (producers) of a node.
    DirectedIn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_sage_layers: usize,
    pub use_embedding: bool,
    pub activation: Activation,
    pub neighbor_view: NeighborView,
    pub sample_cap: Option<usize>,
}

/// SAGE depths evaluated in the ablation grid.
pub const ABLATION_DEPTHS: [usize; 4] = [4, 6, 8, 10];

impl ArchConfig {
    /// The reference configuration: embedding on, 6 SAGE layers of width
    /// 128, leaky ReLU, full undirected neighborhoods.
    pub fn new(vocab_size: usize) -> Self {
        ArchConfig {
            vocab_size,
            embed_dim: 128,
            hidden_dim: 128,
            num_sage_layers: 6,
            use_embedding: true,
            activation: Activation::LeakyRelu,
            neighbor_view: NeighborView::Undirected,
            sample_cap: None,
        }
    }

    pub fn validate(&self) -> Result<(), SageError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_sage_layers", self.num_sage_layers),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(SageError::InvalidArch(format!("{name} must be at least 1")));
            }
        }
        if self.sample_cap == Some(0) {
            return Err(SageError::InvalidArch("sample_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Width of the node vectors entering the first SAGE layer.
    pub fn input_dim(&self) -> usize {
        if self.use_embedding {
            self.embed_dim
        } else {
            self.vocab_size
        }
    }

    pub fn layer_input_dim(&self, k: usize) -> usize {
        if k == 0 {
            self.input_dim()
        } else {
            self.hidden_dim
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations() {
        assert_eq!(Activation::LeakyRelu.apply(-2.0), -0.02);
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Relu.apply(3.0), 3.0);
        assert_eq!(Activation::LeakyRelu.grad_from_output(-0.02), 0.01);
        assert_eq!(Activation::Relu.grad_from_output(0.0), 0.0);
        assert_eq!(Activation::Relu.grad_from_output(1.5), 1.0);
    }

    #[test]
    fn arch_validation() {
        let mut a = ArchConfig::new(5);
        assert!(a.validate().is_ok());
        assert_eq!(a.input_dim(), 128);
        a.use_embedding = false;
        assert_eq!(a.input_dim(), 5);
        a.num_sage_layers = 0;
        assert!(a.validate().is_err());
    }
}
