use serde::{Deserialize, Serialize};

use crate::error::{GeniError, Result};

/// Negative slope of the leaky ReLU applied to attention pre-activations.
pub const ATTENTION_NEGATIVE_SLOPE: f64 = 0.2;

/// Architecture of a score-aggregation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeniConfig {
    /// Number of score aggregation layers.
    pub num_layers: usize,
    /// Heads in each layer; its length must equal `num_layers`.
    pub heads_per_layer: Vec<usize>,
    pub predicate_embedding_dim: usize,
    /// Hidden widths of each scoring network. `None` means one hidden layer of
    /// `ceil(0.75 · feature_dim)` units.
    pub scoring_hidden_sizes: Option<Vec<usize>>,
    /// ε in the centrality `ln(in_degree + ε)`.
    pub epsilon_centrality: f64,
    pub gamma_init: f64,
    pub beta_init: f64,
    /// Initial bias of each scoring network's output unit. A positive value
    /// keeps the final ReLU from starting with every node at zero.
    pub scoring_output_bias_init: f64,
    /// Learn per-head scale and shift of the centrality. When false the raw
    /// centrality multiplies the aggregated score.
    pub flexible_ca: bool,
    /// Use one embedding for every predicate (including the self term), which
    /// removes the model's ability to tell predicates apart.
    pub shared_predicate_embedding: bool,
}

impl Default for GeniConfig {
    fn default() -> Self {
        GeniConfig {
            num_layers: 1,
            heads_per_layer: vec![4],
            predicate_embedding_dim: 10,
            scoring_hidden_sizes: None,
            epsilon_centrality: 1.0,
            gamma_init: 1.0,
            beta_init: 0.0,
            scoring_output_bias_init: 1.0,
            flexible_ca: true,
            shared_predicate_embedding: false,
        }
    }
}

impl GeniConfig {
    /// `layers` SA layers with `heads` heads each, other fields default.
    pub fn with_shape(layers: usize, heads: usize) -> Self {
        GeniConfig {
            num_layers: layers,
            heads_per_layer: vec![heads; layers],
            ..GeniConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(GeniError::invalid("num_layers must be at least 1"));
        }
        if self.heads_per_layer.len() != self.num_layers {
            return Err(GeniError::invalid(format!(
                "heads_per_layer has {} entries but num_layers is {}",
                self.heads_per_layer.len(),
                self.num_layers
            )));
        }
        if self.heads_per_layer.contains(&0) {
            return Err(GeniError::invalid("every layer needs at least one head"));
        }
        if self.predicate_embedding_dim == 0 {
            return Err(GeniError::invalid("predicate_embedding_dim must be positive"));
        }
        if let Some(h) = &self.scoring_hidden_sizes {
            if h.contains(&0) {
                return Err(GeniError::invalid("scoring hidden sizes must be positive"));
            }
        }
        if !(self.epsilon_centrality > 0.0 && self.epsilon_centrality.is_finite()) {
            return Err(GeniError::invalid("epsilon_centrality must be positive"));
        }
        if !self.gamma_init.is_finite()
            || !self.beta_init.is_finite()
            || !self.scoring_output_bias_init.is_finite()
        {
            return Err(GeniError::invalid(
                "gamma_init, beta_init and scoring_output_bias_init must be finite",
            ));
        }
        Ok(())
    }

    pub fn hidden_sizes(&self, feature_dim: usize) -> Vec<usize> {
        self.scoring_hidden_sizes
            .clone()
            .unwrap_or_else(|| vec![(0.75 * feature_dim as f64).ceil().max(1.0) as usize])
    }

    pub fn final_heads(&self) -> usize {
        *self.heads_per_layer.last().expect("validated")
    }
}
