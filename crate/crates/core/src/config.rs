//! Run configuration.
//!
//! Configs are flat `key = value` files (TOML syntax, no tables). Unknown
//! keys are rejected and missing keys take the defaults below.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::depgraph::MaskMode;
use crate::error::{Error, Result};

/// Graph encoder variant, ordered as in the ablation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Self-attention over all token pairs, no relation terms.
    Transformer,
    /// Attention masked to the dependency graph, no relation terms.
    Gat,
    /// Node plus relation-aware attention, plain aggregation.
    GatRatt,
    /// Relation-aware attention and relation-aware aggregation.
    Rgat,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Transformer, Variant::Gat, Variant::GatRatt, Variant::Rgat];

    pub fn uses_graph_mask(self) -> bool {
        self != Variant::Transformer
    }

    pub fn relation_attention(self) -> bool {
        matches!(self, Variant::GatRatt | Variant::Rgat)
    }

    pub fn relation_aggregation(self) -> bool {
        self == Variant::Rgat
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Transformer => "transformer",
            Variant::Gat => "gat",
            Variant::GatRatt => "gat-ratt",
            Variant::Rgat => "rgat",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "transformer" => Ok(Variant::Transformer),
            "gat" => Ok(Variant::Gat),
            "gat-ratt" => Ok(Variant::GatRatt),
            "rgat" => Ok(Variant::Rgat),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Every architectural and optimisation hyperparameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub position_dim: usize,
    pub relation_dim: usize,
    /// Hidden size of each LSTM direction.
    pub lstm_hidden: usize,
    pub graph_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub fusion_dim: usize,
    /// Token-to-target distances are clamped to `±max_distance`.
    pub max_distance: usize,
    /// Dropout on input word embeddings.
    pub dropout: f64,
    pub l2: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub variant: Variant,
    pub weighted_factors: bool,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Early stopping patience in epochs without dev improvement.
    pub patience: usize,
    pub mask_mode: MaskMode,
    /// Pre-trained word vectors (token then `word_dim` numbers per line).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<String>,
    /// Keep loaded word vectors fixed.
    pub freeze_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 300,
            pos_dim: 30,
            position_dim: 30,
            relation_dim: 30,
            lstm_hidden: 50,
            graph_dim: 100,
            heads: 5,
            layers: 6,
            fusion_dim: 50,
            max_distance: 50,
            dropout: 0.7,
            l2: 1e-5,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            variant: Variant::Rgat,
            weighted_factors: false,
            seed: 1,
            epochs: 30,
            batch_size: 32,
            patience: 10,
            mask_mode: MaskMode::Relabel,
            embeddings: None,
            freeze_embeddings: true,
        }
    }
}

impl ModelConfig {
    /// Input width of each token: word, POS and position embeddings.
    pub fn input_dim(&self) -> usize {
        self.word_dim + self.pos_dim + self.position_dim
    }

    pub fn context_dim(&self) -> usize {
        2 * self.lstm_hidden
    }

    pub fn head_dim(&self) -> usize {
        self.graph_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.heads == 0 || self.graph_dim % self.heads != 0 {
            return fail(format!(
                "graph_dim {} must be divisible by heads {}",
                self.graph_dim, self.heads
            ));
        }
        if self.layers > 8 {
            return fail(format!("layers must be in 0..=8, got {}", self.layers));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return fail(format!("l2 must be non-negative, got {}", self.l2));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must be in [0, 1)".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        for (name, v) in [
            ("word_dim", self.word_dim),
            ("pos_dim", self.pos_dim),
            ("position_dim", self.position_dim),
            ("relation_dim", self.relation_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("fusion_dim", self.fusion_dim),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    /// Reduced dimensions used for the synthetic label-signal experiments,
    /// sized so a full training run takes seconds on one core.
    pub fn desk() -> Self {
        ModelConfig {
            word_dim: 30,
            pos_dim: 10,
            position_dim: 10,
            relation_dim: 20,
            lstm_hidden: 20,
            graph_dim: 40,
            heads: 5,
            layers: 1,
            fusion_dim: 20,
            lr: 5e-3,
            dropout: 0.3,
            epochs: 20,
            ..ModelConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_settings() {
        let c = ModelConfig::default();
        assert_eq!(c.input_dim(), 360);
        assert_eq!(c.context_dim(), 100);
        assert_eq!(c.head_dim(), 20);
        assert_eq!((c.lr, c.l2, c.dropout), (1e-3, 1e-5, 0.7));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ModelConfig::default();
        c.variant = Variant::GatRatt;
        c.weighted_factors = true;
        c.embeddings = Some("glove.txt".into());
        let text = c.to_toml_string();
        assert!(text.contains("variant = \"gat_ratt\""));
        assert_eq!(ModelConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn partial_files_take_defaults() {
        let c = ModelConfig::from_toml_str("layers = 3\nvariant = \"gat\"\n").unwrap();
        assert_eq!(c.layers, 3);
        assert_eq!(c.variant, Variant::Gat);
        assert_eq!(c.word_dim, 300);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ModelConfig::from_toml_str("layerz = 3").is_err());
        assert!(ModelConfig::from_toml_str("layers = \"three\"").is_err());
        assert!(ModelConfig::from_toml_str("heads = 3").is_err());
        assert!(ModelConfig::from_toml_str("dropout = 1.0").is_err());
        assert!(ModelConfig::from_toml_str("layers = 9").is_err());
        assert!(ModelConfig::from_toml_str("[table]\nx = 1").is_err());
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("gat_ratt".parse::<Variant>().unwrap(), Variant::GatRatt);
        assert!("bert".parse::<Variant>().is_err());
    }
}
