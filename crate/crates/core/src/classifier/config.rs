use serde::{Deserialize, Serialize};

use super::network::Dims;
use crate::error::{Error, Result};

/// Hyper-parameters of the tweet classifier and its training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub embedding_dim: usize,
    pub conv_filters: usize,
    pub conv_width: usize,
    pub pool_width: usize,
    pub transformer_layers: usize,
    pub attention_heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub dense_dim: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation-accuracy improvement before stopping.
    pub patience: usize,
    pub min_char_freq: u64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            embedding_dim: 32,
            conv_filters: 128,
            conv_width: 5,
            pool_width: 2,
            transformer_layers: 2,
            attention_heads: 4,
            model_dim: 128,
            ffn_dim: 256,
            dense_dim: 64,
            dropout: 0.1,
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            patience: 3,
            min_char_freq: 1,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    /// A reduced network that trains in minutes on one CPU core.
    pub fn compact() -> Self {
        ClassifierConfig {
            embedding_dim: 16,
            conv_filters: 32,
            model_dim: 32,
            ffn_dim: 64,
            transformer_layers: 1,
            attention_heads: 2,
            dense_dim: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embedding_dim", self.embedding_dim),
            ("conv_filters", self.conv_filters),
            ("conv_width", self.conv_width),
            ("pool_width", self.pool_width),
            ("transformer_layers", self.transformer_layers),
            ("attention_heads", self.attention_heads),
            ("model_dim", self.model_dim),
            ("ffn_dim", self.ffn_dim),
            ("dense_dim", self.dense_dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("classifier.{name} must be positive")));
            }
        }
        if self.model_dim % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "classifier.model_dim {} is not divisible by attention_heads {}",
                self.model_dim, self.attention_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("classifier.dropout must be in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("classifier.learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn dims(&self, vocab: usize, classes: usize, max_len: usize) -> Dims {
        Dims {
            vocab,
            classes,
            max_len,
            embedding: self.embedding_dim,
            filters: self.conv_filters,
            width: self.conv_width,
            pool: self.pool_width,
            model: self.model_dim,
            heads: self.attention_heads,
            layers: self.transformer_layers,
            ffn: self.ffn_dim,
            dense: self.dense_dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ClassifierConfig::default().validate().unwrap();
        ClassifierConfig::compact().validate().unwrap();
    }

    #[test]
    fn bad_values_are_config_errors() {
        let c = ClassifierConfig {
            model_dim: 30,
            attention_heads: 4,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ClassifierConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: std::result::Result<ClassifierConfig, _> =
            serde_json::from_str(r#"{"embeding_dim": 3}"#);
        assert!(r.is_err());
    }
}
