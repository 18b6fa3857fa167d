//! Run configuration for the end-to-end pipeline, stored as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clusterer::ClusterConfig;
use crate::corpus::SyntheticConfig;
use crate::embedder::EncoderKind;
use crate::error::{Error, Result};
use crate::hybrid::CombinerWeights;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyTrainConfig {
    pub t_reply: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Also train the prev+typed classifier used as the neural baseline.
    pub train_full: bool,
    pub quantize: bool,
}

impl Default for ReplyTrainConfig {
    fn default() -> Self {
        ReplyTrainConfig {
            t_reply: 0.1,
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            train_full: true,
            quantize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Tag naming the asset set; one model per geography.
    pub geo: String,
    pub corpus: SyntheticConfig,
    /// Share of conversations held out for the typing simulation.
    pub test_fraction: f64,
    pub encoder: EncoderKind,
    pub char_cnn: bool,
    pub max_words: usize,
    pub train: TrainConfig,
    pub cluster: ClusterConfig,
    /// Most clusters kept in the class table.
    pub cluster_cap: usize,
    pub reply: ReplyTrainConfig,
    pub sticker_threshold: f64,
    pub combiner: CombinerWeights,
}

impl RunConfig {
    /// Small settings that finish in a few minutes on one core.
    pub fn desk(seed: u64) -> Self {
        let encoder = EncoderKind::Transformer;
        RunConfig {
            seed,
            geo: "default".into(),
            corpus: SyntheticConfig {
                seed,
                n_intents: 60,
                n_conversations: 400,
                ..SyntheticConfig::default()
            },
            test_fraction: 0.2,
            encoder,
            char_cnn: true,
            max_words: 50_000,
            train: TrainConfig {
                seed,
                ..TrainConfig::desk(encoder)
            },
            cluster: ClusterConfig::default(),
            cluster_cap: 7_500,
            reply: ReplyTrainConfig::default(),
            sticker_threshold: crate::stickers::DEFAULT_THRESHOLD,
            combiner: CombinerWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config("test_fraction must be in [0, 1)".into()));
        }
        if self.max_words == 0 || self.cluster_cap == 0 {
            return Err(Error::Config("max_words and cluster_cap must be >= 1".into()));
        }
        self.train.validate()?;
        self.cluster.validate()?;
        self.combiner.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_keeps_combiner_weights() {
        let mut cfg = RunConfig::desk(3);
        cfg.combiner.lambda = 0.25;
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"lambda\":0.25"));
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_fraction() {
        let mut cfg = RunConfig::desk(1);
        cfg.test_fraction = 1.0;
        assert!(cfg.validate().is_err());
        cfg.test_fraction = 0.2;
        cfg.combiner.lambda = 0.0;
        assert!(cfg.validate().is_err());
    }
}
