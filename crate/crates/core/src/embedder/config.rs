use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Gru,
    Transformer,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(EncoderKind::Gru),
            "transformer" | "trans" => Ok(EncoderKind::Transformer),
            other => Err(Error::Config(format!("unknown encoder kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub inner_dim: usize,
    pub dropout: f64,
    /// Fixed sinusoidal position encodings added after the input projection.
    pub positional: bool,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            layers: 2,
            heads: 8,
            model_dim: 256,
            inner_dim: 512,
            dropout: 0.1,
            positional: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Word-level embedding size.
    pub d_w: usize,
    /// Character embedding size fed to the convolutions.
    pub d_c_in: usize,
    pub filter_widths: Vec<usize>,
    pub filter_counts: Vec<usize>,
    /// When false the word representation is the word-level embedding alone.
    pub char_cnn: bool,
    /// Message embedding size: the GRU hidden size, or the transformer model dim.
    pub d_out: usize,
    pub transformer: TransformerConfig,
    /// Dropout on the GRU output during training.
    pub gru_dropout: f64,
    pub max_word_chars: usize,
    /// Rows of the word table (vocabulary size including pad and unk).
    pub word_slots: usize,
    /// Rows of the character table (including pad and unk).
    pub char_slots: usize,
}

impl EncoderConfig {
    /// Full-size hyper-parameters: 300-d embeddings, filters of width 1..4 with
    /// 50/50/75/75 maps, a 2-layer 8-head transformer with 256/512 dims.
    pub fn full_size(kind: EncoderKind, word_slots: usize, char_slots: usize) -> Self {
        let transformer = TransformerConfig::default();
        EncoderConfig {
            kind,
            d_w: 300,
            d_c_in: 15,
            filter_widths: vec![1, 2, 3, 4],
            filter_counts: vec![50, 50, 75, 75],
            char_cnn: true,
            d_out: match kind {
                EncoderKind::Gru => 300,
                EncoderKind::Transformer => transformer.model_dim,
            },
            transformer,
            gru_dropout: 0.1,
            max_word_chars: 10,
            word_slots,
            char_slots,
        }
    }

    /// Small dimensions that train in seconds on one core.
    pub fn desk(kind: EncoderKind, word_slots: usize, char_slots: usize) -> Self {
        let transformer = TransformerConfig {
            layers: 2,
            heads: 4,
            model_dim: 32,
            inner_dim: 64,
            dropout: 0.1,
            positional: true,
        };
        EncoderConfig {
            kind,
            d_w: 24,
            d_c_in: 12,
            filter_widths: vec![1, 2, 3, 4],
            filter_counts: vec![8, 8, 12, 12],
            char_cnn: true,
            d_out: 32,
            transformer,
            gru_dropout: 0.1,
            max_word_chars: 10,
            word_slots,
            char_slots,
        }
    }

    /// Width of the concatenated CharCNN output.
    pub fn d_c_out(&self) -> usize {
        if self.char_cnn {
            self.filter_counts.iter().sum()
        } else {
            0
        }
    }

    /// Width of one word representation fed to the sequence encoder.
    pub fn word_repr_dim(&self) -> usize {
        self.d_w + self.d_c_out()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.filter_widths.len() != self.filter_counts.len() {
            return bad("filter_widths and filter_counts differ in length".into());
        }
        if self.char_cnn && self.filter_widths.is_empty() {
            return bad("char_cnn needs at least one filter".into());
        }
        if self.filter_widths.iter().chain(&self.filter_counts).any(|&x| x == 0) {
            return bad("filter widths and counts must be >= 1".into());
        }
        if let Some(&w) = self.filter_widths.iter().max() {
            if w > self.max_word_chars {
                return bad(format!("filter width {w} exceeds max_word_chars {}", self.max_word_chars));
            }
        }
        for (name, v) in [
            ("d_w", self.d_w),
            ("d_c_in", self.d_c_in),
            ("d_out", self.d_out),
            ("max_word_chars", self.max_word_chars),
            ("word_slots", self.word_slots),
            ("char_slots", self.char_slots),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.kind == EncoderKind::Transformer {
            let t = &self.transformer;
            if t.layers == 0 || t.heads == 0 || t.model_dim == 0 || t.inner_dim == 0 {
                return bad("transformer dims must be >= 1".into());
            }
            if t.model_dim % t.heads != 0 {
                return bad(format!("heads {} do not divide model_dim {}", t.heads, t.model_dim));
            }
            if self.d_out != t.model_dim {
                return bad(format!(
                    "transformer embeddings are mean-pooled model vectors: d_out {} != model_dim {}",
                    self.d_out, t.model_dim
                ));
            }
        }
        for p in [self.gru_dropout, self.transformer.dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout {p} outside [0, 1)"));
            }
        }
        Ok(())
    }
}
