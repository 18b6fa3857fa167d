//! Input-response training: tied encoders, a two-layer reply projection and
//! dot-product scores against in-batch negatives.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedWord, MessagePair, Vocab};
use crate::embedder::{encode_message, Encoder, EncoderConfig, EncoderKind, EncoderModel, Mode};
use crate::error::{Error, Result};
use crate::nn::{softmax_xent_diag_value, Checkpoint, Grads, Graph, Matrix, Optimizer, OptimizerKind, ParamId, ParamSet, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub factor: f64,
    pub every_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub lr_decay: Option<LrDecay>,
    pub grad_clip_value: f64,
    pub epochs: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Width of the hidden layer in the reply projection; `None` keeps it square.
    pub projection_inner: Option<usize>,
}

impl TrainConfig {
    /// Full-size schedule: Adam with step decay for the GRU, constant-rate
    /// RMSprop for the transformer, lr 1e-4, value clipping at 5.
    pub fn full_size(kind: EncoderKind) -> Self {
        let (optimizer, lr_decay) = match kind {
            EncoderKind::Gru => (
                OptimizerKind::Adam,
                Some(LrDecay {
                    factor: 0.95,
                    every_steps: 10_000,
                }),
            ),
            EncoderKind::Transformer => (OptimizerKind::Rmsprop, None),
        };
        TrainConfig {
            batch_size: 64,
            optimizer,
            learning_rate: 1e-4,
            lr_decay,
            grad_clip_value: 5.0,
            epochs: 10,
            max_steps: None,
            seed: 1,
            projection_inner: None,
        }
    }

    /// Same optimizers with a larger step so small models converge in a few
    /// epochs on one core.
    pub fn desk(kind: EncoderKind) -> Self {
        TrainConfig {
            learning_rate: match kind {
                EncoderKind::Gru => 3e-3,
                EncoderKind::Transformer => 1e-3,
            },
            batch_size: 32,
            epochs: 12,
            ..TrainConfig::full_size(kind)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.grad_clip_value > 0.0) {
            return Err(Error::Config("grad_clip_value must be > 0".into()));
        }
        if let Some(d) = self.lr_decay {
            if d.every_steps == 0 || !(d.factor > 0.0) {
                return Err(Error::Config("lr decay needs factor > 0 and every_steps >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.factor.powi((step / d.every_steps) as i32),
            None => self.learning_rate,
        }
    }
}

/// Two affine layers with a ReLU between, mapping reply embeddings into the
/// space scored against input embeddings.
#[derive(Debug, Clone)]
pub struct ReplyProjection {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl ReplyProjection {
    pub fn init<R: Rng + ?Sized>(d: usize, inner: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        ReplyProjection {
            w1: params.add("proj.w1", Matrix::glorot(d, inner, rng)),
            b1: params.add("proj.b1", Matrix::zeros(1, inner)),
            w2: params.add("proj.w2", Matrix::glorot(inner, d, rng)),
            b2: params.add("proj.b2", Matrix::zeros(1, d)),
        }
    }

    pub fn bind(d: usize, params: &ParamSet) -> Result<Self> {
        let get = |n: &str| params.id(n).ok_or_else(|| Error::Shape(format!("missing parameter {n}")));
        let p = ReplyProjection {
            w1: get("proj.w1")?,
            b1: get("proj.b1")?,
            w2: get("proj.w2")?,
            b2: get("proj.b2")?,
        };
        let inner = params.get(p.w1).cols;
        for (id, shape) in [(p.w1, (d, inner)), (p.b1, (1, inner)), (p.w2, (inner, d)), (p.b2, (1, d))] {
            if params.get(id).shape() != shape {
                return Err(Error::Shape(format!("{}: expected {shape:?}", params.name(id))));
            }
        }
        Ok(p)
    }

    /// Sets the projection to the identity map (used in tests).
    pub fn set_identity(&self, params: &mut ParamSet) {
        let d = params.get(self.w1).rows;
        let mut eye = Matrix::zeros(d, d);
        for i in 0..d {
            eye.set(i, i, 1.0);
        }
        *params.get_mut(self.w1) = eye.clone();
        *params.get_mut(self.w2) = eye;
        params.get_mut(self.b1).data.fill(0.0);
        params.get_mut(self.b2).data.fill(0.0);
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, mode: &mut Mode<'_>, dropout: f64) -> Var {
        let (w1, b1, w2, b2) = (g.param(self.w1), g.param(self.b1), g.param(self.w2), g.param(self.b2));
        let h = g.affine(x, w1, b1);
        let h = g.relu(h);
        let h = mode.dropout(g, h, dropout);
        g.affine(h, w2, b2)
    }
}

/// The training architecture: one encoder used for both the message and its
/// reply, followed by the reply projection.
#[derive(Debug, Clone)]
pub struct DualEncoder {
    pub encoder: Encoder,
    pub projection: ReplyProjection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub current: Vec<EncodedWord>,
    pub next: Vec<EncodedWord>,
}

pub fn encode_pairs(vocab: &Vocab, pairs: &[MessagePair], max_chars: usize) -> Vec<EncodedPair> {
    pairs
        .iter()
        .map(|p| EncodedPair {
            current: encode_message(vocab, &p.current, max_chars),
            next: encode_message(vocab, &p.next, max_chars),
        })
        .collect()
}

impl DualEncoder {
    pub fn init<R: Rng + ?Sized>(
        config: EncoderConfig,
        projection_inner: Option<usize>,
        params: &mut ParamSet,
        rng: &mut R,
    ) -> Result<Self> {
        let d = config.d_out;
        let encoder = Encoder::init(config, params, rng)?;
        let projection = ReplyProjection::init(d, projection_inner.unwrap_or(d), params, rng);
        Ok(DualEncoder { encoder, projection })
    }

    pub fn bind(config: EncoderConfig, params: &ParamSet) -> Result<Self> {
        let d = config.d_out;
        Ok(DualEncoder {
            encoder: Encoder::bind(config, params)?,
            projection: ReplyProjection::bind(d, params)?,
        })
    }

    fn dropout(&self) -> f64 {
        match self.encoder.config().kind {
            EncoderKind::Gru => self.encoder.config().gru_dropout,
            EncoderKind::Transformer => self.encoder.config().transformer.dropout,
        }
    }

    /// `B x B` scores: entry (i, j) is `e_i · e'_j`.
    pub fn score_matrix_var(&self, g: &mut Graph<'_>, batch: &[EncodedPair], mode: &mut Mode<'_>) -> Result<Var> {
        if batch.len() < 2 {
            return Err(Error::BatchTooSmall(batch.len()));
        }
        let cur: Vec<&[EncodedWord]> = batch.iter().map(|p| p.current.as_slice()).collect();
        let next: Vec<&[EncodedWord]> = batch.iter().map(|p| p.next.as_slice()).collect();
        let e = self.encoder.encode_stacked(g, &cur, mode)?;
        let r = self.encoder.encode_stacked(g, &next, mode)?;
        let r = self.projection.forward(g, r, mode, self.dropout());
        Ok(g.matmul_t(e, r))
    }

    pub fn score_matrix(&self, params: &ParamSet, batch: &[EncodedPair]) -> Result<Matrix> {
        let mut g = Graph::new(params);
        let s = self.score_matrix_var(&mut g, batch, &mut Mode::inference())?;
        Ok(g.value(s).clone())
    }

    /// Training-mode loss and gradients; dropout masks come from `rng`.
    pub fn loss_and_grads(&self, params: &ParamSet, batch: &[EncodedPair], rng: &mut dyn rand::RngCore) -> Result<(f64, Grads)> {
        let mut g = Graph::new(params);
        let mut mode = Mode::training(rng);
        let s = self.score_matrix_var(&mut g, batch, &mut mode)?;
        let loss = g.softmax_xent_diag(s);
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Diverged { step: 0, loss: value });
        }
        let mut grads = g.backward(loss);
        self.encoder.mask_frozen(&mut grads);
        Ok((value, grads))
    }

    /// Training-mode loss only, for finite differences.
    pub fn loss(&self, params: &ParamSet, batch: &[EncodedPair], rng: &mut dyn rand::RngCore) -> Result<f64> {
        let mut g = Graph::new(params);
        let mut mode = Mode::training(rng);
        let s = self.score_matrix_var(&mut g, batch, &mut mode)?;
        let loss = g.softmax_xent_diag(s);
        Ok(g.scalar(loss))
    }
}

/// Mean over rows of softmax cross-entropy with the diagonal as the target.
pub fn batch_loss(scores: &Matrix) -> Result<f64> {
    if scores.rows != scores.cols {
        return Err(Error::Shape(format!("score matrix must be square, got {}x{}", scores.rows, scores.cols)));
    }
    if scores.rows == 0 {
        return Err(Error::BatchTooSmall(0));
    }
    Ok(softmax_xent_diag_value(scores))
}

/// Fraction of rows whose largest score is on the diagonal.
pub fn batch_accuracy(scores: &Matrix) -> f64 {
    let hits = (0..scores.rows)
        .filter(|&i| {
            let row = scores.row(i);
            row.iter().enumerate().all(|(j, &x)| j == i || x < row[i])
        })
        .count();
    hits as f64 / scores.rows as f64
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: DualEncoder,
    pub params: ParamSet,
    pub vocab: Vocab,
    /// (step, loss) after every optimizer step.
    pub loss_curve: Vec<(usize, f64)>,
}

impl TrainedModel {
    pub fn encoder_model(&self) -> EncoderModel {
        EncoderModel::new(self.model.encoder.clone(), self.params.clone(), self.vocab.clone())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(
            serde_json::json!({"kind": "dual_encoder", "encoder": self.model.encoder.config()}),
            &self.params,
        )
    }

    /// Writes `<stem>.bin` style checkpoint at `path` and the vocabulary next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)?;
        self.vocab.save(&vocab_path(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        let config: EncoderConfig = ckpt.header_field("encoder")?;
        let params = ckpt.to_params();
        let model = DualEncoder::bind(config, &params)?;
        let vocab = Vocab::load(&vocab_path(path))?;
        Ok(TrainedModel {
            model,
            params,
            vocab,
            loss_curve: Vec::new(),
        })
    }
}

/// Vocabulary file stored beside a checkpoint.
pub fn vocab_path(checkpoint: &Path) -> std::path::PathBuf {
    checkpoint.with_extension("vocab.json")
}

pub fn write_loss_curve(path: &Path, curve: &[(usize, f64)]) -> Result<()> {
    let mut out = String::from("step,loss\n");
    for (s, l) in curve {
        out.push_str(&format!("{s},{l}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Trains a dual encoder from scratch. Deterministic for a fixed seed.
pub fn fit(
    pairs: &[MessagePair],
    vocab: Vocab,
    encoder_config: EncoderConfig,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if pairs.len() < 2 {
        return Err(Error::BatchTooSmall(pairs.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamSet::new();
    let max_chars = encoder_config.max_word_chars;
    let model = DualEncoder::init(encoder_config, config.projection_inner, &mut params, &mut rng)?;
    let data = encode_pairs(&vocab, pairs, max_chars);
    let mut optimizer = Optimizer::new(config.optimizer, &params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::new();
    let mut step = 0usize;
    'outer: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            if config.max_steps.is_some_and(|m| step >= m) {
                break 'outer;
            }
            let batch: Vec<EncodedPair> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, mut grads) = model.loss_and_grads(&params, &batch, &mut rng).map_err(|e| match e {
                Error::Diverged { loss, .. } => Error::Diverged { step, loss },
                other => other,
            })?;
            grads.clip_values(config.grad_clip_value);
            optimizer.step(&mut params, &grads, config.learning_rate_at(step));
            curve.push((step, loss));
            step += 1;
        }
        log::debug!(
            "epoch {epoch}: last loss {:.4}",
            curve.last().map(|c| c.1).unwrap_or(f64::NAN)
        );
    }
    if !params.all_finite() {
        return Err(Error::Diverged {
            step,
            loss: f64::NAN,
        });
    }
    Ok(TrainedModel {
        model,
        params,
        vocab,
        loss_curve: curve,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error per parameter tensor.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Relative error `|a - n| / max(|a|, |n|)`; pairs where both magnitudes are
/// below `floor` count as agreeing.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < floor {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares analytic gradients with central differences on every entry of
/// every parameter tensor. Dropout masks are reproduced by reseeding.
pub fn gradient_check(
    model: &DualEncoder,
    params: &ParamSet,
    batch: &[EncodedPair],
    dropout_seed: u64,
    eps: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grads(params, batch, &mut ChaCha8Rng::seed_from_u64(dropout_seed))?;
    let mut work = params.clone();
    let mut per_param = Vec::new();
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    let pad_frozen: Vec<ParamId> = [crate::embedder::WORD_EMB, crate::embedder::CHAR_EMB]
        .iter()
        .filter_map(|n| params.id(n))
        .collect();
    for (id, name, m) in params.iter() {
        let mut worst = 0.0f64;
        for k in 0..m.len() {
            if pad_frozen.contains(&id) && k / m.cols == crate::corpus::PAD_ID {
                continue;
            }
            let orig = m.data[k];
            work.get_mut(id).data[k] = orig + eps;
            let up = model.loss(&work, batch, &mut ChaCha8Rng::seed_from_u64(dropout_seed))?;
            work.get_mut(id).data[k] = orig - eps;
            let down = model.loss(&work, batch, &mut ChaCha8Rng::seed_from_u64(dropout_seed))?;
            work.get_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(id).map(|g| g.data[k]).unwrap_or(0.0);
            worst = worst.max(relative_error(analytic, numeric, 1e-7));
            checked += 1;
        }
        max_rel = max_rel.max(worst);
        per_param.push((name.to_string(), worst));
    }
    Ok(GradCheckReport {
        per_param,
        max_rel_error: max_rel,
        checked,
    })
}

/// Replaces every parameter by uniform noise in `[-bound, bound]`, keeping
/// frozen padding rows at zero. Gradient checks use this so that no ReLU or
/// max-pool sits on a tie.
pub fn randomize_params<R: Rng + ?Sized>(params: &mut ParamSet, bound: f64, rng: &mut R) {
    let ids: Vec<(ParamId, bool)> = params
        .iter()
        .map(|(id, n, _)| (id, n == crate::embedder::WORD_EMB || n == crate::embedder::CHAR_EMB))
        .collect();
    for (id, is_table) in ids {
        let m = params.get_mut(id);
        for x in &mut m.data {
            *x = rng.gen_range(-bound..=bound);
        }
        if is_table {
            m.row_mut(crate::corpus::PAD_ID).fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests;
