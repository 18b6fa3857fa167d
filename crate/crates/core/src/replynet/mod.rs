//! Cluster classifiers on top of the trained message encoder: the reply
//! model P(cluster | previous message) and the full model that also reads
//! the typed text. Both end in one affine layer with a sigmoid per cluster.
//! Post-training int8 quantization runs the same forward pass with weights
//! and activations rounded through their int8 grids.

mod quantize;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use quantize::{ActivationRanges, CalibrationHook, FakeQuantHook};

use crate::corpus::{EncodedWord, MessagePair, Vocab};
use crate::embedder::{ActivationHook, Encoder, EncoderConfig, EncoderModel, Mode};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Checkpoint, Graph, Matrix, Optimizer, OptimizerKind, ParamId, ParamSet, TensorData, Var};
use crate::trainer::vocab_path;

pub const HEAD_W: &str = "head.w";
pub const HEAD_B: &str = "head.b";
/// Learned stand-in for an input with no text tokens.
pub const EMPTY_SENTINEL: &str = "full.empty";

const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// Previous message only.
    Reply,
    /// Previous message and typed text, concatenated.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyNetConfig {
    pub num_clusters: usize,
    /// Clusters scoring above this are shipped to the client.
    pub t_reply: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl ReplyNetConfig {
    pub fn new(num_clusters: usize) -> Self {
        ReplyNetConfig {
            num_clusters,
            t_reply: 0.1,
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clusters < 2 {
            return Err(Error::Config("reply net needs at least 2 clusters".into()));
        }
        if !(0.0..=1.0).contains(&self.t_reply) {
            return Err(Error::Config(format!("t_reply {} outside [0, 1]", self.t_reply)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// One training example: the class of the message that followed `prev`
/// when the user had typed `typed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub prev: String,
    pub typed: String,
    pub cluster: usize,
}

/// Reply-model examples: the class of each pair's next message. Pairs whose
/// next message has no class are skipped.
pub fn reply_examples(pairs: &[MessagePair], classes: &HashMap<String, usize>) -> Vec<Example> {
    pairs
        .iter()
        .filter_map(|p| {
            classes.get(&p.next.phrase()).map(|&cluster| Example {
                prev: p.current.phrase(),
                typed: String::new(),
                cluster,
            })
        })
        .collect()
}

/// Full-model examples: every character prefix of the next message,
/// including the empty one, labeled with its class.
pub fn full_examples(pairs: &[MessagePair], classes: &HashMap<String, usize>) -> Vec<Example> {
    let mut out = Vec::new();
    for p in pairs {
        let next = p.next.phrase();
        let Some(&cluster) = classes.get(&next) else { continue };
        let prev = p.current.phrase();
        let bounds = std::iter::once(0).chain(next.char_indices().skip(1).map(|(i, _)| i)).chain([next.len()]);
        for end in bounds {
            out.push(Example {
                prev: prev.clone(),
                typed: next[..end].to_string(),
                cluster,
            });
        }
    }
    out
}

/// Scores strictly above `t`, highest first (ties by cluster id).
pub fn top_clusters(scores: &[f64], t: f64) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = scores.iter().copied().enumerate().filter(|&(_, s)| s > t).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Indices of the `k` highest scores.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..scores.len()).collect();
    v.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    v.truncate(k);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplyOutput {
    pub probs: Vec<f64>,
    /// The previous message had no text; `probs` is a uniform prior.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct ClusterClassifier {
    pub kind: ClassifierKind,
    pub config: ReplyNetConfig,
    pub encoder: Encoder,
    pub params: ParamSet,
    pub vocab: Vocab,
    head_w: ParamId,
    head_b: ParamId,
    sentinel: Option<ParamId>,
    /// Set once quantized: the int8 tensors and calibrated activation ranges.
    pub quantized: Option<(Vec<(String, TensorData)>, ActivationRanges)>,
}

impl ClusterClassifier {
    /// Fresh head over a copy of a trained encoder.
    pub fn init(kind: ClassifierKind, base: &EncoderModel, config: ReplyNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        for name in Encoder::param_names(base.encoder.config()) {
            let id = base.params.id(&name).ok_or_else(|| Error::Invalid(format!("encoder lacks {name}")))?;
            params.add(name, base.params.get(id).clone());
        }
        let d = base.encoder.d_out();
        let d_in = match kind {
            ClassifierKind::Reply => d,
            ClassifierKind::Full => 2 * d,
        };
        let g = config.num_clusters;
        params.add(HEAD_W, Matrix::glorot(d_in, g, &mut rng));
        let prior = (1.0 / g as f64).ln() - (1.0 - 1.0 / g as f64).ln();
        params.add(HEAD_B, Matrix::filled(1, g, prior));
        if kind == ClassifierKind::Full {
            params.add(EMPTY_SENTINEL, Matrix::uniform(1, d, 0.1, &mut rng));
        }
        Self::bind(kind, config, base.encoder.config().clone(), params, base.vocab.clone())
    }

    fn bind(
        kind: ClassifierKind,
        config: ReplyNetConfig,
        enc_config: EncoderConfig,
        params: ParamSet,
        vocab: Vocab,
    ) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::bind(enc_config, &params)?;
        let need = |n: &str| params.id(n).ok_or_else(|| Error::Invalid(format!("classifier lacks {n}")));
        let (head_w, head_b) = (need(HEAD_W)?, need(HEAD_B)?);
        let sentinel = match kind {
            ClassifierKind::Full => Some(need(EMPTY_SENTINEL)?),
            ClassifierKind::Reply => None,
        };
        let d = encoder.d_out();
        let d_in = if sentinel.is_some() { 2 * d } else { d };
        if params.get(head_w).shape() != (d_in, config.num_clusters)
            || params.get(head_b).shape() != (1, config.num_clusters)
        {
            return Err(Error::Shape(format!(
                "head shape {:?} does not match {} inputs and {} clusters",
                params.get(head_w).shape(),
                d_in,
                config.num_clusters
            )));
        }
        Ok(ClusterClassifier {
            kind,
            config,
            encoder,
            params,
            vocab,
            head_w,
            head_b,
            sentinel,
            quantized: None,
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.config.num_clusters
    }

    fn encode_text(&self, text: &str) -> Vec<EncodedWord> {
        crate::embedder::encode_message(
            &self.vocab,
            &crate::corpus::Message::standalone(text),
            self.encoder.config().max_word_chars,
        )
    }

    /// Encoder output rows for `texts` (empty encodings give `None`).
    fn embed_rows(&self, g: &mut Graph<'_>, encoded: &[Vec<EncodedWord>], mode: &mut Mode<'_>) -> Result<Vec<Option<Var>>> {
        let present: Vec<&[EncodedWord]> = encoded.iter().filter(|e| !e.is_empty()).map(Vec::as_slice).collect();
        let mut vars = if present.is_empty() {
            Vec::new()
        } else {
            self.encoder.encode(g, &present, mode)?
        }
        .into_iter();
        Ok(encoded.iter().map(|e| if e.is_empty() { None } else { vars.next() }).collect())
    }

    fn slot(&self, g: &mut Graph<'_>, v: Option<Var>) -> Var {
        match v {
            Some(v) => v,
            None => {
                let id = self.sentinel.expect("full model has a sentinel");
                g.param(id)
            }
        }
    }

    /// Head on top of stacked input features.
    fn head(&self, g: &mut Graph<'_>, x: Var, mode: &mut Mode<'_>) -> Var {
        let x = mode.visit(g, "head.in", x);
        let (w, b) = (g.param(self.head_w), g.param(self.head_b));
        let z = g.affine(x, w, b);
        mode.visit(g, "logits", z)
    }

    /// Logits for a chunk of inputs.
    fn logits_chunk(&self, inputs: &[(&str, &str)], hook: Option<&mut dyn ActivationHook>) -> Result<Matrix> {
        let mut g = Graph::new(&self.params);
        let mut mode = match hook {
            Some(h) => Mode::with_hook(h),
            None => Mode::inference(),
        };
        let prevs: Vec<Vec<EncodedWord>> = inputs.iter().map(|(p, _)| self.encode_text(p)).collect();
        let prev_vars = self.embed_rows(&mut g, &prevs, &mut mode)?;
        let rows: Vec<Var> = match self.kind {
            ClassifierKind::Reply => prev_vars
                .into_iter()
                .map(|v| v.ok_or(Error::EmptyMessage))
                .collect::<Result<_>>()?,
            ClassifierKind::Full => {
                let typed: Vec<Vec<EncodedWord>> = inputs.iter().map(|(_, t)| self.encode_text(t)).collect();
                if prevs.iter().zip(&typed).any(|(p, t)| p.is_empty() && t.is_empty()) {
                    return Err(Error::EmptyMessage);
                }
                let typed_vars = self.embed_rows(&mut g, &typed, &mut mode)?;
                prev_vars
                    .into_iter()
                    .zip(typed_vars)
                    .map(|(p, t)| {
                        let (p, t) = (self.slot(&mut g, p), self.slot(&mut g, t));
                        g.concat_cols(&[p, t])
                    })
                    .collect()
            }
        };
        let x = g.concat_rows(&rows);
        let z = self.head(&mut g, x, &mut mode);
        Ok(g.value(z).clone())
    }

    fn logits(&self, inputs: &[(&str, &str)], mut hook: Option<&mut dyn ActivationHook>) -> Result<Matrix> {
        let g = self.num_clusters();
        let mut out = Matrix::zeros(inputs.len(), g);
        let mut fq = self.quantized.as_ref().map(|(_, r)| FakeQuantHook::new(r.clone()));
        for (ci, chunk) in inputs.chunks(CHUNK).enumerate() {
            let h: Option<&mut dyn ActivationHook> = match (&mut hook, &mut fq) {
                (Some(h), _) => Some(&mut **h),
                (None, Some(f)) => Some(f),
                (None, None) => None,
            };
            let z = self.logits_chunk(chunk, h)?;
            out.data[ci * CHUNK * g..ci * CHUNK * g + z.data.len()].copy_from_slice(&z.data);
        }
        Ok(out)
    }

    /// Per-cluster probabilities for each `(prev, typed)` input. The reply
    /// model ignores `typed`.
    pub fn predict_batch(&self, inputs: &[(&str, &str)]) -> Result<Vec<Vec<f64>>> {
        let z = self.logits(inputs, None)?;
        Ok((0..z.rows).map(|r| z.row(r).iter().map(|&x| sigmoid(x)).collect()).collect())
    }

    /// P_reply(g | prev). A previous message without text yields a uniform
    /// prior flagged as degenerate.
    pub fn predict_reply(&self, prev: &str) -> Result<ReplyOutput> {
        if self.encode_text(prev).is_empty() {
            let g = self.num_clusters();
            return Ok(ReplyOutput {
                probs: vec![1.0 / g as f64; g],
                degenerate: true,
            });
        }
        Ok(ReplyOutput {
            probs: self.predict_batch(&[(prev, "")])?.remove(0),
            degenerate: false,
        })
    }

    /// Full-model scores from the previous message and the typed text.
    /// Clusters scoring above `t_reply` for a received message, as shipped
    /// to the client. Empty when the message has no text.
    pub fn reply_scores(&self, prev: &str) -> Result<BTreeMap<u32, f64>> {
        let out = self.predict_reply(prev)?;
        if out.degenerate {
            return Ok(BTreeMap::new());
        }
        Ok(top_clusters(&out.probs, self.config.t_reply)
            .into_iter()
            .map(|(c, s)| (c as u32, s))
            .collect())
    }

    pub fn predict_full(&self, prev: &str, typed: &str) -> Result<Vec<f64>> {
        Ok(self.predict_batch(&[(prev, typed)])?.remove(0))
    }

    /// Records activation ranges over `inputs` at every hooked site.
    pub fn calibrate(&self, inputs: &[(&str, &str)]) -> Result<ActivationRanges> {
        let mut hook = CalibrationHook::default();
        self.logits(inputs, Some(&mut hook))?;
        Ok(hook.ranges)
    }

    /// Int8 copy: every tensor quantized per tensor, activations rounded at
    /// each site using ranges calibrated on `calibration` inputs.
    pub fn quantize(&self, calibration: &[(&str, &str)]) -> Result<Self> {
        let ranges = self.calibrate(calibration)?;
        let ckpt = Checkpoint::from_params(serde_json::Value::Null, &self.params).quantized();
        let mut q = Self::bind(
            self.kind,
            self.config.clone(),
            self.encoder.config().clone(),
            ckpt.to_params(),
            self.vocab.clone(),
        )?;
        q.quantized = Some((ckpt.tensors, ranges));
        Ok(q)
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized.is_some()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut header = serde_json::json!({
            "kind": match self.kind { ClassifierKind::Reply => "reply_net", ClassifierKind::Full => "full_net" },
            "encoder": self.encoder.config(),
            "replynet": self.config,
        });
        match &self.quantized {
            Some((tensors, ranges)) => {
                header["activation_ranges"] = serde_json::to_value(ranges).expect("ranges serialize");
                Checkpoint {
                    header,
                    tensors: tensors.clone(),
                }
            }
            None => Checkpoint::from_params(header, &self.params),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint, vocab: Vocab) -> Result<Self> {
        let kind = match ckpt.header_field::<String>("kind")?.as_str() {
            "reply_net" => ClassifierKind::Reply,
            "full_net" => ClassifierKind::Full,
            other => return Err(Error::Invalid(format!("checkpoint kind {other:?} is not a classifier"))),
        };
        let mut m = Self::bind(
            kind,
            ckpt.header_field("replynet")?,
            ckpt.header_field("encoder")?,
            ckpt.to_params(),
            vocab,
        )?;
        if ckpt.header.get("activation_ranges").is_some() {
            let ranges = ckpt.header_field("activation_ranges")?;
            m.quantized = Some((ckpt.tensors, ranges));
        }
        Ok(m)
    }

    /// Writes the checkpoint and the vocabulary beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)?;
        self.vocab.save(&vocab_path(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?, Vocab::load(&vocab_path(path))?)
    }
}

/// Encoder features for training: the stacked input rows with the rows that
/// need the sentinel marked.
struct Features {
    prev: Matrix,
    typed: Matrix,
    prev_empty: Vec<bool>,
    typed_empty: Vec<bool>,
}

fn embed_unique(model: &ClusterClassifier, texts: &[&str]) -> Result<HashMap<String, Option<Vec<f64>>>> {
    let mut uniq: Vec<&str> = texts.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let mut out = HashMap::with_capacity(uniq.len());
    for chunk in uniq.chunks(CHUNK) {
        let mut g = Graph::new(&model.params);
        let encoded: Vec<Vec<EncodedWord>> = chunk.iter().map(|t| model.encode_text(t)).collect();
        let vars = model.embed_rows(&mut g, &encoded, &mut Mode::inference())?;
        for (t, v) in chunk.iter().zip(vars) {
            out.insert(t.to_string(), v.map(|v| g.value(v).data.clone()));
        }
    }
    Ok(out)
}

fn features(model: &ClusterClassifier, examples: &[Example]) -> Result<Features> {
    let d = model.encoder.d_out();
    let mut texts: Vec<&str> = examples.iter().map(|e| e.prev.as_str()).collect();
    if model.kind == ClassifierKind::Full {
        texts.extend(examples.iter().map(|e| e.typed.as_str()));
    }
    let cache = embed_unique(model, &texts)?;
    let fill = |sel: &dyn Fn(&Example) -> &str| {
        let mut m = Matrix::zeros(examples.len(), d);
        let mut empty = Vec::with_capacity(examples.len());
        for (i, e) in examples.iter().enumerate() {
            match &cache[sel(e)] {
                Some(v) => {
                    m.row_mut(i).copy_from_slice(v);
                    empty.push(false);
                }
                None => empty.push(true),
            }
        }
        (m, empty)
    };
    let (prev, prev_empty) = fill(&|e| e.prev.as_str());
    let (typed, typed_empty) = if model.kind == ClassifierKind::Full {
        fill(&|e| e.typed.as_str())
    } else {
        (Matrix::zeros(0, d), Vec::new())
    };
    Ok(Features {
        prev,
        typed,
        prev_empty,
        typed_empty,
    })
}

fn rows_of(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), m.cols);
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Input block for a batch: encoder rows plus the sentinel on empty rows.
fn block(g: &mut Graph<'_>, feats: &Matrix, empty: &[bool], idx: &[usize], sentinel: Option<ParamId>) -> Result<Var> {
    let x = g.constant(rows_of(feats, idx));
    let mask: Vec<f64> = idx.iter().map(|&i| if empty[i] { 1.0 } else { 0.0 }).collect();
    if mask.iter().all(|&m| m == 0.0) {
        return Ok(x);
    }
    let s = sentinel.ok_or(Error::EmptyMessage)?;
    let m = g.constant(Matrix::from_vec(idx.len(), 1, mask));
    let s = g.param(s);
    let fill = g.matmul(m, s);
    Ok(g.add(x, fill))
}

/// Trains the head (and the empty-input sentinel) over a frozen encoder with
/// per-cluster binary cross-entropy. Returns the model and the mean loss of
/// each epoch.
pub fn train_classifier(
    kind: ClassifierKind,
    base: &EncoderModel,
    config: ReplyNetConfig,
    examples: &[Example],
) -> Result<(ClusterClassifier, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(e) = examples.iter().find(|e| e.cluster >= config.num_clusters) {
        return Err(Error::Invalid(format!("example cluster {} >= {}", e.cluster, config.num_clusters)));
    }
    let mut model = ClusterClassifier::init(kind, base, config.clone())?;
    let feats = features(&model, examples)?;
    if kind == ClassifierKind::Reply {
        if let Some(i) = feats.prev_empty.iter().position(|&e| e) {
            return Err(Error::Invalid(format!("reply example {i} has an empty previous message")));
        }
    }
    let mut opt = Optimizer::new(OptimizerKind::Adam, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let g_n = config.num_clusters;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let (loss, grads) = {
                let mut g = Graph::new(&model.params);
                let p = block(&mut g, &feats.prev, &feats.prev_empty, idx, model.sentinel)?;
                let x = match kind {
                    ClassifierKind::Reply => p,
                    ClassifierKind::Full => {
                        let t = block(&mut g, &feats.typed, &feats.typed_empty, idx, model.sentinel)?;
                        g.concat_cols(&[p, t])
                    }
                };
                let z = model.head(&mut g, x, &mut Mode::inference());
                let mut targets = Matrix::zeros(idx.len(), g_n);
                for (r, &i) in idx.iter().enumerate() {
                    targets.set(r, examples[i].cluster, 1.0);
                }
                let loss = g.bce_logits(z, targets);
                (g.scalar(loss), g.backward(loss))
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { step: curve.len(), loss });
            }
            total += loss * idx.len() as f64;
            opt.step(&mut model.params, &grads, config.learning_rate);
        }
        curve.push(total / examples.len() as f64);
    }
    Ok((model, curve))
}

/// Mean over inputs of |top-k(a) ∩ top-k(b)| / k.
pub fn top_k_overlap(a: &[Vec<f64>], b: &[Vec<f64>], k: usize) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let tx = top_k_indices(x, k);
            let ty = top_k_indices(y, k);
            tx.iter().filter(|i| ty.contains(i)).count() as f64 / tx.len().max(1) as f64
        })
        .sum();
    total / a.len() as f64
}

/// Fraction of examples whose class is among the `k` best scores.
pub fn top_k_accuracy(model: &ClusterClassifier, examples: &[Example], k: usize) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let inputs: Vec<(&str, &str)> = examples.iter().map(|e| (e.prev.as_str(), e.typed.as_str())).collect();
    let probs = model.predict_batch(&inputs)?;
    let hits = examples
        .iter()
        .zip(&probs)
        .filter(|(e, p)| top_k_indices(p, k).contains(&e.cluster))
        .count();
    Ok(hits as f64 / examples.len() as f64)
}

/// Size and fidelity of a quantized classifier against its float source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantReport {
    pub float_bytes: usize,
    pub int8_bytes: usize,
    pub top3_overlap: f64,
    /// Largest |w - deq(q(w))| / scale over all tensors.
    pub max_weight_error_over_scale: f64,
    pub per_tensor: BTreeMap<String, f64>,
}

pub fn quantization_report(
    float: &ClusterClassifier,
    quant: &ClusterClassifier,
    inputs: &[(&str, &str)],
) -> Result<QuantReport> {
    let Some((tensors, _)) = &quant.quantized else {
        return Err(Error::Invalid("second model is not quantized".into()));
    };
    let mut per_tensor = BTreeMap::new();
    for (name, t) in tensors {
        let TensorData::Int8(q) = t else { continue };
        let id = float.params.id(name).ok_or_else(|| Error::Invalid(format!("float model lacks {name}")))?;
        per_tensor.insert(name.clone(), q.max_error(float.params.get(id)) / q.scale as f64);
    }
    let a = float.predict_batch(inputs)?;
    let b = quant.predict_batch(inputs)?;
    Ok(QuantReport {
        float_bytes: float.checkpoint().to_bytes()?.len(),
        int8_bytes: quant.checkpoint().to_bytes()?.len(),
        top3_overlap: top_k_overlap(&a, &b, 3),
        max_weight_error_over_scale: per_tensor.values().copied().fold(0.0, f64::max),
        per_tensor,
    })
}
