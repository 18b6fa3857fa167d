//! Message encoders: CharCNN word features joined with word embeddings, then
//! a GRU or a Transformer encoder over the words of a message.

mod config;

use rand::{Rng, RngCore};

pub use config::{EncoderConfig, EncoderKind, TransformerConfig};

use crate::corpus::{EncodedWord, Message, Vocab, PAD_ID};
use crate::error::{Error, Result};
use crate::nn::{Grads, Graph, Matrix, ParamId, ParamSet, Var};

/// Intercepts activations at named sites; used for range calibration and
/// fake quantization.
pub trait ActivationHook {
    fn visit(&mut self, g: &mut Graph<'_>, site: &str, v: Var) -> Var;
}

/// Forward-pass mode: dropout is active only when an RNG is supplied.
#[derive(Default)]
pub struct Mode<'a> {
    rng: Option<&'a mut dyn RngCore>,
    hook: Option<&'a mut dyn ActivationHook>,
}

impl<'a> Mode<'a> {
    pub fn inference() -> Self {
        Mode::default()
    }

    pub fn training(rng: &'a mut dyn RngCore) -> Self {
        Mode {
            rng: Some(rng),
            hook: None,
        }
    }

    pub fn with_hook(hook: &'a mut dyn ActivationHook) -> Self {
        Mode {
            rng: None,
            hook: Some(hook),
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn dropout(&mut self, g: &mut Graph<'_>, v: Var, p: f64) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) => g.dropout(v, p, rng),
            None => v,
        }
    }

    pub fn visit(&mut self, g: &mut Graph<'_>, site: &str, v: Var) -> Var {
        match self.hook.as_deref_mut() {
            Some(h) => h.visit(g, site, v),
            None => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Embedding,
    Glorot,
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
struct TfLayerIds {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_g: ParamId,
    ln1_b: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
}

#[derive(Debug, Clone)]
enum SeqIds {
    Gru {
        wx: ParamId,
        bx: ParamId,
        wh: ParamId,
        bh: ParamId,
    },
    Transformer {
        in_w: ParamId,
        in_b: ParamId,
        layers: Vec<TfLayerIds>,
    },
}

/// An encoder bound to parameter ids in a [`ParamSet`]. The same encoder is
/// used for both sides of a training pair, so the weights are tied by
/// construction.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    word_emb: ParamId,
    char_emb: Option<ParamId>,
    convs: Vec<(usize, ParamId, ParamId)>,
    seq: SeqIds,
}

pub const WORD_EMB: &str = "enc.word_emb";
pub const CHAR_EMB: &str = "enc.char_emb";

fn layout(c: &EncoderConfig) -> Vec<(String, usize, usize, Init)> {
    let mut v = vec![(WORD_EMB.to_string(), c.word_slots, c.d_w, Init::Embedding)];
    if c.char_cnn {
        v.push((CHAR_EMB.to_string(), c.char_slots, c.d_c_in, Init::Embedding));
        for (i, (&k, &n)) in c.filter_widths.iter().zip(&c.filter_counts).enumerate() {
            v.push((format!("enc.conv{i}.w"), k * c.d_c_in, n, Init::Glorot));
            v.push((format!("enc.conv{i}.b"), 1, n, Init::Zeros));
        }
    }
    let d = c.word_repr_dim();
    match c.kind {
        EncoderKind::Gru => {
            let h = c.d_out;
            v.push(("enc.gru.wx".into(), d, 3 * h, Init::Glorot));
            v.push(("enc.gru.bx".into(), 1, 3 * h, Init::Zeros));
            v.push(("enc.gru.wh".into(), h, 3 * h, Init::Glorot));
            v.push(("enc.gru.bh".into(), 1, 3 * h, Init::Zeros));
        }
        EncoderKind::Transformer => {
            let t = &c.transformer;
            let m = t.model_dim;
            v.push(("enc.tf.in.w".into(), d, m, Init::Glorot));
            v.push(("enc.tf.in.b".into(), 1, m, Init::Zeros));
            for l in 0..t.layers {
                for p in ["q", "k", "v", "o"] {
                    v.push((format!("enc.tf{l}.w{p}"), m, m, Init::Glorot));
                    v.push((format!("enc.tf{l}.b{p}"), 1, m, Init::Zeros));
                }
                v.push((format!("enc.tf{l}.ln1.g"), 1, m, Init::Ones));
                v.push((format!("enc.tf{l}.ln1.b"), 1, m, Init::Zeros));
                v.push((format!("enc.tf{l}.ff1.w"), m, t.inner_dim, Init::Glorot));
                v.push((format!("enc.tf{l}.ff1.b"), 1, t.inner_dim, Init::Zeros));
                v.push((format!("enc.tf{l}.ff2.w"), t.inner_dim, m, Init::Glorot));
                v.push((format!("enc.tf{l}.ff2.b"), 1, m, Init::Zeros));
                v.push((format!("enc.tf{l}.ln2.g"), 1, m, Init::Ones));
                v.push((format!("enc.tf{l}.ln2.b"), 1, m, Init::Zeros));
            }
        }
    }
    v
}

/// Fixed sinusoidal position encodings, `n x dim`.
pub fn sinusoidal_positions(n: usize, dim: usize) -> Matrix {
    let mut m = Matrix::zeros(n, dim);
    for pos in 0..n {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            m.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    m
}

/// Scaled dot-product attention weights `softmax(q kᵀ / sqrt(d))`.
pub fn attention_weights(q: &Matrix, k: &Matrix) -> Matrix {
    let scale = 1.0 / (q.cols as f64).sqrt();
    crate::nn::softmax_rows(&q.matmul_t(k).map(|x| x * scale))
}

impl Encoder {
    /// Registers freshly initialized encoder parameters in `params`.
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, params: &mut ParamSet, rng: &mut R) -> Result<Self> {
        config.validate()?;
        for (name, rows, cols, init) in layout(&config) {
            let m = match init {
                Init::Embedding => {
                    let mut m = Matrix::uniform(rows, cols, (1.0 / cols as f64).sqrt(), rng);
                    m.row_mut(PAD_ID).fill(0.0);
                    m
                }
                Init::Glorot => Matrix::glorot(rows, cols, rng),
                Init::Zeros => Matrix::zeros(rows, cols),
                Init::Ones => Matrix::filled(rows, cols, 1.0),
            };
            params.add(name, m);
        }
        Encoder::bind(config, params)
    }

    /// Looks up existing encoder parameters, validating every shape.
    pub fn bind(config: EncoderConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        for (name, rows, cols, _) in layout(&config) {
            let id = params
                .id(&name)
                .ok_or_else(|| Error::Shape(format!("missing parameter {name}")))?;
            let shape = params.get(id).shape();
            if shape != (rows, cols) {
                return Err(Error::Shape(format!("{name}: expected {rows}x{cols}, found {}x{}", shape.0, shape.1)));
            }
            if !params.get(id).is_finite() {
                return Err(Error::Invalid(format!("{name} holds non-finite values")));
            }
        }
        let id = |n: &str| params.id(n).expect("validated above");
        let convs = if config.char_cnn {
            config
                .filter_widths
                .iter()
                .enumerate()
                .map(|(i, &k)| (k, id(&format!("enc.conv{i}.w")), id(&format!("enc.conv{i}.b"))))
                .collect()
        } else {
            Vec::new()
        };
        let seq = match config.kind {
            EncoderKind::Gru => SeqIds::Gru {
                wx: id("enc.gru.wx"),
                bx: id("enc.gru.bx"),
                wh: id("enc.gru.wh"),
                bh: id("enc.gru.bh"),
            },
            EncoderKind::Transformer => SeqIds::Transformer {
                in_w: id("enc.tf.in.w"),
                in_b: id("enc.tf.in.b"),
                layers: (0..config.transformer.layers)
                    .map(|l| {
                        let p = |s: &str| id(&format!("enc.tf{l}.{s}"));
                        TfLayerIds {
                            wq: p("wq"),
                            bq: p("bq"),
                            wk: p("wk"),
                            bk: p("bk"),
                            wv: p("wv"),
                            bv: p("bv"),
                            wo: p("wo"),
                            bo: p("bo"),
                            ln1_g: p("ln1.g"),
                            ln1_b: p("ln1.b"),
                            ff1_w: p("ff1.w"),
                            ff1_b: p("ff1.b"),
                            ff2_w: p("ff2.w"),
                            ff2_b: p("ff2.b"),
                            ln2_g: p("ln2.g"),
                            ln2_b: p("ln2.b"),
                        }
                    })
                    .collect(),
            },
        };
        Ok(Encoder {
            word_emb: id(WORD_EMB),
            char_emb: config.char_cnn.then(|| id(CHAR_EMB)),
            convs,
            seq,
            config,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn d_out(&self) -> usize {
        self.config.d_out
    }

    /// Names of all encoder tensors in registration order.
    pub fn param_names(config: &EncoderConfig) -> Vec<String> {
        layout(config).into_iter().map(|(n, ..)| n).collect()
    }

    /// Keeps the padding rows of the embedding tables fixed at zero.
    pub fn mask_frozen(&self, grads: &mut Grads) {
        for id in [Some(self.word_emb), self.char_emb].into_iter().flatten() {
            if let Some(g) = grads.get_mut(id) {
                g.row_mut(PAD_ID).fill(0.0);
            }
        }
    }

    /// CharCNN features for each word, `n_words x d_c_out`.
    pub fn char_features(&self, g: &mut Graph<'_>, words: &[EncodedWord]) -> Result<Var> {
        let Some(char_emb) = self.char_emb else {
            return Err(Error::Config("encoder has no CharCNN".into()));
        };
        let l = self.config.max_word_chars;
        let mut ids = Vec::with_capacity(words.len() * l);
        for w in words {
            if w.chars.len() != l {
                return Err(Error::Shape(format!("word has {} char ids, expected {l}", w.chars.len())));
            }
            ids.extend_from_slice(&w.chars);
        }
        let table = g.param(char_emb);
        let chars = g.gather(table, &ids);
        let mut pooled = Vec::with_capacity(self.convs.len());
        for &(k, w, b) in &self.convs {
            let windows = g.im2col(chars, l, k);
            let (w, b) = (g.param(w), g.param(b));
            let conv = g.affine(windows, w, b);
            let act = g.relu(conv);
            pooled.push(g.max_pool_groups(act, l - k + 1));
        }
        Ok(g.concat_cols(&pooled))
    }

    /// Word representations `[word embedding | CharCNN]`, `n_words x (d_w + d_c_out)`.
    pub fn word_reprs(&self, g: &mut Graph<'_>, words: &[EncodedWord]) -> Result<Var> {
        let ids: Vec<usize> = words
            .iter()
            .map(|w| {
                if w.word_id < self.config.word_slots {
                    Ok(w.word_id)
                } else {
                    Err(Error::Shape(format!("word id {} out of range", w.word_id)))
                }
            })
            .collect::<Result<_>>()?;
        let table = g.param(self.word_emb);
        let word = g.gather(table, &ids);
        if !self.config.char_cnn {
            return Ok(word);
        }
        let chars = self.char_features(g, words)?;
        Ok(g.concat_cols(&[word, chars]))
    }

    /// Encodes each message to a `1 x d_out` embedding.
    pub fn encode(&self, g: &mut Graph<'_>, messages: &[&[EncodedWord]], mode: &mut Mode<'_>) -> Result<Vec<Var>> {
        if messages.iter().any(|m| m.is_empty()) {
            return Err(Error::EmptyMessage);
        }
        let flat: Vec<EncodedWord> = messages.iter().flat_map(|m| m.iter().cloned()).collect();
        let reprs = self.word_reprs(g, &flat)?;
        let mut reprs = mode.visit(g, "word_repr", reprs);
        if self.config.kind == EncoderKind::Transformer {
            reprs = mode.dropout(g, reprs, self.config.transformer.dropout);
        }
        let mut out = Vec::with_capacity(messages.len());
        let mut offset = 0;
        for m in messages {
            let x = g.slice_rows(reprs, offset, m.len());
            offset += m.len();
            let e = match &self.seq {
                SeqIds::Gru { .. } => self.gru(g, x, mode),
                SeqIds::Transformer { .. } => self.transformer(g, x, mode),
            };
            out.push(mode.visit(g, "embedding", e));
        }
        Ok(out)
    }

    /// Encodes messages and stacks the embeddings into a `B x d_out` matrix.
    pub fn encode_stacked(&self, g: &mut Graph<'_>, messages: &[&[EncodedWord]], mode: &mut Mode<'_>) -> Result<Var> {
        let rows = self.encode(g, messages, mode)?;
        Ok(g.concat_rows(&rows))
    }

    fn gru(&self, g: &mut Graph<'_>, x: Var, mode: &mut Mode<'_>) -> Var {
        let SeqIds::Gru { wx, bx, wh, bh } = self.seq else {
            unreachable!()
        };
        let h_dim = self.config.d_out;
        let (wx, bx, wh, bh) = (g.param(wx), g.param(bx), g.param(wh), g.param(bh));
        let xw = g.affine(x, wx, bx);
        let steps = g.value(x).rows;
        let mut h = g.constant(Matrix::zeros(1, h_dim));
        for t in 0..steps {
            let xt = g.slice_rows(xw, t, 1);
            let hu = g.affine(h, wh, bh);
            let (xz, hz) = (g.slice_cols(xt, 0, h_dim), g.slice_cols(hu, 0, h_dim));
            let (xr, hr) = (g.slice_cols(xt, h_dim, h_dim), g.slice_cols(hu, h_dim, h_dim));
            let (xn, hn) = (g.slice_cols(xt, 2 * h_dim, h_dim), g.slice_cols(hu, 2 * h_dim, h_dim));
            let z_in = g.add(xz, hz);
            let z = g.sigmoid(z_in);
            let r_in = g.add(xr, hr);
            let r = g.sigmoid(r_in);
            let gated = g.mul(r, hn);
            let n_in = g.add(xn, gated);
            let n = g.tanh(n_in);
            let keep = g.one_minus(z);
            let fresh = g.mul(keep, n);
            let carried = g.mul(z, h);
            h = g.add(fresh, carried);
        }
        mode.dropout(g, h, self.config.gru_dropout)
    }

    fn transformer(&self, g: &mut Graph<'_>, x: Var, mode: &mut Mode<'_>) -> Var {
        let SeqIds::Transformer { in_w, in_b, layers } = &self.seq else {
            unreachable!()
        };
        let t = &self.config.transformer;
        let n = g.value(x).rows;
        let dk = t.model_dim / t.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let (w, b) = (g.param(*in_w), g.param(*in_b));
        let mut h = g.affine(x, w, b);
        h = g.scale(h, (t.model_dim as f64).sqrt());
        if t.positional {
            let pe = g.constant(sinusoidal_positions(n, t.model_dim));
            h = g.add(h, pe);
        }
        h = mode.visit(g, "tf.in", h);
        for (li, l) in layers.iter().enumerate() {
            let lin = |g: &mut Graph<'_>, x: Var, w: ParamId, b: ParamId| {
                let (w, b) = (g.param(w), g.param(b));
                g.affine(x, w, b)
            };
            let q = lin(g, h, l.wq, l.bq);
            let k = lin(g, h, l.wk, l.bk);
            let v = lin(g, h, l.wv, l.bv);
            let mut heads = Vec::with_capacity(t.heads);
            for hd in 0..t.heads {
                let qh = g.slice_cols(q, hd * dk, dk);
                let kh = g.slice_cols(k, hd * dk, dk);
                let vh = g.slice_cols(v, hd * dk, dk);
                let logits = g.matmul_t(qh, kh);
                let logits = g.scale(logits, scale);
                let att = g.softmax_rows(logits);
                let att = mode.dropout(g, att, t.dropout);
                heads.push(g.matmul(att, vh));
            }
            let cat = g.concat_cols(&heads);
            let o = lin(g, cat, l.wo, l.bo);
            let o = mode.dropout(g, o, t.dropout);
            let res = g.add(h, o);
            let (gn, bn) = (g.param(l.ln1_g), g.param(l.ln1_b));
            let h1 = g.layer_norm(res, gn, bn);
            let f = lin(g, h1, l.ff1_w, l.ff1_b);
            let f = g.relu(f);
            let f = lin(g, f, l.ff2_w, l.ff2_b);
            let f = mode.dropout(g, f, t.dropout);
            let res = g.add(h1, f);
            let (gn, bn) = (g.param(l.ln2_g), g.param(l.ln2_b));
            h = g.layer_norm(res, gn, bn);
            h = mode.visit(g, &format!("tf{li}"), h);
        }
        g.mean_rows(h)
    }
}

/// Text tokens of a message mapped to encoder inputs.
pub fn encode_message(vocab: &Vocab, message: &Message, max_chars: usize) -> Vec<EncodedWord> {
    message
        .text_tokens()
        .map(|t| vocab.encode_token(t.as_str(), max_chars))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageEmbedding {
    pub vector: Vec<f64>,
    pub phrase: String,
}

/// A trained encoder together with its parameters and vocabulary, ready for
/// inference.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    pub encoder: Encoder,
    pub params: ParamSet,
    pub vocab: Vocab,
}

const EMBED_CHUNK: usize = 64;

impl EncoderModel {
    pub fn new(encoder: Encoder, params: ParamSet, vocab: Vocab) -> Self {
        EncoderModel { encoder, params, vocab }
    }

    pub fn encode_text(&self, text: &str) -> Vec<EncodedWord> {
        encode_message(&self.vocab, &Message::standalone(text), self.encoder.config.max_word_chars)
    }

    pub fn embed(&self, text: &str) -> Result<MessageEmbedding> {
        Ok(self.embed_many(&[text])?.remove(0))
    }

    /// Embeds many texts in inference mode.
    pub fn embed_many<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<MessageEmbedding>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(EMBED_CHUNK) {
            let encoded: Vec<Vec<EncodedWord>> = chunk.iter().map(|t| self.encode_text(t.as_ref())).collect();
            let refs: Vec<&[EncodedWord]> = encoded.iter().map(Vec::as_slice).collect();
            let mut g = Graph::new(&self.params);
            let vars = self.encoder.encode(&mut g, &refs, &mut Mode::inference())?;
            for (t, v) in chunk.iter().zip(vars) {
                out.push(MessageEmbedding {
                    vector: g.value(v).data.clone(),
                    phrase: Message::standalone(t.as_ref()).phrase(),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UNK_ID;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(kind: EncoderKind, char_cnn: bool) -> EncoderConfig {
        let mut c = EncoderConfig::desk(kind, 12, 10);
        c.d_w = 4;
        c.d_c_in = 3;
        c.filter_widths = vec![1, 2];
        c.filter_counts = vec![2, 4];
        c.char_cnn = char_cnn;
        c.d_out = 8;
        c.transformer.model_dim = 8;
        c.transformer.inner_dim = 12;
        c.transformer.heads = 2;
        c
    }

    fn build(config: EncoderConfig, seed: u64) -> (Encoder, ParamSet) {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = Encoder::init(config, &mut params, &mut rng).unwrap();
        (enc, params)
    }

    fn word(id: usize, chars: &[usize], l: usize) -> EncodedWord {
        let mut c = chars.to_vec();
        c.resize(l, PAD_ID);
        EncodedWord { word_id: id, chars: c }
    }

    fn embed(enc: &Encoder, params: &ParamSet, words: &[EncodedWord]) -> Result<Vec<f64>> {
        let mut g = Graph::new(params);
        let v = enc.encode(&mut g, &[words], &mut Mode::inference())?;
        Ok(g.value(v[0]).data.clone())
    }

    fn zero_all(params: &mut ParamSet, prefix: &str) {
        let ids: Vec<_> = params.iter().filter(|(_, n, _)| n.starts_with(prefix)).map(|(i, ..)| i).collect();
        for id in ids {
            params.get_mut(id).data.fill(0.0);
        }
    }

    #[test]
    fn zero_conv_weights_give_zero_char_features() {
        let (enc, mut params) = build(tiny(EncoderKind::Gru, true), 1);
        zero_all(&mut params, "enc.conv");
        let mut g = Graph::new(&params);
        let v = enc.char_features(&mut g, &[word(3, &[2, 3, 4], 10)]).unwrap();
        assert_eq!(g.value(v).data, vec![0.0; 6]);
    }

    #[test]
    fn full_size_filters_give_250_features() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::init(EncoderConfig::full_size(EncoderKind::Gru, 6, 6), &mut params, &mut rng).unwrap();
        let mut g = Graph::new(&params);
        let v = enc.char_features(&mut g, &[word(2, &[2, 3], 10)]).unwrap();
        assert_eq!(g.value(v).shape(), (1, 250));
        let r = enc.word_reprs(&mut g, &[word(2, &[2, 3], 10)]).unwrap();
        assert_eq!(g.value(r).shape(), (1, 550));
    }

    #[test]
    fn width_one_filter_by_hand() {
        let mut c = tiny(EncoderKind::Gru, true);
        c.filter_widths = vec![1];
        c.filter_counts = vec![1];
        let (enc, mut params) = build(c, 2);
        let w = params.id("enc.conv0.w").unwrap();
        *params.get_mut(w) = Matrix::from_vec(3, 1, vec![1.0, 0.0, 0.0]);
        let table = params.get(params.id(CHAR_EMB).unwrap()).clone();
        let (a, b) = (4, 5);
        let mut g = Graph::new(&params);
        let v = enc.char_features(&mut g, &[word(2, &[a, b], 10)]).unwrap();
        let expected = table.get(a, 0).max(0.0).max(table.get(b, 0).max(0.0));
        assert_eq!(g.value(v).data, vec![expected]);
    }

    #[test]
    fn word_repr_concatenates() {
        let (enc, mut params) = build(tiny(EncoderKind::Gru, true), 3);
        let we = params.id(WORD_EMB).unwrap();
        params.get_mut(we).row_mut(UNK_ID).fill(0.0);
        let mut g = Graph::new(&params);
        let r = enc.word_reprs(&mut g, &[word(UNK_ID, &[2, 3], 10), word(UNK_ID, &[4, 5, 6], 10)]).unwrap();
        let m = g.value(r);
        assert_eq!(m.cols, 4 + 6);
        assert_eq!(&m.row(0)[..4], &[0.0; 4]);
        assert_eq!(m.row(0)[..4], m.row(1)[..4]);
        assert_ne!(m.row(0)[4..], m.row(1)[4..]);
    }

    #[test]
    fn zero_gru_gives_zero_embedding() {
        let (enc, mut params) = build(tiny(EncoderKind::Gru, true), 4);
        zero_all(&mut params, "enc.gru");
        let e = embed(&enc, &params, &[word(2, &[2], 10), word(3, &[3], 10)]).unwrap();
        assert_eq!(e, vec![0.0; 8]);
    }

    #[test]
    fn single_token_gru_is_one_step() {
        let (enc, params) = build(tiny(EncoderKind::Gru, false), 5);
        let x = params.get(params.id(WORD_EMB).unwrap()).row(3).to_vec();
        let get = |n: &str| params.get(params.id(n).unwrap()).clone();
        let xw = Matrix::row_vector(x).matmul(&get("enc.gru.wx"));
        let bx = get("enc.gru.bx");
        let bh = get("enc.gru.bh");
        let h = 8;
        let expected: Vec<f64> = (0..h)
            .map(|i| {
                let z = crate::nn::sigmoid(xw.data[i] + bx.data[i] + bh.data[i]);
                let r = crate::nn::sigmoid(xw.data[h + i] + bx.data[h + i] + bh.data[h + i]);
                let n = (xw.data[2 * h + i] + bx.data[2 * h + i] + r * bh.data[2 * h + i]).tanh();
                (1.0 - z) * n
            })
            .collect();
        let e = embed(&enc, &params, &[word(3, &[], 10)]).unwrap();
        for (a, b) in e.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_message_is_an_error() {
        for kind in [EncoderKind::Gru, EncoderKind::Transformer] {
            let (enc, params) = build(tiny(kind, true), 6);
            assert!(matches!(embed(&enc, &params, &[]), Err(Error::EmptyMessage)));
        }
    }

    #[test]
    fn transformer_mean_pool_without_positions_is_order_free() {
        let mut c = tiny(EncoderKind::Transformer, true);
        c.transformer.positional = false;
        let (enc, params) = build(c, 7);
        let (a, b) = (word(2, &[2, 3], 10), word(5, &[6], 10));
        let ab = embed(&enc, &params, &[a.clone(), b.clone()]).unwrap();
        let ba = embed(&enc, &params, &[b, a]).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transformer_with_positions_depends_on_order() {
        let (enc, params) = build(tiny(EncoderKind::Transformer, true), 8);
        let (a, b) = (word(2, &[2, 3], 10), word(5, &[6], 10));
        let ab = embed(&enc, &params, &[a.clone(), b.clone()]).unwrap();
        let ba = embed(&enc, &params, &[b, a]).unwrap();
        assert!(ab.iter().zip(&ba).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn single_token_transformer_equals_final_vector() {
        let (enc, params) = build(tiny(EncoderKind::Transformer, true), 9);
        let e = embed(&enc, &params, &[word(4, &[2], 10)]).unwrap();
        assert_eq!(e.len(), 8);
        // one token: layer norm output has zero mean before the affine gain/bias
        let mean: f64 = e.iter().sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn uniform_attention_is_one_over_n() {
        let q = Matrix::filled(3, 4, 0.7);
        let k = Matrix::filled(3, 4, -0.2);
        let a = attention_weights(&q, &k);
        for x in &a.data {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn positions_match_formula() {
        let pe = sinusoidal_positions(3, 4);
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe.get(2, 2) - (2.0f64 / 100.0).sin()).abs() < 1e-15);
        assert!((pe.get(1, 1) - 1f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn bind_rejects_bad_shapes() {
        let (_, mut params) = build(tiny(EncoderKind::Gru, true), 10);
        let id = params.id("enc.gru.wh").unwrap();
        *params.get_mut(id) = Matrix::zeros(2, 2);
        assert!(matches!(Encoder::bind(tiny(EncoderKind::Gru, true), &params), Err(Error::Shape(_))));
        assert!(Encoder::bind(tiny(EncoderKind::Transformer, true), &ParamSet::new()).is_err());
    }

    #[test]
    fn dropout_only_in_training() {
        let (enc, params) = build(tiny(EncoderKind::Transformer, true), 11);
        let words = [word(2, &[2, 3], 10), word(3, &[4], 10)];
        let base = embed(&enc, &params, &words).unwrap();
        assert_eq!(base, embed(&enc, &params, &words).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new(&params);
        let v = enc.encode(&mut g, &[&words], &mut Mode::training(&mut rng)).unwrap();
        assert_ne!(g.value(v[0]).data, base);
    }

    fn arb_message() -> impl Strategy<Value = Vec<EncodedWord>> {
        prop::collection::vec((0usize..12, prop::collection::vec(0usize..10, 0..=10)), 1..=5)
            .prop_map(|ws| ws.into_iter().map(|(id, cs)| word(id, &cs, 10)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn output_shape_and_finiteness(msg in arb_message(), seed in 0u64..4, gru in any::<bool>()) {
            let kind = if gru { EncoderKind::Gru } else { EncoderKind::Transformer };
            let (enc, params) = build(tiny(kind, true), seed);
            let e = embed(&enc, &params, &msg).unwrap();
            prop_assert_eq!(e.len(), 8);
            prop_assert!(e.iter().all(|x| x.is_finite()));
            prop_assert_eq!(&e, &embed(&enc, &params, &msg).unwrap());
        }

        #[test]
        fn char_features_ignore_extra_trailing_padding(
            chars in prop::collection::vec(2usize..10, 1..=6),
            seed in 0u64..4,
        ) {
            let c10 = tiny(EncoderKind::Gru, true);
            let (enc10, params) = build(c10.clone(), seed);
            let mut c14 = c10;
            c14.max_word_chars = 14;
            let enc14 = Encoder::bind(c14, &params).unwrap();
            let mut g = Graph::new(&params);
            let a = enc10.char_features(&mut g, &[word(2, &chars, 10)]).unwrap();
            let b = enc14.char_features(&mut g, &[word(2, &chars, 14)]).unwrap();
            prop_assert_eq!(&g.value(a).data, &g.value(b).data);
        }
    }
}
