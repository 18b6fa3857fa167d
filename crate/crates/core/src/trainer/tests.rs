use super::*;
use crate::corpus::{build_vocab, conversation_from_raw, extract_pairs, generate_synthetic_corpus, SyntheticConfig};
use crate::nn::softmax_rows;

fn tiny_config(kind: EncoderKind, vocab: &Vocab) -> EncoderConfig {
    let mut c = EncoderConfig::desk(kind, vocab.word_slots(), vocab.char_slots());
    c.d_w = 4;
    c.d_c_in = 3;
    c.filter_widths = vec![1, 2, 3];
    c.filter_counts = vec![2, 2, 2];
    c.d_out = 4;
    c.max_word_chars = 6;
    c.transformer.model_dim = 4;
    c.transformer.inner_dim = 6;
    c.transformer.heads = 2;
    c
}

fn toy_pairs() -> Vec<MessagePair> {
    let conv = conversation_from_raw(0, &["hi there", "hello you", "gud mrng", "gm dear"]);
    extract_pairs(&[conv])
}

#[test]
fn orthogonal_unit_embeddings_give_identity_scores() {
    let params = ParamSet::new();
    let mut g = Graph::new(&params);
    let e = g.constant(Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
    let s = g.matmul_t(e, e);
    assert_eq!(g.value(s).data, vec![1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn score_matrix_matches_brute_force_dots() {
    let pairs = toy_pairs();
    let vocab = build_vocab(&pairs, 100).unwrap();
    let config = tiny_config(EncoderKind::Gru, &vocab);
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = DualEncoder::init(config, None, &mut params, &mut rng).unwrap();
    let batch = encode_pairs(&vocab, &pairs, 6);
    assert_eq!(batch.len(), 3);
    let s = model.score_matrix(&params, &batch).unwrap();

    let embed = |words: &[EncodedWord]| {
        let mut g = Graph::new(&params);
        let v = model.encoder.encode(&mut g, &[words], &mut Mode::inference()).unwrap();
        g.value(v[0]).data.clone()
    };
    let get = |n: &str| params.get(params.id(n).unwrap()).clone();
    let (w1, b1, w2, b2) = (get("proj.w1"), get("proj.b1"), get("proj.w2"), get("proj.b2"));
    let project = |x: &[f64]| -> Vec<f64> {
        let h: Vec<f64> = (0..w1.cols)
            .map(|j| (b1.data[j] + (0..x.len()).map(|i| x[i] * w1.get(i, j)).sum::<f64>()).max(0.0))
            .collect();
        (0..w2.cols)
            .map(|j| b2.data[j] + (0..h.len()).map(|i| h[i] * w2.get(i, j)).sum::<f64>())
            .collect()
    };
    for i in 0..3 {
        for j in 0..3 {
            let e = embed(&batch[i].current);
            let r = project(&embed(&batch[j].next));
            let dot: f64 = e.iter().zip(&r).map(|(a, b)| a * b).sum();
            assert!((s.get(i, j) - dot).abs() < 1e-6);
        }
    }
    let probs = softmax_rows(&s);
    for i in 0..3 {
        assert!((probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn identity_projection_with_equal_embeddings_gives_constant_matrix() {
    let conv = conversation_from_raw(0, &["ok", "ok", "ok"]);
    let pairs = extract_pairs(&[conv]);
    let vocab = build_vocab(&pairs, 10).unwrap();
    let config = tiny_config(EncoderKind::Gru, &vocab);
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = DualEncoder::init(config, None, &mut params, &mut rng).unwrap();
    model.projection.set_identity(&mut params);
    let s = model.score_matrix(&params, &encode_pairs(&vocab, &pairs, 6)).unwrap();
    assert!(s.data.iter().all(|&x| (x - s.data[0]).abs() < 1e-12));
}

#[test]
fn batch_of_one_rejected() {
    let pairs = toy_pairs();
    let vocab = build_vocab(&pairs, 100).unwrap();
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = DualEncoder::init(tiny_config(EncoderKind::Gru, &vocab), None, &mut params, &mut rng).unwrap();
    let batch = encode_pairs(&vocab, &pairs[..1], 6);
    assert!(matches!(model.score_matrix(&params, &batch), Err(Error::BatchTooSmall(1))));
}

#[test]
fn batch_loss_values() {
    assert!((batch_loss(&Matrix::filled(4, 4, 2.5)).unwrap() - 4f64.ln()).abs() < 1e-12);
    assert!((batch_loss(&Matrix::filled(4, 4, 2.5)).unwrap() - 1.3863).abs() < 1e-4);
    let mut m = Matrix::filled(3, 3, -10.0);
    for i in 0..3 {
        m.set(i, i, 10.0);
    }
    let l = batch_loss(&m).unwrap();
    assert!((l / 4.1e-9 - 1.0).abs() < 0.01);
    assert_eq!(batch_loss(&Matrix::filled(1, 1, 3.0)).unwrap(), 0.0);
    assert!(matches!(batch_loss(&Matrix::zeros(2, 3)), Err(Error::Shape(_))));
}

#[test]
fn stationary_point_has_vanishing_gradients() {
    let mut params = ParamSet::new();
    let mut m = Matrix::filled(3, 3, -30.0);
    for i in 0..3 {
        m.set(i, i, 30.0);
    }
    let id = params.add("scores", m);
    let mut g = Graph::new(&params);
    let s = g.param(id);
    let loss = g.softmax_xent_diag(s);
    let grads = g.backward(loss);
    assert!(grads.get(id).unwrap().max_abs() <= 1e-8);
}

fn check_kind(kind: EncoderKind, seed: u64) -> GradCheckReport {
    let pairs = toy_pairs();
    let vocab = build_vocab(&pairs, 100).unwrap();
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = DualEncoder::init(tiny_config(kind, &vocab), None, &mut params, &mut rng).unwrap();
    randomize_params(&mut params, 0.5, &mut rng);
    let batch = encode_pairs(&vocab, &pairs[..2], 6);
    gradient_check(&model, &params, &batch, seed, 1e-4).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    for kind in [EncoderKind::Gru, EncoderKind::Transformer] {
        let report = check_kind(kind, 11);
        assert!(report.checked > 100);
        assert!(report.max_rel_error <= 1e-3, "{kind:?}: {:?}", report.per_param);
    }
}

#[test]
fn unused_vocab_rows_get_zero_gradient() {
    let pairs = toy_pairs();
    let mut vocab = build_vocab(&pairs, 100).unwrap();
    let mut words = vocab.words().to_vec();
    words.push(("neverused".into(), 1));
    vocab = Vocab::new(words, vocab.chars().to_vec());
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = DualEncoder::init(tiny_config(EncoderKind::Gru, &vocab), None, &mut params, &mut rng).unwrap();
    let batch = encode_pairs(&vocab, &pairs, 6);
    let (_, grads) = model.loss_and_grads(&params, &batch, &mut rng).unwrap();
    let g = grads.get(params.id(crate::embedder::WORD_EMB).unwrap()).unwrap();
    let unused = vocab.word_id("neverused");
    assert!(g.row(unused).iter().all(|&x| x == 0.0));
    assert!(g.row(crate::corpus::PAD_ID).iter().all(|&x| x == 0.0));
}

#[test]
fn encoders_are_tied() {
    let pairs = toy_pairs();
    let vocab = build_vocab(&pairs, 100).unwrap();
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = DualEncoder::init(tiny_config(EncoderKind::Gru, &vocab), None, &mut params, &mut rng).unwrap();
    assert_eq!(params.iter().filter(|(_, n, _)| n.starts_with("enc.word_emb")).count(), 1);
    let batch = encode_pairs(&vocab, &pairs[..2], 6);
    let before = model.score_matrix(&params, &batch).unwrap();
    // change only the shared encoder's GRU input weights
    let id = params.id("enc.gru.wx").unwrap();
    params.get_mut(id).data.iter_mut().for_each(|x| *x *= 1.5);
    let after = model.score_matrix(&params, &batch).unwrap();
    // both rows (inputs) and columns (replies) move
    assert!((0..2).all(|i| before.row(i) != after.row(i)));
    let cur: Vec<&[EncodedWord]> = batch.iter().map(|p| p.current.as_slice()).collect();
    let nxt: Vec<&[EncodedWord]> = batch.iter().map(|p| p.next.as_slice()).collect();
    let mut g = Graph::new(&params);
    let a = model.encoder.encode_stacked(&mut g, &cur, &mut Mode::inference()).unwrap();
    let b = model.encoder.encode_stacked(&mut g, &nxt, &mut Mode::inference()).unwrap();
    assert_ne!(g.value(a), g.value(b));
}

#[test]
fn clipping_caps_injected_gradient() {
    let mut grads = Grads::new(1);
    grads.set(ParamId(0), Matrix::row_vector(vec![100.0, -100.0, 0.5]));
    grads.clip_values(5.0);
    assert_eq!(grads.get(ParamId(0)).unwrap().data, vec![5.0, -5.0, 0.5]);
}

#[test]
fn lr_decays_in_steps() {
    let c = TrainConfig::full_size(EncoderKind::Gru);
    assert_eq!(c.learning_rate_at(9_999), 1e-4);
    assert!((c.learning_rate_at(10_000) - 0.95e-4).abs() < 1e-18);
    assert!((c.learning_rate_at(25_000) - 1e-4 * 0.95 * 0.95).abs() < 1e-18);
    let t = TrainConfig::full_size(EncoderKind::Transformer);
    assert_eq!(t.optimizer, OptimizerKind::Rmsprop);
    assert_eq!(t.learning_rate_at(50_000), 1e-4);
}

fn two_intent_pairs(n: usize) -> Vec<MessagePair> {
    let a = ["good morning", "gud mrng", "gm", "good mrng"];
    let a_reply = ["morning dear", "mrng dear", "gm dear"];
    let b = ["good night", "gud n8", "gn", "good nyt"];
    let b_reply = ["sweet dreams", "sweet drms", "swt dreams"];
    let convs: Vec<_> = (0..n)
        .map(|i| {
            if i % 2 == 0 {
                conversation_from_raw(i as u64, &[a[i / 2 % a.len()], a_reply[i / 2 % a_reply.len()]])
            } else {
                conversation_from_raw(i as u64, &[b[i / 2 % b.len()], b_reply[i / 2 % b_reply.len()]])
            }
        })
        .collect();
    extract_pairs(&convs)
}

#[test]
fn fit_separates_two_intents() {
    let pairs = two_intent_pairs(48);
    let vocab = build_vocab(&pairs, 1000).unwrap();
    for kind in [EncoderKind::Gru, EncoderKind::Transformer] {
        let enc = tiny_config(kind, &vocab);
        let mut enc = enc;
        enc.d_out = 8;
        enc.transformer.model_dim = 8;
        let config = TrainConfig {
            batch_size: 8,
            epochs: 40,
            max_steps: Some(200),
            ..TrainConfig::desk(kind)
        };
        let trained = fit(&pairs, vocab.clone(), enc, &config).unwrap();
        assert_eq!(trained.loss_curve.len(), 200);
        // validation: batches holding one pair of each intent
        let val = two_intent_pairs(20);
        let data = encode_pairs(&vocab, &val, 6);
        let mut acc = 0.0;
        let batches: Vec<_> = data.chunks(2).collect();
        for b in &batches {
            acc += batch_accuracy(&trained.model.score_matrix(&trained.params, b).unwrap());
        }
        acc /= batches.len() as f64;
        assert!(acc >= 0.95, "{kind:?} accuracy {acc}");
    }
}

#[test]
fn fit_is_deterministic() {
    let pairs = two_intent_pairs(16);
    let vocab = build_vocab(&pairs, 1000).unwrap();
    let enc = tiny_config(EncoderKind::Transformer, &vocab);
    let config = TrainConfig {
        batch_size: 4,
        epochs: 3,
        ..TrainConfig::desk(EncoderKind::Transformer)
    };
    let a = fit(&pairs, vocab.clone(), enc.clone(), &config).unwrap();
    let b = fit(&pairs, vocab, enc, &config).unwrap();
    assert_eq!(a.loss_curve, b.loss_curve);
    assert_eq!(a.params, b.params);
}

#[test]
fn fit_rejects_empty_input() {
    let vocab = Vocab::new(vec![("a".into(), 1)], vec!['a']);
    let enc = tiny_config(EncoderKind::Gru, &vocab);
    assert!(matches!(
        fit(&[], vocab, enc, &TrainConfig::desk(EncoderKind::Gru)),
        Err(Error::EmptyCorpus)
    ));
}

#[test]
fn first_epoch_loss_decreases_on_synthetic_corpus() {
    for seed in [1, 2, 3] {
        let corpus = generate_synthetic_corpus(&SyntheticConfig {
            seed,
            n_intents: 20,
            n_conversations: 40,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let pairs = extract_pairs(&corpus.conversations());
        let vocab = build_vocab(&pairs, 50_000).unwrap();
        for kind in [EncoderKind::Gru, EncoderKind::Transformer] {
            let enc = EncoderConfig::desk(kind, vocab.word_slots(), vocab.char_slots());
            let config = TrainConfig {
                epochs: 1,
                batch_size: 16,
                seed,
                ..TrainConfig::desk(kind)
            };
            let t = fit(&pairs, vocab.clone(), enc, &config).unwrap();
            let first = t.loss_curve.first().unwrap().1;
            let last = t.loss_curve.last().unwrap().1;
            assert!(last < first, "{kind:?} seed {seed}: {first} -> {last}");
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let pairs = two_intent_pairs(8);
    let vocab = build_vocab(&pairs, 1000).unwrap();
    let enc = tiny_config(EncoderKind::Gru, &vocab);
    let config = TrainConfig {
        batch_size: 4,
        epochs: 1,
        ..TrainConfig::desk(EncoderKind::Gru)
    };
    let t = fit(&pairs, vocab, enc, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    t.save(&path).unwrap();
    let back = TrainedModel::load(&path).unwrap();
    assert_eq!(back.vocab, t.vocab);
    let a = t.encoder_model().embed("gud n8").unwrap();
    let b = back.encoder_model().embed("gud n8").unwrap();
    for (x, y) in a.vector.iter().zip(&b.vector) {
        assert!((x - y).abs() < 1e-4);
    }
}
