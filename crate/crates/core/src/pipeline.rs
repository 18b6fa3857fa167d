//! End-to-end run on a synthetic corpus: generate, train the encoder,
//! cluster, build the client assets and the reply model, then evaluate.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assets::Assets;
use crate::clusterer::{cluster_phrases, export_classes, ClassRow, ClassTable, ClusterModel};
use crate::config::RunConfig;
use crate::corpus::{
    build_vocab, extract_pairs, generate_synthetic_corpus, Conversation, MessagePair, PhraseFrequencies,
    SyntheticCorpus,
};
use crate::embedder::{EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::eval::{adjusted_rand_index, build_similarity_set, similarity_auc, simulate_typing, variant_recall, TestCase, TypingMetrics};
use crate::hybrid::{predict, CombinerWeights};
use crate::replynet::{
    full_examples, reply_examples, top_k_indices, train_classifier, ClassifierKind, ClusterClassifier, ReplyNetConfig,
};
use crate::stickers::{build_mapping, Sticker, StickerMapping};
use crate::trainer::{fit, TrainedModel};
use crate::trie::TypedTrie;

/// Holds out whole conversations: a seeded shuffle, the first
/// `test_fraction` of it becomes the test split.
pub fn split_conversations(
    conversations: &[Conversation],
    test_fraction: f64,
    seed: u64,
) -> (Vec<Conversation>, Vec<Conversation>) {
    let mut idx: Vec<usize> = (0..conversations.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let n_test = (conversations.len() as f64 * test_fraction).round() as usize;
    let mut test: Vec<usize> = idx[..n_test].to_vec();
    let mut train: Vec<usize> = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (
        train.iter().map(|&i| conversations[i].clone()).collect(),
        test.iter().map(|&i| conversations[i].clone()).collect(),
    )
}

/// Builds the vocabulary from `pairs` and trains a dual encoder with the
/// desk-size encoder dimensions.
pub fn train_encoder(pairs: &[MessagePair], config: &RunConfig) -> Result<TrainedModel> {
    let vocab = build_vocab(pairs, config.max_words)?;
    let mut enc = EncoderConfig::desk(config.encoder, vocab.word_slots(), vocab.char_slots());
    enc.char_cnn = config.char_cnn;
    fit(pairs, vocab, enc, &config.train)
}

/// Embeds every phrase with a nonempty encoding and clusters them.
pub fn cluster_corpus(
    freqs: &PhraseFrequencies,
    encoder: &EncoderModel,
    config: &crate::clusterer::ClusterConfig,
) -> Result<ClusterModel> {
    let phrases: Vec<(String, u64)> = freqs
        .top(config.top_phrases)
        .into_iter()
        .filter(|(p, _)| !encoder.encode_text(p).is_empty())
        .collect();
    let texts: Vec<&str> = phrases.iter().map(|p| p.0.as_str()).collect();
    let embeddings: Vec<Vec<f64>> = encoder.embed_many(&texts)?.into_iter().map(|e| e.vector).collect();
    cluster_phrases(&phrases, &embeddings, config)
}

/// One sticker per intent, tagged with the intent's canonical phrase.
pub fn synthetic_catalog(corpus: &SyntheticCorpus) -> Vec<Sticker> {
    corpus
        .intents
        .iter()
        .map(|i| Sticker {
            sticker_id: format!("st{:04}", i.intent_id),
            pack_id: format!("pack{:02}", i.intent_id / 10),
            tags: vec![i.canonical_phrase.clone()],
            label: i.canonical_phrase.clone(),
        })
        .collect()
}

/// Test cases from held-out pairs; the class of `next` comes from `classes`.
pub fn typing_cases(pairs: &[MessagePair], classes: &HashMap<String, usize>) -> Vec<TestCase> {
    pairs
        .iter()
        .map(|p| {
            let next = p.next.phrase();
            TestCase {
                prev: p.current.phrase(),
                cluster: classes.get(&next).map(|&c| c as u32),
                next,
            }
        })
        .collect()
}

/// Which evidence a simulated model ranks by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scorer {
    Hybrid,
    TrieOnly,
    ReplyOnly,
    Full,
}

impl Scorer {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Hybrid => "hybrid",
            Scorer::TrieOnly => "trie",
            Scorer::ReplyOnly => "reply-nn",
            Scorer::Full => "full-nn",
        }
    }
}

/// Runs the typing simulation for one scorer. Reply scores are computed once
/// per distinct previous message.
pub fn evaluate_scorer(
    scorer: Scorer,
    cases: &[TestCase],
    trie: &TypedTrie,
    reply: &ClusterClassifier,
    full: Option<&ClusterClassifier>,
    weights: &CombinerWeights,
    k: usize,
) -> Result<TypingMetrics> {
    let mut reply_cache: HashMap<String, BTreeMap<u32, f64>> = HashMap::new();
    let mut probs_cache: HashMap<String, Vec<u32>> = HashMap::new();
    let empty = BTreeMap::new();
    simulate_typing(scorer.name(), cases, k, |prev, typed| match scorer {
        Scorer::TrieOnly => Ok(predict(&empty, typed, trie, weights, k).0.into_iter().map(|c| c.cluster).collect()),
        Scorer::Hybrid => {
            if !reply_cache.contains_key(prev) {
                reply_cache.insert(prev.to_string(), reply.reply_scores(prev)?);
            }
            let scores = &reply_cache[prev];
            Ok(predict(scores, typed, trie, weights, k).0.into_iter().map(|c| c.cluster).collect())
        }
        Scorer::ReplyOnly => {
            if !probs_cache.contains_key(prev) {
                let out = reply.predict_reply(prev)?;
                let top = if out.degenerate {
                    Vec::new()
                } else {
                    top_k_indices(&out.probs, k).into_iter().map(|c| c as u32).collect()
                };
                probs_cache.insert(prev.to_string(), top);
            }
            Ok(probs_cache[prev].clone())
        }
        Scorer::Full => {
            let model = full.ok_or_else(|| Error::Invalid("no full model trained".into()))?;
            let scores = model.predict_full(prev, typed)?;
            Ok(top_k_indices(&scores, k).into_iter().map(|c| c as u32).collect())
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub clustered_phrases: usize,
    pub num_clusters: usize,
    pub multi_phrase_clusters: usize,
    pub ari: f64,
    pub variant_recall: f64,
    pub sticker_attachments: usize,
    pub final_train_loss: f64,
    pub metrics: Vec<TypingMetrics>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl PipelineReport {
    pub fn metric(&self, name: &str) -> Option<&TypingMetrics> {
        self.metrics.iter().find(|m| m.model_name == name)
    }
}

/// Everything a run produces.
pub struct PipelineRun {
    pub corpus: SyntheticCorpus,
    pub train_pairs: Vec<MessagePair>,
    pub test_cases: Vec<TestCase>,
    pub encoder: TrainedModel,
    pub clusters: ClusterModel,
    pub table: ClassTable,
    pub trie: TypedTrie,
    pub catalog: Vec<Sticker>,
    pub mapping: StickerMapping,
    pub reply: ClusterClassifier,
    pub full: Option<ClusterClassifier>,
    pub report: PipelineReport,
}

/// Runs every stage. With `out`, the corpus, checkpoint, assets and report
/// are written there.
pub fn run_pipeline(config: &RunConfig, out: Option<&Path>) -> Result<PipelineRun> {
    config.validate()?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let corpus = generate_synthetic_corpus(&config.corpus)?;
    let (train_convs, test_convs) = split_conversations(&corpus.conversations(), config.test_fraction, config.seed);
    let train_pairs = extract_pairs(&train_convs);
    let test_pairs = extract_pairs(&test_convs);
    lap("corpus", &mut timings);

    let encoder = train_encoder(&train_pairs, config)?;
    let encoder_model = encoder.encoder_model();
    lap("train", &mut timings);

    let freqs = PhraseFrequencies::from_conversations(&train_convs);
    let clusters = cluster_corpus(&freqs, &encoder_model, &config.cluster)?;
    let table = export_classes(&clusters, config.cluster_cap);
    lap("cluster", &mut timings);

    let trie = TypedTrie::from_class_table(&table)?;
    let catalog = synthetic_catalog(&corpus);
    let mapping = build_mapping(&table, &catalog, &encoder_model, config.sticker_threshold)?;
    lap("assets", &mut timings);

    let classes = table.assignment();
    let g = table.num_clusters().max(2);
    let rcfg = ReplyNetConfig {
        num_clusters: g,
        t_reply: config.reply.t_reply,
        epochs: config.reply.epochs,
        batch_size: config.reply.batch_size,
        learning_rate: config.reply.learning_rate,
        seed: config.seed,
    };
    let (mut reply, _) = train_classifier(
        ClassifierKind::Reply,
        &encoder_model,
        rcfg.clone(),
        &reply_examples(&train_pairs, &classes),
    )?;
    if config.reply.quantize {
        let calib: Vec<String> = calibration_prevs(&train_pairs, 512, config.seed);
        let inputs: Vec<(&str, &str)> = calib.iter().map(|p| (p.as_str(), "")).collect();
        reply = reply.quantize(&inputs)?;
    }
    let full = if config.reply.train_full {
        let (m, _) = train_classifier(
            ClassifierKind::Full,
            &encoder_model,
            rcfg,
            &full_examples(&train_pairs, &classes),
        )?;
        Some(m)
    } else {
        None
    };
    lap("replynet", &mut timings);

    let test_cases = typing_cases(&test_pairs, &classes);
    let mut metrics = Vec::new();
    let mut scorers = vec![Scorer::Hybrid, Scorer::TrieOnly, Scorer::ReplyOnly];
    if full.is_some() {
        scorers.push(Scorer::Full);
    }
    for s in scorers {
        metrics.push(evaluate_scorer(s, &test_cases, &trie, &reply, full.as_ref(), &config.combiner, 3)?);
    }
    let truth: BTreeMap<String, usize> = clusters
        .assignment
        .keys()
        .filter_map(|p| corpus.ground_truth.get(p).map(|&i| (p.clone(), i)))
        .collect();
    let assigned: BTreeMap<String, usize> =
        truth.keys().map(|p| (p.clone(), clusters.assignment[p])).collect();
    let ari = adjusted_rand_index(&assigned, &truth)?;
    let recall = variant_recall(&assigned, &truth);
    lap("eval", &mut timings);

    let report = PipelineReport {
        seed: config.seed,
        train_pairs: train_pairs.len(),
        test_pairs: test_pairs.len(),
        clustered_phrases: clusters.assignment.len(),
        num_clusters: clusters.num_clusters(),
        multi_phrase_clusters: clusters.num_multi(),
        ari,
        variant_recall: recall,
        sticker_attachments: mapping.num_attachments(),
        final_train_loss: encoder.loss_curve.last().map(|x| x.1).unwrap_or(f64::NAN),
        metrics,
        timings,
    };
    let run = PipelineRun {
        corpus,
        train_pairs,
        test_cases,
        encoder,
        clusters,
        table,
        trie,
        catalog,
        mapping,
        reply,
        full,
        report,
    };
    if let Some(dir) = out {
        write_run(&run, config, dir)?;
    }
    Ok(run)
}

fn calibration_prevs(pairs: &[MessagePair], n: usize, seed: u64) -> Vec<String> {
    let mut prevs: Vec<String> = pairs.iter().map(|p| p.current.phrase()).collect();
    prevs.sort_unstable();
    prevs.dedup();
    prevs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    prevs.truncate(n);
    prevs
}

/// Layout: `corpus/`, `model/encoder.ckpt`, `assets/`, `report.json`.
pub fn write_run(run: &PipelineRun, config: &RunConfig, dir: &Path) -> Result<()> {
    let corpus_dir = dir.join("corpus");
    std::fs::create_dir_all(&corpus_dir)?;
    crate::corpus::write_corpus(&corpus_dir.join("corpus.tsv"), &run.corpus.raw_conversations)?;
    crate::corpus::write_ground_truth(&corpus_dir.join("ground_truth.tsv"), &run.corpus.ground_truth)?;
    crate::stickers::write_catalog(&corpus_dir.join("stickers.jsonl"), &run.catalog)?;
    let model_dir = dir.join("model");
    std::fs::create_dir_all(&model_dir)?;
    run.encoder.save(&model_dir.join("encoder.ckpt"))?;
    crate::trainer::write_loss_curve(&model_dir.join("loss.csv"), &run.encoder.loss_curve)?;
    if let Some(f) = &run.full {
        f.save(&model_dir.join("full.ckpt"))?;
    }
    Assets::write(
        &dir.join("assets"),
        &run.trie,
        &run.mapping,
        &run.table,
        &config.combiner,
        Some(&run.reply),
    )?;
    config.save(&dir.join("config.json"))?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&run.report)?)?;
    Ok(())
}

/// Synthetic class table of `n_phrases` distinct phrases spread over
/// `n_clusters` clusters, for latency measurements at deployment scale.
pub fn synthetic_class_table(n_phrases: usize, n_clusters: usize, seed: u64) -> ClassTable {
    const SYLLABLES: &[&str] = &[
        "ka", "ra", "ha", "ma", "na", "ta", "ya", "sa", "la", "pa", "ba", "da", "ga", "ja", "ki", "ri", "hi", "mi",
        "ni", "ti", "su", "lu", "ku", "mo", "no", "to", "go", "be", "de", "se",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut rows = Vec::with_capacity(n_phrases);
    while rows.len() < n_phrases {
        let words = rng.gen_range(1..=4);
        let phrase: Vec<String> = (0..words)
            .map(|_| {
                let syl = rng.gen_range(1..=3);
                (0..syl).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect()
            })
            .collect();
        let phrase = phrase.join(" ");
        if !seen.insert(phrase.clone()) {
            continue;
        }
        let cluster_id = if rows.len() < n_clusters {
            rows.len()
        } else {
            rng.gen_range(0..n_clusters)
        };
        // Zipf-ish frequencies
        let freq = (1_000_000.0 / (rng.gen_range(1.0f64..5000.0))).ceil() as u64;
        rows.push(ClassRow {
            phrase,
            cluster_id,
            freq,
        });
    }
    ClassTable::new(rows)
}

/// Phrase-similarity AUC of an encoder trained on the run's corpus. The
/// pair set covers every surface form the generator knows, including forms
/// absent from the training conversations.
pub fn similarity_experiment(config: &RunConfig, max_positives: usize) -> Result<f64> {
    config.validate()?;
    let corpus = generate_synthetic_corpus(&config.corpus)?;
    let (train_convs, _) = split_conversations(&corpus.conversations(), config.test_fraction, config.seed);
    let pairs = extract_pairs(&train_convs);
    let encoder = train_encoder(&pairs, config)?.encoder_model();
    let set = build_similarity_set(&corpus.ground_truth, config.seed, max_positives)?;
    Ok(similarity_auc(&set, &encoder)?.auc)
}
