use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sr_core::assets::Assets;
use sr_core::clusterer::{export_classes, ClassTable, ClusterConfig};
use sr_core::config::RunConfig;
use sr_core::corpus::{
    build_vocab, extract_pairs, generate_synthetic_corpus, read_corpus, read_ground_truth, write_corpus,
    write_ground_truth, Conversation, PhraseFrequencies, SyntheticConfig,
};
use sr_core::embedder::{EncoderConfig, EncoderKind};
use sr_core::eval::{adjusted_rand_index, build_similarity_set, render_table, similarity_auc};
use sr_core::hybrid::CombinerWeights;
use sr_core::pipeline::{cluster_corpus, evaluate_scorer, run_pipeline, split_conversations, synthetic_catalog, typing_cases, Scorer};
use sr_core::replynet::{
    full_examples, quantization_report, reply_examples, top_k_accuracy, train_classifier, ClassifierKind, ClusterClassifier,
    ReplyNetConfig,
};
use sr_core::stickers::{build_mapping, read_catalog, read_feedback, refresh_from_feedback, write_catalog, StickerMapping};
use sr_core::trainer::{fit, write_loss_curve, TrainConfig, TrainedModel};
use sr_core::trie::TypedTrie;

use crate::{AssetsCmd, ClusterArgs, Command, CorpusCmd, EvalCmd, Kind, OnOff, PipelineArgs, ReplynetCmd, ServeArgs, TrainArgs};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Corpus(c) => corpus(c),
        Command::Train(a) => train(a),
        Command::Cluster(a) => cluster(a),
        Command::Assets(c) => assets(c),
        Command::Replynet(c) => replynet(c),
        Command::Eval(c) => eval(c),
        Command::Serve(a) => serve(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

/// The training conversations of a corpus directory: `train.tsv` when
/// present, else `corpus.tsv`.
fn training_corpus(dir: &Path) -> Result<Vec<Conversation>> {
    let train = dir.join("train.tsv");
    let path = if train.exists() { train } else { dir.join("corpus.tsv") };
    read_corpus(&path).with_context(|| format!("reading {}", path.display()))
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn corpus(cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Gen {
            seed,
            intents,
            conversations,
            test_fraction,
            out,
        } => {
            let corpus = generate_synthetic_corpus(&SyntheticConfig {
                seed,
                n_intents: intents,
                n_conversations: conversations,
                ..SyntheticConfig::default()
            })?;
            std::fs::create_dir_all(&out)?;
            write_corpus(&out.join("corpus.tsv"), &corpus.raw_conversations)?;
            let convs = corpus.conversations();
            let (train, test) = split_conversations(&convs, test_fraction, seed);
            let raw = |cs: &[Conversation]| -> Vec<Vec<String>> {
                cs.iter().map(|c| c.iter().map(|m| m.raw.clone()).collect()).collect()
            };
            write_corpus(&out.join("train.tsv"), &raw(&train))?;
            write_corpus(&out.join("test.tsv"), &raw(&test))?;
            write_ground_truth(&out.join("ground_truth.tsv"), &corpus.ground_truth)?;
            write_catalog(&out.join("stickers.jsonl"), &synthetic_catalog(&corpus))?;
            log::info!(
                "{} conversations ({} train, {} test), {} surface forms -> {}",
                convs.len(),
                train.len(),
                test.len(),
                corpus.ground_truth.len(),
                out.display()
            );
        }
        CorpusCmd::Prep { input, out, max_words } => {
            let convs = read_corpus(&input)?;
            let pairs = extract_pairs(&convs);
            let vocab = build_vocab(&pairs, max_words)?;
            std::fs::create_dir_all(&out)?;
            let normalized: Vec<Vec<String>> = convs.iter().map(|c| c.iter().map(|m| m.phrase()).collect()).collect();
            write_corpus(&out.join("corpus.tsv"), &normalized)?;
            let mut lines = String::new();
            for p in &pairs {
                lines.push_str(&format!("{}\t{}\n", p.current.phrase(), p.next.phrase()));
            }
            std::fs::write(out.join("pairs.tsv"), lines)?;
            vocab.save(&out.join("vocab.json"))?;
            PhraseFrequencies::from_conversations(&convs).save(&out.join("phrases.tsv"))?;
            log::info!("{} pairs, {} word slots -> {}", pairs.len(), vocab.word_slots(), out.display());
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let kind: EncoderKind = a.encoder.parse()?;
    let convs = training_corpus(&a.corpus)?;
    let pairs = extract_pairs(&convs);
    let vocab = build_vocab(&pairs, a.max_words)?;
    let (mut enc, mut cfg) = if a.full_size {
        (EncoderConfig::full_size(kind, vocab.word_slots(), vocab.char_slots()), TrainConfig::full_size(kind))
    } else {
        (EncoderConfig::desk(kind, vocab.word_slots(), vocab.char_slots()), TrainConfig::desk(kind))
    };
    enc.char_cnn = matches!(a.charcnn, OnOff::On);
    cfg.seed = a.seed;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    log::info!("training {kind:?} (charcnn {}) on {} pairs", enc.char_cnn, pairs.len());
    let model = fit(&pairs, vocab, enc, &cfg)?;
    model.save(&a.out)?;
    let curve = a.out.with_extension("loss.csv");
    write_loss_curve(&curve, &model.loss_curve)?;
    log::info!(
        "final loss {:.4}; checkpoint {}, loss curve {}",
        model.loss_curve.last().map(|x| x.1).unwrap_or(f64::NAN),
        a.out.display(),
        curve.display()
    );
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let encoder = TrainedModel::load(&a.model)?.encoder_model();
    let freqs = PhraseFrequencies::from_conversations(&training_corpus(&a.corpus)?);
    let config = ClusterConfig {
        min_cluster_size: a.min_cluster_size,
        top_phrases: a.top_phrases,
    };
    let model = cluster_corpus(&freqs, &encoder, &config)?;
    let table = export_classes(&model, a.cap);
    table.save(&a.out)?;
    log::info!(
        "{} phrases in {} clusters ({} with several phrases); kept {} clusters -> {}",
        model.assignment.len(),
        model.num_clusters(),
        model.num_multi(),
        table.num_clusters(),
        a.out.display()
    );
    Ok(())
}

fn assets(cmd: AssetsCmd) -> Result<()> {
    match cmd {
        AssetsCmd::BuildTrie { clusters, out } => {
            let trie = TypedTrie::from_class_table(&ClassTable::load(&clusters)?)?;
            trie.save(&out)?;
            log::info!("{} phrases, {} nodes -> {}", trie.len(), trie.node_count(), out.display());
        }
        AssetsCmd::BuildStickers {
            clusters,
            catalog,
            model,
            threshold,
            out,
        } => {
            let encoder = TrainedModel::load(&model)?.encoder_model();
            let mapping = build_mapping(&ClassTable::load(&clusters)?, &read_catalog(&catalog)?, &encoder, threshold)?;
            mapping.save(&out)?;
            log::info!(
                "{} attachments over {} clusters -> {}",
                mapping.num_attachments(),
                mapping.clusters.len(),
                out.display()
            );
        }
        AssetsCmd::RefreshStickers { stickers, feedback, out } => {
            let (mapping, ignored) = refresh_from_feedback(&StickerMapping::load(&stickers)?, &read_feedback(&feedback)?);
            mapping.save(&out)?;
            log::info!("refreshed -> {} ({ignored} events ignored)", out.display());
        }
        AssetsCmd::Combiner {
            w0,
            wt,
            wp0,
            wp1,
            lambda,
            out,
        } => {
            let w = CombinerWeights { w0, wt, wp0, wp1, lambda };
            w.validate()?;
            std::fs::write(&out, serde_json::to_vec_pretty(&w)?)?;
        }
        AssetsCmd::Inspect { dir } => {
            let a = Assets::load(&dir)?;
            print_json(&serde_json::json!({
                "version": a.version,
                "phrases": a.trie.len(),
                "clusters": a.table.num_clusters(),
                "sticker_attachments": a.mapping.num_attachments(),
                "combiner": a.weights,
                "reply_model": a.reply.as_ref().map(|r| serde_json::json!({
                    "clusters": r.num_clusters(),
                    "quantized": r.is_quantized(),
                })),
                "bytes": a.files.named().iter().map(|(n, b)| (n.to_string(), b.len())).collect::<BTreeMap<_, _>>(),
            }))?;
        }
    }
    Ok(())
}

fn classes_of(path: &Path) -> Result<(ClassTable, HashMap<String, usize>)> {
    let table = ClassTable::load(path)?;
    let classes = table.assignment();
    Ok((table, classes))
}

fn calibration_inputs(corpus: &Path, n: usize) -> Result<Vec<String>> {
    let mut prevs: Vec<String> = extract_pairs(&training_corpus(corpus)?)
        .iter()
        .map(|p| p.current.phrase())
        .collect();
    prevs.sort_unstable();
    prevs.dedup();
    prevs.truncate(n);
    Ok(prevs)
}

fn replynet(cmd: ReplynetCmd) -> Result<()> {
    match cmd {
        ReplynetCmd::Train {
            model,
            corpus,
            clusters,
            kind,
            epochs,
            t_reply,
            seed,
            out,
        } => {
            let encoder = TrainedModel::load(&model)?.encoder_model();
            let (table, classes) = classes_of(&clusters)?;
            let pairs = extract_pairs(&training_corpus(&corpus)?);
            let (kind, examples) = match kind {
                Kind::Reply => (ClassifierKind::Reply, reply_examples(&pairs, &classes)),
                Kind::Full => (ClassifierKind::Full, full_examples(&pairs, &classes)),
            };
            let config = ReplyNetConfig {
                t_reply,
                epochs,
                seed,
                ..ReplyNetConfig::new(table.num_clusters())
            };
            let (m, curve) = train_classifier(kind, &encoder, config, &examples)?;
            m.save(&out)?;
            log::info!(
                "{} examples, final loss {:.4}, top-3 accuracy {:.3} -> {}",
                examples.len(),
                curve.last().copied().unwrap_or(f64::NAN),
                top_k_accuracy(&m, &examples, 3)?,
                out.display()
            );
        }
        ReplynetCmd::Quantize {
            input,
            corpus,
            calibration,
            out,
        } => {
            let float = ClusterClassifier::load(&input)?;
            let prevs = calibration_inputs(&corpus, calibration)?;
            let inputs: Vec<(&str, &str)> = prevs.iter().map(|p| (p.as_str(), "")).collect();
            let q = float.quantize(&inputs)?;
            q.save(&out)?;
            print_json(&quantization_report(&float, &q, &inputs)?)?;
        }
        ReplynetCmd::Eval {
            model,
            corpus,
            clusters,
            float,
        } => {
            let m = ClusterClassifier::load(&model)?;
            let (_, classes) = classes_of(&clusters)?;
            let pairs = extract_pairs(&read_corpus(&corpus)?);
            let examples = match m.kind {
                ClassifierKind::Reply => reply_examples(&pairs, &classes),
                ClassifierKind::Full => full_examples(&pairs, &classes),
            };
            let mut report = serde_json::json!({
                "examples": examples.len(),
                "top3_accuracy": top_k_accuracy(&m, &examples, 3)?,
            });
            if let Some(f) = float {
                let f = ClusterClassifier::load(&f)?;
                let inputs: Vec<(&str, &str)> = examples.iter().map(|e| (e.prev.as_str(), e.typed.as_str())).collect();
                report["quantization"] = serde_json::to_value(quantization_report(&f, &m, &inputs)?)?;
            }
            print_json(&report)?;
        }
    }
    Ok(())
}

fn eval(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Similarity {
            model,
            ground_truth,
            seed,
            max_positives,
        } => {
            let encoder = TrainedModel::load(&model)?.encoder_model();
            let set = build_similarity_set(&read_ground_truth(&ground_truth)?, seed, max_positives)?;
            let roc = similarity_auc(&set, &encoder)?;
            print_json(&serde_json::json!({
                "pairs": set.len(),
                "similar": set.iter().filter(|p| p.similar).count(),
                "auc": roc.auc,
                "curve": roc.points,
            }))?;
        }
        EvalCmd::Clusters { clusters, ground_truth } => {
            let table = ClassTable::load(&clusters)?;
            let truth = read_ground_truth(&ground_truth)?;
            let assigned: BTreeMap<String, usize> = table
                .rows
                .iter()
                .filter(|r| truth.contains_key(&r.phrase))
                .map(|r| (r.phrase.clone(), r.cluster_id))
                .collect();
            let truth: BTreeMap<String, usize> = assigned.keys().map(|p| (p.clone(), truth[p])).collect();
            print_json(&serde_json::json!({
                "phrases": assigned.len(),
                "ari": adjusted_rand_index(&assigned, &truth)?,
                "variant_recall": sr_core::eval::variant_recall(&assigned, &truth),
            }))?;
        }
        EvalCmd::Typing {
            assets,
            test,
            full,
            k,
            out,
        } => {
            let a = Assets::load(&assets)?;
            let Some(reply) = a.reply.as_ref() else {
                bail!("{} has no reply model", assets.display());
            };
            let full = full.map(|p| ClusterClassifier::load(&p)).transpose()?;
            let cases = typing_cases(&extract_pairs(&read_corpus(&test)?), &a.table.assignment());
            let mut rows = Vec::new();
            let mut scorers = vec![Scorer::Hybrid, Scorer::TrieOnly, Scorer::ReplyOnly];
            if full.is_some() {
                scorers.push(Scorer::Full);
            }
            for s in scorers {
                rows.push(evaluate_scorer(s, &cases, &a.trie, reply, full.as_ref(), &a.weights, k)?);
            }
            print!("{}", render_table(&rows));
            if let Some(out) = out {
                std::fs::write(&out, serde_json::to_string_pretty(&rows)?)?;
            }
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let dir: PathBuf = sr_service::resolve_assets_dir(a.assets, &a.geo);
    let addr = format!("{}:{}", a.host, a.port).parse().context("bad host or port")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(sr_service::serve(sr_service::ServeConfig {
        assets: dir,
        addr,
        geo: a.geo,
        cache_capacity: a.cache,
    }))?;
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let config = match a.config {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::desk(a.seed),
    };
    let run = run_pipeline(&config, Some(&a.out))?;
    let r = &run.report;
    log::info!(
        "{} clusters over {} phrases, ARI {:.3}; outputs in {}",
        r.num_clusters,
        r.clustered_phrases,
        r.ari,
        a.out.display()
    );
    print!("{}", render_table(&r.metrics));
    Ok(())
}
