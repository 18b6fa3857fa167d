mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "sr", version, about = "Type-ahead sticker recommendation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or preprocess chat corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Train a message encoder on (message, reply) pairs.
    Train(TrainArgs),
    /// Embed and cluster corpus phrases into a class table.
    Cluster(ClusterArgs),
    /// Build client assets.
    #[command(subcommand)]
    Assets(AssetsCmd),
    /// Cluster classifiers over a trained encoder.
    #[command(subcommand)]
    Replynet(ReplynetCmd),
    /// Measurements.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Serve predictions over HTTP.
    Serve(ServeArgs),
    /// Run every stage on a synthetic corpus.
    Pipeline(PipelineArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Synthetic corpus with ground-truth intents and a sticker catalog.
    Gen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        intents: usize,
        #[arg(long, default_value_t = 50)]
        conversations: usize,
        /// Share of conversations written to test.tsv instead of train.tsv.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalize a corpus file and write pairs, vocabulary and phrase counts.
    Prep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        max_words: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "transformer")]
    encoder: String,
    #[arg(long, value_enum, default_value = "on")]
    charcnn: OnOff,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Full-size dimensions and optimizer settings instead of the small defaults.
    #[arg(long)]
    full_size: bool,
    #[arg(long, default_value_t = 50_000)]
    max_words: usize,
}

#[derive(clap::Args)]
struct ClusterArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 5)]
    min_cluster_size: usize,
    #[arg(long, default_value_t = 34_000)]
    top_phrases: usize,
    #[arg(long, default_value_t = 7_500)]
    cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AssetsCmd {
    /// Class table TSV to the binary trie.
    BuildTrie {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach catalog stickers to clusters by tag similarity.
    BuildStickers {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = sr_core::stickers::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-rank a sticker map from shown/sent feedback.
    RefreshStickers {
        #[arg(long)]
        stickers: PathBuf,
        #[arg(long)]
        feedback: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write combiner weights.
    Combiner {
        #[arg(long, default_value_t = 0.1)]
        w0: f64,
        #[arg(long, default_value_t = 1.0)]
        wt: f64,
        #[arg(long, default_value_t = 0.5)]
        wp0: f64,
        #[arg(long, default_value_t = 1.0)]
        wp1: f64,
        #[arg(long, default_value_t = 0.7)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the version and sizes of an asset directory.
    Inspect {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Reply,
    Full,
}

#[derive(Subcommand)]
enum ReplynetCmd {
    /// Train the reply classifier, or the full baseline, over a frozen encoder.
    Train {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long, value_enum, default_value = "reply")]
        kind: Kind,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        t_reply: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Post-training int8 quantization calibrated on corpus messages.
    Quantize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 512)]
        calibration: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-3 accuracy, and fidelity against a float model when given.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        float: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Phrase-similarity ROC/AUC of an encoder.
    Similarity {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3341)]
        max_positives: usize,
    },
    /// Adjusted Rand index of a class table against ground truth.
    Clusters {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
    },
    /// Typing simulation over held-out conversations.
    Typing {
        #[arg(long)]
        assets: PathBuf,
        /// Corpus file of held-out conversations.
        #[arg(long)]
        test: PathBuf,
        /// Also evaluate a prev+typed classifier.
        #[arg(long)]
        full: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Write the metrics JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, default_value = "assets")]
    assets: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "default")]
    geo: String,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = sr_service::DEFAULT_CACHE_CAPACITY)]
    cache: usize,
}

#[derive(clap::Args)]
struct PipelineArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Run configuration JSON; desk defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    commands::run(cli.command)
}
