//! Phrase-similarity AUC for each encoder kind with and without CharCNN.
//!
//! cargo run --release -p sr-core --example auc_run -- 1 2 3

use sr_core::config::RunConfig;
use sr_core::corpus::SyntheticConfig;
use sr_core::embedder::EncoderKind;
use sr_core::pipeline::similarity_experiment;
use sr_core::trainer::TrainConfig;

fn main() -> sr_core::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    for seed in if seeds.is_empty() { vec![1] } else { seeds } {
        for kind in [EncoderKind::Transformer, EncoderKind::Gru] {
            let mut aucs = Vec::new();
            for cnn in [false, true] {
                let mut cfg = RunConfig::desk(seed);
                cfg.encoder = kind;
                cfg.char_cnn = cnn;
                cfg.corpus = SyntheticConfig { seed, ..SyntheticConfig::default() };
                cfg.test_fraction = 0.0;
                cfg.train = TrainConfig { seed, ..TrainConfig::desk(kind) };
                let t = std::time::Instant::now();
                aucs.push(similarity_experiment(&cfg, 3341)?);
                eprintln!("seed {seed} {kind:?} cnn={cnn} auc {:.4} ({:.1}s)", aucs.last().unwrap(), t.elapsed().as_secs_f64());
            }
            println!("seed {seed} {kind:?}: {:.4} -> {:.4} (gain {:+.4})", aucs[0], aucs[1], aucs[1] - aucs[0]);
        }
    }
    Ok(())
}
