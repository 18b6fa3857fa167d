//! Runs the desk pipeline for one seed and prints the report.
//!
//! cargo run --release -p sr-core --example desk_run -- 1

use sr_core::config::RunConfig;
use sr_core::eval::render_table;
use sr_core::pipeline::run_pipeline;

fn main() -> sr_core::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let run = run_pipeline(&RunConfig::desk(seed), None)?;
    let r = &run.report;
    println!("{}", serde_json::to_string_pretty(&r.timings)?);
    println!(
        "pairs {} / {}  phrases {}  clusters {} (multi {})  ARI {:.3}  recall {:.3}  stickers {}  loss {:.3}",
        r.train_pairs,
        r.test_pairs,
        r.clustered_phrases,
        r.num_clusters,
        r.multi_phrase_clusters,
        r.ari,
        r.variant_recall,
        r.sticker_attachments,
        r.final_train_loss
    );
    print!("{}", render_table(&r.metrics));
    Ok(())
}
