//! Deployment-scale fixtures for the keystroke benchmarks: 34k phrases in
//! 7.5k clusters, reply scores over a slice of them, and typed prefixes
//! sampled from stored phrases.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sr_core::pipeline::synthetic_class_table;
use sr_core::trie::TypedTrie;

pub const PHRASES: usize = 34_000;
pub const CLUSTERS: usize = 7_500;

pub struct Fixture {
    pub trie: TypedTrie,
    pub prev_scores: BTreeMap<u32, f64>,
    pub prefixes: Vec<String>,
}

pub fn fixture(seed: u64) -> Fixture {
    let table = synthetic_class_table(PHRASES, CLUSTERS, seed);
    let trie = TypedTrie::from_class_table(&table).expect("synthetic table is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // a server ships the handful of clusters above the reply threshold
    let prev_scores = (0..20)
        .map(|_| (rng.gen_range(0..CLUSTERS as u32), rng.gen_range(0.1..1.0)))
        .collect();
    let prefixes = (0..1000)
        .map(|_| {
            let p = &table.rows[rng.gen_range(0..table.rows.len())].phrase;
            let n = rng.gen_range(0..=p.chars().count());
            p.chars().take(n).collect()
        })
        .collect();
    Fixture {
        trie,
        prev_scores,
        prefixes,
    }
}
