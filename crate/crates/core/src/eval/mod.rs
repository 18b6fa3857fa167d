//! Measurements: phrase-similarity ROC/AUC, clustering agreement with ground
//! truth, and the typing simulation behind the message-prediction metrics.

mod typing;

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use typing::{render_table, simulate_typing, TestCase, TypingMetrics};

use crate::embedder::EncoderModel;
use crate::error::{Error, Result};
use crate::nn::cosine;

/// Negatives per positive in the similarity set (3341 similar vs 2437
/// non-similar pairs in the reference annotation).
pub const NEGATIVE_RATIO: f64 = 2437.0 / 3341.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhrasePair {
    pub a: String,
    pub b: String,
    pub similar: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub auc: f64,
    /// (false positive rate, true positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
}

/// AUC by the rank-sum formulation: the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> Result<RocCurve> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Invalid("ROC needs both similar and non-similar pairs".into()));
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Invalid("NaN score".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // average ranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    let auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
    // curve: sweep thresholds from high to low
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut k = all.len();
    while k > 0 {
        let s = all[k - 1].0;
        while k > 0 && all[k - 1].0 == s {
            if all[k - 1].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k -= 1;
        }
        points.push((fp / nn, tp / np));
    }
    Ok(RocCurve { auc, points })
}

/// Cosine similarity of each pair's embeddings, then ROC.
pub fn similarity_auc(pairs: &[PhrasePair], encoder: &EncoderModel) -> Result<RocCurve> {
    let mut texts: Vec<&str> = pairs.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()]).collect();
    texts.sort_unstable();
    texts.dedup();
    let embedded = encoder.embed_many(&texts)?;
    let vec_of: HashMap<&str, &Vec<f64>> = texts.iter().copied().zip(embedded.iter().map(|e| &e.vector)).collect();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for p in pairs {
        let s = cosine(vec_of[p.a.as_str()], vec_of[p.b.as_str()]);
        if p.similar {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    roc_auc(&pos, &neg)
}

/// Labeled phrase pairs from a phrase→intent map: similar pairs are two
/// surface forms of one intent, non-similar pairs are drawn at random across
/// intents. At most `max_positives` similar pairs are kept; negatives follow
/// [`NEGATIVE_RATIO`].
pub fn build_similarity_set(ground_truth: &BTreeMap<String, usize>, seed: u64, max_positives: usize) -> Result<Vec<PhrasePair>> {
    let mut by_intent: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (p, &i) in ground_truth {
        by_intent.entry(i).or_default().push(p);
    }
    if by_intent.len() < 2 {
        return Err(Error::Invalid("similarity set needs at least two intents".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives = Vec::new();
    for phrases in by_intent.values() {
        for (x, a) in phrases.iter().enumerate() {
            for b in &phrases[x + 1..] {
                positives.push(PhrasePair {
                    a: a.to_string(),
                    b: b.to_string(),
                    similar: true,
                });
            }
        }
    }
    positives.shuffle(&mut rng);
    positives.truncate(max_positives);
    let want = (positives.len() as f64 * NEGATIVE_RATIO).round() as usize;
    let phrases: Vec<(&str, usize)> = ground_truth.iter().map(|(p, &i)| (p.as_str(), i)).collect();
    let mut seen = std::collections::HashSet::new();
    let mut negatives = Vec::with_capacity(want);
    let mut attempts = 0usize;
    while negatives.len() < want && attempts < want * 50 + 1000 {
        attempts += 1;
        let (a, ia) = phrases[rng.gen_range(0..phrases.len())];
        let (b, ib) = phrases[rng.gen_range(0..phrases.len())];
        if ia == ib {
            continue;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if seen.insert(key) {
            negatives.push(PhrasePair {
                a: key.0.to_string(),
                b: key.1.to_string(),
                similar: false,
            });
        }
    }
    let mut out = positives;
    out.extend(negatives);
    Ok(out)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index<K: Ord + std::fmt::Debug>(a: &BTreeMap<K, usize>, b: &BTreeMap<K, usize>) -> Result<f64> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::Invalid("partitions cover different items".into()));
    }
    let n = a.len() as f64;
    if a.len() < 2 {
        return Ok(1.0);
    }
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (k, &x) in a {
        let y = b[k];
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = rows.values().map(|&v| c2(v)).sum();
    let sb: f64 = cols.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n);
    let max = (sa + sb) / 2.0;
    if max == expected {
        // both partitions trivial in the same way
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Fraction of intents (with at least two clustered surface forms) whose
/// forms all share one cluster.
pub fn variant_recall(assignment: &BTreeMap<String, usize>, ground_truth: &BTreeMap<String, usize>) -> f64 {
    let mut by_intent: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (p, &c) in assignment {
        if let Some(&i) = ground_truth.get(p) {
            by_intent.entry(i).or_default().push(c);
        }
    }
    let eligible: Vec<&Vec<usize>> = by_intent.values().filter(|v| v.len() >= 2).collect();
    if eligible.is_empty() {
        return 1.0;
    }
    let whole = eligible.iter().filter(|v| v.iter().all(|&c| c == v[0])).count();
    whole as f64 / eligible.len() as f64
}

#[cfg(test)]
mod tests;
