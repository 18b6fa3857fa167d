//! Combines server-side reply scores with client-side trie scores into one
//! score per cluster and ranks them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::normalize_typed;
use crate::error::{Error, Result};
use crate::trie::{TrieScoreResult, TypedTrie};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinerWeights {
    pub w0: f64,
    pub wt: f64,
    pub wp0: f64,
    pub wp1: f64,
    pub lambda: f64,
}

impl Default for CombinerWeights {
    fn default() -> Self {
        CombinerWeights {
            w0: 0.1,
            wt: 1.0,
            wp0: 0.5,
            wp1: 1.0,
            lambda: 0.7,
        }
    }
}

impl CombinerWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w0, self.wt, self.wp0, self.wp1, self.lambda];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("combiner weights must be finite and >= 0: {self:?}")));
        }
        if self.lambda <= 0.0 {
            return Err(Error::Config("combiner lambda must be > 0".into()));
        }
        if self.w0 + self.wt <= 0.0 || self.wp0 + self.wp1 <= 0.0 {
            return Err(Error::Config("w0 + wt and wp0 + wp1 must be > 0".into()));
        }
        Ok(())
    }

    /// Q = (w0 + wt·P_reply) · (wp0·e^(−λ·nc) + wp1·P_trie)
    #[inline]
    pub fn q(&self, p_reply: f64, p_trie: f64, nc: usize) -> f64 {
        (self.w0 + self.wt * p_reply) * (self.wp0 * (-self.lambda * nc as f64).exp() + self.wp1 * p_trie)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ReplyOnly,
    TrieOnly,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub cluster: u32,
    pub q: f64,
    pub p_reply: f64,
    pub p_trie: f64,
    pub provenance: Provenance,
}

/// Scores for every cluster present in either source.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HybridScores {
    pub scores: BTreeMap<u32, ClusterScore>,
}

/// What the client knows when a key is pressed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionContext {
    /// Reply scores shipped with the last received message; absent clusters
    /// count as 0.
    pub prev_scores: BTreeMap<u32, f64>,
    pub typed: String,
}

impl PredictionContext {
    pub fn new(prev_scores: impl IntoIterator<Item = (u32, f64)>, typed: &str) -> Self {
        PredictionContext {
            prev_scores: prev_scores.into_iter().collect(),
            typed: typed.to_string(),
        }
    }

    /// Characters typed.
    pub fn nc(&self) -> usize {
        self.typed.chars().count()
    }
}

pub fn combine(ctx: &PredictionContext, trie: &TrieScoreResult, weights: &CombinerWeights) -> HybridScores {
    let nc = ctx.nc();
    let mut scores = BTreeMap::new();
    for (&c, &p_reply) in &ctx.prev_scores {
        let p_trie = trie.score(c);
        let provenance = if trie.scores.contains_key(&c) {
            Provenance::Both
        } else {
            Provenance::ReplyOnly
        };
        scores.insert(
            c,
            ClusterScore {
                cluster: c,
                q: weights.q(p_reply, p_trie, nc),
                p_reply,
                p_trie,
                provenance,
            },
        );
    }
    for (&c, &p_trie) in &trie.scores {
        scores.entry(c).or_insert_with(|| ClusterScore {
            cluster: c,
            q: weights.q(0.0, p_trie, nc),
            p_reply: 0.0,
            p_trie,
            provenance: Provenance::TrieOnly,
        });
    }
    HybridScores { scores }
}

/// Ranking order: higher Q, then higher P_trie, then lower cluster id.
pub fn rank_order(a: &ClusterScore, b: &ClusterScore) -> std::cmp::Ordering {
    b.q.total_cmp(&a.q)
        .then(b.p_trie.total_cmp(&a.p_trie))
        .then(a.cluster.cmp(&b.cluster))
}

/// The `k` best clusters in ranking order.
pub fn top_k(scores: &HybridScores, k: usize) -> Vec<ClusterScore> {
    let mut v: Vec<ClusterScore> = scores.scores.values().copied().collect();
    if k == 0 {
        return Vec::new();
    }
    if v.len() > k {
        v.select_nth_unstable_by(k - 1, rank_order);
        v.truncate(k);
    }
    v.sort_by(rank_order);
    v
}

/// One keystroke: normalize the typed text, score it against the trie,
/// combine with the reply scores and rank.
pub fn predict(
    prev_scores: &BTreeMap<u32, f64>,
    typed: &str,
    trie: &TypedTrie,
    weights: &CombinerWeights,
    k: usize,
) -> (Vec<ClusterScore>, TrieScoreResult) {
    let typed = normalize_typed(typed);
    let trie_result = if typed.is_empty() {
        TrieScoreResult {
            empty_match: true,
            ..Default::default()
        }
    } else {
        trie.trie_scores(&typed)
    };
    let ctx = PredictionContext {
        prev_scores: prev_scores.clone(),
        typed,
    };
    let ranked = top_k(&combine(&ctx, &trie_result, weights), k);
    (ranked, trie_result)
}

#[cfg(test)]
mod tests;
