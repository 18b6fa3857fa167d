use proptest::prelude::*;

use super::*;

fn trie_result(pairs: &[(u32, f64)]) -> TrieScoreResult {
    TrieScoreResult {
        scores: pairs.iter().copied().collect(),
        matched: pairs.len(),
        empty_match: pairs.is_empty(),
    }
}

#[test]
fn hand_evaluated_example() {
    let w = CombinerWeights {
        w0: 0.1,
        wt: 1.0,
        wp0: 0.5,
        wp1: 1.0,
        lambda: 0.7,
    };
    let ctx = PredictionContext::new([(3, 0.6)], "go");
    let h = combine(&ctx, &trie_result(&[(3, 0.4)]), &w);
    let s = h.scores[&3];
    assert!((s.q - 0.366_308_937_379_562).abs() < 1e-12, "{}", s.q);
    assert_eq!(s.provenance, Provenance::Both);
}

#[test]
fn empty_typed_follows_reply_ranking() {
    let w = CombinerWeights::default();
    let ctx = PredictionContext::new([(0, 0.2), (1, 0.9), (2, 0.5)], "");
    let h = combine(&ctx, &trie_result(&[]), &w);
    for s in h.scores.values() {
        assert_eq!(s.q, (w.w0 + w.wt * s.p_reply) * w.wp0);
        assert_eq!(s.provenance, Provenance::ReplyOnly);
    }
    let order: Vec<u32> = top_k(&h, 3).iter().map(|s| s.cluster).collect();
    assert_eq!(order, vec![1, 2, 0]);
}

#[test]
fn trie_only_cluster_surfaces() {
    let w = CombinerWeights::default();
    let ctx = PredictionContext::new([(0, 0.9)], "m");
    let h = combine(&ctx, &trie_result(&[(5, 1.0)]), &w);
    let s = h.scores[&5];
    assert_eq!(s.provenance, Provenance::TrieOnly);
    assert_eq!(s.q, w.w0 * (w.wp0 * (-w.lambda).exp() + w.wp1));
    assert!(s.q > 0.0);
    assert_eq!(h.scores.len(), 2);
}

#[test]
fn top_k_small_and_ties() {
    let w = CombinerWeights::default();
    let h = combine(&PredictionContext::new([(0, 0.5), (1, 0.3)], ""), &trie_result(&[]), &w);
    assert_eq!(top_k(&h, 3).len(), 2);
    assert!(top_k(&h, 0).is_empty());
    let mut h = HybridScores::default();
    for (c, p_trie) in [(1, 0.2), (2, 0.7), (0, 0.2)] {
        h.scores.insert(
            c,
            ClusterScore {
                cluster: c,
                q: 1.0,
                p_reply: 0.0,
                p_trie,
                provenance: Provenance::TrieOnly,
            },
        );
    }
    let order: Vec<u32> = top_k(&h, 3).iter().map(|s| s.cluster).collect();
    assert_eq!(order, vec![2, 0, 1]);
}

#[test]
fn weights_validated() {
    assert!(CombinerWeights::default().validate().is_ok());
    for bad in [
        CombinerWeights { w0: -0.1, ..Default::default() },
        CombinerWeights { lambda: 0.0, ..Default::default() },
        CombinerWeights { w0: 0.0, wt: 0.0, ..Default::default() },
        CombinerWeights { wp0: 0.0, wp1: 0.0, ..Default::default() },
        CombinerWeights { wt: f64::NAN, ..Default::default() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

#[test]
fn predict_end_to_end() {
    let mut trie = TypedTrie::new();
    trie.insert("me too", 1, 50).unwrap();
    trie.insert("miss you", 2, 30).unwrap();
    trie.insert("love you", 3, 40).unwrap();
    let prev: BTreeMap<u32, f64> = [(3, 0.8), (4, 0.6)].into_iter().collect();
    let w = CombinerWeights::default();
    let (pre, _) = predict(&prev, "", &trie, &w, 3);
    assert_eq!(pre[0].cluster, 3);
    let (ranked, tr) = predict(&prev, "m", &trie, &w, 3);
    assert_eq!(tr.matched, 2);
    assert_eq!(ranked[0].provenance, Provenance::ReplyOnly);
    // typed evidence overtakes the reply-only clusters as more is typed
    let (ranked, _) = predict(&prev, "mis", &trie, &w, 3);
    assert_eq!(ranked[0].cluster, 2);
    assert_eq!(ranked[0].provenance, Provenance::TrieOnly);
    // typing the full dominant phrase puts its cluster first
    let (full, _) = predict(&prev, "miss you", &trie, &w, 3);
    assert_eq!(full[0].cluster, 2);
    // leading spaces and case are normalized away
    assert_eq!(predict(&prev, "  MISS", &trie, &w, 3).0, predict(&prev, "miss", &trie, &w, 3).0);
}

#[test]
fn no_reply_scores_rank_by_trie() {
    let mut trie = TypedTrie::new();
    trie.insert("good morning", 1, 60).unwrap();
    trie.insert("good night", 2, 40).unwrap();
    let (r, _) = predict(&BTreeMap::new(), "good", &trie, &CombinerWeights::default(), 3);
    assert_eq!(r.iter().map(|s| s.cluster).collect::<Vec<_>>(), vec![1, 2]);
}

fn arb_weights() -> impl Strategy<Value = CombinerWeights> {
    (0.01f64..2.0, 0.01f64..2.0, 0.01f64..2.0, 0.01f64..2.0, 0.01f64..2.0)
        .prop_map(|(w0, wt, wp0, wp1, lambda)| CombinerWeights { w0, wt, wp0, wp1, lambda })
}

proptest! {
    #[test]
    fn matches_direct_formula(w in arb_weights(), pr in 0.0f64..1.0, pt in 0.0f64..1.0, typed in "[a-z]{0,12}") {
        let ctx = PredictionContext::new([(0, pr)], &typed);
        let h = combine(&ctx, &trie_result(&[(0, pt)]), &w);
        let nc = typed.chars().count() as f64;
        let direct = (w.w0 + w.wt * pr) * (w.wp0 * (-w.lambda * nc).exp() + w.wp1 * pt);
        prop_assert_eq!(h.scores[&0].q.to_bits(), direct.to_bits());
    }

    #[test]
    fn reply_only_decays(w in arb_weights(), pr in 0.0f64..1.0, nc in 0usize..30) {
        prop_assert!(w.q(pr, 0.0, nc + 1) < w.q(pr, 0.0, nc));
    }

    #[test]
    fn scores_nonnegative_and_covering(
        w in arb_weights(),
        reply in prop::collection::btree_map(0u32..20, 0.0f64..1.0, 0..8),
        trie in prop::collection::btree_map(0u32..20, 0.01f64..1.0, 0..8),
    ) {
        let ctx = PredictionContext { prev_scores: reply.clone(), typed: "ab".into() };
        let tr = TrieScoreResult { scores: trie.clone(), matched: trie.len(), empty_match: trie.is_empty() };
        let h = combine(&ctx, &tr, &w);
        prop_assert!(h.scores.values().all(|s| s.q >= 0.0));
        let keys: std::collections::BTreeSet<u32> = reply.keys().chain(trie.keys()).copied().collect();
        prop_assert_eq!(h.scores.keys().copied().collect::<std::collections::BTreeSet<_>>(), keys);
        prop_assert_eq!(&h, &combine(&ctx, &tr, &w));
    }

    #[test]
    fn top_k_is_sorted_prefix(
        entries in prop::collection::vec((0u32..50, 0u8..4, 0u8..3), 0..40),
        k in 1usize..6,
    ) {
        let mut h = HybridScores::default();
        for (c, q, t) in entries {
            h.scores.insert(c, ClusterScore { cluster: c, q: q as f64, p_reply: 0.0, p_trie: t as f64, provenance: Provenance::Both });
        }
        let mut all: Vec<ClusterScore> = h.scores.values().copied().collect();
        all.sort_by(|a, b| b.q.partial_cmp(&a.q).unwrap().then(b.p_trie.partial_cmp(&a.p_trie).unwrap()).then(a.cluster.cmp(&b.cluster)));
        all.truncate(k);
        prop_assert_eq!(top_k(&h, k), all);
    }

    #[test]
    fn scaling_reply_keeps_order(
        reply in prop::collection::btree_map(0u32..20, 0.01f64..1.0, 1..10),
        c in 0.1f64..10.0,
        nc in 0usize..5,
    ) {
        let w = CombinerWeights { w0: 0.0, ..Default::default() };
        let typed: String = "x".repeat(nc);
        let a = combine(&PredictionContext { prev_scores: reply.clone(), typed: typed.clone() }, &trie_result(&[]), &w);
        let scaled = reply.iter().map(|(&k, &v)| (k, v * c)).collect();
        let b = combine(&PredictionContext { prev_scores: scaled, typed }, &trie_result(&[]), &w);
        let ids = |h: &HybridScores| top_k(h, 3).iter().map(|s| s.cluster).collect::<Vec<_>>();
        prop_assert_eq!(ids(&a), ids(&b));
    }
}
