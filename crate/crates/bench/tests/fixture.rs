use sr_bench::{fixture, CLUSTERS, PHRASES};

#[test]
fn fixture_has_deployment_scale() {
    let f = fixture(5);
    assert_eq!(f.trie.len(), PHRASES);
    let clusters: std::collections::BTreeSet<u32> = f.trie.entries().iter().map(|m| m.cluster_id).collect();
    assert_eq!(clusters.len(), CLUSTERS);
    assert_eq!(f.prefixes.len(), 1000);
    assert!(!f.prev_scores.is_empty());
}

#[test]
fn fixture_is_deterministic() {
    let (a, b) = (fixture(9), fixture(9));
    assert_eq!(a.prefixes, b.prefixes);
    assert_eq!(a.prev_scores, b.prev_scores);
    assert_eq!(a.trie.to_bytes().unwrap(), b.trie.to_bytes().unwrap());
}
