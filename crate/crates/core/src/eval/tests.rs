use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::hybrid::{predict, CombinerWeights};
use crate::trie::TypedTrie;

fn labels(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    pairs.iter().map(|(p, c)| (p.to_string(), *c)).collect()
}

#[test]
fn auc_example_with_ranks() {
    let r = roc_auc(&[0.9, 0.8], &[0.85, 0.1]).unwrap();
    // concordant pairs: (0.9,0.85) (0.9,0.1) (0.8,0.1); (0.8,0.85) is discordant
    assert!((r.auc - 0.75).abs() < 1e-12);
    assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
    assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
}

#[test]
fn auc_ties_count_half() {
    assert_eq!(roc_auc(&[0.5], &[0.5]).unwrap().auc, 0.5);
    assert_eq!(roc_auc(&[1.0, 1.0], &[0.0]).unwrap().auc, 1.0);
    assert_eq!(roc_auc(&[0.0], &[1.0, 1.0]).unwrap().auc, 0.0);
}

#[test]
fn auc_needs_both_classes() {
    assert!(roc_auc(&[0.1, 0.2], &[]).is_err());
    assert!(roc_auc(&[], &[0.3]).is_err());
    assert!(roc_auc(&[f64::NAN], &[0.3]).is_err());
}

fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for p in pos {
        for q in neg {
            s += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
        }
    }
    s / (pos.len() * neg.len()) as f64
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

proptest! {
    #[test]
    fn auc_matches_pairwise_count_and_curve_area(
        pos in prop::collection::vec(0u8..10, 1..20),
        neg in prop::collection::vec(0u8..10, 1..20),
    ) {
        let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
        let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
        let r = roc_auc(&pos, &neg).unwrap();
        prop_assert!((r.auc - pairwise_auc(&pos, &neg)).abs() < 1e-12);
        prop_assert!((r.auc - trapezoid(&r.points)).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_increasing_transform(
        pos in prop::collection::vec(-5.0f64..5.0, 1..20),
        neg in prop::collection::vec(-5.0f64..5.0, 1..20),
    ) {
        let f = |v: &[f64]| v.iter().map(|x| x.exp() * 3.0 + x).collect::<Vec<_>>();
        let a = roc_auc(&pos, &neg).unwrap().auc;
        let b = roc_auc(&f(&pos), &f(&neg)).unwrap().auc;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ari_is_one_under_relabeling(raw in prop::collection::vec(0usize..5, 2..30), shift in 1usize..50) {
        let a: BTreeMap<String, usize> = raw.iter().enumerate().map(|(i, &c)| (format!("p{i}"), c)).collect();
        let b: BTreeMap<String, usize> = a.iter().map(|(k, &c)| (k.clone(), c * 7 + shift)).collect();
        prop_assert!((adjusted_rand_index(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ari_reference_values() {
    let a = labels(&[("a", 0), ("b", 0), ("c", 1), ("d", 1)]);
    assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
    let singletons = labels(&[("a", 0), ("b", 1), ("c", 2), ("d", 3)]);
    let one = labels(&[("a", 0), ("b", 0), ("c", 0), ("d", 0)]);
    assert_eq!(adjusted_rand_index(&singletons, &one).unwrap(), 0.0);
    // classic example: {0,0,0,1,1,1} vs {0,0,1,1,2,2}
    let x = labels(&[("1", 0), ("2", 0), ("3", 0), ("4", 1), ("5", 1), ("6", 1)]);
    let y = labels(&[("1", 0), ("2", 0), ("3", 1), ("4", 1), ("5", 2), ("6", 2)]);
    assert!((adjusted_rand_index(&x, &y).unwrap() - 0.24242424242424243).abs() < 1e-12);
}

#[test]
fn ari_rejects_domain_mismatch() {
    let a = labels(&[("a", 0), ("b", 0)]);
    let b = labels(&[("a", 0), ("c", 0)]);
    assert!(adjusted_rand_index(&a, &b).is_err());
}

#[test]
fn similarity_set_balance() {
    let gt = labels(&[("a1", 0), ("a2", 0), ("a3", 0), ("b1", 1), ("b2", 1), ("b3", 1), ("c1", 2)]);
    let set = build_similarity_set(&gt, 3, 1000).unwrap();
    let pos: Vec<_> = set.iter().filter(|p| p.similar).collect();
    let neg: Vec<_> = set.iter().filter(|p| !p.similar).collect();
    assert_eq!(pos.len(), 6);
    assert_eq!(neg.len(), 4);
    assert!(pos.iter().all(|p| gt[&p.a] == gt[&p.b]));
    assert!(neg.iter().all(|p| gt[&p.a] != gt[&p.b]));
    assert_eq!(set, build_similarity_set(&gt, 3, 1000).unwrap());
    assert!(build_similarity_set(&labels(&[("x", 0), ("y", 0)]), 1, 10).is_err());
}

#[test]
fn variant_recall_counts_whole_intents() {
    let gt = labels(&[("a1", 0), ("a2", 0), ("b1", 1), ("b2", 1), ("c", 2)]);
    let asg = labels(&[("a1", 0), ("a2", 0), ("b1", 1), ("b2", 2), ("c", 3)]);
    assert_eq!(variant_recall(&asg, &gt), 0.5);
}

fn toy_trie() -> TypedTrie {
    let mut t = TypedTrie::new();
    t.insert("hi", 1, 9).unwrap();
    t.insert("ho", 2, 1).unwrap();
    t
}

#[test]
fn typing_toy_example() {
    let trie = toy_trie();
    let w = CombinerWeights::default();
    let cases = vec![TestCase {
        prev: "hey".into(),
        next: "ho".into(),
        cluster: Some(2),
    }];
    let m = simulate_typing("trie", &cases, 3, |_, typed| {
        let (ranked, _) = predict(&BTreeMap::new(), typed, &trie, &w, 3);
        Ok(ranked.into_iter().map(|c| c.cluster).collect())
    })
    .unwrap();
    assert_eq!(m.chars_to_type, 1.0);
    assert_eq!(m.inaccurate_shown, 0.0);
    assert_eq!(m.fraction_retrieved, 1.0);
    assert_eq!((m.n, m.excluded), (1, 0));
}

#[test]
fn typing_counts_wrong_lists_and_exclusions() {
    let trie = toy_trie();
    let cases = vec![
        TestCase { prev: String::new(), next: "ho".into(), cluster: Some(2) },
        TestCase { prev: String::new(), next: "zz".into(), cluster: None },
        TestCase { prev: String::new(), next: "hi".into(), cluster: Some(9) },
    ];
    // top-1 from the trie alone: "h" shows cluster 1, "ho" shows cluster 2
    let m = simulate_typing("top1", &cases, 1, |_, typed| Ok(trie.trie_scores(typed).ranked().into_iter().map(|x| x.0).collect()))
        .unwrap();
    assert_eq!((m.n, m.excluded), (2, 1));
    assert_eq!(m.fraction_retrieved, 0.5);
    assert_eq!(m.chars_to_type, 2.0);
    assert_eq!(m.inaccurate_shown, 1.0);
}

#[test]
fn typing_handles_multibyte_prefixes() {
    let mut seen = Vec::new();
    let cases = vec![TestCase { prev: "x".into(), next: "नमस".into(), cluster: Some(0) }];
    let m = simulate_typing("none", &cases, 3, |_, t| {
        seen.push(t.to_string());
        Ok(vec![])
    })
    .unwrap();
    assert_eq!(seen, vec!["", "न", "नम", "नमस"]);
    assert_eq!(m.fraction_retrieved, 0.0);
}

#[test]
fn table_has_one_row_per_model() {
    let row = TypingMetrics {
        model_name: "hybrid".into(),
        chars_to_type: 1.5,
        inaccurate_shown: 0.25,
        fraction_retrieved: 1.0,
        n: 4,
        excluded: 0,
    };
    let t = render_table(&[row.clone(), TypingMetrics { model_name: "trie".into(), ..row }]);
    assert_eq!(t.lines().count(), 3);
    assert!(t.contains("hybrid") && t.contains("1.500"));
}

#[test]
fn oracle_and_blind_models() {
    let cases: Vec<TestCase> = (0..5)
        .map(|i| TestCase { prev: "p".into(), next: format!("msg{i}"), cluster: Some(i) })
        .collect();
    let truth: std::collections::HashMap<String, u32> = cases.iter().map(|c| (c.next.clone(), c.cluster.unwrap())).collect();
    let mut current = 0u32;
    let oracle = simulate_typing("oracle", &cases, 3, |_, typed| {
        if typed.is_empty() {
            current += 1;
        }
        Ok(vec![truth.values().copied().find(|&c| c + 1 == current).unwrap_or(0)])
    })
    .unwrap();
    assert_eq!((oracle.chars_to_type, oracle.inaccurate_shown, oracle.fraction_retrieved), (0.0, 0.0, 1.0));
    let blind = simulate_typing("blind", &cases, 3, |_, _| Ok(vec![99])).unwrap();
    assert_eq!(blind.fraction_retrieved, 0.0);
}
