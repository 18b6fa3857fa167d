use proptest::prelude::*;

use super::*;

fn sticker(id: &str, tags: &[&str]) -> Sticker {
    Sticker {
        sticker_id: id.into(),
        pack_id: "p".into(),
        tags: tags.iter().map(|t| t.to_string()).collect(),
        label: format!("label {id}"),
    }
}

fn mapping(entries: &[(u32, &[(&str, f64)])]) -> StickerMapping {
    let mut m = StickerMapping::default();
    for (c, list) in entries {
        m.clusters.insert(
            *c,
            list.iter()
                .map(|(id, s)| MappedSticker {
                    sticker_id: id.to_string(),
                    similarity: *s,
                })
                .collect(),
        );
        for (id, _) in list.iter() {
            m.labels.insert(id.to_string(), format!("L{id}"));
        }
    }
    m
}

fn ids(r: &Recommendation) -> Vec<&str> {
    r.stickers.iter().map(|s| s.sticker_id.as_str()).collect()
}

#[test]
fn vectors_attach_by_best_pair() {
    let clusters: BTreeMap<u32, Vec<Vec<f64>>> =
        [(0, vec![vec![1.0, 0.0], vec![0.7, 0.7]]), (1, vec![vec![0.0, 1.0]])].into_iter().collect();
    let stickers = vec![sticker("a", &["x"]), sticker("b", &["y", "z"])];
    let tags = vec![vec![vec![2.0, 0.0]], vec![vec![-1.0, 0.0], vec![0.0, 3.0]]];
    let m = build_mapping_from_vectors(&clusters, &stickers, &tags, 0.7).unwrap();
    assert_eq!(m.stickers_for(0)[0].sticker_id, "a");
    assert!((m.stickers_for(0)[0].similarity - 1.0).abs() < 1e-12);
    // b's second tag matches (0.7, 0.7) at ~0.707 and cluster 1 exactly
    assert_eq!(m.stickers_for(0).len(), 2);
    assert_eq!(m.stickers_for(1)[0].sticker_id, "b");
    assert_eq!(m.stickers_for(1).len(), 1);
    let none = build_mapping_from_vectors(&clusters, &stickers, &tags, 1.01).unwrap();
    assert_eq!(none.num_attachments(), 0);
    assert!(build_mapping_from_vectors(&clusters, &stickers, &tags[..1], 0.5).is_err());
}

#[test]
fn recommend_examples() {
    let m = mapping(&[(1, &[("a", 0.9), ("b", 0.8), ("c", 0.7)])]);
    assert_eq!(ids(&recommend(&[1], &m, 2)), vec!["a", "b"]);
    let m = mapping(&[(1, &[("a", 0.9), ("b", 0.8)]), (2, &[("c", 0.9), ("d", 0.8)])]);
    assert_eq!(ids(&recommend(&[1, 2], &m, 3)), vec!["a", "c", "b"]);
    let m = mapping(&[(1, &[("a", 0.9)]), (2, &[("a", 0.95), ("d", 0.8)])]);
    let r = recommend(&[1, 2], &m, 3);
    assert_eq!(ids(&r), vec!["a", "d"]);
    assert_eq!(r.stickers[1].cluster, 2);
    let r = recommend(&[7], &m, 3);
    assert!(r.no_stickers && r.stickers.is_empty());
}

#[test]
fn feedback_reranks() {
    let m = mapping(&[(0, &[("a", 0.9), ("b", 0.8)])]);
    let ev = |id: &str, shown, sent| FeedbackEvent {
        cluster_id: 0,
        sticker_id: id.into(),
        shown,
        sent,
    };
    let (r, ignored) = refresh_from_feedback(&m, &[ev("a", 100, 10), ev("b", 100, 50)]);
    assert_eq!(ignored, 0);
    assert_eq!(r.stickers_for(0)[0].sticker_id, "b");
    let (same, _) = refresh_from_feedback(&m, &[]);
    assert_eq!(same, m);
    let (r, _) = refresh_from_feedback(&m, &[ev("b", 1, 1), ev("a", 100, 40)]);
    assert_eq!(r.stickers_for(0)[0].sticker_id, "b");
    assert!((send_rate(1, 1) - 2.0 / 3.0).abs() < 1e-15);
    assert!((send_rate(100, 40) - 41.0 / 102.0).abs() < 1e-15);
    let (_, ignored) = refresh_from_feedback(&m, &[ev("zz", 3, 1), FeedbackEvent { cluster_id: 5, ..ev("a", 1, 1) }]);
    assert_eq!(ignored, 2);
}

#[test]
fn asset_round_trip_and_errors() {
    let m = mapping(&[(0, &[("a", 0.9), ("b", -0.25)]), (3, &[("c", 1.0)])]);
    let b = m.to_bytes().unwrap();
    let back = StickerMapping::from_bytes(&b).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_bytes().unwrap(), b);
    let empty = StickerMapping::default().to_bytes().unwrap();
    assert_eq!(StickerMapping::from_bytes(&empty).unwrap(), StickerMapping::default());
    let mut bad = b.clone();
    bad[3] = b'X';
    assert!(matches!(StickerMapping::from_bytes(&bad), Err(Error::Format(crate::error::FormatError::BadMagic { .. }))));
    assert!(matches!(
        StickerMapping::from_bytes(&b[..b.len() - 1]),
        Err(Error::Format(crate::error::FormatError::Truncated { .. }))
    ));
}

#[test]
fn catalog_and_feedback_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("catalog.jsonl");
    let stickers = vec![sticker("s1", &["Good Night!"]), sticker("s2", &["hi", "hello"])];
    write_catalog(&p, &stickers).unwrap();
    assert_eq!(read_catalog(&p).unwrap(), stickers);
    assert_eq!(stickers[0].normalized_tags(), vec!["good night".to_string()]);
    std::fs::write(&p, "{\"sticker_id\":\"x\",\"pack_id\":\"p\",\"tags\":[],\"label\":\"\"}\n").unwrap();
    assert!(read_catalog(&p).is_err());
    let f = dir.path().join("fb.jsonl");
    std::fs::write(&f, "{\"cluster_id\":1,\"sticker_id\":\"s1\",\"shown\":1,\"sent\":1}\n\n").unwrap();
    assert_eq!(read_feedback(&f).unwrap().len(), 1);
}

fn arb_mapping() -> impl Strategy<Value = StickerMapping> {
    prop::collection::btree_map(0u32..10, prop::collection::btree_map("[a-f]{1,3}", -1.0f64..1.0, 0..5), 0..6).prop_map(|m| {
        let mut out = StickerMapping::default();
        for (c, list) in m {
            let mut v: Vec<MappedSticker> = list
                .into_iter()
                .map(|(sticker_id, similarity)| MappedSticker { sticker_id, similarity })
                .collect();
            v.sort_by(by_similarity);
            for s in &v {
                out.labels.insert(s.sticker_id.clone(), s.sticker_id.to_uppercase());
            }
            out.clusters.insert(c, v);
        }
        out
    })
}

proptest! {
    #[test]
    fn recommend_bounded_and_unique(m in arb_mapping(), ranked in prop::collection::vec(0u32..12, 0..6), n in 0usize..8) {
        let r = recommend(&ranked, &m, n);
        prop_assert!(r.stickers.len() <= n);
        let mut seen = std::collections::BTreeSet::new();
        prop_assert!(r.stickers.iter().all(|s| seen.insert(s.sticker_id.clone())));
    }

    #[test]
    fn refresh_keeps_attachments(m in arb_mapping(), events in prop::collection::vec((0u32..10, "[a-f]{1,3}", 0u64..50, 0u64..50), 0..20)) {
        let events: Vec<FeedbackEvent> = events
            .into_iter()
            .map(|(cluster_id, sticker_id, a, b)| FeedbackEvent { cluster_id, sticker_id, shown: a.max(b), sent: a.min(b) })
            .collect();
        let (r, _) = refresh_from_feedback(&m, &events);
        for (c, list) in &m.clusters {
            let mut a: Vec<&str> = list.iter().map(|s| s.sticker_id.as_str()).collect();
            let mut b: Vec<&str> = r.stickers_for(*c).iter().map(|s| s.sticker_id.as_str()).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
        prop_assert_eq!(r.clusters.len(), m.clusters.len());
    }

    #[test]
    fn asset_bit_exact(m in arb_mapping()) {
        let b = m.to_bytes().unwrap();
        let back = StickerMapping::from_bytes(&b).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), b);
        prop_assert_eq!(back, m);
    }
}
