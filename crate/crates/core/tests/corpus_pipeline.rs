//! Loading, k-core filtering, splitting and the planted generator.

use std::collections::HashMap;
use std::fs;

use guidedrec::corpus::{
    generate_synthetic, load_metadata, load_reviews, planted_pairs, preprocess, read_archive,
    split_leave_one_out, write_archive, CorpusError, DatasetArchive, FilterConfig, Interaction,
    ItemRecord, SyntheticSpec,
};
use proptest::prelude::*;

fn interaction(user: usize, item: usize, ts: i64) -> Interaction {
    Interaction {
        user_id: format!("u{user}"),
        item_id: format!("i{item}"),
        rating: 4.0,
        timestamp: ts,
        summary: String::new(),
        review_text: String::new(),
    }
}

proptest! {
    #[test]
    fn k_core_holds_after_filtering(
        raw in prop::collection::vec((0usize..15, 0usize..12, 0i64..1000), 0..200),
        min_item in 1usize..5,
        min_user in 1usize..5,
    ) {
        let interactions: Vec<Interaction> = raw.iter().map(|&(u, i, t)| interaction(u, i, t)).collect();
        // items 10 and 11 have no metadata and must vanish
        let items: Vec<ItemRecord> = (0..10).map(|i| ItemRecord::new(format!("i{i}"), format!("Item {i}"))).collect();
        let ds = match preprocess(&interactions, &items, FilterConfig { min_item_interactions: min_item, min_user_interactions: min_user }) {
            Ok(ds) => ds,
            // nothing survives the thresholds
            Err(CorpusError::EmptyDataset(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };

        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for (user, seq) in &ds.users {
            prop_assert!(seq.len() >= min_user);
            prop_assert!(seq.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
            for i in seq {
                prop_assert_eq!(&i.user_id, user);
                prop_assert!(ds.items.contains_key(&i.item_id));
                *item_counts.entry(i.item_id.as_str()).or_default() += 1;
            }
        }
        prop_assert!(item_counts.values().all(|&c| c >= min_item));
        prop_assert!(!item_counts.contains_key("i10") && !item_counts.contains_key("i11"));
    }

    #[test]
    fn leave_one_out_holds_out_the_last_two(lens in prop::collection::vec(1usize..12, 1..20)) {
        let interactions: Vec<Interaction> = lens
            .iter()
            .enumerate()
            .flat_map(|(u, &n)| (0..n).map(move |t| interaction(u, (u + t) % 30, t as i64)))
            .collect();
        let items: Vec<ItemRecord> = (0..30).map(|i| ItemRecord::new(format!("i{i}"), "x")).collect();
        let ds = preprocess(&interactions, &items, FilterConfig { min_item_interactions: 1, min_user_interactions: 1 }).unwrap();
        let split = split_leave_one_out(&ds);
        for u in &split.users {
            let seq = ds.sequence(&u.user_id).unwrap();
            let ids: Vec<&str> = seq.iter().map(|i| i.item_id.as_str()).collect();
            if ids.len() >= 3 {
                let (prefix, target) = u.test().unwrap();
                prop_assert_eq!(target, ids[ids.len() - 1]);
                prop_assert_eq!(prefix.len(), ids.len() - 1);
                let (vprefix, vtarget) = u.validation().unwrap();
                prop_assert_eq!(vtarget, ids[ids.len() - 2]);
                prop_assert_eq!(vprefix.len(), ids.len() - 2);
                prop_assert_eq!(u.train_items().len(), ids.len() - 2);
            } else {
                prop_assert!(!u.has_holdout());
                prop_assert_eq!(u.train_items().len(), ids.len());
            }
        }
    }
}

#[test]
fn json_lines_load_filter_and_archive() {
    let dir = tempfile::tempdir().unwrap();
    let reviews = dir.path().join("reviews.jsonl");
    let meta = dir.path().join("meta.jsonl");
    let mut lines = Vec::new();
    for u in 0..6 {
        for t in 0..5 {
            lines.push(format!(
                r#"{{"user_id":"u{u}","parent_asin":"p{}","rating":{},"timestamp":{},"title":"t","text":"body"}}"#,
                (u + t) % 5,
                1 + (u + t) % 5,
                1000 * t + u
            ));
        }
    }
    lines.push("{not json".into());
    lines.push(r#"{"user_id":"u0","parent_asin":"p0","rating":9,"timestamp":1}"#.into());
    fs::write(&reviews, lines.join("\n")).unwrap();
    let metas: Vec<String> = (0..5)
        .map(|i| format!(r#"{{"parent_asin":"p{i}","title":"Product {i}","categories":["A"],"average_rating":4.1}}"#))
        .collect();
    fs::write(&meta, metas.join("\n")).unwrap();

    let loaded = load_reviews(&reviews).unwrap();
    assert_eq!(loaded.records.len(), 30);
    assert_eq!(loaded.malformed, 2);
    let items = load_metadata(&meta).unwrap().records;
    let ds = preprocess(&loaded.records, &items, FilterConfig::default()).unwrap();
    let stats = ds.stats();
    assert_eq!(
        (stats.num_users, stats.num_items, stats.num_reviews),
        (6, 5, 30)
    );

    let path = dir.path().join("ds.json");
    write_archive(&path, &DatasetArchive::new(ds.clone(), None)).unwrap();
    let back = read_archive(&path).unwrap();
    assert_eq!(back.dataset, ds);
    assert!(back.truth.is_none());
}

#[test]
fn synthetic_generator_is_seeded_and_respects_its_spec() {
    let spec = SyntheticSpec {
        num_users: 40,
        num_items: 30,
        m: 5,
        ..Default::default()
    };
    let (a, truth) = generate_synthetic(&spec).unwrap();
    let (b, _) = generate_synthetic(&spec).unwrap();
    assert_eq!(a, b);
    let (c, _) = generate_synthetic(&SyntheticSpec {
        seed: spec.seed + 1,
        ..spec.clone()
    })
    .unwrap();
    assert_ne!(a, c);

    assert_eq!(a.users.len(), 40);
    assert_eq!(truth.m(), 5);
    for seq in a.users.values() {
        assert!((spec.seq_len_min..=spec.seq_len_max).contains(&seq.len()));
        assert!(seq.iter().all(|i| (1.0..=5.0).contains(&i.rating)));
    }
    for v in truth.item_aspects.values().chain(truth.user_prefs.values()) {
        assert!(v.iter().all(|x| (1.0..=10.0).contains(x)));
    }
    let user = truth.user_prefs.keys().next().unwrap();
    let p = truth.next_item_probabilities(user).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let pairs = planted_pairs(&truth, 7, 1);
    assert_eq!(pairs.len(), 40 * 7);
    assert_eq!(pairs, planted_pairs(&truth, 7, 1));
}
