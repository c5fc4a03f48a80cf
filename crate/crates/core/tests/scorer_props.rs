//! Score parsing, the fine-tuning loss, caching and the deterministic mock.

use guidedrec::aspects::{
    format_block_names, generic_catalog, render_item_prompt, Aspect, AspectCatalog, Domain,
};
use guidedrec::corpus::ItemRecord;
use guidedrec::scorer::{
    cache_load, cache_store, composite_finetune_loss, format_loss_diag, mock_scores, parse_scores,
    render_score_block, score_item, score_many, ScoreCache, ScoreError, ScorerBackend,
    ScoringOptions, Subject, LAMBDA_BAD, LAMBDA_OK,
};
use proptest::prelude::*;

fn catalog_strategy() -> impl Strategy<Value = AspectCatalog> {
    prop::collection::btree_set("[a-z]{3,10}( [a-z]{2,8})?", 1..15).prop_map(|names| {
        AspectCatalog::new(
            Domain::Custom,
            names
                .into_iter()
                .map(|n| Aspect::new(n.clone(), format!("degree of {n}")))
                .collect(),
        )
        .unwrap()
    })
}

fn catalog_and_scores() -> impl Strategy<Value = (AspectCatalog, Vec<f64>)> {
    catalog_strategy().prop_flat_map(|c| {
        let m = c.len();
        (Just(c), prop::collection::vec(1.0f64..=10.0, m))
    })
}

proptest! {
    #[test]
    fn rendered_block_parses_back_exactly((catalog, scores) in catalog_and_scores()) {
        let prompt = render_item_prompt(&ItemRecord::new("x", "X"), &catalog);
        let names = format_block_names(&prompt.system);
        prop_assert_eq!(names.len(), catalog.len());
        let parsed = parse_scores(&render_score_block(names.iter().map(String::as_str), &scores), &catalog).unwrap();
        prop_assert_eq!(parsed.values, scores);
        prop_assert!(parsed.report.valid);
        prop_assert_eq!(parsed.report.clamped, 0);
    }

    #[test]
    fn shuffled_and_decorated_lines_still_parse((catalog, scores) in catalog_and_scores(), rot in 0usize..15) {
        let mut lines: Vec<String> = catalog
            .names()
            .zip(&scores)
            .map(|(n, s)| format!("- **{}**: {s}/10", n.to_uppercase()))
            .collect();
        let k = rot % lines.len();
        lines.rotate_left(k);
        let text = format!("Sure, here are the ratings.\n{}\n", lines.join("\n"));
        let parsed = parse_scores(&text, &catalog).unwrap();
        prop_assert_eq!(parsed.values, scores);
        prop_assert_eq!(parsed.report.extra_lines, 1);
    }

    #[test]
    fn dropped_line_is_reported_missing((catalog, scores) in catalog_and_scores(), drop in 0usize..15) {
        let drop = drop % catalog.len();
        let names: Vec<&str> = catalog.names().collect();
        let text: String = names
            .iter()
            .zip(&scores)
            .enumerate()
            .filter(|(j, _)| *j != drop)
            .map(|(_, (n, s))| format!("{n}: {s}\n"))
            .collect();
        let err = parse_scores(&text, &catalog).unwrap_err();
        prop_assert!(!err.report.valid);
        prop_assert_eq!(&err.report.missing_aspects, &vec![names[drop].to_string()]);
        prop_assert!((format_loss_diag(&err.report, &catalog) - 1.0 / catalog.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_values_are_clamped_and_counted(
        (catalog, mut scores) in catalog_and_scores(),
        at in 0usize..15,
        high in any::<bool>(),
    ) {
        let at = at % catalog.len();
        scores[at] = if high { 37.0 } else { -3.0 };
        let parsed = parse_scores(&render_score_block(catalog.names(), &scores), &catalog).unwrap();
        prop_assert_eq!(parsed.report.clamped, 1);
        prop_assert_eq!(parsed.values[at], if high { 10.0 } else { 1.0 });
    }

    #[test]
    fn composite_loss_follows_format_validity(l_rec in 0.0f64..10.0, diag in 0.0f64..1.0) {
        prop_assert_eq!(composite_finetune_loss(l_rec, true, diag, LAMBDA_OK, LAMBDA_BAD), l_rec + LAMBDA_OK * diag);
        prop_assert_eq!(composite_finetune_loss(l_rec, false, diag, LAMBDA_OK, LAMBDA_BAD), LAMBDA_BAD * diag);
    }
}

#[test]
fn composite_loss_reference_values() {
    assert!((composite_finetune_loss(2.0, true, 1.0, 0.1, 1.0) - 2.1).abs() < 1e-12);
    assert_eq!(composite_finetune_loss(2.0, false, 1.0, 0.1, 1.0), 1.0);
    assert_eq!(composite_finetune_loss(2.0, false, 0.0, 0.1, 1.0), 0.0);
}

#[test]
fn mock_is_deterministic_integer_valued_and_seed_sensitive() {
    let catalog = generic_catalog(8).unwrap();
    let prompt = render_item_prompt(&ItemRecord::new("i1", "Item one"), &catalog);
    let a = mock_scores(&prompt, 5, 8);
    assert_eq!(a, mock_scores(&prompt, 5, 8));
    assert_ne!(a, mock_scores(&prompt, 6, 8));
    assert!(a
        .iter()
        .all(|v| v.fract() == 0.0 && (1.0..=10.0).contains(v)));
}

#[test]
fn cache_serves_repeat_requests_and_survives_a_round_trip() {
    let catalog = generic_catalog(5).unwrap();
    let backend = ScorerBackend::mock(1);
    let cache = ScoreCache::new();
    let options = ScoringOptions::default();
    let items: Vec<ItemRecord> = (0..6)
        .map(|i| ItemRecord::new(format!("i{i}"), format!("Item {i}")))
        .collect();

    let first: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            score_item(&backend, it, &catalog, &cache, &options)
                .unwrap()
                .scores
        })
        .collect();
    assert_eq!(backend.request_count(), 6);
    let second: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            score_item(&backend, it, &catalog, &cache, &options)
                .unwrap()
                .scores
        })
        .collect();
    assert_eq!(backend.request_count(), 6);
    assert_eq!(first, second);
    assert_eq!(cache.hits(), 6);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    cache_store(&cache, &path).unwrap();
    std::fs::write(
        &path,
        format!("{}not json\n", std::fs::read_to_string(&path).unwrap()),
    )
    .unwrap();
    let (loaded, corrupt) = cache_load(&path).unwrap();
    assert_eq!(corrupt, 1);
    assert_eq!(loaded.len(), 6);

    let fresh = ScorerBackend::mock(1);
    for (it, expected) in items.iter().zip(&first) {
        assert_eq!(
            &score_item(&fresh, it, &catalog, &loaded, &options)
                .unwrap()
                .scores,
            expected
        );
    }
    assert_eq!(fresh.request_count(), 0);

    // a different backend identity misses the cache
    let other = ScorerBackend::mock(2);
    score_item(&other, &items[0], &catalog, &loaded, &options).unwrap();
    assert_eq!(other.request_count(), 1);
}

#[test]
fn score_many_keeps_input_order_and_reports_unknown_subjects() {
    let catalog = generic_catalog(4).unwrap();
    let backend = ScorerBackend::mock(9);
    let requests: Vec<(Subject, _)> = (0..10)
        .map(|i| {
            let item = ItemRecord::new(format!("i{i}"), format!("Item {i}"));
            (
                Subject::item(&item.item_id),
                render_item_prompt(&item, &catalog),
            )
        })
        .collect();
    let options = ScoringOptions {
        max_in_flight: 3,
        ..ScoringOptions::default()
    };
    let out = score_many(&backend, &requests, &catalog, &ScoreCache::new(), &options).unwrap();
    for ((subject, prompt), result) in requests.iter().zip(out) {
        let scored = result.unwrap();
        assert_eq!(scored.subject_id, subject.id);
        assert_eq!(scored.scores, mock_scores(prompt, 9, 4));
    }

    let truth = guidedrec::corpus::generate_synthetic(&guidedrec::corpus::SyntheticSpec {
        num_users: 10,
        num_items: 20,
        ..Default::default()
    })
    .unwrap()
    .1;
    let oracle = ScorerBackend::oracle(std::sync::Arc::new(truth));
    let unknown = score_item(
        &oracle,
        &ItemRecord::new("nope", "Nope"),
        &generic_catalog(12).unwrap(),
        &ScoreCache::new(),
        &options,
    );
    assert!(matches!(unknown, Err(ScoreError::Backend(_))));
}
