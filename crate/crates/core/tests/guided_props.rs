//! Normalization, refinement and embedding-table invariants.

use std::collections::BTreeMap;

use guidedrec::guided::{
    build_table, fit_normalizer, load_normalizer, load_table, refine, save_normalizer, save_table,
    RefinedConfig, DEFAULT_EPSILON,
};
use guidedrec::seqrec::refined_dot;
use proptest::prelude::*;

/// Rows of 1–10 scores where the first two rows pin each column to hold
/// both extremes, so no column is constant.
fn corpus() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
    (1usize..10, 2usize..40, 1usize..64).prop_flat_map(|(m, n, extra)| {
        prop::collection::vec(prop::collection::vec(1u8..=10, m), n).prop_map(move |rows| {
            let mut rows: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|r| r.into_iter().map(f64::from).collect())
                .collect();
            for j in 0..m {
                rows[0][j] = 1.0;
                rows[1][j] = 10.0;
            }
            (rows, m + extra)
        })
    })
}

proptest! {
    #[test]
    fn normalized_columns_are_centred_at_xavier_scale((rows, refined_dim) in corpus()) {
        let norm = fit_normalizer(&rows, refined_dim, DEFAULT_EPSILON).unwrap();
        let out: Vec<Vec<f64>> = rows.iter().map(|r| norm.normalize(r).unwrap()).collect();
        let n = rows.len() as f64;
        let target = (1.0 / refined_dim as f64).sqrt();
        for j in 0..norm.m() {
            let mean = out.iter().map(|r| r[j]).sum::<f64>() / n;
            let std = (out.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((std - target).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_columns_map_to_zero(value in 1u8..=10, n in 2usize..20, x in 1u8..=10) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![f64::from(value), (i % 3) as f64]).collect();
        let norm = fit_normalizer(&rows, 16, DEFAULT_EPSILON).unwrap();
        prop_assert_eq!(norm.degenerate_dims(), vec![0]);
        prop_assert_eq!(norm.normalize(&[f64::from(x), 1.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn dot_decomposes_over_blocks(
        ub in prop::collection::vec(-2.0f64..2.0, 1..16),
        ug in prop::collection::vec(-2.0f64..2.0, 1..8),
        seed in any::<u64>(),
        mu_exp in -2i32..=2,
    ) {
        let mu = 2f64.powi(mu_exp);
        let shift = |v: &[f64], k: u64| -> Vec<f64> {
            v.iter().enumerate().map(|(i, x)| x * 0.5 + ((seed ^ k).wrapping_add(i as u64) % 7) as f64 * 0.1).collect()
        };
        let (ib, ig) = (shift(&ub, 1), shift(&ug, 2));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let lhs = refined_dot(&refine(&ub, &ug, mu).unwrap(), &refine(&ib, &ig, mu).unwrap(), ub.len());
        prop_assert_eq!(lhs, dot(&ub, &ib) + mu * mu * dot(&ug, &ig));
    }
}

fn scored_items(n: usize, m: usize) -> (Vec<String>, BTreeMap<String, Vec<f64>>) {
    let ids: Vec<String> = (0..n).map(|i| format!("item{i}")).collect();
    let scores = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            (
                id.clone(),
                (0..m).map(|j| ((i * 7 + j * 3) % 10 + 1) as f64).collect(),
            )
        })
        .collect();
    (ids, scores)
}

#[test]
fn table_guided_block_is_normalized_scores_and_round_trips() {
    let (ids, scores) = scored_items(30, 4);
    let rows: Vec<Vec<f64>> = ids.iter().map(|id| scores[id].clone()).collect();
    let config = RefinedConfig::new(8, 4, 0.5).unwrap();
    let norm = fit_normalizer(&rows, config.refined_dim(), DEFAULT_EPSILON).unwrap();
    let table = build_table(&ids, Some(&scores), Some(&norm), config, 3).unwrap();

    for (idx, id) in ids.iter().enumerate() {
        assert_eq!(
            table.guided_row(idx),
            norm.normalize(&scores[id]).unwrap().as_slice()
        );
        let refined = table.refined_row(idx);
        assert_eq!(&refined[..8], table.base_row(idx));
        for (r, g) in refined[8..].iter().zip(table.guided_row(idx)) {
            assert_eq!(*r, 0.5 * g);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    save_table(dir.path().join("table.json"), &table).unwrap();
    assert_eq!(load_table(dir.path().join("table.json")).unwrap(), table);
    save_normalizer(dir.path().join("norm.json"), &norm).unwrap();
    assert_eq!(load_normalizer(dir.path().join("norm.json")).unwrap(), norm);
}

#[test]
fn table_build_is_seeded_and_checks_inputs() {
    let (ids, scores) = scored_items(10, 3);
    let rows: Vec<Vec<f64>> = scores.values().cloned().collect();
    let config = RefinedConfig::new(4, 3, 1.0).unwrap();
    let norm = fit_normalizer(&rows, 7, DEFAULT_EPSILON).unwrap();
    let a = build_table(&ids, Some(&scores), Some(&norm), config, 11).unwrap();
    let b = build_table(&ids, Some(&scores), Some(&norm), config, 11).unwrap();
    let c = build_table(&ids, Some(&scores), Some(&norm), config, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.base(), c.base());
    assert_eq!(a.guided(), c.guided());

    let mut partial = scores.clone();
    partial.remove("item3");
    assert!(build_table(&ids, Some(&partial), Some(&norm), config, 1).is_err());
    assert!(build_table(&ids, Some(&scores), None, config, 1).is_err());
    assert!(RefinedConfig::new(4, 3, 0.0).is_err());
}
