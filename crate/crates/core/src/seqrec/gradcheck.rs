//! Central finite-difference check of the hand-derived gradients.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{sequence_loss, train, Grads, Sample, TrainConfig};
use super::{EncoderKind, Model, ModelConfig, SeqrecError, UserVariant};
use crate::corpus::{SplitDataset, UserSplit};
use crate::guided::{build_table, fit_normalizer, EmbeddingTable, RefinedConfig, DEFAULT_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub encoder: EncoderKind,
    pub user_variant: UserVariant,
    pub base_dim: usize,
    pub guided_dim: usize,
    pub mu: f64,
    pub num_items: usize,
    pub seq_len: usize,
    pub num_heads: usize,
    pub seed: u64,
}

impl GradCheckConfig {
    pub fn small(encoder: EncoderKind, user_variant: UserVariant) -> Self {
        Self {
            encoder,
            user_variant,
            base_dim: 4,
            guided_dim: 3,
            mu: 1.5,
            num_items: 8,
            seq_len: 5,
            num_heads: 1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst: String,
    pub checked: usize,
    /// Largest change an optimizer step made to a guided coordinate.
    pub frozen_grad_max_abs: f64,
    /// Largest finite-difference sensitivity of the loss to a guided
    /// coordinate; non-zero shows the guided values do reach the loss.
    pub guided_sensitivity: f64,
    pub passed: bool,
}

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

struct Fixture {
    model: Model,
    table: EmbeddingTable,
    items: Vec<usize>,
}

fn fixture(config: &GradCheckConfig) -> Result<Fixture, SeqrecError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let refined = RefinedConfig::new(config.base_dim, config.guided_dim, config.mu)?;
    let ids: Vec<String> = (0..config.num_items).map(|i| format!("i{i:02}")).collect();
    let mut table = if config.guided_dim == 0 {
        build_table(&ids, None, None, refined, config.seed)?
    } else {
        let mut draw = || -> Vec<f64> {
            (0..config.guided_dim)
                .map(|_| rng.gen_range(1.0..=10.0))
                .collect()
        };
        let scores: BTreeMap<String, Vec<f64>> =
            ids.iter().map(|id| (id.clone(), draw())).collect();
        let user: BTreeMap<String, Vec<f64>> = [("u".to_string(), draw())].into();
        let rows: Vec<Vec<f64>> = scores.values().cloned().collect();
        let normalizer = fit_normalizer(&rows, refined.refined_dim(), DEFAULT_EPSILON)?;
        let mut table = build_table(&ids, Some(&scores), Some(&normalizer), refined, config.seed)?;
        table.attach_user_scores(&user)?;
        table
    };
    // Scale the base block up so logits are not all near zero.
    table.base_mut().iter_mut().for_each(|b| *b *= 4.0);

    let mut model_config = ModelConfig::for_table(config.encoder, config.user_variant, &refined);
    model_config.max_seq_len = config.seq_len;
    model_config.num_heads = config.num_heads;
    let mut model = Model::new(model_config, &refined, config.seed ^ 0x5eed)?;
    // Move every parameter (biases and gains included) off its initial value.
    for p in &mut model.params {
        *p += rng.gen_range(-0.3..0.3);
    }
    let items = (0..=config.seq_len)
        .map(|_| rng.gen_range(0..config.num_items))
        .collect();
    Ok(Fixture {
        model,
        table,
        items,
    })
}

fn loss_of(
    model: &Model,
    table: &EmbeddingTable,
    items: &[usize],
    grads: Option<&mut Grads>,
) -> Result<f64, SeqrecError> {
    let sample = Sample {
        items: items.to_vec(),
        user_id: "u",
        user_guided: table.user_guided("u").map(<[f64]>::to_vec),
    };
    sequence_loss(model, table, &table.refined_matrix(), &sample, None, grads)
}

/// Compares analytic gradients of the summed next-item loss with central
/// differences of step `epsilon`, over every encoder parameter and every
/// base embedding entry.
pub fn grad_check(
    config: &GradCheckConfig,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport, SeqrecError> {
    let Fixture {
        mut model,
        mut table,
        items,
    } = fixture(config)?;
    let mut grads = Grads::zeros(&model, &table);
    loss_of(&model, &table, &items, Some(&mut grads))?;

    let mut max_rel_error = 0.0;
    let mut worst = String::new();
    let mut checked = 0;
    let mut record = |name: String, analytic: f64, numeric: f64| {
        let err = rel_error(analytic, numeric);
        if err > max_rel_error || worst.is_empty() {
            max_rel_error = err;
            worst = name;
        }
        checked += 1;
    };

    for i in 0..model.params.len() {
        let original = model.params[i];
        model.params[i] = original + epsilon;
        let plus = loss_of(&model, &table, &items, None)?;
        model.params[i] = original - epsilon;
        let minus = loss_of(&model, &table, &items, None)?;
        model.params[i] = original;
        record(
            format!("param[{i}]"),
            grads.params[i],
            (plus - minus) / (2.0 * epsilon),
        );
    }
    for i in 0..table.base().len() {
        let original = table.base()[i];
        table.base_mut()[i] = original + epsilon;
        let plus = loss_of(&model, &table, &items, None)?;
        table.base_mut()[i] = original - epsilon;
        let minus = loss_of(&model, &table, &items, None)?;
        table.base_mut()[i] = original;
        record(
            format!("base[{i}]"),
            grads.base[i],
            (plus - minus) / (2.0 * epsilon),
        );
    }

    // Guided coordinates are constants of the loss. Probe how much they
    // influence it, so a zero update below is due to freezing rather than
    // irrelevance.
    let mut guided_sensitivity: f64 = 0.0;
    let guided = table.guided().to_vec();
    for i in 0..guided.len() {
        let shifted = |delta: f64| -> Result<f64, SeqrecError> {
            let mut probe = table.clone();
            probe.set_guided_for_probe(i, guided[i] + delta);
            loss_of(&model, &probe, &items, None)
        };
        let numeric = (shifted(epsilon)? - shifted(-epsilon)?) / (2.0 * epsilon);
        guided_sensitivity = guided_sensitivity.max(numeric.abs());
    }
    // Run one real optimizer step and measure what it did to the guided block.
    let split = SplitDataset {
        users: vec![UserSplit {
            user_id: "u".to_string(),
            items: items.iter().map(|&i| table.item_ids()[i].clone()).collect(),
            train_end: items.len(),
        }],
    };
    let step = TrainConfig {
        epochs: 1,
        batch_size: 1,
        learning_rate: 0.1,
        seed: config.seed,
        mu: config.mu,
        guided_enabled: config.guided_dim > 0,
        weight_decay: 0.0,
    };
    let after = train(&model, &table, &split, &step)?.table;
    let frozen_grad_max_abs = after
        .guided()
        .iter()
        .zip(&guided)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    Ok(GradCheckReport {
        passed: max_rel_error < tolerance && frozen_grad_max_abs == 0.0,
        max_rel_error,
        worst,
        checked,
        frozen_grad_max_abs,
        guided_sensitivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gru_concat_gradients() {
        let report = grad_check(
            &GradCheckConfig::small(EncoderKind::Gru, UserVariant::ConcatUser),
            1e-5,
            1e-3,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn attention_refined_gradients() {
        let mut cfg = GradCheckConfig::small(EncoderKind::Attention, UserVariant::SequenceRefined);
        cfg.num_heads = 7;
        let report = grad_check(&cfg, 1e-5, 1e-3).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.guided_sensitivity > 0.0);
    }
}
