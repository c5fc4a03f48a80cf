use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use guidedrec::aspects::Domain;
use guidedrec::corpus::{
    generate_synthetic, load_metadata, load_reviews, preprocess, read_archive, split_leave_one_out,
    write_archive, DatasetArchive, FilterConfig, SyntheticSpec,
};
use guidedrec::guided::{
    build_table, fit_normalizer, load_normalizer, load_table, save_normalizer, save_table,
};
use guidedrec::guided::{RefinedConfig, DEFAULT_EPSILON};
use guidedrec::harness::{
    ablate_base_dim, ablate_finetune_task, ablate_guided_dim, ablate_mu, build_backend,
    interpretability_report, load_guided_inputs, prepare_data, render_ablation, render_base_dim,
    render_comparison, render_task_ablation, resolve_catalog, run_experiment, score_subjects,
    write_ablation, write_base_dim, write_task_ablation, ArchiveSection, BackendChoice, DataConfig,
    ExperimentConfig,
};
use guidedrec::metrics::format_improvement;
use guidedrec::seqrec::{
    evaluate, load_checkpoint, save_checkpoint, train, EncoderKind, Model, ModelCheckpoint,
    ModelConfig, TrainConfig, UserVariant,
};

#[derive(Parser)]
#[command(
    name = "guidedrec",
    version,
    about = "Guided embedding refinement for sequential recommendation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean review and metadata JSON-lines files into a dataset archive.
    Ingest {
        #[arg(long)]
        reviews: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_user: usize,
        #[arg(long, default_value_t = 5)]
        min_item: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a planted-preference dataset archive.
    Synth {
        #[arg(long, default_value_t = 300)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 12)]
        aspects: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every item and user of a dataset on the catalog's aspects.
    Score {
        #[arg(long)]
        dataset: PathBuf,
        /// movies, clothing, games, generic, or a catalog JSON file.
        #[arg(long, default_value = "movies")]
        catalog: String,
        /// Number of aspects to keep; defaults to the whole catalog.
        #[arg(long)]
        aspects: Option<usize>,
        #[arg(long, value_enum, default_value_t = BackendArg::Oracle)]
        backend: BackendArg,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Mock backend seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Share of subjects that may stay unscorable.
        #[arg(long, default_value_t = 0.0)]
        exclusion_budget: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the guided-score normalizer for a refined dimension.
    Normalize {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 60)]
        refined_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an embedding table: pure base without --scores, refined with.
    Table {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Normalizer file; fitted from --scores when absent.
        #[arg(long)]
        normalizer: Option<PathBuf>,
        #[arg(long, default_value_t = 48)]
        base_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a sequential recommender on a table and save a checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "attn")]
        encoder: EncoderKind,
        #[arg(long, default_value = "concat")]
        variant: UserVariant,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.0)]
        weight_decay: f64,
        #[arg(long, default_value_t = 1)]
        heads: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the leave-one-out test targets.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
        ks: Vec<usize>,
    },
    /// Base vs refined comparison from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Ablation sweeps from a config file.
    Ablate {
        #[arg(value_enum)]
        kind: AblationKind,
        #[arg(long)]
        config: PathBuf,
        /// Sweep values; defaults depend on the kind.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Per-aspect scores and normalized differences for one user and item.
    Explain {
        /// guided_scores.json written by `score` or `run`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        item: String,
        #[arg(long, value_delimiter = ',')]
        aspects: Vec<String>,
        /// Print the machine-readable block instead of the table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Oracle,
    Http,
    Surrogate,
}

impl From<BackendArg> for BackendChoice {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Mock => BackendChoice::Mock,
            BackendArg::Oracle => BackendChoice::Oracle,
            BackendArg::Http => BackendChoice::Http,
            BackendArg::Surrogate => BackendChoice::Surrogate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationKind {
    GuidedDim,
    BaseDim,
    Mu,
    Task,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest {
            reviews,
            meta,
            min_user,
            min_item,
            out,
        } => {
            let reviews = load_reviews(&reviews)?;
            let meta = load_metadata(&meta)?;
            info!(
                "{} reviews ({} malformed), {} items ({} malformed, {} duplicates)",
                reviews.records.len(),
                reviews.malformed,
                meta.records.len(),
                meta.malformed,
                meta.duplicates
            );
            let filter = FilterConfig {
                min_item_interactions: min_item,
                min_user_interactions: min_user,
            };
            let dataset = preprocess(&reviews.records, &meta.records, filter)?;
            let stats = dataset.stats();
            write_archive(&out, &DatasetArchive::new(dataset, None))?;
            println!(
                "{} users, {} items, {} reviews -> {}",
                stats.num_users,
                stats.num_items,
                stats.num_reviews,
                out.display()
            );
        }
        Command::Synth {
            users,
            items,
            aspects,
            seed,
            noise,
            temperature,
            out,
        } => {
            let defaults = SyntheticSpec::default();
            let spec = SyntheticSpec {
                num_users: users,
                num_items: items,
                m: aspects,
                seed,
                noise_scale: noise.unwrap_or(defaults.noise_scale),
                temperature: temperature.unwrap_or(defaults.temperature),
                ..defaults
            };
            let (dataset, truth) = generate_synthetic(&spec)?;
            let stats = dataset.stats();
            write_archive(&out, &DatasetArchive::new(dataset, Some(truth)))?;
            println!(
                "{} users, {} items, {} interactions -> {}",
                stats.num_users,
                stats.num_items,
                stats.num_reviews,
                out.display()
            );
        }
        Command::Score {
            dataset,
            catalog,
            aspects,
            backend,
            cache,
            endpoint,
            model,
            seed,
            exclusion_budget,
            out,
        } => {
            let mut config =
                ExperimentConfig::with_data(DataConfig::Archive(ArchiveSection { path: dataset }));
            let is_name =
                catalog.eq_ignore_ascii_case("generic") || catalog.parse::<Domain>().is_ok();
            if is_name {
                config.catalog.domain = catalog;
            } else {
                config.catalog.file = Some(PathBuf::from(catalog));
            }
            config.backend.kind = backend.into();
            config.backend.cache = cache;
            config.backend.endpoint = endpoint;
            config.backend.model = model;
            config.backend.seed = seed;
            config.backend.exclusion_budget = exclusion_budget;
            let data = prepare_data(&config.data)?;
            config.refined.guided_dim = match aspects {
                Some(k) => k,
                None => full_catalog_len(&config)?,
            };
            let catalog = resolve_catalog(&config)?;
            let backend = build_backend(&config, &data)?;
            let scores = score_subjects(&config, &data, &backend, &catalog)?;
            write_json(&out, &scores)?;
            println!(
                "{} items, {} users on {} aspects -> {}",
                scores.items.len(),
                scores.users.len(),
                scores.aspects.len(),
                out.display()
            );
        }
        Command::Normalize {
            scores,
            refined_dim,
            out,
        } => {
            let scores = load_guided_inputs(&scores)?;
            let rows: Vec<Vec<f64>> = scores.items.values().cloned().collect();
            let normalizer = fit_normalizer(&rows, refined_dim, DEFAULT_EPSILON)?;
            save_normalizer(&out, &normalizer)?;
            println!(
                "{} aspects, target std {:.6}, {} constant -> {}",
                normalizer.m(),
                normalizer.target_std,
                normalizer.degenerate_dims().len(),
                out.display()
            );
        }
        Command::Table {
            dataset,
            scores,
            normalizer,
            base_dim,
            mu,
            seed,
            out,
        } => {
            let archive = read_archive(&dataset)?;
            let ids = archive.dataset.item_ids();
            let table = match scores {
                None => build_table(&ids, None, None, RefinedConfig::pure_base(base_dim)?, seed)?,
                Some(path) => {
                    let scores = load_guided_inputs(&path)?;
                    let config = RefinedConfig::new(base_dim, scores.aspects.len(), mu)?;
                    let normalizer = match normalizer {
                        Some(p) => load_normalizer(&p)?,
                        None => {
                            let rows: Vec<Vec<f64>> = scores.items.values().cloned().collect();
                            fit_normalizer(&rows, config.refined_dim(), DEFAULT_EPSILON)?
                        }
                    };
                    let mut table =
                        build_table(&ids, Some(&scores.items), Some(&normalizer), config, seed)?;
                    table.attach_user_scores(&scores.users)?;
                    table
                }
            };
            save_table(&out, &table)?;
            println!(
                "{} items, {} base + {} guided dims -> {}",
                table.len(),
                table.base_dim(),
                table.guided_dim(),
                out.display()
            );
        }
        Command::Train {
            dataset,
            table,
            encoder,
            variant,
            epochs,
            batch_size,
            lr,
            weight_decay,
            heads,
            seed,
            out,
        } => {
            let split = split_leave_one_out(&read_archive(&dataset)?.dataset);
            let table = load_table(&table)?;
            let mut model_config = ModelConfig::for_table(encoder, variant, table.config());
            model_config.num_heads = heads;
            let model = Model::new(model_config, table.config(), seed)?;
            let config = TrainConfig {
                epochs,
                batch_size,
                learning_rate: lr,
                seed,
                mu: table.mu(),
                guided_enabled: table.guided_dim() > 0,
                weight_decay,
            };
            let outcome = train(&model, &table, &split, &config)?;
            if let Some(loss) = outcome.loss_curve.last() {
                println!("final training loss {loss:.4}");
            }
            save_checkpoint(&out, &ModelCheckpoint::new(outcome.model, outcome.table))?;
            println!("checkpoint -> {}", out.display());
        }
        Command::Eval { model, dataset, ks } => {
            let checkpoint = load_checkpoint(&model)?;
            let split = split_leave_one_out(&read_archive(&dataset)?.dataset);
            let report = evaluate(&checkpoint.model, &checkpoint.table, &split, &ks)?;
            for (name, value) in report.rows() {
                println!("{name:<10} {value:.4}");
            }
            println!("{} test users", report.n_users);
        }
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let report = run_experiment(&config)?;
            print!("{}", render_comparison(&report));
            println!("runtime: {:.1}s", report.runtime_secs);
        }
        Command::Ablate {
            kind,
            config,
            values,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let dir = config.out.dir.clone();
            match kind {
                AblationKind::GuidedDim => {
                    let dims = as_dims(&values, &[3, 6, 9, 12])?;
                    let report = ablate_guided_dim(&config, &dims)?;
                    print!("{}", render_ablation(&report));
                    if let Some(dir) = dir {
                        write_ablation(&dir, "ablation_guided_dim", &report)?;
                    }
                }
                AblationKind::BaseDim => {
                    let dims = as_dims(&values, &[10, 20, 40, 60, 120, 180, 240])?;
                    let report = ablate_base_dim(&config, &dims)?;
                    print!("{}", render_base_dim(&report));
                    if let Some(dir) = dir {
                        write_base_dim(&dir, &report)?;
                    }
                }
                AblationKind::Mu => {
                    let mus = if values.is_empty() {
                        vec![0.25, 0.5, 1.0, 2.0, 4.0]
                    } else {
                        values
                    };
                    let report = ablate_mu(&config, &mus)?;
                    print!("{}", render_ablation(&report));
                    if let Some(dir) = dir {
                        write_ablation(&dir, "ablation_mu", &report)?;
                    }
                }
                AblationKind::Task => {
                    let report = ablate_finetune_task(&config)?;
                    print!("{}", render_task_ablation(&report));
                    if let Some(dir) = dir {
                        write_task_ablation(&dir, &report)?;
                    }
                }
            }
        }
        Command::Explain {
            scores,
            user,
            item,
            aspects,
            json,
        } => {
            let scores = load_guided_inputs(&scores)?;
            let report = interpretability_report(&user, &item, &scores, &aspects)?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.render_text());
                if let Some(best) = report
                    .aspects
                    .iter()
                    .min_by(|a, b| a.normalized_difference.total_cmp(&b.normalized_difference))
                {
                    println!(
                        "closest aspect: {} ({} alignment)",
                        best.aspect,
                        format_improvement(Some(100.0 * (1.0 - best.normalized_difference)))
                    );
                }
            }
        }
    }
    Ok(())
}

fn full_catalog_len(config: &ExperimentConfig) -> Result<usize> {
    if let Some(path) = &config.catalog.file {
        return Ok(guidedrec::aspects::AspectCatalog::from_file(path)?.len());
    }
    if config.catalog.domain.eq_ignore_ascii_case("generic") {
        bail!("--aspects is required with the generic catalog");
    }
    Ok(guidedrec::aspects::builtin_catalog(config.catalog.domain.parse()?)?.len())
}

fn as_dims(values: &[f64], default: &[usize]) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Ok(default.to_vec());
    }
    values
        .iter()
        .map(|&v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                bail!("dimension {v} is not a positive integer")
            }
        })
        .collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    std::fs::write(path, body + "\n").with_context(|| format!("writing {}", path.display()))
}
