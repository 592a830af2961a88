use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autolabel::corpus::class_prior;
use autolabel::labelmodel::{
    aggregate, threshold_filter, LabelMatrix, LabelModelKind, WeakDataset,
};
use autolabel::lf::{load_pool, save_pool, write_json};
use autolabel::pipeline::{
    aggregate_subset, evaluate, fit_lfs, load_inputs, load_test, noise_rate, run_pipeline,
    train_final_classifier, FinalFamily, FinalModel, OutputLock, RunConfig,
};
use autolabel::search::{run_search, SearchContext};
use autolabel::synth::{generate_synthetic, write_corpus, PlantedSpec};
use autolabel::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info, warn};

#[derive(Parser, Debug)]
#[command(
    name = "autolabel",
    version,
    about = "Automated weak supervision for text classification"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of classes; overrides the configured one.
    #[arg(long, global = true)]
    classes: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Runs the whole pipeline and writes report.json.
    Run,
    /// Fits, scores and ranks the LF pool; writes <out>/pool.
    FitLfs,
    /// Applies the stored pool to the unlabeled set; writes <out>/label_matrix.csv.
    ApplyLfs,
    /// Aggregates the label matrix and filters by confidence.
    Aggregate {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Comma-separated LF ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        lfs: Option<Vec<String>>,
    },
    /// Two-stage configuration search; writes <out>/search.json.
    Search,
    /// Trains the final classifier on X plus <out>/weak.jsonl.
    TrainFinal {
        /// Weak labels; defaults to <out>/weak.jsonl.
        #[arg(long)]
        weak: Option<PathBuf>,
    },
    /// Evaluates <out>/final_model.json on the test set.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Writes a synthetic corpus with planted LF votes and hidden truth.
    Synth {
        #[arg(long, default_value_t = 50)]
        labeled_per_class: usize,
        #[arg(long, default_value_t = 2000)]
        unlabeled: usize,
        #[arg(long)]
        no_embeddings: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Mv,
    Ds,
    Fs,
}

impl From<ModelArg> for LabelModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Mv => LabelModelKind::MajorityVote,
            ModelArg::Ds => LabelModelKind::DawidSkene,
            ModelArg::Fs => LabelModelKind::FlyingSquid,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(c) = cli.classes {
        cfg.data.num_classes = Some(c);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.out
        .as_deref()
        .ok_or_else(|| Error::Config("an output directory is required (--out)".into()))
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Command::Synth {
        labeled_per_class,
        unlabeled,
        no_embeddings,
    } = cli.command
    {
        let out = cli
            .out
            .as_ref()
            .ok_or_else(|| Error::Config("synth needs --out".into()))?;
        let mut spec = PlantedSpec::toy(cli.seed.unwrap_or(0));
        spec.labeled_per_class = labeled_per_class;
        spec.n_unlabeled = unlabeled;
        if let Some(c) = cli.classes {
            spec.num_classes = c;
            spec.class_balance = vec![1.0 / c as f64; c];
        }
        if no_embeddings {
            spec.embedding_dim = 0;
        }
        spec.validate()?;
        write_corpus(&generate_synthetic(&spec)?, out)?;
        info!("synthetic corpus written to {}", out.display());
        return Ok(());
    }

    let cfg = load_config(cli)?;
    if let Command::Run = cli.command {
        return match run_pipeline(&cfg) {
            Ok(report) => {
                if let Some(m) = &report.metrics {
                    println!("accuracy {:.4}  macro-F1 {:.4}", m.accuracy, m.macro_f1);
                }
                if let Some(s) = &report.search {
                    println!(
                        "best: {} t={} q={} ({} LFs), |U'| = {}",
                        s.best.model,
                        s.best.threshold,
                        s.best.quantile,
                        s.best.lf_ids.len(),
                        s.best.n_weak
                    );
                }
                Ok(())
            }
            Err(failure) => {
                error!("{failure}");
                Err(failure.error)
            }
        };
    }

    let out = out_dir(&cfg)?;
    let _lock = OutputLock::acquire(out)?;
    let pool_dir = out.join("pool");
    let matrix_path = out.join("label_matrix.csv");
    match &cli.command {
        Command::FitLfs => {
            let inputs = load_inputs(&cfg)?;
            let (features, pool, scores) = fit_lfs(&cfg, &inputs)?;
            save_pool(&pool_dir, &pool, &scores, &features)?;
            for s in &scores {
                println!("{:>3}  {:<16} {:.4}", s.rank, s.lf_id, s.dev_accuracy);
            }
        }
        Command::ApplyLfs => {
            let inputs = load_inputs(&cfg)?;
            let stored = load_pool(&pool_dir, inputs.embeddings.clone())?;
            let m = autolabel::labelmodel::build_label_matrix(
                &stored.pool,
                &stored.features,
                &inputs.unlabeled,
            )?;
            m.save_csv(&matrix_path)?;
            println!(
                "{} rows x {} LFs -> {}",
                m.n_rows(),
                m.n_lfs(),
                matrix_path.display()
            );
        }
        Command::Aggregate {
            model,
            threshold,
            lfs,
        } => {
            let inputs = load_inputs(&cfg)?;
            let c = inputs.num_classes();
            let matrix = LabelMatrix::load_csv(&matrix_path, c)?;
            let prior = class_prior(&inputs.labeled)?;
            let kind = LabelModelKind::from(*model);
            let probs = match lfs {
                Some(ids) => aggregate_subset(&matrix, ids, kind, &prior, &cfg.search)?,
                None => aggregate(kind, &matrix, &prior, cfg.search.em)?,
            };
            let weak = threshold_filter(&probs, &inputs.unlabeled, *threshold, c)?;
            probs.save_jsonl(&out.join("probs.jsonl"), matrix.row_ids())?;
            weak.save_jsonl(&out.join("weak.jsonl"))?;
            print!("{kind} at t={threshold}: |U'| = {}", weak.len());
            match inputs.truth.as_ref().and_then(|t| noise_rate(&weak, t)) {
                Some(rate) => println!(", noise rate {rate:.4}"),
                None => println!(),
            }
        }
        Command::Search => {
            let inputs = load_inputs(&cfg)?;
            let stored = load_pool(&pool_dir, inputs.embeddings.clone())?;
            let matrix = LabelMatrix::load_csv(&matrix_path, inputs.num_classes())?;
            let prior = class_prior(&inputs.labeled)?;
            let ctx = SearchContext::new(
                &matrix,
                &inputs.unlabeled,
                &inputs.labeled,
                &stored.features.tfidf,
                prior,
                cfg.seed,
            )?;
            let result = run_search(&ctx, &stored.scores, &cfg.search)?;
            write_json(&out.join("search.json"), &result)?;
            println!(
                "best: {} t={} q={} ({} LFs), proxy accuracy {:.4}",
                result.best.model,
                result.best.threshold,
                result.best.quantile,
                result.best.lf_ids.len(),
                result.best.proxy_score
            );
        }
        Command::TrainFinal { weak } => {
            let inputs = load_inputs(&cfg)?;
            let stored = load_pool(&pool_dir, inputs.embeddings.clone())?;
            let weak_path = weak.clone().unwrap_or_else(|| out.join("weak.jsonl"));
            let weak = if weak_path.is_file() {
                WeakDataset::load_jsonl(&weak_path, inputs.num_classes())?
            } else {
                warn!(
                    "{} not found; training on the labeled set alone",
                    weak_path.display()
                );
                WeakDataset {
                    samples: Vec::new(),
                    num_classes: inputs.num_classes(),
                }
            };
            let family: FinalFamily = cfg.final_model.family.parse()?;
            let model = train_final_classifier(
                &inputs.labeled,
                &weak,
                &stored.features,
                family,
                cfg.final_model.folds,
                cfg.seed,
            )?;
            model.save(&out.join("final_model.json"))?;
            println!(
                "trained on {} samples ({:?})",
                model.train_size, model.hyperparams
            );
        }
        Command::Eval { model } => {
            let test_path = cfg
                .data
                .test
                .as_ref()
                .ok_or_else(|| Error::Config("data.test is required for eval".into()))?;
            let embeddings = cfg
                .data
                .embeddings
                .as_deref()
                .map(autolabel::features::EmbeddingTable::load)
                .transpose()?;
            let stored = load_pool(&pool_dir, embeddings)?;
            let model = FinalModel::load(
                &model
                    .clone()
                    .unwrap_or_else(|| out.join("final_model.json")),
            )?;
            let test = load_test(test_path, model.num_classes())?;
            let metrics = evaluate(&model, &stored.features, &test)?;
            write_json(&out.join("metrics.json"), &metrics)?;
            println!(
                "accuracy {:.4}  macro-F1 {:.4}",
                metrics.accuracy, metrics.macro_f1
            );
        }
        Command::Run | Command::Synth { .. } => unreachable!(),
    }
    Ok(())
}
