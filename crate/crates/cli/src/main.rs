//! `bae` — train and evaluate boosted autoencoder ensembles.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boosted_ae::anomaly::{build_one_class_split, eval_anomaly};
use boosted_ae::boost::{train_boosted, train_single_ae};
use boosted_ae::cluster::{eval_clustering, Reducer};
use boosted_ae::data::{split, Dataset};
use boosted_ae::error::{Error, Result};
use boosted_ae::gradcheck::{run_gradcheck, REL_TOL};
use boosted_ae::persist::{emit_report, load_model, save_model, EvalReport};
use boosted_ae::EnsembleModel;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "bae", about = "Boosted autoencoder training and evaluation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the training seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the architecture preset from the config.
    #[arg(long)]
    preset: Option<String>,
    /// Shrink ensemble size, iterations, batches and synthetic data to
    /// desk-scale presets.
    #[arg(long)]
    desk_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the boosted ensemble and save model + trace report.
    TrainBoosted(CommonOpts),
    /// Train the single-AE baseline and save model + trace report.
    TrainSingle(CommonOpts),
    /// Score a trained model on one-class splits and report AUC per class.
    EvalAnomaly {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Cluster encoded data with K-means and report NMI per reducer.
    EvalCluster {
        /// Trained ensemble archive; required when the boosted-ae reducer
        /// is requested.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Verify backpropagation against finite differences for every layer kind.
    Gradcheck {
        #[arg(long, default_value_t = 1234)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        configs: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &CommonOpts) -> Result<RunConfig> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.boost.seed = seed;
        config.single.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    if let Some(preset) = &common.preset {
        config.architecture.preset = Some(preset.clone());
        config.architecture.encoder = None;
        config.architecture.decoder = None;
    }
    if common.desk_scale {
        config.apply_desk_scale();
    }
    Ok(config)
}

/// Train/val sets per the config: one-class split when requested, plain
/// stratified split otherwise.
fn resolve_train_val(config: &RunConfig, dataset: &Dataset) -> Result<(Dataset, Dataset)> {
    match &config.dataset.one_class {
        Some(oc) => {
            let s = build_one_class_split(dataset, oc.normal_class, oc.val_fraction, oc.seed)?;
            Ok((s.train, s.val))
        }
        None => {
            let (train, val, _) = split(dataset, config.dataset.split, config.dataset.split_seed)?;
            Ok((train, val))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::TrainBoosted(common) => {
            let config = load_config(&common)?;
            let (enc, dec) = config.architecture.resolve()?;
            let dataset = config.dataset.load()?;
            let (train, val) = resolve_train_val(&config, &dataset)?;
            let boost_config = config.boost.to_boost_config();
            boost_config.validate()?;
            eprintln!(
                "training boosted AE: M={} I={} Q={} on {} samples ({} validation)",
                boost_config.num_encoders,
                boost_config.iterations,
                boost_config.batch_size,
                train.len(),
                val.len()
            );
            let (model, trace) =
                train_boosted(&enc, &dec, &train.samples, &val.samples, &boost_config)?;
            let mut report = EvalReport::new("train-boosted");
            report.config = serde_json::to_value(&config)?;
            report.trace = trace.rows;
            finish_training(&config, &model, report)
        }
        Command::TrainSingle(common) => {
            let config = load_config(&common)?;
            let (enc, dec) = config.architecture.resolve()?;
            let dataset = config.dataset.load()?;
            let (train, val) = resolve_train_val(&config, &dataset)?;
            let s = &config.single;
            eprintln!(
                "training single AE: {} epochs, batch {} on {} samples",
                s.epochs,
                s.batch_size,
                train.len()
            );
            let (encoder, decoder, trace) = train_single_ae(
                &enc,
                &dec,
                &train.samples,
                &val.samples,
                s.epochs,
                s.batch_size,
                &boosted_ae::AdamConfig::with_lr(s.learning_rate),
                s.init,
                s.seed,
            )?;
            // a single AE is the M=1 ensemble
            let model = EnsembleModel {
                encoders: vec![encoder],
                decoder,
                trained_stages: 1,
            };
            let mut report = EvalReport::new("train-single");
            report.config = serde_json::to_value(&config)?;
            report.trace = trace.rows;
            finish_training(&config, &model, report)
        }
        Command::EvalAnomaly { model, common } => {
            let config = load_config(&common)?;
            let oc = config.dataset.one_class.clone().ok_or_else(|| {
                Error::Config("eval-anomaly requires a [dataset.one_class] section".into())
            })?;
            let model = load_model(&model)?;
            let dataset = config.dataset.load()?;
            let classes = config
                .eval
                .anomaly
                .as_ref()
                .and_then(|a| a.normal_classes.clone())
                .unwrap_or_else(|| vec![oc.normal_class]);
            let mut report = EvalReport::new("eval-anomaly");
            report.config = serde_json::to_value(&config)?;
            for class in classes {
                let s = build_one_class_split(&dataset, class, oc.val_fraction, oc.seed)?;
                report.merge(eval_anomaly(&model, &s)?);
            }
            for m in &report.metrics {
                println!("{} {} = {:.4}", m.context, m.name, m.value);
            }
            emit_report(&report, &config.output.dir)?;
            eprintln!("report written to {}", config.output.dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::EvalCluster { model, common } => {
            let config = load_config(&common)?;
            let cluster = config.eval.cluster.clone().ok_or_else(|| {
                Error::Config("eval-cluster requires an [eval.cluster] section".into())
            })?;
            let dataset = config.dataset.load()?;
            let labels = dataset
                .labels
                .clone()
                .ok_or_else(|| Error::Config("eval-cluster requires labeled data".into()))?;
            let loaded_model = match &model {
                Some(p) => Some(load_model(p)?),
                None => None,
            };
            let mut report = EvalReport::new("eval-cluster");
            report.config = serde_json::to_value(&config)?;
            for name in &cluster.reducers {
                let reducer = match name.as_str() {
                    "boosted-ae" => Reducer::Ensemble(loaded_model.as_ref().ok_or_else(|| {
                        Error::Config("reducer boosted-ae requires --model".into())
                    })?),
                    "pca" => Reducer::Pca(cluster.pca_target()?),
                    "identity" => Reducer::Identity,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown reducer {other:?}; expected boosted-ae, pca or identity"
                        )))
                    }
                };
                report.merge(eval_clustering(
                    &reducer,
                    &dataset.samples,
                    &labels,
                    cluster.k,
                    &cluster.seeds,
                )?);
            }
            for m in &report.metrics {
                println!("{} {} = {:.4}", m.context, m.name, m.value);
            }
            emit_report(&report, &config.output.dir)?;
            eprintln!("report written to {}", config.output.dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { seed, configs } => {
            let mut failed = false;
            for r in run_gradcheck(seed, configs)? {
                let status = if r.pass() { "pass" } else { "FAIL" };
                println!(
                    "{status} {:<12} max_rel_err {:.3e} (tol {REL_TOL:.0e}, {} configs)",
                    r.kind, r.max_rel_err, r.configs
                );
                failed |= !r.pass();
            }
            Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
    }
}

fn finish_training(config: &RunConfig, model: &EnsembleModel, report: EvalReport) -> Result<ExitCode> {
    let dir: &Path = &config.output.dir;
    std::fs::create_dir_all(dir)?;
    save_model(model, &dir.join("model.bae"))?;
    emit_report(&report, dir)?;
    if let Some(val) = report.trace.iter().rev().find_map(|r| r.val_mse) {
        println!("final validation MSE = {val:.6}");
    }
    eprintln!("model and report written to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}
