//! Command-line front end: `synth`, `cv`, `train` and `importance`.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{ImportanceSection, RunConfig};

use crate::data::{fit_standardizer, generate_table, stratified_holdout, stratified_k_fold, Dataset, GeneratorSpec, RawTable};
use crate::error::{Error, Result};
use crate::eval::{run_cv, write_pr_csv, CvReport, Summary, VALIDATION_FRACTION};
use crate::importance::{permutation_importance, ImportanceReport, PermutationMode};
use crate::model::{load_checkpoint, save_checkpoint, InputLayout, ModelKind};
use crate::train::{train, TrainLog};

#[derive(Debug, Parser)]
#[command(name = "tabformer", version, about = "Tabular transformer training, cross-validation and feature importance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a generator spec.
    Synth {
        /// Generator spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, short)]
        n: usize,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Stratified k-fold cross-validation.
    Cv(RunArgs),
    /// Fit one model on the whole dataset.
    Train(RunArgs),
    /// Permutation importance of a fold checkpoint on its held-out fold.
    Importance {
        #[command(flatten)]
        run: RunArgs,
        /// Model manifest written by `cv` (fold_<i>_model.json).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Held-out fold to score on; defaults to the config's.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        top_n: Option<usize>,
        /// Leave columns unpermuted (all drops are zero).
        #[arg(long)]
        identity: bool,
    },
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Run config (JSON). Flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_parser = parse_kind)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub k_folds: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunArgs {
    /// Config file (or defaults) with flag overrides applied, resolved.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.data {
            cfg.data = Some(v.clone());
        }
        if let Some(v) = &self.target {
            cfg.target = Some(v.clone());
        }
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.k_folds {
            cfg.k_folds = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        cfg.resolve()
    }
}

/// Parses `args` and runs the command, printing a summary to stdout.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Config(e.to_string().trim_end().to_string())),
    };
    match cli.command {
        Command::Synth { spec, out, n, seed } => {
            let summary = cmd_synth(&spec, &out, n, seed)?;
            println!(
                "wrote {} rows to {} (prevalence {:.4})",
                summary.rows,
                out.display(),
                summary.prevalence
            );
        }
        Command::Cv(args) => {
            let cfg = args.resolve()?;
            let report = cmd_cv(&cfg)?;
            print!("{}", summary_table(&report));
            println!("artifacts in {}", cfg.out.display());
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let log = cmd_train(&cfg)?;
            println!(
                "best epoch {} of {} (validation loss {:.6}); model in {}",
                log.best_epoch,
                log.epochs.len(),
                log.best_val_loss,
                cfg.out.display()
            );
        }
        Command::Importance {
            run,
            checkpoint,
            fold,
            repeats,
            top_n,
            identity,
        } => {
            let mut cfg = run.resolve()?;
            if let Some(f) = fold {
                cfg.importance.fold = f;
            }
            if let Some(r) = repeats {
                cfg.importance.repeats = r;
            }
            if top_n.is_some() {
                cfg.importance.top_n = top_n;
            }
            if identity {
                cfg.importance.mode = PermutationMode::Identity;
            }
            let report = cmd_importance(&cfg, &checkpoint)?;
            println!("baseline F1 {:.4}", report.baseline_f1);
            for f in report.features.iter().take(cfg.importance.top_n.unwrap_or(10)) {
                println!("{:>4}  {:<24} {:+.4} ± {:.4}", f.rank, f.feature, f.mean_drop, f.std_drop);
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSummary {
    pub rows: usize,
    pub prevalence: f64,
}

/// Writes `n` generated rows as CSV; missing cells are left empty.
pub fn cmd_synth(spec_path: &Path, out: &Path, n: usize, seed: Option<u64>) -> Result<SynthSummary> {
    let text = fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let mut spec: GeneratorSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let table = generate_table(n, &spec)?;
    let target = table
        .header
        .iter()
        .position(|h| *h == spec.target)
        .expect("generator writes its target column");
    let positives = table.rows.iter().filter(|r| r[target] == "1").count();
    table.write_csv(out)?;
    Ok(SynthSummary {
        rows: n,
        prevalence: if n == 0 { 0.0 } else { positives as f64 / n as f64 },
    })
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let table = RawTable::read_csv(cfg.data_path())?;
    Dataset::from_raw(&table, cfg.target_column(), &cfg.load)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Cross-validates and writes `cv_report.json`, `resolved_config.json` and
/// per fold `fold_<i>_pr.csv`, `fold_<i>_trainlog.json` and a
/// `fold_<i>_model.json`/`.bin` checkpoint.
pub fn cmd_cv(cfg: &RunConfig) -> Result<CvReport> {
    let data = load_dataset(cfg)?;
    let run = run_cv(&data, &cfg.model_spec(), &cfg.train, &cfg.cv_settings())?;

    let out = &cfg.out;
    create_dir(out)?;
    write_json(&out.join("resolved_config.json"), cfg)?;
    for (report, fold) in run.report.folds.iter().zip(&run.folds) {
        let i = report.fold;
        write_pr_csv(&report.pr_curve, &out.join(format!("fold_{i}_pr.csv")))?;
        write_json(&out.join(format!("fold_{i}_trainlog.json")), &fold.log)?;
        save_checkpoint(
            &fold.model,
            &cfg.model_config,
            &fold.schema,
            cfg.seed.wrapping_add(i as u64),
            &out.join(format!("fold_{i}_model.json")),
        )?;
    }
    write_json(&out.join("cv_report.json"), &run.report)?;
    Ok(run.report)
}

/// Fits on all rows except a stratified validation carve and writes
/// `model.json`/`.bin`, `trainlog.json` and `resolved_config.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainLog> {
    let data = load_dataset(cfg)?;
    let all: Vec<usize> = (0..data.n_rows()).collect();
    let (train_rows, val_rows) = stratified_holdout(&all, data.labels(), VALIDATION_FRACTION, cfg.seed)?;
    let standardizer = fit_standardizer(&data, &train_rows)?;
    let train_set = standardizer.apply(&data.subset(&train_rows))?;
    let val_set = standardizer.apply(&data.subset(&val_rows))?;
    let init = cfg.model_spec().build(&InputLayout::from_schema(train_set.schema()), cfg.seed)?;
    let (model, log) = train(&init, &train_set, &val_set, &cfg.train)?;

    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("resolved_config.json"), cfg)?;
    write_json(&cfg.out.join("trainlog.json"), &log)?;
    save_checkpoint(&model, &cfg.model_config, train_set.schema(), cfg.seed, &cfg.out.join("model.json"))?;
    Ok(log)
}

/// Scores a checkpoint on held-out fold `cfg.importance.fold` (fold
/// assignment recomputed from the config's seed and `k_folds`) and writes
/// `importance.json` and `importance.csv`.
pub fn cmd_importance(cfg: &RunConfig, checkpoint: &Path) -> Result<ImportanceReport> {
    let data = load_dataset(cfg)?;
    let (model, manifest) = load_checkpoint(checkpoint)?;
    if data.schema().fingerprint() != manifest.schema_fingerprint {
        return Err(Error::Data(format!(
            "{}: checkpoint schema does not match {}",
            checkpoint.display(),
            cfg.data_path().display()
        )));
    }
    let fold = cfg.importance.fold;
    if fold >= cfg.k_folds {
        return Err(Error::Config(format!("fold {fold} out of range for k_folds = {}", cfg.k_folds)));
    }
    let folds = stratified_k_fold(data.labels(), cfg.k_folds, cfg.seed)?;
    let held_out = manifest.standardizer().apply(&data.subset(&folds.test_rows(fold)))?;
    let report = permutation_importance(&model, &held_out, &cfg.importance_options())?;

    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("resolved_config.json"), cfg)?;
    write_json(&cfg.out.join("importance.json"), &report)?;
    report.write_csv(&cfg.out.join("importance.csv"), cfg.importance.top_n)?;
    Ok(report)
}

/// `metric  mean ± std` rows for the five reported metrics.
pub fn summary_table(report: &CvReport) -> String {
    let rows: [(&str, Summary); 5] = [
        ("accuracy", report.accuracy),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f1", report.f1),
        ("auprc", report.auprc),
    ];
    let mut out = format!("{} ({}-fold, threshold {})\n", report.model, report.k, report.threshold);
    out.push_str(&format!("{:<10} {:>17}\n", "metric", "mean ± std"));
    for (name, s) in rows {
        out.push_str(&format!("{:<10} {:>8.4} ± {:.4}\n", name, s.mean, s.std));
    }
    out
}
