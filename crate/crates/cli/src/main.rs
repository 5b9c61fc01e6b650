//! `emoscale` command-line driver.

mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use emoscale::data::{load_dataset, synth_generate, validate_dataset, write_dataset, Dataset, Target};
use emoscale::metrics::report::{AurocMode, Report};
use emoscale::model::gradcheck::{run_gradcheck, GradcheckOptions};
use emoscale::model::{load_params, save_params};
use emoscale::preprocess::{build_windows, write_windows, WindowBatch};
use emoscale::training::{
    cv_fold_split, evaluate, run_cv, split_kfold, split_tvt, train, SplitMode, TrialSplit,
};

use config::RunConfig;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "emoscale", version, about = "Multi-scale CNN for EEG emotion recognition")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset manifest or directory.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    target: Option<TargetArg>,
    /// Fill the AUROC column with the balanced single-threshold rate.
    #[arg(long, global = true)]
    paper_parity_auroc: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Valence,
    Arousal,
    Dominance,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Valence => Target::Valence,
            TargetArg::Arousal => Target::Arousal,
            TargetArg::Dominance => Target::Dominance,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum SplitPart {
    Train,
    Val,
    Test,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset in the interchange format.
    Synth,
    /// Validate a dataset and write its preprocessed windows.
    Preprocess,
    /// Train one model and write its checkpoint and history.
    Train {
        /// Fold used as the test set in kfold mode.
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Evaluate a checkpoint on one side of the configured split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitPart::Test)]
        split: SplitPart,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Cross-validate and report every fold plus the mean.
    Cv,
    /// Finite-difference gradient check on the tiny network.
    Gradcheck {
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        /// Add this offset to one analytic gradient entry (fault injection).
        #[arg(long, hide = true)]
        perturb: Option<f64>,
    },
    /// Re-render a JSON report as TSV, optionally switching the AUROC column.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    cfg.apply_seed();
    if cli.out.is_some() {
        cfg.out.clone_from(&cli.out);
    }
    if cli.dataset.is_some() {
        cfg.dataset.clone_from(&cli.dataset);
    }
    if let Some(t) = cli.target {
        cfg.train.target = t.into();
    }
    if cli.paper_parity_auroc {
        cfg.report.auroc_mode = AurocMode::PaperParity;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn append_log(out: &Path, name: &str, lines: &str) -> Result<()> {
    let path = out.join(name);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    let stamp = chrono::Local::now().to_rfc3339();
    for line in lines.lines() {
        writeln!(f, "{stamp} {line}")?;
    }
    Ok(())
}

fn load_checked(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.dataset_path()?;
    let d = load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?;
    let report = validate_dataset(&d);
    if !report.valid {
        let first = report.errors().next().map(|i| i.message.clone()).unwrap_or_default();
        bail!(
            "dataset {} failed validation ({} errors); first: {first}",
            path.display(),
            report.errors().count()
        );
    }
    Ok(d)
}

fn windows_for(cfg: &RunConfig, d: &Dataset) -> Result<WindowBatch> {
    let w = build_windows(d, &cfg.preprocess)?;
    anyhow::ensure!(
        w.channels == cfg.model.channels && w.window_samples == cfg.model.window_samples,
        "windows are {}x{} but the model expects {}x{}; adjust [model] or [preprocess]",
        w.channels,
        w.window_samples,
        cfg.model.channels,
        cfg.model.window_samples
    );
    Ok(w)
}

fn split_for(cfg: &RunConfig, n_trials: usize, fold: usize) -> Result<TrialSplit> {
    Ok(match cfg.split.mode {
        SplitMode::Tvt => split_tvt(n_trials, &cfg.split)?,
        SplitMode::Kfold => {
            let folds = split_kfold(n_trials, &cfg.split)?;
            anyhow::ensure!(fold < folds.len(), "fold {fold} out of range 0..{}", folds.len());
            cv_fold_split(&folds, fold, &cfg.split)
        }
    })
}

fn write_report(out: &Path, stem: &str, report: &Report) -> Result<()> {
    write_file(&out.join(format!("{stem}.tsv")), &report.to_tsv())?;
    write_file(&out.join(format!("{stem}.json")), &report.to_json())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Synth => {
            let out = create_out(&cfg)?;
            let d = synth_generate(&cfg.synth)?;
            let manifest = write_dataset(&d, &out)?;
            println!("wrote {} trials to {}", d.len(), manifest.display());
        }
        Command::Preprocess => {
            let d = load_dataset(cfg.dataset_path()?)?;
            let out = create_out(&cfg)?;
            let report = validate_dataset(&d);
            write_file(
                &out.join("validation.json"),
                &(serde_json::to_string_pretty(&report)? + "\n"),
            )?;
            for w in report.warnings() {
                eprintln!("warning: {}", w.message);
            }
            if !report.valid {
                bail!(
                    "dataset failed validation with {} errors; see {}",
                    report.errors().count(),
                    out.join("validation.json").display()
                );
            }
            let w = build_windows(&d, &cfg.preprocess)?;
            let manifest = write_windows(&w, out.join("windows"))?;
            println!("wrote {} windows to {}", w.len(), manifest.display());
        }
        Command::Train { fold } => {
            let d = load_checked(&cfg)?;
            let w = windows_for(&cfg, &d)?;
            let split = split_for(&cfg, d.len(), fold)?;
            let out = create_out(&cfg)?;
            let trained = train(&w, &split, &cfg.model, &cfg.train)?;
            save_params(&trained.params, &cfg.model, out.join("checkpoint"))?;
            write_file(&out.join("history.tsv"), &trained.history.to_tsv())?;
            write_file(&out.join("split.json"), &(serde_json::to_string_pretty(&split)? + "\n"))?;
            write_file(&out.join("config.json"), &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
            append_log(&out, "train.log", &trained.history.timing_log())?;
            println!(
                "trained {} epochs, best epoch {}; checkpoint in {}",
                trained.history.epochs.len(),
                trained.history.best_epoch,
                out.join("checkpoint").display()
            );
        }
        Command::Eval {
            checkpoint,
            split,
            fold,
        } => {
            let d = load_checked(&cfg)?;
            let w = windows_for(&cfg, &d)?;
            let params = load_params(&checkpoint, &cfg.model)
                .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let s = split_for(&cfg, d.len(), fold)?;
            let trials: Vec<usize> = match split {
                SplitPart::Train => s.train,
                SplitPart::Val => s.val,
                SplitPart::Test => s.test,
                SplitPart::All => (0..d.len()).collect(),
            };
            let ev = evaluate(&params, &cfg.model, &w, &trials, cfg.train.target)?;
            let m = ev.metrics(cfg.report.threshold)?;
            let label = format!("{split:?}").to_lowercase();
            let mut report = Report::new(format!("eval {}", cfg.train.target), cfg.report.auroc_mode);
            report.push(label, &m);
            let out = create_out(&cfg)?;
            write_report(&out, "report", &report)?;
            println!("accuracy {:.6} over {} windows", m.accuracy, ev.scores.len());
        }
        Command::Cv => {
            let d = load_checked(&cfg)?;
            let w = windows_for(&cfg, &d)?;
            let out = create_out(&cfg)?;
            let cv = run_cv(&w, d.len(), &cfg.model, &cfg.train, &cfg.split)?;
            let mut report = Report::new(format!("cv {}", cfg.train.target), cfg.report.auroc_mode);
            let mut timings = String::new();
            for (f, fold) in cv.folds.iter().enumerate() {
                report.push(format!("fold{}", f + 1), &fold.metrics);
                write_file(&out.join(format!("history_fold{}.tsv", f + 1)), &fold.history.to_tsv())?;
                for line in fold.history.timing_log().lines() {
                    timings.push_str(&format!("fold{} {line}\n", f + 1));
                }
            }
            report.push("mean", &cv.mean);
            write_report(&out, "cv_report", &report)?;
            append_log(&out, "cv.log", &timings)?;
            println!("mean accuracy {:.6} over {} folds", cv.mean.accuracy, cv.folds.len());
        }
        Command::Gradcheck {
            dropout,
            epsilon,
            perturb,
        } => {
            if dropout != 0.0 {
                bail!("gradient check requires dropout 0 (got {dropout}); dropout masks make the loss non-deterministic under perturbation");
            }
            let opts = GradcheckOptions {
                epsilon,
                seed: cfg.seed.unwrap_or(0),
                perturb,
                ..Default::default()
            };
            let report = run_gradcheck(&opts)?;
            let passed = report.passed(GRADCHECK_TOLERANCE);
            if let Some(out) = &cfg.out {
                fs::create_dir_all(out)?;
                write_file(
                    &out.join("gradcheck.json"),
                    &(serde_json::to_string_pretty(&report)? + "\n"),
                )?;
            }
            println!(
                "{} max relative error {:.3e} over {} entries (worst {}, tolerance {GRADCHECK_TOLERANCE:e})",
                if passed { "PASS" } else { "FAIL" },
                report.max_rel_err,
                report.checked,
                report.worst
            );
            if !passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Report { input } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let mut report: Report = serde_json::from_str(&text)
                .with_context(|| format!("parsing report {}", input.display()))?;
            report.auroc_mode = cfg.report.auroc_mode;
            for row in &mut report.rows {
                row.auroc = match report.auroc_mode {
                    AurocMode::Sweep => row.auroc_sweep,
                    AurocMode::PaperParity => row.balanced_rate_paper,
                };
            }
            let out = create_out(&cfg)?;
            let stem = input
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("report")
                .to_string();
            write_report(&out, &format!("{stem}_rendered"), &report)?;
            print!("{}", report.to_tsv());
        }
    }
    Ok(ExitCode::SUCCESS)
}
