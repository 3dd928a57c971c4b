use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sau_core::corpus::{
    build_instances, dataset_stats, load_raw, read_preprocessed, write_preprocessed, DatasetFormat, ProblemInstance,
    RawRecord,
};
use sau_core::eqsolve::solve_tree;
use sau_core::harness::synth::{synthetic_records, Template};
use sau_core::harness::{
    bucket_report, crossvalidate, evaluate_dataset, train, Control, EvalOptions, TrainConfig, TrainedModel,
};
use sau_core::uet::{parse_infix, Decimal, TargetSymbol, Unknown};

#[derive(Parser)]
#[command(
    name = "sau",
    version,
    about = "Train and run a universal expression tree solver for math word problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map numbers to slots and gold equations to prefix sequences.
    Preprocess {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "math23k")]
        format: DatasetFormat,
        /// Comma-separated constant list.
        #[arg(long, value_delimiter = ',')]
        constants: Option<Vec<String>>,
    },
    /// Train a model and write the best checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Training data (preprocessed unless --format says otherwise).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "preprocessed")]
        format: DatasetFormat,
        #[arg(short, long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(short, long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "preprocessed")]
        format: DatasetFormat,
        /// Beam width; defaults to the checkpoint's setting.
        #[arg(long)]
        beam: Option<usize>,
        /// Write one JSON record per problem here.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Keep this many top symbols per step in the records.
        #[arg(long, default_value_t = 0)]
        top_k: usize,
        /// Print accuracy by tree size and problem type.
        #[arg(long)]
        buckets: bool,
    },
    /// K-fold cross-validation.
    Cv {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "preprocessed")]
        format: DatasetFormat,
        #[arg(short, long, default_value_t = 5)]
        folds: usize,
    },
    /// Solve an equation or `;`-separated system given in infix form.
    Solve {
        #[arg(short, long)]
        equation: String,
        /// Slot values for `n0`, `n1`, ... (comma-separated).
        #[arg(long, value_delimiter = ',')]
        slots: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Print dataset statistics.
    Stats {
        input: PathBuf,
        #[arg(long, default_value = "math23k")]
        format: DatasetFormat,
    },
    /// Write a synthetic templated corpus as line-delimited JSON.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(short = 'n', long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set hidden=128`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Start from the smaller hidden-size profile.
    #[arg(long)]
    compact: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None if self.compact => TrainConfig::compact(),
            None => TrainConfig::default(),
        };
        for o in &self.overrides {
            cfg.set(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Constants and instances from a preprocessed or raw file.
fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    constants: &[Decimal],
) -> Result<(Vec<Decimal>, Vec<ProblemInstance>)> {
    if format == DatasetFormat::Preprocessed {
        let (c, instances, _) = read_preprocessed(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok((c, instances));
    }
    let records = load_raw(path, format).with_context(|| format!("reading {}", path.display()))?;
    let report = build_instances(&records, constants);
    if !report.rejected.is_empty() {
        eprintln!("{} of {} records rejected", report.rejected.len(), report.records);
    }
    Ok((constants.to_vec(), report.instances))
}

fn training_data(cfg: &TrainConfig, data: &Option<PathBuf>, format: DatasetFormat) -> Result<Vec<ProblemInstance>> {
    let path = data
        .as_ref()
        .or(cfg.train_path.as_ref())
        .context("no training data: pass --data or set train_path")?;
    let constants = cfg.constants()?;
    let (found, instances) = load_dataset(path, format, &constants)?;
    if found != constants {
        bail!(
            "{} was preprocessed with different constants than the configuration",
            path.display()
        );
    }
    Ok(instances)
}

fn parse_constants(list: &[String]) -> Result<Vec<Decimal>> {
    list.iter()
        .map(|s| Decimal::parse(s.trim()).map_err(|e| anyhow::anyhow!("constant `{s}`: {e}")))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess {
            input,
            output,
            format,
            constants,
        } => {
            let constants = match constants {
                Some(c) => parse_constants(&c)?,
                None => sau_core::corpus::default_constants(),
            };
            let records = load_raw(&input, format).with_context(|| format!("reading {}", input.display()))?;
            let report = build_instances(&records, &constants);
            write_preprocessed(&output, &constants, &report)?;
            println!("records: {}", report.records);
            println!("instances: {}", report.instances.len());
            println!("rejected: {}", report.rejected.len());
            for (id, why) in report.rejected.iter().take(20) {
                eprintln!("  {id}: {why}");
            }
        }
        Command::Train {
            config,
            data,
            format,
            checkpoint,
        } => {
            let mut cfg = config.resolve()?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            let instances = training_data(&cfg, &data, format)?;
            let outcome = train(&cfg, &instances, &mut |r, _| {
                let val = r.val_accuracy.map_or("-".to_string(), |a| format!("{:.2}%", 100.0 * a));
                eprintln!(
                    "epoch {:>3} lr {:.2e} loss {:.4} val {val} ({:.1}s)",
                    r.epoch + 1,
                    r.lr,
                    r.mean_loss,
                    r.seconds
                );
                Control::Continue
            })?;
            if !outcome.rejected.is_empty() {
                eprintln!("{} instances left out", outcome.rejected.len());
            }
            match &cfg.checkpoint {
                Some(p) => println!(
                    "best checkpoint (epoch {}) written to {}",
                    outcome.best.epoch,
                    p.display()
                ),
                None => println!("no checkpoint path set; parameters discarded"),
            }
        }
        Command::Eval {
            checkpoint,
            data,
            format,
            beam,
            records,
            top_k,
            buckets,
        } => {
            let model = TrainedModel::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let (constants, instances) = load_dataset(&data, format, &model.constants)?;
            let mut opts = EvalOptions::from_config(&model.config);
            opts.top_k = top_k;
            if let Some(b) = beam {
                opts.beam = b;
            }
            let report = evaluate_dataset(&model, &constants, &instances, &opts)?;
            println!(
                "accuracy: {:.2}% ({}/{})",
                100.0 * report.accuracy,
                report.correct,
                report.total
            );
            if buckets {
                print!("{}", bucket_report(&report.records));
            }
            if let Some(path) = records {
                let mut w = BufWriter::new(File::create(&path)?);
                for r in &report.records {
                    serde_json::to_writer(&mut w, r)?;
                    writeln!(w)?;
                }
                w.flush()?;
            }
        }
        Command::Cv {
            config,
            data,
            format,
            folds,
        } => {
            let cfg = config.resolve()?;
            let instances = training_data(&cfg, &data, format)?;
            let report = crossvalidate(&cfg, &instances, folds)?;
            for f in &report.folds {
                println!(
                    "fold {}: {:.2}% ({} test problems)",
                    f.fold,
                    100.0 * f.accuracy,
                    f.test_ids.len()
                );
            }
            println!("mean: {:.2}%", 100.0 * report.mean);
        }
        Command::Solve { equation, slots, json } => {
            let slots = parse_constants(&slots)?;
            let tree = parse_infix(&equation, &slots)?;
            let mut used = [false; 2];
            tree.for_each_symbol(&mut |s| {
                if let TargetSymbol::Unknown(u) = s {
                    used[u.index()] = true;
                }
            });
            let unknowns: Vec<Unknown> = Unknown::ALL.iter().copied().filter(|u| used[u.index()]).collect();
            let unknowns = if unknowns.is_empty() {
                vec![Unknown::X]
            } else {
                unknowns
            };
            let sol = solve_tree(&tree, &slots, &unknowns);
            if json {
                println!("{}", serde_json::to_string(&sol)?);
            } else {
                print!("{sol}");
            }
        }
        Command::Stats { input, format } => {
            let (records, instances) = if format == DatasetFormat::Preprocessed {
                let (_, inst, n) = read_preprocessed(&input).with_context(|| format!("reading {}", input.display()))?;
                (n, inst)
            } else {
                let raw = load_raw(&input, format).with_context(|| format!("reading {}", input.display()))?;
                let report = build_instances(&raw, &sau_core::corpus::default_constants());
                (report.records, report.instances)
            };
            println!("{}", serde_json::to_string_pretty(&dataset_stats(&instances, records))?);
        }
        Command::Synth { output, count, seed } => {
            let records: Vec<RawRecord> = synthetic_records(count, seed, &Template::ALL);
            let mut w = BufWriter::new(File::create(&output)?);
            for r in &records {
                let value = serde_json::json!({
                    "id": r.id,
                    "segmented_text": r.tokens.join(" "),
                    "equation": r.equations,
                    "ans": r.answers,
                });
                serde_json::to_writer(&mut w, &value)?;
                writeln!(w)?;
            }
            w.flush()?;
            println!("{} problems written to {}", records.len(), output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
