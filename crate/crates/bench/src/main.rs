use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use teamsched_bench::registry::supports_stochastic;
use teamsched_bench::report::{append_summaries, read_summaries, write_report_csv};
use teamsched_bench::{evaluate, needs_checkpoint, render_table, report, EvalConfig, Registry, RunSummary};
use teamsched_core::probgen::{generate_dataset, load_dataset, GeneratorConfig, Scale};
use teamsched_policy::{HybridNet, TrainConfig, Trainer};

#[derive(Parser)]
#[command(name = "teamsched", about = "Human-robot team scheduling: data, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of train and test problems.
    Gen {
        #[arg(long)]
        scale: Scale,
        #[arg(long, default_value_t = 50)]
        train: usize,
        #[arg(long, default_value_t = 50)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a policy on a dataset's training split.
    Train {
        /// JSON training config; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// CSV training log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Continue from the checkpoint at --out.
        #[arg(long)]
        resume: bool,
        /// Save every this many epochs as well as at the end.
        #[arg(long, default_value_t = 500)]
        save_every: u64,
    },
    /// Evaluate one method and append per-seed summaries to a CSV.
    Eval {
        #[arg(long)]
        method: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Samples per round for hybridnet.
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long)]
        stochastic: bool,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Scale the checkpoint was trained on, recorded in the summary.
        #[arg(long)]
        train_scale: Option<Scale>,
        #[arg(long)]
        out: PathBuf,
        /// Also write full round traces as JSON, one file per seed.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Pool summaries over seeds into a table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen {
            scale,
            train,
            test,
            seed,
            out_dir,
        } => {
            let m = generate_dataset(scale, train, test, seed, &GeneratorConfig::default(), &out_dir)?;
            println!("wrote {} {scale} problems to {}", m.problems.len(), out_dir.display());
        }
        Command::Train {
            config,
            data,
            out,
            log,
            resume,
            save_every,
        } => {
            let dataset = load_dataset(&data)?;
            let mut trainer = if resume {
                Trainer::resume(&out).with_context(|| format!("resuming from {}", out.display()))?
            } else {
                let cfg = match &config {
                    Some(p) => TrainConfig::from_json(
                        &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                    )?,
                    None => TrainConfig::default(),
                };
                Trainer::new(cfg)
            };
            let mut writer = match &log {
                Some(p) => {
                    let file = std::fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(p)
                        .with_context(|| format!("opening {}", p.display()))?;
                    let fresh = file.metadata()?.len() == 0;
                    Some(csv::WriterBuilder::new().has_headers(fresh).from_writer(file))
                }
                None => None,
            };
            let total = trainer.config.epochs;
            while trainer.epoch() < total {
                let chunk = save_every.max(1).min(total - trainer.epoch());
                let stats = trainer.run(&dataset.train, chunk, writer.as_mut())?;
                trainer.save(&out)?;
                if let Some(s) = stats.last() {
                    println!(
                        "epoch {:>6}  return {:>10.2}  feasible {:>5.1}%",
                        s.epoch + 1,
                        s.mean_return,
                        100.0 * s.feasibility
                    );
                }
            }
            trainer.save(&out)?;
        }
        Command::Eval {
            method,
            data,
            split,
            checkpoint,
            batch,
            stochastic,
            seeds,
            train_scale,
            out,
            traces,
        } => {
            if stochastic && !supports_stochastic(&method) {
                bail!("{method} needs a deterministic environment; drop --stochastic");
            }
            let policy = match (&checkpoint, needs_checkpoint(&method)) {
                (Some(p), true) => Some(Arc::new(
                    HybridNet::load(p).with_context(|| format!("loading {}", p.display()))?,
                )),
                (None, true) => bail!("{method} needs --checkpoint"),
                _ => None,
            };
            let registry = Registry::standard(policy, batch);
            let scheduler = registry.get(&method)?;
            let dataset = load_dataset(&data)?;
            let problems = match split {
                Split::Train => &dataset.train,
                Split::Test => &dataset.test,
            };
            let batch = (method == "hybridnet").then_some(batch);
            let mut runs = Vec::new();
            for &seed in &seeds {
                let result = evaluate(scheduler, problems, &EvalConfig::new(stochastic, seed))?;
                if let Some(dir) = &traces {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(format!("{method}_{}_seed{seed}.json", dataset.manifest.scale));
                    std::fs::write(&path, serde_json::to_string(&result)?)?;
                }
                let summary = RunSummary::from_result(&result, dataset.manifest.scale, train_scale, batch);
                println!(
                    "{method} seed {seed}: feasible {:.2}%  adjusted makespan {:.2}",
                    100.0 * summary.feasibility(),
                    summary.adjusted_makespan
                );
                runs.push(summary);
            }
            append_summaries(&out, &runs)?;
        }
        Command::Report { inputs, out } => {
            let mut runs = Vec::new();
            for p in &inputs {
                runs.extend(read_summaries(p).with_context(|| format!("reading {}", p.display()))?);
            }
            let rows = report(&runs);
            if let Some(p) = &out {
                write_report_csv(p, &rows)?;
            }
            print!("{}", render_table(&rows));
        }
    }
    Ok(())
}
