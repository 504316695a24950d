use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lw_cli::commands::{self, EvalData, Setting, VerifyOptions};
use lw_cli::config::parse_list;
use lw_cli::ExperimentConfig;
use lw_core::consistency::DerivedForm;

/// Leveraged weighted loss for partial label learning.
///
/// LW_THREADS caps the number of worker threads.
#[derive(Parser)]
#[command(name = "lwpl", version)]
struct Cli {
    /// Suppress per-epoch progress output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Derived {
    Stated,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Write partial-label corpora and manifests.
    Generate(ConfigArgs),
    /// Train one model per seed and write metrics and checkpoints.
    Train(ConfigArgs),
    /// Paired runs over several β values (or the α/β ablation).
    Sweep {
        #[command(flatten)]
        args: ConfigArgs,
        /// Comma-separated β values.
        #[arg(long, default_value = "0,1,2,4,8,16,32")]
        beta: String,
        /// Run α=0/β=1, α=1/β=0 and α=1/β=1 instead of a β list.
        #[arg(long)]
        ablation: bool,
    },
    /// Accuracy and confusion counts of a checkpoint on labeled data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Partial-label CSV with a true_label column.
        #[arg(long, conflicts_with_all = ["images", "labels"])]
        data: Option<PathBuf>,
        /// IDX image file (with --labels).
        #[arg(long, requires = "labels")]
        images: Option<PathBuf>,
        #[arg(long, requires = "images")]
        labels: Option<PathBuf>,
        /// Directory for confusion.csv (default: next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumeration checks of the risk identities; exit code 1 on failure.
    Verify {
        /// Comma-separated class counts.
        #[arg(long, default_value = "2,3,4,5,6,7,8")]
        k: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Closed form compared against the enumeration.
        #[arg(long, value_enum, default_value = "stated")]
        derived: Derived,
        /// Draw candidate sets with the full set rejected.
        #[arg(long)]
        reject_full: bool,
        /// Perturb β in the closed-form path only (mutation check).
        #[arg(long, default_value_t = 0.0)]
        mutate_beta: f64,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LW_THREADS") {
        let n: usize = v.parse().with_context(|| format!("LW_THREADS = {v:?}"))?;
        if n == 0 {
            bail!("LW_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_threads()?;
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.load()?;
            let out = commands::generate(&cfg)?;
            for (path, mean) in out.corpora.iter().zip(&out.mean_set_sizes) {
                println!("{} (mean candidate-set size {mean:.4})", path.display());
            }
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let out = commands::train(&cfg, cli.quiet)?;
            println!("fingerprint {}  ->  {}", cfg.fingerprint(), out.dir.display());
            for r in &out.runs {
                match r.test_accuracy {
                    Some(a) => println!("seed {}: test accuracy {a:.4}", r.seed),
                    None => println!("seed {}: done ({} epochs)", r.seed, r.metrics.len()),
                }
            }
        }
        Command::Sweep { args, beta, ablation } => {
            let cfg = args.load()?;
            let settings = if ablation {
                Setting::ablation()
            } else {
                Setting::betas(cfg.alpha, &parse_list::<f64>(&beta)?)
            };
            let out = commands::sweep(&cfg, &settings, cli.quiet)?;
            println!("{}", out.dir.display());
            println!("{:<18} {:>6} {:>10} {:>10}", "setting", "seeds", "mean", "std");
            for s in &out.summaries {
                println!("{:<18} {:>6} {:>10.4} {:>10.4}", s.setting.label, s.accuracies.len(), s.mean, s.std);
            }
        }
        Command::Eval { checkpoint, data, images, labels, out } => {
            let source = match (data, images, labels) {
                (Some(d), _, _) => EvalData::Csv(d),
                (None, Some(images), Some(labels)) => EvalData::Idx { images, labels },
                _ => bail!("eval needs --data or --images/--labels"),
            };
            let out_dir = out.unwrap_or_else(|| checkpoint.parent().map(PathBuf::from).unwrap_or_default());
            let r = commands::eval(&checkpoint, &source, &out_dir)?;
            println!("accuracy = {:.6} ({} instances)", r.accuracy, r.instances);
            println!("confusion counts written to {}", r.confusion_path.display());
        }
        Command::Verify { k, trials, seed, derived, reject_full, mutate_beta } => {
            let opts = VerifyOptions {
                ks: parse_list(&k)?,
                trials,
                seed,
                form: match derived {
                    Derived::Stated => DerivedForm::Stated,
                    Derived::Exact => DerivedForm::Exact,
                },
                reject_full,
                beta_offset: mutate_beta,
            };
            if trials == 0 {
                eprintln!("warning: trials = 0, no instances checked; the suite passes vacuously");
            }
            let start = std::time::Instant::now();
            let reports = commands::verify(&opts)?;
            let ok = reports.iter().all(|r| r.passed());
            for r in &reports {
                println!("{r}\n");
            }
            for r in &reports {
                println!("{}", r.summary_line());
            }
            println!(
                "verify status={} seconds={:.2}",
                if ok { "pass" } else { "fail" },
                start.elapsed().as_secs_f64()
            );
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
