//! Command-line entry point: `synth`, `run`, `eval`, and `guidelines`
//! subcommands. Exits 0 on success, 2 on configuration errors, 3 on
//! runtime errors. `ALQUERY_THREADS` caps worker threads.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alquery::config::ExperimentConfig;
use alquery::dataset;
use alquery::error::{Error, Result};
use alquery::guidelines;
use alquery::harness;
use alquery::synthgen::{self, SynthSpec};

#[derive(Parser)]
#[command(name = "alquery", about = "Active-learning query simulation for 3D segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a spec file.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one AL experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate completed runs into report tables.
    Eval {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recommend a query patch size and budget from label statistics.
    Guidelines {
        /// Dataset directory whose label volumes are analyzed.
        #[arg(long)]
        labels: PathBuf,
        /// Restrict the analysis to these foreground classes.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<u8>>,
        /// Per-class patch contributions (one value, or one per class).
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<usize>>,
    },
}

fn init_threads() {
    if let Ok(value) = std::env::var("ALQUERY_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::io(format!("reading {}", config.display()), e))?;
            let spec: SynthSpec = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("parsing synth spec: {e}")))?;
            let ds = synthgen::generate_dataset(&spec)?;
            dataset::write_dataset(&out, &ds)?;
            println!(
                "wrote {} ({} train + {} test, {} classes) to {}",
                ds.id,
                ds.train.len(),
                ds.test.len(),
                ds.num_classes,
                out.display()
            );
            Ok(())
        }
        Command::Run { config, seed, out } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let outcome = harness::run_experiment(&config, &out)?;
            let last = outcome.record.cycles.last().expect("at least one cycle");
            println!(
                "{} seed {}: {} cycles, final mean Dice {:.4} at {} patches",
                outcome.record.method,
                config.seed,
                outcome.record.cycles.len(),
                last.mean_dice,
                last.budget_patches
            );
            Ok(())
        }
        Command::Eval { runs, out } => {
            let report = harness::evaluate_runs(&runs, &out)?;
            println!(
                "evaluated {} method(s) x {} seed(s) over {} setting(s); report in {}",
                report.methods.len(),
                report.seeds_per_method,
                report.settings.len(),
                out.display()
            );
            for note in &report.notes {
                println!("note: {note}");
            }
            Ok(())
        }
        Command::Guidelines { labels, classes, weights } => {
            let ds = dataset::read_dataset(&labels)?;
            let all_labels: Vec<_> = ds
                .train
                .iter()
                .chain(&ds.test)
                .map(|(_, l)| l.clone())
                .collect();
            let (patch_size, clamped) =
                guidelines::patch_size_from_labels(&all_labels, classes.as_deref())?;
            let class_count = classes
                .as_ref()
                .map_or(ds.num_classes as usize, |c| c.len());
            let weights = match weights {
                Some(w) if w.len() == 1 => vec![w[0]; class_count],
                Some(w) if w.len() == class_count => w,
                Some(w) => {
                    return Err(Error::InvalidConfig(format!(
                        "{} weights given for {class_count} classes",
                        w.len()
                    )));
                }
                None => vec![50; class_count],
            };
            let budget = guidelines::query_budget(&weights)?;
            let output = serde_json::json!({
                "patch_size": patch_size,
                "clamped_to_volume": clamped,
                "query_budget": budget,
                "class_weights": weights,
            });
            println!("{}", serde_json::to_string_pretty(&output).expect("valid json"));
            if clamped {
                eprintln!("warning: recommended patch size exceeded the smallest volume and was clamped");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
