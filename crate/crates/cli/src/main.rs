//! `syncdpo`: data generation, training, evaluation, comparison, and
//! diagnostics for the synthetic audio-visual synchronization lab.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime fault.

mod plot;

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use syncdpo_core::flowcore::Checkpoint;
use syncdpo_core::harness::{
    compare, diag_gradnorm, evaluate_model, parse_override, read_metrics_csv, train, write_diag_csv,
    write_eval_csv, TrainConfig,
};
use syncdpo_core::rng::stream;
use syncdpo_core::{Error, World};

#[derive(Parser)]
#[command(name = "syncdpo", version, about = "Flow-matching preference optimization on a synthetic two-modality sync task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of synchronized pairs.
    GenData {
        /// Number of pairs.
        #[arg(long)]
        n: usize,
        /// RNG seed; also recorded in the dataset manifest.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model according to a config file.
    Train {
        /// Training method; overrides the config file's `method` key.
        #[arg(long)]
        method: Option<String>,
        /// Path to a key=value or flat-JSON config file.
        #[arg(long)]
        config: PathBuf,
        /// Additional key=value overrides, applied after the file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Sample generations from a checkpoint and score them with the oracle.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate the raw parameters instead of the EMA shadow.
        #[arg(long)]
        raw: bool,
        /// Per-sample CSV path (default: <run>/eval/ next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align finished runs into a method x metric table.
    Compare {
        /// Run directories (>= 2).
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Where to write the CSV form (default ./compare.csv).
        #[arg(long, default_value = "compare.csv")]
        csv: PathBuf,
    },
    /// Gradient-norm-ratio diagnostic over fresh preference pairs.
    DiagGradnorm {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Histogram CSV path (default: <run>/eval/ next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG charts for a run directory (optional; CSVs always exist).
    Plot {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::GenData { n, seed, out } => {
            let world = World::default();
            let manifest = world.make_dataset(&mut stream(seed, "data"), n, seed, &out)?;
            println!(
                "wrote {} pairs (seed {}) to {}",
                manifest.n,
                manifest.seed,
                out.display()
            );
            Ok(())
        }
        Command::Train {
            method,
            config,
            overrides,
        } => {
            let content = std::fs::read_to_string(&config).map_err(|e| Error::io(&config, e))?;
            let mut pairs = Vec::new();
            if let Some(m) = method {
                pairs.push(("method".to_string(), m));
            }
            for o in &overrides {
                pairs.push(parse_override(o)?);
            }
            let cfg = TrainConfig::parse(&content, &pairs)?;
            let outcome = train(&cfg)?;
            let m = outcome.manifest.final_metrics;
            println!(
                "run complete: {} steps, out_dir {}",
                outcome.manifest.steps_completed,
                outcome.run_dir.display()
            );
            if let Some(m) = m {
                println!(
                    "final: val_fm_loss={:.6} mean|offset|={:.4}s mean_score={:.4}",
                    m.val_fm_loss, m.mean_abs_offset, m.mean_score
                );
            }
            println!(
                "sampler_calls={} avg_step_ms={:.2}",
                outcome.manifest.sampler_calls, outcome.manifest.avg_step_ms
            );
            Ok(())
        }
        Command::Eval {
            ckpt,
            n,
            seed,
            raw,
            out,
        } => {
            let snapshot = Checkpoint::load(&ckpt)?;
            let world = World::default();
            let model = if raw {
                snapshot.model.clone()
            } else {
                snapshot.ema_model()
            };
            let (summary, rows) = evaluate_model(&model, &world, n, seed, 30)?;
            let csv_path = out.unwrap_or_else(|| {
                run_artifact_dir(&ckpt).join(format!(
                    "eval_step_{:06}_seed{}{}.csv",
                    snapshot.step,
                    seed,
                    if raw { "_raw" } else { "" }
                ))
            });
            write_eval_csv(&csv_path, &rows)?;
            println!(
                "n={} degenerate={} mean|offset|={:.4}s mean_score={:.4} ({})",
                summary.n,
                summary.n_degenerate,
                summary.mean_abs_offset,
                summary.mean_score,
                csv_path.display()
            );
            Ok(())
        }
        Command::Compare { run_dirs, csv } => {
            let report = compare(&run_dirs)?;
            print!("{}", report.to_text_table());
            std::fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
            println!("csv written to {}", csv.display());
            Ok(())
        }
        Command::DiagGradnorm { ckpt, n, seed, out } => {
            let snapshot = Checkpoint::load(&ckpt)?;
            let world = World::default();
            let (summary, samples) = diag_gradnorm(&snapshot.model, &world, n, seed)?;
            let csv_path = out.unwrap_or_else(|| {
                run_artifact_dir(&ckpt).join(format!(
                    "gradnorm_step_{:06}_seed{}.csv",
                    snapshot.step, seed
                ))
            });
            write_diag_csv(&csv_path, &samples)?;
            println!(
                "n={} degenerate={} median_ratio={:.4} fraction>1={:.4} ({})",
                summary.n,
                summary.n_degenerate,
                summary.median_ratio,
                summary.fraction_above_one,
                csv_path.display()
            );
            Ok(())
        }
        Command::Plot { run } => plot_run(&run),
    }
}

/// eval/ directory for artifacts derived from a checkpoint: the run dir when
/// the checkpoint lives under <run>/checkpoints/, its own directory otherwise.
fn run_artifact_dir(ckpt: &Path) -> PathBuf {
    let parent = ckpt.parent().unwrap_or_else(|| Path::new("."));
    if parent.file_name().map(|n| n == "checkpoints").unwrap_or(false) {
        parent.parent().unwrap_or_else(|| Path::new(".")).join("eval")
    } else {
        parent.join("eval")
    }
}

fn plot_run(run: &Path) -> Result<(), Error> {
    let metrics = read_metrics_csv(&run.join("metrics.csv"))?;
    let plots = run.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;

    let series = |f: &dyn Fn(&syncdpo_core::harness::MetricsRow) -> f64, name: &str| plot::Series {
        name: name.to_string(),
        points: metrics.iter().map(|r| (r.step as f64, f(r))).collect(),
    };
    let losses = plot::line_chart(
        "training and validation loss",
        "step",
        "loss",
        &[
            series(&|r| r.train_loss, "train_loss"),
            series(&|r| r.val_fm_loss, "val_fm_loss"),
        ],
    );
    std::fs::write(plots.join("loss.svg"), losses)
        .map_err(|e| Error::io(plots.join("loss.svg"), e))?;

    let offsets = plot::line_chart(
        "oracle metrics of generations",
        "step",
        "value",
        &[
            series(&|r| r.mean_abs_offset, "mean |offset| (s)"),
            series(&|r| r.mean_score, "mean score"),
        ],
    );
    std::fs::write(plots.join("oracle.svg"), offsets)
        .map_err(|e| Error::io(plots.join("oracle.svg"), e))?;

    // Histogram for any gradient-norm CSVs present under eval/.
    let eval_dir = run.join("eval");
    if let Ok(entries) = std::fs::read_dir(&eval_dir) {
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().to_string();
            if name.starts_with("gradnorm_") && name.ends_with(".csv") {
                let content =
                    std::fs::read_to_string(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
                let ratios: Vec<f64> = content
                    .lines()
                    .skip(1)
                    .filter_map(|l| l.split(',').nth(1))
                    .filter_map(|v| v.parse().ok())
                    .collect();
                if !ratios.is_empty() {
                    let svg = plot::histogram("gradient norm ratio", "ratio", &ratios, 30);
                    let out = plots.join(name.replace(".csv", ".svg"));
                    std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
                }
            }
        }
    }
    println!("plots written to {}", plots.display());
    Ok(())
}
