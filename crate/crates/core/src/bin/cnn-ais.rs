use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use cnn_ais::harness::{
    self, emit_csv, emit_svg_lineplot, gradcheck, ExperimentConfig, LinePlot, XAxis,
};

#[derive(Parser, Debug)]
#[command(name = "cnn-ais", version, about = "CNN with a clonal selection layer: experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key = value configuration file; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the four MNIST IDX files.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training images per class, comma separated.
    #[arg(long, global = true)]
    sizes: Option<String>,
    /// Run seeds, comma separated.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Cloning constant (the demo constant under clonalg-demo).
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Mutation constant (the demo constant under clonalg-demo).
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Clone acceptance threshold.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Training epochs (also the epoch-curve length).
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// SGD learning rate.
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// cnn, cnn-ais, or a comma separated list.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Any other configuration key, as key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Final test error of each variant over training-set sizes and seeds.
    SizeSweep,
    /// Per-epoch error of the clonal variant.
    EpochCurve,
    /// Two-digit recognition through memory pools, plus unseen-class gating.
    TwoClass,
    /// Reference clonal selection on an 8x8 bipolar pattern.
    ClonalgDemo,
    /// Analytic versus finite-difference gradients.
    Gradcheck,
}

fn build_config(cli: &Cli) -> cnn_ais::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let demo = cli.command == Command::ClonalgDemo;
    let mut overrides: Vec<(&str, String)> = Vec::new();
    if let Some(v) = &cli.data_dir {
        overrides.push(("data_dir", v.display().to_string()));
    }
    if let Some(v) = &cli.out {
        overrides.push(("out_dir", v.display().to_string()));
    }
    if let Some(v) = &cli.sizes {
        overrides.push(("sizes", v.clone()));
    }
    if let Some(v) = &cli.seeds {
        overrides.push(("seeds", v.clone()));
    }
    if let Some(v) = cli.eta {
        overrides.push((if demo { "clonalg_eta" } else { "eta" }, v.to_string()));
    }
    if let Some(v) = cli.alpha {
        overrides.push((if demo { "clonalg_alpha" } else { "alpha" }, v.to_string()));
    }
    if let Some(v) = cli.tau {
        overrides.push(("tau", v.to_string()));
    }
    if let Some(v) = cli.epochs {
        overrides.push(("epochs", v.to_string()));
        overrides.push(("curve_epochs", v.to_string()));
    }
    if let Some(v) = cli.lr {
        overrides.push(("lr", v.to_string()));
    }
    if let Some(v) = &cli.variant {
        overrides.push(("variants", v.clone()));
    }
    for (k, v) in overrides {
        cfg.set(k, &v)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| cnn_ais::Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> cnn_ais::Result<()> {
    let cfg = build_config(cli)?;
    let out = cfg.out_dir.clone();
    let started = Instant::now();
    match cli.command {
        Command::SizeSweep => {
            let (train, test) = harness::load_mnist(&cfg)?;
            let rows = harness::run_size_sweep(&cfg, &train, &test)?;
            emit_csv(&rows, &out.join("size_sweep.csv"))?;
            emit_svg_lineplot(&rows, XAxis::PerClassSize, &out.join("size_sweep.svg"))?;
            for variant in &cfg.variants {
                for &size in &cfg.sizes {
                    let errs: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.variant == *variant && r.per_class_size == size)
                        .map(|r| r.test_error)
                        .collect();
                    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
                    println!("{variant:>8} size {size:>4}: mean test error {mean:.4}");
                }
            }
        }
        Command::EpochCurve => {
            let (train, test) = harness::load_mnist(&cfg)?;
            let rows = harness::run_epoch_curve(&cfg, &train, &test)?;
            emit_csv(&rows, &out.join("epoch_curve.csv"))?;
            emit_svg_lineplot(&rows, XAxis::Epoch, &out.join("epoch_curve.svg"))?;
            for (epoch, mean) in harness::mean_test_error_by_epoch(&rows) {
                println!("epoch {epoch:>3}: mean test error {mean:.4}");
            }
        }
        Command::TwoClass => {
            let (train, test) = harness::load_mnist(&cfg)?;
            let report = harness::run_two_class_application(&cfg, &train, &test)?;
            report.write(&out)?;
            print!("{}", report.to_text());
        }
        Command::ClonalgDemo => {
            let mut runs = Vec::new();
            for &seed in &cfg.seeds {
                let outcome = harness::run_clonalg_demo(&cfg, seed)?;
                println!(
                    "seed {seed}: initial best {:.4}, final best {:.4}",
                    outcome.initial_best,
                    outcome.best_history.last().copied().unwrap_or(outcome.initial_best)
                );
                runs.push((seed, outcome));
            }
            harness::write_output(&out.join("clonalg_history.csv"), &harness::clonalg_history_csv(&runs))?;
            let plot = LinePlot {
                title: "CLONALG best memory affinity".into(),
                x_label: "generation".into(),
                y_label: "best affinity".into(),
                series: runs
                    .iter()
                    .map(|(seed, o)| {
                        let pts = std::iter::once(o.initial_best)
                            .chain(o.best_history.iter().copied())
                            .enumerate()
                            .map(|(g, b)| (g as f64, b))
                            .collect();
                        (format!("seed {seed}"), pts)
                    })
                    .collect(),
            };
            harness::write_output(&out.join("clonalg_history.svg"), &plot.to_svg()?)?;
        }
        Command::Gradcheck => {
            let records = gradcheck::run_gradcheck(cfg.gradcheck_instances, cfg.seeds[0])?;
            harness::write_output(&out.join("gradcheck.csv"), &gradcheck::gradcheck_csv(&records))?;
            let worst = records.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
            let checked: usize = records.iter().map(|r| r.checked).sum();
            println!("{} checks over {checked} coordinates, max relative error {worst:e}", records.len());
        }
    }
    eprintln!("done in {:.1}s, outputs in {}", started.elapsed().as_secs_f64(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cnn_ais::harness::Variant;

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::parse_from(["cnn-ais", "size-sweep", "--sizes", "5,6", "--variant", "cnn", "--eta", "2"]);
        let cfg = build_config(&cli).unwrap();
        assert_eq!(cfg.sizes, vec![5, 6]);
        assert_eq!(cfg.variants, vec![Variant::Cnn]);
        assert_eq!(cfg.clone.eta, 2.0);
    }

    #[test]
    fn demo_eta_goes_to_demo_constant() {
        let cli = Cli::parse_from(["cnn-ais", "clonalg-demo", "--eta", "7"]);
        let cfg = build_config(&cli).unwrap();
        assert_eq!(cfg.clonalg_eta, 7.0);
        assert_eq!(cfg.clone.eta, ExperimentConfig::default().clone.eta);
    }

    #[test]
    fn bad_set_is_rejected() {
        let cli = Cli::parse_from(["cnn-ais", "gradcheck", "--set", "nonsense"]);
        assert!(build_config(&cli).is_err());
    }
}
