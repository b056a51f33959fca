//! `ssdg`: run desk-scale semi-supervised domain-generalization
//! experiments from the command line.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ssdg_core::checkpoint;
use ssdg_core::data::{export_table, generate_domain};
use ssdg_harness::ablation;
use ssdg_harness::config::{ConfigBuilder, ExperimentConfig, KEY_HELP};
use ssdg_harness::experiment::{self, leave_one_domain_out};
use ssdg_harness::reference;
use ssdg_harness::reports::{emit_reports, RunArtifacts, RunManifest};

fn key_help() -> String {
    let mut s = String::from("Configuration keys (file lines and --set):\n");
    for (key, help) in KEY_HELP {
        s.push_str(&format!("  {key:<22} {help}\n"));
    }
    s
}

#[derive(Parser)]
#[command(
    name = "ssdg",
    version,
    about = "Desk-scale semi-supervised domain generalization experiments",
    after_help = key_help()
)]
struct Cli {
    /// Flat key=value config file applied over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key (key=value). Repeatable; applied after the
    /// config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output directory. Overrides output_dir and SSDG_OUTPUT_ROOT; the
    /// subcommand name is not appended.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate every benchmark domain and write one CSV table per domain.
    GenData,
    /// Train the configured method on the configured target over all trial
    /// seeds; write metrics, calibration series, gate logs, checkpoints,
    /// and a manifest.
    Train,
    /// Evaluate a saved checkpoint on the held-out target domain.
    Evaluate {
        /// Checkpoint file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write penultimate-layer features of the target here.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Sweep the certainty threshold and report the value with the best
    /// mean validation accuracy.
    GridSearch {
        /// Comma-separated thresholds in (0, 1].
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8])]
        values: Vec<f64>,
    },
    /// Train once and evaluate all seven checkpoint-averaging variants on
    /// the target.
    AblateMa,
    /// Sweep the unlabelled batch ratio.
    AblateMu {
        /// Comma-separated ratio values.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 4, 5, 6])]
        values: Vec<usize>,
    },
    /// Measure per-iteration wall time for different MC pass counts.
    Timing {
        /// Comma-separated MC pass counts.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 5, 10, 20, 40, 80, 160])]
        passes: Vec<usize>,
        /// Untimed leading iterations.
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        /// Timed iterations per pass count.
        #[arg(long, default_value_t = 50)]
        timed: usize,
    },
    /// Run the full target x method grid and write the results table with
    /// per-method average rows.
    Report {
        /// Re-run from a previous manifest instead of the config file.
        #[arg(long)]
        from_manifest: Option<PathBuf>,
    },
}

fn build_config(cli: &Cli) -> Result<(ExperimentConfig, Vec<String>)> {
    let mut builder = ConfigBuilder::new();
    if let Some(path) = &cli.config {
        builder
            .apply_file(path)
            .with_context(|| format!("reading config {}", path.display()))?;
    }
    for assignment in &cli.set {
        builder.set(assignment)?;
    }
    let (mut cfg, warnings) = builder.finish()?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok((cfg, warnings))
}

/// Explicit --out is used as-is; otherwise the subcommand gets its own
/// directory under the output root.
fn out_dir(cli: &Cli, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    if cli.out.is_some() {
        cfg.output_dir.clone()
    } else {
        cfg.output_dir.join(name)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();

    // Replay path: the manifest's [config] section replaces everything
    // except an explicit --out.
    let (cfg, warnings) = if let Command::Report {
        from_manifest: Some(path),
    } = &cli.command
    {
        let manifest = RunManifest::load(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let pairs: Vec<(&str, &str)> = manifest
            .config
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        let (mut cfg, warnings) = ConfigBuilder::from_pairs(pairs)?;
        if let Some(out) = &cli.out {
            cfg.output_dir = out.clone();
        }
        (cfg, warnings)
    } else {
        build_config(&cli)?
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    match &cli.command {
        Command::GenData => gen_data(&cli, &cfg),
        Command::Train => train(&cli, &cfg, warnings),
        Command::Evaluate {
            checkpoint,
            features,
        } => evaluate(&cfg, checkpoint, features.as_deref()),
        Command::GridSearch { values } => grid_search(&cli, &cfg, values),
        Command::AblateMa => ablate_ma(&cli, &cfg),
        Command::AblateMu { values } => ablate_mu(&cli, &cfg, values),
        Command::Timing {
            passes,
            warmup,
            timed,
        } => timing(&cli, &cfg, passes, *warmup, *timed),
        Command::Report { .. } => report(&cli, &cfg, warnings),
    }
}

fn gen_data(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let dir = out_dir(cli, cfg, "data");
    fs::create_dir_all(&dir)?;
    for spec in cfg.benchmark() {
        let examples = generate_domain(&spec)?;
        let path = dir.join(format!("{}.csv", spec.domain_id));
        export_table(&path, &examples, &[])?;
        println!(
            "{}: {} examples ({} shift, magnitude {}) -> {}",
            spec.domain_id,
            examples.len(),
            spec.shift_family,
            spec.shift_magnitude,
            path.display()
        );
    }
    Ok(())
}

fn train(cli: &Cli, cfg: &ExperimentConfig, warnings: Vec<String>) -> Result<()> {
    let dir = out_dir(cli, cfg, "train");
    let started = Instant::now();
    let outcome = experiment::run_trials(cfg)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }

    let mut table = experiment::ResultsTable::default();
    table.push(outcome.row.clone());

    let mut artifacts = Vec::new();
    let mut manifest = RunManifest::new(cfg);
    manifest.warnings = warnings;
    fs::create_dir_all(&dir)?;
    for run in &outcome.runs {
        let label = format!("{}_{}_s{}", cfg.target, cfg.method.label(), run.seed);
        artifacts.push(RunArtifacts::from_run(
            &label,
            run,
            cfg.train.iterations_per_epoch,
        )?);
        let ckpt = dir.join(format!("checkpoint_{label}.ckpt"));
        checkpoint::save(&ckpt, &run.result.spec, &run.inference)?;
        manifest
            .outputs
            .push((format!("checkpoint_{label}"), ckpt.display().to_string()));
        println!(
            "seed {}: best epoch {}, target accuracy {:.2}%",
            run.seed,
            run.result.best_epoch + 1,
            run.target_accuracy
        );
    }
    manifest
        .timings
        .push(("total_seconds".into(), started.elapsed().as_secs_f64()));
    let manifest_path = emit_reports(&dir, &table, &artifacts, &mut manifest)?;

    println!(
        "{} on target {}: {:.2} +- {:.2} over {} seeds",
        cfg.method,
        cfg.target,
        outcome.row.mean,
        outcome.row.std,
        cfg.seeds.len()
    );
    println!("reports in {} (manifest {})", dir.display(), manifest_path.display());
    Ok(())
}

fn evaluate(
    cfg: &ExperimentConfig,
    checkpoint_path: &std::path::Path,
    features: Option<&std::path::Path>,
) -> Result<()> {
    let (spec, params) = checkpoint::load(checkpoint_path)
        .with_context(|| format!("loading {}", checkpoint_path.display()))?;
    let holdout = leave_one_domain_out(&cfg.benchmark(), &cfg.target)?;
    for w in &holdout.warnings {
        eprintln!("warning: {w}");
    }
    let accuracy = holdout.target.accuracy(&spec, &params)?;
    println!(
        "target {} ({} examples): {:.2}% top-1",
        holdout.target.domain_id(),
        holdout.target.len(),
        accuracy
    );
    if let Some(path) = features {
        holdout.target.write_feature_dump(path, &spec, &params)?;
        println!("features -> {}", path.display());
    }
    Ok(())
}

fn grid_search(cli: &Cli, cfg: &ExperimentConfig, values: &[f64]) -> Result<()> {
    let dir = out_dir(cli, cfg, "grid-search");
    let grid = ablation::grid_search_eta(cfg, values)?;
    fs::create_dir_all(&dir)?;
    let mut csv = String::from("eta,mean_val_acc\n");
    for (eta, acc) in &grid.rows {
        csv.push_str(&format!("{eta},{acc:.6}\n"));
        println!("eta {eta}: {acc:.2}% validation");
    }
    let path = dir.join("eta_grid.csv");
    fs::write(&path, csv)?;
    println!("best eta {} -> {}", grid.best_eta, path.display());
    println!("full-scale reference optima:");
    for (dataset, eta) in reference::OPTIMAL_ETA {
        println!("  {dataset}: {eta}");
    }
    Ok(())
}

fn ablate_ma(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let dir = out_dir(cli, cfg, "ablate-ma");
    let (rows, run) = ablation::run_ma_ablation(cfg)?;
    fs::create_dir_all(&dir)?;
    let header: Vec<&str> = rows.iter().map(|(label, _)| *label).collect();
    let accs: Vec<String> = rows.iter().map(|(_, acc)| format!("{acc:.6}")).collect();
    let csv = format!("{}\n{}\n", header.join(","), accs.join(","));
    let path = dir.join("ma_variants.csv");
    fs::write(&path, csv)?;

    println!(
        "seed {} on target {} (accuracy per averaging variant):",
        run.seed, cfg.target
    );
    for ((label, acc), (_, reference)) in rows.iter().zip(reference::MA_VARIANT_AVERAGES) {
        println!("  {label:<9} {acc:6.2}%   (full-scale reference {reference})");
    }
    println!("table -> {}", path.display());
    Ok(())
}

fn ablate_mu(cli: &Cli, cfg: &ExperimentConfig, values: &[usize]) -> Result<()> {
    let dir = out_dir(cli, cfg, "ablate-mu");
    let rows = ablation::ablate_mu(cfg, values)?;
    fs::create_dir_all(&dir)?;
    let mut csv = String::from("mu,mean_acc,std_acc\n");
    for row in &rows {
        csv.push_str(&format!("{},{:.6},{:.6}\n", row.mu, row.mean, row.std));
        println!("mu {}: {:.2} +- {:.2}", row.mu, row.mean, row.std);
    }
    let path = dir.join("mu_sweep.csv");
    fs::write(&path, csv)?;
    println!("table -> {}", path.display());
    println!(
        "full-scale reference (mu=1..6): {}",
        reference::MU_SWEEP
            .iter()
            .map(|(_, acc)| acc.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn timing(
    cli: &Cli,
    cfg: &ExperimentConfig,
    passes: &[usize],
    warmup: usize,
    timed: usize,
) -> Result<()> {
    let dir = out_dir(cli, cfg, "timing");
    let rows = ablation::measure_mc_overhead(cfg, passes, warmup, timed)?;
    fs::create_dir_all(&dir)?;
    let mut csv = String::from("mc_passes,ms_per_iteration\n");
    for row in &rows {
        csv.push_str(&format!("{},{:.3}\n", row.mc_passes, row.ms_per_iteration));
        println!("N = {:<4} {:8.3} ms/iteration", row.mc_passes, row.ms_per_iteration);
    }
    let path = dir.join("timing.csv");
    fs::write(&path, csv)?;
    println!("table -> {}", path.display());
    println!(
        "full-scale reference: {}",
        reference::MC_TIMING_MS
            .iter()
            .map(|(n, ms)| format!("N={n}: {ms} ms"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn report(cli: &Cli, cfg: &ExperimentConfig, warnings: Vec<String>) -> Result<()> {
    let dir = out_dir(cli, cfg, "report");
    let started = Instant::now();
    let (table, runs) = experiment::full_grid(cfg)?;
    let table = table.with_average_rows();

    let mut artifacts = Vec::with_capacity(runs.len());
    for (label, run) in &runs {
        artifacts.push(RunArtifacts::from_run(
            label,
            run,
            cfg.train.iterations_per_epoch,
        )?);
    }
    let mut manifest = RunManifest::new(cfg);
    manifest.warnings = warnings;
    manifest
        .timings
        .push(("total_seconds".into(), started.elapsed().as_secs_f64()));
    let manifest_path = emit_reports(&dir, &table, &artifacts, &mut manifest)?;

    print!("{}", table.csv());
    println!("reports in {} (manifest {})", dir.display(), manifest_path.display());
    Ok(())
}
