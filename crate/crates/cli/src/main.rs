use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use uepmm::simrun::{ExperimentConfig, FigureTable};
use uepmm_cli::{curve_csv, curve_stem, fig2_csv, fig3_table, fig4_table, load_toml, presets, sim_tables, train_runs, train_summary_csv};
use uepmm_train::TrainConfig;

/// Straggler-resilient coded matrix multiplication experiments.
#[derive(Parser, Debug)]
#[command(name = "uepmm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config; replaces the command's preset entirely.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Monte Carlo trials, overriding the config.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory for CSVs and the manifest.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Exact NOW decoding probabilities against the number of received packets.
    Fig2,
    /// Normalized loss against the deadline: NOW and MDS exact, EW simulated.
    Fig3,
    /// Normalized loss against the number of received packets.
    Fig4,
    /// Train the dense network with coded gradient products.
    Train,
    /// Generic sweep described entirely by `--config`.
    Sim,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Fig2 => "fig2",
            Command::Fig3 => "fig3",
            Command::Fig4 => "fig4",
            Command::Train => "train",
            Command::Sim => "sim",
        }
    }
}

#[derive(Serialize, Default)]
struct RunManifest {
    command: String,
    tool_version: &'static str,
    seed: Option<u64>,
    threads: Option<usize>,
    config: serde_json::Value,
    duration_secs: f64,
    outputs: Vec<String>,
    status: &'static str,
    error: Option<String>,
}

struct Run {
    out: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn table(&mut self, stem: &str, table: &FigureTable) -> Result<()> {
        self.write(&format!("{stem}.csv"), &table.to_csv())
    }
}

fn experiment_config(common: &Common, preset: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, preset) {
        (Some(path), _) => load_toml(path)?,
        (None, Some(p)) => p,
        (None, None) => bail!("this command needs --config PATH"),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    Ok(cfg)
}

fn execute(command: Command, common: &Common, run: &mut Run) -> Result<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match command {
        Command::Train => {
            if common.trials.is_some() {
                bail!("--trials applies to the Monte Carlo commands, not train");
            }
            let mut cfg: TrainConfig = match &common.config {
                Some(path) => load_toml(path)?,
                None => TrainConfig::default(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            run.manifest.seed = Some(cfg.seed);
            run.manifest.config = serde_json::to_value(&cfg)?;
            let curves = train_runs(&cfg)?;
            for c in &curves {
                run.write(&format!("{}.csv", curve_stem(c)), &curve_csv(c))?;
            }
            run.write("train-summary.csv", &train_summary_csv(&curves))?;
        }
        _ => {
            let preset = match command {
                Command::Fig2 => Some(presets::fig2()),
                Command::Fig3 => Some(presets::fig3()),
                Command::Fig4 => Some(presets::fig4()),
                _ => None,
            };
            let cfg = experiment_config(common, preset)?;
            run.manifest.seed = Some(cfg.seed);
            run.manifest.config = serde_json::to_value(&cfg)?;
            match command {
                Command::Fig2 => run.write("fig2.csv", &fig2_csv(&cfg)?)?,
                Command::Fig3 => run.table("fig3", &fig3_table(&cfg)?)?,
                Command::Fig4 => run.table("fig4", &fig4_table(&cfg)?)?,
                _ => {
                    for (stem, table) in sim_tables(&cfg)? {
                        run.table(&stem, &table)?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn output_dir(common: &Common) -> PathBuf {
    if let Some(dir) = &common.out {
        return dir.clone();
    }
    // a config's own `output` entry is the next choice
    common
        .config
        .as_deref()
        .and_then(|p| load_toml::<ExperimentConfig>(p).ok())
        .and_then(|c| c.output)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let out = output_dir(&cli.common);
    let mut run = Run {
        out: out.clone(),
        manifest: RunManifest {
            command: cli.command.name().to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            threads: cli.common.threads,
            ..RunManifest::default()
        },
    };
    let result = std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))
        .and_then(|_| execute(cli.command, &cli.common, &mut run));
    run.manifest.duration_secs = start.elapsed().as_secs_f64();
    run.manifest.status = if result.is_ok() { "ok" } else { "error" };
    run.manifest.error = result.as_ref().err().map(one_line);
    let written = if out.is_dir() { write_manifest(&out, &run.manifest) } else { Ok(()) };
    match result.and(written) {
        Ok(()) => {
            for name in &run.manifest.outputs {
                println!("{}", out.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
