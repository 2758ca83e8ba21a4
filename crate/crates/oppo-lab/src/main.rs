//! Command-line entry point: validate configs, run experiments, sweep
//! hyperparameter grids, run the lemma property suite, and re-emit reports
//! from stored run logs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use oppo_lab::config::{AlphaConfig, ExperimentConfig};
use oppo_lab::formats::{read_json, RunLogFile};
use oppo_lab::lemmas::{check_lemmas, SizeBounds};
use oppo_lab::report::emit_report;
use oppo_lab::runner::{run_experiment_with, write_run_log, RunOptions};

#[derive(Parser)]
#[command(
    name = "oppo-lab",
    about = "Optimistic policy-optimization lab",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a config and validate it together with its generated instance.
    Validate {
        /// Path to the experiment config JSON.
        config: PathBuf,
    },
    /// Run every (mode, seed) cell of an experiment and emit reports.
    Run(RunArgs),
    /// Run a hyperparameter grid: one experiment per grid cell.
    Sweep {
        /// Path to the base experiment config JSON.
        config: PathBuf,
        /// Grid JSON, e.g. `{"c_beta": [0.1, 1, 10]}` (inline or a path).
        #[arg(long)]
        grid: String,
        /// Output directory (default: config's `output_dir` or `./out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the lemma property suite.
    CheckLemmas {
        /// Number of random instances / seeds for randomized checks.
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        /// Size bounds JSON, e.g. `{"max_horizon":5,"max_states":6,"max_actions":4}`.
        #[arg(long)]
        sizes: Option<String>,
    },
    /// Re-emit CSV and summary from stored run logs.
    Report {
        /// Directory containing `runlog_*.json` files.
        logdir: PathBuf,
        /// Output directory (default: the log directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config JSON.
    config: PathBuf,
    /// Output directory (default: config's `output_dir` or `./out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump per-episode evaluation diagnostics to JSON.
    #[arg(long)]
    dump_eval: bool,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json(&text)
}

fn out_dir(config: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn cmd_validate(path: &Path) -> Result<()> {
    let config = load_config(path)?;
    let resolved = config.resolve()?;
    let probe_seed = oppo_core::seeding::derive_seed(config.instance.seed, &[99]);
    let report = resolved.instance.mdp.validate(16, probe_seed);
    println!("config hash: {}", resolved.config_hash);
    println!(
        "instance: H={} |S|={} |A|={} d={}",
        resolved.instance.mdp.horizon(),
        resolved.instance.mdp.num_states(),
        resolved.instance.mdp.num_actions(),
        resolved.instance.mdp.feature_dim()
    );
    if report.is_valid() {
        println!("instance invariants: ok");
    } else {
        println!(
            "instance invariants: {} violations",
            report.violations.len()
        );
        for violation in report.violations.iter().take(20) {
            println!("  {violation:?} (magnitude {:.3e})", violation.magnitude());
        }
        bail!("instance validation failed");
    }
    println!(
        "modes: {:?}; episodes: {}; seeds: {:?}",
        config.modes, config.hyper.episodes, config.seeds
    );
    println!("alpha = {}", resolved.hyper.alpha.value());
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let dir = out_dir(&config, args.out.clone());
    let options = RunOptions {
        keep_features: false,
        keep_eval_dumps: args.dump_eval || config.dump_eval,
    };
    let outputs = run_experiment_with(&config, options)?;
    std::fs::create_dir_all(&dir)?;
    for output in &outputs {
        write_run_log(output, &dir)?;
        println!(
            "{} seed {}: final cum regret {:.4} ({:.2}s)",
            output.mode.label(),
            output.seed,
            output.records.last().map_or(0.0, |r| r.cum_regret),
            output.wall_clock_secs
        );
    }
    let logs: Vec<RunLogFile> = outputs.iter().map(|o| o.to_log_file()).collect();
    let paths = emit_report(&logs, &dir)?;
    println!("wrote {}", paths.csv.display());
    println!("wrote {}", paths.summary.display());
    Ok(())
}

fn cmd_sweep(config_path: &Path, grid: &str, out: Option<PathBuf>) -> Result<()> {
    let base = load_config(config_path)?;
    let grid_text = if Path::new(grid).exists() {
        std::fs::read_to_string(grid)?
    } else {
        grid.to_string()
    };
    let grid: BTreeMap<String, Vec<serde_json::Value>> =
        serde_json::from_str(&grid_text).context("parsing grid JSON")?;
    for key in grid.keys() {
        if !["alpha", "lambda", "c_beta", "zeta"].contains(&key.as_str()) {
            bail!("unsupported grid key '{key}' (use alpha, lambda, c_beta, zeta)");
        }
    }
    let root = out_dir(&base, out);

    // Cartesian product in sorted-key order.
    let keys: Vec<&String> = grid.keys().collect();
    let mut cells: Vec<Vec<(String, serde_json::Value)>> = vec![Vec::new()];
    for key in &keys {
        let mut expanded = Vec::new();
        for cell in &cells {
            for value in &grid[*key] {
                let mut next = cell.clone();
                next.push(((*key).clone(), value.clone()));
                expanded.push(next);
            }
        }
        cells = expanded;
    }

    for cell in cells {
        let mut config = base.clone();
        let mut label_parts = Vec::new();
        for (key, value) in &cell {
            match key.as_str() {
                "alpha" => {
                    config.hyper.alpha = if value.as_str() == Some("auto") {
                        AlphaConfig::auto()
                    } else {
                        AlphaConfig::Value(
                            value
                                .as_f64()
                                .context("alpha grid values must be numbers")?,
                        )
                    };
                }
                "lambda" => config.hyper.lambda = value.as_f64().context("lambda")?,
                "c_beta" => config.hyper.c_beta = value.as_f64().context("c_beta")?,
                "zeta" => config.hyper.zeta = value.as_f64().context("zeta")?,
                _ => unreachable!(),
            }
            let rendered = value
                .as_str()
                .map(str::to_string)
                .unwrap_or_else(|| value.to_string());
            label_parts.push(format!("{key}={rendered}"));
        }
        let label = if label_parts.is_empty() {
            "base".to_string()
        } else {
            label_parts.join("_")
        };
        let dir = root.join(&label);
        println!("== sweep cell {label}");
        let outputs = run_experiment_with(&config, RunOptions::default())?;
        std::fs::create_dir_all(&dir)?;
        for output in &outputs {
            write_run_log(output, &dir)?;
        }
        let logs: Vec<RunLogFile> = outputs.iter().map(|o| o.to_log_file()).collect();
        let paths = emit_report(&logs, &dir)?;
        println!("   wrote {}", paths.summary.display());
    }
    Ok(())
}

fn cmd_check_lemmas(seeds: usize, sizes: Option<&str>) -> Result<bool> {
    let sizes = match sizes {
        None => SizeBounds::default(),
        Some(text) => {
            let parsed: BTreeMap<String, usize> = serde_json::from_str(text)?;
            SizeBounds {
                max_horizon: *parsed.get("max_horizon").unwrap_or(&5),
                max_states: *parsed.get("max_states").unwrap_or(&6),
                max_actions: *parsed.get("max_actions").unwrap_or(&4),
            }
        }
    };
    let report = check_lemmas(seeds, sizes)?;
    print!("{}", report.render());
    Ok(report.all_hard_passed())
}

fn cmd_report(logdir: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut logs = Vec::new();
    for entry in
        std::fs::read_dir(logdir).with_context(|| format!("reading {}", logdir.display()))?
    {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("runlog_") && name.ends_with(".json") {
            logs.push(read_json::<RunLogFile>(&path)?);
        }
    }
    if logs.is_empty() {
        bail!("no runlog_*.json files in {}", logdir.display());
    }
    let dir = out.unwrap_or_else(|| logdir.to_path_buf());
    let paths = emit_report(&logs, &dir)?;
    println!("wrote {}", paths.csv.display());
    println!("wrote {}", paths.summary.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { config } => cmd_validate(config).map(|()| true),
        Command::Run(args) => cmd_run(args).map(|()| true),
        Command::Sweep { config, grid, out } => cmd_sweep(config, grid, out.clone()).map(|()| true),
        Command::CheckLemmas { seeds, sizes } => cmd_check_lemmas(*seeds, sizes.as_deref()),
        Command::Report { logdir, out } => cmd_report(logdir, out.clone()).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
