use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inrbench::tasks::generate::SignalSpec;
use inrbench::tasks::io::{self, SignalFormat};
use inrbench_harness::report::{self, Summary};
use inrbench_harness::runner::{self, RunOptions};
use inrbench_harness::{analyze, BenchError, ExperimentConfig};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "inrbench", version, about = "Benchmark coordinate networks on signal reconstruction tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every run of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        resume: bool,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the leaderboard of a finished experiment directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// Print the per-task summary pivot instead.
        #[arg(long)]
        pivot: bool,
    },
    /// Run a config with extra sweep axes, `key=v1,v2,...`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kernel analysis of the first model on the first task.
    Ntk {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a procedural signal; the format follows the file extension.
    Gen {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, BenchError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BenchError::Config { path: path.display().to_string(), message: e.to_string() })?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| BenchError::Config { path: path.display().to_string(), message: e.to_string() })?;
    if let Ok(seed) = std::env::var("INRBENCH_SEED") {
        let seed: u64 = seed.trim().parse().map_err(|_| BenchError::Config {
            path: "INRBENCH_SEED".into(),
            message: format!("not an unsigned integer: {seed:?}"),
        })?;
        if let Value::Object(map) = &mut value {
            map.insert("seed".into(), Value::from(seed));
        }
    }
    ExperimentConfig::from_value(value)
}

fn parse_axis(axis: &str) -> Result<(String, Vec<Value>), BenchError> {
    let (key, values) = axis.split_once('=').ok_or_else(|| BenchError::Config {
        path: axis.to_string(),
        message: "sweep axis must look like key=v1,v2,...".into(),
    })?;
    let values =
        values.split(',').map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))).collect();
    Ok((key.to_string(), values))
}

fn execute(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExitCode, BenchError> {
    eprintln!(
        "planned {} runs ({} sweep points x {} tasks x {} models x {} seeds)",
        cfg.run_count(),
        cfg.sweep_points(),
        cfg.tasks.len(),
        cfg.models.len(),
        cfg.seeds
    );
    let results = runner::run_experiment(cfg, opts)?;
    print!("{}", report::leaderboard_csv(&results, true));
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", results.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode, BenchError> {
    match cli.command {
        Command::Run { config, jobs, resume, out } => {
            let cfg = load_config(&config)?;
            execute(&cfg, &RunOptions { jobs, resume, output: out, limit: None })
        }
        Command::Sweep { config, axes, jobs, resume, out } => {
            let mut cfg = load_config(&config)?;
            for axis in &axes {
                let (key, values) = parse_axis(axis)?;
                cfg.sweep.insert(key, values);
            }
            cfg.validate()?;
            cfg.expand_sweep()?;
            execute(&cfg, &RunOptions { jobs, resume, output: out, limit: None })
        }
        Command::Report { dir, pivot } => {
            let results = runner::load_results(&dir)?;
            if pivot {
                print!("{}", Summary::from_results(&results).to_csv());
            } else {
                print!("{}", report::leaderboard_csv(&results, true));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ntk { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output.join("ntk"));
            let report = analyze::run_ntk(&cfg, &dir)?;
            let n = report.eigenvalues.len();
            println!("n={n}");
            if let (Some(a), Some(b)) = (report.eigenvalues.first(), report.eigenvalues.last()) {
                println!("lambda_max={a:e}\nlambda_min={b:e}");
            }
            if let Some(r) = &report.residual {
                println!("spearman={:.4}", r.spearman);
            }
            println!("written to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen { kind, out, seed } => {
            let spec = SignalSpec::default_for(&kind).ok_or_else(|| BenchError::Config {
                path: "--kind".into(),
                message: format!("unknown signal `{kind}`, expected one of: {}", SignalSpec::KINDS.join(", ")),
            })?;
            let format = SignalFormat::from_path(&out).unwrap_or(SignalFormat::RawF64);
            let grid = spec.generate(seed)?;
            io::save(&out, format, &grid)?;
            println!("wrote {} ({:?}, shape {:?})", out.display(), format, grid.shape());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
