use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use needle_grasp::harness::{
    run_batch, run_trial, simulate_calibration, verify_table1, write_atomic, write_detections_csv, write_trace_csv,
    ScenarioConfig, OUT_DIR_ENV, TABLE1,
};

#[derive(Parser)]
#[command(name = "needle-grasp", version, about = "Vision-guided needle grasping simulator")]
struct Cli {
    /// Only print errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Print debug logging.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the calibration procedures and print their residuals.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report to this JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one trial.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Per-step trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Marker detection CSV.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Trial record JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch of seeded trials and write the summary report.
    Batch {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the scenario trial count.
        #[arg(short = 'n', long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-trial trace CSVs.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Override the scenario base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute the published path-planning error table.
    VerifyPaper,
    /// Print the default scenario config.
    DefaultConfig,
}

/// Relative output paths land under `NEEDLE_GRASP_OUT_DIR` when it is set.
fn out_path(p: &Path) -> Result<PathBuf> {
    let path = match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if p.is_relative() => PathBuf::from(dir).join(p),
        _ => p.to_path_buf(),
    };
    if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(path)
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Calibrate { config, seed, out } => {
            let cfg = load(&config)?;
            let report = simulate_calibration(&cfg, seed.unwrap_or(cfg.seed))?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = out {
                let path = out_path(&out)?;
                write_atomic(&path, json.as_bytes())?;
                info!("wrote {}", path.display());
            }
            println!("{json}");
        }
        Command::Run {
            config,
            seed,
            trace,
            detections,
            out,
        } => {
            let cfg = load(&config)?;
            let record = run_trial(&cfg, 0, seed)?;
            if let Some(trace) = trace {
                let path = out_path(&trace)?;
                let mut buf = Vec::new();
                write_trace_csv(&mut buf, &record.trace)?;
                write_atomic(&path, &buf)?;
                info!("wrote {} ({} rows)", path.display(), record.trace.len());
            }
            if let Some(det) = detections {
                let path = out_path(&det)?;
                let mut buf = Vec::new();
                write_detections_csv(&mut buf, &record.detections)?;
                write_atomic(&path, &buf)?;
                info!("wrote {}", path.display());
            }
            let json = serde_json::to_string_pretty(&record)?;
            if let Some(out) = out {
                let path = out_path(&out)?;
                write_atomic(&path, json.as_bytes())?;
                info!("wrote {}", path.display());
            }
            if let Some(reason) = &record.abort_reason {
                warn!("trial aborted: {reason}");
            }
            println!(
                "outcome={} error_mm={:.3} components_mm=[{:.3}, {:.3}, {:.3}] task_time_s={:.2} completed={}",
                record.outcome.kind.as_str(),
                record.outcome.final_tip_error,
                record.outcome.components[0],
                record.outcome.components[1],
                record.outcome.components[2],
                record.task_time_s,
                record.completed,
            );
        }
        Command::Batch {
            config,
            n,
            out,
            traces,
            seed,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let n = n.unwrap_or(cfg.trials);
            info!("running {n} trials of '{}'", cfg.name);
            let result = run_batch(&cfg, n)?;
            let path = out_path(&out)?;
            write_atomic(&path, result.report.to_json().as_bytes())?;
            info!("wrote {}", path.display());
            if let Some(dir) = traces {
                for t in &result.trials {
                    let p = out_path(&dir.join(format!("trial_{:03}.csv", t.trial_id)))?;
                    let mut buf = Vec::new();
                    write_trace_csv(&mut buf, &t.trace)?;
                    write_atomic(&p, &buf)?;
                }
            }
            let r = &result.report;
            println!(
                "trials={} success={} miss={} fail={} aborted={} mean_error_mm={:.3} mean_task_time_s={}",
                r.n_trials,
                r.counts.success,
                r.counts.miss,
                r.counts.fail,
                r.aborted,
                r.mean_terminal_error_mm,
                r.mean_task_time_s.map_or("n/a".into(), |t| format!("{t:.2}")),
            );
        }
        Command::VerifyPaper => match verify_table1(&TABLE1) {
            Ok(report) => {
                for row in &report.rows {
                    println!(
                        "row {:2}: computed {:.3} reported {:.1} ok",
                        row.id, row.computed, row.reported
                    );
                }
                println!("mean {:.3} (reported {:.1}) ok", report.mean, report.reported_mean);
            }
            Err(e) => {
                for row in &e.report.rows {
                    let status = if row.ok { "ok" } else { "MISMATCH" };
                    println!(
                        "row {:2}: computed {:.3} reported {:.1} {status}",
                        row.id, row.computed, row.reported
                    );
                }
                println!("mean {:.3} (reported {:.1})", e.report.mean, e.report.reported_mean);
                eprintln!("error: {e}");
                return Ok(ExitCode::FAILURE);
            }
        },
        Command::DefaultConfig => println!("{}", ScenarioConfig::default().to_json()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        "error"
    } else if cli.verbose {
        "debug"
    } else {
        "info"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
