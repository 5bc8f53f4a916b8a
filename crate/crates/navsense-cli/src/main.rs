use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leo_navsense::config::ScenarioConfig;
use leo_navsense::error::{Error, Result};
use leo_navsense::harness::{
    run_baselines, run_scenario, sweep, write_baselines_csv, write_run_csv, write_sweep_csv, write_trace_csv,
};

const LOG_ENV: &str = "NAVSENSE_LOG";

/// Joint navigation and remote-sensing beamforming experiments for LEO
/// constellations. Log verbosity follows NAVSENSE_LOG (error, warn, info,
/// debug, trace).
#[derive(Parser)]
#[command(name = "navsense", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Absent keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the full-size profile instead of the desk profile.
    #[arg(long)]
    paper_scale: bool,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run Algorithm 1 on one scene; writes run.csv and trace.csv.
    Run(Common),
    /// Sweep one numeric config field; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted config path, e.g. optimizer.max_transmit_power_dbm.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Seeds per value, counted up from the master seed.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// Compare Algorithm 1 with the baseline designs; writes baselines.csv.
    Baselines(Common),
    /// Per-iteration objective trace; writes convergence.csv.
    Convergence(Common),
}

fn load(c: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match (&c.config, c.paper_scale) {
        (Some(p), false) => ScenarioConfig::load(p)?,
        (None, true) => ScenarioConfig::paper_scale(),
        (None, false) => ScenarioConfig::default(),
        (Some(_), true) => return Err(Error::Config("--config and --paper-scale are exclusive".into())),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&c.out).map_err(|e| Error::Io(format!("{}: {e}", c.out.display())))?;
    std::fs::write(c.out.join("config.toml"), cfg.to_toml()?)
        .map_err(|e| Error::Io(format!("{}: {e}", c.out.display())))?;
    Ok(cfg)
}

fn done(path: &Path) {
    println!("wrote {}", path.display());
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(c) => {
            let cfg = load(&c)?;
            let rec = run_scenario(&cfg, cfg.seed)?;
            println!(
                "scene {} seed {}: weighted {:.6e}, SAINR {:.3} dB, {} iterations, converged {}",
                rec.hash, rec.seed, rec.objective, rec.sainr_db, rec.iterations, rec.converged
            );
            let (run, trace) = (c.out.join("run.csv"), c.out.join("trace.csv"));
            write_run_csv(&run, &rec)?;
            write_trace_csv(&trace, &rec)?;
            done(&run);
            done(&trace);
        }
        Command::Sweep { common, param, values, seeds } => {
            let cfg = load(&common)?;
            let points = sweep(&cfg, &param, &values, seeds)?;
            for p in &points {
                println!(
                    "{param} = {}: weighted {:.6e} ± {:.2e} over {} runs, {} failed",
                    p.value,
                    p.weighted.mean,
                    p.weighted.stderr,
                    p.runs.iter().flatten().count(),
                    p.failures.len()
                );
                for f in &p.failures {
                    log::warn!("{param} = {}: {f}", p.value);
                }
            }
            let path = common.out.join("sweep.csv");
            write_sweep_csv(&path, &cfg, &param, &points)?;
            done(&path);
        }
        Command::Baselines(c) => {
            let cfg = load(&c)?;
            let report = run_baselines(&cfg, cfg.seed)?;
            for r in &report.rows {
                println!("{:<16} weighted {:.6e}  SAINR {:.3} dB", r.method, r.objective, r.sainr_db);
            }
            let path = c.out.join("baselines.csv");
            write_baselines_csv(&path, &report)?;
            done(&path);
        }
        Command::Convergence(c) => {
            let cfg = load(&c)?;
            let rec = run_scenario(&cfg, cfg.seed)?;
            for (i, f) in rec.trace.iter().enumerate() {
                println!("{i:>3} {f:.9e}");
            }
            let path = c.out.join("convergence.csv");
            write_trace_csv(&path, &rec)?;
            done(&path);
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "config" | "parse" => 3,
        "io" => 4,
        "infeasible" => 5,
        "geometry" | "observability" | "waveform" | "sensing" | "dimension" => 6,
        _ => 7,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
