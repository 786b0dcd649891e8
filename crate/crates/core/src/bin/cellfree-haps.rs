use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellfree_haps::experiment::{
    cdf_experiment, mc_validate, run, write_cdf_csv, ExperimentConfig, RunMeta, Sweep, SweepParam, SweepValue,
};
use cellfree_haps::optimizer::OptimizeMode;
use cellfree_haps::rate::Scheme;
use cellfree_haps::{Error, Result};
use clap::{Parser, Subcommand};
use log::{error, info};

/// Aerial cell-free uplink with HAPS backhaul: sweeps, CDFs and Monte Carlo checks.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// JSON experiment config; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (CSV for run and cdf, JSON for mc-validate); stdout if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sweep parameter: P_m_dbm, M, K, S or environment.
    #[arg(long, global = true)]
    sweep: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, global = true, value_delimiter = ',')]
    values: Vec<String>,
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// none, power, placement or joint.
    #[arg(long, global = true)]
    optimize: Option<String>,
    #[arg(long, global = true)]
    drops: Option<usize>,
    #[arg(long, global = true)]
    mc_trials: Option<usize>,
    /// Record wall-clock time per row in runtime_ms.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Min-rate per drop for every sweep value.
    Run,
    /// Empirical link chain against the closed-form SINR.
    McValidate,
    /// Empirical CDF of the per-drop min rate.
    Cdf,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = &cli.scheme {
        cfg.scheme = s.parse::<Scheme>()?;
    }
    if let Some(s) = &cli.optimize {
        cfg.optimize = s.parse::<OptimizeMode>()?;
    }
    if let Some(d) = cli.drops {
        cfg.drops = d;
    }
    if let Some(t) = cli.mc_trials {
        cfg.mc.trials = t;
    }
    if cli.timing {
        cfg.record_runtime = true;
    }
    match (&cli.sweep, cli.values.is_empty()) {
        (Some(name), false) => {
            let param: SweepParam = name.parse()?;
            let values = cli
                .values
                .iter()
                .map(|v| SweepValue::parse_for(param, v))
                .collect::<Result<Vec<_>>>()?;
            cfg.sweep = Some(Sweep { param, values });
        }
        (Some(_), true) => return Err(Error::config("values", "--sweep needs --values")),
        (None, false) => return Err(Error::config("sweep", "--values needs --sweep")),
        (None, true) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn execute(cli: &Cli) -> Result<bool> {
    let cfg = build_config(cli)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Run => {
            let res = run(&cfg)?;
            res.write_csv(output(out)?)?;
            if let Some(p) = out {
                RunMeta::new(&cfg, &res).write_json(&meta_path(p))?;
            }
            for s in res.summarize() {
                info!("{} = {}: mean {:.4}, median {:.4} bps/Hz", cfg.sweep.as_ref().map_or("-", |s| s.param.as_str()), s.sweep_value, s.mean(), s.median());
            }
            Ok(!res.any_solver_failure())
        }
        Command::Cdf => {
            let (rows, res) = cdf_experiment(&cfg)?;
            write_cdf_csv(&rows, output(out)?)?;
            if let Some(p) = out {
                RunMeta::new(&cfg, &res).write_json(&meta_path(p))?;
            }
            Ok(!res.any_solver_failure())
        }
        Command::McValidate => {
            let rep = mc_validate(&cfg)?;
            let mut w = output(out)?;
            writeln!(w, "{}", rep.to_json()?)?;
            w.flush()?;
            info!("max |gap| {:.2} dB over {} users", rep.max_abs_gap_db, rep.users.len());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            error!("some work items hit a solver failure; see the metadata file");
            ExitCode::from(3)
        }
        Err(e) if e.is_config() => {
            error!("{e}");
            ExitCode::from(2)
        }
        Err(e) if e.is_solver() => {
            error!("{e}");
            ExitCode::from(3)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
