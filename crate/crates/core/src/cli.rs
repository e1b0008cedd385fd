//! The `hybrid-vanet` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{builtin_scenarios, resolve_scenario, scenario_series, ConfigError, ScenarioConfig};
use crate::engine::{effective_seed, run_with, EngineError, RunOptions, SimResult};
use crate::metrics::{
    aggregate, deliveries_csv, route_trace_csv, run_summary, sweep_csv, MetricsError, RunMetrics,
    RunPoint, SweepTable, METRICS,
};

#[derive(Debug, Parser)]
#[command(name = "hybrid-vanet", version, about = "Highway V2V/D2D alert relaying simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario (every labelled variant of a figure preset).
    Run {
        /// Built-in name or scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; artifacts go to `<out>/<scenario>/`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the simulated duration, seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Also write the mobility trace CSV (needs --out).
        #[arg(long)]
        mobility_trace: bool,
    },
    /// Vary one variable over a list of values and several seeds.
    Sweep {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "vehicle_count")]
        vary: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// First seed; defaults to SIM_SEED or the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run several scenarios and tabulate one metric side by side.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        scenarios: Vec<String>,
        #[arg(long, default_value = "e2e_delay_ms")]
        metric: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// List built-in scenarios.
    List,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unknown metric {0}; expected one of delivery_ratio, e2e_delay_ms, hops, recovery_delay_ms")]
    UnknownMetric(String),
    #[error("--seeds must be at least 1")]
    NoSeeds,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

/// Writes one `<metric>.csv` per metric under `dir`.
pub fn write_metric_tables(dir: &Path, table: &SweepTable) -> Result<(), CliError> {
    for metric in METRICS {
        write_file(&dir.join(format!("{metric}.csv")), &sweep_csv(&table.filter_metric(metric))?)?;
    }
    Ok(())
}

fn apply_overrides(cfg: &mut ScenarioConfig, seed: Option<u64>, duration: Option<f64>) -> Result<(), CliError> {
    cfg.seed = effective_seed(cfg.seed, seed)?;
    if let Some(d) = duration {
        cfg.sim_duration_s = d;
    }
    Ok(())
}

struct Job {
    label: String,
    config: ScenarioConfig,
}

fn run_jobs(jobs: &[Job], opts: &RunOptions) -> Result<Vec<SimResult>, CliError> {
    let results: Result<Vec<SimResult>, EngineError> =
        jobs.par_iter().map(|j| run_with(&j.config, opts)).collect();
    Ok(results?)
}

fn points(jobs: &[Job], results: &[SimResult]) -> Vec<RunPoint> {
    jobs.iter()
        .zip(results)
        .map(|(j, r)| RunPoint {
            label: j.label.clone(),
            config: r.config_echo.clone(),
            metrics: RunMetrics::from_records(&r.deliveries),
        })
        .collect()
}

fn table_text(table: &SweepTable, metric: &str) -> String {
    let mut s = format!("{:<22} {:>10} {:>14} {:>12} {:>4}\n", "label", table.variable, metric, "stddev", "n");
    for r in table.rows.iter().filter(|r| r.metric == metric) {
        s.push_str(&format!(
            "{:<22} {:>10} {:>14.3} {:>12.3} {:>4}\n",
            r.label, r.x, r.mean, r.stddev, r.n
        ));
    }
    s
}

fn cmd_run(
    scenario: &str,
    seed: Option<u64>,
    out: Option<&Path>,
    duration: Option<f64>,
    mobility_trace: bool,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let started = Instant::now();
    let (name, mut base) = resolve_scenario(scenario)?;
    apply_overrides(&mut base, seed, duration)?;
    let series = scenario_series(&name, &base);
    let dir = out.map(|o| o.join(&name));
    let mut summary = format!("scenario {name}  seed {}\n", base.seed);
    let mut jobs = Vec::new();
    let mut results = Vec::new();
    for (label, config) in series {
        let opts = RunOptions {
            route_trace: dir.is_some(),
            mobility_trace: match (&dir, mobility_trace) {
                (Some(d), true) => {
                    fs::create_dir_all(d).map_err(|source| CliError::Io { path: d.clone(), source })?;
                    Some(d.join(format!("mobility_{label}.csv")))
                }
                _ => None,
            },
        };
        let result = run_with(&config, &opts)?;
        summary.push_str(&run_summary(&label, &result.config_echo, &result.deliveries));
        if let Some(z) = result.dead_zone {
            summary.push_str(&format!(
                "  injected dead end {} m to {} m, edge relays {} and {}\n",
                z.start_m, z.end_m, z.near_edge, z.far_edge
            ));
        }
        jobs.push(Job { label, config });
        results.push(result);
    }
    if let Some(dir) = &dir {
        let table = aggregate(&points(&jobs, &results), "vehicle_count")?;
        write_metric_tables(dir, &table)?;
        let recs: Vec<(&str, &[_])> = jobs
            .iter()
            .zip(&results)
            .map(|(j, r)| (j.label.as_str(), r.deliveries.as_slice()))
            .collect();
        write_file(&dir.join("deliveries.csv"), &deliveries_csv(&recs)?)?;
        let rows: Vec<(&str, &[_])> = jobs
            .iter()
            .zip(&results)
            .map(|(j, r)| (j.label.as_str(), r.route_trace.as_slice()))
            .collect();
        write_file(&dir.join("route_trace.csv"), &route_trace_csv(&rows)?)?;
        write_file(&dir.join("summary.txt"), summary.as_bytes())?;
    }
    let _ = write!(stdout, "{summary}");
    let _ = writeln!(stdout, "wall time {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    scenario: &str,
    vary: &str,
    values: &[f64],
    seeds: u64,
    seed: Option<u64>,
    out: Option<&Path>,
    duration: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if seeds == 0 {
        return Err(CliError::NoSeeds);
    }
    let started = Instant::now();
    let (name, mut base) = resolve_scenario(scenario)?;
    apply_overrides(&mut base, seed, duration)?;
    let mut jobs = Vec::new();
    for (label, cfg) in scenario_series(&name, &base) {
        for &x in values {
            for s in 0..seeds {
                let mut c = cfg.clone();
                c.set_variable(vary, x)?;
                c.seed = base.seed + s;
                jobs.push(Job {
                    label: label.clone(),
                    config: c.validated()?,
                });
            }
        }
    }
    let results = run_jobs(&jobs, &RunOptions::default())?;
    let table = aggregate(&points(&jobs, &results), vary)?;
    let mut summary = format!(
        "sweep {name} over {vary}, {seeds} seed(s) from {}\n",
        base.seed
    );
    for metric in METRICS {
        summary.push('\n');
        summary.push_str(&table_text(&table, metric));
    }
    if let Some(o) = out {
        let dir = o.join(&name);
        write_metric_tables(&dir, &table)?;
        write_file(&dir.join("summary.txt"), summary.as_bytes())?;
    }
    let _ = write!(stdout, "{summary}");
    let _ = writeln!(stdout, "wall time {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_compare(
    scenarios: &[String],
    metric: &str,
    seeds: u64,
    seed: Option<u64>,
    out: Option<&Path>,
    duration: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if !METRICS.contains(&metric) {
        return Err(CliError::UnknownMetric(metric.to_string()));
    }
    if seeds == 0 {
        return Err(CliError::NoSeeds);
    }
    let started = Instant::now();
    let mut jobs = Vec::new();
    for scenario in scenarios {
        let (name, mut base) = resolve_scenario(scenario)?;
        apply_overrides(&mut base, seed, duration)?;
        let series = scenario_series(&name, &base);
        let single = series.len() == 1;
        for (label, cfg) in series {
            for s in 0..seeds {
                let mut c = cfg.clone();
                c.seed = base.seed + s;
                let label = if single { name.clone() } else { format!("{name}/{label}") };
                jobs.push(Job { label, config: c });
            }
        }
    }
    let results = run_jobs(&jobs, &RunOptions::default())?;
    let table = aggregate(&points(&jobs, &results), "vehicle_count")?;
    let summary = format!("compare {}\n\n{}", scenarios.join(","), table_text(&table, metric));
    if let Some(o) = out {
        let dir = o.join("compare");
        write_metric_tables(&dir, &table)?;
        write_file(&dir.join("summary.txt"), summary.as_bytes())?;
    }
    let _ = write!(stdout, "{summary}");
    let _ = writeln!(stdout, "wall time {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_list(stdout: &mut dyn Write) {
    for (name, cfg) in builtin_scenarios() {
        let labels: Vec<String> = scenario_series(name, &cfg).into_iter().map(|(l, _)| l).collect();
        let _ = if labels.len() > 1 {
            writeln!(stdout, "{name:<22} {}", labels.join(", "))
        } else {
            writeln!(
                stdout,
                "{name:<22} mode {} vehicles {} v2v {} m d2d {} m",
                cfg.d2d_mode, cfg.vehicle_count, cfg.v2v_range_m, cfg.d2d_range_m
            )
        };
    }
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            duration,
            mobility_trace,
        } => cmd_run(&scenario, seed, out.as_deref(), duration, mobility_trace, stdout),
        Command::Sweep {
            scenario,
            vary,
            values,
            seeds,
            seed,
            out,
            duration,
        } => cmd_sweep(&scenario, &vary, &values, seeds, seed, out.as_deref(), duration, stdout),
        Command::Compare {
            scenarios,
            metric,
            seeds,
            seed,
            out,
            duration,
        } => cmd_compare(&scenarios, &metric, seeds, seed, out.as_deref(), duration, stdout),
        Command::List => {
            cmd_list(stdout);
            Ok(())
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 2 on usage errors, 1 otherwise.
pub fn cli_main<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}
