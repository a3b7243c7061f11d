//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::calibration::{evolve, history_to_csv, result_summary, Objective};
use crate::config::{parse_freeze_item, ConfigBuilder, Preset, RunConfig};
use crate::dataio::export::{
    export_heatmap_csv, export_log_csv, export_pdr_csv, parse_log_csv, parse_pdr_csv,
};
use crate::dataio::projection::project_enu;
use crate::dataio::synthetic::generate_synthetic;
use crate::dataio::trace::{export_trace_csv, parse_trace_csv};
use crate::error::Error;
use crate::simulator::{heatmap_filtered, pdr_curve_filtered, run_scenario};

#[derive(Debug, Parser)]
#[command(
    name = "v2x-calib",
    version,
    about = "V2X channel simulator and GA calibrator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a trace and write delivery log, PDR curve and heatmap CSVs.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Simulation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit the channel parameters to an observed PDR curve.
    Calibrate {
        /// Observed PDR curve CSV.
        #[arg(long)]
        observed: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        generations: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        population: Option<u64>,
        /// GA seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Pin a gene: `gene` (at its configured value) or `gene=value`.
        #[arg(long, value_name = "GENE[=VALUE]")]
        freeze: Vec<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-aggregate a delivery log into a PDR curve.
    Pdr {
        #[arg(long)]
        log: PathBuf,
        /// Output CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-aggregate a delivery log into a PDR heatmap.
    Heatmap {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a ground-truth dataset from planted parameters (the
    /// calibrated column unless configured otherwise).
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Synthetic dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter-table column: default or calibrated.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Message direction filter: both, bsm or spat.
    #[arg(long)]
    pub direction: Option<String>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub cell: Option<f64>,
    /// Trace timestamps are integer epoch milliseconds.
    #[arg(long)]
    pub epoch_ms: bool,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

/// Errors in what the user supplied are usage errors; the rest are runtime.
fn input_error(context: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| match e {
        Error::Domain(_) => CliError::runtime(format!("{}: {e}", context.display())),
        _ => CliError::usage(format!("{}: {e}", context.display())),
    }
}

fn runtime_error(e: Error) -> CliError {
    CliError::runtime(e.to_string())
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Defaults (optionally a preset), then the config file, then flags.
fn resolve(
    common: &CommonArgs,
    base: Option<Preset>,
    extra: impl FnOnce(&mut ConfigBuilder) -> Result<(), Error>,
) -> Result<RunConfig, CliError> {
    let mut b = ConfigBuilder::new();
    if let Some(p) = base {
        b.apply_preset(p);
    }
    if let Some(path) = &common.config {
        let text = read_input(path)?;
        b.apply_document(&path.display().to_string(), &text)
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let flags = || -> Result<(), Error> {
        if let Some(p) = &common.preset {
            b.apply_preset(p.parse::<Preset>()?);
        }
        for kv in &common.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config(format!("--set `{kv}`: expected KEY=VALUE")))?;
            b.set(k.trim(), v.trim())?;
        }
        if let Some(d) = &common.direction {
            b.set("direction", d)?;
        }
        if let Some(w) = common.bin_width {
            b.set("bin_width", &w.to_string())?;
        }
        if let Some(c) = common.cell {
            b.set("heatmap_cell", &c.to_string())?;
        }
        if common.epoch_ms {
            b.set("time_format", "epoch_ms")?;
        }
        extra(&mut b)
    };
    flags().map_err(|e| CliError::usage(e.to_string()))?;
    b.build().map_err(|e| CliError::usage(e.to_string()))
}

fn load_trace(path: &Path, cfg: &RunConfig) -> Result<crate::dataio::ProjectedTrace, CliError> {
    let text = read_input(path)?;
    let trace = parse_trace_csv(&text, cfg.rsu, cfg.time_format).map_err(input_error(path))?;
    project_enu(&trace).map_err(input_error(path))
}

fn cmd_simulate(trace: &Path, out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let projected = load_trace(trace, cfg)?;
    let log = run_scenario(&projected, &cfg.scenario, &cfg.radio, &cfg.fading)
        .map_err(input_error(trace))?;
    let curve =
        pdr_curve_filtered(&log, cfg.scenario.bin_width_m, cfg.direction).map_err(runtime_error)?;
    let grid = heatmap_filtered(&log, cfg.scenario.heatmap_cell_m, cfg.direction)
        .map_err(runtime_error)?;
    ensure_dir(out)?;
    let paths = [
        (out.join("log.csv"), export_log_csv(&log)),
        (out.join("pdr.csv"), export_pdr_csv(&curve)),
        (out.join("heatmap.csv"), export_heatmap_csv(&grid)),
        (out.join("config.txt"), cfg.to_config_string()),
    ];
    for (p, text) in &paths {
        write_output(p, text)?;
    }
    let overall = log
        .overall_pdr()
        .map_or("NA".to_owned(), |p| format!("{p:.3}"));
    println!(
        "simulated {} packets, {} delivered, overall pdr {overall}%; wrote {}, {}, {}, {}",
        log.len(),
        log.delivered(),
        paths[0].0.display(),
        paths[1].0.display(),
        paths[2].0.display(),
        paths[3].0.display(),
    );
    Ok(())
}

fn cmd_calibrate(
    observed: &Path,
    trace: &Path,
    out: &Path,
    cfg: &RunConfig,
    jobs: usize,
) -> Result<(), CliError> {
    // Bin geometry is checked before any simulation runs.
    let observed_text = read_input(observed)?;
    let curve = parse_pdr_csv(&observed_text, Some(cfg.scenario.bin_width_m))
        .map_err(input_error(observed))?;
    let projected = load_trace(trace, cfg)?;
    let objective = Objective::with_templates(
        &curve,
        &projected,
        &cfg.scenario,
        &cfg.radio,
        &cfg.fading,
        cfg.direction,
    )
    .map_err(input_error(observed))?;
    let space = cfg
        .search_space()
        .map_err(|e| CliError::usage(e.to_string()))?;
    ensure_dir(out)?;
    let result = evolve(&cfg.ga, &objective, &space, jobs).map_err(runtime_error)?;
    let summary = result_summary(&result);
    write_output(&out.join("history.csv"), &history_to_csv(&result.history))?;
    write_output(&out.join("best.txt"), &summary)?;
    write_output(&out.join("config.txt"), &cfg.to_config_string())?;
    print!("{summary}");
    Ok(())
}

fn cmd_aggregate(
    log_path: &Path,
    out: Option<&Path>,
    cfg: &RunConfig,
    heat: bool,
) -> Result<(), CliError> {
    let text = read_input(log_path)?;
    let log = parse_log_csv(&text).map_err(input_error(log_path))?;
    let doc = if heat {
        export_heatmap_csv(
            &heatmap_filtered(&log, cfg.scenario.heatmap_cell_m, cfg.direction)
                .map_err(runtime_error)?,
        )
    } else {
        export_pdr_csv(
            &pdr_curve_filtered(&log, cfg.scenario.bin_width_m, cfg.direction)
                .map_err(runtime_error)?,
        )
    };
    match out {
        Some(p) => write_output(p, &doc),
        None => {
            print!("{doc}");
            Ok(())
        }
    }
}

fn cmd_synth(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.synthetic_spec();
    let ds =
        generate_synthetic(&spec, &cfg.scenario).map_err(|e| CliError::usage(e.to_string()))?;
    let curve = pdr_curve_filtered(&ds.log, cfg.scenario.bin_width_m, cfg.direction)
        .map_err(runtime_error)?;
    ensure_dir(out)?;
    write_output(&out.join("trace.csv"), &export_trace_csv(&ds.trace))?;
    write_output(&out.join("log.csv"), &export_log_csv(&ds.log))?;
    write_output(&out.join("pdr.csv"), &export_pdr_csv(&curve))?;
    // The planted run used the synthetic seed; record it as the simulation
    // seed so the file replays the dataset exactly.
    let mut planted = cfg.clone();
    planted.scenario.master_seed = spec.seed;
    write_output(&out.join("planted.txt"), &planted.to_config_string())?;
    println!(
        "synthesized {} trace samples, {} packets; wrote {}",
        ds.trace.records().len(),
        ds.log.len(),
        out.display()
    );
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            trace,
            out,
            seed,
            common,
        } => {
            let cfg = resolve(&common, None, |b| {
                if let Some(s) = seed {
                    b.set("master_seed", &s.to_string())?;
                }
                Ok(())
            })?;
            cmd_simulate(&trace, &out, &cfg)
        }
        Command::Calibrate {
            observed,
            trace,
            out,
            generations,
            population,
            seed,
            freeze,
            common,
        } => {
            let cfg = resolve(&common, None, |b| {
                if let Some(g) = generations {
                    b.set("generations", &g.to_string())?;
                }
                if let Some(p) = population {
                    b.set("population_size", &p.to_string())?;
                }
                if let Some(s) = seed {
                    b.set("ga_seed", &s.to_string())?;
                }
                for item in &freeze {
                    let (g, v) = parse_freeze_item(item)?;
                    b.freeze(g, v);
                }
                Ok(())
            })?;
            cmd_calibrate(&observed, &trace, &out, &cfg, common.jobs.unwrap_or(0))
        }
        Command::Pdr { log, out, common } => {
            let cfg = resolve(&common, None, |_| Ok(()))?;
            cmd_aggregate(&log, out.as_deref(), &cfg, false)
        }
        Command::Heatmap { log, out, common } => {
            let cfg = resolve(&common, None, |_| Ok(()))?;
            cmd_aggregate(&log, out.as_deref(), &cfg, true)
        }
        Command::Synth { out, seed, common } => {
            let cfg = resolve(&common, Some(Preset::Calibrated), |b| {
                if let Some(s) = seed {
                    b.set("synth_seed", &s.to_string())?;
                }
                Ok(())
            })?;
            cmd_synth(&out, &cfg)
        }
    }
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
