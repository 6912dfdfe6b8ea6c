use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use vpon_dba::config::ConfigFile;
use vpon_dba::latency::Preset;
use vpon_dba::report;
use vpon_dba::sim::{self, RunResult, Scenario};

const EXIT_USAGE: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vpon-dba",
    version,
    about = "Dual-DBA virtual PON latency tool"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Directory for CSV output.
    #[arg(long, env = "VPON_DBA_OUT", default_value = ".")]
    out_dir: PathBuf,
    /// Omit the `# generated_at=` line from CSV output.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args, Clone)]
struct RunOpts {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace every stochastic stage by its mean.
    #[arg(long)]
    pin_variance: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the analytic latency budget per mode.
    Budget {
        /// Parameter preset (s2 or s3).
        #[arg(long, default_value = "s2")]
        preset: String,
        /// `all` or a comma list of classical, virtual, fast.
        #[arg(long, default_value = "all")]
        modes: String,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one scenario.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        run: RunOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one scenario under all three modes.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        run: RunOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate several scenarios in parallel.
    Sweep {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        run: RunOpts,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure that maps to a specific exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Budget {
            preset,
            modes,
            common,
        } => budget(&preset, &modes, &common),
        Command::Simulate {
            config,
            run,
            common,
        } => simulate(&config, &run, &common),
        Command::Compare {
            config,
            run,
            common,
        } => compare(&config, &run, &common),
        Command::Sweep {
            configs,
            run,
            common,
        } => sweep(&configs, &run, &common),
    }
}

fn header(common: &Common, config_timestamp: bool) -> Option<String> {
    (!common.no_timestamp && config_timestamp).then(report::timestamp_line)
}

fn write_out(common: &Common, name: &str, text: &str) -> Result<(), Failure> {
    fs::create_dir_all(&common.out_dir)
        .with_context(|| format!("cannot create {}", common.out_dir.display()))?;
    let path = common.out_dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn load(path: &Path, run: &RunOpts) -> Result<(ConfigFile, Scenario), Failure> {
    let cfg = ConfigFile::load(path).map_err(Failure::usage)?;
    let mut scenario = cfg
        .to_scenario()
        .map_err(|e| Failure::usage(anyhow::anyhow!("{}: {e}", path.display())))?;
    if let Some(seed) = run.seed {
        scenario.seed = seed;
    }
    scenario.pin_variance |= run.pin_variance;
    Ok((cfg, scenario))
}

fn budget(preset: &str, modes: &str, common: &Common) -> Result<u8, Failure> {
    let preset = Preset::from_name(preset).map_err(Failure::usage)?;
    let modes = report::parse_modes(modes).map_err(|e| Failure::usage(anyhow::anyhow!(e)))?;
    let rows = report::budget_rows(&preset.params(), &modes);
    print!("{}", report::budget_table(&rows));
    let head = header(common, true);
    write_out(
        common,
        "budget.csv",
        &report::budget_csv(&rows, head.as_deref()),
    )?;
    Ok(0)
}

fn check_invariants(results: &[&RunResult]) -> u8 {
    let failures: Vec<String> = results
        .iter()
        .flat_map(|r| report::invariant_failures(r))
        .collect();
    for f in &failures {
        eprintln!("invariant violated: {f}");
    }
    if failures.is_empty() {
        0
    } else {
        EXIT_INVARIANT
    }
}

fn simulate(config: &Path, run: &RunOpts, common: &Common) -> Result<u8, Failure> {
    let (cfg, scenario) = load(config, run)?;
    let result = sim::run(&scenario).map_err(|e| Failure::usage(anyhow::anyhow!(e)))?;
    print!("{}", report::summary_table(&result));
    if !result.fast_path_active && scenario.mode == vpon_dba::Mode::FastIntercept {
        println!("note: fast path inactive, low-latency traffic served by the CPU DBA");
    }
    let head = header(common, cfg.output.timestamp);
    write_out(
        common,
        "samples.csv",
        &report::samples_csv(&result, head.as_deref()),
    )?;
    write_out(
        common,
        "summary.csv",
        &report::summary_csv(&[&result], head.as_deref()),
    )?;
    Ok(check_invariants(&[&result]))
}

fn compare(config: &Path, run: &RunOpts, common: &Common) -> Result<u8, Failure> {
    let (cfg, scenario) = load(config, run)?;
    let rep = report::compare(&scenario).map_err(|e| Failure::usage(anyhow::anyhow!(e)))?;
    print!("{}", report::compare_text(&rep));
    let head = header(common, cfg.output.timestamp);
    write_out(
        common,
        "compare.csv",
        &report::compare_csv(&rep, head.as_deref()),
    )?;
    write_out(
        common,
        "reductions.csv",
        &report::reductions_csv(&rep, head.as_deref()),
    )?;
    Ok(if rep.invariant_failures.is_empty() {
        0
    } else {
        EXIT_INVARIANT
    })
}

fn sweep(configs: &[PathBuf], run: &RunOpts, common: &Common) -> Result<u8, Failure> {
    let mut labels = Vec::new();
    let mut scenarios = Vec::new();
    let mut timestamp = true;
    for path in configs {
        let (cfg, scenario) = load(path, run)?;
        timestamp &= cfg.output.timestamp;
        labels.push(
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        );
        scenarios.push(scenario);
    }
    let mut labelled = Vec::new();
    for (label, result) in labels.into_iter().zip(sim::sweep(&scenarios)) {
        let result = result.map_err(|e| Failure::usage(anyhow::anyhow!("{label}: {e}")))?;
        labelled.push((label, result));
    }
    for (label, result) in &labelled {
        println!("{label}");
        print!("{}", report::summary_table(result));
    }
    let head = header(common, timestamp);
    write_out(
        common,
        "sweep.csv",
        &report::sweep_csv(&labelled, head.as_deref()),
    )?;
    let results: Vec<&RunResult> = labelled.iter().map(|(_, r)| r).collect();
    Ok(check_invariants(&results))
}
