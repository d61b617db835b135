use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use victimloc::harness::{
    build_scenario, check_preconditions, run_experiment, sweep, ExperimentConfig, ExperimentResult,
    SweepAxis, SweepSpec, Technique,
};
use victimloc::report::{self, Format};
use victimloc::{Error, Result};

/// Monte Carlo benchmark of passive victim localization techniques.
#[derive(Parser)]
#[command(name = "victimloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment on a single scenario.
    Run(RunArgs),
    /// Run an experiment per sweep value and draw the NRMSE figure.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep axis; overrides `sweep.axis` and uses its default values
        /// unless the config lists values for the same axis.
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
    },
    /// Draw the NRMSE figure from a JSON results file.
    Plot {
        /// Results written by `sweep --format json`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check a config and the scenarios it would draw, without running trials.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Run only this technique; repeatable.
    #[arg(long = "technique", value_name = "NAME")]
    techniques: Vec<String>,
    /// Trial count override.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Rescuers,
    Victims,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Rescuers => SweepAxis::Rescuers,
            AxisArg::Victims => SweepAxis::Victims,
        }
    }
}

fn load(config: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(path) => report::parse_config(path).map_err(|e| match e {
            Error::Io(io) => Error::config("--config", format!("{}: {io}", path.display())),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.scenario.seed = seed;
    }
    Ok(cfg)
}

fn configure(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = load(args.config.as_deref(), args.seed)?;
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if !args.techniques.is_empty() {
        let mut selected: Vec<Technique> = Vec::new();
        for name in &args.techniques {
            let t = name
                .parse::<Technique>()
                .map_err(|e| Error::config("--technique", e.to_string()))?;
            if !selected.contains(&t) {
                selected.push(t);
            }
        }
        cfg.techniques = selected;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn format_of(f: FormatArg) -> Format {
    match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    }
}

fn print_table(results: &[ExperimentResult]) {
    println!(
        "{:<14} {:>6} {:>12} {:>14} {:>10} {:>8}",
        "technique", "sweep", "nrmse_m", "runtime_mean_s", "converged", "excluded"
    );
    for r in results {
        for row in &r.rows {
            println!(
                "{:<14} {:>6} {:>12.4} {:>14.3e} {:>10.3} {:>8}",
                row.technique.name(),
                row.sweep_value.map_or("-".to_string(), |v| v.to_string()),
                row.nrmse_m,
                row.runtime_mean_s,
                row.convergence_rate,
                row.excluded_trials
            );
        }
    }
}

fn write_results(
    results: &[ExperimentResult],
    format: Format,
    out: &Path,
    stem: &str,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{stem}.{}", format.extension()));
    report::emit_results(results, format, &path)?;
    Ok(path)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = configure(&args)?;
            cfg.sweep = None;
            let result = run_experiment(&cfg)?;
            let results = [result];
            print_table(&results);
            let path = write_results(&results, format_of(args.format), &args.out, "results")?;
            eprintln!("wrote {}", path.display());
        }
        Command::Sweep { run, axis } => {
            let mut cfg = configure(&run)?;
            if let Some(axis) = axis.map(SweepAxis::from) {
                let values = match &cfg.sweep {
                    Some(s) if s.axis == axis => s.values.clone(),
                    _ => axis.default_values(),
                };
                cfg.sweep = Some(SweepSpec { axis, values });
            }
            let axis = cfg.sweep.as_ref().map(|s| s.axis).ok_or_else(|| {
                Error::config(
                    "sweep.axis",
                    "no sweep axis in the config or on the command line",
                )
            })?;
            cfg.validate()?;
            let results = sweep(&cfg)?;
            print_table(&results);
            let stem = format!("sweep_{axis}");
            let path = write_results(&results, format_of(run.format), &run.out, &stem)?;
            eprintln!("wrote {}", path.display());
            let svg = run.out.join(format!("{stem}.svg"));
            report::emit_plot(&results, axis, &svg)?;
            eprintln!("wrote {}", svg.display());
        }
        Command::Plot { input, axis, out } => {
            let results = report::read_results_json(&std::fs::read_to_string(&input)?)?;
            let axis = match axis {
                Some(a) => a.into(),
                None => results
                    .iter()
                    .flat_map(|r| &r.rows)
                    .find_map(|row| row.sweep_axis)
                    .ok_or_else(|| {
                        Error::MissingSweepData(format!("{} holds no sweep", input.display()))
                    })?,
            };
            std::fs::create_dir_all(&out)?;
            let svg = out.join(format!("sweep_{axis}.svg"));
            report::emit_plot(&results, axis, &svg)?;
            eprintln!("wrote {}", svg.display());
        }
        Command::Validate { config, seed } => {
            let cfg = load(config.as_deref(), seed)?;
            cfg.validate()?;
            let configs = match &cfg.sweep {
                Some(s) => s
                    .values
                    .iter()
                    .map(|&v| cfg.at_sweep_value(s.axis, v))
                    .collect(),
                None => vec![cfg.clone()],
            };
            for c in &configs {
                let (scenario, topology) = build_scenario(c)?;
                for &t in &c.techniques {
                    check_preconditions(t, &topology)?;
                }
                println!(
                    "ok: {} victims, {} rescuers, seed {}, techniques {}",
                    scenario.n_victims(),
                    scenario.n_rescuers(),
                    c.scenario.seed,
                    c.techniques
                        .iter()
                        .map(|t| t.name())
                        .collect::<Vec<_>>()
                        .join(",")
                );
            }
            println!("config hash {}", cfg.hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
