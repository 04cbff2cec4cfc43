use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use parkgrid::cli::{cmd_compare, cmd_gen_fleet, cmd_run, cmd_sweep, SWEEP_FILE};
use parkgrid::dispatch::AccountingMode;
use parkgrid::fleet::{ClockWindow, FleetConfig};
use parkgrid::ingest::{load_scenario, FleetSource, ScenarioConfig};
use parkgrid::model::TimeGrid;
use parkgrid::policy::Method;

#[derive(Parser)]
#[command(name = "parkgrid", version, about = "Microgrid + EV parking station simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one method and write per-slot CSVs plus a JSON summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// proposed, scheduling_only, or uncontrolled (defaults to the scenario's).
        #[arg(long)]
        method: Option<Method>,
    },
    /// Run all three methods on the same fleet and report reductions.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Sample a fleet and write it as CSV.
    GenFleet(GenFleet),
    /// Re-run the comparison for each flag power value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Only flag_power is supported.
        #[arg(long, default_value = "flag_power", value_parser = ["flag_power"])]
        param: String,
        /// Comma-separated values, kept in the given order.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (defaults to the scenario's output_dir, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// A number in kW, or `auto` for the mean net load.
    #[arg(long, allow_hyphen_values = true)]
    flag_power: Option<String>,
    /// offset_and_sell, sell_only, or offset_only.
    #[arg(long)]
    accounting: Option<AccountingMode>,
}

#[derive(Args)]
struct GenFleet {
    /// Take the fleet parameters from a scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// HH:MM-HH:MM
    #[arg(long)]
    arrival_window: Option<ClockWindow>,
    /// HH:MM-HH:MM
    #[arg(long)]
    departure_window: Option<ClockWindow>,
    #[arg(long)]
    mode_split: Option<f64>,
    #[arg(long)]
    soc_mean: Option<f64>,
    #[arg(long)]
    soc_std: Option<f64>,
    #[arg(long, default_value = "fleet.csv")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<(ScenarioConfig, PathBuf)> {
        let mut config = load_scenario(&self.scenario)?;
        if let Some(seed) = self.seed {
            config.set_seed(seed);
        }
        if let Some(flag) = &self.flag_power {
            let value = match flag.trim() {
                "auto" => None,
                v => Some(v.parse::<f64>().with_context(|| format!("--flag-power {v:?}"))?),
            };
            config.set_flag_power(value)?;
        }
        if let Some(mode) = self.accounting {
            config.scenario.options.accounting = mode;
        }
        let out = self
            .out
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((config, out))
    }
}

fn gen_fleet(args: &GenFleet) -> Result<()> {
    let (mut config, grid) = match &args.scenario {
        Some(path) => {
            let scenario = load_scenario(path)?;
            let FleetSource::Generated(config) = &scenario.fleet else {
                bail!("scenario {} lists its fleet from a file", path.display());
            };
            (config.clone(), scenario.scenario.grid)
        }
        None => (FleetConfig::default(), TimeGrid::default()),
    };
    if let Some(n) = args.n {
        config.n_evs = n;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(w) = args.arrival_window {
        config.arrival_window = w;
        config.arrival_mean_h = w.center_hours();
    }
    if let Some(w) = args.departure_window {
        config.departure_window = w;
        config.departure_mean_h = w.center_hours();
    }
    if let Some(v) = args.mode_split {
        config.mode_split = v;
    }
    if let Some(v) = args.soc_mean {
        config.soc_mean = v;
    }
    if let Some(v) = args.soc_std {
        config.soc_std = v;
    }
    let (_, summary) = cmd_gen_fleet(&config, &grid, &args.out)?;
    print!("{summary}");
    println!("wrote {}", args.out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, method } => {
            let (config, out) = common.load()?;
            let report = cmd_run(&config, method.unwrap_or(config.method), &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare { common } => {
            let (config, out) = common.load()?;
            let report = cmd_compare(&config, &out)?;
            print!("{}", report.table());
        }
        Command::GenFleet(args) => gen_fleet(&args)?,
        Command::Sweep { common, param: _, values } => {
            let (config, out) = common.load()?;
            let reports = cmd_sweep(&config, &values, &out)?;
            for r in &reports {
                print!("{}", r.table());
            }
            println!("wrote {}", out.join(SWEEP_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<parkgrid::Error>() {
                Some(parkgrid::Error::Invariant(_)) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
