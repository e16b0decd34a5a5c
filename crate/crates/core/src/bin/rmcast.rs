//! Command-line front end.
//!
//! ```text
//! rmcast solve  --config scenario.toml [--out DIR] [--seed N] [--draws N]
//! rmcast sweep  --config experiment.toml --out DIR [--seed N] [--trials N]
//!               [--draws N] [--parallel N] [--scheme robust|nonrobust|both]
//! rmcast verify --config scenario.toml --beamformer w.json [--draws N] [--seed N]
//! ```
//!
//! Exit status: 0 on success, 2 when a design or trial fails or a verified
//! beamformer misses its targets, 1 on usage or input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use robust_multicast::algorithms::AlgorithmConfig;
use robust_multicast::harness::{self, ExperimentSpec, Scheme};
use robust_multicast::scenario::ScenarioConfig;
use robust_multicast::{Error, Scenario};

#[derive(Parser)]
#[command(name = "rmcast", version, about = "Robust multigroup multicast beamforming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Robust,
    Nonrobust,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Design a beamformer for one scenario and certify it.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Seed of the starting point and the error draws (default: the scenario seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
    },
    /// Run a trial sweep and write rows.csv and plotdata.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        parallel: Option<usize>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Monte-Carlo worst-case report of a stored beamformer.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        beamformer: PathBuf,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Usage(Error),
    Run(Error),
}

fn load_scenario(path: &Path) -> Result<(ScenarioConfig, Scenario), Failure> {
    let cfg = ScenarioConfig::from_path(path).map_err(Failure::Usage)?;
    let scenario = cfg.build(path.parent()).map_err(Failure::Usage)?;
    Ok((cfg, scenario))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Failure::Usage(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn solve(config: &Path, out: &Path, seed: Option<u64>, draws: usize) -> Result<bool, Failure> {
    let (cfg, scenario) = load_scenario(config)?;
    create_dir(out)?;
    let algo = AlgorithmConfig {
        seed: seed.unwrap_or(cfg.seed),
        ..AlgorithmConfig::default()
    };
    let (w, trace, report) = harness::solve_report(&scenario, &algo, draws).map_err(Failure::Run)?;
    let write = |r: robust_multicast::Result<()>| r.map_err(Failure::Usage);
    write(harness::write_beamformer(&w, &out.join("beamformer.json")))?;
    write(harness::write_json(&report, &out.join("report.json")))?;
    write(trace.write_csv_file(&out.join("trace.csv")))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("plain data serializes"));
    Ok(report.certified)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    trials: Option<usize>,
    draws: Option<usize>,
    parallel: Option<usize>,
    scheme: Option<SchemeArg>,
) -> Result<bool, Failure> {
    let mut spec = ExperimentSpec::from_path(config).map_err(Failure::Usage)?;
    spec.seed = seed.unwrap_or(spec.seed);
    spec.trials = trials.unwrap_or(spec.trials);
    spec.draws = draws.unwrap_or(spec.draws);
    spec.parallel = parallel.unwrap_or(spec.parallel);
    if let Some(s) = scheme {
        spec.schemes = match s {
            SchemeArg::Robust => vec![Scheme::RobustMm],
            SchemeArg::Nonrobust => vec![Scheme::NonrobustMm],
            SchemeArg::Both => vec![Scheme::RobustMm, Scheme::NonrobustMm],
        };
    }
    spec.validate().map_err(Failure::Usage)?;
    create_dir(out)?;
    let result = harness::run_experiment(&spec).map_err(Failure::Usage)?;
    harness::emit_csv(&result, &out.join("rows.csv")).map_err(Failure::Usage)?;
    harness::emit_plotdata(&result, &out.join("plotdata.csv")).map_err(Failure::Usage)?;
    for a in result.aggregates() {
        println!(
            "{} {} mean={:.4} stderr={:.4} n={}",
            a.sweep_value,
            a.scheme.as_str(),
            a.mean,
            a.stderr,
            a.n
        );
    }
    let failures = result.failures();
    if failures > 0 {
        eprintln!("{failures} of {} runs failed", result.rows.len());
    }
    Ok(failures == 0)
}

fn verify(config: &Path, beamformer: &Path, draws: usize, seed: Option<u64>) -> Result<bool, Failure> {
    let (cfg, scenario) = load_scenario(config)?;
    let w = harness::read_beamformer(beamformer).map_err(Failure::Usage)?;
    if !w.matches(&scenario) {
        return Err(Failure::Usage(Error::InvalidScenario(format!(
            "{}: beamformer has {} groups of {} antennas, scenario has {} of {}",
            beamformer.display(),
            w.n_groups(),
            w.antennas(),
            scenario.n_groups(),
            scenario.antennas
        ))));
    }
    let (margins, certified, worst_case) =
        harness::certify(&w, &scenario, None, draws, seed.unwrap_or(cfg.seed));
    let report = serde_json::json!({
        "power": w.power(scenario.power_mode),
        "power_mode": scenario.power_mode,
        "margins": margins,
        "certified": certified,
        "worst_case": worst_case,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("plain data serializes"));
    Ok(certified)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match cli.command {
        Command::Solve {
            config,
            out,
            seed,
            draws,
        } => solve(&config, &out, seed, draws),
        Command::Sweep {
            config,
            out,
            seed,
            trials,
            draws,
            parallel,
            scheme,
        } => sweep(&config, &out, seed, trials, draws, parallel, scheme),
        Command::Verify {
            config,
            beamformer,
            draws,
            seed,
        } => verify(&config, &beamformer, draws, seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
