// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: run one experiment, sweep a parameter, or
//! re-audit a previously written solution file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wattroute::harness::{self, Config};
use wattroute::oracle::OracleLimits;

#[derive(Parser)]
#[command(
    name = "wattroute",
    version,
    about = "Energy-aware function placement and routing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        config: PathBuf,
        /// Output directory for results.csv, summary.csv, state.txt,
        /// solution.txt.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's beam width.
        #[arg(long)]
        psi: Option<usize>,
        /// Also solve exactly and report the power ratio (small instances).
        #[arg(long)]
        oracle: bool,
    },
    /// Re-audit a solution file against its regenerated scenario.
    Validate { solution: PathBuf },
    /// Run one experiment per value of one config key.
    Sweep {
        config: PathBuf,
        /// Parameter sweep, e.g. `psi=1,4,16,64`.
        #[arg(long)]
        param: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn init_workers() {
    #[cfg(feature = "parallel")]
    if let Ok(n) = std::env::var("WATTROUTE_WORKERS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn main() -> ExitCode {
    init_workers();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("wattroute: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            psi,
            oracle,
        } => {
            let mut config = Config::from_file(&config)?;
            if let Some(seed) = seed {
                config.set("seed", seed);
            }
            if let Some(psi) = psi {
                config.set("psi", psi);
            }
            let result = harness::run_experiment(&config, Some(&out))?;
            println!(
                "{}: served {}/{} flows, objective {:.3} W, total {:.3} W, reference {:.3} W, eta {:.6}",
                result.scenario,
                result.served(),
                result.flow_rows.len(),
                result.objective_power,
                result.total_power,
                result.reference_power,
                result.eta
            );
            println!(
                "on: {} nodes, {} links; {} shortest-path runs; {} ms",
                result.nodes_on,
                result.links_on,
                result.mdra_calls,
                result.wall.as_millis()
            );
            if oracle {
                let cmp = harness::compare_with_oracle(&config, &OracleLimits::default())?;
                match (cmp.heuristic_power, cmp.oracle_power, cmp.ratio) {
                    (Some(h), Some(o), Some(r)) => {
                        println!("oracle: heuristic {h:.3} W, optimal {o:.3} W, ratio {r:.4}")
                    }
                    (_, None, _) => println!("oracle: instance infeasible for both solvers"),
                    _ => println!("oracle: heuristic rejected flows; no ratio"),
                }
            }
            if result.violations > 0 {
                eprintln!("wattroute: {} constraint violations", result.violations);
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { solution } => {
            let report = harness::validate_solution_file(&solution)?;
            if report.is_empty() {
                println!("solution is feasible");
                Ok(ExitCode::SUCCESS)
            } else {
                print!("{report}");
                Ok(ExitCode::from(2))
            }
        }
        Command::Sweep { config, param, out } => {
            let config = Config::from_file(&config)?;
            let (key, values) = param
                .split_once('=')
                .ok_or("expected --param key=v1,v2,...")?;
            let values: Vec<String> = values.split(',').map(str::to_string).collect();
            let results = harness::sweep(&config, key, &values, &out)?;
            let mut violations = 0;
            for (value, result) in values.iter().zip(results.iter()) {
                println!(
                    "{key}={value}: served {}/{}, total {:.3} W, eta {:.6}",
                    result.served(),
                    result.flow_rows.len(),
                    result.total_power,
                    result.eta
                );
                violations += result.violations;
            }
            if violations > 0 {
                eprintln!("wattroute: {violations} constraint violations across sweep");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
