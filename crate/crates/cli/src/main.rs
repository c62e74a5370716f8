use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use distobs::pipeline::{self, RunOptions, SweepPoint};

#[derive(Parser)]
#[command(name = "distobs", version, about = "Distributed observers over switching networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Replaces every seed in the scenario.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Integration step; derived from the mode norms and dwell time if absent.
    #[arg(long, value_name = "H")]
    step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Design the observer and print the gain certificate.
    Design {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Full run: design, certify, simulate, estimate rates and report.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Validate the scenario and structural invariants without integrating.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Fitted decay rate against coupling gain.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "G", value_delimiter = ',', num_args = 1.., required = true)]
        g_values: Vec<f64>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
}

fn options(common: &Common, integrate: bool) -> RunOptions {
    RunOptions {
        seed: common.seed,
        step: common.step,
        g: None,
        integrate,
    }
}

fn load(common: &Common) -> Result<distobs::Scenario> {
    distobs::load_scenario(&common.scenario).with_context(|| format!("loading scenario {}", common.scenario.display()))
}

fn exit_for(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn write_report(out: &pipeline::RunOutput, dir: Option<&Path>) -> Result<()> {
    if let Some(dir) = dir {
        pipeline::write_outputs(out, dir).with_context(|| format!("writing outputs to {}", dir.display()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Design { common, out } => {
            let scenario = load(&common)?;
            let run = pipeline::run(&scenario, &options(&common, false))?;
            println!("{}", serde_json::to_string_pretty(&run.report.certificate)?);
            println!("g_min = {}  g = {}", run.report.g_min, run.report.g);
            write_report(&run, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { common, out } => {
            let scenario = load(&common)?;
            let run = pipeline::run(&scenario, &options(&common, false))?;
            for f in &run.report.failures {
                println!("FAIL {}: measured {} threshold {}", f.check, f.measured, f.threshold);
            }
            println!("{}", run.report.summary_line());
            write_report(&run, out.as_deref())?;
            Ok(exit_for(run.report.passed()))
        }
        Command::Simulate { common, out } => {
            let scenario = load(&common)?;
            let run = pipeline::run(&scenario, &options(&common, true))?;
            write_report(&run, Some(&out))?;
            for f in &run.report.failures {
                println!("FAIL {}: measured {} threshold {}", f.check, f.measured, f.threshold);
            }
            println!("{}", run.report.summary_line());
            Ok(exit_for(run.report.passed()))
        }
        Command::Sweep { common, g_values, out } => {
            let scenario = load(&common)?;
            let results = pipeline::sweep(&scenario, &options(&common, true), &g_values);
            let mut points = Vec::new();
            let mut all_pass = true;
            // runs finish in any order; outputs are written here, one at a time
            for (k, (g, result)) in g_values.iter().zip(results).enumerate() {
                let run = result.with_context(|| format!("sweep point g={g}"))?;
                write_report(&run, Some(&out.join(format!("g_{k:03}"))))?;
                println!("{}", run.report.summary_line());
                all_pass &= run.report.passed();
                points.push(SweepPoint::from_report(&run.report));
            }
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("sweep.json"), serde_json::to_string_pretty(&points)? + "\n")?;
            Ok(exit_for(all_pass))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
