use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bbm_core::csbp::{BranchingMechanism, Integrator};
use bbm_core::heatkernel::{
    moving_density_q, oracle_er, oracle_ez, strip_kernel, strip_kernel_fourier, strip_kernel_images, tau,
    BoundaryQuery, DEFAULT_KAPPA, DEFAULT_TOL, DEFAULT_Y_CONSTANT,
};
use bbm_core::predictor::predict_survival_time;
use bbm_core::simulator::map_runs;
use bbm_core::{OffspringLaw, ParticleConfiguration, SimConfig};
use bbm_harness::experiments::run_by_id;
use bbm_harness::{config, json, report};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "bbm", about = "Simulate and check branching Brownian motion near criticality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories described by a JSON file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Write JSON lines here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predicted remaining survival time of a configuration.
    Predict {
        /// Comma-separated particle positions.
        #[arg(long, value_delimiter = ',', conflicts_with = "config")]
        positions: Option<Vec<f64>>,
        /// JSON file holding a particle configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Heat-kernel quantities.
    Kernel {
        #[command(subcommand)]
        what: KernelCommand,
    },
    /// Branching-process Laplace exponent.
    Csbp {
        #[command(subcommand)]
        what: CsbpCommand,
    },
    /// Run an experiment and write its report.
    Experiment {
        id: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Directory for the report, timing and sample files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine reports.
    Report {
        #[command(subcommand)]
        what: ReportCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    Fourier,
    Images,
}

#[derive(Subcommand)]
enum KernelCommand {
    /// Dirichlet heat kernel on the unit interval.
    Eval {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Method::Fourier)]
        method: Method,
    },
    /// Intrinsic time between `r` and `s` along the shifted curve.
    Tau {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        s: f64,
    },
    /// Density of a particle killed at the origin and at the curve.
    Density {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
    },
    /// Expected truncated weight with its band.
    OracleEz {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = DEFAULT_KAPPA)]
        kappa: f64,
    },
    /// Expected barrier count with its band.
    OracleEr {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = DEFAULT_KAPPA)]
        kappa: f64,
        #[arg(long, default_value_t = DEFAULT_Y_CONSTANT)]
        y_constant: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Subcommand)]
enum CsbpCommand {
    /// `u_t(lambda)` from the closed form, or from the ODE when `--ode-steps` is given.
    Eval {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long)]
        ode_steps: Option<usize>,
        #[arg(long, value_enum, default_value_t = IntegratorArg::Rk4)]
        integrator: IntegratorArg,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    Merge {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateFile {
    #[allow(dead_code)]
    schema_version: u32,
    initial: ParticleConfiguration,
    sim: SimConfig,
    #[serde(default = "OffspringLaw::binary")]
    offspring: OffspringLaw,
}

fn digits(v: f64) -> String {
    format!("{v:.14e}")
}

/// Exit code 0 when everything passed, 1 when a check failed.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { config: path, runs, workers, out } => {
            let file: SimulateFile = config::load(&path)?;
            let lines = map_runs(&file.initial, &file.sim, &file.offspring, 0..runs, workers, |_, r| {
                r.map_err(anyhow::Error::from).and_then(|run| json::to_line(&run))
            });
            let mut text = String::new();
            for line in lines {
                text.push_str(&line?);
                text.push('\n');
            }
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Predict { positions, config: path } => {
            let cfg = match (positions, path) {
                (Some(xs), None) => ParticleConfiguration::new(0.0, xs)?,
                (None, Some(p)) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text)?
                }
                _ => bail!("give either --positions or --config"),
            };
            print!("{}", json::to_string(&predict_survival_time(&cfg)?)?);
            Ok(true)
        }
        Command::Kernel { what } => {
            match what {
                KernelCommand::Eval { s, x, y, tol, method } => {
                    let v = match method {
                        Method::Auto => strip_kernel(s, x, y, tol)?,
                        Method::Fourier => strip_kernel_fourier(s, x, y, tol)?,
                        Method::Images => strip_kernel_images(s, x, y, tol)?,
                    };
                    println!("{}", digits(v));
                }
                KernelCommand::Tau { t, offset, r, s } => println!("{}", digits(tau(t, offset, r, s)?)),
                KernelCommand::Density { t, offset, r, s, x, y } => {
                    println!("{}", digits(moving_density_q(&BoundaryQuery { t, offset, r, s, x, y })?))
                }
                KernelCommand::OracleEz { t, offset, r, s, x, kappa } => {
                    print!("{}", json::to_string(&oracle_ez(t, offset, r, s, x, kappa)?)?)
                }
                KernelCommand::OracleEr { t, offset, r, s, x, kappa, y_constant } => {
                    print!("{}", json::to_string(&oracle_er(t, offset, r, s, x, kappa, y_constant)?)?)
                }
            }
            Ok(true)
        }
        Command::Csbp { what: CsbpCommand::Eval { a, b, t, lambda, ode_steps, integrator } } => {
            let m = BranchingMechanism::new(a, b)?;
            let v = match ode_steps {
                None => m.laplace_exponent(t, lambda)?,
                Some(n) => {
                    let integ = match integrator {
                        IntegratorArg::Euler => Integrator::Euler,
                        IntegratorArg::Rk4 => Integrator::Rk4,
                    };
                    m.laplace_exponent_ode(t, lambda, n, integ)?
                }
            };
            println!("{}", digits(v));
            Ok(true)
        }
        Command::Experiment { id, config: path, seed, workers, out } => {
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
            }
            let started = Instant::now();
            let rep = run_by_id(&id, &path, seed, workers, out.as_deref())?;
            let elapsed = started.elapsed().as_secs_f64();
            for line in rep.summary_lines() {
                eprintln!("{line}");
            }
            eprintln!("{} finished in {elapsed:.1} s", rep.experiment);
            match &out {
                Some(dir) => {
                    json::write_file(&dir.join(format!("{}.json", rep.experiment)), &rep)?;
                    // Timing lives beside the report so the report itself stays reproducible.
                    json::write_file(
                        &dir.join(format!("{}.timing.json", rep.experiment)),
                        &serde_json::json!({ "experiment": rep.experiment, "wall_clock_seconds": elapsed, "workers": workers }),
                    )?;
                }
                None => print!("{}", json::to_string(&rep)?),
            }
            Ok(rep.pass)
        }
        Command::Report { what: ReportCommand::Merge { reports, out } } => {
            let mut all = Vec::new();
            for p in &reports {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                all.push(serde_json::from_str::<report::Report>(&text).with_context(|| format!("parsing {}", p.display()))?);
            }
            let merged = report::merge(all)?;
            match out {
                Some(p) => json::write_file(&p, &merged)?,
                None => print!("{}", json::to_string(&merged)?),
            }
            Ok(merged.pass)
        }
    }
}

fn exit_code(outcome: &Result<bool>) -> u8 {
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(_) => 2,
    }
}

fn main() -> ExitCode {
    let outcome = execute(Cli::parse());
    if let Err(e) = &outcome {
        eprintln!("error: {e:#}");
    }
    ExitCode::from(exit_code(&outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> u8 {
        let cli = Cli::try_parse_from(std::iter::once("bbm").chain(args.iter().copied())).expect("parses");
        exit_code(&execute(cli))
    }

    #[test]
    fn unknown_subcommand_is_rejected() {
        assert!(Cli::try_parse_from(["bbm", "no-such-command"]).is_err());
        assert!(Cli::try_parse_from(["bbm", "predict", "--positions", "1", "--config", "x.json"]).is_err());
    }

    #[test]
    fn numeric_commands_succeed() {
        assert_eq!(run(&["csbp", "eval", "--a", "-0.5", "--b", "1", "--t", "1", "--lambda", "2"]), 0);
        assert_eq!(run(&["kernel", "eval", "--s", "0.3", "--x", "0.25", "--y", "0.25", "--method", "images"]), 0);
        assert_eq!(run(&["kernel", "tau", "--t", "1000", "--r", "0", "--s", "500"]), 0);
    }

    #[test]
    fn invalid_inputs_map_to_exit_code_two() {
        assert_eq!(run(&["csbp", "eval", "--a", "0", "--b", "-1", "--t", "1", "--lambda", "2"]), 2);
        assert_eq!(run(&["experiment", "E7", "--config", "/nonexistent/e7.json"]), 2);
        assert_eq!(run(&["predict"]), 2);
    }

    #[test]
    fn experiment_ids_resolve_against_shipped_configs() {
        let dir = config::default_dir();
        assert_eq!(run(&["experiment", "E99", "--config", dir.join("e7.json").to_str().unwrap()]), 2);
        assert_eq!(exit_code(&execute(Cli::try_parse_from(["bbm", "report", "merge", "/nonexistent.json"]).unwrap())), 2);
    }
}
