//! Command-line front end: profile tables, single runs, acceptance suites,
//! rate fits on written bundles, parallel sweeps and multiplier dumps.
//!
//! Exit codes: 0 pass, 1 check failure, 2 configuration error, 3 numerical
//! instability.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bbmb::asymptotics::{fit_rate, ProfileCombo};
use bbmb::harness::{
    bundle_window, claimed_scaling, kernel_table_csv, load_series, run_experiment, sweep,
    write_profile_table, write_suite, Scenario, Suite,
};
use bbmb::{Error, GridSpec, ModelParams, Norm, ProfileSet, Result};

#[derive(Parser)]
#[command(name = "bbmb", version, about = "BBM-Burgers asymptotics laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate chi*, eta*, V* (and Z) and print the scalar constants.
    Profiles {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        mass: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        c_plus: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        c_minus: f64,
        /// Time at which the Z column is evaluated (needs alpha <= 2).
        #[arg(long)]
        z_time: Option<f64>,
        #[arg(long)]
        table_out: Option<PathBuf>,
    },
    /// Run one scenario and write its bundle.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run an acceptance suite.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit a decay exponent to a series of a written bundle.
    Rates {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        combo: ProfileCombo,
        #[arg(long)]
        norm: Norm,
        #[arg(long, default_value_t = 0)]
        l: u32,
        #[arg(long)]
        t_min: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        /// Divide out one power of log(1+t); defaults to the claimed form.
        #[arg(long)]
        log_power: Option<u32>,
    },
    /// Run many scenarios in parallel.
    Sweep {
        #[arg(long)]
        configs: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Dump the multiplier of the linear semigroup on a grid.
    KernelTable {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        t: f64,
        #[arg(long = "L", default_value_t = 400.0)]
        half_width: f64,
        #[arg(long = "N", default_value_t = 1024)]
        n_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn status(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Profiles {
            beta,
            gamma,
            mass,
            alpha,
            c_plus,
            c_minus,
            z_time,
            table_out,
        } => {
            let p = ModelParams::new(beta, gamma, alpha, mass)?;
            let ps = ProfileSet::with_tails(p, c_plus, c_minus)?;
            println!("{}", serde_json::to_string_pretty(&ps)?);
            if let Some(path) = table_out {
                let xs: Vec<f64> = (0..=400).map(|k| -20.0 + 0.1 * k as f64).collect();
                write_profile_table(&path, &ps, &xs, z_time)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { config, out } => {
            let s = Scenario::load(&config).map_err(|e| e.at_stage("config"))?;
            let b = run_experiment(&s, &out)?;
            for c in &b.report.checks {
                println!("{:?}\t{}\t{:?}", c.status, c.name, c.value);
            }
            println!("bundle {}", b.dir.display());
            Ok(status(b.report.passed))
        }
        Command::Verify { suite, out } => {
            let (rep, path) = write_suite(suite, &out)?;
            for c in &rep.checks {
                println!("{:?}\t{}\t{:?}\t{}", c.status, c.name, c.value, c.criterion);
            }
            println!("report {}", path.display());
            Ok(status(rep.passed))
        }
        Command::Rates {
            bundle,
            combo,
            norm,
            l,
            t_min,
            t_max,
            log_power,
        } => {
            let es = load_series(&bundle, combo, norm, l)?;
            let recorded = bundle_window(&bundle)?;
            let window = [t_min.unwrap_or(recorded[0]), t_max.unwrap_or(recorded[1])];
            let report: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(bundle.join("report.json"))?)?;
            let alpha = report["scenario"]["params"]["alpha"]
                .as_f64()
                .ok_or_else(|| Error::Config("report lacks alpha".into()))?;
            let lp = log_power.unwrap_or(claimed_scaling(alpha, combo, norm, l).log_power);
            let fit = fit_rate(&es, window, lp)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { configs, jobs, out } => {
            let entries = sweep(&configs, jobs, &out)?;
            let mut code = 0u8;
            for e in &entries {
                match &e.outcome {
                    Ok((dir, passed)) => {
                        println!(
                            "{}\t{}\t{}",
                            if *passed { "PASS" } else { "FAIL" },
                            e.config.display(),
                            dir.display()
                        );
                        if !passed {
                            code = code.max(1);
                        }
                    }
                    Err(err) => {
                        println!("ERROR\t{}\t{err}", e.config.display());
                        code = code.max(err.exit_code() as u8);
                    }
                }
            }
            Ok(ExitCode::from(code))
        }
        Command::KernelTable {
            gamma,
            t,
            half_width,
            n_points,
            out,
        } => {
            let grid = GridSpec::new(half_width, n_points)?;
            let p = ModelParams::new(1.0, gamma, 1.5, 0.0)?;
            let csv = kernel_table_csv(&grid, t, &p)?;
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
