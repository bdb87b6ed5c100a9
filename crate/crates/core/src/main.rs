use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subrad::runner::{self, ExperimentConfig};
use subrad::spectrum::subradiant_lifetime;
use subrad::Error;

#[derive(Parser)]
#[command(version, about = "Collective spontaneous emission of two-level atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one realization and write its outputs.
    Run(ConfigArgs),
    /// Run every seed of a cloud configuration and aggregate.
    Ensemble(ConfigArgs),
    /// Sector spectra and subradiant lifetimes only.
    Spectrum(ConfigArgs),
    /// Parse the configuration and print it with all defaults filled in.
    ValidateConfig(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; defaults are used when omitted.
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set geometry.n_atoms=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> subrad::Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(out) = &self.output {
            overrides.push(format!("output_dir={:?}", out.display().to_string()));
        }
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &overrides),
            None => ExperimentConfig::from_toml_str("", &overrides),
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) | Error::Domain(_) | Error::Sampling(_) => 2,
        e if e.is_numerical() => 3,
        _ => 4,
    }
}

fn execute(cli: Cli) -> subrad::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = args.load()?;
            for run in runner::execute_run(&config)? {
                println!(
                    "{} ({}): {} outputs, {:.2} s",
                    run.atoms.label(),
                    run.kernel,
                    run.series.len(),
                    run.wall_time_secs
                );
            }
            println!("wrote {}", config.output_dir.display());
        }
        Command::Ensemble(args) => {
            let config = args.load()?;
            for out in runner::execute_ensemble(&config)? {
                let ok = out.successes().count();
                println!("{}: {ok}/{} realizations succeeded", out.kernel, out.runs.len());
            }
            println!("wrote {}", config.output_dir.display());
        }
        Command::Spectrum(args) => {
            let config = args.load()?;
            for (kernel, spectra) in runner::execute_spectrum(&config)? {
                for s in &spectra {
                    println!("{kernel} n={} tau_sub={}", s.n_excitations, subradiant_lifetime(s)?);
                }
            }
        }
        Command::ValidateConfig(args) => {
            let config = args.load()?;
            print!("{}", config.to_toml_string()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
