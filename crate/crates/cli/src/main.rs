use clap::{Parser, Subcommand};
use fwi_core::driver::{compare, invert, synthesize, verify, Check, InversionConfig};
use fwi_core::updaters::Method;
use fwi_core::FwiError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VERIFICATION: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Frequency-domain 2D acoustic waveform inversion.
#[derive(Debug, Parser)]
#[command(name = "fwi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate observed data from the true model of a config.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an inversion and write curve.csv, final_model.txt,
    /// diagnostics.jsonl and summary.json into the output directory.
    Invert {
        #[arg(long)]
        config: PathBuf,
        /// One of psd, gn, fn, agn, agn-seq, wri; overrides the config.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in numerical check and print a JSON report.
    Verify {
        /// One of gradient, hessian, identity, equivalence, limits.
        #[arg(long)]
        check: String,
    },
    /// Run several configs on the same data and tabulate their misfits.
    Compare {
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &FwiError) -> u8 {
    match e {
        FwiError::Numerical(_) => EXIT_NUMERICAL,
        FwiError::Config(_) | FwiError::Domain(_) | FwiError::SizeGuard { .. } | FwiError::Parse { .. } | FwiError::Io { .. } => EXIT_CONFIG,
    }
}

fn load(path: &Path) -> Result<InversionConfig, FwiError> {
    InversionConfig::load(path)
}

fn run(cli: Cli) -> Result<u8, FwiError> {
    match cli.command {
        Command::Synth { config } => {
            for f in synthesize(&load(&config)?)? {
                println!("{}", f.display());
            }
        }
        Command::Invert { config, method, out } => {
            let mut c = load(&config)?;
            if let Some(m) = method {
                c.method = m.parse::<Method>()?;
            }
            let r = invert(c, &out)?;
            let last = r.records.last().expect("initial record");
            println!(
                "{}: {} updates, final misfit {:e}, written to {}",
                r.method,
                r.records.len() - 1,
                last.misfit,
                out.display()
            );
        }
        Command::Verify { check } => {
            let report = verify(check.parse::<Check>()?)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| FwiError::Numerical(e.to_string()))?;
            println!("{text}");
            if !report.passed {
                return Ok(EXIT_VERIFICATION);
            }
        }
        Command::Compare { configs, out } => {
            let configs = configs.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
            let r = compare(configs, &out)?;
            println!("{}\n{}", r.csv.display(), r.script.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
