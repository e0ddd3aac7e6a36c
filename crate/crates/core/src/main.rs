use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use donor_qubit::config::{load_params, Dimension, Quantity};
use donor_qubit::experiments::{self, h_prime_at, hprime_table, ExperimentKind, Manifest};
use donor_qubit::{Error, SystemParams};

/// Thread-count override for the parallel runner.
const THREADS_ENV: &str = "DONOR_QUBIT_THREADS";

#[derive(Parser)]
#[command(name = "donor-qubit", version, about = "Donor nuclear-spin qubit gate simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment manifest and write its columnar output.
    Run {
        manifest: PathBuf,
        /// Write to this path instead of the manifest's `output`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a manifest without running it.
    Validate { manifest: PathBuf },
    /// Print the effective 8x8 Hamiltonian at a control point.
    DumpHprime {
        /// TOML parameter file (top-level keys or a [params] table).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Static field offset, e.g. "1e4 V/m" (default: the idle offset).
        #[arg(long)]
        de: Option<String>,
        /// AC electric amplitude, e.g. "30 V/m".
        #[arg(long, default_value = "0 V/m")]
        ea: String,
        /// AC magnetic amplitude, e.g. "0.1 mT".
        #[arg(long, default_value = "0 T")]
        ba: String,
    },
    /// List the experiment kinds a manifest may request.
    ListExperiments,
}

/// Exit status by error class: 2 for bad input, 3 for a failed
/// simulation, 4 for I/O.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter { .. }
        | Error::Unit { .. }
        | Error::Manifest { .. }
        | Error::Parse(_)
        | Error::UnknownLabel(_) => 2,
        Error::Io(_) => 4,
        _ => 3,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter {
            field: THREADS_ENV.into(),
            reason: format!("`{raw}` is not a positive integer"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter {
            field: THREADS_ENV.into(),
            reason: e.to_string(),
        })
}

fn quantity(field: &str, text: &str, dim: Dimension) -> Result<f64, Error> {
    Quantity::Text(text.to_string()).resolve(field, dim)
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { manifest, output } => {
            configure_threads()?;
            let mut m = Manifest::load(&manifest)?;
            if let Some(o) = output {
                m.output = o;
            }
            log::info!("running {} -> {}", m.kind, m.output.display());
            let out = experiments::run(&m)?;
            println!("{}: {} rows -> {}", m.kind, out.table.rows.len(), m.output.display());
            for (k, v) in &out.table.summary {
                println!("  {k} = {v}");
            }
        }
        Command::Validate { manifest } => {
            let m = Manifest::load(&manifest)?;
            let plan = m.validate()?;
            println!("ok: {} ({})", plan.kind, manifest.display());
            for (k, v) in plan.provenance() {
                println!("  {k} = {v}");
            }
        }
        Command::DumpHprime { params, de, ea, ba } => {
            let p = match params {
                Some(path) => load_params(&path)?,
                None => SystemParams::default(),
            };
            let de = match de {
                Some(s) => quantity("de", &s, Dimension::ElectricField)?,
                None => p.de_idle,
            };
            let ea = quantity("ea", &ea, Dimension::ElectricField)?;
            let ba = quantity("ba", &ba, Dimension::MagneticField)?;
            let table = hprime_table(&h_prime_at(&p, de, ea, ba)?);
            for (k, v) in &table.summary {
                println!("# {k} = {v}");
            }
            print!("{}", table.data_section());
        }
        Command::ListExperiments => {
            for k in ExperimentKind::ALL {
                println!("{:<18} {}", k.name(), k.description());
            }
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
