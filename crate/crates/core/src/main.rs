use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hompol::cli::{cmd_dip_sweep, cmd_fisher_sweep, cmd_phantom, cmd_report, cmd_scan, resolve, with_threads, MANIFEST_FILE};
use hompol::Result;

/// Hong–Ou–Mandel polarization microscopy simulator.
#[derive(Parser)]
#[command(name = "hompol", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured phantom as a fixture file.
    Phantom(RunArgs),
    /// Dip curves of selected pixels, optionally sampled and fitted.
    DipSweep(RunArgs),
    /// Fisher information, CRB and Monte Carlo variance versus angle.
    FisherSweep(RunArgs),
    /// Raster scan: frames, estimate maps and manifest.
    Scan(RunArgs),
    /// Summarize a finished scan.
    Report {
        /// Scan manifest, or the directory that contains it.
        manifest: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let args = match cli.command {
        Command::Report { manifest } => {
            let path = if manifest.is_dir() { manifest.join(MANIFEST_FILE) } else { manifest };
            print!("{}", cmd_report(&path)?);
            return Ok(());
        }
        Command::Phantom(ref a) | Command::DipSweep(ref a) | Command::FisherSweep(ref a) | Command::Scan(ref a) => a,
    };
    let (cfg, out) = resolve(&args.config, args.seed, args.out.clone())?;
    with_threads(args.threads, || -> Result<()> {
        match &cli.command {
            Command::Phantom(_) => {
                let path = cmd_phantom(&cfg, &out)?;
                println!("wrote {}", path.display());
            }
            Command::DipSweep(_) => {
                for path in cmd_dip_sweep(&cfg, &out)? {
                    println!("wrote {}", path.display());
                }
            }
            Command::FisherSweep(_) => {
                let path = cmd_fisher_sweep(&cfg, &out)?;
                println!("wrote {}", path.display());
            }
            Command::Scan(_) => {
                let manifest = cmd_scan(&cfg, &out)?;
                println!("wrote {}", out.join(MANIFEST_FILE).display());
                for (flag, n) in &manifest.flag_counts {
                    println!("  {flag:<18} {n}");
                }
            }
            Command::Report { .. } => {}
        }
        Ok(())
    })?
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
