use std::path::PathBuf;
use std::process::exit;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use squash::cli::{self, EXIT_USAGE};
use squash::detector::Protocol;

#[derive(Parser)]
#[command(
    name = "squash",
    version,
    about = "Decide whether a threshold-detector measurement admits a squashing model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Bb84,
    SixState,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Protocol {
        match p {
            ProtocolArg::Bb84 => Protocol::Bb84,
            ProtocolArg::SixState => Protocol::SixState,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the protocol POVM on one photon-number block and write it out.
    BuildPovm {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        /// Photon number of the block (0 gives the vacuum flag).
        #[arg(long)]
        photons: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decide a single full/target POVM pair read from files.
    Check {
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Write a JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Seed for the statistical spot check on success.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Decide a whole protocol blockwise up to a photon-number cutoff.
    Verify {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long, default_value_t = 8)]
        max_photons: usize,
        /// Write a JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Seed for the statistical-equivalence suite.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Extract a negativity witness from a uniquely determined pair.
    Witness {
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let parsed = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            exit(code as i32);
        }
    };

    let code = match parsed.command {
        Command::BuildPovm {
            protocol,
            photons,
            out,
        } => cli::cmd_build_povm(protocol.into(), photons, &out),
        Command::Check {
            full,
            target,
            report,
            seed,
        } => cli::cmd_check(&full, &target, report.as_deref(), seed),
        Command::Verify {
            protocol,
            max_photons,
            report,
            seed,
        } => cli::cmd_verify(protocol.into(), max_photons, report.as_deref(), seed),
        Command::Witness { full, target, out } => cli::cmd_witness(&full, &target, &out),
    };
    exit(code as i32);
}
