//! `pf`: evaluate workpiece measurements, publish encrypted quality records,
//! anchor them in the token ledger and verify a token's provenance trail.

mod commands;
mod error;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pf",
    version,
    about = "Tamper-evident quality provenance for machined workpieces"
)]
pub struct Cli {
    /// Blob store: a local directory, or an IPFS HTTP API endpoint (http://host:5001).
    #[arg(long, env = "PF_STORE", default_value = "pf-store", global = true)]
    pub store: String,

    /// Symmetric key file (64 hex characters; key id in `<file>.id`).
    #[arg(long, env = "PF_KEY_FILE", global = true)]
    pub key: Option<PathBuf>,

    /// Ledger file (JSON transaction log).
    #[arg(
        long,
        env = "PF_LEDGER_FILE",
        default_value = "pf-ledger.json",
        global = true
    )]
    pub ledger: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a new ledger (deploy the token collection).
    Init {
        #[arg(long)]
        name: String,
        #[arg(long)]
        symbol: String,
    },
    /// Evaluate measurements against a workpiece definition.
    Evaluate {
        workpiece: PathBuf,
        measurements: PathBuf,
        /// Defaults to the definition's product name.
        #[arg(long)]
        workpiece_id: Option<String>,
        /// Write the quality report JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fix the report timestamp (RFC 3339) for reproducible output.
        #[arg(long)]
        created_at: Option<DateTime<Utc>>,
    },
    /// Generate a new symmetric key file.
    Keygen {
        #[arg(long)]
        key_id: String,
        /// Defaults to --key / PF_KEY_FILE.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Publish a quality report and mint a token pointing at it.
    Publish {
        report: PathBuf,
        workpiece: PathBuf,
        #[arg(long)]
        token_id: u64,
        #[arg(long)]
        owner: String,
        /// Defaults to the owner.
        #[arg(long)]
        caller: Option<String>,
        #[command(flatten)]
        step: StepArgs,
    },
    /// Publish a further manufacturing step and append it to a token's history.
    Append {
        report: PathBuf,
        workpiece: PathBuf,
        #[arg(long)]
        token_id: u64,
        #[arg(long)]
        caller: String,
        #[command(flatten)]
        step: StepArgs,
    },
    /// Mint a token for already published metadata.
    Mint {
        #[arg(long)]
        token_id: u64,
        #[arg(long)]
        owner: String,
        #[arg(long)]
        caller: Option<String>,
        /// ipfs://<cid> of the metadata document.
        #[arg(long)]
        metadata: String,
    },
    /// Transfer a token to a new owner.
    Transfer {
        #[arg(long)]
        token_id: u64,
        #[arg(long)]
        caller: String,
        #[arg(long)]
        to: String,
    },
    /// Verify a token's full provenance trail. Exit 0 iff everything verifies.
    Verify {
        #[arg(long)]
        token_id: u64,
        /// Workpiece definition used to recheck verdicts, as `PATH` (all steps)
        /// or `STEP=PATH`. Repeatable.
        #[arg(long = "specs", required = true)]
        specs: Vec<String>,
    },
    /// Show a stored metadata document or envelope header.
    Inspect { uri: String },
    /// Decrypt the quality document behind a metadata or payload URI.
    Decrypt {
        uri: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show a token's owner and URI history.
    Token { token_id: u64 },
}

#[derive(Debug, Args)]
pub struct StepArgs {
    /// Company or station that produced this step.
    #[arg(long)]
    pub producer: String,
    #[arg(long, default_value_t = 1)]
    pub step: u64,
    /// Token display name. Defaults to "Proof of quality <product> product ID <token>".
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub description: Option<String>,
    /// ipfs://<cid> of the display image.
    #[arg(long)]
    pub image: String,
    /// Deterministic nonces for golden-file tests. Debug builds only.
    #[arg(long, hide = true)]
    pub seed_nonce: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(e) => {
            eprintln!("pf: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}
