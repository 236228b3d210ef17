//! `vpk`: convert, fuse, mask, round-trip and extract panoramas from the command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use vpk_core::Error;

pub mod commands;
pub mod config;
pub mod selftest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SHAPE: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn threshold(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_THRESHOLD,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Codec { .. } => EXIT_IO,
            Error::Shape(_) | Error::ShapeMismatch(_) | Error::UncoveredDirection { .. } => EXIT_SHAPE,
            Error::Domain(_) | Error::InvalidParameter(_) | Error::Metadata { .. } => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vpk", version, about = "ViewPoint panorama toolkit")]
pub struct Cli {
    /// Worker threads (default: all cores). Output does not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Flat key = value file with defaults for any long flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert between erp, cubemap and viewpoint (image or frame sequence).
    Convert(JobArgs),
    /// Blend the overlaps of a ViewPoint map.
    Fuse(JobArgs),
    /// Project perspective frames onto a ViewPoint map, writing condition and mask.
    Mask(JobArgs),
    /// ERP -> target -> ERP with a PSNR report.
    Roundtrip(JobArgs),
    /// Render perspective views from a panorama.
    Extract(JobArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

/// Options shared by the subcommands; each uses the subset it needs.
#[derive(Debug, Clone, Default, Args)]
pub struct JobArgs {
    /// Input image, cubemap directory or frame-sequence directory.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Source representation (erp, cubemap, viewpoint, perspective); inferred when omitted.
    #[arg(long)]
    pub from: Option<String>,
    /// Target representation.
    #[arg(long)]
    pub to: Option<String>,
    /// ViewPoint quadrant size; the map is 4n × 4n.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub face_side: Option<usize>,
    #[arg(long)]
    pub erp_width: Option<usize>,
    /// Perspective output size.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Camera angles in degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub yaw: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub pitch: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub roll: Option<f64>,
    #[arg(long)]
    pub hfov: Option<f64>,
    #[arg(long)]
    pub vfov: Option<f64>,
    /// Blend overlapping ViewPoint content.
    #[arg(long)]
    pub fuse: bool,
    /// Extract the six 90° cube-face views.
    #[arg(long)]
    pub six: bool,
    #[arg(long)]
    pub psnr_min: Option<f64>,
    /// Write the round-trip report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Frame rate written to new manifests.
    #[arg(long)]
    pub fps: Option<f64>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match commands::execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("vpk: {}", e.message);
            e.code
        }
    }
}
