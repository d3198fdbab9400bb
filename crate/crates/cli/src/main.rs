//! `mcam` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcam_core::pipeline::{run, validate_config, Mode, Overrides};
use mcam_core::McamError;

#[derive(Parser, Debug)]
#[command(name = "mcam", version, about = "Design, simulate and reconstruct multi-camera array captures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Regime, overlap, FOV and resolution table for an array.
    Design(Common),
    /// Render one frame per camera.
    Render(Common),
    /// Render, calibrate and composite an overlapping array.
    Stitch(Common),
    /// Depth sweep and height map for a multi-view array.
    Depth(Common),
    /// Scan plan, focus stacks and composite for a tiled array.
    Tiled(Common),
    /// Frame size, frame rate and buffer duration.
    Throughput(Common),
    /// Every stage that applies to the array's regime.
    Pipeline(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named array preset (multi_view, continuous, tiled, quad_board).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scan overlap fraction for tiled runs.
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    binning: Option<usize>,
    /// Usable fraction of bandwidth and buffer.
    #[arg(long)]
    efficiency: Option<f64>,
    /// Worker threads, 0 for one per core.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (Mode, Common) {
        match self {
            Command::Design(c) => (Mode::Design, c),
            Command::Render(c) => (Mode::Render, c),
            Command::Stitch(c) => (Mode::Stitch, c),
            Command::Depth(c) => (Mode::Depth, c),
            Command::Tiled(c) => (Mode::Tiled, c),
            Command::Throughput(c) => (Mode::Throughput, c),
            Command::Pipeline(c) => (Mode::Pipeline, c),
        }
    }
}

fn execute(mode: Mode, args: Common) -> Result<String, McamError> {
    let text = match &args.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| McamError::io(path, e))?),
        None => None,
    };
    let overrides = Overrides {
        mode: Some(mode),
        preset: args.preset,
        output_dir: args.out,
        seed: args.seed,
        overlap: args.overlap,
        binning: args.binning,
        efficiency: args.efficiency,
        threads: args.threads,
    };
    let cfg = validate_config(text.as_deref(), &overrides)?;
    let summary = run(&cfg)?;
    Ok(serde_json::to_string_pretty(&summary)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = cli.command.split();
    match execute(mode, args) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                McamError::Validation(fields) => {
                    eprintln!("error: invalid configuration");
                    for f in fields {
                        eprintln!("  {}: {}", f.field, f.message);
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
