use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bench;
mod commands;
mod verify;

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "eann", version, about = "Approximate nearest neighbor index for scaling distances and Bregman divergences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a point file and a distance config.
    Build {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also build every leaf attachment before saving.
        #[arg(long)]
        eager: bool,
    },
    /// Answer queries, one output line per query point.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        points: PathBuf,
        /// Compare every answer against brute force.
        #[arg(long)]
        check: bool,
    },
    /// Run a sweep of random instances.
    Bench {
        config: PathBuf,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Measure admissibility constants of a distance.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// `box:LOW:HIGH` or `ball:CENTER:RADIUS`, coordinates comma-separated.
        #[arg(long)]
        region: Option<String>,
        /// Site location, comma-separated. Defaults to the region center.
        #[arg(long)]
        site: Option<String>,
        /// Used when neither region nor site fixes the dimension.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
}

fn threads_from_env() -> Option<usize> {
    std::env::var("EANN_THREADS").ok()?.trim().parse().ok()
}

fn main() -> ExitCode {
    eann_core::par::init_threads(threads_from_env());
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Build {
            points,
            config,
            eps,
            out,
            eager,
        } => commands::build(&points, &config, eps, &out, eager),
        Command::Query { index, points, check } => commands::query(&index, &points, check),
        Command::Bench { config, json_out } => bench::run(&config, json_out.as_deref()),
        Command::Verify {
            config,
            region,
            site,
            dim,
            samples,
            seed,
            json_out,
        } => verify::run(&verify::VerifyArgs {
            config,
            region,
            site,
            dim,
            samples,
            seed,
            json_out,
        }),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
