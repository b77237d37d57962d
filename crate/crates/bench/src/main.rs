use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use prefbo::benchmark::{self, TestFunction};
use prefbo::AcquisitionKind;

/// Runs the simulated-preference benchmark and post-processes its traces.
#[derive(Parser)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeats of one strategy on one test function and write the trace CSV.
    Run {
        /// Test function (branin, six-hump-camel, hartmann3, sphere).
        #[arg(long)]
        function: String,
        /// Acquisition strategy: ei, pe or random.
        #[arg(long)]
        strategy: AcquisitionKind,
        /// Oracle tolerance; values closer than this are reported as equivalent.
        #[arg(long)]
        eps: f64,
        /// Proposal iterations after the initial design.
        #[arg(long)]
        iters: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-iteration median and quartiles of one or more trace CSVs.
    Summarize {
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wide per-iteration median/IQR table for plotting. Writes to stdout
    /// unless `--out` is given.
    Plotdata {
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available test functions.
    Functions,
}

fn read_traces(paths: &[PathBuf]) -> Result<Vec<benchmark::TraceRow>> {
    let mut rows = Vec::new();
    for p in paths {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        rows.extend(benchmark::read_trace(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(rows)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            function,
            strategy,
            eps,
            iters,
            repeats,
            seed,
            out,
        } => {
            let f = TestFunction::by_name(&function)?;
            let rows = benchmark::run_benchmark(&f, strategy, eps, iters, repeats, seed)?;
            let mut w = create(&out)?;
            benchmark::write_trace(&rows, &mut w)?;
            w.flush()?;
        }
        Command::Summarize { input, out } => {
            let summary = benchmark::summarize(&read_traces(&input)?)?;
            let mut w = create(&out)?;
            benchmark::write_summary(&summary, &mut w)?;
            w.flush()?;
        }
        Command::Plotdata { input, out } => {
            let summary = benchmark::summarize(&read_traces(&input)?)?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    benchmark::write_plotdata(&summary, &mut w)?;
                    w.flush()?;
                }
                None => benchmark::write_plotdata(&summary, io::stdout().lock())?,
            }
        }
        Command::Functions => {
            for f in benchmark::suite() {
                let min = f.minimum.map_or_else(|| "unknown".to_string(), |m| m.to_string());
                println!("{}\tD={}\tmin={}", f.name, f.dim(), min);
            }
        }
    }
    Ok(())
}
