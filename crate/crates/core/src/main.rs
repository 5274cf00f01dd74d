use std::io::{BufWriter, ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cnas::curriculum::Method;
use cnas::harness::{self, ExperimentSpec, Statistics};
use cnas::{Error, PlantedLandscape, PlantedParams, SearchSpaceStage, SpaceShape, TabularOracle};

#[derive(Parser)]
#[command(
    name = "cnas",
    version,
    about = "Curriculum neural architecture search on cell spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the number of cells in a search space.
    Size {
        #[command(flatten)]
        space: SpaceArgs,
    },
    /// List the cells of a small search space, one encoding per line.
    Enumerate {
        #[command(flatten)]
        space: SpaceArgs,
        /// Refuse spaces with more cells than this.
        #[arg(long, default_value_t = 1_000_000)]
        limit: u64,
    },
    /// Generate reward-oracle files.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// Run the first method of an experiment spec.
    Search {
        #[arg(long)]
        spec: PathBuf,
        /// Write outputs here instead of the spec's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every method of an experiment spec and compare them.
    Compare {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute statistics from an output directory's stage summary.
    Summarize {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(clap::Args)]
struct SpaceArgs {
    /// Total nodes per cell, two inputs included.
    #[arg(long = "B")]
    total_nodes: usize,
    /// Number of candidate operations.
    #[arg(long = "K")]
    num_ops: usize,
    /// Number of cell groups.
    #[arg(long = "G", default_value_t = 1)]
    cell_groups: usize,
    /// Count only the first `active` operations (defaults to all K).
    #[arg(long)]
    active: Option<usize>,
}

impl SpaceArgs {
    fn shape(&self) -> cnas::Result<SpaceShape> {
        SpaceShape::with_catalog(self.total_nodes, self.cell_groups, self.num_ops)
    }

    fn stage(&self) -> cnas::Result<SearchSpaceStage> {
        let shape = self.shape()?;
        let active = self.active.unwrap_or(shape.num_ops());
        SearchSpaceStage::new(shape, active)
    }
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Write a seeded oracle for the catalog space of the given shape.
    Gen {
        #[arg(long, value_enum)]
        kind: OracleKind,
        #[arg(long = "B")]
        total_nodes: usize,
        #[arg(long = "K")]
        num_ops: usize,
        #[arg(long = "G", default_value_t = 1)]
        cell_groups: usize,
        #[arg(long)]
        seed: u64,
        /// Evaluation noise of planted oracles.
        #[arg(long)]
        sigma: Option<f64>,
        /// Largest space a table may enumerate.
        #[arg(long, default_value_t = 1_000_000)]
        limit: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    /// Planted-optimum landscape (JSON).
    Planted,
    /// Reward table of every cell, tabulated from a planted landscape.
    Tabular,
}

/// Errors caused by the invocation rather than by the run.
fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidSpace(_)
            | Error::SpaceTooLarge { .. }
            | Error::Config(_)
            | Error::Schema { .. }
            | Error::Parse(_)
            | Error::Io { .. }
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> cnas::Result<()> {
    match cli.command {
        Command::Size { space } => println!("{}", space.stage()?.space_size()),
        Command::Enumerate { space, limit } => {
            let mut out = BufWriter::new(std::io::stdout().lock());
            for arch in space.stage()?.enumerate(limit)? {
                if let Err(e) = writeln!(out, "{arch}") {
                    // a closed pipe (e.g. `| head`) ends the listing quietly
                    return if e.kind() == ErrorKind::BrokenPipe {
                        Ok(())
                    } else {
                        Err(Error::io("<stdout>", e))
                    };
                }
            }
            if let Err(e) = out.flush() {
                if e.kind() != ErrorKind::BrokenPipe {
                    return Err(Error::io("<stdout>", e));
                }
            }
        }
        Command::Oracle {
            command:
                OracleCommand::Gen {
                    kind,
                    total_nodes,
                    num_ops,
                    cell_groups,
                    seed,
                    sigma,
                    limit,
                    out,
                },
        } => {
            let shape = SpaceShape::with_catalog(total_nodes, cell_groups, num_ops)?;
            let mut params = PlantedParams::default();
            if let Some(sigma) = sigma {
                params.noise_sigma = sigma;
            }
            let landscape = PlantedLandscape::random(shape.clone(), seed, params)?;
            match kind {
                OracleKind::Planted => {
                    std::fs::write(&out, landscape.to_json()).map_err(|e| Error::io(&out, e))?;
                }
                OracleKind::Tabular => {
                    let source = format!("planted landscape seed {seed}");
                    let table = TabularOracle::tabulate(&SearchSpaceStage::full(shape), limit, &source, |a| {
                        landscape.noiseless(a)
                    })?;
                    table.save(&out)?;
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Search { spec, out } => {
            let mut spec = harness::load_spec(&spec)?;
            let first = spec.methods[0];
            spec = spec.with_methods(&[first]);
            run_spec(spec, out)?;
        }
        Command::Compare { spec, out } => {
            let spec = harness::load_spec(&spec)?;
            run_spec(spec, out)?;
        }
        Command::Summarize { dir } => print_statistics(&harness::summarize_dir(&dir)?),
    }
    Ok(())
}

fn run_spec(mut spec: ExperimentSpec, out: Option<PathBuf>) -> cnas::Result<()> {
    if let Some(out) = out {
        spec.output_dir = out;
    }
    let outcome = harness::run_experiment(&spec)?;
    print_statistics(&outcome.statistics);
    println!("wrote {} files to {}", outcome.files.len(), spec.output_dir.display());
    Ok(())
}

fn print_statistics(stats: &Statistics) {
    println!(
        "{:<8} {:>5} {:>4} {:>8} {:>8} {:>8} {:>8}",
        "method", "stage", "n", "mean", "std", "min", "max"
    );
    for s in &stats.stages {
        println!(
            "{:<8} {:>5} {:>4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            s.method, s.stage, s.n, s.mean, s.std, s.min, s.max
        );
    }
    let methods: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| stats.final_stage(*m).is_some())
        .collect();
    for &a in &methods {
        for &b in &methods {
            if let Some(p) = stats.pairwise(a, b) {
                println!(
                    "{a} >= {b} on {:.0}% of {} trials ({:.0}% strictly)",
                    100.0 * p.fraction_at_least,
                    p.trials,
                    100.0 * p.fraction_strictly
                );
            }
        }
    }
    for o in &stats.orders {
        println!(
            "{} order sensitivity: cv {:.4} over {} orders",
            o.method,
            o.coefficient_of_variation,
            o.order_means.len()
        );
    }
}
