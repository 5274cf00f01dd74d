//! Multi-trial experiments: run a spec's methods over its seeds and order
//! variants in parallel, then write traces, the stage summary, statistics and
//! a plot.

mod plot;
mod spec;
mod stats;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::curriculum::{run_method, search_rng, write_summary, Method, SearchTrace, SummaryRecord};
use crate::error::{Error, Result};

pub use plot::render_svg;
pub use spec::{load_spec, parse_spec, ExperimentSpec, OracleSpec, SPEC_VERSION};
pub use stats::{summarize, MethodStageStats, OrderSensitivity, PairwiseWin, Statistics};

pub const SUMMARY_FILE: &str = "stage_summary.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const PLOT_FILE: &str = "rewards.svg";

/// One (order variant, method, seed) cell of an experiment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    /// `s<seed>`, prefixed with `o<j>-` when the spec has several order
    /// variants.
    pub id: String,
    pub order_index: usize,
    pub method: Method,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Trials in output order: order variant, then method, then seed.
    pub fn trials(&self) -> Vec<Trial> {
        let mut out = Vec::new();
        for j in 0..self.orders.len() {
            for &method in &self.methods {
                for &seed in &self.seeds {
                    let id = if self.orders.len() > 1 {
                        format!("o{j}-s{seed}")
                    } else {
                        format!("s{seed}")
                    };
                    out.push(Trial {
                        id,
                        order_index: j,
                        method,
                        seed,
                    });
                }
            }
        }
        out
    }

    /// Runs a single trial in isolation.
    pub fn run_trial(&self, trial: &Trial) -> Result<SearchTrace> {
        let mut config = self.curriculum.clone();
        config.operation_order = self.orders[trial.order_index].clone();
        config.seed = trial.seed;
        let mut oracle = self.oracle.build(&config.shape, trial.seed)?;
        run_method(trial.method, &config, &mut oracle, &mut search_rng(trial.seed))
    }

    /// The same spec restricted to `methods`.
    pub fn with_methods(&self, methods: &[Method]) -> Self {
        Self {
            methods: methods.to_vec(),
            ..self.clone()
        }
    }
}

/// What an experiment produced.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub trials: Vec<(Trial, SearchTrace)>,
    pub records: Vec<SummaryRecord>,
    pub statistics: Statistics,
    pub files: Vec<PathBuf>,
}

/// Trace file name of one trial.
pub fn trace_file_name(method: Method, trial_id: &str) -> String {
    format!("trace_{method}_{trial_id}.csv")
}

/// Runs every trial of `spec` on at most `spec.parallelism` threads and
/// writes the outputs to `spec.output_dir`.
///
/// Trials are independent: a failing trial does not stop the others, whose
/// outputs are still written. The first failure is then returned, tagged with
/// its trial and method.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let trials = spec.trials();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    let results: Vec<Result<SearchTrace>> = pool.install(|| trials.par_iter().map(|t| spec.run_trial(t)).collect());

    fs::create_dir_all(&spec.output_dir).map_err(|e| Error::io(&spec.output_dir, e))?;
    let mut done = Vec::new();
    let mut first_error = None;
    let mut files = Vec::new();
    for (trial, result) in trials.into_iter().zip(results) {
        match result {
            Ok(trace) => {
                let path = spec.output_dir.join(trace_file_name(trial.method, &trial.id));
                trace.write_csv(&trial.id, BufWriter::new(create(&path)?))?;
                files.push(path);
                done.push((trial, trace));
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(Error::Trial {
                        trial: trial.id.clone(),
                        method: trial.method.to_string(),
                        source: Box::new(e),
                    });
                }
            }
        }
    }

    let records: Vec<SummaryRecord> = done
        .iter()
        .flat_map(|(t, trace)| trace.summary_records(&t.id))
        .collect();
    let summary_path = spec.output_dir.join(SUMMARY_FILE);
    write_summary(&records, BufWriter::new(create(&summary_path)?))?;
    files.push(summary_path);

    // partial results still get their statistics and plot
    let statistics = if records.is_empty() {
        None
    } else {
        let statistics = summarize(&records)?;
        let stats_path = spec.output_dir.join(STATS_FILE);
        statistics.write_csv(BufWriter::new(create(&stats_path)?))?;
        files.push(stats_path);

        let plot_path = spec.output_dir.join(PLOT_FILE);
        fs::write(&plot_path, render_svg(&spec.name, &statistics)).map_err(|e| Error::io(&plot_path, e))?;
        files.push(plot_path);
        Some(statistics)
    };

    if let Some(e) = first_error {
        return Err(e);
    }
    let statistics = statistics.expect("a run without failures has records");

    Ok(ExperimentOutcome {
        trials: done,
        records,
        statistics,
        files,
    })
}

/// Reads the stage summary of an output directory and recomputes its
/// statistics.
pub fn summarize_dir(dir: impl AsRef<Path>) -> Result<Statistics> {
    let path = dir.as_ref().join(SUMMARY_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    summarize(&crate::curriculum::read_summary(file)?)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}
