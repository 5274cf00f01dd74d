use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cell_space::Architecture;
use crate::error::{Error, Result};
use crate::policy::FactorizedPolicy;

/// Header of per-trial trace files.
pub const TRACE_HEADER: [&str; 10] = [
    "trial",
    "method",
    "stage",
    "iter",
    "kind",
    "encoding",
    "reward",
    "entropy",
    "baseline",
    "best_so_far",
];

/// Header of the combined stage-summary file.
pub const SUMMARY_HEADER: [&str; 5] = ["trial", "method", "stage", "inferred_encoding", "inferred_reward"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cnas,
    Fixed,
    Node,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cnas, Method::Fixed, Method::Node, Method::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cnas => "cnas",
            Method::Fixed => "fixed",
            Method::Node => "node",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IterKind {
    Warmup,
    Controller,
    Weights,
    /// Samples drawn to pick a stage's answer.
    Infer,
}

impl IterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IterKind::Warmup => "warmup",
            IterKind::Controller => "controller",
            IterKind::Weights => "weights",
            IterKind::Infer => "infer",
        }
    }
}

impl FromStr for IterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            IterKind::Warmup,
            IterKind::Controller,
            IterKind::Weights,
            IterKind::Infer,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Parse(format!("unknown iteration kind {s:?}")))
    }
}

/// One sampled architecture. `reward` is present only when the oracle was
/// queried (controller and inference samples).
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub stage: usize,
    pub iter: usize,
    pub kind: IterKind,
    pub encoding: String,
    pub reward: Option<f64>,
    pub entropy: f64,
    pub baseline: Option<f64>,
    pub best_so_far: Option<f64>,
}

/// The answer of one stage checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct StageResult {
    pub stage: usize,
    pub architecture: Architecture,
    /// Validation reward that selected the architecture.
    pub validation_reward: f64,
    /// Noiseless converged quality of the architecture; the reported
    /// `inferred_reward`.
    pub final_score: f64,
    /// Oracle evaluations spent to reach this checkpoint.
    pub evaluations: u64,
    /// Weight-training steps spent to reach this checkpoint.
    pub train_steps: u64,
}

#[derive(Clone, Debug)]
pub struct SearchTrace {
    pub method: Method,
    /// Catalog ids in the order operations were admitted.
    pub operation_order: Vec<String>,
    pub rows: Vec<TraceRow>,
    pub stages: Vec<StageResult>,
    /// The controller at the end of the run (absent for random search).
    pub final_policy: Option<FactorizedPolicy>,
}

impl SearchTrace {
    pub fn final_result(&self) -> &StageResult {
        self.stages.last().expect("a trace has at least one stage")
    }

    /// Writes the per-sample trace, header included.
    pub fn write_csv<W: io::Write>(&self, trial: &str, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                trial.to_string(),
                self.method.to_string(),
                row.stage.to_string(),
                row.iter.to_string(),
                row.kind.as_str().to_string(),
                row.encoding.clone(),
                opt(row.reward),
                row.entropy.to_string(),
                opt(row.baseline),
                opt(row.best_so_far),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn summary_records(&self, trial: &str) -> Vec<SummaryRecord> {
        self.stages
            .iter()
            .map(|s| SummaryRecord {
                trial: trial.to_string(),
                method: self.method,
                stage: s.stage,
                inferred_encoding: s.architecture.encode(),
                inferred_reward: s.final_score,
            })
            .collect()
    }
}

/// One row of the stage-summary file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub trial: String,
    pub method: Method,
    pub stage: usize,
    pub inferred_encoding: String,
    pub inferred_reward: f64,
}

pub fn write_summary<W: io::Write>(records: &[SummaryRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.clone(),
            r.method.to_string(),
            r.stage.to_string(),
            r.inferred_encoding.clone(),
            r.inferred_reward.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

pub fn read_summary<R: io::Read>(input: R) -> Result<Vec<SummaryRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SUMMARY_HEADER {
        return Err(Error::Parse(format!("unexpected summary header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// A trace row as read back from a trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub trial: String,
    pub method: Method,
    pub row: TraceRow,
}

pub fn read_trace<R: io::Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(Error::Parse(format!("unexpected trace header {header:?}")));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}"))) };
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Parse(format!("bad integer {s:?}"))) };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != TRACE_HEADER.len() {
            return Err(Error::Parse(format!("trace row has {} fields", rec.len())));
        }
        out.push(TraceRecord {
            trial: rec[0].to_string(),
            method: rec[1].parse()?,
            row: TraceRow {
                stage: int(&rec[2])?,
                iter: int(&rec[3])?,
                kind: rec[4].parse()?,
                encoding: rec[5].to_string(),
                reward: opt(&rec[6])?,
                entropy: num(&rec[7])?,
                baseline: opt(&rec[8])?,
                best_so_far: opt(&rec[9])?,
            },
        });
    }
    Ok(out)
}
