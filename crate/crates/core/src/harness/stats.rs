use std::collections::{BTreeMap, BTreeSet};
use std::io;

use crate::curriculum::{Method, SummaryRecord};
use crate::error::{Error, Result};

/// Header of the statistics file. Every row is one number: `index` is the
/// stage for per-stage statistics and the order variant for `order_mean`;
/// `other` names the opponent of pairwise statistics.
pub const STATS_HEADER: [&str; 5] = ["statistic", "method", "other", "index", "value"];

/// Inferred-reward statistics of one method at one stage across trials.
/// `std` is the population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodStageStats {
    pub method: Method,
    pub stage: usize,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// How often `method` finished at least as well as `other` on the same
/// trial, judged by final-stage inferred reward.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseWin {
    pub method: Method,
    pub other: Method,
    pub trials: usize,
    pub fraction_at_least: f64,
    pub fraction_strictly: f64,
}

/// Spread of a method's mean final reward across operation-order variants.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderSensitivity {
    pub method: Method,
    /// Mean final reward per order variant, by variant index.
    pub order_means: Vec<(usize, f64)>,
    /// Population standard deviation over mean of `order_means`.
    pub coefficient_of_variation: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Statistics {
    pub stages: Vec<MethodStageStats>,
    pub pairwise: Vec<PairwiseWin>,
    pub orders: Vec<OrderSensitivity>,
}

impl Statistics {
    pub fn stage(&self, method: Method, stage: usize) -> Option<&MethodStageStats> {
        self.stages.iter().find(|s| s.method == method && s.stage == stage)
    }

    /// Statistics of the last stage of `method`.
    pub fn final_stage(&self, method: Method) -> Option<&MethodStageStats> {
        self.stages
            .iter()
            .filter(|s| s.method == method)
            .max_by_key(|s| s.stage)
    }

    pub fn pairwise(&self, method: Method, other: Method) -> Option<&PairwiseWin> {
        self.pairwise.iter().find(|p| p.method == method && p.other == other)
    }

    pub fn order_sensitivity(&self, method: Method) -> Option<&OrderSensitivity> {
        self.orders.iter().find(|o| o.method == method)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(STATS_HEADER)?;
        let mut row = |stat: &str, method: Method, other: Option<Method>, index: Option<usize>, value: String| {
            w.write_record([
                stat.to_string(),
                method.to_string(),
                other.map(|m| m.to_string()).unwrap_or_default(),
                index.map(|i| i.to_string()).unwrap_or_default(),
                value,
            ])
        };
        for s in &self.stages {
            row("n", s.method, None, Some(s.stage), s.n.to_string())?;
            row("mean", s.method, None, Some(s.stage), s.mean.to_string())?;
            row("std", s.method, None, Some(s.stage), s.std.to_string())?;
            row("min", s.method, None, Some(s.stage), s.min.to_string())?;
            row("max", s.method, None, Some(s.stage), s.max.to_string())?;
        }
        for p in &self.pairwise {
            row("paired_trials", p.method, Some(p.other), None, p.trials.to_string())?;
            row(
                "win_fraction_ge",
                p.method,
                Some(p.other),
                None,
                p.fraction_at_least.to_string(),
            )?;
            row(
                "win_fraction_gt",
                p.method,
                Some(p.other),
                None,
                p.fraction_strictly.to_string(),
            )?;
        }
        for o in &self.orders {
            for &(j, mean) in &o.order_means {
                row("order_mean", o.method, None, Some(j), mean.to_string())?;
            }
            row("order_cv", o.method, None, None, o.coefficient_of_variation.to_string())?;
        }
        w.flush().map_err(|e| Error::io("<stats>", e))?;
        Ok(())
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// The order variant encoded in a trial id (`o<j>-...`), if any.
fn order_index(trial: &str) -> Option<usize> {
    trial.strip_prefix('o')?.split_once('-')?.0.parse().ok()
}

/// Aggregates stage-summary records.
///
/// Fails with `InconsistentTraces` when there are no records, when a
/// (trial, method, stage) appears twice, or when a method's trials do not
/// all cover the same stages.
pub fn summarize(records: &[SummaryRecord]) -> Result<Statistics> {
    if records.is_empty() {
        return Err(Error::InconsistentTraces("no records".into()));
    }
    // method -> trial -> stage -> reward
    let mut by_method: BTreeMap<Method, BTreeMap<&str, BTreeMap<usize, f64>>> = BTreeMap::new();
    for r in records {
        if !r.inferred_reward.is_finite() {
            return Err(Error::InconsistentTraces(format!(
                "non-finite reward for trial {} method {} stage {}",
                r.trial, r.method, r.stage
            )));
        }
        let stages = by_method.entry(r.method).or_default().entry(&r.trial).or_default();
        if stages.insert(r.stage, r.inferred_reward).is_some() {
            return Err(Error::InconsistentTraces(format!(
                "trial {} method {} stage {} appears twice",
                r.trial, r.method, r.stage
            )));
        }
    }

    let mut stats = Statistics::default();
    let mut finals: BTreeMap<Method, BTreeMap<&str, f64>> = BTreeMap::new();
    for (&method, trials) in &by_method {
        let mut stage_set: Option<BTreeSet<usize>> = None;
        for (trial, stages) in trials {
            let set: BTreeSet<usize> = stages.keys().copied().collect();
            match &stage_set {
                None => stage_set = Some(set),
                Some(expected) if *expected != set => {
                    return Err(Error::InconsistentTraces(format!(
                        "method {method}: trial {trial} covers stages {set:?}, others cover {expected:?}"
                    )));
                }
                Some(_) => {}
            }
            finals
                .entry(method)
                .or_default()
                .insert(trial, *stages.values().next_back().expect("non-empty"));
        }
        for stage in stage_set.expect("method has a trial") {
            let values: Vec<f64> = trials.values().map(|s| s[&stage]).collect();
            let (mean, std) = mean_std(&values);
            stats.stages.push(MethodStageStats {
                method,
                stage,
                n: values.len(),
                mean,
                std,
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }

    for (&a, fa) in &finals {
        for (&b, fb) in &finals {
            if a == b {
                continue;
            }
            let paired: Vec<(f64, f64)> = fa.iter().filter_map(|(t, &x)| fb.get(t).map(|&y| (x, y))).collect();
            if paired.is_empty() {
                continue;
            }
            let n = paired.len() as f64;
            stats.pairwise.push(PairwiseWin {
                method: a,
                other: b,
                trials: paired.len(),
                fraction_at_least: paired.iter().filter(|(x, y)| x >= y).count() as f64 / n,
                fraction_strictly: paired.iter().filter(|(x, y)| x > y).count() as f64 / n,
            });
        }
    }

    for (&method, fm) in &finals {
        let mut per_order: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (trial, &v) in fm {
            if let Some(j) = order_index(trial) {
                per_order.entry(j).or_default().push(v);
            }
        }
        if per_order.len() < 2 {
            continue;
        }
        let order_means: Vec<(usize, f64)> = per_order.iter().map(|(&j, v)| (j, mean_std(v).0)).collect();
        let (mean, std) = mean_std(&order_means.iter().map(|&(_, m)| m).collect::<Vec<_>>());
        stats.orders.push(OrderSensitivity {
            method,
            order_means,
            coefficient_of_variation: if mean != 0.0 { std / mean.abs() } else { f64::INFINITY },
        });
    }
    Ok(stats)
}
