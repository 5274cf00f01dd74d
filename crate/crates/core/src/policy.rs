//! Factorized categorical controller.
//!
//! Every decision slot of the cell (see [`SpaceShape::decision_slots`]) owns
//! an independent logit vector. Input slots have one logit per admissible
//! predecessor; operation slots have one logit per catalog entry, of which
//! only the first `active_ops` are ever read.

use std::fmt::Write as _;

use rand::Rng;

use crate::cell_space::{Architecture, DecisionKind, DecisionSlot, SearchSpaceStage, SpaceShape};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "cnas-policy v1";

/// Per-slot values aligned with a policy's logits (gradients, directions).
pub type SlotVectors = Vec<Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyUpdateConfig {
    pub learning_rate: f64,
    /// Weight of the entropy bonus.
    pub entropy_weight: f64,
    /// Decay of the moving-average reward baseline.
    pub baseline_decay: f64,
}

impl Default for PolicyUpdateConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3.0,
            entropy_weight: 0.005,
            baseline_decay: 0.95,
        }
    }
}

impl PolicyUpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.entropy_weight >= 0.0 && self.entropy_weight.is_finite()) {
            return Err(Error::Config(format!(
                "entropy_weight must be non-negative, got {}",
                self.entropy_weight
            )));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::Config(format!(
                "baseline_decay must be in [0, 1), got {}",
                self.baseline_decay
            )));
        }
        Ok(())
    }
}

/// Exponential moving average of batch mean reward.
///
/// An unset baseline takes the first batch mean, both as the advantage
/// reference for that batch and as its starting value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Baseline {
    value: Option<f64>,
    frozen: bool,
}

impl Baseline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(value: f64) -> Self {
        Self {
            value: Some(value),
            frozen: false,
        }
    }

    /// A baseline that never moves.
    pub fn frozen(value: f64) -> Self {
        Self {
            value: Some(value),
            frozen: true,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    fn observe(&mut self, batch_mean: f64, decay: f64) {
        if self.frozen {
            return;
        }
        self.value = Some(match self.value {
            None => batch_mean,
            Some(v) => decay * v + (1.0 - decay) * batch_mean,
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedPolicy {
    stage: SearchSpaceStage,
    slots: Vec<DecisionSlot>,
    logits: SlotVectors,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|z| z - log_total).collect()
}

fn categorical_entropy(logits: &[f64]) -> f64 {
    softmax(logits)
        .iter()
        .zip(log_softmax(logits))
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, lp)| -p * lp)
        .sum()
}

impl FactorizedPolicy {
    /// All logits zero: uniform over the admitted choices of every slot.
    pub fn new(stage: SearchSpaceStage) -> Self {
        let slots: Vec<DecisionSlot> = stage.shape().decision_slots().collect();
        let k = stage.shape().num_ops();
        let logits = slots
            .iter()
            .map(|s| match s.kind {
                DecisionKind::Input => vec![0.0; s.input_choices()],
                DecisionKind::Operation => vec![0.0; k],
            })
            .collect();
        Self { stage, slots, logits }
    }

    pub fn stage(&self) -> &SearchSpaceStage {
        &self.stage
    }

    pub fn shape(&self) -> &SpaceShape {
        self.stage.shape()
    }

    pub fn slots(&self) -> &[DecisionSlot] {
        &self.slots
    }

    /// Full logit vectors, masked operation entries included.
    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    /// Mutable access to one slot's logits. Entries beyond the admitted
    /// range of an operation slot may be written but are never read.
    pub fn slot_logits_mut(&mut self, slot: usize) -> &mut [f64] {
        &mut self.logits[slot]
    }

    fn admitted(&self, slot: usize) -> &[f64] {
        let n = self.stage.choices(&self.slots[slot]);
        &self.logits[slot][..n]
    }

    /// Probabilities over the admitted choices of a slot.
    pub fn probabilities(&self, slot: usize) -> Vec<f64> {
        softmax(self.admitted(slot))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Architecture {
        let values: Vec<usize> = (0..self.slots.len())
            .map(|d| {
                let probs = self.probabilities(d);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (j, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return j;
                    }
                }
                // rounding left u above the last partial sum
                probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
            })
            .collect();
        Architecture::from_decisions(self.shape(), &values)
    }

    /// Sum of per-slot log probabilities.
    pub fn log_prob(&self, arch: &Architecture) -> Result<f64> {
        self.stage.validate(arch)?;
        Ok(arch
            .decisions()
            .iter()
            .enumerate()
            .map(|(d, &v)| log_softmax(self.admitted(d))[v])
            .sum())
    }

    /// Exact entropy in nats, a sum over slots.
    pub fn entropy(&self) -> f64 {
        (0..self.slots.len())
            .map(|d| categorical_entropy(self.admitted(d)))
            .sum()
    }

    /// `∇ log π(arch)` with respect to the logits.
    pub fn score(&self, arch: &Architecture) -> Result<SlotVectors> {
        self.stage.validate(arch)?;
        let mut grad = self.zeros();
        for (d, v) in arch.decisions().into_iter().enumerate() {
            for (j, p) in self.probabilities(d).into_iter().enumerate() {
                grad[d][j] = if j == v { 1.0 - p } else { -p };
            }
        }
        Ok(grad)
    }

    /// `∇ H(π)`; for one categorical, `∂H/∂z_j = -p_j (log p_j + H)`.
    pub fn entropy_gradient(&self) -> SlotVectors {
        let mut grad = self.zeros();
        for (d, g) in grad.iter_mut().enumerate() {
            let admitted = self.admitted(d);
            let probs = softmax(admitted);
            let logp = log_softmax(admitted);
            let h: f64 = probs
                .iter()
                .zip(&logp)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, l)| -p * l)
                .sum();
            for j in 0..admitted.len() {
                g[j] = if probs[j] > 0.0 { -probs[j] * (logp[j] + h) } else { 0.0 };
            }
        }
        grad
    }

    /// Ascent direction of the entropy-regularized objective for one batch:
    /// the batch mean of `(reward - baseline) ∇ log π` plus
    /// `entropy_weight ∇ H`.
    pub fn reinforce_direction(
        &self,
        samples: &[(Architecture, f64)],
        baseline: f64,
        entropy_weight: f64,
    ) -> Result<SlotVectors> {
        let mut dir = self.zeros();
        if !samples.is_empty() {
            let scale = 1.0 / samples.len() as f64;
            for (arch, reward) in samples {
                let advantage = reward - baseline;
                for (acc, s) in dir.iter_mut().zip(self.score(arch)?) {
                    for (a, s) in acc.iter_mut().zip(s) {
                        *a += scale * advantage * s;
                    }
                }
            }
        }
        if entropy_weight > 0.0 {
            for (acc, h) in dir.iter_mut().zip(self.entropy_gradient()) {
                for (a, h) in acc.iter_mut().zip(h) {
                    *a += entropy_weight * h;
                }
            }
        }
        Ok(dir)
    }

    /// One REINFORCE ascent step, then advances the baseline.
    pub fn reinforce_step(
        &mut self,
        samples: &[(Architecture, f64)],
        config: &PolicyUpdateConfig,
        baseline: &mut Baseline,
    ) -> Result<()> {
        if samples.is_empty() {
            return Ok(());
        }
        let batch_mean = samples.iter().map(|(_, r)| r).sum::<f64>() / samples.len() as f64;
        let reference = baseline.value().unwrap_or(batch_mean);
        let dir = self.reinforce_direction(samples, reference, config.entropy_weight)?;
        self.ascend(&dir, config.learning_rate);
        baseline.observe(batch_mean, config.baseline_decay);
        Ok(())
    }

    /// `logits += step * direction` on admitted entries only.
    pub fn ascend(&mut self, direction: &SlotVectors, step: f64) {
        for ((slot, logits), dir) in self.slots.iter().zip(&mut self.logits).zip(direction) {
            let n = self.stage.choices(slot);
            for (z, g) in logits[..n].iter_mut().zip(dir) {
                *z += step * g;
            }
        }
    }

    /// Admits the next operation. The new logit of every operation slot is
    /// the mean of that slot's previously admitted logits.
    pub fn extend_operation(&self, next: &SearchSpaceStage) -> Result<Self> {
        if next.shape() != self.shape() {
            return Err(Error::StageMismatch("extension must keep the shape".into()));
        }
        if next.active_ops() != self.stage.active_ops() + 1 {
            return Err(Error::StageMismatch(format!(
                "cannot extend from {} to {} active operations",
                self.stage.active_ops(),
                next.active_ops()
            )));
        }
        let old = self.stage.active_ops();
        let mut out = self.clone();
        out.stage = next.clone();
        for (slot, logits) in out.slots.iter().zip(out.logits.iter_mut()) {
            if slot.kind == DecisionKind::Operation {
                let mean = logits[..old].iter().sum::<f64>() / old as f64;
                logits[old] = mean;
            }
        }
        Ok(out)
    }

    /// Grows the cell by one intermediate node per group. Existing slots
    /// keep their logits; the new node's slots start uniform.
    pub fn extend_node(&self, next: &SearchSpaceStage) -> Result<Self> {
        let (cur, nxt) = (self.shape(), next.shape());
        if nxt.operations() != cur.operations()
            || nxt.cell_groups() != cur.cell_groups()
            || next.active_ops() != self.stage.active_ops()
        {
            return Err(Error::StageMismatch(
                "node extension must keep operations and groups".into(),
            ));
        }
        if nxt.total_nodes() != cur.total_nodes() + 1 {
            return Err(Error::StageMismatch(format!(
                "cannot grow from B={} to B={}",
                cur.total_nodes(),
                nxt.total_nodes()
            )));
        }
        let mut out = Self::new(next.clone());
        for (slot, logits) in self.slots.iter().zip(&self.logits) {
            let d = out
                .slots
                .iter()
                .position(|s| s == slot)
                .expect("old slots exist in the grown shape");
            out.logits[d].clone_from(logits);
        }
        Ok(out)
    }

    /// Plain-text checkpoint: a magic line, the shape descriptor, the active
    /// operation count and one line of logits per slot, each written with
    /// 17 significant digits.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!(
            "{CHECKPOINT_MAGIC}\nshape {}\nactive_ops {}\n",
            self.shape().descriptor(),
            self.stage.active_ops()
        );
        for logits in &self.logits {
            let line: Vec<String> = logits.iter().map(|z| format!("{z:.16e}")).collect();
            writeln!(out, "{}", line.join(" ")).expect("writing to a String");
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Parse("not a policy checkpoint".into()));
        }
        let shape = lines
            .next()
            .and_then(|l| l.strip_prefix("shape "))
            .ok_or_else(|| Error::Parse("missing shape line".into()))
            .and_then(SpaceShape::parse_descriptor)?;
        let active = lines
            .next()
            .and_then(|l| l.strip_prefix("active_ops "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse("missing active_ops line".into()))?;
        let mut policy = Self::new(SearchSpaceStage::new(shape, active)?);
        for d in 0..policy.logits.len() {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing logits for slot {d}")))?;
            let values = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad logit {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != policy.logits[d].len() {
                return Err(Error::Parse(format!(
                    "slot {d} has {} logits, expected {}",
                    values.len(),
                    policy.logits[d].len()
                )));
            }
            policy.logits[d] = values;
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Parse("trailing data after the last slot".into()));
        }
        Ok(policy)
    }

    fn zeros(&self) -> SlotVectors {
        self.logits.iter().map(|l| vec![0.0; l.len()]).collect()
    }
}
