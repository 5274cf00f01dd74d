//! Search engines: curriculum search over a growing operation set, and the
//! fixed-space, node-growing and random-search baselines.
//!
//! All four methods share one budget unit, a *stage block*:
//!
//! 1. `warmup_iters` uniform samples, each trained on (controller frozen);
//! 2. `controller_iters_per_stage` controller batches of
//!    `samples_per_controller_iter` evaluated samples, interleaved with
//!    `weight_iters_per_stage` single-sample training steps (controller
//!    batch first);
//! 3. `infer_samples` evaluated samples, the best of which is the stage's
//!    answer.
//!
//! CNAS runs one block per admitted operation. Fixed-NAS answers checkpoint
//! `i` with a fresh controller and fresh oracle trained for `i` blocks inside
//! `Ω_i`. Random search spends the same blocks on uniform samples of the full
//! space. CNAS-Node spreads the same total over `B - 3` node stages.

mod trace;

pub use trace::{
    read_summary, read_trace, write_summary, IterKind, Method, SearchTrace, StageResult, SummaryRecord, TraceRecord,
    TraceRow, SUMMARY_HEADER, TRACE_HEADER,
};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cell_space::{check_permutation, Architecture, SearchSpaceStage, SpaceShape};
use crate::error::{Error, Result};
use crate::policy::{Baseline, FactorizedPolicy, PolicyUpdateConfig};
use crate::reward::RewardOracle;

/// How operations are admitted stage by stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OperationOrder {
    /// The shape's own order.
    Catalog,
    /// `order[j]` is the catalog index admitted at stage `j + 1`.
    Explicit(Vec<usize>),
    /// A seeded random order whose first operation has parameters.
    Random(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumConfig {
    pub shape: SpaceShape,
    pub operation_order: OperationOrder,
    pub warmup_iters: usize,
    pub controller_iters_per_stage: usize,
    pub weight_iters_per_stage: usize,
    pub samples_per_controller_iter: usize,
    pub policy_update: PolicyUpdateConfig,
    pub infer_samples: usize,
    /// Seed of the search's random stream when run through [`run_seeded`].
    pub seed: u64,
}

impl CurriculumConfig {
    /// Default schedule: 20 warmup, 40 controller and 40 weight iterations
    /// per stage, 8 samples per controller batch, best of 10 at inference.
    pub fn new(shape: SpaceShape) -> Self {
        Self {
            shape,
            operation_order: OperationOrder::Catalog,
            warmup_iters: 20,
            controller_iters_per_stage: 40,
            weight_iters_per_stage: 40,
            samples_per_controller_iter: 8,
            policy_update: PolicyUpdateConfig::default(),
            infer_samples: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.controller_iters_per_stage == 0 {
            return Err(Error::Config("controller_iters_per_stage must be positive".into()));
        }
        if self.weight_iters_per_stage == 0 {
            return Err(Error::Config("weight_iters_per_stage must be positive".into()));
        }
        if self.samples_per_controller_iter == 0 {
            return Err(Error::Config("samples_per_controller_iter must be positive".into()));
        }
        if self.infer_samples == 0 {
            return Err(Error::Config("infer_samples must be positive".into()));
        }
        self.policy_update.validate()?;
        self.resolved_order().map(|_| ())
    }

    /// The concrete permutation of catalog indices.
    pub fn resolved_order(&self) -> Result<Vec<usize>> {
        let k = self.shape.num_ops();
        let order = match &self.operation_order {
            OperationOrder::Catalog => (0..k).collect(),
            OperationOrder::Explicit(order) => order.clone(),
            OperationOrder::Random(seed) => random_order(&self.shape, *seed),
        };
        check_permutation(&order, k)?;
        if !self.shape.operations()[order[0]].has_params {
            return Err(Error::Config(format!(
                "operation order starts with {:?}, which has no parameters",
                self.shape.operations()[order[0]].id
            )));
        }
        Ok(order)
    }

    fn block(&self) -> StageBudget {
        StageBudget {
            warmup: self.warmup_iters,
            controller_samples: self.controller_iters_per_stage * self.samples_per_controller_iter,
            batch: self.samples_per_controller_iter,
            weight_iters: self.weight_iters_per_stage,
            infer: self.infer_samples,
        }
    }
}

/// A uniformly random valid order: the first operation is drawn among the
/// parameterized ones, the rest are shuffled.
pub fn random_order(shape: &SpaceShape, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let with_params: Vec<usize> = (0..shape.num_ops())
        .filter(|&j| shape.operations()[j].has_params)
        .collect();
    let first = with_params[rng.random_range(0..with_params.len())];
    let mut rest: Vec<usize> = (0..shape.num_ops()).filter(|&j| j != first).collect();
    rest.shuffle(&mut rng);
    std::iter::once(first).chain(rest).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct StageBudget {
    warmup: usize,
    controller_samples: usize,
    batch: usize,
    weight_iters: usize,
    infer: usize,
}

/// Where architectures come from inside a block.
enum Sampler<'p> {
    Policy(&'p mut FactorizedPolicy, &'p mut Baseline, PolicyUpdateConfig),
    Uniform(SearchSpaceStage),
}

/// Book-keeping shared by every method: the oracle, the random stream, the
/// mapping from search-order operation indices to catalog indices, and the
/// rows and counters of the trace.
struct Runner<'a, O: ?Sized, R> {
    oracle: &'a mut O,
    rng: &'a mut R,
    order: Vec<usize>,
    rows: Vec<TraceRow>,
    evaluations: u64,
    train_steps: u64,
    best: Option<f64>,
}

impl<'a, O, R> Runner<'a, O, R>
where
    O: RewardOracle + ?Sized,
    R: RngCore,
{
    fn new(oracle: &'a mut O, rng: &'a mut R, order: Vec<usize>) -> Self {
        Self {
            oracle,
            rng,
            order,
            rows: Vec::new(),
            evaluations: 0,
            train_steps: 0,
            best: None,
        }
    }

    fn to_catalog(&self, arch: &Architecture) -> Architecture {
        arch.map_ops(|op| self.order[op])
    }

    /// `policy` is the controller's (entropy, baseline) when the row was drawn.
    fn record(
        &mut self,
        stage: usize,
        iter: usize,
        kind: IterKind,
        arch: &Architecture,
        reward: Option<f64>,
        policy: (f64, Option<f64>),
    ) {
        let (entropy, baseline) = policy;
        self.rows.push(TraceRow {
            stage,
            iter,
            kind,
            encoding: arch.encode(),
            reward,
            entropy,
            baseline,
            best_so_far: self.best,
        });
    }

    fn evaluate(&mut self, arch: &Architecture) -> Result<f64> {
        let reward = self.oracle.evaluate(arch, self.rng)?;
        self.evaluations += 1;
        self.best = Some(self.best.map_or(reward, |b| b.max(reward)));
        Ok(reward)
    }

    fn train(&mut self, arch: &Architecture) -> Result<()> {
        self.oracle.train_step(arch)?;
        self.train_steps += 1;
        Ok(())
    }

    fn warmup(
        &mut self,
        stage_no: usize,
        iter: &mut usize,
        stage: &SearchSpaceStage,
        m: usize,
        entropy: f64,
        baseline: Option<f64>,
    ) -> Result<()> {
        for _ in 0..m {
            let sampled = stage.uniform_sample(self.rng);
            let arch = self.to_catalog(&sampled);
            self.train(&arch)?;
            self.record(stage_no, *iter, IterKind::Warmup, &arch, None, (entropy, baseline));
            *iter += 1;
        }
        Ok(())
    }

    /// Runs one block and returns the inferred `(arch, validation reward)`
    /// in catalog indices.
    fn block(
        &mut self,
        stage_no: usize,
        iter: &mut usize,
        sampler: &mut Sampler<'_>,
        budget: StageBudget,
    ) -> Result<(Architecture, f64)> {
        let snapshot = |s: &Sampler<'_>| match s {
            Sampler::Policy(p, b, _) => (p.entropy(), b.value()),
            Sampler::Uniform(stage) => (FactorizedPolicy::new(stage.clone()).entropy(), None),
        };
        let draw = |s: &Sampler<'_>, rng: &mut R| match s {
            Sampler::Policy(p, _, _) => p.sample(rng),
            Sampler::Uniform(stage) => stage.uniform_sample(rng),
        };

        let (entropy, baseline) = snapshot(sampler);
        let warmup_stage = match sampler {
            Sampler::Policy(p, _, _) => p.stage().clone(),
            Sampler::Uniform(stage) => stage.clone(),
        };
        self.warmup(stage_no, iter, &warmup_stage, budget.warmup, entropy, baseline)?;

        let batches = budget.controller_samples.div_ceil(budget.batch);
        let mut remaining = budget.controller_samples;
        for t in 0..batches.max(budget.weight_iters) {
            if t < batches {
                let (entropy, baseline) = snapshot(sampler);
                let n = remaining.min(budget.batch);
                remaining -= n;
                let mut batch = Vec::with_capacity(n);
                for _ in 0..n {
                    let arch = draw(sampler, self.rng);
                    let catalog = self.to_catalog(&arch);
                    let reward = self.evaluate(&catalog)?;
                    self.record(
                        stage_no,
                        *iter,
                        IterKind::Controller,
                        &catalog,
                        Some(reward),
                        (entropy, baseline),
                    );
                    batch.push((arch, reward));
                }
                if let Sampler::Policy(policy, baseline, config) = sampler {
                    policy.reinforce_step(&batch, config, baseline)?;
                }
                *iter += 1;
            }
            if t < budget.weight_iters {
                let (entropy, baseline) = snapshot(sampler);
                let sampled = draw(sampler, self.rng);
                let arch = self.to_catalog(&sampled);
                self.train(&arch)?;
                self.record(stage_no, *iter, IterKind::Weights, &arch, None, (entropy, baseline));
                *iter += 1;
            }
        }

        let (entropy, baseline) = snapshot(sampler);
        let mut best: Option<(Architecture, f64)> = None;
        for _ in 0..budget.infer {
            let sampled = draw(sampler, self.rng);
            let arch = self.to_catalog(&sampled);
            let reward = self.evaluate(&arch)?;
            self.record(
                stage_no,
                *iter,
                IterKind::Infer,
                &arch,
                Some(reward),
                (entropy, baseline),
            );
            if best.as_ref().is_none_or(|(_, r)| reward > *r) {
                best = Some((arch, reward));
            }
        }
        *iter += 1;
        Ok(best.expect("infer budget is positive"))
    }

    fn stage_result(
        &self,
        stage: usize,
        (architecture, validation_reward): (Architecture, f64),
    ) -> Result<StageResult> {
        Ok(StageResult {
            stage,
            final_score: self.oracle.final_score(&architecture)?,
            architecture,
            validation_reward,
            evaluations: self.evaluations,
            train_steps: self.train_steps,
        })
    }
}

fn prepare<O: RewardOracle + ?Sized>(config: &CurriculumConfig, oracle: &O) -> Result<(Vec<usize>, SpaceShape)> {
    config.validate()?;
    if oracle.shape() != &config.shape {
        return Err(Error::ShapeMismatch(format!(
            "oracle shape `{}` differs from search shape `{}`",
            oracle.shape().descriptor(),
            config.shape.descriptor()
        )));
    }
    let order = config.resolved_order()?;
    let search_shape = config.shape.reordered(&order)?;
    Ok((order, search_shape))
}

fn op_names(shape: &SpaceShape, order: &[usize]) -> Vec<String> {
    order.iter().map(|&j| shape.operations()[j].id.clone()).collect()
}

/// Curriculum search: one block per stage, admitting one more operation at
/// every stage transition.
pub fn run_cnas<O, R>(config: &CurriculumConfig, oracle: &mut O, rng: &mut R) -> Result<SearchTrace>
where
    O: RewardOracle + ?Sized,
    R: RngCore,
{
    let (order, search_shape) = prepare(config, oracle)?;
    let k = search_shape.num_ops();
    let names = op_names(&config.shape, &order);
    let mut runner = Runner::new(oracle, rng, order);
    let mut policy = FactorizedPolicy::new(SearchSpaceStage::new(search_shape, 1)?);
    let mut baseline = Baseline::new();
    let mut stages = Vec::with_capacity(k);
    let mut iter = 0;
    for i in 1..=k {
        if i > 1 {
            policy = policy.extend_operation(&policy.stage().widened()?)?;
            iter = 0;
        }
        let mut sampler = Sampler::Policy(&mut policy, &mut baseline, config.policy_update);
        let inferred = runner.block(i, &mut iter, &mut sampler, config.block())?;
        stages.push(runner.stage_result(i, inferred)?);
    }
    Ok(SearchTrace {
        method: Method::Cnas,
        operation_order: names,
        rows: runner.rows,
        stages,
        final_policy: Some(policy),
    })
}

/// Fixed-space baseline: checkpoint `i` trains a fresh controller against a
/// fresh copy of the oracle inside `Ω_i` for the `i` blocks CNAS spends
/// through stage `i`.
pub fn run_fixed<O, R>(config: &CurriculumConfig, oracle: &O, rng: &mut R) -> Result<SearchTrace>
where
    O: RewardOracle + Clone,
    R: RngCore,
{
    let (order, search_shape) = prepare(config, oracle)?;
    let k = search_shape.num_ops();
    let mut rows = Vec::new();
    let mut stages = Vec::with_capacity(k);
    let mut policy = None;
    for i in 1..=k {
        let mut fresh = oracle.clone();
        let mut runner = Runner::new(&mut fresh, &mut *rng, order.clone());
        let mut p = FactorizedPolicy::new(SearchSpaceStage::new(search_shape.clone(), i)?);
        let mut baseline = Baseline::new();
        let mut iter = 0;
        let mut inferred = None;
        for _ in 0..i {
            let mut sampler = Sampler::Policy(&mut p, &mut baseline, config.policy_update);
            inferred = Some(runner.block(i, &mut iter, &mut sampler, config.block())?);
        }
        stages.push(runner.stage_result(i, inferred.expect("at least one block"))?);
        rows.append(&mut runner.rows);
        policy = Some(p);
    }
    Ok(SearchTrace {
        method: Method::Fixed,
        operation_order: op_names(&config.shape, &order),
        rows,
        stages,
        final_policy: policy,
    })
}

/// Random search over the full space with the same blocks as CNAS; every
/// checkpoint reports the best architecture evaluated so far.
pub fn run_random<O, R>(config: &CurriculumConfig, oracle: &mut O, rng: &mut R) -> Result<SearchTrace>
where
    O: RewardOracle + ?Sized,
    R: RngCore,
{
    let (order, _) = prepare(config, oracle)?;
    let k = config.shape.num_ops();
    let names = op_names(&config.shape, &order);
    let full = SearchSpaceStage::full(config.shape.clone());
    // samples are drawn in catalog indices already
    let mut runner = Runner::new(oracle, rng, (0..k).collect());
    let mut stages = Vec::with_capacity(k);
    let mut incumbent: Option<(Architecture, f64)> = None;
    let mut iter = 0;
    for i in 1..=k {
        let before = runner.rows.len();
        runner.block(i, &mut iter, &mut Sampler::Uniform(full.clone()), config.block())?;
        for row in &runner.rows[before..] {
            if let Some(r) = row.reward {
                if incumbent.as_ref().is_none_or(|(_, best)| r > *best) {
                    incumbent = Some((row.encoding.parse()?, r));
                }
            }
        }
        iter = 0;
        stages.push(runner.stage_result(i, incumbent.clone().expect("blocks evaluate"))?);
    }
    Ok(SearchTrace {
        method: Method::Random,
        operation_order: names,
        rows: runner.rows,
        stages,
        final_policy: None,
    })
}

fn share(total: usize, parts: usize, index: usize) -> usize {
    total / parts + usize::from(index < total % parts)
}

/// Node-growing baseline: all operations admitted from the start, one
/// intermediate node added per stage. The CNAS total budget is spread over
/// the `B - 3` stages, each ending with its own inference.
pub fn run_node_curriculum<O, R>(config: &CurriculumConfig, oracle: &mut O, rng: &mut R) -> Result<SearchTrace>
where
    O: RewardOracle + ?Sized,
    R: RngCore,
{
    let (order, search_shape) = prepare(config, oracle)?;
    let k = search_shape.num_ops();
    let n = search_shape.intermediate_nodes();
    let block = config.block();
    let total_evals = k * (block.controller_samples + block.infer);
    let controller_total = total_evals.checked_sub(n * block.infer).ok_or_else(|| {
        Error::Config(format!(
            "budget of {total_evals} evaluations cannot cover {n} node stages"
        ))
    })?;
    let names = op_names(&config.shape, &order);
    let mut runner = Runner::new(oracle, rng, order);
    let mut policy = FactorizedPolicy::new(SearchSpaceStage::full(search_shape.with_total_nodes(4)?));
    let mut baseline = Baseline::new();
    let mut stages = Vec::with_capacity(n);
    for s in 0..n {
        if s > 0 {
            let next = SearchSpaceStage::full(search_shape.with_total_nodes(s + 4)?);
            policy = policy.extend_node(&next)?;
        }
        let budget = StageBudget {
            warmup: share(k * block.warmup, n, s),
            controller_samples: share(controller_total, n, s),
            batch: block.batch,
            weight_iters: share(k * block.weight_iters, n, s),
            infer: block.infer,
        };
        let mut iter = 0;
        let mut sampler = Sampler::Policy(&mut policy, &mut baseline, config.policy_update);
        let inferred = runner.block(s + 1, &mut iter, &mut sampler, budget)?;
        stages.push(runner.stage_result(s + 1, inferred)?);
    }
    Ok(SearchTrace {
        method: Method::Node,
        operation_order: names,
        rows: runner.rows,
        stages,
        final_policy: Some(policy),
    })
}

/// Dispatches to the engine of `method`.
pub fn run_method<O, R>(method: Method, config: &CurriculumConfig, oracle: &mut O, rng: &mut R) -> Result<SearchTrace>
where
    O: RewardOracle + Clone,
    R: RngCore,
{
    match method {
        Method::Cnas => run_cnas(config, oracle, rng),
        Method::Fixed => run_fixed(config, oracle, rng),
        Method::Node => run_node_curriculum(config, oracle, rng),
        Method::Random => run_random(config, oracle, rng),
    }
}

/// The search stream of a trial. It runs on a different ChaCha stream than
/// the one oracles draw their landscapes from with the same seed.
pub fn search_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// [`run_method`] with the search stream of `config.seed`.
pub fn run_seeded<O: RewardOracle + Clone>(
    method: Method,
    config: &CurriculumConfig,
    oracle: &mut O,
) -> Result<SearchTrace> {
    run_method(method, config, oracle, &mut search_rng(config.seed))
}

/// Trains the oracle on `m` uniform samples of `stage` while the controller
/// stays untouched.
pub fn operation_warmup<O, R>(
    _policy: &FactorizedPolicy,
    oracle: &mut O,
    stage: &SearchSpaceStage,
    m: usize,
    rng: &mut R,
) -> Result<()>
where
    O: RewardOracle + ?Sized,
    R: Rng + ?Sized,
{
    for _ in 0..m {
        oracle.train_step(&stage.uniform_sample(rng))?;
    }
    Ok(())
}

/// Best of `n` policy samples by validation reward (first on ties).
pub fn infer<O, R>(policy: &FactorizedPolicy, oracle: &O, n: usize, rng: &mut R) -> Result<(Architecture, f64)>
where
    O: RewardOracle + ?Sized,
    R: RngCore,
{
    if n == 0 {
        return Err(Error::Config("inference needs at least one sample".into()));
    }
    let mut best: Option<(Architecture, f64)> = None;
    for _ in 0..n {
        let arch = policy.sample(rng);
        let reward = oracle.evaluate(&arch, rng)?;
        if best.as_ref().is_none_or(|(_, r)| reward > *r) {
            best = Some((arch, reward));
        }
    }
    Ok(best.expect("n is positive"))
}
