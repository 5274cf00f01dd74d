//! Reward oracles standing in for trained-network validation accuracy.
//!
//! * [`PlantedLandscape`]: additive closed-form reward with a known optimum.
//! * [`SurrogateSupernet`]: per-(edge, op) proficiencies that approach a
//!   latent ceiling as the edge is trained, a cheap model of weight sharing.
//! * [`TabularOracle`]: a lookup table keyed by canonical encoding.
//!
//! Rewards of architectures with fewer intermediate nodes than the shape
//! (used by the node-growing curriculum) are averaged over the edges that
//! exist, so every oracle reports values on the same scale at every stage.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cell_space::{Architecture, Edge, SearchSpaceStage, SpaceShape};
use crate::error::{Error, Result};

/// Common interface of every reward source used by the search engines.
pub trait RewardOracle {
    fn shape(&self) -> &SpaceShape;

    /// Validation reward, possibly noisy.
    fn evaluate(&self, arch: &Architecture, rng: &mut dyn RngCore) -> Result<f64>;

    /// Noiseless quality of the architecture trained to convergence; the
    /// score a finished search is judged by.
    fn final_score(&self, arch: &Architecture) -> Result<f64>;

    /// One weight-training step on `arch`. A no-op for fixed oracles.
    fn train_step(&mut self, arch: &Architecture) -> Result<()> {
        self.shape().validate_prefix(arch)
    }

    fn is_trainable(&self) -> bool {
        false
    }
}

fn gaussian(rng: &mut dyn RngCore, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma is finite").sample(rng)
    } else {
        0.0
    }
}

fn check_sigma(sigma: f64, name: &str) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be non-negative, got {sigma}")))
    }
}

/// Flat index of edge `(group, node, slot)` in a shape's edge tables.
fn edge_index(shape: &SpaceShape, group: usize, node: usize, slot: usize) -> usize {
    (group * shape.intermediate_nodes() + node) * 2 + slot
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedParams {
    pub op_match_bonus: f64,
    pub input_match_bonus: f64,
    pub noise_sigma: f64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        Self {
            op_match_bonus: 0.7,
            input_match_bonus: 0.3,
            noise_sigma: 0.02,
        }
    }
}

/// Reward is the edge-averaged count of operation and input matches with a
/// planted architecture, plus Gaussian evaluation noise.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedLandscape {
    shape: SpaceShape,
    planted: Architecture,
    params: PlantedParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantedFile {
    version: u32,
    shape: String,
    planted: String,
    op_match_bonus: f64,
    input_match_bonus: f64,
    noise_sigma: f64,
}

impl PlantedLandscape {
    pub fn new(shape: SpaceShape, planted: Architecture, params: PlantedParams) -> Result<Self> {
        shape.validate(&planted)?;
        check_sigma(params.noise_sigma, "noise_sigma")?;
        Ok(Self { shape, planted, params })
    }

    /// Plants a uniformly drawn architecture of the full space.
    pub fn random(shape: SpaceShape, seed: u64, params: PlantedParams) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted = SearchSpaceStage::full(shape.clone()).uniform_sample(&mut rng);
        Self::new(shape, planted, params)
    }

    pub fn planted(&self) -> &Architecture {
        &self.planted
    }

    pub fn params(&self) -> &PlantedParams {
        &self.params
    }

    pub fn noiseless(&self, arch: &Architecture) -> Result<f64> {
        self.shape.validate_prefix(arch)?;
        let target = &self.planted.groups();
        let total: f64 = arch
            .edges()
            .map(|(g, k, s, e)| {
                let want = target[g][k][s];
                let op = if e.op == want.op {
                    self.params.op_match_bonus
                } else {
                    0.0
                };
                let input = if e.input == want.input {
                    self.params.input_match_bonus
                } else {
                    0.0
                };
                op + input
            })
            .sum();
        Ok(total / arch.num_edges() as f64)
    }

    pub fn to_json(&self) -> String {
        let file = PlantedFile {
            version: 1,
            shape: self.shape.descriptor(),
            planted: self.planted.encode(),
            op_match_bonus: self.params.op_match_bonus,
            input_match_bonus: self.params.input_match_bonus,
            noise_sigma: self.params.noise_sigma,
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PlantedFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.version != 1 {
            return Err(Error::Parse(format!(
                "unsupported planted file version {}",
                file.version
            )));
        }
        let shape = SpaceShape::parse_descriptor(&file.shape)?;
        let planted = Architecture::decode(&file.planted, &SearchSpaceStage::full(shape.clone()))?;
        let params = PlantedParams {
            op_match_bonus: file.op_match_bonus,
            input_match_bonus: file.input_match_bonus,
            noise_sigma: file.noise_sigma,
        };
        Self::new(shape, planted, params)
    }
}

impl RewardOracle for PlantedLandscape {
    fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    fn evaluate(&self, arch: &Architecture, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.noiseless(arch)? + gaussian(rng, self.params.noise_sigma))
    }

    fn final_score(&self, arch: &Architecture) -> Result<f64> {
        self.noiseless(arch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupernetParams {
    /// Fraction of the remaining gap to the ceiling closed per training step.
    pub train_rate: f64,
    /// Reward per matched planted input, averaged over edges.
    pub input_bonus: f64,
    pub eval_noise_sigma: f64,
    /// When set, this operation's ceiling is drawn from `[0.9, 1)` on every
    /// edge and all other ceilings from `[0, 0.8)`, making it the best
    /// operation everywhere.
    pub favored_op: Option<usize>,
}

impl Default for SupernetParams {
    fn default() -> Self {
        Self {
            train_rate: 0.1,
            input_bonus: 0.3,
            eval_noise_sigma: 0.02,
            favored_op: None,
        }
    }
}

/// Shared-weight surrogate. Each `(edge, op)` pair has a latent ceiling
/// `c` and a proficiency `p` that starts at 0 and moves towards `c` by a
/// fixed fraction whenever an architecture using that pair is trained.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateSupernet {
    shape: SpaceShape,
    params: SupernetParams,
    ceilings: Vec<Vec<f64>>,
    proficiency: Vec<Vec<f64>>,
    visits: Vec<Vec<u64>>,
    planted_inputs: Vec<usize>,
}

impl SurrogateSupernet {
    pub fn new(shape: SpaceShape, seed: u64, params: SupernetParams) -> Result<Self> {
        if !(params.train_rate > 0.0 && params.train_rate <= 1.0) {
            return Err(Error::Config(format!(
                "train_rate must be in (0, 1], got {}",
                params.train_rate
            )));
        }
        check_sigma(params.eval_noise_sigma, "eval_noise_sigma")?;
        if let Some(op) = params.favored_op {
            if op >= shape.num_ops() {
                return Err(Error::Config(format!("favored_op {op} outside the operation list")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = shape.num_ops();
        let mut ceilings = Vec::with_capacity(shape.total_edges());
        let mut planted_inputs = Vec::with_capacity(shape.total_edges());
        for _g in 0..shape.cell_groups() {
            for node in 0..shape.intermediate_nodes() {
                for _slot in 0..2 {
                    let row: Vec<f64> = (0..k)
                        .map(|op| match params.favored_op {
                            None => rng.random_range(0.0..1.0),
                            Some(f) if f == op => rng.random_range(0.9..1.0),
                            Some(_) => rng.random_range(0.0..0.8),
                        })
                        .collect();
                    ceilings.push(row);
                    planted_inputs.push(rng.random_range(0..node + 2));
                }
            }
        }
        Ok(Self {
            proficiency: vec![vec![0.0; k]; ceilings.len()],
            visits: vec![vec![0; k]; ceilings.len()],
            shape,
            params,
            ceilings,
            planted_inputs,
        })
    }

    pub fn params(&self) -> &SupernetParams {
        &self.params
    }

    pub fn ceiling(&self, group: usize, node: usize, slot: usize, op: usize) -> f64 {
        self.ceilings[edge_index(&self.shape, group, node, slot)][op]
    }

    pub fn proficiency(&self, group: usize, node: usize, slot: usize, op: usize) -> f64 {
        self.proficiency[edge_index(&self.shape, group, node, slot)][op]
    }

    /// Number of training steps that used `op` on this edge.
    pub fn visits(&self, group: usize, node: usize, slot: usize, op: usize) -> u64 {
        self.visits[edge_index(&self.shape, group, node, slot)][op]
    }

    pub fn planted_input(&self, group: usize, node: usize, slot: usize) -> usize {
        self.planted_inputs[edge_index(&self.shape, group, node, slot)]
    }

    /// Best architecture once every pair is fully trained: per edge, the
    /// operation with the highest ceiling (lowest index on ties) fed by the
    /// planted input.
    pub fn optimum(&self) -> Architecture {
        self.optimum_within(self.shape.num_ops())
    }

    /// [`optimum`](Self::optimum) restricted to the first `active_ops`
    /// operations.
    pub fn optimum_within(&self, active_ops: usize) -> Architecture {
        let values: Vec<usize> = (0..self.ceilings.len())
            .flat_map(|e| {
                let row = &self.ceilings[e][..active_ops];
                let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                [self.planted_inputs[e], best]
            })
            .collect();
        Architecture::from_decisions(&self.shape, &values)
    }

    fn score_with(&self, arch: &Architecture, table: &[Vec<f64>]) -> Result<f64> {
        self.shape.validate_prefix(arch)?;
        let (mut quality, mut matches) = (0.0, 0usize);
        for (g, k, s, Edge { input, op }) in arch.edges() {
            let e = edge_index(&self.shape, g, k, s);
            quality += table[e][op];
            matches += usize::from(input == self.planted_inputs[e]);
        }
        let edges = arch.num_edges() as f64;
        Ok(quality / edges + self.params.input_bonus * matches as f64 / edges)
    }

    /// Current reward without evaluation noise.
    pub fn noiseless(&self, arch: &Architecture) -> Result<f64> {
        self.score_with(arch, &self.proficiency)
    }
}

impl RewardOracle for SurrogateSupernet {
    fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    fn evaluate(&self, arch: &Architecture, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.noiseless(arch)? + gaussian(rng, self.params.eval_noise_sigma))
    }

    fn final_score(&self, arch: &Architecture) -> Result<f64> {
        self.score_with(arch, &self.ceilings)
    }

    fn train_step(&mut self, arch: &Architecture) -> Result<()> {
        self.shape.validate_prefix(arch)?;
        let rate = self.params.train_rate;
        for (g, k, s, edge) in arch.edges() {
            let e = edge_index(&self.shape, g, k, s);
            let (c, p) = (self.ceilings[e][edge.op], &mut self.proficiency[e][edge.op]);
            *p += rate * (c - *p);
            self.visits[e][edge.op] += 1;
        }
        Ok(())
    }

    fn is_trainable(&self) -> bool {
        true
    }
}

/// Benchmark-style lookup table.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularOracle {
    shape: SpaceShape,
    source: String,
    entries: BTreeMap<String, f64>,
}

impl TabularOracle {
    /// Keys are re-encoded canonically after validation.
    pub fn new(
        shape: SpaceShape,
        source: impl Into<String>,
        entries: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self> {
        let source = source.into();
        if source.contains('\n') {
            return Err(Error::Validation("source note must be a single line".into()));
        }
        let mut map = BTreeMap::new();
        for (key, reward) in entries {
            let arch: Architecture = key.parse()?;
            shape.validate_prefix(&arch)?;
            if !reward.is_finite() {
                return Err(Error::Validation(format!("reward for {key} is not finite")));
            }
            map.insert(arch.encode(), reward);
        }
        Ok(Self {
            shape,
            source,
            entries: map,
        })
    }

    /// Tabulates `reward` over every architecture of `stage`.
    pub fn tabulate(
        stage: &SearchSpaceStage,
        limit: u64,
        source: impl Into<String>,
        mut reward: impl FnMut(&Architecture) -> Result<f64>,
    ) -> Result<Self> {
        let entries = stage
            .enumerate(limit)?
            .iter()
            .map(|a| Ok((a.encode(), reward(a)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(stage.shape().clone(), source, entries)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, arch: &Architecture) -> Result<f64> {
        let key = arch.encode();
        self.entries.get(&key).copied().ok_or(Error::UnknownArchitecture(key))
    }

    /// `shape <descriptor>` header, an optional `# <source>` line, then one
    /// `encoding<TAB>reward` line per entry in key order.
    pub fn to_text(&self) -> String {
        let mut out = format!("shape {}\n", self.shape.descriptor());
        if !self.source.is_empty() {
            writeln!(out, "# {}", self.source).expect("writing to a String");
        }
        for (key, reward) in &self.entries {
            writeln!(out, "{key}\t{reward:.16e}").expect("writing to a String");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let shape = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("shape "))
            .ok_or_else(|| Error::Parse("table must start with a `shape` header".into()))
            .and_then(SpaceShape::parse_descriptor)?;
        let mut source = String::new();
        let mut entries = Vec::new();
        for (n, line) in lines {
            if let Some(note) = line.strip_prefix('#') {
                source = note.trim().to_string();
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `encoding<TAB>reward`", n + 1)))?;
            let reward = value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: bad reward {value:?}", n + 1)))?;
            entries.push((key.to_string(), reward));
        }
        Self::new(shape, source, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

impl RewardOracle for TabularOracle {
    fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    fn evaluate(&self, arch: &Architecture, _rng: &mut dyn RngCore) -> Result<f64> {
        self.lookup(arch)
    }

    fn final_score(&self, arch: &Architecture) -> Result<f64> {
        self.lookup(arch)
    }
}

/// Any of the three oracles, for code that picks one at run time.
#[derive(Clone, Debug)]
pub enum Oracle {
    Planted(PlantedLandscape),
    Supernet(SurrogateSupernet),
    Tabular(TabularOracle),
}

impl Oracle {
    fn inner(&self) -> &dyn RewardOracle {
        match self {
            Oracle::Planted(o) => o,
            Oracle::Supernet(o) => o,
            Oracle::Tabular(o) => o,
        }
    }
}

impl RewardOracle for Oracle {
    fn shape(&self) -> &SpaceShape {
        self.inner().shape()
    }

    fn evaluate(&self, arch: &Architecture, rng: &mut dyn RngCore) -> Result<f64> {
        self.inner().evaluate(arch, rng)
    }

    fn final_score(&self, arch: &Architecture) -> Result<f64> {
        self.inner().final_score(arch)
    }

    fn train_step(&mut self, arch: &Architecture) -> Result<()> {
        match self {
            Oracle::Planted(o) => o.train_step(arch),
            Oracle::Supernet(o) => o.train_step(arch),
            Oracle::Tabular(o) => o.train_step(arch),
        }
    }

    fn is_trainable(&self) -> bool {
        self.inner().is_trainable()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(b: usize, k: usize) -> SpaceShape {
        SpaceShape::with_catalog(b, 1, k).unwrap()
    }

    fn noiseless_params() -> PlantedParams {
        PlantedParams {
            noise_sigma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn planted_extremes() {
        let s = shape(5, 3);
        let stage = SearchSpaceStage::full(s.clone());
        let planted = Architecture::decode("0:1,1:2|2:0,0:1", &stage).unwrap();
        let o = PlantedLandscape::new(s, planted.clone(), noiseless_params()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(o.evaluate(&planted, &mut rng).unwrap(), 1.0);
        let opposite = Architecture::decode("1:0,0:0|0:1,1:0", &stage).unwrap();
        assert_eq!(o.evaluate(&opposite, &mut rng).unwrap(), 0.0);
        let wrong = Architecture::decode("0:0,1:0", &SearchSpaceStage::full(shape(4, 3))).unwrap();
        assert_eq!(o.evaluate(&wrong, &mut rng).unwrap(), 0.3);
        let groups = Architecture::decode(
            "0:0,1:0||0:0,1:0",
            &SearchSpaceStage::full(SpaceShape::with_catalog(4, 2, 3).unwrap()),
        )
        .unwrap();
        assert!(matches!(o.evaluate(&groups, &mut rng), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn planted_argmax_by_enumeration() {
        for seed in 0..20 {
            let s = shape(4, 2);
            let o = PlantedLandscape::random(s.clone(), seed, noiseless_params()).unwrap();
            let all = SearchSpaceStage::full(s).enumerate(100).unwrap();
            let best = all
                .iter()
                .max_by(|a, b| o.noiseless(a).unwrap().total_cmp(&o.noiseless(b).unwrap()))
                .unwrap();
            assert_eq!(best, o.planted());
            let top = o.noiseless(best).unwrap();
            assert_eq!(all.iter().filter(|a| o.noiseless(a).unwrap() == top).count(), 1);
        }
    }

    #[test]
    fn planted_noise_is_seeded() {
        let o = PlantedLandscape::random(shape(6, 4), 3, PlantedParams::default()).unwrap();
        let a = o.planted().clone();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10).map(|_| o.evaluate(&a, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
        assert_ne!(draw(1), draw(2));
        assert_eq!(
            PlantedLandscape::random(shape(6, 4), 3, PlantedParams::default()).unwrap(),
            o
        );
    }

    #[test]
    fn planted_json_round_trip() {
        let o = PlantedLandscape::random(shape(6, 4), 9, PlantedParams::default()).unwrap();
        assert_eq!(PlantedLandscape::from_json(&o.to_json()).unwrap(), o);
        assert!(PlantedLandscape::from_json("{}").is_err());
    }

    #[test]
    fn supernet_training_recursion() {
        let s = shape(5, 3);
        let stage = SearchSpaceStage::full(s.clone());
        let arch = Architecture::decode("0:1,1:2|2:0,0:1", &stage).unwrap();

        let mut jump = SurrogateSupernet::new(
            s.clone(),
            4,
            SupernetParams {
                train_rate: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        jump.train_step(&arch).unwrap();
        for (g, k, sl, e) in arch.edges() {
            assert_eq!(jump.proficiency(g, k, sl, e.op), jump.ceiling(g, k, sl, e.op));
        }

        let mut net = SurrogateSupernet::new(s.clone(), 4, SupernetParams::default()).unwrap();
        let untouched = net.clone();
        for n in 1..=30 {
            net.train_step(&arch).unwrap();
            for (g, k, sl, e) in arch.edges() {
                let closed = net.ceiling(g, k, sl, e.op) * (1.0 - 0.9f64.powi(n));
                assert!((net.proficiency(g, k, sl, e.op) - closed).abs() < 1e-12);
            }
        }
        // locality
        for g in 0..1 {
            for k in 0..2 {
                for sl in 0..2 {
                    let used = arch.groups()[g][k][sl].op;
                    for op in (0..3).filter(|&op| op != used) {
                        assert_eq!(net.proficiency(g, k, sl, op), untouched.proficiency(g, k, sl, op));
                    }
                }
            }
        }
    }

    #[test]
    fn untrained_supernet_scores_zero() {
        let s = shape(4, 2);
        let params = SupernetParams {
            input_bonus: 0.0,
            eval_noise_sigma: 0.0,
            ..Default::default()
        };
        let net = SurrogateSupernet::new(s.clone(), 1, params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for a in SearchSpaceStage::full(s).enumerate(100).unwrap() {
            assert_eq!(net.evaluate(&a, &mut rng).unwrap(), 0.0);
        }
    }

    #[test]
    fn trained_supernet_optimum_is_closed_form() {
        for seed in 0..20 {
            let s = shape(4, 2);
            let mut net = SurrogateSupernet::new(
                s.clone(),
                seed,
                SupernetParams {
                    train_rate: 1.0,
                    ..Default::default()
                },
            )
            .unwrap();
            let all = SearchSpaceStage::full(s).enumerate(100).unwrap();
            for a in &all {
                net.train_step(a).unwrap();
            }
            let best = all
                .iter()
                .max_by(|a, b| net.noiseless(a).unwrap().total_cmp(&net.noiseless(b).unwrap()))
                .unwrap();
            assert_eq!(*best, net.optimum());
            assert_eq!(net.final_score(best).unwrap(), net.noiseless(best).unwrap());
        }
    }

    #[test]
    fn fresh_operation_scores_below_trained_one() {
        let s = shape(5, 3);
        let stage = SearchSpaceStage::full(s.clone());
        let mut net = SurrogateSupernet::new(s.clone(), 2, SupernetParams::default()).unwrap();
        let trained = Architecture::decode("0:0,1:0|2:0,0:0", &stage).unwrap();
        for _ in 0..20 {
            net.train_step(&trained).unwrap();
        }
        // op 2 has never been trained anywhere
        let with_new = Architecture::decode("0:2,1:0|2:0,0:0", &stage).unwrap();
        let gap = net.noiseless(&trained).unwrap() - net.noiseless(&with_new).unwrap();
        assert!((gap - net.proficiency(0, 0, 0, 0) / 4.0).abs() < 1e-12);
        assert!(gap > 0.0);
    }

    #[test]
    fn favored_operation_dominates_ceilings() {
        let s = shape(6, 4);
        let net = SurrogateSupernet::new(
            s.clone(),
            5,
            SupernetParams {
                favored_op: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(net.optimum().edges().all(|(_, _, _, e)| e.op == 3));
        assert!(net.optimum_within(3).edges().all(|(_, _, _, e)| e.op < 3));
        assert!(SurrogateSupernet::new(
            s,
            5,
            SupernetParams {
                favored_op: Some(4),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn tabular_round_trip_and_lookup() {
        let s = shape(4, 2);
        let stage = SearchSpaceStage::full(s.clone());
        let planted = PlantedLandscape::random(s, 7, noiseless_params()).unwrap();
        let table = TabularOracle::tabulate(&stage, 100, "planted seed 7", |a| planted.noiseless(a)).unwrap();
        assert_eq!(table.len(), 16);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        table.save(&path).unwrap();
        let back = TabularOracle::load(&path).unwrap();
        assert_eq!(back, table);
        let best = table
            .entries()
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k.clone())
            .unwrap();
        assert_eq!(best, planted.planted().encode());

        let mut small = table.entries().clone();
        small.remove(&best);
        let partial = TabularOracle::new(table.shape().clone(), "", small).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            partial.evaluate(planted.planted(), &mut rng),
            Err(Error::UnknownArchitecture(_))
        ));
    }

    #[test]
    fn tabular_rejects_bad_files() {
        assert!(TabularOracle::parse("0:0,1:0\t0.5\n").is_err());
        let header = "shape B=4 G=1 K=2 ops=sep_conv_3x3,sep_conv_5x5\n";
        assert!(TabularOracle::parse(&format!("{header}0:0,1:0 0.5\n")).is_err());
        assert!(TabularOracle::parse(&format!("{header}0:0,1:x\t0.5\n")).is_err());
        assert!(TabularOracle::parse(&format!("{header}0:7,1:0\t0.5\n")).is_err());
        assert!(TabularOracle::parse(&format!("{header}0:1,1:0\tabc\n")).is_err());
        assert_eq!(
            TabularOracle::parse(&format!("{header}0:1,1:0\t0.5\n")).unwrap().len(),
            1
        );
    }
}
