//! Cell-based DAG search spaces.
//!
//! A cell has `B` nodes: two inputs (indices 0 and 1), `B - 3` intermediate
//! nodes (indices `2..B-1`) and one output node that concatenates the
//! intermediates. Every intermediate node picks two ordered `(input, op)`
//! edges from strictly earlier nodes, so the space is a product of
//! independent categorical decisions and its size has a closed form.
//!
//! Node indices are 0-based. Intermediate node `k` (0-based among the
//! intermediates) is DAG node `k + 2` and may read from any node in
//! `0..k + 2`.
//!
//! The canonical text encoding is
//!
//! ```text
//! arch  := group ("||" group)*
//! group := node ("|" node)*
//! node  := edge "," edge
//! edge  := <input index> ":" <op index>
//! ```
//!
//! e.g. `0:1,1:0|2:1,0:0` for `B = 5`, one group.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;

use crate::error::{Error, Result};

/// The catalog used when an operation list is not given explicitly.
pub const DEFAULT_OPERATIONS: [(&str, bool); 8] = [
    ("sep_conv_3x3", true),
    ("sep_conv_5x5", true),
    ("max_pool_3x3", false),
    ("avg_pool_3x3", false),
    ("dil_conv_3x3", true),
    ("dil_conv_5x5", true),
    ("identity", false),
    ("none", false),
];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OperationSpec {
    pub id: String,
    /// Whether the operation carries trainable weights.
    pub has_params: bool,
}

impl OperationSpec {
    pub fn new(id: impl Into<String>, has_params: bool) -> Self {
        Self {
            id: id.into(),
            has_params,
        }
    }

    /// Looks an id up in the default catalog. Ids outside the catalog are
    /// treated as parameterized.
    pub fn from_catalog(id: &str) -> Self {
        let has_params = DEFAULT_OPERATIONS
            .iter()
            .find(|(name, _)| *name == id)
            .is_none_or(|&(_, p)| p);
        Self::new(id, has_params)
    }
}

pub fn default_catalog() -> Vec<OperationSpec> {
    DEFAULT_OPERATIONS
        .iter()
        .map(|&(id, p)| OperationSpec::new(id, p))
        .collect()
}

/// Node count, cell group count and the ordered operation list of a space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceShape {
    total_nodes: usize,
    cell_groups: usize,
    operations: Vec<OperationSpec>,
}

impl SpaceShape {
    pub fn new(total_nodes: usize, cell_groups: usize, operations: Vec<OperationSpec>) -> Result<Self> {
        if total_nodes < 4 {
            return Err(Error::InvalidSpace(format!(
                "a cell needs at least 4 nodes, got B={total_nodes}"
            )));
        }
        if cell_groups == 0 {
            return Err(Error::InvalidSpace("cell_groups must be positive".into()));
        }
        if operations.is_empty() {
            return Err(Error::InvalidSpace("operation list is empty".into()));
        }
        for (i, op) in operations.iter().enumerate() {
            if op.id.is_empty() {
                return Err(Error::InvalidSpace(format!("operation {i} has an empty id")));
            }
            if op.id.contains([',', ' ', '\t', '\n']) {
                return Err(Error::InvalidSpace(format!(
                    "operation id {:?} contains a separator",
                    op.id
                )));
            }
            if operations[..i].iter().any(|o| o.id == op.id) {
                return Err(Error::InvalidSpace(format!("duplicate operation {:?}", op.id)));
            }
        }
        if !operations[0].has_params {
            return Err(Error::InvalidSpace(format!(
                "first operation {:?} has no parameters",
                operations[0].id
            )));
        }
        Ok(Self {
            total_nodes,
            cell_groups,
            operations,
        })
    }

    /// A shape using the first `k` operations of the default catalog. For
    /// `k > 8` the list is padded with `op8`, `op9`, ...
    pub fn with_catalog(total_nodes: usize, cell_groups: usize, k: usize) -> Result<Self> {
        let mut ops: Vec<OperationSpec> = default_catalog().into_iter().take(k).collect();
        for n in ops.len()..k {
            ops.push(OperationSpec::new(format!("op{n}"), true));
        }
        Self::new(total_nodes, cell_groups, ops)
    }

    pub fn total_nodes(&self) -> usize {
        self.total_nodes
    }

    pub fn cell_groups(&self) -> usize {
        self.cell_groups
    }

    pub fn operations(&self) -> &[OperationSpec] {
        &self.operations
    }

    /// `K`, the length of the operation list.
    pub fn num_ops(&self) -> usize {
        self.operations.len()
    }

    pub fn intermediate_nodes(&self) -> usize {
        self.total_nodes - 3
    }

    pub fn edges_per_group(&self) -> usize {
        2 * self.intermediate_nodes()
    }

    pub fn total_edges(&self) -> usize {
        self.cell_groups * self.edges_per_group()
    }

    pub fn op_index(&self, id: &str) -> Option<usize> {
        self.operations.iter().position(|o| o.id == id)
    }

    /// Same groups and operations, different node count.
    pub fn with_total_nodes(&self, total_nodes: usize) -> Result<Self> {
        Self::new(total_nodes, self.cell_groups, self.operations.clone())
    }

    /// The operations rearranged so that entry `j` is `self.operations[order[j]]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.num_ops())?;
        let ops = order.iter().map(|&j| self.operations[j].clone()).collect();
        Self::new(self.total_nodes, self.cell_groups, ops)
    }

    /// `B=<int> G=<int> K=<int> ops=<comma list>`.
    pub fn descriptor(&self) -> String {
        let ops: Vec<&str> = self.operations.iter().map(|o| o.id.as_str()).collect();
        format!(
            "B={} G={} K={} ops={}",
            self.total_nodes,
            self.cell_groups,
            self.num_ops(),
            ops.join(",")
        )
    }

    pub fn parse_descriptor(text: &str) -> Result<Self> {
        let mut b = None;
        let mut g = None;
        let mut k = None;
        let mut ops = None;
        for token in text.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad shape token {token:?}")))?;
            let num = || {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad integer in {token:?}")))
            };
            match key {
                "B" => b = Some(num()?),
                "G" => g = Some(num()?),
                "K" => k = Some(num()?),
                "ops" => ops = Some(value.split(',').map(OperationSpec::from_catalog).collect::<Vec<_>>()),
                _ => return Err(Error::Parse(format!("unknown shape key {key:?}"))),
            }
        }
        let missing = |name: &str| Error::Parse(format!("shape descriptor lacks {name}"));
        let (b, g, k, ops) = (
            b.ok_or_else(|| missing("B"))?,
            g.ok_or_else(|| missing("G"))?,
            k.ok_or_else(|| missing("K"))?,
            ops.ok_or_else(|| missing("ops"))?,
        );
        if ops.len() != k {
            return Err(Error::Parse(format!("K={k} but {} operations listed", ops.len())));
        }
        Self::new(b, g, ops)
    }

    /// Decision slots in canonical order: per group, per intermediate node,
    /// `input0, op0, input1, op1`.
    pub fn decision_slots(&self) -> impl Iterator<Item = DecisionSlot> + '_ {
        let nodes = self.intermediate_nodes();
        (0..self.cell_groups).flat_map(move |group| {
            (0..nodes).flat_map(move |node| {
                (0..2).flat_map(move |edge| {
                    [DecisionKind::Input, DecisionKind::Operation]
                        .into_iter()
                        .map(move |kind| DecisionSlot {
                            group,
                            node,
                            edge,
                            kind,
                        })
                })
            })
        })
    }

    pub fn num_decisions(&self) -> usize {
        4 * self.cell_groups * self.intermediate_nodes()
    }

    /// Checks group count, node count and index ranges against the full
    /// operation list.
    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        self.validate_prefix(arch)?;
        if arch.intermediate_nodes() != self.intermediate_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "architecture has {} intermediate nodes, shape has {}",
                arch.intermediate_nodes(),
                self.intermediate_nodes()
            )));
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but accepts architectures using
    /// only the first few intermediate nodes.
    pub fn validate_prefix(&self, arch: &Architecture) -> Result<()> {
        if arch.cell_groups() != self.cell_groups {
            return Err(Error::ShapeMismatch(format!(
                "architecture has {} cell groups, shape has {}",
                arch.cell_groups(),
                self.cell_groups
            )));
        }
        if arch.intermediate_nodes() > self.intermediate_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "architecture has {} intermediate nodes, shape has {}",
                arch.intermediate_nodes(),
                self.intermediate_nodes()
            )));
        }
        for (_, _, _, e) in arch.edges() {
            if e.op >= self.num_ops() {
                return Err(Error::ShapeMismatch(format!(
                    "operation index {} outside the {} operations of the shape",
                    e.op,
                    self.num_ops()
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::Config(format!(
            "operation order has {} entries, expected {n}",
            order.len()
        )));
    }
    for &j in order {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return Err(Error::Config(format!("operation order {order:?} is not a permutation")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecisionKind {
    Input,
    Operation,
}

/// One categorical decision of the flattened decision sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DecisionSlot {
    pub group: usize,
    /// Intermediate node, 0-based among intermediates.
    pub node: usize,
    /// 0 or 1.
    pub edge: usize,
    pub kind: DecisionKind,
}

impl DecisionSlot {
    /// Number of admissible predecessors of this slot's node.
    pub fn input_choices(&self) -> usize {
        self.node + 2
    }
}

/// `Ω_i`: a shape restricted to its first `active_ops` operations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SearchSpaceStage {
    shape: SpaceShape,
    active_ops: usize,
}

impl SearchSpaceStage {
    pub fn new(shape: SpaceShape, active_ops: usize) -> Result<Self> {
        if active_ops == 0 || active_ops > shape.num_ops() {
            return Err(Error::InvalidSpace(format!(
                "active_ops must be in 1..={}, got {active_ops}",
                shape.num_ops()
            )));
        }
        Ok(Self { shape, active_ops })
    }

    /// The stage admitting every operation.
    pub fn full(shape: SpaceShape) -> Self {
        let k = shape.num_ops();
        Self { shape, active_ops: k }
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn active_ops(&self) -> usize {
        self.active_ops
    }

    /// The next stage of the operation curriculum.
    pub fn widened(&self) -> Result<Self> {
        Self::new(self.shape.clone(), self.active_ops + 1)
    }

    /// Number of admitted choices for a slot in this stage.
    pub fn choices(&self, slot: &DecisionSlot) -> usize {
        match slot.kind {
            DecisionKind::Input => slot.input_choices(),
            DecisionKind::Operation => self.active_ops,
        }
    }

    /// `|Ω_i| = (i^{2(B-3)} ((B-2)!)^2)^G`, exactly.
    pub fn space_size(&self) -> BigUint {
        let b = self.shape.total_nodes;
        let ops = BigUint::from(self.active_ops).pow(2 * (b as u32 - 3));
        let factorial: BigUint = (2..=b - 2).map(BigUint::from).product();
        let per_group = ops * &factorial * &factorial;
        per_group.pow(self.shape.cell_groups as u32)
    }

    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        self.shape.validate(arch).map_err(|e| match e {
            Error::ShapeMismatch(m) => Error::Validation(m),
            other => other,
        })?;
        if let Some((_, _, _, e)) = arch.edges().find(|(_, _, _, e)| e.op >= self.active_ops) {
            return Err(Error::Validation(format!(
                "operation index {} not admitted at a stage with {} active operations",
                e.op, self.active_ops
            )));
        }
        Ok(())
    }

    /// Every architecture of the stage, lexicographic over the decision
    /// sequence (last slot varies fastest).
    pub fn enumerate(&self, limit: u64) -> Result<Vec<Architecture>> {
        let size = self.space_size();
        if size > BigUint::from(limit) {
            return Err(Error::SpaceTooLarge {
                size: size.to_string(),
                limit,
            });
        }
        let radices: Vec<usize> = self.shape.decision_slots().map(|s| self.choices(&s)).collect();
        let count = size.to_usize().expect("bounded by limit");
        let mut out = Vec::with_capacity(count);
        let mut digits = vec![0usize; radices.len()];
        loop {
            out.push(Architecture::from_decisions(&self.shape, &digits));
            let mut pos = radices.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < radices[pos] {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }

    /// Draws every decision independently and uniformly.
    pub fn uniform_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Architecture {
        let digits: Vec<usize> = self
            .shape
            .decision_slots()
            .map(|s| rng.random_range(0..self.choices(&s)))
            .collect();
        Architecture::from_decisions(&self.shape, &digits)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub input: usize,
    pub op: usize,
}

impl Edge {
    pub fn new(input: usize, op: usize) -> Self {
        Self { input, op }
    }
}

/// A concrete cell assignment: `groups[g][k]` holds the two ordered edges
/// of intermediate node `k` in cell group `g`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Architecture {
    groups: Vec<Vec<[Edge; 2]>>,
}

impl Architecture {
    /// Checks that groups are non-empty, equally sized and acyclic.
    pub fn new(groups: Vec<Vec<[Edge; 2]>>) -> Result<Self> {
        let nodes = groups.first().map_or(0, Vec::len);
        if nodes == 0 {
            return Err(Error::Validation("architecture has no intermediate nodes".into()));
        }
        for (g, group) in groups.iter().enumerate() {
            if group.len() != nodes {
                return Err(Error::Validation(format!(
                    "cell group {g} has {} nodes, group 0 has {nodes}",
                    group.len()
                )));
            }
            for (k, pair) in group.iter().enumerate() {
                for e in pair {
                    if e.input >= k + 2 {
                        return Err(Error::Validation(format!(
                            "node {} of group {g} reads from node {}, which is not earlier",
                            k + 2,
                            e.input
                        )));
                    }
                }
            }
        }
        Ok(Self { groups })
    }

    /// Builds an architecture from decision values in slot order.
    pub(crate) fn from_decisions(shape: &SpaceShape, values: &[usize]) -> Self {
        Self::from_decisions_with_nodes(shape.cell_groups(), shape.intermediate_nodes(), values)
    }

    pub(crate) fn from_decisions_with_nodes(groups: usize, nodes: usize, values: &[usize]) -> Self {
        debug_assert_eq!(values.len(), 4 * groups * nodes);
        let mut chunks = values.chunks_exact(4);
        let groups = (0..groups)
            .map(|_| {
                (0..nodes)
                    .map(|_| {
                        let c = chunks.next().expect("length checked");
                        [Edge::new(c[0], c[1]), Edge::new(c[2], c[3])]
                    })
                    .collect()
            })
            .collect();
        Self { groups }
    }

    /// Decision values in slot order; the inverse of the shape's slot layout.
    pub fn decisions(&self) -> Vec<usize> {
        self.groups
            .iter()
            .flatten()
            .flat_map(|[a, b]| [a.input, a.op, b.input, b.op])
            .collect()
    }

    pub fn groups(&self) -> &[Vec<[Edge; 2]>] {
        &self.groups
    }

    pub fn cell_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn intermediate_nodes(&self) -> usize {
        self.groups[0].len()
    }

    pub fn num_edges(&self) -> usize {
        2 * self.cell_groups() * self.intermediate_nodes()
    }

    /// `(group, node, edge slot, edge)` in canonical order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize, Edge)> + '_ {
        self.groups.iter().enumerate().flat_map(|(g, group)| {
            group
                .iter()
                .enumerate()
                .flat_map(move |(k, pair)| pair.iter().enumerate().map(move |(s, &e)| (g, k, s, e)))
        })
    }

    /// Rewrites every operation index through `f`.
    pub fn map_ops(&self, f: impl Fn(usize) -> usize) -> Self {
        let groups = self
            .groups
            .iter()
            .map(|group| {
                group
                    .iter()
                    .map(|[a, b]| [Edge::new(a.input, f(a.op)), Edge::new(b.input, f(b.op))])
                    .collect()
            })
            .collect();
        Self { groups }
    }

    /// The canonical encoding.
    pub fn encode(&self) -> String {
        self.to_string()
    }

    /// Parses the canonical encoding and validates it against `stage`.
    pub fn decode(text: &str, stage: &SearchSpaceStage) -> Result<Self> {
        let arch: Self = text.parse()?;
        stage.validate(&arch)?;
        Ok(arch)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (g, group) in self.groups.iter().enumerate() {
            if g > 0 {
                f.write_str("||")?;
            }
            for (k, [a, b]) in group.iter().enumerate() {
                if k > 0 {
                    f.write_str("|")?;
                }
                write!(f, "{}:{},{}:{}", a.input, a.op, b.input, b.op)?;
            }
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// Structural parse only; index ranges against a stage are checked by
    /// [`Architecture::decode`].
    fn from_str(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::Parse(format!("{why} in {text:?}"));
        let parse_index = |s: &str| -> Result<usize> {
            if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) {
                return Err(bad("expected a decimal index"));
            }
            s.parse().map_err(|_| bad("index out of range"))
        };
        let parse_edge = |s: &str| -> Result<Edge> {
            let (input, op) = s.split_once(':').ok_or_else(|| bad("edge without ':'"))?;
            Ok(Edge::new(parse_index(input)?, parse_index(op)?))
        };
        let mut groups = Vec::new();
        for group_text in text.split("||") {
            let mut group = Vec::new();
            for node_text in group_text.split('|') {
                let (a, b) = node_text.split_once(',').ok_or_else(|| bad("node without two edges"))?;
                group.push([parse_edge(a)?, parse_edge(b)?]);
            }
            groups.push(group);
        }
        Self::new(groups)
    }
}
