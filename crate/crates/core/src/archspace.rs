//! The architecture search space.
//!
//! An [`Architecture`] is a labeled DAG with between 2 and 8 vertices. Vertex
//! 0 is the input, the last vertex is the output, and every intermediate vertex
//! carries one of ten [`OpLabel`]s. Edges always run from a lower to a higher
//! index, so acyclicity holds by construction.
//!
//! Internally the adjacency is stored as an 8x8 bit matrix packed into a
//! `u64` (bit `i * 8 + j` is the edge `i -> j`), which keeps validity checks
//! and neighbourhood generation cheap enough for the inner loops of search.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix64, seeded};

/// Largest representable vertex count.
pub const MAX_VERTICES: usize = 8;
/// Number of operation labels.
pub const NUM_OPS: usize = 10;
/// Intermediate slots in the padded encoding.
pub const OP_SLOTS: usize = MAX_VERTICES - 2;
/// Entries in the strict upper triangle of an 8x8 matrix.
pub const TRIANGLE_LEN: usize = MAX_VERTICES * (MAX_VERTICES - 1) / 2;
/// Categories per op slot: ten labels plus "absent".
pub const OP_CATEGORIES: usize = NUM_OPS + 1;
/// Length of [`EncodedFeatures`].
pub const FEATURE_LEN: usize = TRIANGLE_LEN + OP_SLOTS * OP_CATEGORIES + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpLabel {
    #[serde(rename = "linear-prelu")]
    LinearPrelu,
    #[serde(rename = "linear-relu")]
    LinearRelu,
    #[serde(rename = "linear-relu6")]
    LinearRelu6,
    #[serde(rename = "linear-tanh")]
    LinearTanh,
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "conv-3")]
    Conv3,
    #[serde(rename = "conv-5")]
    Conv5,
    #[serde(rename = "max-pool-3")]
    MaxPool3,
    #[serde(rename = "max-pool-5")]
    MaxPool5,
    #[serde(rename = "spectral-attn")]
    SpectralAttn,
}

impl OpLabel {
    pub const ALL: [OpLabel; NUM_OPS] = [
        OpLabel::LinearPrelu,
        OpLabel::LinearRelu,
        OpLabel::LinearRelu6,
        OpLabel::LinearTanh,
        OpLabel::Linear,
        OpLabel::Conv3,
        OpLabel::Conv5,
        OpLabel::MaxPool3,
        OpLabel::MaxPool5,
        OpLabel::SpectralAttn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpLabel::LinearPrelu => "linear-prelu",
            OpLabel::LinearRelu => "linear-relu",
            OpLabel::LinearRelu6 => "linear-relu6",
            OpLabel::LinearTanh => "linear-tanh",
            OpLabel::Linear => "linear",
            OpLabel::Conv3 => "conv-3",
            OpLabel::Conv5 => "conv-5",
            OpLabel::MaxPool3 => "max-pool-3",
            OpLabel::MaxPool5 => "max-pool-5",
            OpLabel::SpectralAttn => "spectral-attn",
        }
    }

    /// True for the five fully-connected labels.
    pub fn is_linear(self) -> bool {
        self.index() <= OpLabel::Linear.index()
    }
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| Error::MalformedArchitecture(format!("unknown operation label {s:?}")))
    }
}

/// Size parameters of the search space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceLimits {
    pub max_vertices: usize,
    pub num_ops: usize,
}

impl Default for SpaceLimits {
    fn default() -> Self {
        Self {
            max_vertices: MAX_VERTICES,
            num_ops: NUM_OPS,
        }
    }
}

impl SpaceLimits {
    pub fn new(max_vertices: usize, num_ops: usize) -> Result<Self> {
        let limits = Self {
            max_vertices,
            num_ops,
        };
        limits.check()?;
        Ok(limits)
    }

    pub fn check(&self) -> Result<()> {
        if self.max_vertices < 2 {
            return Err(Error::InvalidLimits(format!(
                "max_vertices must be at least 2, got {}",
                self.max_vertices
            )));
        }
        if self.num_ops < 1 {
            return Err(Error::InvalidLimits("num_ops must be at least 1".into()));
        }
        Ok(())
    }

    /// Limits that can be materialised as [`Architecture`] values.
    pub fn check_representable(&self) -> Result<()> {
        self.check()?;
        if self.max_vertices > MAX_VERTICES || self.num_ops > NUM_OPS {
            return Err(Error::InvalidLimits(format!(
                "architectures support at most {MAX_VERTICES} vertices and {NUM_OPS} operations, got ({}, {})",
                self.max_vertices, self.num_ops
            )));
        }
        Ok(())
    }
}

#[inline]
const fn bit(i: usize, j: usize) -> u64 {
    1u64 << (i * MAX_VERTICES + j)
}

/// Triangle position of the pair `(i, j)` with `i < j < 8`, row-major.
#[inline]
pub const fn triangle_index(i: usize, j: usize) -> usize {
    i * (2 * MAX_VERTICES - i - 1) / 2 + (j - i - 1)
}

/// A labeled DAG in the search space.
///
/// Unused op slots are normalised so that derived equality and hashing only
/// see the meaningful part of the value.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Architecture {
    vertices: u8,
    adjacency: u64,
    ops: [OpLabel; OP_SLOTS],
}

const PAD_OP: OpLabel = OpLabel::LinearPrelu;

impl Architecture {
    /// Builds an architecture, rejecting anything that is not representable
    /// (vertex count outside `[2, 8]`, backward or out-of-range edges, wrong
    /// number of labels). Structural validity is checked by [`validate`].
    pub fn from_parts(vertices: usize, edges: &[(usize, usize)], ops: &[OpLabel]) -> Result<Self> {
        if !(2..=MAX_VERTICES).contains(&vertices) {
            return Err(Error::MalformedArchitecture(format!(
                "vertex count {vertices} outside [2, {MAX_VERTICES}]"
            )));
        }
        if ops.len() != vertices - 2 {
            return Err(Error::MalformedArchitecture(format!(
                "expected {} operation labels for {vertices} vertices, got {}",
                vertices - 2,
                ops.len()
            )));
        }
        let mut adjacency = 0u64;
        for &(i, j) in edges {
            if i >= j || j >= vertices {
                return Err(Error::MalformedArchitecture(format!(
                    "edge ({i}, {j}) must satisfy i < j < {vertices}"
                )));
            }
            adjacency |= bit(i, j);
        }
        let mut slots = [PAD_OP; OP_SLOTS];
        slots[..ops.len()].copy_from_slice(ops);
        Ok(Self {
            vertices: vertices as u8,
            adjacency,
            ops: slots,
        })
    }

    /// Like [`from_parts`](Self::from_parts) but also requires validity.
    pub fn new(vertices: usize, edges: &[(usize, usize)], ops: &[OpLabel]) -> Result<Self> {
        let arch = Self::from_parts(vertices, edges, ops)?;
        let report = validate(&arch);
        if !report.ok {
            return Err(Error::InvalidArchitecture(report.to_string()));
        }
        Ok(arch)
    }

    /// The single 2-vertex architecture.
    pub fn minimal() -> Self {
        Self {
            vertices: 2,
            adjacency: bit(0, 1),
            ops: [PAD_OP; OP_SLOTS],
        }
    }

    /// The complete DAG on `vertices` vertices with every label set to `op`.
    pub fn complete(vertices: usize, op: OpLabel) -> Result<Self> {
        let edges: Vec<_> = (0..vertices)
            .flat_map(|i| (i + 1..vertices).map(move |j| (i, j)))
            .collect();
        Self::from_parts(vertices, &edges, &vec![op; vertices.saturating_sub(2)])
    }

    /// The chain `0 -> 1 -> ... -> v-1` with the given labels.
    pub fn chain(ops: &[OpLabel]) -> Result<Self> {
        let v = ops.len() + 2;
        let edges: Vec<_> = (0..v - 1).map(|i| (i, i + 1)).collect();
        Self::from_parts(v, &edges, ops)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices as usize
    }

    pub fn output_vertex(&self) -> usize {
        self.num_vertices() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.count_ones() as usize
    }

    /// Labels of vertices `1..v-1`.
    pub fn ops(&self) -> &[OpLabel] {
        &self.ops[..self.num_vertices() - 2]
    }

    /// Label of intermediate vertex `k`.
    pub fn op(&self, k: usize) -> OpLabel {
        assert!(k >= 1 && k + 1 < self.num_vertices(), "vertex {k} is not intermediate");
        self.ops[k - 1]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < j && j < self.num_vertices() && self.adjacency & bit(i, j) != 0
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        let mut bits = self.adjacency;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            out.push((b / MAX_VERTICES, b % MAX_VERTICES));
            bits &= bits - 1;
        }
        out
    }

    /// Predecessors of `k` in ascending order.
    pub fn predecessors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..k).filter(move |&i| self.adjacency & bit(i, k) != 0)
    }

    /// Successors of `k` in ascending order.
    pub fn successors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (k + 1..self.num_vertices()).filter(move |&j| self.adjacency & bit(k, j) != 0)
    }

    fn in_mask(&self, k: usize) -> u8 {
        (0..k).fold(0u8, |m, i| if self.adjacency & bit(i, k) != 0 { m | 1 << i } else { m })
    }

    fn out_mask(&self, k: usize) -> u8 {
        ((self.adjacency >> (k * MAX_VERTICES)) & 0xFF) as u8
    }

    fn is_valid(&self) -> bool {
        let (reach, coreach) = self.reachability();
        let all = ((1u16 << self.num_vertices()) - 1) as u8;
        reach == all && coreach == all
    }

    /// Bit masks of vertices reachable from the input and co-reachable to the output.
    fn reachability(&self) -> (u8, u8) {
        let v = self.num_vertices();
        let mut reach = 1u8;
        for j in 1..v {
            if self.in_mask(j) & reach != 0 {
                reach |= 1 << j;
            }
        }
        let mut coreach = 1u8 << (v - 1);
        for i in (0..v - 1).rev() {
            if self.out_mask(i) & coreach != 0 {
                coreach |= 1 << i;
            }
        }
        (reach, coreach)
    }

    fn with_toggled(&self, i: usize, j: usize) -> Self {
        Self {
            adjacency: self.adjacency ^ bit(i, j),
            ..*self
        }
    }

    fn with_label(&self, k: usize, op: OpLabel) -> Self {
        let mut next = *self;
        next.ops[k - 1] = op;
        next
    }

    /// Inserts a new intermediate vertex just before the output, fed by `source`
    /// and feeding the output.
    /// With `split`, an existing `source -> output` edge is replaced by the
    /// path through the new vertex.
    fn with_vertex_appended(&self, source: usize, op: OpLabel, split: bool) -> Self {
        let v = self.num_vertices();
        let old_out = v - 1;
        let mut adjacency = 0u64;
        for (i, j) in self.edges() {
            if split && i == source && j == old_out {
                continue;
            }
            let j = if j == old_out { v } else { j };
            adjacency |= bit(i, j);
        }
        adjacency |= bit(source, v - 1) | bit(v - 1, v);
        let mut ops = self.ops;
        ops[v - 2] = op;
        Self {
            vertices: (v + 1) as u8,
            adjacency,
            ops,
        }
    }

    /// Removes intermediate vertex `k`, bridging each predecessor to each successor.
    fn with_vertex_contracted(&self, k: usize) -> Self {
        let v = self.num_vertices();
        let remap = |x: usize| if x > k { x - 1 } else { x };
        let mut adjacency = 0u64;
        for (i, j) in self.edges() {
            if i != k && j != k {
                adjacency |= bit(remap(i), remap(j));
            }
        }
        for p in self.predecessors(k) {
            for s in self.successors(k) {
                adjacency |= bit(remap(p), remap(s));
            }
        }
        let mut ops = [PAD_OP; OP_SLOTS];
        let mut w = 0;
        for (idx, &op) in self.ops().iter().enumerate() {
            if idx + 1 != k {
                ops[w] = op;
                w += 1;
            }
        }
        Self {
            vertices: (v - 1) as u8,
            adjacency,
            ops,
        }
    }

    /// Injective 55-bit packing: vertex count, triangle bits, 4-bit labels.
    pub fn pack(&self) -> u64 {
        let mut packed = (self.num_vertices() - 2) as u64;
        for (i, j) in self.edges() {
            packed |= 1u64 << (3 + triangle_index(i, j));
        }
        for (slot, op) in self.ops().iter().enumerate() {
            packed |= (op.index() as u64) << (3 + TRIANGLE_LEN + 4 * slot);
        }
        packed
    }

    /// Inverse of [`pack`](Self::pack).
    pub fn unpack(packed: u64) -> Result<Self> {
        let v = (packed & 0b111) as usize + 2;
        let mut edges = Vec::new();
        for i in 0..MAX_VERTICES {
            for j in i + 1..MAX_VERTICES {
                if packed >> (3 + triangle_index(i, j)) & 1 == 1 {
                    edges.push((i, j));
                }
            }
        }
        let ops = (0..v - 2)
            .map(|slot| {
                let idx = (packed >> (3 + TRIANGLE_LEN + 4 * slot)) & 0xF;
                OpLabel::from_index(idx as usize)
                    .ok_or_else(|| Error::MalformedArchitecture(format!("bad packed label {idx}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(v, &edges, &ops)
    }
}

impl fmt::Debug for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Architecture")
            .field("v", &self.num_vertices())
            .field("edges", &self.edges())
            .field("ops", &self.ops())
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchitectureJson {
    v: usize,
    edges: Vec<[usize; 2]>,
    ops: Vec<OpLabel>,
}

impl Serialize for Architecture {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ArchitectureJson {
            v: self.num_vertices(),
            edges: self.edges().into_iter().map(|(i, j)| [i, j]).collect(),
            ops: self.ops().to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Architecture {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = ArchitectureJson::deserialize(deserializer)?;
        let edges: Vec<_> = raw.edges.iter().map(|e| (e[0], e[1])).collect();
        Architecture::from_parts(raw.v, &edges, &raw.ops).map_err(serde::de::Error::custom)
    }
}

/// A single structural problem found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    TooFewEdges { edges: usize, min: usize },
    Unreachable(usize),
    CannotReachOutput(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewEdges { edges, min } => write!(f, "too few edges: {edges} < {min}"),
            Violation::Unreachable(k) => write!(f, "unreachable vertex {k}"),
            Violation::CannotReachOutput(k) => write!(f, "vertex {k} cannot reach the output"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("ok");
        }
        let parts: Vec<_> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks that every vertex lies on an input-to-output path.
pub fn validate(arch: &Architecture) -> ValidityReport {
    let v = arch.num_vertices();
    let mut violations = Vec::new();
    if arch.num_edges() < v - 1 {
        violations.push(Violation::TooFewEdges {
            edges: arch.num_edges(),
            min: v - 1,
        });
    }
    let (reach, coreach) = arch.reachability();
    for k in 0..v {
        if reach & (1 << k) == 0 {
            violations.push(Violation::Unreachable(k));
        }
    }
    for k in 0..v {
        if coreach & (1 << k) == 0 {
            violations.push(Violation::CannotReachOutput(k));
        }
    }
    ValidityReport {
        ok: violations.is_empty(),
        violations,
    }
}

/// Counts of valid edge sets, used for exact uniform sampling.
///
/// A forward-only DAG has every vertex on an input-to-output path exactly when
/// every non-input vertex has an in-edge and every non-output vertex has an
/// out-edge. The table walks the columns of the adjacency matrix; each column
/// needs a non-empty predecessor set and the state tracks which rows already
/// have an out-edge.
struct EdgeSetTable {
    vertices: usize,
    max_edges: usize,
    masks: usize,
    counts: Vec<u64>,
}

impl EdgeSetTable {
    fn build(vertices: usize) -> Self {
        let max_edges = vertices * (vertices - 1) / 2;
        let rows = vertices - 1;
        let masks = 1usize << rows;
        let full = masks - 1;
        let stride = max_edges + 1;
        let mut counts = vec![0u64; (vertices + 1) * masks * stride];
        let idx = |col: usize, cov: usize, r: usize| (col * masks + cov) * stride + r;
        counts[idx(vertices, full, 0)] = 1;
        for col in (1..vertices).rev() {
            for cov in 0..masks {
                for r in 0..=max_edges {
                    let mut total = 0u64;
                    for subset in 1usize..(1 << col) {
                        let k = subset.count_ones() as usize;
                        if k <= r {
                            total += counts[idx(col + 1, cov | subset, r - k)];
                        }
                    }
                    counts[idx(col, cov, r)] = total;
                }
            }
        }
        Self {
            vertices,
            max_edges,
            masks,
            counts,
        }
    }

    fn count(&self, col: usize, cov: usize, r: usize) -> u64 {
        self.counts[(col * self.masks + cov) * (self.max_edges + 1) + r]
    }

    fn valid_sets(&self, edges: usize) -> u64 {
        if edges > self.max_edges {
            0
        } else {
            self.count(1, 0, edges)
        }
    }

    fn sample<R: Rng + ?Sized>(&self, edges: usize, rng: &mut R) -> Result<u64> {
        let v = self.vertices;
        if self.valid_sets(edges) == 0 {
            return Err(Error::SamplingExhausted { vertices: v, edges });
        }
        let mut cov = 0usize;
        let mut remaining = edges;
        let mut adjacency = 0u64;
        for col in 1..v {
            let mut x = rng.gen_range(0..self.count(col, cov, remaining));
            let mut chosen = None;
            for subset in 1usize..(1 << col) {
                let k = subset.count_ones() as usize;
                if k > remaining {
                    continue;
                }
                let c = self.count(col + 1, cov | subset, remaining - k);
                if x < c {
                    chosen = Some(subset);
                    break;
                }
                x -= c;
            }
            let subset = chosen.ok_or(Error::SamplingExhausted { vertices: v, edges })?;
            for i in 0..col {
                if subset & (1 << i) != 0 {
                    adjacency |= bit(i, col);
                }
            }
            cov |= subset;
            remaining -= subset.count_ones() as usize;
        }
        Ok(adjacency)
    }
}

fn edge_table(vertices: usize) -> &'static EdgeSetTable {
    #[allow(clippy::declare_interior_mutable_const)]
    const EMPTY: OnceLock<EdgeSetTable> = OnceLock::new();
    static TABLES: [OnceLock<EdgeSetTable>; MAX_VERTICES + 1] = [EMPTY; MAX_VERTICES + 1];
    TABLES[vertices].get_or_init(|| EdgeSetTable::build(vertices))
}

/// Number of valid edge sets with exactly `edges` edges on `vertices` vertices.
pub fn count_valid_edge_sets(vertices: usize, edges: usize) -> u64 {
    assert!((2..=MAX_VERTICES).contains(&vertices));
    edge_table(vertices).valid_sets(edges)
}

/// Samples an architecture with a fixed vertex count: edge count uniform over
/// `[v-1, v(v-1)/2]`, then an edge set uniform among the valid ones, then
/// i.i.d. uniform labels.
pub fn sample_with_vertices<R: Rng + ?Sized>(rng: &mut R, vertices: usize, num_ops: usize) -> Result<Architecture> {
    if !(2..=MAX_VERTICES).contains(&vertices) || !(1..=NUM_OPS).contains(&num_ops) {
        return Err(Error::InvalidLimits(format!(
            "cannot sample v={vertices} with {num_ops} operations"
        )));
    }
    let max_edges = vertices * (vertices - 1) / 2;
    let edges = rng.gen_range(vertices - 1..=max_edges);
    let adjacency = edge_table(vertices).sample(edges, rng)?;
    let mut ops = [PAD_OP; OP_SLOTS];
    for slot in ops.iter_mut().take(vertices - 2) {
        *slot = OpLabel::ALL[rng.gen_range(0..num_ops)];
    }
    Ok(Architecture {
        vertices: vertices as u8,
        adjacency,
        ops,
    })
}

/// Samples with the vertex count uniform over `[2, max_vertices]`.
pub fn sample_with<R: Rng + ?Sized>(rng: &mut R, limits: &SpaceLimits) -> Result<Architecture> {
    limits.check_representable()?;
    let v = rng.gen_range(2..=limits.max_vertices);
    sample_with_vertices(rng, v, limits.num_ops)
}

/// Seeded entry point of [`sample_with`].
pub fn sample_uniform(seed: u64, limits: &SpaceLimits) -> Result<Architecture> {
    sample_with(&mut seeded(seed), limits)
}

/// All distinct valid architectures one edit away from `arch`, sorted by
/// [`canonical_hash`].
///
/// The edits are: toggle one edge, relabel one intermediate vertex, append a
/// vertex before the output (fed by one existing non-output vertex, either
/// alongside or in place of that vertex's edge to the output), and
/// contract one intermediate vertex (its predecessors are bridged to its
/// successors). Limits beyond the representable range are capped.
pub fn neighbours(arch: &Architecture, limits: &SpaceLimits) -> Vec<Architecture> {
    let v = arch.num_vertices();
    let max_v = limits.max_vertices.min(MAX_VERTICES);
    let labels = &OpLabel::ALL[..limits.num_ops.clamp(1, NUM_OPS)];
    let mut out = Vec::with_capacity(96);

    for i in 0..v {
        for j in i + 1..v {
            let candidate = arch.with_toggled(i, j);
            if candidate.is_valid() {
                out.push(candidate);
            }
        }
    }
    for k in 1..v - 1 {
        for &op in labels {
            if op != arch.op(k) {
                out.push(arch.with_label(k, op));
            }
        }
    }
    if v < max_v {
        for source in 0..v - 1 {
            let splittable = arch.has_edge(source, v - 1);
            for &op in labels {
                out.push(arch.with_vertex_appended(source, op, false));
                if splittable {
                    out.push(arch.with_vertex_appended(source, op, true));
                }
            }
        }
    }
    for k in 1..v - 1 {
        let candidate = arch.with_vertex_contracted(k);
        if candidate.is_valid() {
            out.push(candidate);
        }
    }

    out.sort_by_key(canonical_hash);
    out.dedup();
    out.retain(|c| c != arch);
    out
}

/// Deterministic 64-bit digest of the literal labeled DAG.
///
/// This is a bijective mix of [`Architecture::pack`], so distinct
/// architectures never collide.
pub fn canonical_hash(arch: &Architecture) -> u64 {
    mix64(arch.pack())
}

/// Fixed-length feature vector used by every predictor.
///
/// Layout: 28 adjacency bits (upper triangle of the padded 8x8 matrix,
/// row-major), 6 one-hot blocks of 11 categories, vertex count, edge count.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedFeatures(pub Vec<f64>);

impl EncodedFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for EncodedFeatures {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Debug for EncodedFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncodedFeatures({:?})", self.0)
    }
}

/// Position of the output vertex in the padded encoding.
pub const PADDED_OUTPUT: usize = MAX_VERTICES - 1;

/// Writes the encoding of `arch` into `out` (length [`FEATURE_LEN`]).
pub fn encode_into(arch: &Architecture, out: &mut [f64]) {
    assert_eq!(out.len(), FEATURE_LEN);
    out.fill(0.0);
    let v = arch.num_vertices();
    let padded = |k: usize| if k == v - 1 { PADDED_OUTPUT } else { k };
    for (i, j) in arch.edges() {
        out[triangle_index(padded(i), padded(j))] = 1.0;
    }
    for slot in 0..OP_SLOTS {
        let category = if slot < v - 2 { arch.ops[slot].index() } else { NUM_OPS };
        out[TRIANGLE_LEN + slot * OP_CATEGORIES + category] = 1.0;
    }
    out[FEATURE_LEN - 2] = v as f64;
    out[FEATURE_LEN - 1] = arch.num_edges() as f64;
}

pub fn encode_features(arch: &Architecture) -> EncodedFeatures {
    let mut out = vec![0.0; FEATURE_LEN];
    encode_into(arch, &mut out);
    EncodedFeatures(out)
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Exact upper bound on the number of architectures:
/// sum over v and e of C(v(v-1)/2, e) * num_ops^(v-2).
pub fn search_space_upper_bound(limits: &SpaceLimits) -> Result<BigUint> {
    limits.check()?;
    let mut total = BigUint::zero();
    for v in 2..=limits.max_vertices as u64 {
        let pairs = v * (v - 1) / 2;
        let labelings = num_traits::pow(BigUint::from(limits.num_ops), (v - 2) as usize);
        let mut edge_sets = BigUint::zero();
        for e in v - 1..=pairs {
            edge_sets += binomial(pairs, e);
        }
        total += edge_sets * labelings;
    }
    Ok(total)
}

/// One `(v, e)` cell of the brute-force enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermCell {
    pub vertices: usize,
    pub edges: usize,
    /// Every (edge subset, labeling) pair counted by the bound.
    pub term_count: u64,
    /// Pairs that pass [`validate`].
    pub valid_count: u64,
}

/// Exhaustively enumerates every (edge subset, labeling) pair for `v <= v_max`.
pub fn enumerate_terms(limits: &SpaceLimits, v_max: usize) -> Result<Vec<TermCell>> {
    if v_max > 5 {
        return Err(Error::BudgetExceeded(v_max));
    }
    if v_max > limits.max_vertices {
        return Err(Error::InvalidLimits(format!(
            "v_max {v_max} exceeds max_vertices {}",
            limits.max_vertices
        )));
    }
    limits.check_representable()?;
    let mut cells = Vec::new();
    for v in 2..=v_max {
        let pairs: Vec<(usize, usize)> = (0..v).flat_map(|i| (i + 1..v).map(move |j| (i, j))).collect();
        let labelings = limits.num_ops.pow((v - 2) as u32);
        let mut term = vec![0u64; pairs.len() + 1];
        let mut valid = vec![0u64; pairs.len() + 1];
        for subset in 0u32..(1 << pairs.len()) {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(b, _)| subset & (1 << b) != 0)
                .map(|(_, &p)| p)
                .collect();
            let e = edges.len();
            if e + 1 < v {
                continue;
            }
            for code in 0..labelings {
                let mut rest = code;
                let ops: Vec<_> = (0..v - 2)
                    .map(|_| {
                        let op = OpLabel::ALL[rest % limits.num_ops];
                        rest /= limits.num_ops;
                        op
                    })
                    .collect();
                let arch = Architecture::from_parts(v, &edges, &ops)?;
                term[e] += 1;
                if validate(&arch).ok {
                    valid[e] += 1;
                }
            }
        }
        for e in v - 1..=pairs.len() {
            cells.push(TermCell {
                vertices: v,
                edges: e,
                term_count: term[e],
                valid_count: valid[e],
            });
        }
    }
    Ok(cells)
}

/// Median neighbour count over `samples` uniform architectures.
pub fn median_neighbour_count(seed: u64, samples: usize, limits: &SpaceLimits) -> Result<usize> {
    let mut rng = seeded(seed);
    let mut counts = Vec::with_capacity(samples);
    for _ in 0..samples {
        counts.push(neighbours(&sample_with(&mut rng, limits)?, limits).len());
    }
    counts.sort_unstable();
    Ok(counts.get(samples / 2).copied().unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arch(v: usize, edges: &[(usize, usize)], ops: &[OpLabel]) -> Architecture {
        Architecture::from_parts(v, edges, ops).unwrap()
    }

    #[test]
    fn label_set_is_closed() {
        assert_eq!(OpLabel::ALL.len(), 10);
        for op in OpLabel::ALL {
            assert_eq!(op.as_str().parse::<OpLabel>().unwrap(), op);
        }
        assert!("conv-7".parse::<OpLabel>().is_err());
        assert!("Linear".parse::<OpLabel>().is_err());
    }

    #[test]
    fn validate_examples() {
        assert!(validate(&arch(2, &[(0, 1)], &[])).ok);
        let r = validate(&arch(3, &[(0, 2)], &[OpLabel::Linear]));
        assert!(!r.ok);
        assert!(r.violations.contains(&Violation::Unreachable(1)));
        assert!(r.to_string().contains("unreachable vertex 1"));
        assert!(validate(&arch(3, &[(0, 1), (1, 2), (0, 2)], &[OpLabel::Conv3])).ok);
        // vertex 1 has an in-edge but no path onwards
        let r = validate(&arch(3, &[(0, 1), (0, 2)], &[OpLabel::Conv3]));
        assert_eq!(r.violations, vec![Violation::CannotReachOutput(1)]);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(Architecture::from_parts(9, &[], &[OpLabel::Linear; 7]).is_err());
        assert!(Architecture::from_parts(3, &[(1, 0)], &[OpLabel::Linear]).is_err());
        assert!(Architecture::from_parts(3, &[(0, 3)], &[OpLabel::Linear]).is_err());
        assert!(Architecture::from_parts(3, &[(0, 1)], &[]).is_err());
        assert!(Architecture::new(3, &[(0, 2)], &[OpLabel::Linear]).is_err());
    }

    #[test]
    fn json_form() {
        let a = arch(3, &[(1, 2), (0, 1)], &[OpLabel::MaxPool3]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"v":3,"edges":[[0,1],[1,2]],"ops":["max-pool-3"]}"#);
        let back: Architecture = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Architecture>(r#"{"v":3,"edges":[[0,1]],"ops":["nope"]}"#).is_err());
        assert!(serde_json::from_str::<Architecture>(r#"{"v":2,"edges":[[0,1]],"ops":[],"x":1}"#).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let limits = SpaceLimits::default();
        for seed in 0..20 {
            assert_eq!(sample_uniform(seed, &limits).unwrap(), sample_uniform(seed, &limits).unwrap());
        }
        let two = SpaceLimits::new(2, 10).unwrap();
        for seed in 0..10 {
            assert_eq!(sample_uniform(seed, &two).unwrap(), Architecture::minimal());
        }
    }

    #[test]
    fn sparse_edge_counts_are_sampled() {
        // only the chain is valid with v-1 edges
        let mut rng = seeded(3);
        for v in 2..=8 {
            assert_eq!(count_valid_edge_sets(v, v - 1), 1);
            let adj = edge_table(v).sample(v - 1, &mut rng).unwrap();
            let a = Architecture {
                vertices: v as u8,
                adjacency: adj,
                ops: [PAD_OP; OP_SLOTS],
            };
            assert_eq!(a.edges(), (0..v - 1).map(|i| (i, i + 1)).collect::<Vec<_>>());
        }
        assert_eq!(count_valid_edge_sets(3, 2), 1);
        assert_eq!(count_valid_edge_sets(3, 3), 1);
        assert_eq!(count_valid_edge_sets(8, 28), 1);
    }

    #[test]
    fn edge_table_matches_brute_force() {
        for v in 2..=5 {
            let pairs: Vec<(usize, usize)> = (0..v).flat_map(|i| (i + 1..v).map(move |j| (i, j))).collect();
            let mut by_e = vec![0u64; pairs.len() + 1];
            for subset in 0u32..(1 << pairs.len()) {
                let edges: Vec<_> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| subset & (1 << b) != 0)
                    .map(|(_, &p)| p)
                    .collect();
                if validate(&arch(v, &edges, &vec![OpLabel::Linear; v - 2])).ok {
                    by_e[edges.len()] += 1;
                }
            }
            for (e, &n) in by_e.iter().enumerate() {
                assert_eq!(count_valid_edge_sets(v, e), n, "v={v} e={e}");
            }
        }
    }

    #[test]
    fn edge_sets_are_uniform_among_valid() {
        // v=4, e=4: enumerate the valid sets and check sampled frequencies
        let n_valid = count_valid_edge_sets(4, 4) as usize;
        let mut rng = seeded(11);
        let mut hits = std::collections::HashMap::new();
        let draws = 20_000;
        for _ in 0..draws {
            *hits.entry(edge_table(4).sample(4, &mut rng).unwrap()).or_insert(0usize) += 1;
        }
        assert_eq!(hits.len(), n_valid);
        let expected = draws as f64 / n_valid as f64;
        for &c in hits.values() {
            assert!((c as f64 - expected).abs() < 0.15 * expected, "{c} vs {expected}");
        }
    }

    #[test]
    fn minimal_has_chain_neighbours() {
        let ns = neighbours(&Architecture::minimal(), &SpaceLimits::default());
        let chains: Vec<_> = ns
            .iter()
            .filter(|a| a.num_vertices() == 3 && a.edges() == vec![(0, 1), (1, 2)])
            .collect();
        assert_eq!(chains.len(), 10);
        assert!(ns.iter().all(|a| a.num_vertices() == 3));
        // the other ten keep the input-output edge alongside the new vertex
        assert_eq!(ns.len(), 20);
    }

    #[test]
    fn neighbours_are_sorted_and_distinct() {
        let limits = SpaceLimits::default();
        let a = sample_uniform(5, &limits).unwrap();
        let ns = neighbours(&a, &limits);
        let hashes: Vec<_> = ns.iter().map(canonical_hash).collect();
        assert!(hashes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn add_vertex_respects_limits() {
        let limits = SpaceLimits::new(3, 10).unwrap();
        let chain = Architecture::chain(&[OpLabel::Linear]).unwrap();
        assert!(neighbours(&chain, &limits).iter().all(|a| a.num_vertices() <= 3));
    }

    #[test]
    fn contraction_bridges_edges() {
        let chain = Architecture::chain(&[OpLabel::Linear, OpLabel::Conv3]).unwrap();
        let c = chain.with_vertex_contracted(1);
        assert_eq!(c.num_vertices(), 3);
        assert_eq!(c.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(c.ops(), &[OpLabel::Conv3]);
    }

    #[test]
    fn hash_distinguishes_labels() {
        let a = Architecture::chain(&[OpLabel::Linear]).unwrap();
        let b = Architecture::chain(&[OpLabel::Conv3]).unwrap();
        assert_eq!(canonical_hash(&a), canonical_hash(&a.clone()));
        assert_ne!(canonical_hash(&a), canonical_hash(&b));
    }

    #[test]
    fn encoding_examples() {
        let z = encode_features(&Architecture::minimal());
        assert_eq!(z.len(), FEATURE_LEN);
        assert_eq!(FEATURE_LEN, 96);
        // (0, 1) is remapped to (0, 7), triangle position 6
        let ones: Vec<_> = (0..TRIANGLE_LEN).filter(|&i| z[i] == 1.0).collect();
        assert_eq!(ones, vec![6]);
        for slot in 0..OP_SLOTS {
            assert_eq!(z[TRIANGLE_LEN + slot * OP_CATEGORIES + NUM_OPS], 1.0);
        }
        assert_eq!((z[94], z[95]), (2.0, 1.0));

        let full = encode_features(&Architecture::complete(8, OpLabel::Conv5).unwrap());
        assert!(full[..TRIANGLE_LEN].iter().all(|&x| x == 1.0));
        assert_eq!(full[95], 28.0);
    }

    #[test]
    fn bound_examples() {
        let b = |v, o| search_space_upper_bound(&SpaceLimits::new(v, o).unwrap()).unwrap();
        assert_eq!(b(8, 10), BigUint::from(268_143_512_722_241u64));
        assert_eq!(b(2, 10), BigUint::from(1u32));
        assert_eq!(b(4, 10), BigUint::from(4_241u32));
    }

    #[test]
    fn enumeration_examples() {
        let limits = SpaceLimits::new(5, 10).unwrap();
        let cells = enumerate_terms(&limits, 3).unwrap();
        let cell = |v, e| cells.iter().find(|c| c.vertices == v && c.edges == e).unwrap().clone();
        assert_eq!((cell(2, 1).term_count, cell(2, 1).valid_count), (1, 1));
        assert_eq!((cell(3, 2).term_count, cell(3, 2).valid_count), (30, 10));
        assert!(matches!(enumerate_terms(&limits, 6), Err(Error::BudgetExceeded(6))));
    }

    #[test]
    fn pack_round_trips() {
        let limits = SpaceLimits::default();
        let mut rng = seeded(9);
        for _ in 0..500 {
            let a = sample_with(&mut rng, &limits).unwrap();
            assert_eq!(Architecture::unpack(a.pack()).unwrap(), a);
        }
    }

    fn arb_arch() -> impl Strategy<Value = Architecture> {
        any::<u64>().prop_map(|s| sample_uniform(s, &SpaceLimits::default()).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn neighbours_are_valid_and_exclude_self(a in arb_arch()) {
            let ns = neighbours(&a, &SpaceLimits::default());
            prop_assert!(!ns.contains(&a));
            for n in &ns {
                prop_assert!(validate(n).ok);
            }
        }

        #[test]
        fn toggle_and_relabel_are_symmetric(a in arb_arch()) {
            let limits = SpaceLimits::default();
            for b in neighbours(&a, &limits) {
                if b.num_vertices() == a.num_vertices() {
                    prop_assert!(neighbours(&b, &limits).contains(&a));
                }
            }
        }

        #[test]
        fn encoding_blocks_are_one_hot(a in arb_arch()) {
            let z = encode_features(&a);
            for slot in 0..OP_SLOTS {
                let block = &z[TRIANGLE_LEN + slot * OP_CATEGORIES..TRIANGLE_LEN + (slot + 1) * OP_CATEGORIES];
                prop_assert_eq!(block.iter().sum::<f64>(), 1.0);
            }
            prop_assert!(z[..TRIANGLE_LEN].iter().all(|&x| x == 0.0 || x == 1.0));
            prop_assert_eq!(z[..TRIANGLE_LEN].iter().sum::<f64>() as usize, a.num_edges());
        }
    }
}
