//! Per-node score tables for restricted order scoring.
//!
//! For node `i` with allowed parents `cands` (ascending, `m` of them) a subset
//! is encoded as an integer whose bit `k` selects `cands[k]`. Four tables are
//! kept, all in log space:
//!
//! - `score[s]`: local score of subset `s`;
//! - `banned[c]`: log-sum of `score[s]` over subsets `s` disjoint from the
//!   banned set `c`;
//! - `plus_score[s][j]`: local score of `s ∪ {plus_cands[j]}`;
//! - `plus_banned[c][j]`: the `banned` aggregate of column `j` of `plus_score`.
//!
//! An order fixes, for every node, which allowed parents come after it; those
//! form the banned set, so the restricted order score is one lookup per node.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bge::BgeScore;
use crate::error::TableError;
use crate::graph::{Edge, NodeSet, SearchSpace, TopOrder};
use crate::logspace::{log_add_exp, log_minus_exp, LogScore};

/// Widest candidate list stored as a dense table.
pub const MAX_TABLE_WIDTH: usize = 24;

/// How plus-one columns are filled when building from scratch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlusMode {
    /// One factorization per row, extended to every candidate.
    Batched,
    /// A fresh local score per entry.
    Naive,
}

/// Subset code over a node's candidate slots.
pub type SubsetCode = usize;

#[inline]
fn insert_zero_bit(code: usize, slot: usize) -> usize {
    let low = code & ((1 << slot) - 1);
    low | ((code >> slot) << (slot + 1))
}

/// In-place log-domain zeta transform over `width`-wide rows:
/// `a[mask] <- LSE { a[s] : s ⊆ mask }`.
fn subset_aggregate(a: &mut [f64], m: usize, width: usize) {
    for k in 0..m {
        let bit = 1 << k;
        for mask in 0..1usize << m {
            if mask & bit != 0 {
                let (lo, hi) = a.split_at_mut(mask * width);
                let src = &lo[(mask ^ bit) * width..(mask ^ bit) * width + width];
                for (dst, &s) in hi[..width].iter_mut().zip(src) {
                    *dst = log_add_exp(*dst, s);
                }
            }
        }
    }
}

/// Turn per-subset rows into per-banned-code aggregates.
fn banned_from_scores(score: &[f64], m: usize, width: usize) -> Vec<f64> {
    let mut agg = score.to_vec();
    subset_aggregate(&mut agg, m, width);
    // Banning `c` leaves the subsets of `full ^ c`; with `full = 2^m - 1` that
    // is a reversal of the row order.
    let rows = 1usize << m;
    let mut out = vec![0.0; agg.len()];
    for c in 0..rows {
        let src = (rows - 1 - c) * width;
        out[c * width..(c + 1) * width].copy_from_slice(&agg[src..src + width]);
    }
    out
}

mod neg_inf_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Option<f64>>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|x| x.unwrap_or(f64::NEG_INFINITY))
            .collect())
    }
}

/// Score, banned, plus and plus-banned tables for one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTables {
    node: usize,
    cands: Vec<usize>,
    #[serde(with = "neg_inf_null")]
    score: Vec<f64>,
    #[serde(with = "neg_inf_null")]
    banned: Vec<f64>,
    plus_cands: Vec<usize>,
    /// Row-major `2^m x plus_cands.len()`.
    #[serde(with = "neg_inf_null")]
    plus_score: Vec<f64>,
    #[serde(with = "neg_inf_null")]
    plus_banned: Vec<f64>,
}

/// Raw local scores for every subset code over `cands` and, row-major, the
/// plus-one scores for each of `plus_cands`.
pub fn score_rows(
    node: usize,
    cands: &[usize],
    plus_cands: &[usize],
    scorer: &BgeScore,
    mode: PlusMode,
) -> (Vec<f64>, Vec<f64>) {
    let m = cands.len();
    let q = plus_cands.len();
    let rows = 1usize << m;
    let mut score = vec![0.0; rows];
    let mut plus_score = vec![0.0; rows * q];
    match mode {
        PlusMode::Batched => {
            scorer.subset_scores(node, &[], cands, plus_cands, &mut score, &mut plus_score);
        }
        PlusMode::Naive => {
            let mut parents = Vec::with_capacity(m + 1);
            for s in 0..rows {
                parents.clear();
                parents.extend((0..m).filter(|k| s >> k & 1 == 1).map(|k| cands[k]));
                score[s] = scorer.score_list(node, &parents);
                for (c, &j) in plus_cands.iter().enumerate() {
                    parents.push(j);
                    plus_score[s * q + c] = scorer.score_list(node, &parents);
                    parents.pop();
                }
            }
        }
    }
    (score, plus_score)
}

impl NodeTables {
    pub fn build(
        node: usize,
        space: &SearchSpace,
        scorer: &BgeScore,
        mode: PlusMode,
    ) -> Result<Self, TableError> {
        let p = space.p();
        let allowed = space.allowed(node);
        if let Some(k) = space.cap() {
            if allowed.len() > k {
                return Err(TableError::CapExceeded {
                    node,
                    size: allowed.len(),
                    cap: k,
                });
            }
        }
        let cands: Vec<usize> = allowed.iter().collect();
        let m = cands.len();
        if m > MAX_TABLE_WIDTH {
            return Err(TableError::TooWide { node, m });
        }
        let plus_cands: Vec<usize> = (0..p)
            .filter(|&j| j != node && !allowed.contains(j))
            .collect();
        let (score, plus_score) = score_rows(node, &cands, &plus_cands, scorer, mode);
        Ok(Self::assemble(node, cands, score, plus_cands, plus_score))
    }

    fn assemble(
        node: usize,
        cands: Vec<usize>,
        score: Vec<f64>,
        plus_cands: Vec<usize>,
        plus_score: Vec<f64>,
    ) -> Self {
        let m = cands.len();
        let banned = banned_from_scores(&score, m, 1);
        let plus_banned = banned_from_scores(&plus_score, m, plus_cands.len());
        NodeTables {
            node,
            cands,
            score,
            banned,
            plus_cands,
            plus_score,
            plus_banned,
        }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn cands(&self) -> &[usize] {
        &self.cands
    }

    pub fn plus_cands(&self) -> &[usize] {
        &self.plus_cands
    }

    pub fn width(&self) -> usize {
        self.cands.len()
    }

    pub fn score(&self) -> &[f64] {
        &self.score
    }

    pub fn banned(&self) -> &[f64] {
        &self.banned
    }

    pub fn plus_score(&self) -> &[f64] {
        &self.plus_score
    }

    pub fn plus_banned(&self) -> &[f64] {
        &self.plus_banned
    }

    #[inline]
    pub fn banned_at(&self, code: SubsetCode) -> LogScore {
        self.banned[code]
    }

    #[inline]
    pub fn plus_banned_at(&self, code: SubsetCode, col: usize) -> LogScore {
        self.plus_banned[code * self.plus_cands.len() + col]
    }

    #[inline]
    pub fn plus_score_at(&self, code: SubsetCode, col: usize) -> LogScore {
        self.plus_score[code * self.plus_cands.len() + col]
    }

    /// Column of `j` in the plus tables.
    pub fn plus_col(&self, j: usize) -> Option<usize> {
        self.plus_cands.binary_search(&j).ok()
    }

    /// Slot of `j` among the allowed parents.
    pub fn slot(&self, j: usize) -> Option<usize> {
        self.cands.binary_search(&j).ok()
    }

    pub fn decode(&self, code: SubsetCode) -> NodeSet {
        (0..self.cands.len())
            .filter(|k| code >> k & 1 == 1)
            .map(|k| self.cands[k])
            .collect()
    }

    pub fn encode(&self, set: &NodeSet) -> Option<SubsetCode> {
        let mut code = 0;
        for j in set.iter() {
            code |= 1 << self.slot(j)?;
        }
        Some(code)
    }

    /// Allowed parents placed after this node in `o`.
    pub fn banned_code(&self, o: &TopOrder) -> SubsetCode {
        let here = o.pos(self.node);
        self.cands
            .iter()
            .enumerate()
            .filter(|(_, &j)| o.pos(j) > here)
            .fold(0, |code, (k, _)| code | 1 << k)
    }

    /// Node factor of the plus-one order score under banned code `code`:
    /// allowed subsets plus one extra parent taken from the plus candidates
    /// that precede the node.
    pub fn plus_node_logscore(&self, code: SubsetCode, o: &TopOrder) -> LogScore {
        let here = o.pos(self.node);
        let mut acc = self.banned[code];
        for (col, &j) in self.plus_cands.iter().enumerate() {
            if o.pos(j) < here {
                acc = log_add_exp(acc, self.plus_banned_at(code, col));
            }
        }
        acc
    }

    /// Tables for the space with `src -> node` added, reusing every stored
    /// score and computing only the rows that contain `src` for the remaining
    /// plus candidates.
    pub fn expand(
        &self,
        src: usize,
        scorer: &BgeScore,
        cap: Option<usize>,
    ) -> Result<NodeTables, TableError> {
        let node = self.node;
        let col_j = self
            .plus_col(src)
            .ok_or(TableError::NotACandidate { node, src })?;
        let m = self.cands.len();
        if let Some(k) = cap {
            if m + 1 > k {
                return Err(TableError::CapExceeded {
                    node,
                    size: m + 1,
                    cap: k,
                });
            }
        }
        if m + 1 > MAX_TABLE_WIDTH {
            return Err(TableError::TooWide { node, m: m + 1 });
        }
        let slot = self.cands.partition_point(|&c| c < src);
        let mut cands = self.cands.clone();
        cands.insert(slot, src);
        let q = self.plus_cands.len();
        let plus_cands: Vec<usize> = self
            .plus_cands
            .iter()
            .copied()
            .filter(|&c| c != src)
            .collect();
        let q1 = q - 1;
        let rows = 1usize << m;
        let bit = 1 << slot;
        let mut score = vec![0.0; rows << 1];
        let mut plus_score = vec![0.0; (rows << 1) * q1];
        let mut fresh = vec![0.0; rows];
        let mut fresh_plus = vec![0.0; rows * q1];
        scorer.subset_scores(
            node,
            &[src],
            &self.cands,
            &plus_cands,
            &mut fresh,
            &mut fresh_plus,
        );
        for s in 0..rows {
            let s0 = insert_zero_bit(s, slot);
            let s1 = s0 | bit;
            score[s0] = self.score[s];
            score[s1] = self.plus_score[s * q + col_j];
            let old = &self.plus_score[s * q..(s + 1) * q];
            let dst = &mut plus_score[s0 * q1..(s0 + 1) * q1];
            dst[..col_j].copy_from_slice(&old[..col_j]);
            dst[col_j..].copy_from_slice(&old[col_j + 1..]);
            plus_score[s1 * q1..(s1 + 1) * q1].copy_from_slice(&fresh_plus[s * q1..(s + 1) * q1]);
        }
        Ok(Self::assemble(node, cands, score, plus_cands, plus_score))
    }

    /// Tables for the space with `src -> node` removed. Every entry is copied
    /// from this table or derived by log-minus-exp; no local score is computed.
    pub fn contract(&self, src: usize) -> Result<NodeTables, TableError> {
        let node = self.node;
        let slot = self.slot(src).ok_or(TableError::NotAllowed { node, src })?;
        let m = self.cands.len();
        let q = self.plus_cands.len();
        let mut cands = self.cands.clone();
        cands.remove(slot);
        let cj = self.plus_cands.partition_point(|&c| c < src);
        let mut plus_cands = self.plus_cands.clone();
        plus_cands.insert(cj, src);
        let q1 = q + 1;
        let rows = 1usize << (m - 1);
        let bit = 1 << slot;
        let mut score = vec![0.0; rows];
        let mut banned = vec![0.0; rows];
        let mut plus_score = vec![0.0; rows * q1];
        let mut plus_banned = vec![0.0; rows * q1];
        let splice = |dst: &mut [f64], old: &[f64], extra: f64| {
            dst[..cj].copy_from_slice(&old[..cj]);
            dst[cj] = extra;
            dst[cj + 1..].copy_from_slice(&old[cj..]);
        };
        for s in 0..rows {
            let s0 = insert_zero_bit(s, slot);
            let s1 = s0 | bit;
            score[s] = self.score[s0];
            splice(
                &mut plus_score[s * q1..(s + 1) * q1],
                &self.plus_score[s0 * q..(s0 + 1) * q],
                self.score[s1],
            );
            // Banned code `s` over the new slots: keep `src` banned in the old table.
            banned[s] = self.banned[s1];
            let readd = log_minus_exp(self.banned[s0], self.banned[s1])?;
            splice(
                &mut plus_banned[s * q1..(s + 1) * q1],
                &self.plus_banned[s1 * q..(s1 + 1) * q],
                readd,
            );
        }
        Ok(NodeTables {
            node,
            cands,
            score,
            banned,
            plus_cands,
            plus_score,
            plus_banned,
        })
    }

    /// Largest deviation between the stored banned tables and a fresh
    /// aggregation of the stored score tables.
    pub fn aggregation_residual(&self) -> f64 {
        let m = self.cands.len();
        let fresh = banned_from_scores(&self.score, m, 1);
        let fresh_plus = banned_from_scores(&self.plus_score, m, self.plus_cands.len());
        max_abs_diff(&fresh, &self.banned).max(max_abs_diff(&fresh_plus, &self.plus_banned))
    }

    /// Largest entrywise deviation from another table for the same node and
    /// candidates (`inf` on any structural mismatch).
    pub fn max_deviation(&self, other: &NodeTables) -> f64 {
        if self.node != other.node
            || self.cands != other.cands
            || self.plus_cands != other.plus_cands
        {
            return f64::INFINITY;
        }
        [
            max_abs_diff(&self.score, &other.score),
            max_abs_diff(&self.banned, &other.banned),
            max_abs_diff(&self.plus_score, &other.plus_score),
            max_abs_diff(&self.plus_banned, &other.plus_banned),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn hash_bits<H: Hasher>(&self, h: &mut H) {
        self.node.hash(h);
        self.cands.hash(h);
        self.plus_cands.hash(h);
        for v in self
            .score
            .iter()
            .chain(&self.banned)
            .chain(&self.plus_score)
            .chain(&self.plus_banned)
        {
            v.to_bits().hash(h);
        }
    }
}

/// Max absolute difference, treating matching infinities as equal.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

/// Tables for every node of a search space.
///
/// Nodes are shared behind `Arc`, so replacing one node's tables leaves the
/// others untouched and cloning a set is cheap.
#[derive(Clone, Debug)]
pub struct TableSet {
    space: SearchSpace,
    nodes: Vec<Arc<NodeTables>>,
}

impl TableSet {
    pub fn build(space: &SearchSpace, scorer: &BgeScore) -> Result<Self, TableError> {
        Self::build_with(space, scorer, PlusMode::Batched)
    }

    pub fn build_with(
        space: &SearchSpace,
        scorer: &BgeScore,
        mode: PlusMode,
    ) -> Result<Self, TableError> {
        if scorer.p() != space.p() {
            return Err(TableError::SpaceMismatch);
        }
        let nodes = (0..space.p())
            .map(|i| NodeTables::build(i, space, scorer, mode).map(Arc::new))
            .collect::<Result<_, _>>()?;
        Ok(TableSet {
            space: space.clone(),
            nodes,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn p(&self) -> usize {
        self.space.p()
    }

    pub fn node(&self, i: usize) -> &NodeTables {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeTables> {
        self.nodes.iter().map(|n| n.as_ref())
    }

    /// Log of the restricted order score, up to the global constant.
    pub fn restricted_order_logscore(&self, o: &TopOrder) -> LogScore {
        self.nodes
            .iter()
            .map(|t| t.banned_at(t.banned_code(o)))
            .sum()
    }

    /// As [`restricted_order_logscore`](Self::restricted_order_logscore), also
    /// returning how many table entries and candidate positions were read.
    pub fn restricted_order_logscore_counted(&self, o: &TopOrder) -> (LogScore, usize) {
        let mut reads = 0;
        let mut total = 0.0;
        for t in &self.nodes {
            reads += t.width() + 1;
            total += t.banned_at(t.banned_code(o));
        }
        (total, reads)
    }

    /// Log of the plus-one relaxed order score.
    pub fn plus_order_logscore(&self, o: &TopOrder) -> LogScore {
        self.nodes
            .iter()
            .map(|t| t.plus_node_logscore(t.banned_code(o), o))
            .sum()
    }

    /// Swap in new tables for one node along with the matching space.
    pub fn replace_node(&self, tables: NodeTables, space: SearchSpace) -> TableSet {
        let mut nodes = self.nodes.clone();
        let i = tables.node();
        nodes[i] = Arc::new(tables);
        TableSet { space, nodes }
    }

    pub fn expand(&self, e: Edge, scorer: &BgeScore) -> Result<TableSet, TableError> {
        let space = self.space.add_edge(e)?;
        let t = self.nodes[e.dst].expand(e.src, scorer, self.space.cap())?;
        Ok(self.replace_node(t, space))
    }

    pub fn contract(&self, e: Edge) -> Result<TableSet, TableError> {
        let space = self.space.remove_edge(e)?;
        let t = self.nodes[e.dst].contract(e.src)?;
        Ok(self.replace_node(t, space))
    }

    /// Hash of every stored bit, for checking that a set is untouched.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.space.hash(&mut h);
        for t in &self.nodes {
            t.hash_bits(&mut h);
        }
        h.finish()
    }

    /// Largest per-node deviation from another set built for the same space.
    pub fn max_deviation(&self, other: &TableSet) -> f64 {
        if self.space != other.space {
            return f64::INFINITY;
        }
        self.nodes
            .iter()
            .zip(&other.nodes)
            .map(|(a, b)| a.max_deviation(b))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        let nodes: Vec<&NodeTables> = self.nodes.iter().map(|n| n.as_ref()).collect();
        serde_json::to_string_pretty(&nodes).expect("tables serialize")
    }

    /// Reload a dump written by [`to_json`](Self::to_json) for `space`.
    pub fn from_json(space: &SearchSpace, s: &str) -> Result<Self, TableError> {
        let nodes: Vec<NodeTables> = serde_json::from_str(s)
            .map_err(|e| TableError::Graph(crate::error::GraphError::Parse(e.to_string())))?;
        if nodes.len() != space.p()
            || nodes
                .iter()
                .enumerate()
                .any(|(i, t)| t.node != i || t.cands != space.allowed(i).iter().collect::<Vec<_>>())
        {
            return Err(TableError::SpaceMismatch);
        }
        Ok(TableSet {
            space: space.clone(),
            nodes: nodes.into_iter().map(Arc::new).collect(),
        })
    }
}
