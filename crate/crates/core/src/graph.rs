//! Graphs, topological orders and search spaces.
//!
//! Every graph is stored as one [`NodeSet`] per node: for a [`Dag`] the set
//! holds the node's parents, for a [`SearchSpace`] the parents it is allowed
//! to have. Bit `j` of the set for node `i` stands for the edge `j -> i`.

use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// Largest node count representable by a [`NodeSet`].
pub const MAX_NODES: usize = 256;

/// Largest node count accepted by the exhaustive enumeration helpers.
pub const MAX_ENUM_NODES: usize = 5;

const WORDS: usize = MAX_NODES / 64;

/// Fixed-capacity bitset over node indices `0..MAX_NODES`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct NodeSet([u64; WORDS]);

impl NodeSet {
    pub const fn empty() -> Self {
        NodeSet([0; WORDS])
    }

    pub fn singleton(i: usize) -> Self {
        let mut s = Self::empty();
        s.insert(i);
        s
    }

    /// Set holding `0..n`.
    pub fn full(n: usize) -> Self {
        let mut s = Self::empty();
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.0[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.0[i >> 6] |= 1 << (i & 63);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.0[i >> 6] &= !(1 << (i & 63));
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a & !b == 0)
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        let mut out = *self;
        out.0
            .iter_mut()
            .zip(other.0.iter())
            .for_each(|(a, b)| *a |= b);
        out
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        let mut out = *self;
        out.0
            .iter_mut()
            .zip(other.0.iter())
            .for_each(|(a, b)| *a &= b);
        out
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        let mut out = *self;
        out.0
            .iter_mut()
            .zip(other.0.iter())
            .for_each(|(a, b)| *a &= !b);
        out
    }

    /// Ascending iterator over the members.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + tz)
            })
        })
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut s = NodeSet::empty();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// A directed edge `src -> dst`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
}

impl Edge {
    pub fn new(src: usize, dst: usize) -> Result<Self, GraphError> {
        if src == dst {
            return Err(GraphError::SelfLoop(src));
        }
        Ok(Edge { src, dst })
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.src, self.dst)
    }
}

fn check_node_count(p: usize) -> Result<(), GraphError> {
    if p > MAX_NODES {
        return Err(GraphError::TooManyNodes { p, max: MAX_NODES });
    }
    Ok(())
}

fn check_enum_size(p: usize) -> Result<(), GraphError> {
    if p > MAX_ENUM_NODES {
        return Err(GraphError::EnumerationTooLarge {
            p,
            max: MAX_ENUM_NODES,
        });
    }
    Ok(())
}

fn validate_parent_sets(parents: &[NodeSet]) -> Result<(), GraphError> {
    let p = parents.len();
    check_node_count(p)?;
    let universe = NodeSet::full(p);
    for (i, pa) in parents.iter().enumerate() {
        if pa.contains(i) {
            return Err(GraphError::SelfLoop(i));
        }
        if !pa.is_subset(&universe) {
            return Err(GraphError::NodeOutOfRange {
                node: pa.iter().last().unwrap_or(0),
                p,
            });
        }
    }
    Ok(())
}

/// Kahn-style elimination: repeatedly strip nodes whose remaining parents are
/// all already stripped.
pub fn is_acyclic(parents: &[NodeSet]) -> bool {
    let p = parents.len();
    let mut removed = NodeSet::empty();
    let mut count = 0;
    loop {
        let mut progressed = false;
        for i in 0..p {
            if !removed.contains(i) && parents[i].is_subset(&removed) {
                removed.insert(i);
                count += 1;
                progressed = true;
            }
        }
        if count == p {
            return true;
        }
        if !progressed {
            return false;
        }
    }
}

/// Acyclic directed graph stored as per-node parent sets.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dag {
    parents: Vec<NodeSet>,
}

impl Dag {
    pub fn empty(p: usize) -> Self {
        Dag {
            parents: vec![NodeSet::empty(); p],
        }
    }

    pub fn from_parents(parents: Vec<NodeSet>) -> Result<Self, GraphError> {
        validate_parent_sets(&parents)?;
        if !is_acyclic(&parents) {
            return Err(GraphError::Cyclic);
        }
        Ok(Dag { parents })
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        Self::from_parents(parents_from_edges(p, edges)?)
    }

    pub(crate) fn from_parents_unchecked(parents: Vec<NodeSet>) -> Self {
        debug_assert!(is_acyclic(&parents));
        Dag { parents }
    }

    pub fn p(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, i: usize) -> &NodeSet {
        &self.parents[i]
    }

    pub fn parent_sets(&self) -> &[NodeSet] {
        &self.parents
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.parents[dst].contains(src)
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(NodeSet::len).sum()
    }

    /// Edges sorted by `(dst, src)`.
    pub fn edges(&self) -> Vec<Edge> {
        edges_of(&self.parents)
    }

    /// One topological order of the graph (smallest index first among ready nodes).
    pub fn topological_order(&self) -> TopOrder {
        let p = self.p();
        let mut placed = NodeSet::empty();
        let mut perm = Vec::with_capacity(p);
        while perm.len() < p {
            let next = (0..p)
                .find(|&i| !placed.contains(i) && self.parents[i].is_subset(&placed))
                .expect("acyclic graph always has a ready node");
            placed.insert(next);
            perm.push(next);
        }
        TopOrder::from_perm(perm).expect("valid permutation")
    }
}

impl fmt::Debug for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Dag(p={}, {:?})",
            self.p(),
            self.edges().iter().map(|e| (e.src, e.dst)).collect_vec()
        )
    }
}

fn parents_from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Vec<NodeSet>, GraphError> {
    check_node_count(p)?;
    let mut parents = vec![NodeSet::empty(); p];
    for &(s, d) in edges {
        if s >= p || d >= p {
            return Err(GraphError::NodeOutOfRange { node: s.max(d), p });
        }
        if s == d {
            return Err(GraphError::SelfLoop(s));
        }
        parents[d].insert(s);
    }
    Ok(parents)
}

fn edges_of(sets: &[NodeSet]) -> Vec<Edge> {
    sets.iter()
        .enumerate()
        .flat_map(|(dst, pa)| pa.iter().map(move |src| Edge { src, dst }))
        .collect()
}

/// Directed graph of allowed edges, optionally with an in-degree cap.
///
/// Unlike a [`Dag`] it may contain cycles (both `j -> i` and `i -> j` are
/// commonly allowed together).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SearchSpace {
    allowed: Vec<NodeSet>,
    cap: Option<usize>,
}

impl SearchSpace {
    pub fn empty(p: usize, cap: Option<usize>) -> Self {
        SearchSpace {
            allowed: vec![NodeSet::empty(); p],
            cap,
        }
    }

    /// Every off-diagonal edge allowed. Fails if `cap` is below `p - 1`.
    pub fn complete(p: usize, cap: Option<usize>) -> Result<Self, GraphError> {
        let allowed = (0..p)
            .map(|i| {
                let mut s = NodeSet::full(p);
                s.remove(i);
                s
            })
            .collect();
        Self::from_allowed(allowed, cap)
    }

    pub fn from_allowed(allowed: Vec<NodeSet>, cap: Option<usize>) -> Result<Self, GraphError> {
        validate_parent_sets(&allowed)?;
        if let Some(k) = cap {
            for (i, a) in allowed.iter().enumerate() {
                if a.len() > k {
                    return Err(GraphError::CapExceeded {
                        node: i,
                        degree: a.len(),
                        cap: k,
                    });
                }
            }
        }
        Ok(SearchSpace { allowed, cap })
    }

    pub fn from_edges(
        p: usize,
        edges: &[(usize, usize)],
        cap: Option<usize>,
    ) -> Result<Self, GraphError> {
        Self::from_allowed(parents_from_edges(p, edges)?, cap)
    }

    pub fn p(&self) -> usize {
        self.allowed.len()
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn with_cap(&self, cap: Option<usize>) -> Result<Self, GraphError> {
        Self::from_allowed(self.allowed.clone(), cap)
    }

    pub fn allowed(&self, i: usize) -> &NodeSet {
        &self.allowed[i]
    }

    pub fn allowed_sets(&self) -> &[NodeSet] {
        &self.allowed
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.allowed[e.dst].contains(e.src)
    }

    pub fn edge_count(&self) -> usize {
        self.allowed.iter().map(NodeSet::len).sum()
    }

    pub fn edges(&self) -> Vec<Edge> {
        edges_of(&self.allowed)
    }

    /// Whether node `i` may still gain an allowed parent.
    pub fn has_room(&self, i: usize) -> bool {
        self.cap.is_none_or(|k| self.allowed[i].len() < k)
    }

    pub fn max_in_degree(&self) -> usize {
        self.allowed.iter().map(NodeSet::len).max().unwrap_or(0)
    }

    /// `H^{+e}`.
    pub fn add_edge(&self, e: Edge) -> Result<SearchSpace, GraphError> {
        self.check_edge(e)?;
        if self.contains(e) {
            return Err(GraphError::EdgePresent(e));
        }
        if let Some(k) = self.cap {
            if self.allowed[e.dst].len() >= k {
                return Err(GraphError::CapExceeded {
                    node: e.dst,
                    degree: self.allowed[e.dst].len() + 1,
                    cap: k,
                });
            }
        }
        let mut out = self.clone();
        out.allowed[e.dst].insert(e.src);
        Ok(out)
    }

    /// `H^{-e}`.
    pub fn remove_edge(&self, e: Edge) -> Result<SearchSpace, GraphError> {
        self.check_edge(e)?;
        if !self.contains(e) {
            return Err(GraphError::EdgeAbsent(e));
        }
        let mut out = self.clone();
        out.allowed[e.dst].remove(e.src);
        Ok(out)
    }

    fn check_edge(&self, e: Edge) -> Result<(), GraphError> {
        let p = self.p();
        if e.src >= p || e.dst >= p {
            return Err(GraphError::NodeOutOfRange {
                node: e.src.max(e.dst),
                p,
            });
        }
        if e.src == e.dst {
            return Err(GraphError::SelfLoop(e.src));
        }
        Ok(())
    }

    /// Whether every edge of `g` lies in this space.
    pub fn admits(&self, g: &Dag) -> bool {
        g.p() == self.p()
            && g.parent_sets()
                .iter()
                .zip(&self.allowed)
                .all(|(pa, al)| pa.is_subset(al))
    }
}

impl fmt::Debug for SearchSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SearchSpace(p={}, cap={:?}, {:?})",
            self.p(),
            self.cap,
            self.edges().iter().map(|e| (e.src, e.dst)).collect_vec()
        )
    }
}

/// Permutation of the nodes. `perm[k]` is the node at position `k`; parents
/// come at earlier positions than their children.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopOrder {
    perm: Vec<usize>,
    pos: Vec<usize>,
}

impl TopOrder {
    pub fn identity(p: usize) -> Self {
        TopOrder {
            perm: (0..p).collect(),
            pos: (0..p).collect(),
        }
    }

    pub fn from_perm(perm: Vec<usize>) -> Result<Self, GraphError> {
        let p = perm.len();
        let mut pos = vec![usize::MAX; p];
        for (k, &node) in perm.iter().enumerate() {
            if node >= p || pos[node] != usize::MAX {
                return Err(GraphError::NotAPermutation);
            }
            pos[node] = k;
        }
        Ok(TopOrder { perm, pos })
    }

    pub fn p(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    #[inline]
    pub fn pos(&self, node: usize) -> usize {
        self.pos[node]
    }

    #[inline]
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.pos[a] < self.pos[b]
    }

    /// Nodes at positions strictly before `node`.
    pub fn predecessors(&self, node: usize) -> NodeSet {
        self.perm[..self.pos[node]].iter().copied().collect()
    }

    /// Exchange the nodes at two positions.
    pub fn swap_positions(&mut self, a: usize, b: usize) {
        self.perm.swap(a, b);
        self.pos[self.perm[a]] = a;
        self.pos[self.perm[b]] = b;
    }

    /// Move the node at position `from` to position `to`, shifting the nodes in between.
    pub fn relocate(&mut self, from: usize, to: usize) {
        let node = self.perm.remove(from);
        self.perm.insert(to, node);
        let (lo, hi) = (from.min(to), from.max(to));
        for k in lo..=hi {
            self.pos[self.perm[k]] = k;
        }
    }
}

impl fmt::Debug for TopOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TopOrder{:?}", self.perm)
    }
}

/// True iff every edge `j -> i` of `g` has `j` placed before `i` in `o`.
pub fn order_compatible(g: &Dag, o: &TopOrder) -> Result<bool, GraphError> {
    if g.p() != o.p() {
        return Err(GraphError::DimensionMismatch {
            left: g.p(),
            right: o.p(),
        });
    }
    Ok(g.parent_sets()
        .iter()
        .enumerate()
        .all(|(i, pa)| pa.iter().all(|j| o.precedes(j, i))))
}

/// All `p!` orders in lexicographic order of `perm`.
pub fn all_orders(p: usize) -> Vec<TopOrder> {
    (0..p)
        .permutations(p)
        .map(|perm| TopOrder::from_perm(perm).expect("permutation"))
        .collect()
}

/// Every labelled DAG on `p` nodes, once each.
pub fn enumerate_dags(p: usize) -> Result<Vec<Dag>, GraphError> {
    check_enum_size(p)?;
    dags_in(&SearchSpace::complete(p, None)?, None)
}

/// All subsets of `set`, including the empty set and `set` itself.
pub fn subsets(set: NodeSet) -> Vec<NodeSet> {
    let members: Vec<usize> = set.iter().collect();
    (0u64..1 << members.len())
        .map(|code| {
            members
                .iter()
                .enumerate()
                .filter(|(k, _)| code >> k & 1 == 1)
                .map(|(_, &m)| m)
                .collect()
        })
        .collect()
}

/// The DAGs of `G_H`, intersected with `G_o` when an order is given.
pub fn dags_in(h: &SearchSpace, o: Option<&TopOrder>) -> Result<Vec<Dag>, GraphError> {
    let p = h.p();
    check_enum_size(p)?;
    if let Some(o) = o {
        if o.p() != p {
            return Err(GraphError::DimensionMismatch {
                left: p,
                right: o.p(),
            });
        }
    }
    if p == 0 {
        return Ok(vec![Dag::empty(0)]);
    }
    let choices: Vec<Vec<NodeSet>> = (0..p)
        .map(|i| {
            let pool = match o {
                Some(o) => h.allowed(i).intersection(&o.predecessors(i)),
                None => *h.allowed(i),
            };
            subsets(pool)
        })
        .collect();
    let mut out = Vec::new();
    for combo in choices
        .iter()
        .map(|c| c.iter().copied())
        .multi_cartesian_product()
    {
        if o.is_some() || is_acyclic(&combo) {
            out.push(Dag::from_parents_unchecked(combo));
        }
    }
    Ok(out)
}

/// All linear extensions of `g`.
pub fn compatible_orders(g: &Dag) -> Result<Vec<TopOrder>, GraphError> {
    check_enum_size(g.p())?;
    Ok(all_orders(g.p())
        .into_iter()
        .filter(|o| order_compatible(g, o).expect("same size"))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    p: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cap: Option<usize>,
}

fn to_json(p: usize, edges: Vec<Edge>, cap: Option<usize>) -> String {
    let doc = GraphJson {
        p,
        edges: edges.iter().map(|e| [e.src, e.dst]).collect(),
        cap,
    };
    serde_json::to_string(&doc).expect("plain struct serializes")
}

fn from_json(s: &str) -> Result<(usize, Vec<(usize, usize)>, Option<usize>), GraphError> {
    let doc: GraphJson = serde_json::from_str(s).map_err(|e| GraphError::Parse(e.to_string()))?;
    Ok((
        doc.p,
        doc.edges.iter().map(|e| (e[0], e[1])).collect(),
        doc.cap,
    ))
}

fn to_adjacency_csv(sets: &[NodeSet]) -> String {
    let p = sets.len();
    let mut out = String::new();
    for j in 0..p {
        let row = (0..p)
            .map(|i| if sets[i].contains(j) { "1" } else { "0" })
            .join(",");
        out.push_str(&row);
        out.push('\n');
    }
    out
}

fn from_adjacency_csv(s: &str) -> Result<Vec<NodeSet>, GraphError> {
    let rows: Vec<Vec<&str>> = s
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::trim).collect())
        .collect();
    let p = rows.len();
    check_node_count(p)?;
    let mut sets = vec![NodeSet::empty(); p];
    for (j, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(GraphError::Parse(format!(
                "row {j} has {} entries, expected {p}",
                row.len()
            )));
        }
        for (i, cell) in row.iter().enumerate() {
            match *cell {
                "0" => {}
                "1" => sets[i].insert(j),
                other => return Err(GraphError::Parse(format!("bad adjacency entry {other:?}"))),
            }
        }
    }
    Ok(sets)
}

impl Dag {
    /// `{"p": .., "edges": [[src, dst], ..]}` with 0-based indices.
    pub fn to_json(&self) -> String {
        to_json(self.p(), self.edges(), None)
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        let (p, edges, _) = from_json(s)?;
        Self::from_edges(p, &edges)
    }

    /// Dense 0/1 matrix, row `j` column `i` set for the edge `j -> i`.
    pub fn to_adjacency_csv(&self) -> String {
        to_adjacency_csv(&self.parents)
    }

    pub fn from_adjacency_csv(s: &str) -> Result<Self, GraphError> {
        Self::from_parents(from_adjacency_csv(s)?)
    }
}

impl SearchSpace {
    pub fn to_json(&self) -> String {
        to_json(self.p(), self.edges(), self.cap)
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        let (p, edges, cap) = from_json(s)?;
        Self::from_edges(p, &edges, cap)
    }

    pub fn to_adjacency_csv(&self) -> String {
        to_adjacency_csv(&self.allowed)
    }

    pub fn from_adjacency_csv(s: &str, cap: Option<usize>) -> Result<Self, GraphError> {
        Self::from_allowed(from_adjacency_csv(s)?, cap)
    }
}

impl Serialize for Dag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphJson {
            p: self.p(),
            edges: self.edges().iter().map(|e| [e.src, e.dst]).collect(),
            cap: None,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = GraphJson::deserialize(d)?;
        let edges: Vec<_> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        Dag::from_edges(doc.p, &edges).map_err(serde::de::Error::custom)
    }
}

impl Serialize for SearchSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphJson {
            p: self.p(),
            edges: self.edges().iter().map(|e| [e.src, e.dst]).collect(),
            cap: self.cap,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = GraphJson::deserialize(d)?;
        let edges: Vec<_> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        SearchSpace::from_edges(doc.p, &edges, doc.cap).map_err(serde::de::Error::custom)
    }
}

impl Serialize for TopOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.perm.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TopOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let perm = Vec::<usize>::deserialize(d)?;
        TopOrder::from_perm(perm).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> Dag {
        Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    /// The four-node example DAG with edges 1->2, 1->3, 4->2 (0-based).
    fn fig1() -> Dag {
        Dag::from_edges(4, &[(0, 1), (0, 2), (3, 1)]).unwrap()
    }

    #[test]
    fn nodeset_basics() {
        let mut s = NodeSet::empty();
        s.insert(3);
        s.insert(70);
        s.insert(255);
        assert_eq!(s.len(), 3);
        assert_eq!(s.iter().collect_vec(), vec![3, 70, 255]);
        s.remove(70);
        assert!(!s.contains(70));
        assert!(NodeSet::singleton(3).is_subset(&s));
        assert_eq!(
            NodeSet::full(5).difference(&s).iter().collect_vec(),
            vec![0, 1, 2, 4]
        );
    }

    #[test]
    fn acyclicity() {
        assert!(is_acyclic(&[NodeSet::empty(); 3]));
        let two_cycle = parents_from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        assert!(!is_acyclic(&two_cycle));
        assert!(is_acyclic(chain3().parent_sets()));
        assert!(matches!(
            Dag::from_edges(2, &[(0, 1), (1, 0)]),
            Err(GraphError::Cyclic)
        ));
    }

    #[test]
    fn compatibility() {
        let g = fig1();
        // 1 and 4 before 2, 1 before 3.
        let o = TopOrder::from_perm(vec![0, 3, 2, 1]).unwrap();
        assert!(order_compatible(&g, &o).unwrap());
        // The drawing's right-to-left reading of the same order is incompatible.
        let flipped = TopOrder::from_perm(vec![1, 2, 3, 0]).unwrap();
        assert!(!order_compatible(&g, &flipped).unwrap());
        for o in all_orders(3) {
            assert!(order_compatible(&Dag::empty(3), &o).unwrap());
        }
        let chain = Dag::from_edges(2, &[(0, 1)]).unwrap();
        assert!(!order_compatible(&chain, &TopOrder::from_perm(vec![1, 0]).unwrap()).unwrap());
        assert!(order_compatible(&chain, &TopOrder::identity(3)).is_err());
    }

    #[test]
    fn small_enumerations() {
        assert_eq!(enumerate_dags(1).unwrap().len(), 1);
        assert_eq!(enumerate_dags(2).unwrap().len(), 3);
        assert!(enumerate_dags(6).is_err());
    }

    #[test]
    fn dags_in_examples() {
        let o = TopOrder::identity(3);
        assert_eq!(
            dags_in(&SearchSpace::empty(3, None), Some(&o)).unwrap(),
            vec![Dag::empty(3)]
        );
        let complete = SearchSpace::complete(2, None).unwrap();
        let got = dags_in(&complete, Some(&TopOrder::identity(2))).unwrap();
        assert_eq!(got.len(), 2);
        assert!(got.contains(&Dag::empty(2)));
        assert!(got.contains(&Dag::from_edges(2, &[(0, 1)]).unwrap()));
        assert_eq!(dags_in(&complete, None).unwrap().len(), 3);
    }

    #[test]
    fn linear_extensions() {
        assert_eq!(compatible_orders(&Dag::empty(3)).unwrap().len(), 6);
        assert_eq!(compatible_orders(&chain3()).unwrap().len(), 1);
        let brute = all_orders(4)
            .iter()
            .filter(|o| order_compatible(&fig1(), o).unwrap())
            .count();
        assert_eq!(compatible_orders(&fig1()).unwrap().len(), brute);
    }

    #[test]
    fn space_edits() {
        let h = SearchSpace::empty(3, Some(1));
        let e = Edge::new(0, 1).unwrap();
        let h1 = h.add_edge(e).unwrap();
        assert!(h1.allowed(1).contains(0));
        assert_eq!(h1.remove_edge(e).unwrap(), h);
        assert!(matches!(
            h1.add_edge(Edge::new(2, 1).unwrap()),
            Err(GraphError::CapExceeded { .. })
        ));
        assert!(matches!(h1.add_edge(e), Err(GraphError::EdgePresent(_))));
        assert!(matches!(h.remove_edge(e), Err(GraphError::EdgeAbsent(_))));
        assert!(Edge::new(2, 2).is_err());
    }

    #[test]
    fn order_moves() {
        let mut o = TopOrder::identity(5);
        o.relocate(1, 3);
        assert_eq!(o.perm(), &[0, 2, 3, 1, 4]);
        for k in 0..5 {
            assert_eq!(o.pos(o.perm()[k]), k);
        }
        o.relocate(2, 2);
        assert_eq!(o.perm(), &[0, 2, 3, 1, 4]);
        o.swap_positions(0, 4);
        assert_eq!(o.perm(), &[4, 2, 3, 1, 0]);
        assert_eq!(o.pos(0), 4);
    }

    #[test]
    fn serialization_formats() {
        let g = fig1();
        let json = g.to_json();
        assert_eq!(json, r#"{"p":4,"edges":[[0,1],[3,1],[0,2]]}"#);
        assert_eq!(Dag::from_json(&json).unwrap(), g);
        assert_eq!(Dag::from_adjacency_csv(&g.to_adjacency_csv()).unwrap(), g);
        let csv = g.to_adjacency_csv();
        assert_eq!(csv.lines().next().unwrap(), "0,1,1,0");
        let h = SearchSpace::from_edges(3, &[(0, 1), (1, 0)], Some(2)).unwrap();
        assert_eq!(SearchSpace::from_json(&h.to_json()).unwrap(), h);
        let back: SearchSpace = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
        assert!(Dag::from_json(r#"{"p":2,"edges":[[0,1],[1,0]]}"#).is_err());
    }
}
