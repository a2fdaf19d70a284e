//! Metropolis-Hastings over topological orders for a fixed search space, and
//! DAG sampling given an order.

use rand::Rng;

use crate::graph::{Dag, NodeSet, SearchSpace, TopOrder};
use crate::logspace::{log_add_exp, LogScore};
use crate::tables::{NodeTables, SubsetCode, TableSet};

/// Mixture weights for adjacent swap, random swap and relocate moves.
pub const PROPOSAL_WEIGHTS: [f64; 3] = [0.5, 0.3, 0.2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProposalKind {
    AdjacentSwap,
    RandomSwap,
    Relocate,
}

/// An order move, expressed in positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrderProposal {
    pub kind: ProposalKind,
    pub from: usize,
    pub to: usize,
}

impl OrderProposal {
    pub fn apply(&self, o: &TopOrder) -> TopOrder {
        let mut next = o.clone();
        match self.kind {
            ProposalKind::AdjacentSwap | ProposalKind::RandomSwap => {
                next.swap_positions(self.from, self.to)
            }
            ProposalKind::Relocate => next.relocate(self.from, self.to),
        }
        next
    }

    /// Inclusive range of positions whose occupant may change.
    pub fn span(&self) -> (usize, usize) {
        (self.from.min(self.to), self.from.max(self.to))
    }
}

/// Draw a move and the order it produces. Every move is as likely as its
/// reverse.
pub fn propose_order<R: Rng + ?Sized>(o: &TopOrder, rng: &mut R) -> (TopOrder, OrderProposal) {
    let p = o.p();
    if p < 2 {
        let prop = OrderProposal {
            kind: ProposalKind::Relocate,
            from: 0,
            to: 0,
        };
        return (o.clone(), prop);
    }
    let u: f64 = rng.random();
    let prop = if u < PROPOSAL_WEIGHTS[0] {
        let k = rng.random_range(0..p - 1);
        OrderProposal {
            kind: ProposalKind::AdjacentSwap,
            from: k,
            to: k + 1,
        }
    } else if u < PROPOSAL_WEIGHTS[0] + PROPOSAL_WEIGHTS[1] {
        let a = rng.random_range(0..p);
        let mut b = rng.random_range(0..p - 1);
        if b >= a {
            b += 1;
        }
        OrderProposal {
            kind: ProposalKind::RandomSwap,
            from: a.min(b),
            to: a.max(b),
        }
    } else {
        OrderProposal {
            kind: ProposalKind::Relocate,
            from: rng.random_range(0..p),
            to: rng.random_range(0..p),
        }
    };
    (prop.apply(o), prop)
}

/// Every move with its probability, for building exact kernels. Targets may
/// repeat.
pub fn proposal_distribution(o: &TopOrder) -> Vec<(TopOrder, f64)> {
    let p = o.p();
    if p < 2 {
        return vec![(o.clone(), 1.0)];
    }
    let w_adj = PROPOSAL_WEIGHTS[0] / (p - 1) as f64;
    let mut moves: Vec<(OrderProposal, f64)> = (0..p - 1)
        .map(|k| {
            (
                OrderProposal {
                    kind: ProposalKind::AdjacentSwap,
                    from: k,
                    to: k + 1,
                },
                w_adj,
            )
        })
        .collect();
    let w_swap = PROPOSAL_WEIGHTS[1] / (p * (p - 1) / 2) as f64;
    for a in 0..p {
        for b in a + 1..p {
            moves.push((
                OrderProposal {
                    kind: ProposalKind::RandomSwap,
                    from: a,
                    to: b,
                },
                w_swap,
            ));
        }
    }
    let w_rel = PROPOSAL_WEIGHTS[2] / (p * p) as f64;
    for a in 0..p {
        for b in 0..p {
            moves.push((
                OrderProposal {
                    kind: ProposalKind::Relocate,
                    from: a,
                    to: b,
                },
                w_rel,
            ));
        }
    }
    moves.into_iter().map(|(m, w)| (m.apply(o), w)).collect()
}

/// Warm start: nodes by descending degree in `space`, ties by index.
pub fn initial_order(space: &SearchSpace) -> TopOrder {
    let p = space.p();
    let mut degree = vec![0usize; p];
    for e in space.edges() {
        degree[e.src] += 1;
        degree[e.dst] += 1;
    }
    let mut perm: Vec<usize> = (0..p).collect();
    perm.sort_by_key(|&i| (std::cmp::Reverse(degree[i]), i));
    TopOrder::from_perm(perm).expect("sorted indices form a permutation")
}

/// Current order with cached per-node banned codes and factors.
#[derive(Clone, Debug)]
pub struct OrderState {
    order: TopOrder,
    codes: Vec<SubsetCode>,
    node_scores: Vec<LogScore>,
    log_score: LogScore,
}

impl OrderState {
    pub fn new(order: TopOrder, tables: &TableSet) -> Self {
        let mut s = OrderState {
            order,
            codes: Vec::new(),
            node_scores: Vec::new(),
            log_score: 0.0,
        };
        s.resync(tables);
        s
    }

    pub fn order(&self) -> &TopOrder {
        &self.order
    }

    pub fn log_score(&self) -> LogScore {
        self.log_score
    }

    pub fn code(&self, i: usize) -> SubsetCode {
        self.codes[i]
    }

    pub fn codes(&self) -> &[SubsetCode] {
        &self.codes
    }

    /// Recompute every cache from scratch.
    pub fn resync(&mut self, tables: &TableSet) {
        self.codes = tables.nodes().map(|t| t.banned_code(&self.order)).collect();
        self.node_scores = tables
            .nodes()
            .zip(&self.codes)
            .map(|(t, &c)| t.banned_at(c))
            .collect();
        self.log_score = self.node_scores.iter().sum();
    }

    /// Refresh one node after its tables changed.
    pub fn resync_node(&mut self, i: usize, tables: &TableSet) {
        let t = tables.node(i);
        self.codes[i] = t.banned_code(&self.order);
        self.node_scores[i] = t.banned_at(self.codes[i]);
        self.log_score = self.node_scores.iter().sum();
    }

    /// Largest gap between the caches and a full recomputation.
    pub fn cache_error(&self, tables: &TableSet) -> f64 {
        let full = tables.restricted_order_logscore(&self.order);
        if full == self.log_score {
            0.0
        } else {
            (full - self.log_score).abs()
        }
    }
}

/// One Metropolis-Hastings step over orders. Returns whether the move was
/// accepted.
pub fn q0_step<R: Rng + ?Sized>(state: &mut OrderState, tables: &TableSet, rng: &mut R) -> bool {
    let (next, prop) = propose_order(&state.order, rng);
    let (lo, hi) = prop.span();
    let moved = &next.perm()[lo..=hi];
    let mut fresh = Vec::with_capacity(moved.len());
    let mut proposed = state.node_scores.clone();
    for &i in moved {
        let t = tables.node(i);
        let c = t.banned_code(&next);
        proposed[i] = t.banned_at(c);
        fresh.push((i, c));
    }
    let new_score: f64 = proposed.iter().sum();
    let accept =
        new_score >= state.log_score || rng.random::<f64>().ln() < new_score - state.log_score;
    if accept {
        state.order = next;
        for (i, c) in fresh {
            state.codes[i] = c;
        }
        state.node_scores = proposed;
        state.log_score = new_score;
        debug_assert!(state.cache_error(tables) <= 1e-10 * (1.0 + state.log_score.abs()));
    }
    accept
}

/// Index of a draw from unnormalized log weights, `None` when all are `-inf`.
fn draw_log_weighted<R: Rng + ?Sized>(logw: &[f64], rng: &mut R) -> Option<usize> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let total: f64 = logw.iter().map(|w| (w - max).exp()).sum();
    let mut target = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, w) in logw.iter().enumerate() {
        let v = (w - max).exp();
        if v > 0.0 {
            last = k;
            if target < v {
                return Some(k);
            }
            target -= v;
        }
    }
    Some(last)
}

/// Subsets of `free` in descending numeric order, ending at 0.
fn submasks(free: usize) -> impl Iterator<Item = usize> {
    let mut next = Some(free);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            Some((cur - 1) & free)
        };
        Some(cur)
    })
}

fn draw_parent_code<R: Rng + ?Sized>(
    t: &NodeTables,
    code: SubsetCode,
    col: Option<usize>,
    rng: &mut R,
) -> SubsetCode {
    let free = ((1usize << t.width()) - 1) & !code;
    let masks: Vec<usize> = submasks(free).collect();
    let logw: Vec<f64> = match col {
        None => masks.iter().map(|&s| t.score()[s]).collect(),
        Some(j) => masks.iter().map(|&s| t.plus_score_at(s, j)).collect(),
    };
    draw_log_weighted(&logw, rng).map_or(0, |k| masks[k])
}

/// Parent set of node `t.node()` drawn from its conditional given the order.
pub fn sample_parents<R: Rng + ?Sized>(
    t: &NodeTables,
    o: &TopOrder,
    plus_one: bool,
    rng: &mut R,
) -> NodeSet {
    let code = t.banned_code(o);
    let mut extra = None;
    if plus_one {
        let here = o.pos(t.node());
        let cols: Vec<usize> = (0..t.plus_cands().len())
            .filter(|&k| o.pos(t.plus_cands()[k]) < here)
            .collect();
        if !cols.is_empty() {
            let mut logw = vec![t.banned_at(code)];
            logw.extend(cols.iter().map(|&k| t.plus_banned_at(code, k)));
            if let Some(k) = draw_log_weighted(&logw, rng) {
                extra = k.checked_sub(1).map(|k| cols[k]);
            }
        }
    }
    let s = draw_parent_code(t, code, extra, rng);
    let mut set = t.decode(s);
    if let Some(k) = extra {
        set.insert(t.plus_cands()[k]);
    }
    set
}

/// DAG drawn node by node from the order-conditional posterior.
pub fn sample_dag_given<R: Rng + ?Sized>(
    o: &TopOrder,
    tables: &TableSet,
    rng: &mut R,
    plus_one: bool,
) -> Dag {
    let parents: Vec<NodeSet> = tables
        .nodes()
        .map(|t| sample_parents(t, o, plus_one, rng))
        .collect();
    Dag::from_parents_unchecked(parents)
}

/// Exact conditional law of node `i`'s parent set as `(set, log weight)`
/// pairs, normalized.
pub fn parent_conditional(t: &NodeTables, o: &TopOrder, plus_one: bool) -> Vec<(NodeSet, f64)> {
    let code = t.banned_code(o);
    let free = ((1usize << t.width()) - 1) & !code;
    let mut out: Vec<(NodeSet, f64)> = submasks(free)
        .map(|s| (t.decode(s), t.score()[s]))
        .collect();
    if plus_one {
        let here = o.pos(t.node());
        for (k, &j) in t.plus_cands().iter().enumerate() {
            if o.pos(j) < here {
                for s in submasks(free) {
                    let mut set = t.decode(s);
                    set.insert(j);
                    out.push((set, t.plus_score_at(s, k)));
                }
            }
        }
    }
    let total = out
        .iter()
        .fold(f64::NEG_INFINITY, |acc, (_, w)| log_add_exp(acc, *w));
    for (_, w) in &mut out {
        *w = (*w - total).exp();
    }
    out
}
