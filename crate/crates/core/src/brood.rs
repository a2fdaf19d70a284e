//! Birth-death moves on the search space, their mixture with order moves,
//! and the chain driver.
//!
//! Rates are node-local: the rate of an edge `j -> i` depends only on node
//! `i`'s tables and its banned code under the current order, because every
//! other factor of the restricted order score cancels.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bge::BgeScore;
use crate::error::{ChainError, OracleError};
use crate::graph::{all_orders, dags_in, Dag, Edge, SearchSpace, TopOrder};
use crate::logspace::log_sum_exp;
use crate::order::{initial_order, q0_step, sample_dag_given, OrderState};
use crate::tables::{NodeTables, SubsetCode, TableSet};

/// Largest `p` for which every search space is enumerated.
pub const MAX_REFERENCE_NODES: usize = 4;

/// Birth rate of `j -> i` with `j` in plus column `col` of node `i`.
#[inline]
fn birth_from_tables(t: &NodeTables, code: SubsetCode, col: usize, order: &TopOrder) -> f64 {
    if !order.precedes(t.plus_cands()[col], t.node()) {
        return 0.5;
    }
    let gain = t.plus_banned_at(code, col) - t.banned_at(code);
    0.5 * (1.0 + if gain.is_nan() { 0.0 } else { gain.exp() })
}

/// Death rate of `cands[slot] -> i`.
#[inline]
fn death_from_tables(t: &NodeTables, code: SubsetCode, slot: usize, c_star: f64) -> f64 {
    let bit = 1 << slot;
    if code & bit != 0 {
        return 2.0 * c_star;
    }
    let ratio = t.banned_at(code | bit) - t.banned_at(code);
    2.0 * c_star * if ratio.is_nan() { 1.0 } else { ratio.exp() }
}

/// Visit every admissible birth and death into node `t.node()`.
fn for_each_node_rate(
    t: &NodeTables,
    code: SubsetCode,
    order: &TopOrder,
    room: bool,
    c_star: f64,
    mut f: impl FnMut(Edge, bool, f64),
) {
    let i = t.node();
    if room {
        for (col, &j) in t.plus_cands().iter().enumerate() {
            f(
                Edge { src: j, dst: i },
                true,
                birth_from_tables(t, code, col, order),
            );
        }
    }
    for (slot, &j) in t.cands().iter().enumerate() {
        f(
            Edge { src: j, dst: i },
            false,
            death_from_tables(t, code, slot, c_star),
        );
    }
}

/// `(beta_i, delta_i)` for one node.
fn node_rate_sums(
    t: &NodeTables,
    code: SubsetCode,
    order: &TopOrder,
    room: bool,
    c_star: f64,
) -> (f64, f64) {
    let (mut b, mut d) = (0.0, 0.0);
    for_each_node_rate(t, code, order, room, c_star, |_, birth, r| {
        if birth {
            b += r
        } else {
            d += r
        }
    });
    (b, d)
}

/// Birth rate of `e` in the space the tables were built for; zero when
/// `e.dst` is at the cap or `e` is already present.
pub fn birth_rate(tables: &TableSet, order: &TopOrder, e: Edge) -> f64 {
    let t = tables.node(e.dst);
    match t.plus_col(e.src) {
        Some(col) if tables.space().has_room(e.dst) => {
            birth_from_tables(t, t.banned_code(order), col, order)
        }
        _ => 0.0,
    }
}

/// Death rate of `e`; zero when `e` is not in the space.
pub fn death_rate(tables: &TableSet, order: &TopOrder, e: Edge, c_star: f64) -> f64 {
    let t = tables.node(e.dst);
    match t.slot(e.src) {
        Some(slot) => death_from_tables(t, t.banned_code(order), slot, c_star),
        None => 0.0,
    }
}

/// All jump rates out of `(H, order)`.
#[derive(Clone, Debug, Serialize)]
pub struct RatesSnapshot {
    pub births: Vec<(Edge, f64)>,
    pub deaths: Vec<(Edge, f64)>,
    pub beta: f64,
    pub delta: f64,
    /// `1 / (beta + delta)`, infinite when no move is admissible.
    pub waiting: f64,
}

impl RatesSnapshot {
    pub fn is_stuck(&self) -> bool {
        self.beta + self.delta == 0.0
    }
}

pub fn rates_snapshot(tables: &TableSet, order: &TopOrder, c_star: f64) -> RatesSnapshot {
    let mut births = Vec::new();
    let mut deaths = Vec::new();
    for t in tables.nodes() {
        let room = tables.space().has_room(t.node());
        for_each_node_rate(
            t,
            t.banned_code(order),
            order,
            room,
            c_star,
            |e, birth, r| {
                if birth {
                    births.push((e, r))
                } else {
                    deaths.push((e, r))
                }
            },
        );
    }
    let beta: f64 = births.iter().map(|(_, r)| r).sum();
    let delta: f64 = deaths.iter().map(|(_, r)| r).sum();
    let total = beta + delta;
    RatesSnapshot {
        births,
        deaths,
        beta,
        delta,
        waiting: if total > 0.0 {
            1.0 / total
        } else {
            f64::INFINITY
        },
    }
}

/// Chain settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BroodConfig {
    /// Probability of a space move per step.
    pub ell: f64,
    /// Death-rate calibration in `(0, 1]`.
    pub c_star: f64,
    /// Maximum number of allowed parents per node.
    pub cap: Option<usize>,
    /// Post-warmup steps.
    pub steps: usize,
    pub warmup: usize,
    pub thin: usize,
    pub seed: u64,
    /// Draw DAGs allowing one parent outside the space.
    pub plus_one: bool,
    /// Draw a DAG for each kept sample.
    pub sample_dags: bool,
}

impl Default for BroodConfig {
    fn default() -> Self {
        BroodConfig {
            ell: 0.1,
            c_star: 1.0,
            cap: None,
            steps: 1000,
            warmup: 100,
            thin: 1,
            seed: 0,
            plus_one: false,
            sample_dags: true,
        }
    }
}

impl BroodConfig {
    /// `steps = min(25000, ceil(p^2 ln p))`, a tenth of that as warmup, and
    /// thinning down to 2500 kept samples.
    pub fn defaults_for(p: usize) -> Self {
        let steps = default_steps(p);
        BroodConfig {
            steps,
            warmup: steps / 10,
            thin: (steps / 2500).max(1),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if !(0.0..=1.0).contains(&self.ell) {
            return Err(ChainError::Config(format!(
                "ell must lie in [0, 1], got {}",
                self.ell
            )));
        }
        if !(self.c_star > 0.0 && self.c_star <= 1.0) {
            return Err(ChainError::Config(format!(
                "c* must lie in (0, 1], got {}",
                self.c_star
            )));
        }
        if self.steps == 0 || self.steps <= self.warmup {
            return Err(ChainError::Config(format!(
                "steps ({}) must be positive and exceed warmup ({})",
                self.steps, self.warmup
            )));
        }
        if self.thin == 0 {
            return Err(ChainError::Config("thin must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn default_steps(p: usize) -> usize {
    let p = p.max(2) as f64;
    ((p * p * p.ln()).ceil() as usize).min(25_000)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    Q0,
    Q1,
}

/// What one step did to the space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceMove {
    Birth(Edge),
    Death(Edge),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub kernel: Kernel,
    pub accepted: bool,
    pub space_move: Option<SpaceMove>,
}

/// One kept state of the chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainSample {
    pub step: usize,
    pub space: SearchSpace,
    pub order: TopOrder,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dag: Option<Dag>,
    pub kernel: Kernel,
    pub accepted: bool,
    pub log_score: f64,
}

/// Counters and timing for one run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ChainSummary {
    pub seed: u64,
    pub stream: u64,
    pub steps: usize,
    pub warmup: usize,
    pub thin: usize,
    pub kept: usize,
    pub q0_proposed: u64,
    pub q0_accepted: u64,
    pub q1_proposed: u64,
    pub q1_accepted: u64,
    pub q1_stuck: u64,
    pub q1_failed: u64,
    pub births: u64,
    pub deaths: u64,
    pub score_evaluations: u64,
    pub final_space_edges: usize,
    pub elapsed_seconds: f64,
}

impl ChainSummary {
    pub fn q0_acceptance(&self) -> f64 {
        self.q0_accepted as f64 / (self.q0_proposed.max(1)) as f64
    }

    pub fn q1_acceptance(&self) -> f64 {
        self.q1_accepted as f64 / (self.q1_proposed.max(1)) as f64
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainTrace {
    pub samples: Vec<ChainSample>,
    pub summary: ChainSummary,
}

impl ChainTrace {
    /// One JSON object per kept sample.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn dags(&self) -> Vec<&Dag> {
        self.samples.iter().filter_map(|s| s.dag.as_ref()).collect()
    }
}

/// Joint state `(H, order)` with the tables for `H` and a private RNG.
#[derive(Clone, Debug)]
pub struct BroodChain<'a> {
    cfg: BroodConfig,
    scorer: &'a BgeScore,
    tables: TableSet,
    state: OrderState,
    rng: ChaCha8Rng,
    summary: ChainSummary,
}

impl<'a> BroodChain<'a> {
    /// Start from `h0` at its degree-sorted warm-start order.
    pub fn new(
        cfg: BroodConfig,
        scorer: &'a BgeScore,
        h0: &SearchSpace,
        stream: u64,
    ) -> Result<Self, ChainError> {
        Self::with_order(cfg, scorer, h0, None, stream)
    }

    pub fn with_order(
        cfg: BroodConfig,
        scorer: &'a BgeScore,
        h0: &SearchSpace,
        order: Option<TopOrder>,
        stream: u64,
    ) -> Result<Self, ChainError> {
        cfg.validate()?;
        if scorer.p() != h0.p() {
            return Err(ChainError::Config(format!(
                "data has {} columns, space has {} nodes",
                scorer.p(),
                h0.p()
            )));
        }
        let cap = cfg.cap.or(h0.cap());
        if let Some(k) = cap {
            if let Some(i) = (0..h0.p()).find(|&i| h0.allowed(i).len() > k) {
                return Err(ChainError::InitialSpaceOverCap {
                    node: i,
                    degree: h0.allowed(i).len(),
                    cap: k,
                });
            }
        }
        let h0 = h0.with_cap(cap)?;
        let order = order.unwrap_or_else(|| initial_order(&h0));
        if order.p() != h0.p() {
            return Err(ChainError::Config(
                "initial order has the wrong length".into(),
            ));
        }
        let tables = TableSet::build(&h0, scorer)?;
        let state = OrderState::new(order, &tables);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let summary = ChainSummary {
            seed: cfg.seed,
            stream,
            steps: cfg.steps,
            warmup: cfg.warmup,
            thin: cfg.thin,
            ..Default::default()
        };
        Ok(BroodChain {
            cfg,
            scorer,
            tables,
            state,
            rng,
            summary,
        })
    }

    pub fn config(&self) -> &BroodConfig {
        &self.cfg
    }

    pub fn space(&self) -> &SearchSpace {
        self.tables.space()
    }

    pub fn order(&self) -> &TopOrder {
        self.state.order()
    }

    pub fn tables(&self) -> &TableSet {
        &self.tables
    }

    pub fn log_score(&self) -> f64 {
        self.state.log_score()
    }

    pub fn summary(&self) -> &ChainSummary {
        &self.summary
    }

    /// Space move. The order is left alone.
    pub fn q1_step(&mut self) -> StepOutcome {
        self.summary.q1_proposed += 1;
        let outcome = |accepted, space_move| StepOutcome {
            kernel: Kernel::Q1,
            accepted,
            space_move,
        };
        let order = self.state.order().clone();
        let c_star = self.cfg.c_star;
        let space = self.tables.space();
        let sums: Vec<(f64, f64)> = self
            .tables
            .nodes()
            .map(|t| {
                node_rate_sums(
                    t,
                    self.state.code(t.node()),
                    &order,
                    space.has_room(t.node()),
                    c_star,
                )
            })
            .collect();
        let beta: f64 = sums.iter().map(|s| s.0).sum();
        let delta: f64 = sums.iter().map(|s| s.1).sum();
        let total = beta + delta;
        if !(total > 0.0) {
            self.summary.q1_stuck += 1;
            return outcome(false, None);
        }
        let birth = self.rng.random::<f64>() * total < beta;
        let target = self.rng.random::<f64>() * if birth { beta } else { delta };
        let mut acc = 0.0;
        let mut chosen = None;
        let mut last = None;
        'outer: for t in self.tables.nodes() {
            let node_total = if birth {
                sums[t.node()].0
            } else {
                sums[t.node()].1
            };
            if node_total <= 0.0 {
                continue;
            }
            if acc + node_total <= target {
                acc += node_total;
                continue;
            }
            let code = self.state.code(t.node());
            let room = space.has_room(t.node());
            let mut found = None;
            for_each_node_rate(t, code, &order, room, c_star, |e, is_birth, r| {
                if found.is_some() || is_birth != birth || r <= 0.0 {
                    return;
                }
                last = Some(e);
                acc += r;
                if target < acc {
                    found = Some(e);
                }
            });
            if found.is_some() {
                chosen = found;
                break 'outer;
            }
        }
        let Some(e) = chosen.or(last) else {
            self.summary.q1_stuck += 1;
            return outcome(false, None);
        };
        let before = self.scorer.evaluations();
        let proposal = if birth {
            self.tables.expand(e, self.scorer)
        } else {
            self.tables.contract(e)
        };
        self.summary.score_evaluations += self.scorer.evaluations() - before;
        let next = match proposal {
            Ok(ts) => ts,
            Err(err) => {
                log::warn!("space move {e} failed: {err}");
                self.summary.q1_failed += 1;
                return outcome(false, None);
            }
        };
        let i = e.dst;
        let t = next.node(i);
        let (b_new, d_new) = node_rate_sums(
            t,
            t.banned_code(&order),
            &order,
            next.space().has_room(i),
            c_star,
        );
        let total_new = total - sums[i].0 - sums[i].1 + b_new + d_new;
        let accept = total_new <= total || self.rng.random::<f64>() * total_new < total;
        let space_move = Some(if birth {
            SpaceMove::Birth(e)
        } else {
            SpaceMove::Death(e)
        });
        if accept {
            self.tables = next;
            self.state.resync_node(i, &self.tables);
            self.summary.q1_accepted += 1;
            if birth {
                self.summary.births += 1;
            } else {
                self.summary.deaths += 1;
            }
        }
        outcome(accept, space_move)
    }

    /// Order move under the current space.
    pub fn q0_step(&mut self) -> StepOutcome {
        self.summary.q0_proposed += 1;
        let accepted = q0_step(&mut self.state, &self.tables, &mut self.rng);
        if accepted {
            self.summary.q0_accepted += 1;
        }
        StepOutcome {
            kernel: Kernel::Q0,
            accepted,
            space_move: None,
        }
    }

    /// Space move with probability `ell`, else an order move.
    pub fn step(&mut self) -> StepOutcome {
        if self.rng.random::<f64>() < self.cfg.ell {
            self.q1_step()
        } else {
            self.q0_step()
        }
    }

    pub fn sample_dag(&mut self) -> Dag {
        sample_dag_given(
            self.state.order(),
            &self.tables,
            &mut self.rng,
            self.cfg.plus_one,
        )
    }

    /// Warmup, then `steps` recorded steps keeping every `thin`-th state.
    pub fn run(mut self) -> ChainTrace {
        let start = Instant::now();
        for _ in 0..self.cfg.warmup {
            self.step();
        }
        let mut samples = Vec::with_capacity(self.cfg.steps / self.cfg.thin + 1);
        for s in 0..self.cfg.steps {
            let out = self.step();
            if (s + 1) % self.cfg.thin == 0 {
                let dag = self.cfg.sample_dags.then(|| self.sample_dag());
                samples.push(ChainSample {
                    step: self.cfg.warmup + s,
                    space: self.space().clone(),
                    order: self.order().clone(),
                    dag,
                    kernel: out.kernel,
                    accepted: out.accepted,
                    log_score: self.log_score(),
                });
            }
        }
        self.summary.kept = samples.len();
        self.summary.final_space_edges = self.space().edge_count();
        self.summary.elapsed_seconds = start.elapsed().as_secs_f64();
        ChainTrace {
            samples,
            summary: self.summary,
        }
    }
}

/// Run one chain from `h0` on RNG stream 0.
pub fn run_chain(
    cfg: &BroodConfig,
    scorer: &BgeScore,
    h0: &SearchSpace,
) -> Result<ChainTrace, ChainError> {
    Ok(BroodChain::new(cfg.clone(), scorer, h0, 0)?.run())
}

/// Independent chains on streams `0..chains` of the same seed, run on
/// separate threads.
pub fn run_chains(
    cfg: &BroodConfig,
    scorer: &BgeScore,
    h0: &SearchSpace,
    chains: usize,
) -> Result<Vec<ChainTrace>, ChainError> {
    let built: Vec<BroodChain> = (0..chains as u64)
        .map(|s| BroodChain::new(cfg.clone(), scorer, h0, s))
        .collect::<Result<_, _>>()?;
    Ok(std::thread::scope(|scope| {
        let handles: Vec<_> = built
            .into_iter()
            .map(|c| scope.spawn(move || c.run()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    }))
}

/// Space masses of the closed-form stationary law
/// `mu(H) ∝ (2c*)^{-|E_H|} Σ_≺ π(H | ≺)` under two readings of `π(H | ≺)`.
#[derive(Clone, Debug)]
pub struct StationaryReference {
    pub spaces: Vec<SearchSpace>,
    /// `π(H | ≺)` as the unnormalized restricted sum over `G_H ∩ G_≺`.
    pub restricted_sum: Vec<f64>,
    /// `π(H | ≺)` as the restricted sum divided by the sum over `G_≺`.
    pub order_normalized: Vec<f64>,
}

impl StationaryReference {
    pub fn index_of(&self, h: &SearchSpace) -> Option<usize> {
        self.spaces
            .iter()
            .position(|s| s.allowed_sets() == h.allowed_sets())
    }
}

/// Every space on `p` nodes whose in-degrees fit under `cap`.
pub fn all_spaces(p: usize, cap: Option<usize>) -> Result<Vec<SearchSpace>, OracleError> {
    if p > MAX_REFERENCE_NODES {
        return Err(OracleError::TooLarge {
            p,
            max: MAX_REFERENCE_NODES,
        });
    }
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut out = Vec::new();
    for mask in 0u64..1 << pairs.len() {
        let edges: Vec<(usize, usize)> = (0..pairs.len())
            .filter(|k| mask >> k & 1 == 1)
            .map(|k| pairs[k])
            .collect();
        if let Ok(h) = SearchSpace::from_edges(p, &edges, cap) {
            out.push(h);
        }
    }
    Ok(out)
}

pub fn stationary_reference(
    scorer: &BgeScore,
    c_star: f64,
    cap: Option<usize>,
) -> Result<StationaryReference, OracleError> {
    let p = scorer.p();
    let spaces = all_spaces(p, cap)?;
    let orders = all_orders(p);
    let complete = SearchSpace::complete(p, None)?;
    let full: Vec<f64> = orders
        .iter()
        .map(|o| {
            let s: Vec<f64> = dags_in(&complete, Some(o))
                .map(|gs| gs.iter().map(|g| scorer.dag_score(g)).collect())?;
            Ok(log_sum_exp(&s))
        })
        .collect::<Result<_, OracleError>>()?;
    let mut raw = Vec::with_capacity(spaces.len());
    let mut normed = Vec::with_capacity(spaces.len());
    for h in &spaces {
        let mut per_order = Vec::with_capacity(orders.len());
        for o in &orders {
            let s: Vec<f64> = dags_in(h, Some(o))?
                .iter()
                .map(|g| scorer.dag_score(g))
                .collect();
            per_order.push(log_sum_exp(&s));
        }
        let weight = -(h.edge_count() as f64) * (2.0 * c_star).ln();
        raw.push(weight + log_sum_exp(&per_order));
        let rel: Vec<f64> = per_order.iter().zip(&full).map(|(a, b)| a - b).collect();
        normed.push(weight + log_sum_exp(&rel));
    }
    Ok(StationaryReference {
        spaces,
        restricted_sum: normalize_log(&raw),
        order_normalized: normalize_log(&normed),
    })
}

/// `exp(v - LSE(v))`.
pub fn normalize_log(v: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(v);
    v.iter().map(|x| (x - z).exp()).collect()
}
