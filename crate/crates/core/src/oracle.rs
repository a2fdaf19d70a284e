//! Exhaustive small-`p` posteriors, total-variation bounds and exact
//! transition kernels.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bge::BgeScore;
use crate::brood::{all_spaces, rates_snapshot, BroodConfig};
use crate::error::{NumericError, OracleError};
use crate::graph::{all_orders, enumerate_dags, order_compatible, Dag, SearchSpace, TopOrder};
use crate::logspace::log_sum_exp;
use crate::order::proposal_distribution;
use crate::tables::TableSet;

/// Largest `p` for full DAG enumeration.
pub const MAX_EXACT_NODES: usize = 5;
/// Largest `p` for the joint (space, order) kernel.
pub const MAX_KERNEL_NODES: usize = 3;

/// Every DAG and order on `p` nodes with their compatibility structure.
#[derive(Clone, Debug)]
pub struct ExactPosterior {
    p: usize,
    dags: Vec<Dag>,
    dag_log_scores: Vec<f64>,
    orders: Vec<TopOrder>,
    /// DAG indices compatible with each order.
    compatible: Vec<Vec<usize>>,
}

impl ExactPosterior {
    pub fn from_scorer(scorer: &BgeScore) -> Result<Self, OracleError> {
        Self::from_log_scores(scorer.p(), |g| scorer.dag_score(g))
    }

    /// Arbitrary log scores per DAG; `-inf` removes a DAG from every support.
    pub fn from_log_scores(p: usize, score: impl Fn(&Dag) -> f64) -> Result<Self, OracleError> {
        if p > MAX_EXACT_NODES {
            return Err(OracleError::TooLarge {
                p,
                max: MAX_EXACT_NODES,
            });
        }
        let dags = enumerate_dags(p)?;
        let dag_log_scores: Vec<f64> = dags.iter().map(&score).collect();
        let orders = all_orders(p);
        let compatible = orders
            .iter()
            .map(|o| {
                dags.iter()
                    .enumerate()
                    .filter_map(|(k, g)| {
                        order_compatible(g, o).map(|ok| ok.then_some(k)).transpose()
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        Ok(ExactPosterior {
            p,
            dags,
            dag_log_scores,
            orders,
            compatible,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dags(&self) -> &[Dag] {
        &self.dags
    }

    pub fn dag_log_scores(&self) -> &[f64] {
        &self.dag_log_scores
    }

    pub fn orders(&self) -> &[TopOrder] {
        &self.orders
    }

    /// `log R(≺)` restricted to DAGs passing `keep`.
    fn order_log_sums(&self, keep: impl Fn(&Dag) -> bool) -> Vec<f64> {
        self.compatible
            .iter()
            .map(|ks| {
                let v: Vec<f64> = ks
                    .iter()
                    .filter(|&&k| keep(&self.dags[k]))
                    .map(|&k| self.dag_log_scores[k])
                    .collect();
                log_sum_exp(&v)
            })
            .collect()
    }

    /// Log order scores over all DAGs.
    pub fn order_log_scores(&self) -> Vec<f64> {
        self.order_log_sums(|_| true)
    }

    /// Log restricted order scores over DAGs inside `h`.
    pub fn restricted_order_log_scores(&self, h: &SearchSpace) -> Vec<f64> {
        self.order_log_sums(|g| h.admits(g))
    }

    /// Log order scores over DAGs with at least one edge outside `h`.
    pub fn omitted_order_log_scores(&self, h: &SearchSpace) -> Vec<f64> {
        self.order_log_sums(|g| !h.admits(g))
    }

    pub fn order_posterior(&self) -> Result<Vec<f64>, OracleError> {
        normalize(&self.order_log_scores())
    }

    pub fn restricted_order_posterior(&self, h: &SearchSpace) -> Result<Vec<f64>, OracleError> {
        normalize(&self.restricted_order_log_scores(h))
    }

    pub fn omitted_order_posterior(&self, h: &SearchSpace) -> Result<Vec<f64>, OracleError> {
        normalize(&self.omitted_order_log_scores(h))
    }

    /// DAG posterior under a uniform structure prior.
    pub fn dag_posterior(&self) -> Result<Vec<f64>, OracleError> {
        normalize(&self.dag_log_scores)
    }

    /// DAG law induced by a uniform order prior: each DAG weighted by its
    /// number of compatible orders.
    pub fn order_induced_dag_posterior(&self) -> Result<Vec<f64>, OracleError> {
        let mut counts = vec![0usize; self.dags.len()];
        for ks in &self.compatible {
            for &k in ks {
                counts[k] += 1;
            }
        }
        let w: Vec<f64> = self
            .dag_log_scores
            .iter()
            .zip(&counts)
            .map(|(s, &c)| {
                if c == 0 {
                    f64::NEG_INFINITY
                } else {
                    s + (c as f64).ln()
                }
            })
            .collect();
        normalize(&w)
    }

    /// Order-induced mass of DAGs outside `h`.
    pub fn epsilon(&self, h: &SearchSpace) -> f64 {
        let all = log_sum_exp(&self.order_log_scores());
        let outside = log_sum_exp(&self.omitted_order_log_scores(h));
        if all == f64::NEG_INFINITY {
            return f64::NAN;
        }
        (outside - all).exp().clamp(0.0, 1.0)
    }

    /// Disagreement constant between the restricted and omitted order
    /// posteriors; `None` when nothing lies outside `h`.
    pub fn c_constant(&self, h: &SearchSpace) -> Result<Option<f64>, OracleError> {
        let eps = self.epsilon(h);
        if !(eps > 0.0) {
            return Ok(None);
        }
        let a = self.restricted_order_posterior(h)?;
        let b = self.omitted_order_posterior(h)?;
        Ok(Some(c_from_parts(eps, &a, &b)))
    }

    pub fn verify_bounds(&self, h: &SearchSpace) -> Result<TvReport, OracleError> {
        let full = self.order_posterior()?;
        let restricted = self.restricted_order_posterior(h)?;
        let eps = self.epsilon(h);
        let tv = tv_distance(&full, &restricted)?;
        let hel = hellinger(&full, &restricted)?;
        if !(eps > 0.0) {
            return Ok(TvReport {
                epsilon: eps,
                c_const: None,
                hellinger: hel,
                tv,
                lower: 0.0,
                upper: 0.0,
                mixture_residual: 0.0,
            });
        }
        let omitted = self.omitted_order_posterior(h)?;
        let c = c_from_parts(eps, &restricted, &omitted);
        let mixture_residual = full
            .iter()
            .zip(restricted.iter().zip(&omitted))
            .map(|(f, (a, b))| (f - ((1.0 - eps) * a + eps * b)).abs())
            .fold(0.0, f64::max);
        let (lower, upper) = tv_bounds(c, eps);
        Ok(TvReport {
            epsilon: eps,
            c_const: Some(c),
            hellinger: hel,
            tv,
            lower,
            upper,
            mixture_residual,
        })
    }
}

fn c_from_parts(eps: f64, a: &[f64], b: &[f64]) -> f64 {
    // With x = eps (b - a) / a each affinity term is a sqrt(1 + x), so
    // (1 - A) / eps sums (a - b) / (1 + sqrt(1 + x)) without cancellation.
    let mut aff = 0.0;
    let mut gap = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        if x > 0.0 {
            let root = (1.0 + eps * (y - x) / x).max(0.0).sqrt();
            aff += x * root;
            gap += (x - y) / (1.0 + root);
        }
    }
    gap * (1.0 + aff)
}

/// `(1 - sqrt(1 - c eps), min(sqrt(2 - 2 sqrt(1 - c eps)), 1))`.
pub fn tv_bounds(c: f64, eps: f64) -> (f64, f64) {
    let root = (1.0 - c * eps).max(0.0).sqrt();
    (1.0 - root, (2.0 - 2.0 * root).max(0.0).sqrt().min(1.0))
}

/// Error quantities for one `(data, H)` pair.
#[derive(Clone, Debug, Serialize)]
pub struct TvReport {
    pub epsilon: f64,
    /// Undefined when `epsilon == 0`.
    pub c_const: Option<f64>,
    pub hellinger: f64,
    pub tv: f64,
    pub lower: f64,
    pub upper: f64,
    /// Largest pointwise gap in the mixture decomposition of the order
    /// posterior.
    pub mixture_residual: f64,
}

impl TvReport {
    /// Smallest of `tv - lower` and `upper - tv`.
    pub fn slack(&self) -> f64 {
        (self.tv - self.lower).min(self.upper - self.tv)
    }
}

fn normalize(logw: &[f64]) -> Result<Vec<f64>, OracleError> {
    let z = log_sum_exp(logw);
    if !z.is_finite() {
        return Err(NumericError::Unnormalized(z.exp()).into());
    }
    Ok(logw.iter().map(|w| (w - z).exp()).collect())
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<(), NumericError> {
    if a.len() != b.len() {
        return Err(NumericError::Dimension(format!(
            "{} vs {}",
            a.len(),
            b.len()
        )));
    }
    for v in [a, b] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 || v.iter().any(|x| *x < 0.0) {
            return Err(NumericError::Unnormalized(s));
        }
    }
    Ok(())
}

/// `½ Σ |a - b|`.
pub fn tv_distance(a: &[f64], b: &[f64]) -> Result<f64, NumericError> {
    check_pair(a, b)?;
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// `sqrt(Σ (sqrt a - sqrt b)²)`.
pub fn hellinger(a: &[f64], b: &[f64]) -> Result<f64, NumericError> {
    check_pair(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Stationary law of a row-stochastic matrix with the largest residual
/// `max |πP - π|`.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<(Vec<f64>, f64), OracleError> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or(NumericError::Dimension(
        "singular stationarity system".into(),
    ))?;
    if pi.iter().any(|x| *x < -1e-9 || !x.is_finite()) {
        return Err(NumericError::Unnormalized(pi.sum()).into());
    }
    let pi: Vec<f64> = pi.iter().map(|x| x.max(0.0)).collect();
    let residual = stationarity_residual(p, &pi);
    Ok((pi, residual))
}

/// Power iteration from `start`; for kernels with several closed classes.
pub fn power_stationary(
    p: &DMatrix<f64>,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let mut v = DVector::from_column_slice(start);
    let pt = p.transpose();
    for _ in 0..max_iter {
        let next = &pt * &v;
        let diff = (&next - &v).amax();
        v = next;
        if diff <= tol {
            break;
        }
    }
    let pi: Vec<f64> = v.iter().copied().collect();
    let residual = stationarity_residual(p, &pi);
    (pi, residual)
}

pub fn stationarity_residual(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let v = DVector::from_column_slice(pi);
    (p.transpose() * &v - &v).amax()
}

/// Largest row-sum deviation from one.
pub fn row_sum_error(p: &DMatrix<f64>) -> f64 {
    p.row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `max |π_a P_ab - π_b P_ba|`.
pub fn detailed_balance_residual(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = p.nrows();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            worst = worst.max((pi[a] * p[(a, b)] - pi[b] * p[(b, a)]).abs());
        }
    }
    worst
}

/// Exact order-move kernel over all `p!` orders for the tables' space.
pub fn exact_q0_kernel(tables: &TableSet) -> Result<(Vec<TopOrder>, DMatrix<f64>), OracleError> {
    let p = tables.p();
    if p > MAX_EXACT_NODES {
        return Err(OracleError::TooLarge {
            p,
            max: MAX_EXACT_NODES,
        });
    }
    let orders = all_orders(p);
    let index: HashMap<Vec<usize>, usize> = orders
        .iter()
        .enumerate()
        .map(|(k, o)| (o.perm().to_vec(), k))
        .collect();
    let scores: Vec<f64> = orders
        .iter()
        .map(|o| tables.restricted_order_logscore(o))
        .collect();
    let n = orders.len();
    let mut m = DMatrix::zeros(n, n);
    for (a, o) in orders.iter().enumerate() {
        for (target, q) in proposal_distribution(o) {
            let b = index[target.perm()];
            m[(a, b)] += q * mh_accept(scores[b] - scores[a]);
        }
        let off: f64 = (0..n).filter(|&b| b != a).map(|b| m[(a, b)]).sum();
        m[(a, a)] = 1.0 - off;
    }
    Ok((orders, m))
}

fn mh_accept(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 || log_ratio.is_nan() {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Exact transition matrix of the chain over `(space, order)` pairs.
#[derive(Clone, Debug)]
pub struct MixtureKernel {
    pub spaces: Vec<SearchSpace>,
    pub orders: Vec<TopOrder>,
    /// Row-stochastic; state `s * orders.len() + o`.
    pub matrix: DMatrix<f64>,
}

impl MixtureKernel {
    pub fn state_count(&self) -> usize {
        self.spaces.len() * self.orders.len()
    }

    pub fn state_index(&self, h: &SearchSpace, o: &TopOrder) -> Option<usize> {
        let s = self
            .spaces
            .iter()
            .position(|x| x.allowed_sets() == h.allowed_sets())?;
        let k = self.orders.iter().position(|x| x == o)?;
        Some(s * self.orders.len() + k)
    }

    /// Sum a joint law over orders.
    pub fn space_marginal(&self, joint: &[f64]) -> Vec<f64> {
        joint
            .chunks(self.orders.len())
            .map(|c| c.iter().sum())
            .collect()
    }
}

/// Build the chain's exact kernel over every space within the cap and every
/// order, mixing order moves and space moves with weight `cfg.ell`.
pub fn exact_mixture_kernel(
    scorer: &BgeScore,
    cfg: &BroodConfig,
) -> Result<MixtureKernel, OracleError> {
    let p = scorer.p();
    if p > MAX_KERNEL_NODES {
        return Err(OracleError::TooLarge {
            p,
            max: MAX_KERNEL_NODES,
        });
    }
    let spaces = all_spaces(p, cfg.cap)?;
    let orders = all_orders(p);
    let no = orders.len();
    let n = spaces.len() * no;
    let space_index: HashMap<SearchSpace, usize> = spaces
        .iter()
        .cloned()
        .enumerate()
        .map(|(k, h)| (h, k))
        .collect();
    let tables: Vec<TableSet> = spaces
        .iter()
        .map(|h| TableSet::build(h, scorer))
        .collect::<Result<_, _>>()?;
    let mut totals = vec![0.0; n];
    for (s, t) in tables.iter().enumerate() {
        for (k, o) in orders.iter().enumerate() {
            let snap = rates_snapshot(t, o, cfg.c_star);
            totals[s * no + k] = snap.beta + snap.delta;
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for (s, t) in tables.iter().enumerate() {
        let (_, q0) = exact_q0_kernel(t)?;
        for a in 0..no {
            for b in 0..no {
                m[(s * no + a, s * no + b)] += (1.0 - cfg.ell) * q0[(a, b)];
            }
        }
        for (k, o) in orders.iter().enumerate() {
            let row = s * no + k;
            let total = totals[row];
            if !(total > 0.0) {
                m[(row, row)] += cfg.ell;
                continue;
            }
            let snap = rates_snapshot(t, o, cfg.c_star);
            let mut moved = 0.0;
            let moves = snap.births.iter().map(|&(e, r)| (t.space().add_edge(e), r));
            let moves = moves.chain(
                snap.deaths
                    .iter()
                    .map(|&(e, r)| (t.space().remove_edge(e), r)),
            );
            for (next, r) in moves {
                let next = next?;
                let col = space_index[&next] * no + k;
                let prob = r / total * (total / totals[col]).min(1.0);
                m[(row, col)] += cfg.ell * prob;
                moved += prob;
            }
            m[(row, row)] += cfg.ell * (1.0 - moved);
        }
    }
    Ok(MixtureKernel {
        spaces,
        orders,
        matrix: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bge::DataSet;
    use crate::graph::SearchSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scorer(p: usize, seed: u64) -> BgeScore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let mut r: Vec<f64> = (0..p)
                    .map(|_| rng.sample(rand_distr::StandardNormal))
                    .collect();
                for j in 1..p {
                    r[j] += 0.6 * r[j - 1];
                }
                r
            })
            .collect();
        BgeScore::from_data(&DataSet::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn distances() {
        let a = [0.2, 0.3, 0.5];
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(hellinger(&a, &a).unwrap(), 0.0);
        assert!((tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((hellinger(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(tv_distance(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn complete_space_has_no_error() {
        let ep = ExactPosterior::from_scorer(&scorer(3, 1)).unwrap();
        let r = ep
            .verify_bounds(&SearchSpace::complete(3, None).unwrap())
            .unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert!(r.c_const.is_none());
        assert!(r.tv < 1e-15 && r.lower == 0.0 && r.upper == 0.0);
    }

    #[test]
    fn order_posterior_matches_tables() {
        let s = scorer(3, 2);
        let ep = ExactPosterior::from_scorer(&s).unwrap();
        let ts = TableSet::build(&SearchSpace::complete(3, None).unwrap(), &s).unwrap();
        let from_tables = normalize(
            &ep.orders()
                .iter()
                .map(|o| ts.restricted_order_logscore(o))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        for (a, b) in ep.order_posterior().unwrap().iter().zip(&from_tables) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_scores_give_uniform_orders() {
        let ep = ExactPosterior::from_log_scores(2, |_| 0.0).unwrap();
        assert_eq!(ep.order_posterior().unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn lemma_cases() {
        let h0 = SearchSpace::empty(2, None);
        let ep =
            ExactPosterior::from_log_scores(2, |g| if g.edge_count() == 0 { 0.3 } else { -0.4 })
                .unwrap();
        assert!(ep.c_constant(&h0).unwrap().unwrap().abs() < 1e-12);
        let h = SearchSpace::from_edges(2, &[(0, 1)], None).unwrap();
        let ep = ExactPosterior::from_log_scores(2, |g| match g.edge_count() {
            0 => f64::NEG_INFINITY,
            _ if g.has_edge(0, 1) => 0.2,
            _ => -0.5,
        })
        .unwrap();
        assert!((ep.c_constant(&h).unwrap().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sandwich_on_random_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..20 {
            let p = 2 + case % 3;
            let ep = ExactPosterior::from_scorer(&scorer(p, 100 + case as u64)).unwrap();
            let edges: Vec<(usize, usize)> = (0..p)
                .flat_map(|i| (0..p).map(move |j| (i, j)))
                .filter(|(i, j)| i != j && rng.random_bool(0.4))
                .collect();
            let r = ep
                .verify_bounds(&SearchSpace::from_edges(p, &edges, None).unwrap())
                .unwrap();
            assert!(r.slack() >= -1e-12, "{r:?}");
            assert!(r.mixture_residual < 1e-12);
            assert!(r.hellinger.powi(2) / 2.0 <= r.tv + 1e-15 && r.tv <= r.hellinger + 1e-15);
        }
    }

    #[test]
    fn q0_kernel_stationary_and_reversible() {
        let s = scorer(3, 4);
        let h = SearchSpace::from_edges(3, &[(0, 1), (1, 2), (2, 0)], None).unwrap();
        let ts = TableSet::build(&h, &s).unwrap();
        let (orders, q0) = exact_q0_kernel(&ts).unwrap();
        assert!(row_sum_error(&q0) < 1e-12);
        let (pi, res) = stationary_distribution(&q0).unwrap();
        assert!(res < 1e-12);
        let want = normalize(
            &orders
                .iter()
                .map(|o| ts.restricted_order_logscore(o))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        for (a, b) in pi.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(detailed_balance_residual(&q0, &want) < 1e-12);
    }

    #[test]
    fn space_moves_alone_on_two_nodes() {
        let s = scorer(2, 5);
        let cfg = BroodConfig {
            ell: 1.0,
            ..BroodConfig::defaults_for(2)
        };
        let k = exact_mixture_kernel(&s, &cfg).unwrap();
        assert_eq!(k.state_count(), 8);
        assert!(row_sum_error(&k.matrix) < 1e-12);
        let n = k.state_count();
        let (pi, res) = power_stationary(&k.matrix, &vec![1.0 / n as f64; n], 1e-15, 100_000);
        assert!(res <= 1e-10);
        assert!(detailed_balance_residual(&k.matrix, &pi) < 1e-10);
        // Within each order the space law is proportional to R_H² / 4^{|E_H|}.
        for (o_idx, o) in k.orders.iter().enumerate() {
            let logw: Vec<f64> = k
                .spaces
                .iter()
                .map(|h| {
                    let r = TableSet::build(h, &s).unwrap().restricted_order_logscore(o);
                    2.0 * r - h.edge_count() as f64 * 4f64.ln()
                })
                .collect();
            let want = normalize(&logw).unwrap();
            let slice: Vec<f64> = (0..k.spaces.len())
                .map(|sp| pi[sp * k.orders.len() + o_idx])
                .collect();
            let z: f64 = slice.iter().sum();
            for (a, b) in slice.iter().zip(&want) {
                assert!((a / z - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mixture_kernel_on_three_nodes() {
        let s = scorer(3, 6);
        let cfg = BroodConfig {
            ell: 0.1,
            cap: Some(2),
            ..BroodConfig::defaults_for(3)
        };
        let k = exact_mixture_kernel(&s, &cfg).unwrap();
        assert_eq!(k.state_count(), 384);
        assert!(row_sum_error(&k.matrix) < 1e-12);
        let (pi, res) = stationary_distribution(&k.matrix).unwrap();
        assert!(res < 1e-12);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
