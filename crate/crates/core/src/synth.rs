//! Random ground-truth graphs, linear SEM data, and PC-style skeleton spaces.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bge::DataSet;
use crate::error::DataError;
use crate::graph::{Dag, Edge, NodeSet, SearchSpace, TopOrder};

/// Block model: per-node block probabilities and a connection matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub block_probs: Vec<f64>,
    pub connect: Vec<Vec<f64>>,
}

impl BlockSpec {
    fn validate(&self) -> Result<(), DataError> {
        let k = self.block_probs.len();
        check_probs(&self.block_probs, "block probabilities")?;
        if self.connect.len() != k || self.connect.iter().any(|r| r.len() != k) {
            return Err(DataError::Hyper(format!(
                "connection matrix must be {k} x {k}"
            )));
        }
        if self
            .connect
            .iter()
            .flatten()
            .any(|c| !(0.0..=1.0).contains(c))
        {
            return Err(DataError::Hyper(
                "connection probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

fn check_probs(v: &[f64], what: &str) -> Result<(), DataError> {
    if v.is_empty()
        || v.iter().any(|x| !(0.0..=1.0).contains(x))
        || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(DataError::Hyper(format!(
            "{what} must be non-negative and sum to 1"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum GraphModel {
    Er {
        expected_degree: f64,
    },
    Sbm(BlockSpec),
    Hsbm {
        proportions: Vec<f64>,
        clusters: Vec<BlockSpec>,
        between: f64,
    },
}

impl GraphModel {
    pub fn er() -> Self {
        GraphModel::Er {
            expected_degree: 4.0,
        }
    }

    /// Two blocks, 80/20 assignment.
    pub fn sbm(p: usize) -> Self {
        GraphModel::Sbm(two_block(p, vec![0.8, 0.2]))
    }

    /// Three clusters of relative size 0.1, 0.3, 0.6 with one, two and three
    /// blocks.
    pub fn hsbm(p: usize) -> Self {
        let q = p as f64;
        let m = |a: f64, b: f64| a.min(b / q);
        GraphModel::Hsbm {
            proportions: vec![0.1, 0.3, 0.6],
            clusters: vec![
                BlockSpec {
                    block_probs: vec![1.0],
                    connect: vec![vec![m(0.1, 4.0)]],
                },
                two_block(p, vec![1.0 / 3.0, 2.0 / 3.0]),
                BlockSpec {
                    block_probs: vec![1.0 / 6.0, 1.0 / 3.0, 0.5],
                    connect: vec![
                        vec![m(0.2, 8.0), m(0.01, 1.0), m(0.2, 8.0)],
                        vec![m(0.01, 1.0), 0.0, m(0.08, 4.0)],
                        vec![m(0.2, 8.0), m(0.08, 4.0), m(0.08, 4.0)],
                    ],
                },
            ],
            between: m(0.01, 1.0),
        }
    }

    /// `er`, `sbm` or `hsbm` with default parameters for `p` nodes.
    pub fn named(name: &str, p: usize) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "er" => Some(Self::er()),
            "sbm" => Some(Self::sbm(p)),
            "hsbm" => Some(Self::hsbm(p)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        match self {
            GraphModel::Er { expected_degree } => {
                if !(*expected_degree >= 0.0) {
                    return Err(DataError::Hyper(
                        "expected degree must be non-negative".into(),
                    ));
                }
            }
            GraphModel::Sbm(b) => b.validate()?,
            GraphModel::Hsbm {
                proportions,
                clusters,
                between,
            } => {
                check_probs(proportions, "cluster proportions")?;
                if clusters.len() != proportions.len() {
                    return Err(DataError::Hyper(
                        "one block spec per cluster required".into(),
                    ));
                }
                clusters.iter().try_for_each(BlockSpec::validate)?;
                if !(0.0..=1.0).contains(between) {
                    return Err(DataError::Hyper(
                        "between-cluster probability must lie in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn two_block(p: usize, block_probs: Vec<f64>) -> BlockSpec {
    let q = p as f64;
    let off = 0.01f64.min(2.0 / q);
    BlockSpec {
        block_probs,
        connect: vec![
            vec![0.15f64.min(6.0 / q), off],
            vec![off, 0.08f64.min(4.0 / q)],
        ],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorModel {
    /// `N(0, 1)`.
    Gaussian,
    /// Even mixture of `N(0, 1)` and `N(0, 2)` with 2 the variance.
    Mixture,
    /// Even mixture of `N(0, 1)` and a normal with standard deviation 2.
    MixtureSd,
}

impl ErrorModel {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match self {
            ErrorModel::Gaussian => z,
            ErrorModel::Mixture => {
                if rng.random_bool(0.5) {
                    z
                } else {
                    z * std::f64::consts::SQRT_2
                }
            }
            ErrorModel::MixtureSd => {
                if rng.random_bool(0.5) {
                    z
                } else {
                    2.0 * z
                }
            }
        }
    }
}

/// Everything needed to generate one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemSpec {
    pub p: usize,
    pub n: usize,
    pub graph: GraphModel,
    pub errors: ErrorModel,
    pub weight_low: f64,
    pub weight_high: f64,
    pub seed: u64,
}

impl SemSpec {
    pub fn new(p: usize, n: usize, graph: GraphModel, errors: ErrorModel, seed: u64) -> Self {
        SemSpec {
            p,
            n,
            graph,
            errors,
            weight_low: 0.4,
            weight_high: 2.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.p == 0 || self.n == 0 {
            return Err(DataError::Empty);
        }
        if !(self.weight_low <= self.weight_high) {
            return Err(DataError::Hyper(
                "weight_low must not exceed weight_high".into(),
            ));
        }
        self.graph.validate()
    }
}

/// Sizes proportional to `props` summing to `p`, by largest remainder.
fn apportion(p: usize, props: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = props.iter().map(|x| x * p as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    let mut left = p - sizes.iter().sum::<usize>();
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[k] += 1;
        left -= 1;
    }
    sizes
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in probs.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Pairwise connection probability for the model.
fn connection_matrix<R: Rng + ?Sized>(model: &GraphModel, p: usize, rng: &mut R) -> Vec<Vec<f64>> {
    match model {
        GraphModel::Er { expected_degree } => {
            let q = if p > 1 {
                (expected_degree / (p - 1) as f64).min(1.0)
            } else {
                0.0
            };
            vec![vec![q; p]; p]
        }
        GraphModel::Sbm(b) => {
            let blocks: Vec<usize> = (0..p).map(|_| categorical(&b.block_probs, rng)).collect();
            (0..p)
                .map(|i| (0..p).map(|j| b.connect[blocks[i]][blocks[j]]).collect())
                .collect()
        }
        GraphModel::Hsbm {
            proportions,
            clusters,
            between,
        } => {
            let sizes = apportion(p, proportions);
            let mut label = Vec::with_capacity(p);
            for (c, &sz) in sizes.iter().enumerate() {
                for _ in 0..sz {
                    label.push((c, categorical(&clusters[c].block_probs, rng)));
                }
            }
            (0..p)
                .map(|i| {
                    (0..p)
                        .map(|j| {
                            let ((ci, bi), (cj, bj)) = (label[i], label[j]);
                            if ci == cj {
                                clusters[ci].connect[bi][bj]
                            } else {
                                *between
                            }
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Random DAG: connection probabilities from the model, directions fixed by
/// a uniformly random order.
pub fn sample_graph<R: Rng + ?Sized>(model: &GraphModel, p: usize, rng: &mut R) -> Dag {
    let conn = connection_matrix(model, p, rng);
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(rng);
    let mut parents = vec![NodeSet::empty(); p];
    for a in 0..p {
        for b in a + 1..p {
            let (u, v) = (perm[a], perm[b]);
            if rng.random_bool(conn[u][v]) {
                parents[v].insert(u);
            }
        }
    }
    Dag::from_parents(parents).expect("edges follow a fixed order")
}

/// Linear SEM ground truth.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub dag: Dag,
    /// Weight per edge of `dag`, sorted like `dag.edges()`.
    pub weights: Vec<(Edge, f64)>,
    pub data: DataSet,
}

impl GroundTruth {
    pub fn weight(&self, e: Edge) -> Option<f64> {
        self.weights.iter().find(|(f, _)| *f == e).map(|(_, w)| *w)
    }

    /// `src,dst,weight` rows.
    pub fn weights_csv(&self) -> String {
        let mut out = String::from("src,dst,weight\n");
        for (e, w) in &self.weights {
            out.push_str(&format!("{},{},{}\n", e.src, e.dst, w));
        }
        out
    }
}

/// `X_i = e_i + Σ_j B_ji X_j`, generated in topological order.
pub fn sample_sem<R: Rng + ?Sized>(
    g: &Dag,
    spec: &SemSpec,
    rng: &mut R,
) -> Result<GroundTruth, DataError> {
    let p = g.p();
    let weights: Vec<(Edge, f64)> = g
        .edges()
        .into_iter()
        .map(|e| (e, rng.random_range(spec.weight_low..=spec.weight_high)))
        .collect();
    let mut b = vec![0.0; p * p];
    for (e, w) in &weights {
        b[e.src * p + e.dst] = *w;
    }
    let topo = g.topological_order();
    let mut x = vec![0.0; spec.n * p];
    for r in 0..spec.n {
        let row = &mut x[r * p..(r + 1) * p];
        for &i in topo.perm() {
            let mean: f64 = g.parents(i).iter().map(|j| b[j * p + i] * row[j]).sum();
            row[i] = mean + spec.errors.draw(rng);
        }
    }
    let data = DataSet::from_matrix(spec.n, p, x)?;
    Ok(GroundTruth {
        dag: g.clone(),
        weights,
        data,
    })
}

/// Graph and data for `spec`, deterministic in `spec.seed`.
pub fn generate(spec: &SemSpec) -> Result<GroundTruth, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = sample_graph(&spec.graph, spec.p, &mut rng);
    sample_sem(&g, spec, &mut rng)
}

/// Cap for runs that draw DAGs with one extra parent.
pub fn plus_one_cap(p: usize) -> usize {
    10usize.max((3.0 + 0.05 * p as f64).round() as usize)
}

/// Cap for fixed-space runs.
pub fn fixed_cap(p: usize) -> usize {
    12usize.max((3.0 + 0.06 * p as f64).round() as usize)
}

/// Skeleton test level `min(0.4, 20 / p)`.
pub fn pc_alpha(p: usize) -> f64 {
    0.4f64.min(20.0 / p as f64)
}

/// Partial correlation of `i, j` given `cond` from a correlation matrix.
fn partial_correlation(corr: &[f64], p: usize, i: usize, j: usize, cond: &[usize]) -> f64 {
    match cond {
        [] => corr[i * p + j],
        [k] => {
            let (rij, rik, rjk) = (corr[i * p + j], corr[i * p + k], corr[j * p + k]);
            let den = ((1.0 - rik * rik) * (1.0 - rjk * rjk)).sqrt();
            if den > 0.0 {
                (rij - rik * rjk) / den
            } else {
                0.0
            }
        }
        _ => {
            let idx: Vec<usize> = [i, j].iter().chain(cond).copied().collect();
            let m = DMatrix::from_fn(idx.len(), idx.len(), |a, b| corr[idx[a] * p + idx[b]]);
            match m.try_inverse() {
                Some(inv) => -inv[(0, 1)] / (inv[(0, 0)] * inv[(1, 1)]).sqrt(),
                None => 0.0,
            }
        }
    }
}

/// Two-sided Fisher-z p-value for a partial correlation from `n` samples
/// with `k` conditioning variables.
pub fn fisher_z_pvalue(r: f64, n: usize, k: usize) -> f64 {
    let dof = n as f64 - k as f64 - 3.0;
    if dof <= 0.0 {
        return 1.0;
    }
    let r = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let z = r.atanh() * dof.sqrt();
    let normal = Normal::standard();
    2.0 * (1.0 - normal.cdf(z.abs()))
}

fn combinations(items: &[usize], k: usize, mut f: impl FnMut(&[usize]) -> bool) {
    fn rec(
        items: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for s in start..items.len() {
            cur.push(items[s]);
            if rec(items, k, s + 1, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    rec(items, k, 0, &mut Vec::with_capacity(k), &mut f);
}

/// Undirected skeleton from conditional-independence tests on conditioning
/// sets up to size `max_cond`, allowed in both directions and pruned so no
/// node keeps more than `cap` neighbours.
pub fn pc_skeleton(d: &DataSet, alpha: f64, max_cond: usize, cap: Option<usize>) -> SearchSpace {
    let (n, p) = (d.n(), d.p());
    let corr = d.correlation();
    let mut max_cond = max_cond;
    if n <= p + 3 && max_cond > 0 {
        log::warn!(
            "n = {n} is too small for conditional tests on p = {p}; using marginal tests only"
        );
        max_cond = 0;
    }
    let mut adj: Vec<NodeSet> = (0..p)
        .map(|i| NodeSet::full(p).difference(&NodeSet::singleton(i)))
        .collect();
    for level in 0..=max_cond {
        let snapshot = adj.clone();
        for i in 0..p {
            for j in i + 1..p {
                if !adj[i].contains(j) {
                    continue;
                }
                let mut independent = false;
                for (a, b) in [(i, j), (j, i)] {
                    let others: Vec<usize> = snapshot[a].iter().filter(|&k| k != b).collect();
                    if others.len() < level {
                        continue;
                    }
                    combinations(&others, level, |cond| {
                        let r = partial_correlation(&corr, p, i, j, cond);
                        independent = fisher_z_pvalue(r, n, cond.len()) > alpha;
                        independent
                    });
                    if independent {
                        break;
                    }
                }
                if independent {
                    adj[i].remove(j);
                    adj[j].remove(i);
                }
            }
        }
    }
    if let Some(k) = cap {
        while let Some(i) = (0..p).find(|&i| adj[i].len() > k) {
            let weakest = adj[i]
                .iter()
                .min_by(|&a, &b| corr[i * p + a].abs().total_cmp(&corr[i * p + b].abs()))
                .expect("node above cap has neighbours");
            adj[i].remove(weakest);
            adj[weakest].remove(i);
        }
    }
    SearchSpace::from_allowed(adj, cap).expect("pruned skeleton fits the cap")
}

/// Random permutation helper for tests and callers needing a reference order.
pub fn random_order<R: Rng + ?Sized>(p: usize, rng: &mut R) -> TopOrder {
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(rng);
    TopOrder::from_perm(perm).expect("shuffled indices form a permutation")
}
