//! Edge probabilities from sampled DAGs and ranking metrics against a truth.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::graph::Dag;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    /// Ordered pairs `i -> j`.
    Directed,
    /// Unordered pairs, either direction counts.
    Skeleton,
}

impl std::str::FromStr for EdgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "directed" => Ok(EdgeMode::Directed),
            "skeleton" => Ok(EdgeMode::Skeleton),
            other => Err(format!(
                "unknown mode {other:?}, expected directed or skeleton"
            )),
        }
    }
}

/// Estimated edge probabilities, row `i` column `j` for `i -> j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeProbMatrix {
    p: usize,
    mode: EdgeMode,
    probs: Vec<f64>,
}

impl EdgeProbMatrix {
    pub fn from_dense(p: usize, mode: EdgeMode, probs: Vec<f64>) -> Result<Self, MetricsError> {
        if probs.len() != p * p {
            return Err(MetricsError::DimensionMismatch {
                left: probs.len(),
                right: p * p,
            });
        }
        Ok(EdgeProbMatrix { p, mode, probs })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mode(&self) -> EdgeMode {
        self.mode
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.p + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Comma-separated rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.p {
            let row: Vec<String> = (0..self.p).map(|j| self.get(i, j).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Edge frequencies over `trace`. Skeleton entries add both directions.
pub fn edge_probs<'a, I>(trace: I, mode: EdgeMode) -> Result<EdgeProbMatrix, MetricsError>
where
    I: IntoIterator<Item = &'a Dag>,
{
    let mut it = trace.into_iter().peekable();
    let p = it.peek().ok_or(MetricsError::EmptyTrace)?.p();
    let mut counts = vec![0usize; p * p];
    let mut total = 0usize;
    for g in it {
        if g.p() != p {
            return Err(MetricsError::DimensionMismatch {
                left: g.p(),
                right: p,
            });
        }
        total += 1;
        for e in g.edges() {
            counts[e.src * p + e.dst] += 1;
        }
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let probs = match mode {
        EdgeMode::Directed => freq,
        EdgeMode::Skeleton => (0..p * p)
            .map(|k| {
                let (i, j) = (k / p, k % p);
                if i == j {
                    0.0
                } else {
                    (freq[i * p + j] + freq[j * p + i]).min(1.0)
                }
            })
            .collect(),
    };
    Ok(EdgeProbMatrix { p, mode, probs })
}

/// Ranking metrics for one estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: EdgeMode,
    /// Undefined when the truth has no edges or no non-edges.
    pub roc_auc: Option<f64>,
    /// Undefined when the truth has no edges.
    pub pr_auc: Option<f64>,
    /// Mean probability on true edges.
    pub pr_plus: Option<f64>,
    /// Mean probability on non-edges.
    pub pr_minus: Option<f64>,
    pub runtime_seconds: f64,
}

impl MetricsReport {
    pub const CSV_COLUMNS: [&'static str; 6] = [
        "mode",
        "roc_auc",
        "pr_auc",
        "pr_plus",
        "pr_minus",
        "runtime_seconds",
    ];

    /// Header for a results file keyed by `keys`.
    pub fn csv_header(keys: &[&str]) -> String {
        keys.iter()
            .copied()
            .chain(Self::CSV_COLUMNS)
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Row matching [`csv_header`](Self::csv_header); undefined metrics are
    /// empty cells.
    pub fn csv_row(&self, values: &[String]) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mode = match self.mode {
            EdgeMode::Directed => "directed",
            EdgeMode::Skeleton => "skeleton",
        };
        values
            .iter()
            .cloned()
            .chain([
                mode.to_string(),
                opt(self.roc_auc),
                opt(self.pr_auc),
                opt(self.pr_plus),
                opt(self.pr_minus),
                self.runtime_seconds.to_string(),
            ])
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// `(score, is_edge)` per instance: ordered pairs off the diagonal, or
/// unordered pairs with a symmetrized truth.
pub fn instances(probs: &EdgeProbMatrix, truth: &Dag) -> Vec<(f64, bool)> {
    let p = probs.p;
    let mut out = Vec::new();
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            match probs.mode {
                EdgeMode::Directed => out.push((probs.get(i, j), truth.has_edge(i, j))),
                EdgeMode::Skeleton if i < j => out.push((
                    probs.get(i, j),
                    truth.has_edge(i, j) || truth.has_edge(j, i),
                )),
                EdgeMode::Skeleton => {}
            }
        }
    }
    out
}

/// Area under the ROC curve as the Mann-Whitney statistic, ties counting
/// one half.
pub fn roc_auc(inst: &[(f64, bool)]) -> Option<f64> {
    let pos = inst.iter().filter(|x| x.1).count();
    let neg = inst.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = inst.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < sorted.len() {
        let mut end = k;
        while end + 1 < sorted.len() && sorted[end + 1].0 == sorted[k].0 {
            end += 1;
        }
        let mid = (k + end) as f64 / 2.0 + 1.0;
        rank_sum += mid * sorted[k..=end].iter().filter(|x| x.1).count() as f64;
        k = end + 1;
    }
    let pos_f = pos as f64;
    Some((rank_sum - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

/// Average precision: precision at each distinct threshold weighted by the
/// recall gained there.
pub fn pr_auc(inst: &[(f64, bool)]) -> Option<f64> {
    let pos = inst.iter().filter(|x| x.1).count();
    if pos == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = inst.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut k = 0;
    while k < sorted.len() {
        let mut end = k;
        while end + 1 < sorted.len() && sorted[end + 1].0 == sorted[k].0 {
            end += 1;
        }
        let gained = sorted[k..=end].iter().filter(|x| x.1).count();
        tp += gained;
        fp += end + 1 - k - gained;
        if gained > 0 {
            ap += gained as f64 / pos as f64 * tp as f64 / (tp + fp) as f64;
        }
        k = end + 1;
    }
    Some(ap)
}

fn mean_where(inst: &[(f64, bool)], label: bool) -> Option<f64> {
    let v: Vec<f64> = inst.iter().filter(|x| x.1 == label).map(|x| x.0).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn evaluate(probs: &EdgeProbMatrix, truth: &Dag) -> Result<MetricsReport, MetricsError> {
    if probs.p != truth.p() {
        return Err(MetricsError::DimensionMismatch {
            left: probs.p,
            right: truth.p(),
        });
    }
    let inst = instances(probs, truth);
    Ok(MetricsReport {
        mode: probs.mode,
        roc_auc: roc_auc(&inst),
        pr_auc: pr_auc(&inst),
        pr_plus: mean_where(&inst, true),
        pr_minus: mean_where(&inst, false),
        runtime_seconds: 0.0,
    })
}
