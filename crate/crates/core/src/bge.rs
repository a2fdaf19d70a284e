//! Gaussian data sets and the BGe local score.
//!
//! For a node `i` with parent set `P` (size `l`) the log score is
//!
//! ```text
//! log S(i, P) = k(l) - ½ log|R_PP| - ½(α* - p + l + 1) log(R_ii - R_iP R_PP⁻¹ R_Pi)
//! ```
//!
//! where `R` is the posterior scale matrix, `α* = α_w + n` and `k(l)` collects
//! the gamma-function and prior-scale terms. The Schur complement comes from a
//! Cholesky factor of `R` restricted to `P ∪ {i}` with `i` ordered last.

use std::io::Read;
use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{DataError, NumericError};
use crate::graph::{Dag, NodeSet};
use crate::linalg::{CholeskyFactor, PD_GUARD};
use crate::logspace::LogScore;

/// Observations with mean-centered columns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataSet {
    n: usize,
    p: usize,
    /// Row-major `n x p`, centered.
    x: Vec<f64>,
    /// Row-major `p x p` cross products of the centered columns.
    xtx: Vec<f64>,
    means: Vec<f64>,
    zero_variance: Vec<usize>,
}

impl DataSet {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let n = rows.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        let p = rows[0].len();
        let mut x = Vec::with_capacity(n * p);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(DataError::Ragged {
                    row: r,
                    got: row.len(),
                    expected: p,
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(DataError::BadValue {
                    row: r,
                    col: c,
                    value: row[c].to_string(),
                });
            }
            x.extend_from_slice(row);
        }
        Ok(Self::from_raw(n, p, x))
    }

    /// Row-major `n x p` raw values.
    pub fn from_matrix(n: usize, p: usize, x: Vec<f64>) -> Result<Self, DataError> {
        if n == 0 {
            return Err(DataError::Empty);
        }
        if x.len() != n * p {
            return Err(DataError::Ragged {
                row: 0,
                got: x.len(),
                expected: n * p,
            });
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(DataError::BadValue {
                row: k / p,
                col: k % p,
                value: x[k].to_string(),
            });
        }
        Ok(Self::from_raw(n, p, x))
    }

    fn from_raw(n: usize, p: usize, mut x: Vec<f64>) -> Self {
        let mut means = vec![0.0; p];
        for row in x.chunks(p) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        for row in x.chunks_mut(p) {
            for (v, m) in row.iter_mut().zip(&means) {
                *v -= m;
            }
        }
        let mut xtx = vec![0.0; p * p];
        for row in x.chunks(p) {
            for a in 0..p {
                let va = row[a];
                for b in a..p {
                    xtx[a * p + b] += va * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtx[a * p + b] = xtx[b * p + a];
            }
        }
        let zero_variance: Vec<usize> = (0..p)
            .filter(|&a| xtx[a * p + a] <= 1e-12 * n as f64)
            .collect();
        if !zero_variance.is_empty() {
            warn!("columns with zero variance: {zero_variance:?}");
        }
        DataSet {
            n,
            p,
            x,
            xtx,
            means,
            zero_variance,
        }
    }

    /// Parse CSV with `p` numeric columns. Empty or non-numeric cells are rejected.
    pub fn from_csv<R: Read>(reader: R, has_header: bool) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| DataError::BadValue {
                row: r,
                col: 0,
                value: e.to_string(),
            })?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| DataError::BadValue {
                            row: r,
                            col: c,
                            value: cell.to_string(),
                        })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    /// CSV of the raw (uncentered) values, optional header `X0,X1,..`.
    pub fn to_csv(&self, header: bool) -> String {
        let mut out = String::new();
        if header {
            let names: Vec<String> = (0..self.p).map(|j| format!("X{j}")).collect();
            out.push_str(&names.join(","));
            out.push('\n');
        }
        for row in self.x.chunks(self.p) {
            let cells: Vec<String> = row
                .iter()
                .zip(&self.means)
                .map(|(v, m)| format!("{}", v + m))
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn xtx(&self) -> &[f64] {
        &self.xtx
    }

    /// Centered value at `(row, col)`.
    pub fn centered(&self, row: usize, col: usize) -> f64 {
        self.x[row * self.p + col]
    }

    pub fn zero_variance_columns(&self) -> &[usize] {
        &self.zero_variance
    }

    /// Sample correlation matrix, row-major.
    pub fn correlation(&self) -> Vec<f64> {
        let p = self.p;
        let sd: Vec<f64> = (0..p).map(|a| self.xtx[a * p + a].sqrt()).collect();
        let mut c = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                c[a * p + b] = if sd[a] > 0.0 && sd[b] > 0.0 {
                    self.xtx[a * p + b] / (sd[a] * sd[b])
                } else {
                    0.0
                };
            }
            c[a * p + a] = 1.0;
        }
        c
    }
}

/// BGe prior settings and the posterior quantities derived from the data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BgeHyper {
    pub alpha_mu: f64,
    pub alpha_w: f64,
    pub t_scale: f64,
    pub alpha_star: f64,
    n: usize,
    p: usize,
    /// Posterior scale matrix `R = tI + XᵀX`, row-major.
    r_mat: Vec<f64>,
    /// `k(l)` for `l = 0..p-1` parents.
    consts: Vec<f64>,
}

impl BgeHyper {
    /// Defaults `α_μ = 1`, `α_w = p + 2`.
    pub fn default_for(d: &DataSet) -> Result<Self, DataError> {
        Self::build(d, 1.0, d.p() as f64 + 2.0)
    }

    pub fn build(d: &DataSet, alpha_mu: f64, alpha_w: f64) -> Result<Self, DataError> {
        let (n, p) = (d.n(), d.p());
        if n == 0 {
            return Err(DataError::Empty);
        }
        if !(alpha_mu > 0.0) {
            return Err(DataError::Hyper(format!(
                "alpha_mu must be positive, got {alpha_mu}"
            )));
        }
        if !(alpha_w > p as f64 + 1.0) {
            // t = α_μ(α_w - p - 1)/(α_μ + 1) must be positive.
            return Err(DataError::Hyper(format!(
                "alpha_w must exceed p + 1 = {}, got {alpha_w}",
                p + 1
            )));
        }
        let t_scale = alpha_mu * (alpha_w - p as f64 - 1.0) / (alpha_mu + 1.0);
        let alpha_star = alpha_w + n as f64;
        // Data are centered and the prior mean is zero, so the mean-shift term vanishes.
        let mut r_mat = d.xtx().to_vec();
        for a in 0..p {
            r_mat[a * p + a] += t_scale;
        }
        let nf = n as f64;
        let pf = p as f64;
        let consts = (0..p.max(1))
            .map(|l| {
                let lf = l as f64;
                0.5 * (alpha_mu / (nf + alpha_mu)).ln() - 0.5 * nf * std::f64::consts::PI.ln()
                    + ln_gamma((alpha_star - pf + lf + 1.0) / 2.0)
                    - ln_gamma((alpha_w - pf + lf + 1.0) / 2.0)
                    + 0.5 * (alpha_w - pf + 2.0 * lf + 1.0) * t_scale.ln()
            })
            .collect();
        Ok(BgeHyper {
            alpha_mu,
            alpha_w,
            t_scale,
            alpha_star,
            n,
            p,
            r_mat,
            consts,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r_mat(&self) -> &[f64] {
        &self.r_mat
    }

    #[inline]
    pub fn r(&self, a: usize, b: usize) -> f64 {
        self.r_mat[a * self.p + b]
    }

    /// Score constant for a parent set of size `l`.
    pub fn constant(&self, l: usize) -> f64 {
        self.consts[l]
    }

    /// Exponent multiplying `log` of the Schur complement for `l` parents.
    fn schur_weight(&self, l: usize) -> f64 {
        0.5 * (self.alpha_star - self.p as f64 + l as f64 + 1.0)
    }
}

/// BGe scorer with an evaluation counter.
///
/// Every local score produced (fresh or through a rank-one extension)
/// increments the counter by one.
#[derive(Debug)]
pub struct BgeScore {
    hyper: BgeHyper,
    evals: AtomicU64,
}

impl Clone for BgeScore {
    fn clone(&self) -> Self {
        BgeScore {
            hyper: self.hyper.clone(),
            evals: AtomicU64::new(self.evaluations()),
        }
    }
}

impl BgeScore {
    pub fn new(hyper: BgeHyper) -> Self {
        BgeScore {
            hyper,
            evals: AtomicU64::new(0),
        }
    }

    pub fn from_data(d: &DataSet) -> Result<Self, DataError> {
        Ok(Self::new(BgeHyper::default_for(d)?))
    }

    pub fn hyper(&self) -> &BgeHyper {
        &self.hyper
    }

    pub fn p(&self) -> usize {
        self.hyper.p
    }

    pub fn evaluations(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    fn count(&self, k: usize) {
        self.evals.fetch_add(k as u64, Ordering::Relaxed);
    }

    fn gather(&self, idx: &[usize]) -> Vec<f64> {
        let k = idx.len();
        let mut m = vec![0.0; k * k];
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                m[a * k + b] = self.hyper.r(ia, ib);
            }
        }
        m
    }

    /// Local log score of node `i` with the given parents; `-inf` when the
    /// relevant submatrix of `R` is numerically singular.
    pub fn node_score(&self, i: usize, parents: &NodeSet) -> LogScore {
        debug_assert!(!parents.contains(i));
        let idx: Vec<usize> = parents.iter().collect();
        self.score_list(i, &idx)
    }

    /// Same as [`node_score`](Self::node_score) with parents given as a list.
    pub fn score_list(&self, i: usize, parents: &[usize]) -> LogScore {
        self.count(1);
        let l = parents.len();
        let mut idx = parents.to_vec();
        idx.push(i);
        let Ok(f) = CholeskyFactor::factor(&self.gather(&idx), l + 1) else {
            return f64::NEG_INFINITY;
        };
        let log_det_pa = 2.0 * (0..l).map(|k| f.get(k, k).ln()).sum::<f64>();
        let log_schur = 2.0 * f.get(l, l).ln();
        self.hyper.constant(l) - 0.5 * log_det_pa - self.hyper.schur_weight(l) * log_schur
    }

    /// Sum of local scores over all nodes of `g`.
    pub fn dag_score(&self, g: &Dag) -> LogScore {
        (0..g.p()).map(|i| self.node_score(i, g.parents(i))).sum()
    }

    /// Scores of `parents` and of `parents ∪ {j}` for every `j` in `cands`,
    /// reusing one factorization of `R_PP`. Plus-one scores are written to
    /// `out` (same length as `cands`); the base score is returned.
    pub fn row_scores(
        &self,
        i: usize,
        parents: &[usize],
        cands: &[usize],
        out: &mut [f64],
    ) -> LogScore {
        assert_eq!(out.len(), cands.len());
        self.count(1 + cands.len());
        let h = &self.hyper;
        let l = parents.len();
        let q = cands.len();
        let fail = |out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            f64::NEG_INFINITY
        };
        let f = match CholeskyFactor::factor(&self.gather(parents), l) {
            Ok(f) => f,
            Err(_) => return fail(out),
        };
        let log_det_pa = f.log_det();
        let mut w: Vec<f64> = parents.iter().map(|&a| h.r(a, i)).collect();
        f.forward_solve(&mut w);
        let schur = h.r(i, i) - w.iter().map(|v| v * v).sum::<f64>();
        let base = if schur > PD_GUARD {
            h.constant(l) - 0.5 * log_det_pa - h.schur_weight(l) * schur.ln()
        } else {
            f64::NEG_INFINITY
        };
        if q == 0 {
            return base;
        }
        if !(schur > PD_GUARD) {
            return fail(out);
        }
        // Z = L⁻¹ R[P, cands], solved for all candidates at once, row by row.
        let mut z = vec![0.0; l * q];
        let mut zz = vec![0.0; q];
        let mut zw = vec![0.0; q];
        for a in 0..l {
            let (done, rest) = z.split_at_mut(a * q);
            let row = &mut rest[..q];
            let ra = &h.r_mat[parents[a] * h.p..(parents[a] + 1) * h.p];
            for (v, &c) in row.iter_mut().zip(cands) {
                *v = ra[c];
            }
            for b in 0..a {
                let lab = f.get(a, b);
                let prev = &done[b * q..(b + 1) * q];
                for (v, pv) in row.iter_mut().zip(prev) {
                    *v -= lab * pv;
                }
            }
            let inv = 1.0 / f.get(a, a);
            let wa = w[a];
            for ((v, s2), sw) in row.iter_mut().zip(zz.iter_mut()).zip(zw.iter_mut()) {
                *v *= inv;
                *s2 += *v * *v;
                *sw += *v * wa;
            }
        }
        let k1 = h.constant(l + 1);
        let sw1 = h.schur_weight(l + 1);
        let ri = &h.r_mat[i * h.p..(i + 1) * h.p];
        for (c, &j) in cands.iter().enumerate() {
            let d2 = h.r(j, j) - zz[c];
            if !(d2 > PD_GUARD) {
                out[c] = f64::NEG_INFINITY;
                continue;
            }
            let u = (ri[j] - zw[c]) / d2.sqrt();
            let schur_j = schur - u * u;
            out[c] = if schur_j > PD_GUARD {
                k1 - 0.5 * (log_det_pa + d2.ln()) - sw1 * schur_j.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        base
    }

    /// Base and plus-one scores of node `i` for every parent set
    /// `fixed ∪ {cands[k] : bit k of s}`, written to `score[s]` and to row `s`
    /// of `plus` (row-major, width `plus_cands.len()`).
    ///
    /// Subsets are visited depth-first, so each one extends the factor of
    /// its parent subset by a single row.
    pub fn subset_scores(
        &self,
        i: usize,
        fixed: &[usize],
        cands: &[usize],
        plus_cands: &[usize],
        score: &mut [f64],
        plus: &mut [f64],
    ) {
        let rows = 1usize << cands.len();
        let q = plus_cands.len();
        assert_eq!(score.len(), rows);
        assert_eq!(plus.len(), rows * q);
        self.count(rows * (1 + q));
        let depth = fixed.len() + cands.len();
        let mut w = SubsetWalk {
            h: &self.hyper,
            i,
            cands,
            plus_cands,
            q,
            parents: Vec::with_capacity(depth),
            l: vec![0.0; depth * depth],
            z: vec![0.0; depth * q],
            w: vec![0.0; depth],
            zz: vec![0.0; (depth + 1) * q],
            zw: vec![0.0; (depth + 1) * q],
            schur: vec![0.0; depth + 1],
            log_det: vec![0.0; depth + 1],
            score,
            plus,
        };
        w.schur[0] = self.hyper.r(i, i);
        for &a in fixed {
            if !w.push(a) {
                w.score.fill(f64::NEG_INFINITY);
                w.plus.fill(f64::NEG_INFINITY);
                return;
            }
        }
        w.visit(0, 0);
    }

    /// `S(i, pa ∪ {j})` for every `j` in `candidates`, via rank-one extension
    /// of the factorization for `pa`.
    pub fn plus_one_scores(
        &self,
        i: usize,
        pa: &NodeSet,
        candidates: &NodeSet,
    ) -> Result<Vec<LogScore>, NumericError> {
        if pa.contains(i) || candidates.contains(i) || !candidates.intersection(pa).is_empty() {
            return Err(NumericError::Dimension(
                "candidates must exclude the node and its parents".into(),
            ));
        }
        let parents: Vec<usize> = pa.iter().collect();
        let cands: Vec<usize> = candidates.iter().collect();
        let mut out = vec![0.0; cands.len()];
        self.row_scores(i, &parents, &cands, &mut out);
        Ok(out)
    }
}

struct SubsetWalk<'a> {
    h: &'a BgeHyper,
    i: usize,
    cands: &'a [usize],
    plus_cands: &'a [usize],
    q: usize,
    parents: Vec<usize>,
    /// Rows of the Cholesky factor along the current path, stride `depth`.
    l: Vec<f64>,
    /// `L⁻¹ R[P, plus_cands]`, one row per parent.
    z: Vec<f64>,
    /// `L⁻¹ R[P, i]`.
    w: Vec<f64>,
    /// Running column sums of `z²` and `z w`, one row per depth.
    zz: Vec<f64>,
    zw: Vec<f64>,
    schur: Vec<f64>,
    log_det: Vec<f64>,
    score: &'a mut [f64],
    plus: &'a mut [f64],
}

impl SubsetWalk<'_> {
    /// Appends parent `a`; false when the extended `R_PP` loses definiteness.
    fn push(&mut self, a: usize) -> bool {
        let h = self.h;
        let d = self.parents.len();
        let stride = self.w.len();
        let q = self.q;
        let ra = &h.r_mat[a * h.p..(a + 1) * h.p];
        let (prev, row) = self.l.split_at_mut(d * stride);
        let row = &mut row[..=d];
        let mut piv = ra[a];
        for b in 0..d {
            let lb = &prev[b * stride..b * stride + b + 1];
            let s: f64 = (0..b).map(|c| row[c] * lb[c]).sum();
            row[b] = (ra[self.parents[b]] - s) / lb[b];
            piv -= row[b] * row[b];
        }
        if !(piv > PD_GUARD) || !piv.is_finite() {
            return false;
        }
        let diag = piv.sqrt();
        row[d] = diag;
        let inv = 1.0 / diag;
        let wd = (ra[self.i] - (0..d).map(|b| row[b] * self.w[b]).sum::<f64>()) * inv;
        self.w[d] = wd;
        self.schur[d + 1] = self.schur[d] - wd * wd;
        self.log_det[d + 1] = self.log_det[d] + piv.ln();
        let (done, rest) = self.z.split_at_mut(d * q);
        let zrow = &mut rest[..q];
        for (v, &c) in zrow.iter_mut().zip(self.plus_cands) {
            *v = ra[c];
        }
        for b in 0..d {
            let lab = row[b];
            for (v, pv) in zrow.iter_mut().zip(&done[b * q..(b + 1) * q]) {
                *v -= lab * pv;
            }
        }
        let (acc, next) = self.zz.split_at_mut((d + 1) * q);
        let (wacc, wnext) = self.zw.split_at_mut((d + 1) * q);
        let (zz0, zz1) = (&acc[d * q..], &mut next[..q]);
        let (zw0, zw1) = (&wacc[d * q..], &mut wnext[..q]);
        for c in 0..q {
            let v = zrow[c] * inv;
            zrow[c] = v;
            zz1[c] = zz0[c] + v * v;
            zw1[c] = zw0[c] + v * wd;
        }
        self.parents.push(a);
        true
    }

    fn emit(&mut self, s: usize) {
        let h = self.h;
        let d = self.parents.len();
        let q = self.q;
        let schur = self.schur[d];
        let row = &mut self.plus[s * q..(s + 1) * q];
        if !(schur > PD_GUARD) {
            self.score[s] = f64::NEG_INFINITY;
            row.fill(f64::NEG_INFINITY);
            return;
        }
        let log_det = self.log_det[d];
        self.score[s] = h.constant(d) - 0.5 * log_det - h.schur_weight(d) * schur.ln();
        if q == 0 {
            return;
        }
        let k1 = h.constant(d + 1);
        let sw1 = h.schur_weight(d + 1);
        let ri = &h.r_mat[self.i * h.p..(self.i + 1) * h.p];
        let zz = &self.zz[d * q..(d + 1) * q];
        let zw = &self.zw[d * q..(d + 1) * q];
        for (c, &j) in self.plus_cands.iter().enumerate() {
            let d2 = h.r(j, j) - zz[c];
            row[c] = if d2 > PD_GUARD {
                let u = (ri[j] - zw[c]) / d2.sqrt();
                let schur_j = schur - u * u;
                if schur_j > PD_GUARD {
                    k1 - 0.5 * (log_det + d2.ln()) - sw1 * schur_j.ln()
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                f64::NEG_INFINITY
            };
        }
    }

    fn visit(&mut self, s: usize, from: usize) {
        self.emit(s);
        for k in from..self.cands.len() {
            let t = s | 1 << k;
            if self.push(self.cands[k]) {
                self.visit(t, k + 1);
                self.parents.pop();
            } else {
                // Every superset shares the singular principal block.
                let high = self.cands.len() - k - 1;
                for rest in 0..1usize << high {
                    let u = t | rest << (k + 1);
                    self.score[u] = f64::NEG_INFINITY;
                    self.plus[u * self.q..(u + 1) * self.q].fill(f64::NEG_INFINITY);
                }
            }
        }
    }
}
