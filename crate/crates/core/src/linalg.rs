//! Small dense Cholesky factorizations and their rank-one modifications.
//!
//! Matrices are row-major `Vec<f64>`. Only the lower triangle of a factor is
//! meaningful.

use crate::error::NumericError;

/// Pivots at or below this value are treated as loss of positive definiteness.
pub const PD_GUARD: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    n: usize,
    l: Vec<f64>,
}

impl CholeskyFactor {
    pub fn identity(n: usize) -> Self {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            l[i * n + i] = 1.0;
        }
        CholeskyFactor { n, l }
    }

    /// Factor a symmetric positive definite `n x n` matrix.
    pub fn factor(a: &[f64], n: usize) -> Result<Self, NumericError> {
        if a.len() != n * n {
            return Err(NumericError::Dimension(format!(
                "expected {} entries, got {}",
                n * n,
                a.len()
            )));
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= PD_GUARD || !d.is_finite() {
                return Err(NumericError::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(CholeskyFactor { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.l
    }

    /// `log |A| = 2 Σ log L_kk`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|k| self.l[k * self.n + k].ln())
            .sum::<f64>()
    }

    /// Solve `L z = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, z)| l * z).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Reconstruct `L Lᵀ`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.l[i * n + k] * self.l[j * n + k]).sum();
                a[i * n + j] = s;
                a[j * n + i] = s;
            }
        }
        a
    }

    /// Factor of the bordered matrix `[[A, c], [cᵀ, d]]` in `O(n²)`.
    pub fn extend(&self, col: &[f64], diag: f64) -> Result<Self, NumericError> {
        let n = self.n;
        let mut z = col.to_vec();
        self.forward_solve(&mut z);
        let d2 = diag - z.iter().map(|v| v * v).sum::<f64>();
        if d2 <= PD_GUARD || !d2.is_finite() {
            return Err(NumericError::NotPositiveDefinite {
                pivot: n,
                value: d2,
            });
        }
        let m = n + 1;
        let mut l = vec![0.0; m * m];
        for i in 0..n {
            l[i * m..i * m + i + 1].copy_from_slice(&self.l[i * n..i * n + i + 1]);
        }
        l[n * m..n * m + n].copy_from_slice(&z);
        l[n * m + n] = d2.sqrt();
        Ok(CholeskyFactor { n: m, l })
    }
}

/// Cholesky factor of `A + v vᵀ` given the factor of `A`, in `O(n²)`.
pub fn chol_rank1_update(
    factor: &CholeskyFactor,
    v: &[f64],
) -> Result<CholeskyFactor, NumericError> {
    let n = factor.n;
    if v.len() != n {
        return Err(NumericError::Dimension(format!(
            "update vector has length {}, factor is {n}",
            v.len()
        )));
    }
    let mut l = factor.l.clone();
    let mut w = v.to_vec();
    for k in 0..n {
        let lkk = l[k * n + k];
        let r = lkk.hypot(w[k]);
        if r <= PD_GUARD.sqrt() || !r.is_finite() {
            return Err(NumericError::NotPositiveDefinite {
                pivot: k,
                value: r * r,
            });
        }
        let c = r / lkk;
        let s = w[k] / lkk;
        l[k * n + k] = r;
        for i in k + 1..n {
            let lik = (l[i * n + k] + s * w[i]) / c;
            w[i] = c * w[i] - s * lik;
            l[i * n + k] = lik;
        }
    }
    Ok(CholeskyFactor { n, l })
}
