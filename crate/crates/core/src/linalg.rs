//! Dense linear-algebra helpers: jitter-laddered Cholesky factorization and
//! generalized Gauss-Laguerre rules for the kernel quadrature oracle.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// First jitter level, relative to the mean diagonal.
const JITTER_START: f64 = 1e-10;
/// Last jitter level tried before giving up, relative to the mean diagonal.
const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor obtained after repairing near-PSD matrices with an
/// escalating diagonal jitter: eps = mean(diag) * 1e-10, x10 per attempt,
/// failing beyond mean(diag) * 1e-4.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    factor: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl JitteredCholesky {
    pub fn new(mat: &DMatrix<f64>) -> Result<Self> {
        let n = mat.nrows();
        if n == 0 || mat.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "cholesky needs a non-empty square matrix, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if let Some(factor) = Cholesky::new(mat.clone()).filter(pivots_trustworthy) {
            return Ok(Self {
                factor,
                jitter: 0.0,
            });
        }
        let mean_diag = mat.diagonal().sum() / n as f64;
        let scale = if mean_diag.is_finite() && mean_diag > 0.0 {
            mean_diag
        } else {
            1.0
        };
        let mut eps = JITTER_START;
        while eps <= JITTER_MAX * (1.0 + 1e-12) {
            let mut jittered = mat.clone();
            for i in 0..n {
                jittered[(i, i)] += eps * scale;
            }
            if let Some(factor) = Cholesky::new(jittered).filter(pivots_trustworthy) {
                return Ok(Self {
                    factor,
                    jitter: eps * scale,
                });
            }
            eps *= 10.0;
        }
        Err(Error::NotPositiveDefinite {
            max_jitter: JITTER_MAX * scale,
        })
    }

    /// Diagonal jitter that was added to obtain the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(b)
    }

    /// log |A| from the factor diagonal.
    pub fn ln_det(&self) -> f64 {
        let l = self.factor.l_dirty();
        let mut acc = 0.0;
        for i in 0..l.nrows() {
            acc += l[(i, i)].ln();
        }
        2.0 * acc
    }

    /// Lower-triangular factor (clones).
    pub fn l(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    /// x^T A^{-1} x without forming the full solve.
    pub fn inv_quad(&self, x: &DVector<f64>) -> f64 {
        let y = self.solve_vec(x);
        x.dot(&y)
    }
}

/// A factorization whose pivot spread exceeds ~1e14 in condition is rounding
/// noise rather than information (its log-determinant would be garbage), so
/// such factors escalate to the next jitter level instead of being accepted.
fn pivots_trustworthy(factor: &Cholesky<f64, Dyn>) -> bool {
    let l = factor.l_dirty();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..l.nrows() {
        let p = l[(i, i)];
        if !(p.is_finite() && p > 0.0) {
            return false;
        }
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (lo / hi) * (lo / hi) > 1e-14
}

/// Nodes and weights of the n-point generalized Gauss-Laguerre rule for the
/// weight x^a e^{-x} on [0, inf), computed via the Golub-Welsch eigenproblem
/// on the Jacobi matrix of the generalized Laguerre recurrence.
pub fn gauss_laguerre(n: usize, a: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidInput("quadrature needs n >= 1".into()));
    }
    if !(a > -1.0) {
        return Err(Error::InvalidInput(format!(
            "generalized Laguerre weight exponent must exceed -1, got {a}"
        )));
    }
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 0..n {
        jacobi[(k, k)] = 2.0 * k as f64 + a + 1.0;
        if k > 0 {
            let off = (k as f64 * (k as f64 + a)).sqrt();
            jacobi[(k, k - 1)] = off;
            jacobi[(k - 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mu0 = statrs::function::gamma::gamma(a + 1.0);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(pairs.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_ladder_repairs_near_psd() {
        // Rank-deficient PSD matrix: plain Cholesky may fail, jitter must fix it.
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mat = &v * v.transpose();
        let chol = JitteredCholesky::new(&mat).unwrap();
        assert!(chol.jitter() >= 0.0);
        // Solve consistency on the jittered system.
        let b = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let x = chol.solve_vec(&b);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn jitter_rejects_indefinite() {
        let mat = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            JitteredCholesky::new(&mat),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn gauss_laguerre_weights_sum_to_gamma() {
        for &a in &[-0.5, 0.0, 1.0, 2.5] {
            let (_, w) = gauss_laguerre(64, a).unwrap();
            let total: f64 = w.iter().sum();
            let expect = statrs::function::gamma::gamma(a + 1.0);
            assert!(
                (total - expect).abs() < 1e-10 * expect.max(1.0),
                "a={a}: {total} vs {expect}"
            );
        }
    }

    #[test]
    fn gauss_laguerre_integrates_polynomials() {
        // For weight e^{-x}: int x^k e^{-x} dx = k!.
        let (x, w) = gauss_laguerre(16, 0.0).unwrap();
        let mut fact = 1.0;
        for k in 0..8u32 {
            if k > 0 {
                fact *= k as f64;
            }
            let got: f64 = x
                .iter()
                .zip(&w)
                .map(|(&xi, &wi)| wi * xi.powi(k as i32))
                .sum();
            assert!((got - fact).abs() < 1e-9 * fact.max(1.0), "k={k}");
        }
    }
}
