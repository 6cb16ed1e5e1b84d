//! Brute-force joint-Gaussian reference for the structured GP.
//!
//! Builds the full (K_t + O K_x O^T) covariance over every observation and
//! conditions on it directly, at O((sum T_n)^3) cost. Deliberately shares
//! nothing with the structured inference path beyond the kernel functions;
//! used as the correctness oracle in tests and as the timing baseline.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{exp_decay_cov, matern52_cov};
use crate::linalg::JitteredCholesky;

use super::{CurveSet, GaussianPrediction, Hypers};

/// Largest total observation count the dense construction accepts.
const MAX_TOTAL_OBS: usize = 400;

pub struct DenseOracle {
    hypers: Hypers,
    data: CurveSet,
    observed: Vec<usize>,
    /// Offset of each observed curve's block in the joint vector.
    offsets: Vec<usize>,
    total: usize,
    chol: JitteredCholesky,
    /// Sigma^{-1} (y - m).
    alpha: DVector<f64>,
    log_density: f64,
    latent_mean: DVector<f64>,
    latent_cov: DMatrix<f64>,
}

/// Construct the dense joint model; fails when the joint exceeds the size guard.
pub fn dense_joint_oracle(data: &CurveSet, hypers: &Hypers) -> Result<DenseOracle> {
    DenseOracle::new(data, hypers)
}

impl DenseOracle {
    pub fn new(data: &CurveSet, hypers: &Hypers) -> Result<Self> {
        if hypers.space.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: hypers.space.dim(),
            });
        }
        let observed = data.observed_indices();
        if observed.is_empty() {
            return Err(Error::InvalidInput(
                "dense oracle needs at least one observation".into(),
            ));
        }
        let total = data.total_observations();
        if total > MAX_TOTAL_OBS {
            return Err(Error::SizeGuard(format!(
                "dense oracle limited to {MAX_TOTAL_OBS} observations, got {total}"
            )));
        }
        let mut offsets = Vec::with_capacity(observed.len());
        let mut pos = 0usize;
        for &n in &observed {
            offsets.push(pos);
            pos += data.losses(n).len();
        }
        // Sigma = blockdiag(K_tn) + O K_x O^T, written entry by entry:
        // Sigma[(n,t),(n',t')] = kx(x_n, x_n') + delta_nn' (k_t(t,t') + delta_tt' s2).
        let mut sigma = DMatrix::zeros(total, total);
        for (bi, &n) in observed.iter().enumerate() {
            for (bj, &np) in observed.iter().enumerate() {
                let kx = matern52_cov(data.x(n), data.x(np), &hypers.space)?;
                let (ti, tj) = (data.losses(n).len(), data.losses(np).len());
                for i in 0..ti {
                    for j in 0..tj {
                        let mut v = kx;
                        if n == np {
                            v += exp_decay_cov(
                                (i + 1) as f64,
                                (j + 1) as f64,
                                &hypers.curve,
                                i == j,
                            )?;
                        }
                        sigma[(offsets[bi] + i, offsets[bj] + j)] = v;
                    }
                }
            }
        }
        let m = hypers.space.mean;
        let mut resid = DVector::zeros(total);
        for (bi, &n) in observed.iter().enumerate() {
            for (i, &y) in data.losses(n).iter().enumerate() {
                resid[offsets[bi] + i] = y - m;
            }
        }
        let chol = JitteredCholesky::new(&sigma)?;
        let alpha = chol.solve_vec(&resid);
        let log_density = -0.5 * resid.dot(&alpha)
            - 0.5 * chol.ln_det()
            - 0.5 * total as f64 * (2.0 * std::f64::consts::PI).ln();
        // Latent posterior over observed configs: cov(f, y)[(n, (n',t))] = kx(x_n, x_n').
        let nobs = observed.len();
        let mut cov_fy = DMatrix::zeros(nobs, total);
        let mut kx_obs = DMatrix::zeros(nobs, nobs);
        for (bi, &n) in observed.iter().enumerate() {
            for (bj, &np) in observed.iter().enumerate() {
                let kx = matern52_cov(data.x(n), data.x(np), &hypers.space)?;
                kx_obs[(bi, bj)] = kx;
                for j in 0..data.losses(np).len() {
                    cov_fy[(bi, offsets[bj] + j)] = kx;
                }
            }
        }
        let latent_mean = DVector::from_element(nobs, m) + &cov_fy * &alpha;
        let latent_cov = &kx_obs - &cov_fy * chol.solve_mat(&cov_fy.transpose());
        Ok(Self {
            hypers: hypers.clone(),
            data: data.clone(),
            observed,
            offsets,
            total,
            chol,
            alpha,
            log_density,
            latent_mean,
            latent_cov,
        })
    }

    pub fn log_density(&self) -> f64 {
        self.log_density
    }

    /// Latent asymptote posterior mean over observed configs.
    pub fn latent_mean(&self) -> &DVector<f64> {
        &self.latent_mean
    }

    pub fn latent_cov(&self) -> &DMatrix<f64> {
        &self.latent_cov
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    fn condition(&self, cov: &DVector<f64>, prior_mean: f64, prior_var: f64) -> GaussianPrediction {
        let mean = prior_mean + cov.dot(&self.alpha);
        let var = (prior_var - cov.dot(&self.chol.solve_vec(cov))).max(0.0);
        GaussianPrediction { mean, var }
    }

    /// Covariance between the asymptote at `x` and every observation.
    fn asymptote_cross(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut cov = DVector::zeros(self.total);
        for (bi, &n) in self.observed.iter().enumerate() {
            let kx = matern52_cov(x, self.data.x(n), &self.hypers.space)?;
            for i in 0..self.data.losses(n).len() {
                cov[self.offsets[bi] + i] = kx;
            }
        }
        Ok(cov)
    }

    /// Asymptote posterior at a new point.
    pub fn asymptote_new(&self, x: &[f64]) -> Result<GaussianPrediction> {
        let cov = self.asymptote_cross(x)?;
        let prior = matern52_cov(x, x, &self.hypers.space)?;
        Ok(self.condition(&cov, self.hypers.space.mean, prior))
    }

    /// Future-epoch predictive for an observed curve (no observation noise
    /// at the predicted epoch).
    pub fn curve_next(&self, n: usize, t_star: u64) -> Result<GaussianPrediction> {
        if !self.observed.contains(&n) {
            return Err(Error::InvalidInput(format!("config {n} has no observations")));
        }
        let mut cov = self.asymptote_cross(self.data.x(n))?;
        let bi = self.observed.iter().position(|&i| i == n).unwrap();
        let ts = t_star as f64;
        for i in 0..self.data.losses(n).len() {
            cov[self.offsets[bi] + i] +=
                exp_decay_cov((i + 1) as f64, ts, &self.hypers.curve, false)?;
        }
        let prior = matern52_cov(self.data.x(n), self.data.x(n), &self.hypers.space)?
            + exp_decay_cov(ts, ts, &self.hypers.curve, false)?;
        Ok(self.condition(&cov, self.hypers.space.mean, prior))
    }

    /// First-epoch predictive for a configuration that has never been run
    /// (includes observation noise).
    pub fn curve_new(&self, x: &[f64], t_star: u64) -> Result<GaussianPrediction> {
        let cov = self.asymptote_cross(x)?;
        let ts = t_star as f64;
        let prior = matern52_cov(x, x, &self.hypers.space)?
            + exp_decay_cov(ts, ts, &self.hypers.curve, true)?;
        Ok(self.condition(&cov, self.hypers.space.mean, prior))
    }
}
