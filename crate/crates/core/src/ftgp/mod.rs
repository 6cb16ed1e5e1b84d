//! Structured Gaussian process over families of training curves.
//!
//! Each configuration's loss curve is modeled as an independent GP with the
//! exponential-decay kernel, centered on a latent per-configuration asymptote;
//! the asymptotes are jointly drawn from a warped Matern-5/2 GP over the
//! hyperparameter space. Exploiting that block-plus-low-rank structure, the
//! marginal likelihood, latent posterior, and predictive distributions all
//! cost O(N^3 + T^3 + N T^2) instead of the O(N^3 T^3) of the naive joint GP.
//!
//! [`dense`] holds the brute-force joint-Gaussian reference used to verify
//! this module.

pub mod dense;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::kernels::{
    self, exp_decay_cov, matern_cross_prewarped, matern_gram_prewarped, warp_point,
    ExpDecayParams, WarpedMaternParams,
};
use crate::linalg::JitteredCholesky;

/// One full assignment of GP hyperparameters: the space kernel (including the
/// constant mean) and the curve kernel (including noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypers {
    pub space: WarpedMaternParams,
    pub curve: ExpDecayParams,
}

/// A set of configurations with their (possibly empty) training curves.
///
/// Inputs live in the unit hypercube; epochs are the positive integers, so a
/// curve is just the ordered vector of its per-epoch losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    dim: usize,
    ids: Vec<u64>,
    xs: Vec<Vec<f64>>,
    curves: Vec<Vec<f64>>,
}

impl CurveSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            xs: Vec::new(),
            curves: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of configurations (observed or not).
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn add_config(&mut self, id: u64, x: Vec<f64>) -> Result<usize> {
        if self.ids.contains(&id) {
            return Err(Error::InvalidInput(format!("config id {id} already exists")));
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::InvalidInput(format!(
                "point {x:?} outside the unit hypercube"
            )));
        }
        self.ids.push(id);
        self.xs.push(x);
        self.curves.push(Vec::new());
        Ok(self.ids.len() - 1)
    }

    /// Append the next epoch's loss to a curve.
    pub fn push_loss(&mut self, index: usize, loss: f64) -> Result<()> {
        if index >= self.len() {
            return Err(Error::InvalidInput(format!("config index {index} out of range")));
        }
        if !loss.is_finite() {
            return Err(Error::InvalidInput(format!("loss must be finite, got {loss}")));
        }
        self.curves[index].push(loss);
        Ok(())
    }

    pub fn id(&self, index: usize) -> u64 {
        self.ids[index]
    }

    pub fn x(&self, index: usize) -> &[f64] {
        &self.xs[index]
    }

    pub fn losses(&self, index: usize) -> &[f64] {
        &self.curves[index]
    }

    pub fn epochs(&self, index: usize) -> u64 {
        self.curves[index].len() as u64
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&v| v == id)
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| !self.curves[n].is_empty()).collect()
    }

    pub fn total_observations(&self) -> usize {
        self.curves.iter().map(Vec::len).sum()
    }

    pub fn max_id(&self) -> Option<u64> {
        self.ids.iter().copied().max()
    }

    /// Range of all observed losses.
    pub fn y_bounds(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for curve in &self.curves {
            for &y in curve {
                lo = lo.min(y);
                hi = hi.max(y);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

/// A univariate Gaussian prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrediction {
    pub mean: f64,
    pub var: f64,
}

/// Epoch grid 1..=t as floats.
pub(crate) fn epoch_grid(t: usize) -> Vec<f64> {
    (1..=t).map(|e| e as f64).collect()
}

/// Scalar summaries of one curve against its own kernel Gram:
/// gamma_y = 1^T K^{-1} y, lambda = 1^T K^{-1} 1, quad_yy = y^T K^{-1} y.
/// With a constant mean m these give gamma(m) = gamma_y - m lambda and
/// r^T K^{-1} r = quad_yy - 2 m gamma_y + m^2 lambda.
#[derive(Debug, Clone)]
pub(crate) struct LiteStats {
    pub gamma_y: f64,
    pub lambda: f64,
    pub quad_yy: f64,
    pub ln_det: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct CurveStats {
    pub lite: LiteStats,
    pub chol: JitteredCholesky,
    pub kinv_y: DVector<f64>,
    pub kinv_1: DVector<f64>,
}

fn curve_stats(y: &[f64], p: &ExpDecayParams) -> Result<CurveStats> {
    let times = epoch_grid(y.len());
    let gram = kernels::curve_gram(&times, p, None)?;
    let chol = JitteredCholesky::new(&gram)?;
    let yv = DVector::from_column_slice(y);
    let ones = DVector::from_element(y.len(), 1.0);
    let kinv_y = chol.solve_vec(&yv);
    let kinv_1 = chol.solve_vec(&ones);
    let lite = LiteStats {
        gamma_y: ones.dot(&kinv_y),
        lambda: ones.dot(&kinv_1),
        quad_yy: yv.dot(&kinv_y),
        ln_det: chol.ln_det(),
    };
    Ok(CurveStats {
        lite,
        chol,
        kinv_y,
        kinv_1,
    })
}

pub(crate) fn all_lite_stats(
    data: &CurveSet,
    p: &ExpDecayParams,
) -> Result<Vec<Option<LiteStats>>> {
    let results = exec::map_indexed(data.len(), |n| {
        if data.losses(n).is_empty() {
            Ok(None)
        } else {
            curve_stats(data.losses(n), p).map(|s| Some(s.lite))
        }
    });
    results.into_iter().collect()
}

/// Everything the marginal likelihood needs besides the per-curve stats.
///
/// The gain term gamma^T (K_x^{-1} + Lambda)^{-1} gamma is evaluated through
/// u = Lambda^{-1} gamma and w = A^{-1} u (A = K_x + Lambda^{-1}) as
/// gamma . (u - Lambda^{-1} w), which stays cancellation-free even when some
/// lambda_n are enormous (near-interpolated curves).
pub(crate) fn lml_from_parts(
    lites: &[&LiteStats],
    kx: &DMatrix<f64>,
    m: f64,
    total_obs: usize,
) -> Result<f64> {
    let n = lites.len();
    debug_assert_eq!(kx.nrows(), n);
    let gamma = DVector::from_iterator(n, lites.iter().map(|s| s.gamma_y - m * s.lambda));
    let mut a = kx.clone();
    let mut ln_lambda = 0.0;
    let mut quad = 0.0;
    let mut ln_det_kt = 0.0;
    for (k, s) in lites.iter().enumerate() {
        a[(k, k)] += 1.0 / s.lambda;
        ln_lambda += s.lambda.ln();
        quad += s.quad_yy - 2.0 * m * s.gamma_y + m * m * s.lambda;
        ln_det_kt += s.ln_det;
    }
    let chol_a = JitteredCholesky::new(&a)?;
    let u = DVector::from_iterator(n, lites.iter().enumerate().map(|(k, s)| gamma[k] / s.lambda));
    let w = chol_a.solve_vec(&u);
    let gain: f64 = (0..n)
        .map(|k| gamma[k] * (u[k] - w[k] / lites[k].lambda))
        .sum();
    Ok(-0.5 * quad + 0.5 * gain
        - 0.5 * (chol_a.ln_det() + ln_lambda + ln_det_kt)
        - 0.5 * total_obs as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Log marginal likelihood of the curve data under the structured GP,
/// computed with the block-plus-low-rank identities. An empty data set has
/// log marginal likelihood 0.
pub fn log_marginal_likelihood(data: &CurveSet, hypers: &Hypers) -> Result<f64> {
    check_hypers(data, hypers)?;
    let lites = all_lite_stats(data, &hypers.curve)?;
    let observed = data.observed_indices();
    if observed.is_empty() {
        return Ok(0.0);
    }
    let xs: Vec<Vec<f64>> = observed.iter().map(|&n| data.x(n).to_vec()).collect();
    let kx = kernels::hyper_gram(&xs, &hypers.space)?;
    let picked: Vec<&LiteStats> = observed
        .iter()
        .map(|&n| lites[n].as_ref().expect("observed curve has stats"))
        .collect();
    lml_from_parts(&picked, &kx, hypers.space.mean, data.total_observations())
}

fn check_hypers(data: &CurveSet, hypers: &Hypers) -> Result<()> {
    if hypers.space.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: hypers.space.dim(),
        });
    }
    Ok(())
}

/// Target of a fantasy update: the next epoch of an existing configuration,
/// or the first epoch of a configuration at a fresh point.
#[derive(Debug, Clone)]
pub enum FantasyTarget {
    Old { config: usize },
    New { x: Vec<f64> },
}

/// Fitted structured GP with all factorizations cached.
///
/// Immutable once fitted; queries are safe to run from many threads.
#[derive(Clone)]
pub struct FtgpModel {
    hypers: Hypers,
    data: CurveSet,
    /// Config indices with at least one observation, ascending.
    observed: Vec<usize>,
    /// Per config; `None` for curves without observations.
    stats: Vec<Option<CurveStats>>,
    /// Warped coordinates for every config.
    warped: Vec<Vec<f64>>,
    /// Space-kernel Gram over observed configs.
    kx: DMatrix<f64>,
    /// Cholesky of A = K_x + Lambda^{-1} (observed configs).
    chol_a: Option<JitteredCholesky>,
    gamma: DVector<f64>,
    lambda: DVector<f64>,
    latent_mean: DVector<f64>,
    latent_cov: DMatrix<f64>,
    /// K_x^{-1} (mu - m) = gamma - A^{-1} K_x gamma.
    w: DVector<f64>,
    lml: f64,
}

/// Fit the structured GP: per-curve Cholesky factors, the latent asymptote
/// posterior (mu, C), and the marginal likelihood.
pub fn fit(data: &CurveSet, hypers: &Hypers) -> Result<FtgpModel> {
    FtgpModel::fit(data, hypers)
}

impl FtgpModel {
    pub fn fit(data: &CurveSet, hypers: &Hypers) -> Result<Self> {
        check_hypers(data, hypers)?;
        let stats: Vec<Option<CurveStats>> = exec::map_indexed(data.len(), |n| {
            if data.losses(n).is_empty() {
                Ok(None)
            } else {
                curve_stats(data.losses(n), &hypers.curve).map(Some)
            }
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let warped: Vec<Vec<f64>> = data
            .xs
            .iter()
            .map(|x| warp_point(x, &hypers.space))
            .collect::<Result<_>>()?;
        let mut model = Self {
            hypers: hypers.clone(),
            data: data.clone(),
            observed: data.observed_indices(),
            stats,
            warped,
            kx: DMatrix::zeros(0, 0),
            chol_a: None,
            gamma: DVector::zeros(0),
            lambda: DVector::zeros(0),
            latent_mean: DVector::zeros(0),
            latent_cov: DMatrix::zeros(0, 0),
            w: DVector::zeros(0),
            lml: 0.0,
        };
        model.rebuild_kx();
        model.rebuild_latent()?;
        Ok(model)
    }

    fn rebuild_kx(&mut self) {
        let warped_obs: Vec<Vec<f64>> = self
            .observed
            .iter()
            .map(|&n| self.warped[n].clone())
            .collect();
        self.kx = matern_gram_prewarped(
            &warped_obs,
            self.hypers.space.amplitude,
            &self.hypers.space.length_scales,
        );
    }

    /// Recompute everything downstream of the per-curve stats and K_x.
    fn rebuild_latent(&mut self) -> Result<()> {
        let n = self.observed.len();
        let m = self.hypers.space.mean;
        if n == 0 {
            self.chol_a = None;
            self.gamma = DVector::zeros(0);
            self.lambda = DVector::zeros(0);
            self.latent_mean = DVector::zeros(0);
            self.latent_cov = DMatrix::zeros(0, 0);
            self.w = DVector::zeros(0);
            self.lml = 0.0;
            return Ok(());
        }
        let mut gamma = DVector::zeros(n);
        let mut lambda = DVector::zeros(n);
        let mut quad = 0.0;
        let mut ln_lambda = 0.0;
        let mut ln_det_kt = 0.0;
        for (k, &idx) in self.observed.iter().enumerate() {
            let s = &self.stats[idx].as_ref().expect("observed curve has stats").lite;
            gamma[k] = s.gamma_y - m * s.lambda;
            lambda[k] = s.lambda;
            quad += s.quad_yy - 2.0 * m * s.gamma_y + m * m * s.lambda;
            ln_lambda += s.lambda.ln();
            ln_det_kt += s.ln_det;
        }
        let mut a = self.kx.clone();
        for k in 0..n {
            a[(k, k)] += 1.0 / lambda[k];
        }
        let chol_a = JitteredCholesky::new(&a)?;
        // Cancellation-free forms built on u = Lambda^{-1} gamma and
        // w = A^{-1} u:  K_x^{-1}(mu - m) = w,  mu = m + u - Lambda^{-1} w,
        // C = Lambda^{-1} A^{-1} K_x (symmetrized),
        // gamma^T C gamma = gamma . (mu - m).
        let u = DVector::from_iterator(n, (0..n).map(|k| gamma[k] / lambda[k]));
        let w = chol_a.solve_vec(&u);
        let mut mu = DVector::zeros(n);
        let mut gain = 0.0;
        for k in 0..n {
            let centered = u[k] - w[k] / lambda[k];
            mu[k] = m + centered;
            gain += gamma[k] * centered;
        }
        let total = self.data.total_observations();
        self.lml = -0.5 * quad + 0.5 * gain
            - 0.5 * (chol_a.ln_det() + ln_lambda + ln_det_kt)
            - 0.5 * total as f64 * (2.0 * std::f64::consts::PI).ln();
        let a_inv_kx = chol_a.solve_mat(&self.kx);
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            c[(i, i)] = a_inv_kx[(i, i)] / lambda[i];
            for j in 0..i {
                let avg = 0.5 * (a_inv_kx[(i, j)] / lambda[i] + a_inv_kx[(j, i)] / lambda[j]);
                c[(i, j)] = avg;
                c[(j, i)] = avg;
            }
        }
        self.latent_mean = mu;
        self.latent_cov = c;
        self.w = w;
        self.gamma = gamma;
        self.lambda = lambda;
        self.chol_a = Some(chol_a);
        Ok(())
    }

    pub fn hypers(&self) -> &Hypers {
        &self.hypers
    }

    pub fn data(&self) -> &CurveSet {
        &self.data
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Latent asymptote posterior mean over observed configs.
    pub fn latent_mean(&self) -> &DVector<f64> {
        &self.latent_mean
    }

    /// Latent asymptote posterior covariance over observed configs.
    pub fn latent_cov(&self) -> &DMatrix<f64> {
        &self.latent_cov
    }

    fn predict_from_warped(&self, wx: &[f64]) -> GaussianPrediction {
        let p = &self.hypers.space;
        if self.observed.is_empty() {
            return GaussianPrediction {
                mean: p.mean,
                var: p.amplitude,
            };
        }
        let warped_obs: Vec<&Vec<f64>> = self.observed.iter().map(|&n| &self.warped[n]).collect();
        let ks = DVector::from_iterator(
            warped_obs.len(),
            warped_obs.iter().map(|w| {
                kernels::matern52_from_r2(
                    p.amplitude,
                    kernels::scaled_sq_dist(w, wx, &p.length_scales),
                )
            }),
        );
        let chol_a = self.chol_a.as_ref().expect("observed curves imply factor");
        let mean = p.mean + ks.dot(&self.w);
        let var = (p.amplitude - chol_a.inv_quad(&ks)).max(0.0);
        GaussianPrediction { mean, var }
    }

    /// Posterior of the asymptote at a new point (conditioned on all curves).
    pub fn predict_asymptote_new(&self, x: &[f64]) -> Result<GaussianPrediction> {
        let wx = warp_point(x, &self.hypers.space)?;
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(format!(
                "point {x:?} outside the unit hypercube"
            )));
        }
        Ok(self.predict_from_warped(&wx))
    }

    /// Marginal of the latent asymptote posterior at an existing config.
    /// A config without observations is treated as a new point at its x.
    pub fn predict_asymptote_observed(&self, n: usize) -> Result<GaussianPrediction> {
        if n >= self.data.len() {
            return Err(Error::InvalidInput(format!("config index {n} out of range")));
        }
        match self.observed.iter().position(|&i| i == n) {
            Some(k) => Ok(GaussianPrediction {
                mean: self.latent_mean[k],
                var: self.latent_cov[(k, k)].max(0.0),
            }),
            None => Ok(self.predict_from_warped(&self.warped[n])),
        }
    }

    /// Predictive for the next (or any future) epoch of an observed curve:
    /// mean K_t*^T K_t^{-1} y + Omega mu_n with Omega = 1 - K_t*^T K_t^{-1} 1,
    /// variance K_t** - K_t*^T K_t^{-1} K_t* + Omega^2 C_nn. The t* diagonal
    /// carries no observation noise, so the prediction converges to the
    /// latent asymptote posterior as t* grows.
    pub fn predict_curve_next(&self, n: usize, t_star: u64) -> Result<GaussianPrediction> {
        if n >= self.data.len() {
            return Err(Error::InvalidInput(format!("config index {n} out of range")));
        }
        let stats = self.stats[n]
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("config {n} has no observations")))?;
        let t_n = self.data.epochs(n);
        if t_star <= t_n {
            return Err(Error::InvalidInput(format!(
                "t_star must exceed the observed {t_n} epochs, got {t_star}"
            )));
        }
        let k = self
            .observed
            .iter()
            .position(|&i| i == n)
            .expect("curve with stats is observed");
        let ts = t_star as f64;
        let p = &self.hypers.curve;
        let kst = DVector::from_iterator(
            t_n as usize,
            (1..=t_n).map(|t| exp_decay_cov(t as f64, ts, p, false).expect("valid times")),
        );
        let kss = exp_decay_cov(ts, ts, p, false)?;
        let kinv_kst = stats.chol.solve_vec(&kst);
        let omega = 1.0 - kst.dot(&stats.kinv_1);
        let mean = kst.dot(&stats.kinv_y) + omega * self.latent_mean[k];
        let var = (kss - kst.dot(&kinv_kst) + omega * omega * self.latent_cov[(k, k)]).max(0.0);
        Ok(GaussianPrediction { mean, var })
    }

    /// Predictive for epoch t* of a curve that has never been run: the
    /// asymptote posterior plus the full curve-kernel prior variance at t*,
    /// including observation noise.
    pub fn predict_curve_new(&self, x: &[f64], t_star: u64) -> Result<GaussianPrediction> {
        if t_star == 0 {
            return Err(Error::InvalidInput("epochs start at 1".into()));
        }
        let asym = self.predict_asymptote_new(x)?;
        let ts = t_star as f64;
        let kss = exp_decay_cov(ts, ts, &self.hypers.curve, true)?;
        Ok(GaussianPrediction {
            mean: asym.mean,
            var: kss + asym.var,
        })
    }

    /// Joint Gaussian over the asymptotes at a set of points. For points that
    /// coincide with observed configs this reproduces the latent posterior
    /// marginals and cross-covariances exactly.
    pub fn predict_asymptote_joint(
        &self,
        points: &[Vec<f64>],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = &self.hypers.space;
        let b = points.len();
        if b == 0 {
            return Err(Error::InvalidInput("need at least one point".into()));
        }
        let warped: Vec<Vec<f64>> = points
            .iter()
            .map(|x| warp_point(x, p))
            .collect::<Result<_>>()?;
        let kbb = matern_gram_prewarped(&warped, p.amplitude, &p.length_scales);
        if self.observed.is_empty() {
            return Ok((DVector::from_element(b, p.mean), kbb));
        }
        let warped_obs: Vec<Vec<f64>> = self
            .observed
            .iter()
            .map(|&n| self.warped[n].clone())
            .collect();
        let mut cross = DMatrix::zeros(self.observed.len(), b);
        for (j, wp) in warped.iter().enumerate() {
            cross.set_column(
                j,
                &matern_cross_prewarped(&warped_obs, wp, p.amplitude, &p.length_scales),
            );
        }
        let chol_a = self.chol_a.as_ref().expect("observed curves imply factor");
        let mean = DVector::from_element(b, p.mean) + cross.transpose() * &self.w;
        let mut cov = kbb - cross.transpose() * chol_a.solve_mat(&cross);
        for i in 0..b {
            for j in 0..i {
                let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = avg;
                cov[(j, i)] = avg;
            }
        }
        Ok((mean, cov))
    }

    /// Exact block update: a copy of this model conditioned on one more
    /// observation, re-deriving only the affected curve's factors and the
    /// N-sized latent quantities. Hyperparameters are held fixed.
    pub fn with_observation(&self, target: &FantasyTarget, y: f64) -> Result<FtgpModel> {
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("observation must be finite, got {y}")));
        }
        let mut next = self.clone();
        match target {
            FantasyTarget::Old { config } => {
                let n = *config;
                if n >= next.data.len() {
                    return Err(Error::InvalidInput(format!("config index {n} out of range")));
                }
                let was_empty = next.data.losses(n).is_empty();
                next.data.push_loss(n, y)?;
                next.stats[n] = Some(curve_stats(next.data.losses(n), &next.hypers.curve)?);
                if was_empty {
                    next.observed = next.data.observed_indices();
                    next.rebuild_kx();
                }
            }
            FantasyTarget::New { x } => {
                let id = next.data.max_id().map_or(0, |v| v + 1);
                let n = next.data.add_config(id, x.clone())?;
                next.data.push_loss(n, y)?;
                next.stats.push(Some(curve_stats(next.data.losses(n), &next.hypers.curve)?));
                next.warped.push(warp_point(x, &next.hypers.space)?);
                next.observed.push(n);
                next.rebuild_kx();
            }
        }
        next.rebuild_latent()?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests;
