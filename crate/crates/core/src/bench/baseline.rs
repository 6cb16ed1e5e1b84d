//! Fixed-epoch EI baseline: an ordinary GP over configurations with the
//! warped Matern-5/2 kernel on final-epoch losses, hyperparameters
//! slice-sampled under the same priors as the curve-aware model.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{hyper_gram, matern52_cov, WarpedMaternParams};
use crate::linalg::JitteredCholesky;
use crate::mcmc::{slice_sweep, HyperPriorSpec, Prior};

struct BaselineHypers {
    space: WarpedMaternParams,
    noise: f64,
}

/// Layout: [amplitude, ls_1..D, a_1..D, b_1..D, noise, mean].
fn decode(dim: usize, v: &[f64]) -> BaselineHypers {
    BaselineHypers {
        space: WarpedMaternParams::new(
            v[0],
            v[1..=dim].to_vec(),
            v[dim + 1..=2 * dim].to_vec(),
            v[2 * dim + 1..=3 * dim].to_vec(),
            v[3 * dim + 2],
        )
        .expect("sampler keeps baseline params valid"),
        noise: v[3 * dim + 1],
    }
}

fn log_marginal(xs: &[Vec<f64>], ys: &[f64], h: &BaselineHypers) -> f64 {
    let n = xs.len();
    let Ok(mut k) = hyper_gram(xs, &h.space) else {
        return f64::NEG_INFINITY;
    };
    for i in 0..n {
        k[(i, i)] += h.noise;
    }
    let Ok(chol) = JitteredCholesky::new(&k) else {
        return f64::NEG_INFINITY;
    };
    let r = DVector::from_iterator(n, ys.iter().map(|y| y - h.space.mean));
    let alpha = chol.solve_vec(&r);
    -0.5 * r.dot(&alpha) - 0.5 * chol.ln_det() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn sample_hypers<R: Rng + ?Sized>(
    xs: &[Vec<f64>],
    ys: &[f64],
    n_samples: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<Vec<BaselineHypers>> {
    let dim = xs[0].len();
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spec = HyperPriorSpec::new(dim, Some((lo, hi)));
    // reuse the shared prior shapes; the baseline has no curve kernel
    let mut defs = Vec::new();
    defs.push(crate::mcmc::ParamDef::log(spec.amplitude.clone()));
    for _ in 0..dim {
        defs.push(crate::mcmc::ParamDef::log(spec.length_scale.clone()));
    }
    for _ in 0..2 * dim {
        defs.push(crate::mcmc::ParamDef::log(spec.warp.clone()));
    }
    defs.push(crate::mcmc::ParamDef::log(spec.noise.clone()));
    let (mlo, mhi) = match spec.mean {
        Prior::Uniform { lo, hi } => (lo, hi),
        _ => unreachable!("mean prior is uniform"),
    };
    defs.push(crate::mcmc::ParamDef::linear(
        spec.mean.clone(),
        ((mhi - mlo) / 4.0).max(1e-3),
    ));

    let mut values = vec![1.0];
    values.extend(vec![5.0; dim]);
    values.extend(vec![1.0; 2 * dim]);
    values.push(0.01);
    values.push(ys.iter().sum::<f64>() / ys.len() as f64);

    let mut log_lik = |v: &[f64]| log_marginal(xs, ys, &decode(dim, v));
    for _ in 0..burn_in {
        slice_sweep(&mut values, &defs, &mut log_lik, rng)?;
    }
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        slice_sweep(&mut values, &defs, &mut log_lik, rng)?;
        out.push(decode(dim, &values));
    }
    Ok(out)
}

struct FittedBaseline {
    h: BaselineHypers,
    chol: JitteredCholesky,
    alpha: DVector<f64>,
}

fn fit(xs: &[Vec<f64>], ys: &[f64], h: BaselineHypers) -> Result<FittedBaseline> {
    let n = xs.len();
    let mut k = hyper_gram(xs, &h.space)?;
    for i in 0..n {
        k[(i, i)] += h.noise;
    }
    let chol = JitteredCholesky::new(&k)?;
    let r = DVector::from_iterator(n, ys.iter().map(|y| y - h.space.mean));
    let alpha = chol.solve_vec(&r);
    Ok(FittedBaseline { h, chol, alpha })
}

impl FittedBaseline {
    fn predict(&self, xs: &[Vec<f64>], x: &[f64]) -> Result<(f64, f64)> {
        let ks = DVector::from_iterator(
            xs.len(),
            xs.iter()
                .map(|xi| matern52_cov(xi, x, &self.h.space))
                .collect::<Result<Vec<_>>>()?,
        );
        let mean = self.h.space.mean + ks.dot(&self.alpha);
        let var = (self.h.space.amplitude - ks.dot(&self.chol.solve_vec(&ks))).max(0.0);
        Ok((mean, var))
    }
}

/// Pick the pool index with the highest sample-averaged EI against the best
/// observed final loss.
pub(crate) fn propose_by_ei<R: Rng + ?Sized>(
    xs: &[Vec<f64>],
    ys: &[f64],
    pool: &[Vec<f64>],
    rng: &mut R,
) -> Result<usize> {
    if xs.is_empty() || pool.is_empty() {
        return Err(Error::InvalidInput("baseline needs data and a pool".into()));
    }
    let samples = sample_hypers(xs, ys, 10, 50, rng)?;
    let fits: Vec<FittedBaseline> = samples
        .into_iter()
        .map(|h| fit(xs, ys, h))
        .collect::<Result<_>>()?;
    let best = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut top = 0usize;
    let mut top_ei = f64::NEG_INFINITY;
    for (i, x) in pool.iter().enumerate() {
        if xs.iter().any(|xi| xi == x) {
            continue;
        }
        let mut acc = 0.0;
        for f in &fits {
            let (mean, var) = f.predict(xs, x)?;
            acc += crate::acquisition::expected_improvement(mean, var, best);
        }
        let ei = acc / fits.len() as f64;
        if ei > top_ei {
            top_ei = ei;
            top = i;
        }
    }
    Ok(top)
}
