use super::dense::dense_joint_oracle;
use super::*;
use crate::kernels::{ExpDecayParams, WarpedMaternParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hypers_simple(dim: usize, mean: f64, noise: f64) -> Hypers {
    Hypers {
        space: WarpedMaternParams::identity_warp(1.0, vec![0.5; dim], mean).unwrap(),
        curve: ExpDecayParams::new(1.0, 2.0, noise).unwrap(),
    }
}

/// Random mixed-length curve set plus random (but well-scaled) hypers.
fn random_instance(rng: &mut ChaCha8Rng, n: usize, t_max: usize) -> (CurveSet, Hypers) {
    let dim = 2;
    let mut data = CurveSet::new(dim).unwrap();
    for id in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let idx = data.add_config(id as u64, x).unwrap();
        // first curve always observed, the rest may be empty
        let t = if id == 0 {
            rng.random_range(1..=t_max)
        } else {
            rng.random_range(0..=t_max)
        };
        let f = 0.3 + 0.4 * rng.random::<f64>();
        for e in 1..=t {
            let y = f + 0.5 * (-0.3 * e as f64).exp() + 0.02 * (rng.random::<f64>() - 0.5);
            data.push_loss(idx, y).unwrap();
        }
    }
    let hypers = Hypers {
        space: WarpedMaternParams::new(
            (rng.random::<f64>() * 0.6 - 0.3f64).exp(),
            (0..dim)
                .map(|_| (rng.random::<f64>() * 0.6 - 0.8f64).exp())
                .collect(),
            (0..dim)
                .map(|_| (rng.random::<f64>() * 0.4 - 0.2f64).exp())
                .collect(),
            (0..dim)
                .map(|_| (rng.random::<f64>() * 0.4 - 0.2f64).exp())
                .collect(),
            0.3 + 0.4 * rng.random::<f64>(),
        )
        .unwrap(),
        curve: ExpDecayParams::new(
            (rng.random::<f64>() * 0.6 - 0.3f64).exp(),
            (rng.random::<f64>() * 0.8 + 0.2f64).exp(),
            10f64.powf(-1.0 - 3.0 * rng.random::<f64>()),
        )
        .unwrap(),
    };
    (data, hypers)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn scalar_case_matches_hand_formulas() {
    // N=1, T=1: everything reduces to scalar Gaussian conditioning.
    let h = hypers_simple(1, 0.2, 0.05);
    let mut data = CurveSet::new(1).unwrap();
    let idx = data.add_config(0, vec![0.5]).unwrap();
    data.push_loss(idx, 0.9).unwrap();

    let k = (2.0f64 / 4.0).powf(1.0) + 0.05; // curve kernel at (1,1) plus noise
    let theta0 = 1.0;
    let m = 0.2;
    let y = 0.9;
    let lambda = 1.0 / k;
    let gamma = (y - m) / k;
    let c = 1.0 / (1.0 / theta0 + lambda);
    let mu = m + c * gamma;

    let model = fit(&data, &h).unwrap();
    assert!((model.latent_mean()[0] - mu).abs() < 1e-12);
    assert!((model.latent_cov()[(0, 0)] - c).abs() < 1e-12);

    // Marginal likelihood equals the univariate normal log-density
    // log N(y; m, k + theta0).
    let v = k + theta0;
    let expect = -0.5 * (y - m) * (y - m) / v
        - 0.5 * v.ln()
        - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let lml = log_marginal_likelihood(&data, &h).unwrap();
    assert!((lml - expect).abs() < 1e-12, "{lml} vs {expect}");
}

#[test]
fn zero_mean_zero_data_gives_zero_posterior() {
    let h = hypers_simple(2, 0.0, 0.01);
    let mut data = CurveSet::new(2).unwrap();
    for id in 0..3u64 {
        let idx = data
            .add_config(id, vec![0.2 * (id as f64 + 1.0), 0.5])
            .unwrap();
        for _ in 0..4 {
            data.push_loss(idx, 0.0).unwrap();
        }
    }
    let model = fit(&data, &h).unwrap();
    for k in 0..3 {
        assert!(model.latent_mean()[k].abs() < 1e-12);
    }
}

#[test]
fn empty_data_fits_to_prior() {
    let h = hypers_simple(2, 0.4, 0.01);
    let data = CurveSet::new(2).unwrap();
    let model = fit(&data, &h).unwrap();
    assert_eq!(model.log_marginal_likelihood(), 0.0);
    let p = model.predict_asymptote_new(&[0.3, 0.7]).unwrap();
    assert_eq!(p.mean, 0.4);
    assert_eq!(p.var, 1.0);
    let c = model.predict_curve_new(&[0.3, 0.7], 1).unwrap();
    let kt = (2.0f64 / 4.0).powf(1.0) + 0.01;
    assert!((c.var - (kt + 1.0)).abs() < 1e-12);
    assert_eq!(c.mean, 0.4);
}

#[test]
fn lml_invariant_under_curve_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (data, h) = random_instance(&mut rng, 5, 6);
    let base = log_marginal_likelihood(&data, &h).unwrap();
    // rebuild with configs in reverse order
    let mut rev = CurveSet::new(data.dim()).unwrap();
    for n in (0..data.len()).rev() {
        let idx = rev.add_config(data.id(n), data.x(n).to_vec()).unwrap();
        for &y in data.losses(n) {
            rev.push_loss(idx, y).unwrap();
        }
    }
    let permuted = log_marginal_likelihood(&rev, &h).unwrap();
    assert!((base - permuted).abs() < 1e-9, "{base} vs {permuted}");
}

#[test]
fn latent_posterior_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (data, h) = random_instance(&mut rng, 5, 5);
    let model = fit(&data, &h).unwrap();
    let mut rev = CurveSet::new(data.dim()).unwrap();
    for n in (0..data.len()).rev() {
        let idx = rev.add_config(data.id(n), data.x(n).to_vec()).unwrap();
        for &y in data.losses(n) {
            rev.push_loss(idx, y).unwrap();
        }
    }
    let model_rev = fit(&rev, &h).unwrap();
    for n in 0..data.len() {
        let a = model.predict_asymptote_observed(n).unwrap();
        let rn = rev.index_of(data.id(n)).unwrap();
        let b = model_rev.predict_asymptote_observed(rn).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-9);
        assert!((a.var - b.var).abs() < 1e-9);
    }
}

#[test]
fn matches_dense_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..5 {
        let (data, h) = random_instance(&mut rng, 6, 8);
        let model = fit(&data, &h).unwrap();
        let oracle = dense_joint_oracle(&data, &h).unwrap();
        assert!(
            rel_err(model.log_marginal_likelihood(), oracle.log_density()) < 1e-6,
            "trial {trial} lml"
        );
        let nobs = model.observed().len();
        for k in 0..nobs {
            assert!(rel_err(model.latent_mean()[k], oracle.latent_mean()[k]) < 1e-6);
            for j in 0..nobs {
                assert!(
                    rel_err(model.latent_cov()[(k, j)], oracle.latent_cov()[(k, j)]) < 1e-6
                );
            }
        }
        for _ in 0..3 {
            let xq: Vec<f64> = (0..data.dim()).map(|_| rng.random()).collect();
            let sp = model.predict_asymptote_new(&xq).unwrap();
            let dp = oracle.asymptote_new(&xq).unwrap();
            assert!(rel_err(sp.mean, dp.mean) < 1e-6);
            assert!(rel_err(sp.var, dp.var) < 1e-6);
            let sc = model.predict_curve_new(&xq, 1).unwrap();
            let dc = oracle.curve_new(&xq, 1).unwrap();
            assert!(rel_err(sc.mean, dc.mean) < 1e-6);
            assert!(rel_err(sc.var, dc.var) < 1e-6);
        }
        let n0 = model.observed()[0];
        let t_next = data.epochs(n0) + 1;
        let sn = model.predict_curve_next(n0, t_next).unwrap();
        let dn = oracle.curve_next(n0, t_next).unwrap();
        assert!(rel_err(sn.mean, dn.mean) < 1e-6);
        assert!(rel_err(sn.var, dn.var) < 1e-6);
    }
}

#[test]
fn asymptote_prediction_at_observed_x_shrinks_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = hypers_simple(2, 0.5, 0.01);
    let mut data = CurveSet::new(2).unwrap();
    let idx = data.add_config(0, vec![0.4, 0.6]).unwrap();
    for e in 1..=30 {
        data.push_loss(idx, 0.3 + 0.5 * (-0.4 * e as f64).exp() + 0.001 * rng.random::<f64>())
            .unwrap();
    }
    let model = fit(&data, &h).unwrap();
    let at_config = model.predict_asymptote_new(&[0.4, 0.6]).unwrap();
    assert!(at_config.var < 1.0, "variance {} not below amplitude", at_config.var);
    // matches the latent marginal at that config
    let obs = model.predict_asymptote_observed(0).unwrap();
    assert!((at_config.mean - obs.mean).abs() < 1e-9);
    assert!((at_config.var - obs.var).abs() < 1e-9);
}

#[test]
fn unobserved_config_falls_back_to_prior_with_no_data() {
    let h = hypers_simple(1, 0.7, 0.01);
    let mut data = CurveSet::new(1).unwrap();
    data.add_config(0, vec![0.5]).unwrap();
    let model = fit(&data, &h).unwrap();
    let p = model.predict_asymptote_observed(0).unwrap();
    assert_eq!(p.mean, 0.7);
    assert_eq!(p.var, 1.0);
}

#[test]
fn constant_tail_identifies_asymptote_in_low_noise_limit() {
    let h = Hypers {
        space: WarpedMaternParams::identity_warp(1.0, vec![0.5], 0.5).unwrap(),
        curve: ExpDecayParams::new(1.0, 0.5, 1e-10).unwrap(),
    };
    let mut data = CurveSet::new(1).unwrap();
    let idx = data.add_config(0, vec![0.5]).unwrap();
    // beta = 0.5 decays almost immediately, so a long constant tail at c
    // pins the asymptote there.
    for e in 1..=60 {
        let c = 0.37;
        let y = c + 0.8 * (0.5f64 / (2.0 * e as f64 + 0.5)).powf(1.0);
        data.push_loss(idx, y).unwrap();
    }
    let model = fit(&data, &h).unwrap();
    let p = model.predict_asymptote_observed(0).unwrap();
    assert!((p.mean - 0.37).abs() < 2e-2, "mean {}", p.mean);
}

#[test]
fn curve_next_converges_to_asymptote_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (data, h) = random_instance(&mut rng, 4, 10);
    let model = fit(&data, &h).unwrap();
    for &n in model.observed() {
        let far = model.predict_curve_next(n, 1_000_000).unwrap();
        let asym = model.predict_asymptote_observed(n).unwrap();
        assert!((far.mean - asym.mean).abs() < 1e-3);
        assert!((far.var - asym.var).abs() < 1e-3);
    }
}

#[test]
fn curve_next_reduces_to_plain_gp_when_latent_is_pinned() {
    // With C_nn ~ 0 the Omega term drops and the prediction is ordinary
    // GP regression of the curve on its own kernel.
    let h = Hypers {
        space: WarpedMaternParams::identity_warp(1e-12, vec![0.5], 0.0).unwrap(),
        curve: ExpDecayParams::new(1.0, 2.0, 0.01).unwrap(),
    };
    let mut data = CurveSet::new(1).unwrap();
    let idx = data.add_config(0, vec![0.5]).unwrap();
    let ys = [0.9, 0.5, 0.3, 0.25, 0.22];
    for &y in &ys {
        data.push_loss(idx, y).unwrap();
    }
    let model = fit(&data, &h).unwrap();
    let got = model.predict_curve_next(0, 6).unwrap();

    // independent scalar route: standard GP regression on (t, y)
    let times = epoch_grid(ys.len());
    let gram = crate::kernels::curve_gram(&times, &h.curve, None).unwrap();
    let chol = crate::linalg::JitteredCholesky::new(&gram).unwrap();
    let kst = DVector::from_iterator(
        ys.len(),
        times
            .iter()
            .map(|&t| exp_decay_cov(t, 6.0, &h.curve, false).unwrap()),
    );
    let yv = DVector::from_column_slice(&ys);
    let mean = kst.dot(&chol.solve_vec(&yv));
    let var = exp_decay_cov(6.0, 6.0, &h.curve, false).unwrap() - kst.dot(&chol.solve_vec(&kst));
    assert!((got.mean - mean).abs() < 1e-6, "{} vs {mean}", got.mean);
    assert!((got.var - var).abs() < 1e-6, "{} vs {var}", got.var);
}

#[test]
fn curve_new_variance_dominates_asymptote_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (data, h) = random_instance(&mut rng, 4, 6);
    let model = fit(&data, &h).unwrap();
    for _ in 0..5 {
        let xq: Vec<f64> = (0..data.dim()).map(|_| rng.random()).collect();
        let asym = model.predict_asymptote_new(&xq).unwrap();
        let first = model.predict_curve_new(&xq, 1).unwrap();
        assert!(first.var >= asym.var - 1e-12);
    }
}

#[test]
fn adding_an_epoch_never_inflates_latent_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..5 {
        let (data, h) = random_instance(&mut rng, 4, 6);
        let model = fit(&data, &h).unwrap();
        for &n in model.observed() {
            let before = model.predict_asymptote_observed(n).unwrap().var;
            let next = model
                .with_observation(
                    &FantasyTarget::Old { config: n },
                    model.latent_mean()[model.observed().iter().position(|&i| i == n).unwrap()],
                )
                .unwrap();
            let after = next.predict_asymptote_observed(n).unwrap().var;
            assert!(after <= before + 1e-9, "{after} > {before}");
        }
    }
}

#[test]
fn block_update_matches_full_refit() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (data, h) = random_instance(&mut rng, 5, 6);
    let model = fit(&data, &h).unwrap();

    // old-curve update
    let n0 = model.observed()[0];
    let updated = model
        .with_observation(&FantasyTarget::Old { config: n0 }, 0.41)
        .unwrap();
    let mut data2 = data.clone();
    data2.push_loss(n0, 0.41).unwrap();
    let refit = fit(&data2, &h).unwrap();
    assert!((updated.log_marginal_likelihood() - refit.log_marginal_likelihood()).abs() < 1e-9);
    for k in 0..updated.observed().len() {
        assert!((updated.latent_mean()[k] - refit.latent_mean()[k]).abs() < 1e-9);
    }

    // new-config update
    let xq: Vec<f64> = (0..data.dim()).map(|_| rng.random()).collect();
    let grown = model
        .with_observation(&FantasyTarget::New { x: xq.clone() }, 0.8)
        .unwrap();
    let mut data3 = data.clone();
    let id = data3.max_id().unwrap() + 1;
    let idx = data3.add_config(id, xq).unwrap();
    data3.push_loss(idx, 0.8).unwrap();
    let refit3 = fit(&data3, &h).unwrap();
    assert!((grown.log_marginal_likelihood() - refit3.log_marginal_likelihood()).abs() < 1e-9);
    let a = grown.predict_asymptote_observed(idx).unwrap();
    let b = refit3.predict_asymptote_observed(idx).unwrap();
    assert!((a.mean - b.mean).abs() < 1e-9);
    assert!((a.var - b.var).abs() < 1e-9);
}

#[test]
fn joint_prediction_consistent_with_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (data, h) = random_instance(&mut rng, 5, 6);
    let model = fit(&data, &h).unwrap();
    let mut points: Vec<Vec<f64>> = model
        .observed()
        .iter()
        .map(|&n| data.x(n).to_vec())
        .collect();
    points.push((0..data.dim()).map(|_| rng.random()).collect());
    let (mean, cov) = model.predict_asymptote_joint(&points).unwrap();
    for (j, &n) in model.observed().iter().enumerate() {
        let marg = model.predict_asymptote_observed(n).unwrap();
        assert!((mean[j] - marg.mean).abs() < 1e-8);
        assert!((cov[(j, j)] - marg.var).abs() < 1e-8);
    }
    let last = points.len() - 1;
    let marg = model.predict_asymptote_new(&points[last]).unwrap();
    assert!((mean[last] - marg.mean).abs() < 1e-8);
    assert!((cov[(last, last)] - marg.var).abs() < 1e-8);
}

#[test]
fn dense_oracle_enforces_size_guard() {
    let h = hypers_simple(1, 0.0, 0.01);
    let mut data = CurveSet::new(1).unwrap();
    let idx = data.add_config(0, vec![0.5]).unwrap();
    for _ in 0..401 {
        data.push_loss(idx, 0.5).unwrap();
    }
    assert!(matches!(
        dense_joint_oracle(&data, &h),
        Err(crate::error::Error::SizeGuard(_))
    ));
}

#[test]
fn curve_next_validates_inputs() {
    let h = hypers_simple(1, 0.0, 0.01);
    let mut data = CurveSet::new(1).unwrap();
    let idx = data.add_config(0, vec![0.5]).unwrap();
    data.push_loss(idx, 0.5).unwrap();
    data.push_loss(idx, 0.4).unwrap();
    let model = fit(&data, &h).unwrap();
    assert!(model.predict_curve_next(0, 2).is_err()); // not beyond T_n
    assert!(model.predict_curve_next(7, 3).is_err()); // unknown index
}

#[test]
fn curve_set_validates_configs() {
    let mut data = CurveSet::new(2).unwrap();
    data.add_config(0, vec![0.1, 0.2]).unwrap();
    assert!(data.add_config(0, vec![0.3, 0.4]).is_err()); // duplicate id
    assert!(data.add_config(1, vec![0.3]).is_err()); // wrong dim
    assert!(data.add_config(2, vec![1.3, 0.0]).is_err()); // out of bounds
    assert!(data.push_loss(0, f64::NAN).is_err());
    assert!(data.push_loss(9, 0.1).is_err());
}
