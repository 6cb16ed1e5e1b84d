//! Synthetic training-curve objectives with known asymptotes, the
//! freeze-thaw and fixed-epoch EI runners, and CSV emitters for the
//! resulting traces.
//!
//! Every objective produces curves of the form
//! `loss(x, t) = f(x) + c(x) e^{-lambda(x) t} + noise`, with the asymptote
//! f(x), per-config decay rate lambda(x) in [0.05, 1], and amplitude c(x) in
//! [0.5, 2] all deterministic functions of (seed, x). Ground-truth minima are
//! recoverable by grid search, so traces carry the true asymptote regret.

pub(crate) mod baseline;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{ActionKind, Bound, OptState, Settings};
use crate::error::{Error, Result};
use crate::kernels::{curve_gram, ExpDecayParams, OuParams};
use crate::linalg::JitteredCholesky;
use crate::util::{fmt_f64, mix_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    BraninDecay,
    RandomGpDecay,
    PmfAnalog,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "branin-decay" => Ok(Family::BraninDecay),
            "random-gp-decay" => Ok(Family::RandomGpDecay),
            "pmf-analog" => Ok(Family::PmfAnalog),
            other => Err(Error::InvalidInput(format!("unknown family `{other}`"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::BraninDecay => "branin-decay",
            Family::RandomGpDecay => "random-gp-decay",
            Family::PmfAnalog => "pmf-analog",
        })
    }
}

#[derive(Debug, Clone)]
enum ObjKind {
    Branin,
    RandomGp {
        weights: Vec<f64>,
        freqs: Vec<Vec<f64>>,
        phases: Vec<f64>,
    },
    PmfAnalog {
        center: Vec<f64>,
        scales: Vec<f64>,
        base: f64,
    },
}

/// A synthetic objective producing exponential-decay training curves with a
/// known asymptote surface.
#[derive(Debug, Clone)]
pub struct SyntheticObjective {
    family: Family,
    dim: usize,
    seed: u64,
    obs_noise: f64,
    kind: ObjKind,
}

/// Build a deterministic objective. Families: `branin-decay` (dim 2),
/// `random-gp-decay` (dim 1..=5), `pmf-analog` (dim 3).
pub fn make_objective(family: Family, dim: usize, seed: u64) -> Result<SyntheticObjective> {
    let kind = match family {
        Family::BraninDecay => {
            if dim != 2 {
                return Err(Error::InvalidInput(format!(
                    "branin-decay is two-dimensional, got dim {dim}"
                )));
            }
            ObjKind::Branin
        }
        Family::RandomGpDecay => {
            if !(1..=5).contains(&dim) {
                return Err(Error::InvalidInput(format!(
                    "random-gp-decay supports dims 1..=5, got {dim}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0x6770]));
            let m = 32;
            let length = 0.3;
            ObjKind::RandomGp {
                weights: (0..m).map(|_| standard_normal(&mut rng)).collect(),
                freqs: (0..m)
                    .map(|_| {
                        (0..dim)
                            .map(|_| standard_normal(&mut rng) / length)
                            .collect()
                    })
                    .collect(),
                phases: (0..m)
                    .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                    .collect(),
            }
        }
        Family::PmfAnalog => {
            if dim != 3 {
                return Err(Error::InvalidInput(format!(
                    "pmf-analog is three-dimensional, got dim {dim}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0x706d66]));
            let center: Vec<f64> = (0..3).map(|_| 0.25 + 0.5 * rng.random::<f64>()).collect();
            // a narrow valley: steep in two directions, shallow along one
            let shallow = rng.random_range(0..3usize);
            let scales: Vec<f64> = (0..3)
                .map(|d| {
                    if d == shallow {
                        0.3 + 0.5 * rng.random::<f64>()
                    } else {
                        6.0 + 4.0 * rng.random::<f64>()
                    }
                })
                .collect();
            ObjKind::PmfAnalog {
                center,
                scales,
                base: 0.05,
            }
        }
    };
    Ok(SyntheticObjective {
        family,
        dim,
        seed,
        obs_noise: 0.01,
        kind,
    })
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

fn branin(a: f64, b: f64) -> f64 {
    use std::f64::consts::PI;
    let term = b - 5.1 * a * a / (4.0 * PI * PI) + 5.0 * a / PI - 6.0;
    term * term + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * a.cos() + 10.0
}

impl SyntheticObjective {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn obs_noise(&self) -> f64 {
        self.obs_noise
    }

    /// Replace the observation-noise level (default 0.01).
    pub fn with_obs_noise(mut self, obs_noise: f64) -> Result<Self> {
        if !(obs_noise.is_finite() && obs_noise >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "obs_noise must be >= 0, got {obs_noise}"
            )));
        }
        self.obs_noise = obs_noise;
        Ok(self)
    }

    /// Ground-truth asymptotic loss at x.
    pub fn asymptote(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ObjKind::Branin => branin(15.0 * x[0] - 5.0, 15.0 * x[1]) / 300.0,
            ObjKind::RandomGp {
                weights,
                freqs,
                phases,
            } => {
                let m = weights.len() as f64;
                let mut acc = 0.0;
                for ((w, f), p) in weights.iter().zip(freqs).zip(phases) {
                    let arg: f64 = f.iter().zip(x).map(|(fi, xi)| fi * xi).sum::<f64>() + p;
                    acc += w * arg.cos();
                }
                0.5 + 0.35 * (2.0 / m).sqrt() * acc
            }
            ObjKind::PmfAnalog {
                center,
                scales,
                base,
            } => {
                base + scales
                    .iter()
                    .zip(center)
                    .zip(x)
                    .map(|((s, c), v)| s * (v - c) * (v - c))
                    .sum::<f64>()
            }
        }
    }

    fn x_stream(&self, tag: u64, x: &[f64]) -> ChaCha8Rng {
        let mut parts = vec![tag];
        parts.extend(x.iter().map(|v| v.to_bits()));
        ChaCha8Rng::seed_from_u64(mix_seed(self.seed, &parts))
    }

    /// Per-config decay rate, log-uniform on [0.05, 1.0].
    pub fn decay_rate(&self, x: &[f64]) -> f64 {
        let u = self.x_stream(1, x).random::<f64>();
        (0.05f64.ln() + u * (1.0f64.ln() - 0.05f64.ln())).exp()
    }

    /// Per-config transient amplitude, uniform on [0.5, 2.0].
    pub fn amplitude(&self, x: &[f64]) -> f64 {
        0.5 + 1.5 * self.x_stream(2, x).random::<f64>()
    }

    /// Expected loss at epoch t: f(x) + c(x) e^{-lambda(x) t}.
    pub fn eval_noiseless(&self, x: &[f64], epoch: u64) -> f64 {
        self.asymptote(x) + self.amplitude(x) * (-self.decay_rate(x) * epoch as f64).exp()
    }

    /// Observed loss at epoch t (deterministic per (seed, x, epoch)).
    pub fn eval(&self, x: &[f64], epoch: u64) -> f64 {
        let mut parts = vec![3u64];
        parts.extend(x.iter().map(|v| v.to_bits()));
        parts.push(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, &parts));
        self.eval_noiseless(x, epoch) + self.obs_noise * standard_normal(&mut rng)
    }

    /// Dense grid search for the asymptote minimum (inclusive endpoints).
    pub fn grid_minimum(&self, per_dim: usize) -> (Vec<f64>, f64) {
        assert!(per_dim >= 2);
        let mut best_x = vec![0.0; self.dim];
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; self.dim];
        let mut x = vec![0.0; self.dim];
        loop {
            for d in 0..self.dim {
                x[d] = idx[d] as f64 / (per_dim - 1) as f64;
            }
            let v = self.asymptote(&x);
            if v < best {
                best = v;
                best_x.copy_from_slice(&x);
            }
            // odometer increment
            let mut d = 0;
            loop {
                if d == self.dim {
                    return (best_x, best);
                }
                idx[d] += 1;
                if idx[d] < per_dim {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    /// Grid resolution used by the runners when computing regret.
    fn default_grid(&self) -> usize {
        match self.dim {
            1 => 4096,
            2 => 1024,
            3 => 101,
            4 => 31,
            _ => 17,
        }
    }
}

/// One observed epoch in an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub cumulative_epochs: u64,
    pub config_id: u64,
    pub epoch: u64,
    pub observed_loss: f64,
    pub best_observed: f64,
    /// True asymptote of the best config started so far, minus the true
    /// minimum asymptote.
    pub best_true_asymptote_regret: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub events: Vec<TraceEvent>,
}

impl RunTrace {
    /// First cumulative epoch at which the regret dropped to `target` or
    /// below, if it ever did.
    pub fn epochs_to_regret(&self, target: f64) -> Option<u64> {
        self.events
            .iter()
            .find(|e| e.best_true_asymptote_regret <= target)
            .map(|e| e.cumulative_epochs)
    }

    /// Whether some curve was resumed (epoch >= 2) after sitting idle for at
    /// least `min_pause` intervening decisions.
    pub fn has_resume_after_pause(&self, min_pause: usize) -> bool {
        for (i, e) in self.events.iter().enumerate() {
            if e.epoch < 2 {
                continue;
            }
            let prev = self.events[..i]
                .iter()
                .rposition(|p| p.config_id == e.config_id);
            if let Some(j) = prev {
                if i - j - 1 >= min_pause {
                    return true;
                }
            }
        }
        false
    }
}

fn unit_bounds(dim: usize) -> Vec<Bound> {
    (0..dim)
        .map(|d| Bound::new(format!("x{}", d + 1), 0.0, 1.0).expect("static bounds"))
        .collect()
}

/// Drive the freeze-thaw controller against a synthetic objective until the
/// epoch budget is exhausted, recording one trace event per epoch.
pub fn run_freeze_thaw(
    obj: &SyntheticObjective,
    budget_epochs: u64,
    settings: &Settings,
    seed: u64,
) -> Result<RunTrace> {
    if budget_epochs == 0 {
        return Err(Error::InvalidInput("budget must be >= 1".into()));
    }
    let (_, true_min) = obj.grid_minimum(obj.default_grid());
    let mut state = OptState::new(unit_bounds(obj.dim()), settings.clone(), seed)?;
    let mut trace = RunTrace::default();
    let mut cumulative = 0u64;
    let mut best_observed = f64::INFINITY;
    let mut best_started = f64::INFINITY;
    while cumulative < budget_epochs {
        let action = state
            .suggest()
            .map_err(|e| trace_context(e, "freeze-thaw", cumulative))?;
        let config_id = action.config_id();
        let x = match &action.kind {
            ActionKind::StartNew { x, .. } => x.clone(),
            ActionKind::Resume { config_id } => state
                .config_x(*config_id)
                .expect("resume targets a known config"),
        };
        for _ in 0..action.epochs {
            if cumulative >= budget_epochs {
                break;
            }
            let epoch = state.config_epochs(config_id).unwrap_or(0) + 1;
            let loss = obj.eval(&x, epoch);
            state
                .observe(config_id, epoch, loss)
                .map_err(|e| trace_context(e, "freeze-thaw", cumulative))?;
            cumulative += 1;
            best_observed = best_observed.min(loss);
            if epoch == 1 {
                best_started = best_started.min(obj.asymptote(&x));
            }
            trace.events.push(TraceEvent {
                cumulative_epochs: cumulative,
                config_id,
                epoch,
                observed_loss: loss,
                best_observed,
                best_true_asymptote_regret: best_started - true_min,
            });
        }
    }
    Ok(trace)
}

/// Fixed-epoch EI baseline: a standard warped-Matern GP over configurations,
/// trained on final-epoch losses; every evaluation runs `epochs_per_eval`
/// epochs of a fresh config picked by EI.
pub fn run_baseline_ei(
    obj: &SyntheticObjective,
    budget_epochs: u64,
    epochs_per_eval: u64,
    seed: u64,
) -> Result<RunTrace> {
    if budget_epochs == 0 || epochs_per_eval == 0 {
        return Err(Error::InvalidInput("budget and epochs_per_eval must be >= 1".into()));
    }
    let (_, true_min) = obj.grid_minimum(obj.default_grid());
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut trace = RunTrace::default();
    let mut cumulative = 0u64;
    let mut best_observed = f64::INFINITY;
    let mut best_started = f64::INFINITY;
    let mut round = 0u64;
    while cumulative < budget_epochs {
        let round_seed = mix_seed(seed, &[0x6261_7365, round]);
        let pool = crate::acquisition::candidate_pool(obj.dim(), 1000, mix_seed(round_seed, &[1]));
        let x = if xs.is_empty() {
            pool[0].clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(round_seed, &[2]));
            let pick = baseline::propose_by_ei(&xs, &ys, &pool, &mut rng)
                .map_err(|e| trace_context(e, "baseline", cumulative))?;
            pool[pick].clone()
        };
        best_started = best_started.min(obj.asymptote(&x));
        let config_id = round;
        let mut last = f64::NAN;
        for epoch in 1..=epochs_per_eval {
            if cumulative >= budget_epochs {
                break;
            }
            let loss = obj.eval(&x, epoch);
            cumulative += 1;
            best_observed = best_observed.min(loss);
            last = loss;
            trace.events.push(TraceEvent {
                cumulative_epochs: cumulative,
                config_id,
                epoch,
                observed_loss: loss,
                best_observed,
                best_true_asymptote_regret: best_started - true_min,
            });
        }
        if last.is_finite() {
            xs.push(x);
            ys.push(last);
        }
        round += 1;
    }
    Ok(trace)
}

fn trace_context(e: Error, method: &str, cumulative: u64) -> Error {
    Error::InvalidInput(format!("{method} run at {cumulative} epochs: {e}"))
}

/// Run the standard benchmark suite: `n_runs` freeze-thaw runs (seeds
/// base_seed, base_seed+1, ...) and optionally the same number of fixed-epoch
/// EI baseline runs on the identical objective. Runs execute independently
/// and in parallel when the `parallel` feature is on.
pub fn run_suite(
    family: Family,
    dim: usize,
    budget: u64,
    baseline_epochs: Option<u64>,
    base_seed: u64,
    settings: &Settings,
    n_runs: usize,
) -> Result<(Vec<RunTrace>, Option<Vec<RunTrace>>)> {
    let obj = make_objective(family, dim, base_seed)?;
    let freeze_thaw: Vec<RunTrace> = crate::exec::map_indexed(n_runs, |i| {
        run_freeze_thaw(&obj, budget, settings, base_seed + i as u64)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let baseline = match baseline_epochs {
        Some(epochs_per_eval) => Some(
            crate::exec::map_indexed(n_runs, |i| {
                run_baseline_ei(&obj, budget, epochs_per_eval, base_seed + i as u64)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok((freeze_thaw, baseline))
}

// ---------------------------------------------------------------------------
// CSV emitters (floats at 17 significant digits; one header row each)
// ---------------------------------------------------------------------------

/// Columns: cumulative_epochs,config_id,epoch,observed_loss,best_observed,
/// best_true_asymptote_regret.
pub fn render_trace_csv(trace: &RunTrace) -> String {
    let mut out = String::from(
        "cumulative_epochs,config_id,epoch,observed_loss,best_observed,best_true_asymptote_regret\n",
    );
    for e in &trace.events {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.cumulative_epochs,
            e.config_id,
            e.epoch,
            fmt_f64(e.observed_loss),
            fmt_f64(e.best_observed),
            fmt_f64(e.best_true_asymptote_regret)
        ));
    }
    out
}

pub fn write_trace_csv(trace: &RunTrace, path: &Path) -> Result<()> {
    std::fs::write(path, render_trace_csv(trace))?;
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-epoch medians across runs. Columns: cumulative_epochs,method,
/// median_best_observed,median_best_true_asymptote_regret.
pub fn render_summary_csv(methods: &[(&str, &[RunTrace])]) -> String {
    let mut out =
        String::from("cumulative_epochs,method,median_best_observed,median_best_true_asymptote_regret\n");
    for (name, traces) in methods {
        let horizon = traces.iter().map(|t| t.events.len()).min().unwrap_or(0);
        for i in 0..horizon {
            let mut best: Vec<f64> = traces.iter().map(|t| t.events[i].best_observed).collect();
            let mut regret: Vec<f64> = traces
                .iter()
                .map(|t| t.events[i].best_true_asymptote_regret)
                .collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                name,
                fmt_f64(median(&mut best)),
                fmt_f64(median(&mut regret))
            ));
        }
    }
    out
}

pub fn write_summary_csv(methods: &[(&str, &[RunTrace])], path: &Path) -> Result<()> {
    std::fs::write(path, render_summary_csv(methods))?;
    Ok(())
}

/// Draws from the decay-kernel GP prior on the epoch grid 0..=t_max.
/// `natural` conditions each sample on a positive starting value and adds an
/// Ornstein-Uhlenbeck component, which gives realistically wiggly curves.
/// Columns: sample,t,value.
pub fn render_kernel_samples_csv(
    params: &ExpDecayParams,
    ou: Option<&OuParams>,
    natural: bool,
    n_samples: usize,
    t_max: u64,
    seed: u64,
) -> Result<String> {
    let times: Vec<f64> = (0..=t_max).map(|t| t as f64).collect();
    let gram = curve_gram(&times, params, ou)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("sample,t,value\n");
    let n = times.len();
    if natural {
        // condition on f(0) = start
        let k00 = gram[(0, 0)];
        let k0 = gram.column(0).into_owned();
        let cond = &gram - &k0 * k0.transpose() / k00;
        let chol = JitteredCholesky::new(&cond)?;
        for s in 0..n_samples {
            let start = 0.5 + rng.random::<f64>();
            let mut draw = nalgebra::DVector::zeros(n);
            for i in 0..n {
                draw[i] = standard_normal(&mut rng);
            }
            let f = &k0 * (start / k00) + chol.l() * draw;
            for (i, &t) in times.iter().enumerate() {
                out.push_str(&format!("{s},{t},{}\n", fmt_f64(f[i])));
            }
        }
    } else {
        let chol = JitteredCholesky::new(&gram)?;
        for s in 0..n_samples {
            let mut draw = nalgebra::DVector::zeros(n);
            for i in 0..n {
                draw[i] = standard_normal(&mut rng);
            }
            let f = chol.l() * draw;
            for (i, &t) in times.iter().enumerate() {
                out.push_str(&format!("{s},{t},{}\n", fmt_f64(f[i])));
            }
        }
    }
    Ok(out)
}

pub fn write_kernel_samples_csv(
    params: &ExpDecayParams,
    ou: Option<&OuParams>,
    natural: bool,
    n_samples: usize,
    t_max: u64,
    seed: u64,
    path: &Path,
) -> Result<()> {
    std::fs::write(
        path,
        render_kernel_samples_csv(params, ou, natural, n_samples, t_max, seed)?,
    )?;
    Ok(())
}

/// Sampled objective curves at random configs.
/// Columns: curve,x1..xD,epoch,loss.
pub fn render_curve_samples_csv(
    obj: &SyntheticObjective,
    n_curves: usize,
    t_max: u64,
    seed: u64,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("curve");
    for d in 1..=obj.dim() {
        out.push_str(&format!(",x{d}"));
    }
    out.push_str(",epoch,loss\n");
    for c in 0..n_curves {
        let x: Vec<f64> = (0..obj.dim()).map(|_| rng.random()).collect();
        for epoch in 1..=t_max {
            out.push_str(&c.to_string());
            for v in &x {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push_str(&format!(",{epoch},{}\n", fmt_f64(obj.eval(&x, epoch))));
        }
    }
    out
}

pub fn write_curve_samples_csv(
    obj: &SyntheticObjective,
    n_curves: usize,
    t_max: u64,
    seed: u64,
    path: &Path,
) -> Result<()> {
    std::fs::write(path, render_curve_samples_csv(obj, n_curves, t_max, seed))?;
    Ok(())
}
