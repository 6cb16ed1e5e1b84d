//! Command-line front end: synthetic benchmarks, the ask/tell protocol
//! server, kernel-prior sample dumps, and state-file inspection.

use std::io::{BufReader, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;

use ftbo_core::bench::{self, Family};
use ftbo_core::controller::{protocol, Bound, OptState, Settings};
use ftbo_core::ftgp;
use ftbo_core::kernels::{ExpDecayParams, OuParams};
use ftbo_core::mcmc::{sample_hypers, HyperPriorSpec};

#[derive(Parser)]
#[command(
    name = "ftbo",
    about = "Freeze-thaw Bayesian optimization over training curves",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run synthetic benchmarks and write per-run trace CSVs plus a summary
    Bench {
        /// Objective family: branin-decay | random-gp-decay | pmf-analog
        #[arg(long, default_value = "branin-decay")]
        family: String,
        /// Input dimension (only random-gp-decay varies; others fix it)
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Total epoch budget per run
        #[arg(long, default_value_t = 300)]
        budget: u64,
        /// Also run the fixed-epoch EI baseline
        #[arg(long)]
        baseline: bool,
        /// Epochs each baseline evaluation trains for
        #[arg(long, default_value_t = 30)]
        epochs_per_eval: u64,
        /// Base seed; the five runs use seed, seed+1, ..., seed+4
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the CSV files
        #[arg(long, default_value = "ftbo-bench")]
        out: PathBuf,
    },
    /// Serve the line-delimited JSON ask/tell protocol on stdin/stdout
    Serve {
        /// JSON bounds file: [{"name":..., "lower":..., "upper":...}, ...]
        #[arg(long)]
        bounds: Option<PathBuf>,
        /// State file; loaded when present, persisted after every change
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        basket_old: usize,
        #[arg(long, default_value_t = 3)]
        basket_new: usize,
        #[arg(long, default_value_t = 5)]
        n_fant: usize,
        #[arg(long, default_value_t = 1000)]
        n_mc: usize,
        #[arg(long, default_value_t = 10)]
        mcmc_samples: usize,
        #[arg(long, default_value_t = 1)]
        epochs_per_decision: u32,
    },
    /// Draw curves from the decay-kernel GP prior and write them as CSV
    KernelSamples {
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        /// Condition on a positive start and add an OU component
        #[arg(long)]
        natural: bool,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        t_max: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "kernel-samples.csv")]
        out: PathBuf,
    },
    /// Print a human-readable report of a saved state file
    Inspect {
        #[arg(long)]
        state: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Bench {
            family,
            dim,
            budget,
            baseline,
            epochs_per_eval,
            seed,
            out,
        } => cmd_bench(&family, dim, budget, baseline, epochs_per_eval, seed, &out),
        Command::Serve {
            bounds,
            state,
            seed,
            basket_old,
            basket_new,
            n_fant,
            n_mc,
            mcmc_samples,
            epochs_per_decision,
        } => {
            let settings = Settings {
                b_old: basket_old,
                b_new: basket_new,
                n_fant,
                n_mc,
                mcmc_samples,
                epochs_per_decision,
                ..Settings::default()
            };
            cmd_serve(bounds.as_deref(), &state, seed, settings)
        }
        Command::KernelSamples {
            alpha,
            beta,
            natural,
            samples,
            t_max,
            seed,
            out,
        } => cmd_kernel_samples(alpha, beta, natural, samples, t_max, seed, &out),
        Command::Inspect { state } => cmd_inspect(&state),
    }
}

fn cmd_bench(
    family: &str,
    dim: usize,
    budget: u64,
    baseline: bool,
    epochs_per_eval: u64,
    seed: u64,
    out: &std::path::Path,
) -> Result<()> {
    let family: Family = family.parse()?;
    let dim = match family {
        Family::BraninDecay => 2,
        Family::PmfAnalog => 3,
        Family::RandomGpDecay => dim,
    };
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let settings = Settings::default();
    let n_runs = 5;
    let (freeze_thaw, baseline_traces) = bench::run_suite(
        family,
        dim,
        budget,
        baseline.then_some(epochs_per_eval),
        seed,
        &settings,
        n_runs,
    )?;
    for (i, trace) in freeze_thaw.iter().enumerate() {
        let path = out.join(format!("trace_freeze_thaw_seed{}.csv", seed + i as u64));
        bench::write_trace_csv(trace, &path)?;
    }
    let mut methods: Vec<(&str, &[bench::RunTrace])> = vec![("freeze-thaw", &freeze_thaw)];
    if let Some(bl) = &baseline_traces {
        for (i, trace) in bl.iter().enumerate() {
            let path = out.join(format!("trace_baseline_seed{}.csv", seed + i as u64));
            bench::write_trace_csv(trace, &path)?;
        }
        methods.push(("baseline-ei", bl));
    }
    bench::write_summary_csv(&methods, &out.join("summary.csv"))?;
    println!(
        "wrote {} trace file(s) and summary.csv to {}",
        n_runs * methods.len(),
        out.display()
    );
    Ok(())
}

fn cmd_serve(
    bounds: Option<&std::path::Path>,
    state_path: &std::path::Path,
    seed: u64,
    settings: Settings,
) -> Result<()> {
    let mut state = if state_path.exists() {
        OptState::load_from_file(state_path)
            .with_context(|| format!("loading state from {}", state_path.display()))?
    } else {
        let Some(bounds_path) = bounds else {
            bail!("a fresh session needs --bounds");
        };
        let text = std::fs::read_to_string(bounds_path)
            .with_context(|| format!("reading bounds from {}", bounds_path.display()))?;
        let bounds: Vec<Bound> = serde_json::from_str(&text).context("parsing bounds file")?;
        OptState::new(bounds, settings, seed)?
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    protocol::serve(
        &mut state,
        BufReader::new(stdin.lock()),
        stdout.lock(),
        Some(state_path),
    )?;
    Ok(())
}

fn cmd_kernel_samples(
    alpha: f64,
    beta: f64,
    natural: bool,
    samples: usize,
    t_max: u64,
    seed: u64,
    out: &std::path::Path,
) -> Result<()> {
    let params = ExpDecayParams::new(alpha, beta, 0.0)?;
    let ou = natural.then(|| OuParams::new(0.05, 2.0)).transpose()?;
    bench::write_kernel_samples_csv(&params, ou.as_ref(), natural, samples, t_max, seed, out)?;
    println!(
        "wrote {samples} prior sample(s) over t=0..={t_max} to {}",
        out.display()
    );
    Ok(())
}

fn cmd_inspect(state_path: &std::path::Path) -> Result<()> {
    let state = OptState::load_from_file(state_path)
        .with_context(|| format!("loading state from {}", state_path.display()))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "schema: ftbo-state-v1")?;
    writeln!(out, "seed: {}  round: {}", state.seed(), state.round())?;
    writeln!(
        out,
        "bounds: {}",
        state
            .bounds()
            .iter()
            .map(|b| format!("{} in [{}, {}]", b.name, b.lower, b.upper))
            .collect::<Vec<_>>()
            .join(", ")
    )?;
    let data = state.data();
    writeln!(out, "configs: {}", data.len())?;
    if let Some(best) = state.best_observed() {
        writeln!(out, "best observed loss: {best:.6}")?;
    }
    // asymptote posterior summaries, averaged over hyperparameter samples
    let models = if data.total_observations() > 0 {
        let spec = HyperPriorSpec::for_data(data);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(state.seed());
        let hypers = sample_hypers(data, &spec, 10, 50, &mut rng)?;
        let fitted: Vec<_> = hypers
            .iter()
            .map(|h| ftgp::fit(data, h))
            .collect::<ftbo_core::Result<_>>()?;
        Some(fitted)
    } else {
        None
    };
    for n in 0..data.len() {
        let id = data.id(n);
        let x = state.config_x(id).expect("config is known");
        let last = data.losses(n).last();
        let asym = models.as_ref().map(|models| {
            let preds: Vec<_> = models
                .iter()
                .map(|m| m.predict_asymptote_observed(n).expect("valid index"))
                .collect();
            let s = preds.len() as f64;
            let mean = preds.iter().map(|p| p.mean).sum::<f64>() / s;
            let var = preds.iter().map(|p| p.var).sum::<f64>() / s
                + preds.iter().map(|p| (p.mean - mean).powi(2)).sum::<f64>() / s;
            (mean, var.sqrt())
        });
        write!(
            out,
            "  config {id}: x = [{}], epochs = {}",
            x.iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(", "),
            data.epochs(n)
        )?;
        if let Some(y) = last {
            write!(out, ", last loss = {y:.6}")?;
        }
        if let Some((mean, sd)) = asym {
            write!(out, ", asymptote = {mean:.6} +/- {sd:.6}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
