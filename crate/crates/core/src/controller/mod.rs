//! The optimization loop's ask/tell state machine.
//!
//! `suggest` runs one full decision round (sample hyperparameters, fit one
//! model per sample, build the basket, score members by expected information
//! gain, pick the winner) and is a deterministic function of the state;
//! `observe` ingests one epoch's loss. State serializes to a versioned JSON
//! document that restores bit-exactly, so a killed session resumes with the
//! identical next suggestion.

pub mod protocol;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, candidate_pool};
use crate::error::{Error, Result};
use crate::exec;
use crate::ftgp::{self, CurveSet, FtgpModel};
use crate::mcmc::{sample_hypers, HyperPriorSpec};
use crate::util::{mix_seed, to_json_17};

/// Per-round algorithm settings. The basket sizes and fantasy count default
/// to the standard values (10 old + 3 new members, 5 fantasies per member).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub b_old: usize,
    pub b_new: usize,
    pub n_fant: usize,
    pub n_mc: usize,
    pub mcmc_samples: usize,
    pub mcmc_burn_in: usize,
    pub pool_size: usize,
    pub epochs_per_decision: u32,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            b_old: 10,
            b_new: 3,
            n_fant: 5,
            n_mc: 1000,
            mcmc_samples: 10,
            mcmc_burn_in: 50,
            pool_size: 1000,
            epochs_per_decision: 1,
        }
    }
}

impl Settings {
    fn validate(&self) -> Result<()> {
        if self.b_old == 0 && self.b_new == 0 {
            return Err(Error::InvalidInput("basket cannot be empty".into()));
        }
        for (name, v) in [
            ("n_fant", self.n_fant),
            ("n_mc", self.n_mc),
            ("mcmc_samples", self.mcmc_samples),
            ("pool_size", self.pool_size),
            ("epochs_per_decision", self.epochs_per_decision as usize),
        ] {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// One search dimension in the user's original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidInput(format!(
                "bound needs finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self {
            name: name.into(),
            lower,
            upper,
        })
    }
}

/// What to run next. `x` is reported in the user's original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    StartNew { config_id: u64, x: Vec<f64> },
    Resume { config_id: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub kind: ActionKind,
    pub epochs: u32,
}

impl Action {
    pub fn config_id(&self) -> u64 {
        match &self.kind {
            ActionKind::StartNew { config_id, .. } => *config_id,
            ActionKind::Resume { config_id } => *config_id,
        }
    }
}

/// The action awaiting observations; a fresh config keeps its point here
/// until its first loss arrives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PendingAction {
    config_id: u64,
    /// Unit-coordinate point for a not-yet-registered config.
    x_unit: Option<Vec<f64>>,
    remaining: u32,
}

/// Best-so-far values reported each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub best_observed_loss: Option<f64>,
    pub best_asymptote_mean: Option<f64>,
}

pub const STATE_SCHEMA: &str = "ftbo-state-v1";

#[derive(Serialize, Deserialize)]
struct StateDoc {
    schema: String,
    seed: u64,
    round: u64,
    next_config_id: u64,
    settings: Settings,
    bounds: Vec<Bound>,
    configs: Vec<ConfigDoc>,
    pending: Option<PendingAction>,
    summary: Option<RoundSummary>,
}

#[derive(Serialize, Deserialize)]
struct ConfigDoc {
    id: u64,
    /// Unit-hypercube coordinates.
    x: Vec<f64>,
    losses: Vec<f64>,
}

/// Full optimizer state: bounds, observed curves, round counter and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    bounds: Vec<Bound>,
    data: CurveSet,
    round: u64,
    seed: u64,
    settings: Settings,
    next_config_id: u64,
    pending: Option<PendingAction>,
    summary: Option<RoundSummary>,
}

impl OptState {
    pub fn new(bounds: Vec<Bound>, settings: Settings, seed: u64) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidInput("need at least one bound".into()));
        }
        settings.validate()?;
        for b in &bounds {
            Bound::new(b.name.clone(), b.lower, b.upper)?;
        }
        Ok(Self {
            data: CurveSet::new(bounds.len())?,
            bounds,
            round: 0,
            seed,
            settings,
            next_config_id: 0,
            pending: None,
            summary: None,
        })
    }

    pub fn bounds(&self) -> &[Bound] {
        &self.bounds
    }

    pub fn data(&self) -> &CurveSet {
        &self.data
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn last_summary(&self) -> Option<&RoundSummary> {
        self.summary.as_ref()
    }

    /// Map a unit-hypercube point to original coordinates.
    pub fn to_original(&self, x_unit: &[f64]) -> Vec<f64> {
        x_unit
            .iter()
            .zip(&self.bounds)
            .map(|(&v, b)| b.lower + v * (b.upper - b.lower))
            .collect()
    }

    /// Original coordinates of a known config.
    pub fn config_x(&self, config_id: u64) -> Option<Vec<f64>> {
        self.data
            .index_of(config_id)
            .map(|n| self.to_original(self.data.x(n)))
    }

    pub fn config_epochs(&self, config_id: u64) -> Option<u64> {
        self.data.index_of(config_id).map(|n| self.data.epochs(n))
    }

    /// Lowest observed loss so far (over every epoch of every curve).
    pub fn best_observed(&self) -> Option<f64> {
        let mut best = f64::INFINITY;
        for n in 0..self.data.len() {
            for &y in self.data.losses(n) {
                best = best.min(y);
            }
        }
        best.is_finite().then_some(best)
    }

    /// Run one decision round. Deterministic given the serialized state: the
    /// round's randomness derives from (seed, round), and the pending-action
    /// bookkeeping this records does not feed back into the decision.
    pub fn suggest(&mut self) -> Result<Action> {
        let round = self.round;
        let action = self.decide().map_err(|e| e.in_round(round))?;
        self.pending = Some(PendingAction {
            config_id: action.config_id(),
            x_unit: match &action.kind {
                ActionKind::StartNew { x, .. } => {
                    let unit = self.to_unit(x);
                    Some(unit)
                }
                ActionKind::Resume { .. } => None,
            },
            remaining: action.epochs,
        });
        Ok(action)
    }

    fn to_unit(&self, x_original: &[f64]) -> Vec<f64> {
        x_original
            .iter()
            .zip(&self.bounds)
            .map(|(&v, b)| ((v - b.lower) / (b.upper - b.lower)).clamp(0.0, 1.0))
            .collect()
    }

    fn decide(&mut self) -> Result<Action> {
        let s = &self.settings;
        let round_seed = mix_seed(self.seed, &[0x726f_756e_64, self.round]);
        let dim = self.bounds.len();
        let pool = candidate_pool(dim, s.pool_size, mix_seed(round_seed, &[1]));

        let spec = HyperPriorSpec::for_data(&self.data);
        let mut chain_rng = ChaCha8Rng::seed_from_u64(mix_seed(round_seed, &[2]));
        let samples = sample_hypers(
            &self.data,
            &spec,
            s.mcmc_samples,
            s.mcmc_burn_in,
            &mut chain_rng,
        )?;
        let models: Vec<FtgpModel> = exec::map_indexed(samples.len(), |i| {
            ftgp::fit(&self.data, &samples[i])
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let basket = acquisition::build_basket(&models, &self.data, &pool, s.b_old, s.b_new)?;
        let mut score_rng = ChaCha8Rng::seed_from_u64(mix_seed(round_seed, &[3]));
        let scores =
            acquisition::score_actions(&models, &self.data, &basket, s.n_fant, s.n_mc, &mut score_rng)?;
        let k = acquisition::select_action(&scores);

        self.summary = Some(RoundSummary {
            best_observed_loss: self.best_observed(),
            best_asymptote_mean: basket.best.is_finite().then_some(basket.best),
        });

        let kind = if basket.is_old(k) {
            ActionKind::Resume {
                config_id: self.data.id(basket.old_members[k]),
            }
        } else {
            ActionKind::StartNew {
                config_id: self.next_config_id,
                x: self.to_original(basket.member_x(k)),
            }
        };
        Ok(Action {
            kind,
            epochs: s.epochs_per_decision,
        })
    }

    /// Ingest one epoch's loss. Epochs must arrive contiguously (epoch =
    /// observed count + 1); a config unknown to the data is accepted only if
    /// it matches the pending suggestion, which registers it.
    pub fn observe(&mut self, config_id: u64, epoch: u64, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::InvalidInput(format!("loss must be finite, got {loss}")));
        }
        match self.data.index_of(config_id) {
            Some(n) => {
                let expected = self.data.epochs(n) + 1;
                if epoch != expected {
                    return Err(Error::NonContiguousEpoch {
                        config_id,
                        expected,
                        got: epoch,
                    });
                }
                self.data.push_loss(n, loss)?;
            }
            None => {
                let x_unit = match &self.pending {
                    Some(p) if p.config_id == config_id => p.x_unit.clone(),
                    _ => None,
                };
                let Some(x_unit) = x_unit else {
                    return Err(Error::UnknownConfig(config_id));
                };
                if epoch != 1 {
                    return Err(Error::NonContiguousEpoch {
                        config_id,
                        expected: 1,
                        got: epoch,
                    });
                }
                let n = self.data.add_config(config_id, x_unit)?;
                self.data.push_loss(n, loss)?;
                self.next_config_id = self.next_config_id.max(config_id + 1);
            }
        }
        // a completed action closes the round
        if let Some(p) = &mut self.pending {
            if p.config_id == config_id {
                p.remaining = p.remaining.saturating_sub(1);
                if p.remaining == 0 {
                    self.pending = None;
                    self.round += 1;
                }
            }
        }
        Ok(())
    }

    /// Serialize to the canonical versioned JSON document (floats at 17
    /// significant digits, so the round trip is bit-exact).
    pub fn save(&self) -> String {
        let doc = StateDoc {
            schema: STATE_SCHEMA.to_string(),
            seed: self.seed,
            round: self.round,
            next_config_id: self.next_config_id,
            settings: self.settings.clone(),
            bounds: self.bounds.clone(),
            configs: (0..self.data.len())
                .map(|n| ConfigDoc {
                    id: self.data.id(n),
                    x: self.data.x(n).to_vec(),
                    losses: self.data.losses(n).to_vec(),
                })
                .collect(),
            pending: self.pending.clone(),
            summary: self.summary.clone(),
        };
        to_json_17(&doc)
    }

    /// Restore from a state document. Parses and validates the whole document
    /// before constructing anything, so a corrupted document leaves no
    /// partial state behind.
    pub fn load(doc: &str) -> Result<Self> {
        let doc: StateDoc =
            serde_json::from_str(doc).map_err(|e| Error::Malformed(e.to_string()))?;
        if doc.schema != STATE_SCHEMA {
            return Err(Error::SchemaMismatch {
                expected: STATE_SCHEMA.to_string(),
                found: doc.schema,
            });
        }
        let mut state = OptState::new(doc.bounds, doc.settings, doc.seed)?;
        for c in doc.configs {
            let n = state.data.add_config(c.id, c.x)?;
            for y in c.losses {
                state.data.push_loss(n, y)?;
            }
        }
        state.round = doc.round;
        state.next_config_id = doc.next_config_id;
        state.pending = doc.pending;
        state.summary = doc.summary;
        Ok(state)
    }

    /// Persist atomically: write to a sibling temp file, then rename.
    pub fn save_to_file(&self, path: &std::path::Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.save())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_from_file(path: &std::path::Path) -> Result<Self> {
        Self::load(&std::fs::read_to_string(path)?)
    }
}
