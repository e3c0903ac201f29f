use std::fs;
use std::path::Path;

use assoclab::selection::EvalConfig;
use assoclab::sim::{CandidateCorpusConfig, CorpusConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Contents of a `--config` file. Every section is optional; missing ones
/// fall back to the built-in presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Drives the corpus and candidate generators, the
    /// evaluation split and the forest. `--seed` takes precedence.
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub candidates: CandidateCorpusConfig,
    pub eval: EvalConfig,
}

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_ATTEMPTS: usize = 100_000;
pub const DEFAULT_EVENTS: usize = 200_000;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            corpus: CorpusConfig::field_regime(DEFAULT_ATTEMPTS, DEFAULT_SEED),
            candidates: CandidateCorpusConfig::field_regime(DEFAULT_EVENTS, DEFAULT_SEED),
            eval: EvalConfig::default(),
        }
    }
}

/// Flags that override config values.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold_ms: Option<u32>,
    pub timeout_ms: Option<u32>,
    pub n: Option<usize>,
    pub trees: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "config file {} does not exist",
                path.display()
            )));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = RunConfig::load(path)?;
        cfg.apply(o);
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        self.corpus.rng_seed = self.seed;
        self.candidates.rng_seed = self.seed;
        self.eval.split_seed = self.seed;
        self.eval.forest.rng_seed = self.seed;
        if let Some(t) = o.threshold_ms {
            self.eval.threshold_ms = t;
        }
        if let Some(t) = o.timeout_ms {
            for s in &mut self.corpus.scenarios {
                s.scenario.timeout_ms = t;
            }
            for tier in &mut self.candidates.tiers {
                tier.scenario.timeout_ms = t;
            }
        }
        if let Some(n) = o.n {
            self.corpus.n_attempts = n;
            self.candidates.n_events = n;
        }
        if let Some(n) = o.trees {
            self.eval.forest.n_trees = n;
        }
    }
}
