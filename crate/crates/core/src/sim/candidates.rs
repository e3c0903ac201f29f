//! Candidate-set generator for what-if replay.
//!
//! Each scan event lists several candidate APs. Every candidate gets a
//! counterfactual ground truth: the outcome the device would have seen had it
//! picked that AP, drawn from the state machine under the AP tier's scenario.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{CategorySpec, HourModel, RssiModel};
use super::{check_probability, simulate_process, ConfigError, ScenarioConfig};
use crate::selection::{Candidate, CandidateSet, GroundTruth};
use crate::sub_seed;

/// A family of AP models sharing one connection behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApTier {
    pub name: String,
    pub weight: f64,
    pub n_models: usize,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCorpusConfig {
    pub n_events: usize,
    pub min_candidates: usize,
    pub max_candidates: usize,
    pub tiers: Vec<ApTier>,
    pub devices: Vec<CategorySpec>,
    pub rssi: RssiModel,
    pub hours: HourModel,
    pub encrypted_share: f64,
    pub rng_seed: u64,
}

impl CandidateCorpusConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_candidates == 0 || self.min_candidates > self.max_candidates {
            return Err(ConfigError::Invalid(
                "need 1 <= min_candidates <= max_candidates".into(),
            ));
        }
        if self.max_candidates > 255 {
            return Err(ConfigError::Invalid(
                "at most 255 candidates per event".into(),
            ));
        }
        if self.tiers.is_empty() || self.devices.is_empty() {
            return Err(ConfigError::Invalid(
                "tiers and devices must be non-empty".into(),
            ));
        }
        let tier_total: f64 = self.tiers.iter().map(|t| t.weight).sum();
        let device_total: f64 = self.devices.iter().map(|d| d.weight).sum();
        if (tier_total - 1.0).abs() > 1e-6 || (device_total - 1.0).abs() > 1e-6 {
            return Err(ConfigError::Invalid(
                "tier and device weights must each sum to 1".into(),
            ));
        }
        for t in &self.tiers {
            if t.n_models == 0 {
                return Err(ConfigError::Invalid(format!(
                    "tier {} has no models",
                    t.name
                )));
            }
            t.scenario.validate()?;
        }
        check_probability("encrypted_share", self.encrypted_share)?;
        if self.hours.weights.len() != 24 || self.hours.latency_mult.len() != 24 {
            return Err(ConfigError::Invalid("hour model needs 24 entries".into()));
        }
        Ok(())
    }
}

fn bssid(event: usize, slot: usize) -> String {
    let e = event as u32;
    format!(
        "02:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
        (e >> 24) & 0xff,
        (e >> 16) & 0xff,
        (e >> 8) & 0xff,
        e & 0xff,
        slot
    )
}

/// Generates `n_events` candidate sets, each candidate carrying ground truth.
pub fn generate_candidate_sets(
    cfg: &CandidateCorpusConfig,
) -> Result<Vec<CandidateSet>, ConfigError> {
    cfg.validate()?;
    let tiers = WeightedIndex::new(cfg.tiers.iter().map(|t| t.weight))
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let devices = WeightedIndex::new(cfg.devices.iter().map(|d| d.weight))
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let hours = WeightedIndex::new(cfg.hours.weights.iter().copied())
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let sets = (0..cfg.n_events)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.rng_seed, i as u64));
            let device = &cfg.devices[devices.sample(&mut rng)];
            let hour = hours.sample(&mut rng);
            let k = rng.random_range(cfg.min_candidates..=cfg.max_candidates);
            let candidates = (0..k)
                .map(|slot| {
                    let tier = &cfg.tiers[tiers.sample(&mut rng)];
                    let model = rng.random_range(0..tier.n_models);
                    let rssi = cfg.rssi.sample(&mut rng).min(crate::RSSI_CLAMP_DBM);
                    let encrypted = rng.random_bool(cfg.encrypted_share);
                    let (rssi_lat, rssi_loss) = cfg.rssi.factors(rssi);
                    let mut scenario = tier.scenario.scaled(
                        device.latency_mult * cfg.hours.latency_mult[hour] * rssi_lat,
                        device.loss_mult * rssi_loss,
                    );
                    scenario.encrypted = encrypted;
                    scenario.rng_seed = rng.random();
                    let result = simulate_process(&scenario);
                    Candidate {
                        id: bssid(i, slot),
                        ap_model: format!("{}-{model:03}", tier.name),
                        rssi_dbm: rssi,
                        encrypted,
                        truth: Some(GroundTruth {
                            outcome: result.outcome,
                            connection_time_ms: result
                                .outcome
                                .is_success()
                                .then_some(result.elapsed_ms),
                        }),
                    }
                })
                .collect();
            CandidateSet {
                event_id: format!("e{i:08}"),
                hour_of_day: hour as u8,
                device_model: device.name.clone(),
                candidates,
            }
        })
        .collect();
    Ok(sets)
}
