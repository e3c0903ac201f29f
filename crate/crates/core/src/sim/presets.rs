//! Built-in generator configurations.
//!
//! `CorpusConfig::field_regime` plants the target marginals
//! (54.9% success, 24% willing failures, 80% of successes under 5 s, 3% over
//! 15 s) together with a strong device-model effect, a moderate AP-model
//! effect, a monotone RSSI effect and a weak hour-of-day effect.
//! `CandidateCorpusConfig::field_regime` builds scan events where the
//! strongest AP fails about a third of the time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::candidates::{ApTier, CandidateCorpusConfig};
use super::corpus::{
    ApModelSpec, CategorySpec, CorpusConfig, HourModel, NonWillingMix, RssiModel, TargetMarginals,
    WeightedScenario,
};
use super::{LatencyDist, PhaseLatency, ScenarioConfig};

/// Seed of the fixed device/AP universe; independent of the corpus seed.
const UNIVERSE_SEED: u64 = 0x00C0_FFEE;

const N_DEVICES: usize = 20;
const N_AP_MODELS: usize = 60;

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Zipf-like popularity, heavier for low ranks.
fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    normalized((1..=n).map(|k| 1.0 / (k as f64).powf(s)).collect())
}

fn lognormal_mult<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (sigma * z).exp()
}

pub(crate) fn field_devices(latency_sigma: f64, loss_sigma: f64) -> Vec<CategorySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(UNIVERSE_SEED);
    zipf_weights(N_DEVICES, 0.8)
        .into_iter()
        .enumerate()
        .map(|(i, weight)| CategorySpec {
            name: format!("{:08}", 35_000_000 + 7_919 * i as u64),
            weight,
            latency_mult: lognormal_mult(&mut rng, latency_sigma),
            loss_mult: lognormal_mult(&mut rng, loss_sigma),
        })
        .collect()
}

fn field_ap_models() -> Vec<ApModelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(UNIVERSE_SEED ^ 0xA9);
    zipf_weights(N_AP_MODELS, 0.7)
        .into_iter()
        .enumerate()
        .map(|(i, weight)| {
            let oui = 0x1C_0000u32 + 0x3_1D7 * i as u32;
            let public_share = if i % 4 == 0 { 0.85 } else { 0.1 };
            ApModelSpec {
                name: format!(
                    "{:02X}:{:02X}:{:02X}",
                    (oui >> 16) & 0xff,
                    (oui >> 8) & 0xff,
                    oui & 0xff
                ),
                weight,
                latency_mult: lognormal_mult(&mut rng, 0.25),
                loss_mult: lognormal_mult(&mut rng, 0.3),
                public_share,
                encrypted_share: if public_share > 0.5 { 0.3 } else { 0.9 },
                band_5ghz_share: rng.random_range(0.0..0.6),
            }
        })
        .collect()
}

fn scenario(
    p_loss: [f64; 4],
    scan: LatencyDist,
    dhcp: LatencyDist,
    dhcp_retry: LatencyDist,
    reconnect: LatencyDist,
) -> ScenarioConfig {
    ScenarioConfig {
        p_loss_probe: p_loss[0],
        p_loss_assoc: p_loss[1],
        p_loss_auth: p_loss[2],
        p_loss_dhcp: p_loss[3],
        phase_latency: PhaseLatency {
            scan,
            assoc: LatencyDist::log_normal(15.0, 0.4),
            auth: LatencyDist::log_normal(30.0, 0.4),
            dhcp,
            dhcp_retry: Some(dhcp_retry),
            reconnect,
        },
        ..ScenarioConfig::default()
    }
}

impl CorpusConfig {
    /// The default field regime at `n_attempts` attempts.
    pub fn field_regime(n_attempts: usize, rng_seed: u64) -> Self {
        let ln = LatencyDist::log_normal;
        let scenarios = vec![
            WeightedScenario {
                name: "clean".into(),
                weight: 0.67,
                scenario: scenario(
                    [0.04, 0.02, 0.02, 0.02],
                    ln(90.0, 1.3),
                    ln(750.0, 0.4),
                    ln(1500.0, 0.4),
                    ln(150.0, 0.4),
                ),
            },
            WeightedScenario {
                name: "congested".into(),
                weight: 0.04,
                scenario: scenario(
                    [0.8, 0.1, 0.1, 0.5],
                    ln(2500.0, 0.5),
                    ln(1500.0, 0.5),
                    ln(3500.0, 0.5),
                    ln(600.0, 0.5),
                ),
            },
            WeightedScenario {
                name: "broken".into(),
                weight: 0.29,
                scenario: scenario(
                    [0.985, 0.5, 0.3, 0.995],
                    ln(9000.0, 0.9),
                    ln(10_000.0, 0.5),
                    ln(10_000.0, 0.5),
                    ln(800.0, 0.5),
                ),
            },
        ];
        let hours = HourModel {
            latency_mult: (0..24)
                .map(|h| if (7..19).contains(&h) { 1.03 } else { 1.0 })
                .collect(),
            ..HourModel::default()
        };
        CorpusConfig {
            n_attempts,
            scenarios,
            devices: field_devices(0.45, 0.35),
            ap_models: field_ap_models(),
            n_users: 10_000,
            user_loss_sigma: 0.6,
            rssi: RssiModel {
                min_dbm: -95,
                max_dbm: -45,
                ref_dbm: -55,
                latency_per_db: 0.045,
                loss_per_db: 0.02,
            },
            hours,
            public_latency_mult: 1.5,
            mean_devices_public: 25.0,
            mean_devices_private: 4.0,
            non_willing: NonWillingMix::default(),
            targets: Some(TargetMarginals {
                success_rate: Some(0.549),
                willing_failure_rate: Some(0.24),
                success_under_5s: Some(0.80),
                success_over_15s: Some(0.03),
                tolerance: 0.015,
            }),
            calibrate: true,
            emit_traces: false,
            rng_seed,
        }
    }
}

impl CandidateCorpusConfig {
    /// Scan events in which the strongest candidate fails about a third of
    /// the time while most events also list a reliable, weaker AP.
    pub fn field_regime(n_events: usize, rng_seed: u64) -> Self {
        let ln = LatencyDist::log_normal;
        let good = scenario(
            [0.02, 0.01, 0.01, 0.05],
            ln(200.0, 0.6),
            ln(1200.0, 0.5),
            ln(2000.0, 0.5),
            ln(150.0, 0.4),
        );
        let bad = scenario(
            [0.85, 0.3, 0.3, 0.9],
            ln(2500.0, 0.6),
            ln(3000.0, 0.5),
            ln(5000.0, 0.5),
            ln(800.0, 0.5),
        );
        CandidateCorpusConfig {
            n_events,
            min_candidates: 3,
            max_candidates: 8,
            tiers: vec![
                ApTier {
                    name: "good".into(),
                    weight: 0.627,
                    n_models: 40,
                    scenario: good,
                },
                ApTier {
                    name: "bad".into(),
                    weight: 0.373,
                    n_models: 20,
                    scenario: bad,
                },
            ],
            devices: field_devices(0.15, 0.1),
            rssi: RssiModel {
                min_dbm: -90,
                max_dbm: -50,
                ref_dbm: -55,
                latency_per_db: 0.005,
                loss_per_db: 0.005,
            },
            hours: HourModel::default(),
            encrypted_share: 0.7,
            rng_seed,
        }
    }
}
