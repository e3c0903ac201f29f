//! Seeded generation of connection-log corpora with planted structure.
//!
//! Each attempt draws its context (user, device model, AP model, hour, RSSI,
//! associated devices), then either a user-driven termination or a scenario
//! template, scaled by the context multipliers and run through the state
//! machine. Attempt `i` uses `sub_seed(rng_seed, i)` only, so generation can
//! run in parallel without changing the output.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_probability, simulate_process, AttemptContext, ConfigError, ScenarioConfig,
    TransitionTrace,
};
use crate::log_schema::{Band, ConnectionAttempt, Outcome};
use crate::{sub_seed, RSSI_CLAMP_DBM};

const WEIGHT_EPS: f64 = 1e-6;
const USER_SALT: u64 = 0x5553_4552_0000_0001;
const PILOT_SALT: u64 = 0x5049_4c4f_5400_0002;
const PILOT_SIZE: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedScenario {
    pub name: String,
    pub weight: f64,
    pub scenario: ScenarioConfig,
}

/// A categorical value with its sampling weight and effect multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub weight: f64,
    #[serde(default = "one")]
    pub latency_mult: f64,
    #[serde(default = "one")]
    pub loss_mult: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApModelSpec {
    pub name: String,
    pub weight: f64,
    #[serde(default = "one")]
    pub latency_mult: f64,
    #[serde(default = "one")]
    pub loss_mult: f64,
    /// Probability an AP of this model is a public AP.
    pub public_share: f64,
    /// Probability the AP is password protected.
    pub encrypted_share: f64,
    /// Probability the AP is known to run on 5 GHz (else 2.4 GHz).
    pub band_5ghz_share: f64,
}

fn one() -> f64 {
    1.0
}

/// RSSI draw and its effect: below `ref_dbm` every dB adds
/// `latency_per_db` to the latency multiplier and `loss_per_db` to the loss
/// multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssiModel {
    pub min_dbm: i32,
    pub max_dbm: i32,
    pub ref_dbm: i32,
    pub latency_per_db: f64,
    pub loss_per_db: f64,
}

impl Default for RssiModel {
    fn default() -> Self {
        RssiModel {
            min_dbm: -95,
            max_dbm: -45,
            ref_dbm: -60,
            latency_per_db: 0.02,
            loss_per_db: 0.03,
        }
    }
}

impl RssiModel {
    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> i32 {
        rng.random_range(self.min_dbm..=self.max_dbm)
    }

    pub(crate) fn factors(&self, rssi: i32) -> (f64, f64) {
        let deficit = (self.ref_dbm - rssi).max(0) as f64;
        (
            1.0 + self.latency_per_db * deficit,
            1.0 + self.loss_per_db * deficit,
        )
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.min_dbm > self.max_dbm || self.latency_per_db < 0.0 || self.loss_per_db < 0.0 {
            return Err(ConfigError::Invalid(
                "rssi model: need min_dbm <= max_dbm and non-negative slopes".into(),
            ));
        }
        Ok(())
    }
}

/// Hour-of-day sampling weights and latency multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourModel {
    pub weights: Vec<f64>,
    pub latency_mult: Vec<f64>,
}

impl Default for HourModel {
    fn default() -> Self {
        let daytime = |h: usize| (7..19).contains(&h);
        let raw: Vec<f64> = (0..24)
            .map(|h| if daytime(h) { 1.5 } else { 0.6 })
            .collect();
        let total: f64 = raw.iter().sum();
        HourModel {
            weights: raw.iter().map(|w| w / total).collect(),
            latency_mult: (0..24)
                .map(|h| if daytime(h) { 1.08 } else { 1.0 })
                .collect(),
        }
    }
}

impl HourModel {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.weights.len() != 24 || self.latency_mult.len() != 24 {
            return Err(ConfigError::Invalid(
                "hour model needs 24 weights and 24 multipliers".into(),
            ));
        }
        check_weights("hour weights", self.weights.iter().copied())
    }
}

/// Share and mix of attempts the user abandons (not set-up failures).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonWillingMix {
    pub share: f64,
    pub wrong_password: f64,
    pub switched_to_another_wifi: f64,
    pub forgot_wifi: f64,
    pub switched_off_wifi: f64,
    pub unknown: f64,
}

impl NonWillingMix {
    fn outcomes(&self) -> [(Outcome, f64); 5] {
        [
            (Outcome::WrongPassword, self.wrong_password),
            (
                Outcome::SwitchedToAnotherWifi,
                self.switched_to_another_wifi,
            ),
            (Outcome::ForgotWifi, self.forgot_wifi),
            (Outcome::SwitchedOffWifi, self.switched_off_wifi),
            (Outcome::Unknown, self.unknown),
        ]
    }
}

impl Default for NonWillingMix {
    fn default() -> Self {
        NonWillingMix {
            share: 0.2,
            wrong_password: 0.28,
            switched_to_another_wifi: 0.32,
            forgot_wifi: 0.1,
            switched_off_wifi: 0.1,
            unknown: 0.2,
        }
    }
}

/// Marginals the generator is expected to reproduce. Unset entries are not checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMarginals {
    #[serde(default)]
    pub success_rate: Option<f64>,
    /// Timeout + DhcpFailure share of all attempts.
    #[serde(default)]
    pub willing_failure_rate: Option<f64>,
    /// Share of successes faster than 5 s.
    #[serde(default)]
    pub success_under_5s: Option<f64>,
    /// Share of successes slower than 15 s.
    #[serde(default)]
    pub success_over_15s: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_attempts: usize,
    pub scenarios: Vec<WeightedScenario>,
    pub devices: Vec<CategorySpec>,
    pub ap_models: Vec<ApModelSpec>,
    pub n_users: usize,
    /// Log-normal spread of per-user loss multipliers.
    pub user_loss_sigma: f64,
    pub rssi: RssiModel,
    pub hours: HourModel,
    /// Latency multiplier for public APs.
    pub public_latency_mult: f64,
    pub mean_devices_public: f64,
    pub mean_devices_private: f64,
    pub non_willing: NonWillingMix,
    #[serde(default)]
    pub targets: Option<TargetMarginals>,
    /// Re-derive `non_willing.share` from a pilot run so the overall
    /// success rate meets `targets.success_rate`.
    #[serde(default)]
    pub calibrate: bool,
    #[serde(default)]
    pub emit_traces: bool,
    pub rng_seed: u64,
}

fn check_weights(name: &str, weights: impl Iterator<Item = f64>) -> Result<(), ConfigError> {
    let mut total = 0.0;
    let mut count = 0;
    for w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "{name}: weight {w} is negative or not finite"
            )));
        }
        total += w;
        count += 1;
    }
    if count == 0 {
        return Err(ConfigError::Invalid(format!("{name}: universe is empty")));
    }
    if (total - 1.0).abs() > WEIGHT_EPS {
        return Err(ConfigError::Invalid(format!(
            "{name}: weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_weights("scenarios", self.scenarios.iter().map(|s| s.weight))?;
        for s in &self.scenarios {
            s.scenario.validate()?;
        }
        check_weights("devices", self.devices.iter().map(|d| d.weight))?;
        check_weights("ap_models", self.ap_models.iter().map(|a| a.weight))?;
        for a in &self.ap_models {
            check_probability("public_share", a.public_share)?;
            check_probability("encrypted_share", a.encrypted_share)?;
            check_probability("band_5ghz_share", a.band_5ghz_share)?;
        }
        let mults = self
            .devices
            .iter()
            .flat_map(|d| [d.latency_mult, d.loss_mult])
            .chain(
                self.ap_models
                    .iter()
                    .flat_map(|a| [a.latency_mult, a.loss_mult]),
            );
        for m in mults
            .chain([self.public_latency_mult])
            .chain(self.hours.latency_mult.iter().copied())
        {
            if !(m > 0.0 && m.is_finite()) {
                return Err(ConfigError::Invalid(format!(
                    "multiplier {m} must be positive"
                )));
            }
        }
        if self.n_users == 0 {
            return Err(ConfigError::Invalid("n_users must be positive".into()));
        }
        if self.user_loss_sigma < 0.0
            || self.mean_devices_public < 0.0
            || self.mean_devices_private < 0.0
        {
            return Err(ConfigError::Invalid(
                "spreads and device means must be non-negative".into(),
            ));
        }
        self.rssi.validate()?;
        self.hours.validate()?;
        check_probability("non_willing.share", self.non_willing.share)?;
        check_weights(
            "non_willing",
            self.non_willing.outcomes().into_iter().map(|(_, w)| w),
        )?;
        if let Some(t) = &self.targets {
            for v in [
                t.success_rate,
                t.willing_failure_rate,
                t.success_under_5s,
                t.success_over_15s,
            ]
            .into_iter()
            .flatten()
            {
                check_probability("target", v)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub name: String,
    pub target: f64,
    pub achieved: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n_attempts: usize,
    /// Non-willing share actually used (after calibration, if enabled).
    pub non_willing_share: Option<f64>,
    /// Success rate of simulated (willing) attempts in the pilot run.
    pub pilot_willing_success: Option<f64>,
    pub entries: Vec<CalibrationEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub attempts: Vec<ConnectionAttempt>,
    pub traces: Option<Vec<TransitionTrace>>,
    pub report: CalibrationReport,
}

struct Samplers {
    scenarios: WeightedIndex<f64>,
    devices: WeightedIndex<f64>,
    aps: WeightedIndex<f64>,
    hours: WeightedIndex<f64>,
    non_willing: WeightedIndex<f64>,
}

impl Samplers {
    fn new(cfg: &CorpusConfig) -> Result<Self, ConfigError> {
        let wi = |name: &str, w: Vec<f64>| {
            WeightedIndex::new(w).map_err(|e| ConfigError::Invalid(format!("{name}: {e}")))
        };
        Ok(Samplers {
            scenarios: wi(
                "scenarios",
                cfg.scenarios.iter().map(|s| s.weight).collect(),
            )?,
            devices: wi("devices", cfg.devices.iter().map(|d| d.weight).collect())?,
            aps: wi(
                "ap_models",
                cfg.ap_models.iter().map(|a| a.weight).collect(),
            )?,
            hours: wi("hours", cfg.hours.weights.clone())?,
            non_willing: wi(
                "non_willing",
                cfg.non_willing.outcomes().iter().map(|(_, w)| *w).collect(),
            )?,
        })
    }
}

fn user_profile(cfg: &CorpusConfig, s: &Samplers, user: usize) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.rng_seed ^ USER_SALT, user as u64));
    let device = s.devices.sample(&mut rng);
    let z: f64 = rng.sample(StandardNormal);
    (device, (cfg.user_loss_sigma * z).exp())
}

fn mean_count<R: Rng>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    (-mean * u.ln()).floor() as u32
}

/// Draws the willing-path result for attempt `index` under `seed`.
fn draw_attempt(
    cfg: &CorpusConfig,
    s: &Samplers,
    seed: u64,
    index: usize,
    non_willing_share: f64,
) -> (ConnectionAttempt, Option<TransitionTrace>) {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, index as u64));
    let user = rng.random_range(0..cfg.n_users);
    let (device_idx, user_loss) = user_profile(cfg, s, user);
    let device = &cfg.devices[device_idx];
    let ap = &cfg.ap_models[s.aps.sample(&mut rng)];
    let is_public = rng.random_bool(ap.public_share);
    let encrypted = rng.random_bool(ap.encrypted_share);
    let band = if rng.random_bool(ap.band_5ghz_share) {
        Band::Band5GHz
    } else {
        Band::Band2_4GHz
    };
    let hour = s.hours.sample(&mut rng);
    let rssi = cfg.rssi.sample(&mut rng);
    let num_devices = mean_count(
        &mut rng,
        if is_public {
            cfg.mean_devices_public
        } else {
            cfg.mean_devices_private
        },
    );
    let ctx = AttemptContext {
        attempt_id: format!("a{index:08}"),
        user_id: format!("user{user:06}"),
        hour_of_day: hour as u8,
        rssi_dbm: rssi,
        num_devices,
        device_model: device.name.clone(),
        ap_model: ap.name.clone(),
        is_public: Some(is_public),
        band: Some(band),
    };

    // Drawn unconditionally so the willing/non-willing split does not shift
    // later draws of this attempt.
    let abandon = rng.random_bool(non_willing_share);
    let abandon_kind = cfg.non_willing.outcomes()[s.non_willing.sample(&mut rng)].0;
    let template = &cfg.scenarios[s.scenarios.sample(&mut rng)];
    let process_seed: u64 = rng.random();

    if abandon {
        let record = crate::log_schema::AttemptRecord {
            attempt_id: ctx.attempt_id,
            user_id: ctx.user_id,
            hour_of_day: ctx.hour_of_day,
            rssi_dbm: ctx.rssi_dbm,
            num_devices: ctx.num_devices,
            device_model: ctx.device_model,
            ap_model: ctx.ap_model,
            encrypted,
            is_public: ctx.is_public,
            band: ctx.band,
            outcome: abandon_kind,
            connection_time_ms: None,
            phases: None,
        };
        let attempt = ConnectionAttempt::new(record).expect("abandoned attempt is valid");
        return (attempt, None);
    }

    let (rssi_lat, rssi_loss) = cfg.rssi.factors(rssi.min(RSSI_CLAMP_DBM));
    let public_mult = if is_public {
        cfg.public_latency_mult
    } else {
        1.0
    };
    let latency = device.latency_mult
        * ap.latency_mult
        * cfg.hours.latency_mult[hour]
        * public_mult
        * rssi_lat;
    let loss = device.loss_mult * ap.loss_mult * user_loss * rssi_loss;
    let mut scenario = template.scenario.scaled(latency, loss);
    scenario.encrypted = encrypted;
    scenario.rng_seed = process_seed;
    let result = simulate_process(&scenario);
    let trace = TransitionTrace {
        attempt_id: ctx.attempt_id.clone(),
        transitions: result.transitions,
    };
    let attempt = super::attempt_from(
        result.outcome,
        result.elapsed_ms,
        result.phases,
        encrypted,
        ctx,
    );
    (attempt, Some(trace))
}

/// Generates a corpus and its calibration report. `cfg` is validated first.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<GeneratedCorpus, ConfigError> {
    cfg.validate()?;
    if cfg.n_attempts == 0 {
        return Ok(GeneratedCorpus {
            attempts: Vec::new(),
            traces: cfg.emit_traces.then(Vec::new),
            report: CalibrationReport::default(),
        });
    }
    let samplers = Samplers::new(cfg)?;
    let mut report = CalibrationReport {
        n_attempts: cfg.n_attempts,
        ..Default::default()
    };

    let mut non_willing_share = cfg.non_willing.share;
    let target_success = cfg.targets.as_ref().and_then(|t| t.success_rate);
    if cfg.calibrate {
        match target_success {
            Some(target) => {
                let pilot_n = cfg.n_attempts.clamp(1, PILOT_SIZE);
                let successes = (0..pilot_n)
                    .into_par_iter()
                    .filter(|&i| {
                        draw_attempt(cfg, &samplers, cfg.rng_seed ^ PILOT_SALT, i, 0.0)
                            .0
                            .outcome
                            .is_success()
                    })
                    .count();
                let pilot = successes as f64 / pilot_n as f64;
                report.pilot_willing_success = Some(pilot);
                if pilot <= 0.0 || target > pilot {
                    report.warnings.push(format!(
                        "target success rate {target:.4} exceeds the simulated willing success rate {pilot:.4}; \
                         calibration cannot reach it"
                    ));
                    non_willing_share = 0.0;
                } else {
                    non_willing_share = 1.0 - target / pilot;
                }
            }
            None => report
                .warnings
                .push("calibrate set without targets.success_rate; nothing to calibrate".into()),
        }
    }
    report.non_willing_share = Some(non_willing_share);

    let rows: Vec<(ConnectionAttempt, Option<TransitionTrace>)> = (0..cfg.n_attempts)
        .into_par_iter()
        .map(|i| draw_attempt(cfg, &samplers, cfg.rng_seed, i, non_willing_share))
        .collect();
    let mut attempts = Vec::with_capacity(rows.len());
    let mut traces = cfg.emit_traces.then(Vec::new);
    for (a, t) in rows {
        if let (Some(traces), Some(t)) = (traces.as_mut(), t) {
            traces.push(t);
        }
        attempts.push(a);
    }

    if let Some(targets) = &cfg.targets {
        check_targets(&attempts, targets, &mut report);
    }
    Ok(GeneratedCorpus {
        attempts,
        traces,
        report,
    })
}

fn check_targets(
    attempts: &[ConnectionAttempt],
    targets: &TargetMarginals,
    report: &mut CalibrationReport,
) {
    let n = attempts.len() as f64;
    let times: Vec<u32> = attempts
        .iter()
        .filter_map(|a| a.connection_time_ms)
        .collect();
    let n_success = times.len() as f64;
    let willing_fail = attempts
        .iter()
        .filter(|a| matches!(a.outcome, Outcome::Timeout | Outcome::DhcpFailure))
        .count() as f64;
    let share = |pred: &dyn Fn(u32) -> bool| {
        if n_success == 0.0 {
            0.0
        } else {
            times.iter().filter(|&&t| pred(t)).count() as f64 / n_success
        }
    };
    let checks = [
        ("success_rate", targets.success_rate, n_success / n),
        (
            "willing_failure_rate",
            targets.willing_failure_rate,
            willing_fail / n,
        ),
        (
            "success_under_5s",
            targets.success_under_5s,
            share(&|t| t < 5_000),
        ),
        (
            "success_over_15s",
            targets.success_over_15s,
            share(&|t| t > 15_000),
        ),
    ];
    for (name, target, achieved) in checks {
        let Some(target) = target else { continue };
        let within = (achieved - target).abs() <= targets.tolerance;
        if !within {
            report.warnings.push(format!(
                "{name}: achieved {achieved:.4} vs target {target:.4} (tolerance {})",
                targets.tolerance
            ));
        }
        report.entries.push(CalibrationEntry {
            name: name.to_string(),
            target,
            achieved,
            tolerance: targets.tolerance,
            within_tolerance: within,
        });
    }
}
