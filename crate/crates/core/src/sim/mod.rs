//! Discrete-event model of one WiFi connection set-up process.
//!
//! A process walks the Android network states
//! `Scanning -> Associating -> [Authenticating] -> ObtainingIp -> Connected`.
//! A lost probe, association or authentication exchange drops the process to
//! `Disconnected`, from which it re-enters `Scanning`. A lost DHCP round is
//! retried in place. The process is cut at `timeout_ms`.
//!
//! Every random draw comes from one of several ChaCha streams keyed by
//! `rng_seed` (one stream per latency phase plus one for loss draws), so two
//! configs that differ only in one phase's latency see identical draws
//! everywhere else.

mod candidates;
mod corpus;
mod presets;

pub use candidates::{generate_candidate_sets, ApTier, CandidateCorpusConfig};
pub use corpus::{
    generate_corpus, ApModelSpec, CalibrationEntry, CalibrationReport, CategorySpec, CorpusConfig,
    GeneratedCorpus, HourModel, NonWillingMix, RssiModel, TargetMarginals, WeightedScenario,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log_schema::{AttemptRecord, ConnectionAttempt, Outcome, PhaseTiming};
use crate::DEFAULT_TIMEOUT_MS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConnState {
    Scanning,
    Associating,
    Authenticating,
    ObtainingIp,
    Connected,
    Disconnected,
}

impl ConnState {
    pub const ALL: [ConnState; 6] = [
        ConnState::Scanning,
        ConnState::Associating,
        ConnState::Authenticating,
        ConnState::ObtainingIp,
        ConnState::Connected,
        ConnState::Disconnected,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ConnState::Scanning => "Scanning",
            ConnState::Associating => "Associating",
            ConnState::Authenticating => "Authenticating",
            ConnState::ObtainingIp => "ObtainingIp",
            ConnState::Connected => "Connected",
            ConnState::Disconnected => "Disconnected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: ConnState,
    pub to: ConnState,
    pub at_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionTrace {
    pub attempt_id: String,
    pub transitions: Vec<Transition>,
}

impl TransitionTrace {
    /// Number of times the process was in `Scanning`, counting the initial entry.
    pub fn scanning_entries(&self) -> usize {
        1 + self
            .transitions
            .iter()
            .filter(|t| t.to == ConnState::Scanning)
            .count()
    }

    /// Checks the structural invariants of a trace; returns the first violation.
    pub fn check(&self) -> Result<(), String> {
        let Some(first) = self.transitions.first() else {
            return Ok(());
        };
        if first.from != ConnState::Scanning {
            return Err(format!("first transition leaves {:?}", first.from));
        }
        for pair in self.transitions.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.at_ms <= a.at_ms {
                return Err(format!(
                    "timestamps not increasing: {} then {}",
                    a.at_ms, b.at_ms
                ));
            }
            if a.to != b.from {
                return Err(format!(
                    "transition into {:?} followed by one out of {:?}",
                    a.to, b.from
                ));
            }
            if a.to == ConnState::Connected {
                return Err("transition after Connected".into());
            }
            if a.to == ConnState::Disconnected && b.to != ConnState::Scanning {
                return Err(format!("Disconnected followed by {:?}", b.to));
            }
        }
        Ok(())
    }
}

/// A latency distribution in milliseconds. Samples are rounded and floored at 1 ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LatencyDist {
    LogNormal { median_ms: f64, sigma: f64 },
    Exponential { mean_ms: f64 },
    Uniform { min_ms: f64, max_ms: f64 },
    Constant { ms: f64 },
}

impl LatencyDist {
    pub fn log_normal(median_ms: f64, sigma: f64) -> Self {
        LatencyDist::LogNormal { median_ms, sigma }
    }

    fn validate(&self, name: &str) -> Result<(), ConfigError> {
        let ok = match *self {
            LatencyDist::LogNormal { median_ms, sigma } => {
                median_ms > 0.0 && sigma >= 0.0 && sigma.is_finite()
            }
            LatencyDist::Exponential { mean_ms } => mean_ms > 0.0,
            LatencyDist::Uniform { min_ms, max_ms } => min_ms > 0.0 && max_ms >= min_ms,
            LatencyDist::Constant { ms } => ms > 0.0,
        };
        if ok && self.mean().is_finite() {
            Ok(())
        } else {
            Err(ConfigError::Latency(name.to_string()))
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            LatencyDist::LogNormal { median_ms, sigma } => median_ms * (sigma * sigma / 2.0).exp(),
            LatencyDist::Exponential { mean_ms } => mean_ms,
            LatencyDist::Uniform { min_ms, max_ms } => (min_ms + max_ms) / 2.0,
            LatencyDist::Constant { ms } => ms,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            LatencyDist::LogNormal { median_ms, sigma } => LatencyDist::LogNormal {
                median_ms: median_ms * factor,
                sigma,
            },
            LatencyDist::Exponential { mean_ms } => LatencyDist::Exponential {
                mean_ms: mean_ms * factor,
            },
            LatencyDist::Uniform { min_ms, max_ms } => LatencyDist::Uniform {
                min_ms: min_ms * factor,
                max_ms: max_ms * factor,
            },
            LatencyDist::Constant { ms } => LatencyDist::Constant { ms: ms * factor },
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        let x = match *self {
            LatencyDist::LogNormal { median_ms, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                median_ms * (sigma * z).exp()
            }
            LatencyDist::Exponential { mean_ms } => {
                Exp::new(1.0 / mean_ms).expect("validated rate").sample(rng)
            }
            LatencyDist::Uniform { min_ms, max_ms } => {
                if max_ms > min_ms {
                    rng.random_range(min_ms..max_ms)
                } else {
                    min_ms
                }
            }
            LatencyDist::Constant { ms } => ms,
        };
        x.round().clamp(1.0, u32::MAX as f64) as u32
    }
}

/// Per-phase latency distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLatency {
    /// One scan round (probe exchange or beacon wait).
    pub scan: LatencyDist,
    pub assoc: LatencyDist,
    pub auth: LatencyDist,
    /// A DHCP round that succeeds.
    pub dhcp: LatencyDist,
    /// A DHCP round that is lost (retransmission timeout). Defaults to `dhcp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dhcp_retry: Option<LatencyDist>,
    /// Dwell in `Disconnected` before re-scanning. Booked as scan time.
    pub reconnect: LatencyDist,
}

impl Default for PhaseLatency {
    fn default() -> Self {
        PhaseLatency {
            scan: LatencyDist::log_normal(300.0, 0.5),
            assoc: LatencyDist::log_normal(25.0, 0.4),
            auth: LatencyDist::log_normal(60.0, 0.4),
            dhcp: LatencyDist::log_normal(1200.0, 0.5),
            dhcp_retry: None,
            reconnect: LatencyDist::log_normal(150.0, 0.4),
        }
    }
}

impl PhaseLatency {
    pub fn scaled(&self, factor: f64) -> Self {
        PhaseLatency {
            scan: self.scan.scaled(factor),
            assoc: self.assoc.scaled(factor),
            auth: self.auth.scaled(factor),
            dhcp: self.dhcp.scaled(factor),
            dhcp_retry: self.dhcp_retry.map(|d| d.scaled(factor)),
            reconnect: self.reconnect.scaled(factor),
        }
    }
}

/// 802.1X EAP exchange parameters of an enterprise network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EapParams {
    /// EAP round trips between station and authenticator.
    pub n_e: u32,
    /// One-way WiFi hop latency.
    pub t_w_ms: u32,
    /// Wired latency between AP and AAA server.
    pub t_a_ms: u32,
}

impl Default for EapParams {
    fn default() -> Self {
        EapParams {
            n_e: 4,
            t_w_ms: 10,
            t_a_ms: 5,
        }
    }
}

/// Extra authentication time of an EAP exchange: `2 * n_e * (t_w + t_a) + t_a`.
pub fn eap_overhead(p: EapParams) -> u64 {
    2 * p.n_e as u64 * (p.t_w_ms as u64 + p.t_a_ms as u64) + p.t_a_ms as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// A scan round gets no usable probe response.
    pub p_loss_probe: f64,
    /// The association exchange is lost.
    pub p_loss_assoc: f64,
    /// The authentication exchange is lost.
    pub p_loss_auth: f64,
    /// One DHCP round is lost.
    pub p_loss_dhcp: f64,
    pub phase_latency: PhaseLatency,
    /// Unencrypted APs skip `Authenticating`.
    pub encrypted: bool,
    pub enterprise: Option<EapParams>,
    pub timeout_ms: u32,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            p_loss_probe: 0.0,
            p_loss_assoc: 0.0,
            p_loss_auth: 0.0,
            p_loss_dhcp: 0.0,
            phase_latency: PhaseLatency::default(),
            encrypted: true,
            enterprise: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("probability {name} = {value} outside [0, 1]")]
    Probability { name: String, value: f64 },
    #[error("latency distribution {0} has non-positive or non-finite parameters")]
    Latency(String),
    #[error("timeout_ms must be positive")]
    Timeout,
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn check_probability(name: &str, value: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ConfigError::Probability {
            name: name.to_string(),
            value,
        })
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_probability("p_loss_probe", self.p_loss_probe)?;
        check_probability("p_loss_assoc", self.p_loss_assoc)?;
        check_probability("p_loss_auth", self.p_loss_auth)?;
        check_probability("p_loss_dhcp", self.p_loss_dhcp)?;
        let l = &self.phase_latency;
        l.scan.validate("scan")?;
        l.assoc.validate("assoc")?;
        l.auth.validate("auth")?;
        l.dhcp.validate("dhcp")?;
        if let Some(r) = &l.dhcp_retry {
            r.validate("dhcp_retry")?;
        }
        l.reconnect.validate("reconnect")?;
        if self.timeout_ms == 0 {
            return Err(ConfigError::Timeout);
        }
        Ok(())
    }

    /// Copy with every latency scaled by `latency` and every loss
    /// probability scaled by `loss` (capped at 1).
    pub fn scaled(&self, latency: f64, loss: f64) -> Self {
        let p = |x: f64| (x * loss).clamp(0.0, 1.0);
        ScenarioConfig {
            p_loss_probe: p(self.p_loss_probe),
            p_loss_assoc: p(self.p_loss_assoc),
            p_loss_auth: p(self.p_loss_auth),
            p_loss_dhcp: p(self.p_loss_dhcp),
            phase_latency: self.phase_latency.scaled(latency),
            ..self.clone()
        }
    }
}

/// Context fields stamped onto a simulated attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptContext {
    pub attempt_id: String,
    pub user_id: String,
    pub hour_of_day: u8,
    pub rssi_dbm: i32,
    pub num_devices: u32,
    pub device_model: String,
    pub ap_model: String,
    pub is_public: Option<bool>,
    pub band: Option<crate::log_schema::Band>,
}

impl Default for AttemptContext {
    fn default() -> Self {
        AttemptContext {
            attempt_id: "sim-0".into(),
            user_id: "user-0".into(),
            hour_of_day: 12,
            rssi_dbm: -65,
            num_devices: 1,
            device_model: "DEV00000".into(),
            ap_model: "AP000000".into(),
            is_public: None,
            band: None,
        }
    }
}

/// Result of one simulated set-up process, before context is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessResult {
    pub outcome: Outcome,
    /// Elapsed time until success, or `timeout_ms` for failures.
    pub elapsed_ms: u32,
    pub phases: PhaseTiming,
    pub transitions: Vec<Transition>,
}

const STREAM_SCAN: u64 = 0;
const STREAM_ASSOC: u64 = 1;
const STREAM_AUTH: u64 = 2;
const STREAM_DHCP: u64 = 3;
const STREAM_RECONNECT: u64 = 4;
const STREAM_LOSS: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy)]
enum Phase {
    Scan,
    Assoc,
    Auth,
    Dhcp,
}

/// Runs the state machine once. `cfg` must be valid.
pub fn simulate_process(cfg: &ScenarioConfig) -> ProcessResult {
    let seed = cfg.rng_seed;
    let mut scan_rng = stream(seed, STREAM_SCAN);
    let mut assoc_rng = stream(seed, STREAM_ASSOC);
    let mut auth_rng = stream(seed, STREAM_AUTH);
    let mut dhcp_rng = stream(seed, STREAM_DHCP);
    let mut reconnect_rng = stream(seed, STREAM_RECONNECT);
    let mut loss_rng = stream(seed, STREAM_LOSS);
    let lat = &cfg.phase_latency;
    let eap = cfg.enterprise.map_or(0, eap_overhead);
    let timeout = cfg.timeout_ms as u64;

    let mut t: u64 = 0;
    let mut phases = PhaseTiming::default();
    let mut transitions = Vec::new();
    let mut state = ConnState::Scanning;

    // Adds `dwell` to the clock, booking it on `phase`. Returns false when the
    // timeout cut the dwell short.
    let spend = |t: &mut u64, phases: &mut PhaseTiming, phase: Phase, dwell: u64| -> bool {
        let used = dwell.min(timeout - *t);
        *t += used;
        let slot = match phase {
            Phase::Scan => &mut phases.scan_ms,
            Phase::Assoc => &mut phases.assoc_ms,
            Phase::Auth => &mut phases.auth_ms,
            Phase::Dhcp => &mut phases.dhcp_ms,
        };
        *slot += used as u32;
        used == dwell
    };

    let outcome = loop {
        let (phase, dwell, next) = match state {
            ConnState::Scanning => {
                let d = lat.scan.sample(&mut scan_rng) as u64;
                let lost = loss_rng.random_bool(cfg.p_loss_probe);
                (
                    Phase::Scan,
                    d,
                    if lost {
                        ConnState::Disconnected
                    } else {
                        ConnState::Associating
                    },
                )
            }
            ConnState::Associating => {
                let d = lat.assoc.sample(&mut assoc_rng) as u64;
                let lost = loss_rng.random_bool(cfg.p_loss_assoc);
                let next = match (lost, cfg.encrypted) {
                    (true, _) => ConnState::Disconnected,
                    (false, true) => ConnState::Authenticating,
                    (false, false) => ConnState::ObtainingIp,
                };
                (Phase::Assoc, d, next)
            }
            ConnState::Authenticating => {
                let d = lat.auth.sample(&mut auth_rng) as u64 + eap;
                let lost = loss_rng.random_bool(cfg.p_loss_auth);
                (
                    Phase::Auth,
                    d,
                    if lost {
                        ConnState::Disconnected
                    } else {
                        ConnState::ObtainingIp
                    },
                )
            }
            ConnState::ObtainingIp => {
                let mut d = 0u64;
                let mut done = false;
                // Lost rounds retry in place; stop early once past the timeout.
                while !done && t + d < timeout {
                    if loss_rng.random_bool(cfg.p_loss_dhcp) {
                        let retry = lat.dhcp_retry.as_ref().unwrap_or(&lat.dhcp);
                        d += retry.sample(&mut dhcp_rng) as u64;
                    } else {
                        d += lat.dhcp.sample(&mut dhcp_rng) as u64;
                        done = true;
                    }
                }
                let next = if done {
                    ConnState::Connected
                } else {
                    ConnState::ObtainingIp
                };
                (Phase::Dhcp, d, next)
            }
            ConnState::Disconnected => {
                let d = lat.reconnect.sample(&mut reconnect_rng) as u64;
                (Phase::Scan, d, ConnState::Scanning)
            }
            ConnState::Connected => unreachable!("Connected is absorbing"),
        };
        let completed = spend(&mut t, &mut phases, phase, dwell);
        if !completed || next == state {
            break if matches!(state, ConnState::ObtainingIp) {
                Outcome::DhcpFailure
            } else {
                Outcome::Timeout
            };
        }
        transitions.push(Transition {
            from: state,
            to: next,
            at_ms: t as u32,
        });
        state = next;
        if state == ConnState::Connected {
            break Outcome::Success;
        }
    };

    ProcessResult {
        outcome,
        elapsed_ms: t as u32,
        phases,
        transitions,
    }
}

/// Simulates one attempt with default context.
pub fn run_attempt(cfg: &ScenarioConfig) -> (ConnectionAttempt, TransitionTrace) {
    run_attempt_with(cfg, AttemptContext::default())
}

/// Simulates one attempt and stamps `ctx` onto the resulting log row.
///
/// Failed attempts keep their (timeout-truncated) phase split but carry no
/// connection time.
pub fn run_attempt_with(
    cfg: &ScenarioConfig,
    ctx: AttemptContext,
) -> (ConnectionAttempt, TransitionTrace) {
    let result = simulate_process(cfg);
    let attempt = attempt_from(
        result.outcome,
        result.elapsed_ms,
        result.phases,
        cfg.encrypted,
        ctx.clone(),
    );
    let trace = TransitionTrace {
        attempt_id: ctx.attempt_id,
        transitions: result.transitions,
    };
    (attempt, trace)
}

pub(crate) fn attempt_from(
    outcome: Outcome,
    elapsed_ms: u32,
    phases: PhaseTiming,
    encrypted: bool,
    ctx: AttemptContext,
) -> ConnectionAttempt {
    let record = AttemptRecord {
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
        outcome,
        connection_time_ms: outcome.is_success().then_some(elapsed_ms),
        phases: Some(phases),
    };
    ConnectionAttempt::new(record).expect("simulator output satisfies the log invariants")
}
