//! Measurement analytics over connection-log corpora.
//!
//! Outcome proportions, the success time-cost CDF, per-phase breakdowns by
//! time-cost class, scan-time quantiles, group comparisons, transition
//! matrices ([`transitions`]) and feature correlation ([`correlation`]).

pub mod bundle;
pub mod correlation;
pub mod transitions;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::BinError;
use crate::log_schema::{ConnectionAttempt, Outcome};
use crate::stats::{quantile_table, EmpiricalCdf, QuantilePoint};

pub use bundle::{analyze, AnalysisBundle, AnalyzeOptions};
pub use correlation::{
    correlation_report, kendall_on_binned_means, relative_information_gain, tau_b,
    CorrelationReport, Feature, FeatureCorrelation, InfoGain, JointHistogram,
};
pub use transitions::{transition_matrix, TransitionMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus has no successful attempts")]
    NoSuccesses,
    #[error("no attempts in class {0}")]
    EmptyClass(TimeCostClass),
    #[error("need at least 2 non-empty bins, found {0}")]
    TooFewBins(usize),
    #[error("x has {x} values but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("correlation undefined: all bin means are tied")]
    UndefinedCorrelation,
    #[error("no attempt carries the {0:?} key")]
    NoGroups(GroupKey),
    #[error(transparent)]
    Bin(#[from] BinError),
}

/// Time-cost classes of successful attempts: `[0, 7)`, `[7, 15)` and `[15, 30]` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimeCostClass {
    C0to7s,
    C7to15s,
    C15to30s,
}

impl TimeCostClass {
    pub const ALL: [TimeCostClass; 3] = [
        TimeCostClass::C0to7s,
        TimeCostClass::C7to15s,
        TimeCostClass::C15to30s,
    ];

    pub fn of(time_ms: u32) -> Option<TimeCostClass> {
        match time_ms {
            0..7_000 => Some(TimeCostClass::C0to7s),
            7_000..15_000 => Some(TimeCostClass::C7to15s),
            15_000..=30_000 => Some(TimeCostClass::C15to30s),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TimeCostClass::C0to7s => "0-7",
            TimeCostClass::C7to15s => "7-15",
            TimeCostClass::C15to30s => "15-30",
        }
    }
}

impl fmt::Display for TimeCostClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.label())
    }
}

impl FromStr for TimeCostClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim_end_matches('s');
        TimeCostClass::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| format!("unknown time-cost class {s:?} (expected 0-7, 7-15 or 15-30)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProportions {
    pub n: usize,
    /// Only outcomes that occur are listed.
    pub fractions: BTreeMap<Outcome, f64>,
}

impl OutcomeProportions {
    pub fn get(&self, o: Outcome) -> f64 {
        self.fractions.get(&o).copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("outcome,fraction\n");
        for (o, f) in &self.fractions {
            s.push_str(&format!("{o},{f}\n"));
        }
        s
    }
}

pub fn outcome_proportions(
    corpus: &[ConnectionAttempt],
) -> Result<OutcomeProportions, AnalyticsError> {
    if corpus.is_empty() {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let mut counts: BTreeMap<Outcome, usize> = BTreeMap::new();
    for a in corpus {
        *counts.entry(a.outcome).or_default() += 1;
    }
    let n = corpus.len();
    let fractions = counts
        .into_iter()
        .map(|(o, c)| (o, c as f64 / n as f64))
        .collect();
    Ok(OutcomeProportions { n, fractions })
}

pub fn success_time_cdf(corpus: &[ConnectionAttempt]) -> Result<EmpiricalCdf, AnalyticsError> {
    let cdf = EmpiricalCdf::from_samples(
        corpus
            .iter()
            .filter_map(|a| a.connection_time_ms)
            .map(f64::from),
    );
    if cdf.is_empty() {
        return Err(AnalyticsError::NoSuccesses);
    }
    Ok(cdf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhaseName {
    Scan,
    Assoc,
    Auth,
    Dhcp,
}

impl PhaseName {
    pub const ALL: [PhaseName; 4] = [
        PhaseName::Scan,
        PhaseName::Assoc,
        PhaseName::Auth,
        PhaseName::Dhcp,
    ];
}

/// Share of each phase in a successful attempt's time, in `PhaseName::ALL` order.
pub fn phase_shares(a: &ConnectionAttempt) -> Option<[f64; 4]> {
    let total = a.connection_time_ms?;
    let phases = a.phases?;
    if total == 0 {
        return None;
    }
    Some(phases.as_array().map(|p| p as f64 / total as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseShare {
    pub phase: PhaseName,
    pub mean: f64,
    pub median: f64,
    pub cdf: EmpiricalCdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub class: TimeCostClass,
    pub n: usize,
    pub phases: Vec<PhaseShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBreakdown {
    pub classes: Vec<ClassBreakdown>,
    /// Successful attempts without a phase split (or with zero total time).
    pub skipped_without_phases: usize,
}

impl PhaseBreakdown {
    pub fn class(&self, c: TimeCostClass) -> Option<&ClassBreakdown> {
        self.classes.iter().find(|b| b.class == c)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,phase,n,mean_share,median_share\n");
        for c in &self.classes {
            for p in &c.phases {
                s.push_str(&format!(
                    "{},{:?},{},{},{}\n",
                    c.class.label(),
                    p.phase,
                    c.n,
                    p.mean,
                    p.median
                ));
            }
        }
        s
    }
}

/// Per class and phase, the distribution of `phase_ms / connection_time_ms`
/// over successful attempts.
pub fn phase_proportion_cdfs(corpus: &[ConnectionAttempt]) -> PhaseBreakdown {
    let mut per_class: BTreeMap<TimeCostClass, Vec<[f64; 4]>> = BTreeMap::new();
    let mut skipped = 0;
    for a in corpus.iter().filter(|a| a.outcome.is_success()) {
        match (
            phase_shares(a),
            a.connection_time_ms.and_then(TimeCostClass::of),
        ) {
            (Some(shares), Some(class)) => per_class.entry(class).or_default().push(shares),
            _ => skipped += 1,
        }
    }
    let classes = per_class
        .into_iter()
        .map(|(class, rows)| {
            let phases = PhaseName::ALL
                .iter()
                .enumerate()
                .map(|(i, &phase)| {
                    let vals: Vec<f64> = rows.iter().map(|r| r[i]).collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    let median = quantile_table(&vals, &[0.5])[0].value;
                    PhaseShare {
                        phase,
                        mean,
                        median,
                        cdf: EmpiricalCdf::from_samples(vals),
                    }
                })
                .collect();
            ClassBreakdown {
                class,
                n: rows.len(),
                phases,
            }
        })
        .collect();
    PhaseBreakdown {
        classes,
        skipped_without_phases: skipped,
    }
}

pub const QUANTILE_LEVELS: [f64; 9] = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub class: TimeCostClass,
    pub n: usize,
    /// Nearest-rank quantiles.
    pub quantiles: Vec<QuantilePoint>,
    pub cdf: EmpiricalCdf,
}

impl QuantileTable {
    pub fn at(&self, q: f64) -> Option<f64> {
        self.quantiles.iter().find(|p| p.q == q).map(|p| p.value)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,q,scan_ms\n");
        for p in &self.quantiles {
            s.push_str(&format!("{},{},{}\n", self.class.label(), p.q, p.value));
        }
        s
    }
}

/// Scan-time quantiles of successful attempts in `class`.
pub fn scan_time_quantiles(
    corpus: &[ConnectionAttempt],
    class: TimeCostClass,
) -> Result<QuantileTable, AnalyticsError> {
    let scans: Vec<f64> = corpus
        .iter()
        .filter(|a| a.connection_time_ms.and_then(TimeCostClass::of) == Some(class))
        .filter_map(|a| a.phases.map(|p| p.scan_ms as f64))
        .collect();
    if scans.is_empty() {
        return Err(AnalyticsError::EmptyClass(class));
    }
    Ok(QuantileTable {
        class,
        n: scans.len(),
        quantiles: quantile_table(&scans, &QUANTILE_LEVELS),
        cdf: EmpiricalCdf::from_samples(scans),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Band,
    IsPublic,
    DeviceModel,
    ApModel,
    HourOfDay,
    User,
}

impl GroupKey {
    fn of(self, a: &ConnectionAttempt) -> Option<String> {
        match self {
            GroupKey::Band => a.band.map(|b| b.name().to_string()),
            GroupKey::IsPublic => a
                .is_public
                .map(|p| if p { "public" } else { "private" }.to_string()),
            GroupKey::DeviceModel => Some(a.device_model.clone()),
            GroupKey::ApModel => Some(a.ap_model.clone()),
            GroupKey::HourOfDay => Some(format!("{:02}", a.hour_of_day)),
            GroupKey::User => Some(a.user_id.clone()),
        }
    }
}

impl FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "band" => GroupKey::Band,
            "is_public" => GroupKey::IsPublic,
            "device_model" => GroupKey::DeviceModel,
            "ap_model" => GroupKey::ApModel,
            "hour_of_day" => GroupKey::HourOfDay,
            "user" => GroupKey::User,
            other => return Err(format!("unknown group key {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n_attempts: usize,
    pub n_willing: usize,
    pub n_success: usize,
    /// Failed share of willing attempts; `None` without willing attempts.
    pub failure_rate: Option<f64>,
    pub min_ms: Option<f64>,
    pub p25_ms: Option<f64>,
    pub p50_ms: Option<f64>,
    pub p75_ms: Option<f64>,
    pub p90_ms: Option<f64>,
    pub mean_ms: Option<f64>,
    pub cdf: EmpiricalCdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub key: GroupKey,
    pub groups: Vec<GroupStats>,
    /// Attempts without a value for the key.
    pub excluded_missing: usize,
}

impl GroupReport {
    pub fn group(&self, name: &str) -> Option<&GroupStats> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("group,n_attempts,n_willing,n_success,failure_rate,min_ms,p25_ms,p50_ms,p75_ms,p90_ms,mean_ms\n");
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for g in &self.groups {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                g.group,
                g.n_attempts,
                g.n_willing,
                g.n_success,
                o(g.failure_rate),
                o(g.min_ms),
                o(g.p25_ms),
                o(g.p50_ms),
                o(g.p75_ms),
                o(g.p90_ms),
                o(g.mean_ms)
            ));
        }
        s
    }
}

fn group_stats(group: String, members: &[&ConnectionAttempt]) -> GroupStats {
    let n_willing = members.iter().filter(|a| a.outcome.is_willing()).count();
    let times: Vec<f64> = members
        .iter()
        .filter_map(|a| a.connection_time_ms)
        .map(f64::from)
        .collect();
    let n_success = times.len();
    let q = quantile_table(&times, &[0.0, 0.25, 0.5, 0.75, 0.9]);
    let at = |i: usize| q.get(i).map(|p| p.value);
    GroupStats {
        group,
        n_attempts: members.len(),
        n_willing,
        n_success,
        failure_rate: (n_willing > 0).then(|| (n_willing - n_success) as f64 / n_willing as f64),
        min_ms: at(0),
        p25_ms: at(1),
        p50_ms: at(2),
        p75_ms: at(3),
        p90_ms: at(4),
        mean_ms: (n_success > 0).then(|| times.iter().sum::<f64>() / n_success as f64),
        cdf: EmpiricalCdf::from_samples(times),
    }
}

/// Per-group counts, willing-failure rate and success time-cost quantiles
/// (min, p25, p50, p75, p90).
pub fn group_compare(
    corpus: &[ConnectionAttempt],
    key: GroupKey,
) -> Result<GroupReport, AnalyticsError> {
    let refs: Vec<&ConnectionAttempt> = corpus.iter().collect();
    group_refs(&refs, key)
}

fn group_refs(corpus: &[&ConnectionAttempt], key: GroupKey) -> Result<GroupReport, AnalyticsError> {
    let mut groups: BTreeMap<String, Vec<&ConnectionAttempt>> = BTreeMap::new();
    let mut excluded = 0;
    for a in corpus {
        match key.of(a) {
            Some(g) => groups.entry(g).or_default().push(a),
            None => excluded += 1,
        }
    }
    if groups.is_empty() {
        return Err(AnalyticsError::NoGroups(key));
    }
    Ok(GroupReport {
        key,
        groups: groups
            .into_iter()
            .map(|(g, m)| group_stats(g, &m))
            .collect(),
        excluded_missing: excluded,
    })
}

/// [`group_compare`] by `inner`, separately within every `outer` group
/// (e.g. public vs private per hour).
pub fn group_compare_nested(
    corpus: &[ConnectionAttempt],
    outer: GroupKey,
    inner: GroupKey,
) -> Result<BTreeMap<String, GroupReport>, AnalyticsError> {
    let mut split: BTreeMap<String, Vec<&ConnectionAttempt>> = BTreeMap::new();
    for a in corpus {
        if let Some(g) = outer.of(a) {
            split.entry(g).or_default().push(a);
        }
    }
    if split.is_empty() {
        return Err(AnalyticsError::NoGroups(outer));
    }
    split
        .into_iter()
        .filter_map(|(g, members)| match group_refs(&members, inner) {
            Ok(r) => Some(Ok((g, r))),
            Err(AnalyticsError::NoGroups(_)) => None,
            Err(e) => Some(Err(e)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log_schema::{AttemptRecord, PhaseTiming};

    pub(crate) fn success(id: usize, time: u32, phases: Option<PhaseTiming>) -> ConnectionAttempt {
        ConnectionAttempt::new(AttemptRecord {
            attempt_id: format!("a{id}"),
            user_id: format!("u{}", id % 3),
            hour_of_day: (id % 24) as u8,
            rssi_dbm: -70,
            num_devices: 2,
            device_model: "D1".into(),
            ap_model: "A1".into(),
            encrypted: true,
            is_public: Some(id.is_multiple_of(2)),
            band: None,
            outcome: Outcome::Success,
            connection_time_ms: Some(time),
            phases,
        })
        .unwrap()
    }

    fn failure(id: usize, outcome: Outcome) -> ConnectionAttempt {
        let mut r = success(id, 1, None).into_record();
        r.outcome = outcome;
        r.connection_time_ms = None;
        ConnectionAttempt::new(r).unwrap()
    }

    #[test]
    fn all_success_proportions() {
        let corpus: Vec<_> = (0..10).map(|i| success(i, 1000, None)).collect();
        let p = outcome_proportions(&corpus).unwrap();
        assert_eq!(p.fractions.len(), 1);
        assert_eq!(p.get(Outcome::Success), 1.0);
        assert_eq!(
            outcome_proportions(&[]).unwrap_err(),
            AnalyticsError::EmptyCorpus
        );
    }

    #[test]
    fn proportions_sum_to_one() {
        let mut corpus: Vec<_> = (0..7).map(|i| success(i, 1000, None)).collect();
        corpus.extend((7..10).map(|i| failure(i, Outcome::Timeout)));
        corpus.push(failure(10, Outcome::ForgotWifi));
        let p = outcome_proportions(&corpus).unwrap();
        let total: f64 = p.fractions.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(p.get(Outcome::Timeout), 3.0 / 11.0);
    }

    #[test]
    fn cdf_needs_a_success() {
        let corpus = vec![failure(0, Outcome::Timeout)];
        assert_eq!(
            success_time_cdf(&corpus).unwrap_err(),
            AnalyticsError::NoSuccesses
        );
        let corpus: Vec<_> = (0..4).map(|i| success(i, 1000, None)).collect();
        let cdf = success_time_cdf(&corpus).unwrap();
        assert_eq!(cdf.eval(999.0), 0.0);
        assert_eq!(cdf.eval(1000.0), 1.0);
    }

    #[test]
    fn class_boundaries() {
        assert_eq!(TimeCostClass::of(0), Some(TimeCostClass::C0to7s));
        assert_eq!(TimeCostClass::of(6_999), Some(TimeCostClass::C0to7s));
        assert_eq!(TimeCostClass::of(7_000), Some(TimeCostClass::C7to15s));
        assert_eq!(TimeCostClass::of(15_000), Some(TimeCostClass::C15to30s));
        assert_eq!(TimeCostClass::of(30_000), Some(TimeCostClass::C15to30s));
        assert_eq!(TimeCostClass::of(30_001), None);
        assert_eq!(
            "15-30".parse::<TimeCostClass>().unwrap(),
            TimeCostClass::C15to30s
        );
    }

    #[test]
    fn half_scan_half_dhcp() {
        let p = PhaseTiming {
            scan_ms: 1000,
            assoc_ms: 0,
            auth_ms: 0,
            dhcp_ms: 1000,
        };
        let a = success(0, 2000, Some(p));
        assert_eq!(phase_shares(&a), Some([0.5, 0.0, 0.0, 0.5]));
        let b = phase_proportion_cdfs(&[a, success(1, 3000, None)]);
        assert_eq!(b.skipped_without_phases, 1);
        let c = b.class(TimeCostClass::C0to7s).unwrap();
        assert_eq!(c.phases[0].mean, 0.5);
        assert_eq!(c.phases[3].mean, 0.5);
    }

    #[test]
    fn constant_scan_quantiles() {
        let p = PhaseTiming {
            scan_ms: 700,
            assoc_ms: 50,
            auth_ms: 50,
            dhcp_ms: 1200,
        };
        let corpus: Vec<_> = (0..20).map(|i| success(i, 2000, Some(p))).collect();
        let q = scan_time_quantiles(&corpus, TimeCostClass::C0to7s).unwrap();
        assert!(q.quantiles.iter().all(|p| p.value == 700.0));
        assert_eq!(
            scan_time_quantiles(&corpus, TimeCostClass::C15to30s).unwrap_err(),
            AnalyticsError::EmptyClass(TimeCostClass::C15to30s)
        );
    }

    #[test]
    fn single_group_matches_success_cdf() {
        let corpus: Vec<_> = (0..30)
            .map(|i| success(i, 500 + 37 * i as u32, None))
            .collect();
        let mut one_band = Vec::new();
        for a in corpus {
            let mut r = a.into_record();
            r.band = Some(crate::log_schema::Band::Band5GHz);
            one_band.push(ConnectionAttempt::new(r).unwrap());
        }
        let report = group_compare(&one_band, GroupKey::Band).unwrap();
        assert_eq!(report.groups.len(), 1);
        assert_eq!(report.groups[0].cdf, success_time_cdf(&one_band).unwrap());
        assert_eq!(report.groups[0].min_ms, Some(500.0));
    }

    #[test]
    fn missing_key_values_are_counted() {
        let corpus: Vec<_> = (0..5).map(|i| success(i, 1000, None)).collect();
        assert_eq!(
            group_compare(&corpus, GroupKey::Band).unwrap_err(),
            AnalyticsError::NoGroups(GroupKey::Band)
        );
        let mut mixed = corpus.clone();
        let mut r = mixed[0].clone().into_record();
        r.band = Some(crate::log_schema::Band::Band2_4GHz);
        mixed[0] = ConnectionAttempt::new(r).unwrap();
        let report = group_compare(&mixed, GroupKey::Band).unwrap();
        assert_eq!(report.excluded_missing, 4);
    }

    #[test]
    fn failure_rate_counts_willing_only() {
        let corpus = vec![
            success(0, 1000, None),
            failure(3, Outcome::Timeout),
            failure(6, Outcome::WrongPassword),
        ];
        // ids 0, 3, 6 all map to user u0
        let r = group_compare(&corpus, GroupKey::User).unwrap();
        let g = r.group("u0").unwrap();
        assert_eq!(g.n_attempts, 3);
        assert_eq!(g.n_willing, 2);
        assert_eq!(g.failure_rate, Some(0.5));
    }
}
