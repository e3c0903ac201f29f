//! The default field regime recovers the statistics planted into it.

use std::sync::OnceLock;

use assoclab::analytics::{
    correlation_report, group_compare, group_compare_nested, outcome_proportions,
    phase_proportion_cdfs, phase_shares, scan_time_quantiles, success_time_cdf, Feature, GroupKey,
    PhaseName, TimeCostClass,
};
use assoclab::log_schema::{ConnectionAttempt, Outcome};
use assoclab::sim::{generate_corpus, CorpusConfig};

fn corpus() -> &'static [ConnectionAttempt] {
    static CORPUS: OnceLock<Vec<ConnectionAttempt>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        generate_corpus(&CorpusConfig::field_regime(100_000, 11))
            .unwrap()
            .attempts
    })
}

fn assert_near(name: &str, got: f64, want: f64, tol: f64) {
    assert!(
        (got - want).abs() <= tol,
        "{name}: {got:.4} not within {want} +/- {tol}"
    );
}

#[test]
fn outcome_marginals() {
    let p = outcome_proportions(corpus()).unwrap();
    assert_near("success", p.get(Outcome::Success), 0.549, 0.01);
    let failures = p.get(Outcome::Timeout) + p.get(Outcome::DhcpFailure);
    assert_near("timeout + dhcp failure", failures, 0.24, 0.01);
}

#[test]
fn success_time_marginals() {
    let cdf = success_time_cdf(corpus()).unwrap();
    assert_near("CDF(5000)", cdf.eval(5_000.0), 0.80, 0.01);
    assert_near("1 - CDF(15000)", 1.0 - cdf.eval(15_000.0), 0.03, 0.005);
}

#[test]
fn phase_shares_by_class() {
    let b = phase_proportion_cdfs(corpus());
    let slow = b.class(TimeCostClass::C15to30s).unwrap();
    let scan = slow
        .phases
        .iter()
        .find(|p| p.phase == PhaseName::Scan)
        .unwrap();
    assert_near("mean scan share in 15-30 s", scan.mean, 0.47, 0.03);

    let mut dhcp: Vec<f64> = corpus()
        .iter()
        .filter(|a| a.connection_time_ms.is_some_and(|t| t < 15_000))
        .filter_map(phase_shares)
        .map(|s| s[3])
        .collect();
    dhcp.sort_by(f64::total_cmp);
    let median = dhcp[dhcp.len() / 2];
    assert!(median >= 0.8, "median DHCP share below 15 s is {median}");
}

#[test]
fn scan_time_tails() {
    let fast = scan_time_quantiles(corpus(), TimeCostClass::C0to7s).unwrap();
    let p99 = fast.at(0.99).unwrap();
    assert_near("p99 scan in 0-7 s", p99, 3_400.0, 340.0);
    let slow = scan_time_quantiles(corpus(), TimeCostClass::C15to30s).unwrap();
    assert_near(
        "scans over 11.6 s in 15-30 s",
        slow.cdf.fraction_above(11_600.0),
        0.40,
        0.03,
    );
}

#[test]
fn correlation_ordering_and_sign() {
    let r = correlation_report(corpus()).unwrap();
    let rig = |f| r.get(f).unwrap().rig;
    assert!(rig(Feature::DeviceModel) > rig(Feature::ApModel));
    assert!(rig(Feature::ApModel) > rig(Feature::Rssi));
    assert!(rig(Feature::Rssi) > rig(Feature::HourOfDay));
    assert!(r.get(Feature::Rssi).unwrap().kendall.unwrap() < 0.0);
    assert!(r.get(Feature::HourOfDay).unwrap().kendall.is_none());
}

#[test]
fn public_aps_are_slower_every_hour() {
    let by_hour = group_compare_nested(corpus(), GroupKey::HourOfDay, GroupKey::IsPublic).unwrap();
    assert_eq!(by_hour.len(), 24);
    for (hour, r) in &by_hour {
        let p90 = |g| r.group(g).and_then(|s| s.p90_ms).unwrap();
        assert!(
            p90("public") > p90("private"),
            "hour {hour}: public {} vs private {}",
            p90("public"),
            p90("private")
        );
    }
}

#[test]
fn user_failure_rates_span_the_unit_interval() {
    let users = group_compare(corpus(), GroupKey::User).unwrap();
    let rates: Vec<f64> = users
        .groups
        .iter()
        .filter(|g| g.n_willing >= 3)
        .filter_map(|g| g.failure_rate)
        .collect();
    assert!(rates.iter().any(|&r| r == 0.0));
    assert!(rates.iter().any(|&r| r == 1.0));
}
