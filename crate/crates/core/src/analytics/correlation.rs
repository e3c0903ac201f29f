//! Relative information gain and Kendall correlation between context
//! features and connection time cost.
//!
//! RIG is `(H(Y) - H(Y|X)) / H(Y)` on the joint histogram of binned `x` and
//! `y`, with plug-in (maximum-likelihood) entropies. Kendall is tau-b between
//! the bin keys of `x` and the per-bin mean of `y`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::binning::{bin_value, binned_mean_curve, BinKey, BinSpec, Value};
use crate::log_schema::ConnectionAttempt;

/// Joint counts of `(x bin, y bin)`. Histograms over disjoint shards can be
/// merged before computing the gain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointHistogram {
    counts: BTreeMap<BinKey, BTreeMap<BinKey, u64>>,
    n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoGain {
    pub rig: f64,
    /// Entropies in nats.
    pub h_y: f64,
    pub h_y_given_x: f64,
    /// `H(Y) = 0`: `y` fell in a single bin and RIG is reported as 0.
    pub degenerate: bool,
}

fn entropy_of_counts<'a>(counts: impl Iterator<Item = &'a u64>, n: u64) -> f64 {
    let n = n as f64;
    counts
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

impl JointHistogram {
    pub fn add(&mut self, x: BinKey, y: BinKey) {
        *self.counts.entry(x).or_default().entry(y).or_default() += 1;
        self.n += 1;
    }

    pub fn merge(&mut self, other: JointHistogram) {
        for (x, ys) in other.counts {
            let row = self.counts.entry(x).or_default();
            for (y, c) in ys {
                *row.entry(y).or_default() += c;
            }
        }
        self.n += other.n;
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn info_gain(&self) -> InfoGain {
        let mut y_marginal: BTreeMap<&BinKey, u64> = BTreeMap::new();
        for ys in self.counts.values() {
            for (y, c) in ys {
                *y_marginal.entry(y).or_default() += c;
            }
        }
        let h_y = entropy_of_counts(y_marginal.values(), self.n);
        let h_y_given_x: f64 = self
            .counts
            .values()
            .map(|ys| {
                let n_x: u64 = ys.values().sum();
                (n_x as f64 / self.n as f64) * entropy_of_counts(ys.values(), n_x)
            })
            .sum();
        if y_marginal.len() <= 1 {
            return InfoGain {
                rig: 0.0,
                h_y,
                h_y_given_x,
                degenerate: true,
            };
        }
        let rig = ((h_y - h_y_given_x) / h_y).clamp(0.0, 1.0);
        InfoGain {
            rig,
            h_y,
            h_y_given_x,
            degenerate: false,
        }
    }
}

pub fn relative_information_gain(
    x: &[Value<'_>],
    y: &[Value<'_>],
    spec_x: &BinSpec,
    spec_y: &BinSpec,
) -> Result<InfoGain, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.is_empty() {
        return Err(AnalyticsError::EmptyCorpus);
    }
    spec_x.validate()?;
    spec_y.validate()?;
    let mut h = JointHistogram::default();
    for (xv, yv) in x.iter().zip(y) {
        h.add(bin_value(*xv, spec_x)?, bin_value(*yv, spec_y)?);
    }
    Ok(h.info_gain())
}

/// Kendall tau-b in `O(n log n)`: sort by `(x, y)`, then count discordant
/// pairs as inversions of `y` during a merge sort.
pub fn tau_b(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewBins(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |t: i64| t * (t - 1) / 2;
    let n0 = pairs(n as i64);
    let (mut tied_x, mut tied_xy) = (0i64, 0i64);
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[order[j]] == x[order[i]] {
            j += 1;
        }
        tied_x += pairs((j - i) as i64);
        let mut k = i;
        while k < j {
            let mut m = k + 1;
            while m < j && y[order[m]] == y[order[k]] {
                m += 1;
            }
            tied_xy += pairs((m - k) as i64);
            k = m;
        }
        i = j;
    }

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut buf);

    let mut tied_y = 0i64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && ys[j] == ys[i] {
            j += 1;
        }
        tied_y += pairs((j - i) as i64);
        i = j;
    }

    let numerator = n0 - tied_x - tied_y + tied_xy - 2 * discordant;
    let denominator = ((n0 - tied_x) as f64 * (n0 - tied_y) as f64).sqrt();
    if denominator == 0.0 {
        return Err(AnalyticsError::UndefinedCorrelation);
    }
    Ok(numerator as f64 / denominator)
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            swaps += (mid - i) as i64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Bins `x`, averages `y` per bin, and returns tau-b between bin keys and means.
pub fn kendall_on_binned_means(
    x: &[f64],
    y: &[f64],
    spec_x: &BinSpec,
) -> Result<f64, AnalyticsError> {
    let vx: Vec<Value> = x.iter().map(|&v| Value::Num(v)).collect();
    let series = binned_mean_curve(&vx, y, spec_x)?;
    if series.bins.len() < 2 {
        return Err(AnalyticsError::TooFewBins(series.bins.len()));
    }
    let keys: Vec<f64> = series
        .bins
        .iter()
        .map(|b| match b.key {
            BinKey::Numeric(i) => i as f64,
            BinKey::Category(_) => unreachable!("numeric spec yields numeric keys"),
        })
        .collect();
    let means: Vec<f64> = series.bins.iter().map(|b| b.mean_y).collect();
    tau_b(&keys, &means)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    DeviceModel,
    ApModel,
    Rssi,
    NumDevices,
    HourOfDay,
}

impl Feature {
    pub const ALL: [Feature; 5] = [
        Feature::DeviceModel,
        Feature::ApModel,
        Feature::Rssi,
        Feature::NumDevices,
        Feature::HourOfDay,
    ];

    pub fn bin_spec(self) -> BinSpec {
        match self {
            Feature::DeviceModel | Feature::ApModel => BinSpec::Categorical,
            Feature::Rssi => BinSpec::rssi(),
            Feature::NumDevices => BinSpec::devices(),
            Feature::HourOfDay => BinSpec::hour(),
        }
    }

    /// Why Kendall is not reported for this feature, if it is not.
    pub fn kendall_exclusion(self) -> Option<&'static str> {
        match self {
            Feature::DeviceModel | Feature::ApModel => Some("categorical feature"),
            Feature::HourOfDay => Some("cyclic feature"),
            Feature::Rssi | Feature::NumDevices => None,
        }
    }

    fn value(self, a: &ConnectionAttempt) -> Value<'_> {
        match self {
            Feature::DeviceModel => Value::Cat(&a.device_model),
            Feature::ApModel => Value::Cat(&a.ap_model),
            Feature::Rssi => Value::Num(a.rssi_dbm as f64),
            Feature::NumDevices => Value::Num(a.num_devices as f64),
            Feature::HourOfDay => Value::Num(a.hour_of_day as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: Feature,
    pub rig: f64,
    pub h_y_given_x: f64,
    pub kendall: Option<f64>,
    /// Set when `kendall` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kendall_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n_success: usize,
    pub h_y: f64,
    pub features: Vec<FeatureCorrelation>,
}

impl CorrelationReport {
    pub fn get(&self, f: Feature) -> Option<&FeatureCorrelation> {
        self.features.iter().find(|c| c.feature == f)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,rig,kendall\n");
        for f in &self.features {
            let k = f
                .kendall
                .map(|k| k.to_string())
                .unwrap_or_else(|| "/".into());
            s.push_str(&format!(
                "{},{},{k}\n",
                serde_json::to_value(f.feature).unwrap().as_str().unwrap(),
                f.rig
            ));
        }
        s
    }
}

/// RIG and Kendall of every context feature against the connection time of
/// successful attempts (time binned at 100 ms).
pub fn correlation_report(
    corpus: &[ConnectionAttempt],
) -> Result<CorrelationReport, AnalyticsError> {
    let successes: Vec<&ConnectionAttempt> =
        corpus.iter().filter(|a| a.outcome.is_success()).collect();
    if successes.is_empty() {
        return Err(AnalyticsError::NoSuccesses);
    }
    let times: Vec<f64> = successes
        .iter()
        .map(|a| a.connection_time_ms.unwrap_or(0) as f64)
        .collect();
    let y: Vec<Value> = times.iter().map(|&t| Value::Num(t)).collect();
    let y_spec = BinSpec::time_ms();
    let mut features = Vec::new();
    let mut h_y = 0.0;
    for feature in Feature::ALL {
        let x: Vec<Value> = successes.iter().map(|a| feature.value(a)).collect();
        let spec = feature.bin_spec();
        let gain = relative_information_gain(&x, &y, &spec, &y_spec)?;
        h_y = gain.h_y;
        let (kendall, kendall_note) = match feature.kendall_exclusion() {
            Some(why) => (None, Some(why.to_string())),
            None => {
                let xs: Vec<f64> = x
                    .iter()
                    .map(|v| if let Value::Num(n) = v { *n } else { 0.0 })
                    .collect();
                match kendall_on_binned_means(&xs, &times, &spec) {
                    Ok(k) => (Some(k), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            }
        };
        features.push(FeatureCorrelation {
            feature,
            rig: gain.rig,
            h_y_given_x: gain.h_y_given_x,
            kendall,
            kendall_note,
        });
    }
    Ok(CorrelationReport {
        n_success: successes.len(),
        h_y,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nums(v: &[f64]) -> Vec<Value<'_>> {
        v.iter().map(|&x| Value::Num(x)).collect()
    }

    #[test]
    fn deterministic_injective_map_has_rig_one() {
        let x: Vec<f64> = (0..500).map(|i| (i % 5) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 100.0 + 10.0).collect();
        let g =
            relative_information_gain(&nums(&x), &nums(&y), &BinSpec::hour(), &BinSpec::time_ms())
                .unwrap();
        assert!((g.rig - 1.0).abs() < 1e-12);
        assert!(!g.degenerate);
    }

    #[test]
    fn single_y_bin_is_degenerate_zero() {
        let x = [1.0, 2.0, 3.0];
        let y = [10.0, 20.0, 30.0];
        let g =
            relative_information_gain(&nums(&x), &nums(&y), &BinSpec::hour(), &BinSpec::time_ms())
                .unwrap();
        assert!(g.degenerate);
        assert_eq!(g.rig, 0.0);
    }

    #[test]
    fn rig_rejects_mismatched_lengths() {
        let err = relative_information_gain(
            &nums(&[1.0]),
            &nums(&[]),
            &BinSpec::hour(),
            &BinSpec::hour(),
        );
        assert!(matches!(err, Err(AnalyticsError::LengthMismatch { .. })));
    }

    #[test]
    fn merged_shards_equal_whole() {
        let mut whole = JointHistogram::default();
        let mut a = JointHistogram::default();
        let mut b = JointHistogram::default();
        for i in 0..200i64 {
            let (x, y) = (BinKey::Numeric(i % 7), BinKey::Numeric((i * i) % 5));
            whole.add(x.clone(), y.clone());
            if i < 90 {
                a.add(x, y)
            } else {
                b.add(x, y)
            }
        }
        a.merge(b);
        assert_eq!(a, whole);
    }

    #[test]
    fn monotone_means_give_unit_tau() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let up: Vec<f64> = x.iter().map(|v| v * 3.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(
            kendall_on_binned_means(&x, &up, &BinSpec::devices()).unwrap(),
            1.0
        );
        assert_eq!(
            kendall_on_binned_means(&x, &down, &BinSpec::devices()).unwrap(),
            -1.0
        );
    }

    #[test]
    fn kendall_needs_two_bins() {
        let err =
            kendall_on_binned_means(&[1.0, 2.0], &[1.0, 2.0], &BinSpec::devices()).unwrap_err();
        assert_eq!(err, AnalyticsError::TooFewBins(1));
        assert!(kendall_on_binned_means(&[1.0], &[1.0], &BinSpec::Categorical).is_err());
    }

    #[test]
    fn tau_b_with_ties_matches_hand_count() {
        // x = [1,2,2,3], y = [1,1,2,3]: C=4, D=0, ties x only=1, y only=1.
        let t = tau_b(&[1.0, 2.0, 2.0, 3.0], &[1.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t, 4.0 / (5.0f64 * 5.0).sqrt());
    }

    proptest! {
        #[test]
        fn rig_in_unit_interval(pairs in prop::collection::vec((0u8..6, 0u16..2000), 1..200)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let g = relative_information_gain(&nums(&x), &nums(&y), &BinSpec::hour(), &BinSpec::time_ms()).unwrap();
            prop_assert!((0.0..=1.0).contains(&g.rig));
        }

        #[test]
        fn rig_invariant_under_x_relabeling(pairs in prop::collection::vec((0usize..5, 0u16..1000), 2..200)) {
            let labels = ["a", "b", "c", "d", "e"];
            let relabeled = ["q", "z", "m", "b", "x"];
            let x1: Vec<Value> = pairs.iter().map(|p| Value::Cat(labels[p.0])).collect();
            let x2: Vec<Value> = pairs.iter().map(|p| Value::Cat(relabeled[p.0])).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let g1 = relative_information_gain(&x1, &nums(&y), &BinSpec::Categorical, &BinSpec::time_ms()).unwrap();
            let g2 = relative_information_gain(&x2, &nums(&y), &BinSpec::Categorical, &BinSpec::time_ms()).unwrap();
            prop_assert!((g1.rig - g2.rig).abs() < 1e-12);
        }

        #[test]
        fn tau_antisymmetric_in_y(ys in prop::collection::vec(-50i32..50, 2..80)) {
            let x: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let y: Vec<f64> = ys.iter().map(|&v| v as f64).collect();
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            match (tau_b(&x, &y), tau_b(&x, &neg)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a, -b);
                    prop_assert!((-1.0..=1.0).contains(&a));
                }
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "asymmetric result {:?}", other),
            }
        }
    }
}
