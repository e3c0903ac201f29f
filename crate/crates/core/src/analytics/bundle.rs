//! Everything the `analyze` command reports, computed in one pass over a
//! corpus and writable as a JSON document plus plot-ready CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    correlation_report, group_compare, group_compare_nested, outcome_proportions,
    phase_proportion_cdfs, scan_time_quantiles, success_time_cdf, transition_matrix,
    AnalyticsError, CorrelationReport, GroupKey, GroupReport, OutcomeProportions, PhaseBreakdown,
    QuantileTable, TimeCostClass, TransitionMatrix,
};
use crate::binning::{binned_mean_curve, BinSpec, BinnedSeries, Value};
use crate::log_schema::ConnectionAttempt;
use crate::sim::TransitionTrace;
use crate::stats::EmpiricalCdf;

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    /// Restrict scan-time quantiles to one class.
    pub class: Option<TimeCostClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub n_attempts: usize,
    pub outcomes: OutcomeProportions,
    pub success_cdf: Option<EmpiricalCdf>,
    pub phase_breakdown: PhaseBreakdown,
    pub scan_quantiles: Vec<QuantileTable>,
    pub transitions: Option<TransitionMatrix>,
    pub correlation: Option<CorrelationReport>,
    /// Mean success time per bin of hour, RSSI and device count.
    pub curves: BTreeMap<String, BinnedSeries>,
    pub groups: Vec<GroupReport>,
    /// Public vs private, per hour of day.
    pub public_by_hour: BTreeMap<String, GroupReport>,
    /// Sections that could not be computed, with the reason.
    pub diagnostics: Vec<String>,
}

type Extract = fn(&ConnectionAttempt) -> f64;

fn keep<T>(r: Result<T, AnalyticsError>, what: &str, diagnostics: &mut Vec<String>) -> Option<T> {
    r.map_err(|e| diagnostics.push(format!("{what}: {e}"))).ok()
}

pub fn analyze(
    corpus: &[ConnectionAttempt],
    traces: Option<&[TransitionTrace]>,
    opts: &AnalyzeOptions,
) -> Result<AnalysisBundle, AnalyticsError> {
    let outcomes = outcome_proportions(corpus)?;
    let mut diagnostics = Vec::new();
    let success_cdf = keep(success_time_cdf(corpus), "success_cdf", &mut diagnostics);
    let phase_breakdown = phase_proportion_cdfs(corpus);
    if phase_breakdown.skipped_without_phases > 0 {
        diagnostics.push(format!(
            "phase_breakdown: skipped {} successful attempts without phases",
            phase_breakdown.skipped_without_phases
        ));
    }
    let classes = match opts.class {
        Some(c) => vec![c],
        None => TimeCostClass::ALL.to_vec(),
    };
    let scan_quantiles = classes
        .into_iter()
        .filter_map(|c| {
            keep(
                scan_time_quantiles(corpus, c),
                &format!("scan_quantiles {c}"),
                &mut diagnostics,
            )
        })
        .collect();
    let correlation = keep(correlation_report(corpus), "correlation", &mut diagnostics);

    let successes: Vec<&ConnectionAttempt> =
        corpus.iter().filter(|a| a.outcome.is_success()).collect();
    let times: Vec<f64> = successes
        .iter()
        .map(|a| a.connection_time_ms.unwrap_or(0) as f64)
        .collect();
    let mut curves = BTreeMap::new();
    let curve_inputs: [(&str, BinSpec, Extract); 3] = [
        ("hour_of_day", BinSpec::hour(), |a| a.hour_of_day as f64),
        ("rssi_dbm", BinSpec::rssi(), |a| a.rssi_dbm as f64),
        ("num_devices", BinSpec::devices(), |a| a.num_devices as f64),
    ];
    if !successes.is_empty() {
        for (name, spec, f) in curve_inputs {
            let x: Vec<Value> = successes.iter().map(|a| Value::Num(f(a))).collect();
            if let Some(s) = keep(
                binned_mean_curve(&x, &times, &spec).map_err(Into::into),
                name,
                &mut diagnostics,
            ) {
                curves.insert(name.to_string(), s);
            }
        }
    }

    let groups = [
        GroupKey::Band,
        GroupKey::IsPublic,
        GroupKey::DeviceModel,
        GroupKey::HourOfDay,
    ]
    .into_iter()
    .filter_map(|k| {
        keep(
            group_compare(corpus, k),
            &format!("groups {k:?}"),
            &mut diagnostics,
        )
    })
    .collect();
    let public_by_hour = keep(
        group_compare_nested(corpus, GroupKey::HourOfDay, GroupKey::IsPublic),
        "public_by_hour",
        &mut diagnostics,
    )
    .unwrap_or_default();

    Ok(AnalysisBundle {
        n_attempts: corpus.len(),
        outcomes,
        success_cdf,
        phase_breakdown,
        scan_quantiles,
        transitions: traces.map(transition_matrix),
        correlation,
        curves,
        groups,
        public_by_hour,
        diagnostics,
    })
}

fn group_key_name(k: GroupKey) -> String {
    serde_json::to_value(k)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl AnalysisBundle {
    /// Writes `analysis.json` and one CSV per table into `dir`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(dir.join("analysis.json"), json + "\n")?;
        for (name, body) in self.csv_tables() {
            fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    /// `(file name, CSV body)` for every table in the bundle.
    pub fn csv_tables(&self) -> Vec<(String, String)> {
        let mut t = vec![
            ("outcomes.csv".to_string(), self.outcomes.to_csv()),
            (
                "phase_breakdown.csv".to_string(),
                self.phase_breakdown.to_csv(),
            ),
        ];
        if let Some(cdf) = &self.success_cdf {
            t.push(("success_cdf.csv".into(), cdf.to_csv()));
        }
        for c in &self.phase_breakdown.classes {
            for p in &c.phases {
                t.push((
                    format!("phase_cdf_{}_{:?}.csv", c.class.label(), p.phase).to_lowercase(),
                    p.cdf.to_csv(),
                ));
            }
        }
        for q in &self.scan_quantiles {
            t.push((
                format!("scan_quantiles_{}.csv", q.class.label()),
                q.to_csv(),
            ));
            t.push((format!("scan_cdf_{}.csv", q.class.label()), q.cdf.to_csv()));
        }
        if let Some(m) = &self.transitions {
            t.push(("transitions.csv".into(), m.to_csv()));
        }
        if let Some(c) = &self.correlation {
            t.push(("correlation.csv".into(), c.to_csv()));
        }
        for (name, s) in &self.curves {
            t.push((format!("curve_{name}.csv"), s.to_csv()));
        }
        for g in &self.groups {
            let key = group_key_name(g.key);
            t.push((format!("groups_{key}.csv"), g.to_csv()));
            for s in &g.groups {
                let safe: String = s
                    .group
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                    .collect();
                t.push((format!("group_cdf_{key}_{safe}.csv"), s.cdf.to_csv()));
            }
        }
        if !self.public_by_hour.is_empty() {
            let mut s = String::from(
                "hour,group,n_attempts,failure_rate,min_ms,p25_ms,p50_ms,p75_ms,p90_ms\n",
            );
            let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for (hour, r) in &self.public_by_hour {
                for g in &r.groups {
                    s.push_str(&format!(
                        "{hour},{},{},{},{},{},{},{},{}\n",
                        g.group,
                        g.n_attempts,
                        o(g.failure_rate),
                        o(g.min_ms),
                        o(g.p25_ms),
                        o(g.p50_ms),
                        o(g.p75_ms),
                        o(g.p90_ms)
                    ));
                }
            }
            t.push(("public_by_hour.csv".into(), s));
        }
        t
    }
}
