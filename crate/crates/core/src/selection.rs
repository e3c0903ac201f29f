//! AP selection and what-if replay.
//!
//! `select_ml` classifies every candidate AP as FAST or SLOW and picks the
//! strongest FAST one, falling back to the strongest overall when none is
//! FAST. `select_baseline` always picks the strongest. `what_if_eval` trains
//! on one half of a candidate-set corpus and replays both policies on the
//! other, scoring failures as 30 s.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    label_outcome, Encoders, FeatureVector, SpeedLabel, UnseenCounts, DEFAULT_FREQUENCY_FLOOR,
    DEFAULT_THRESHOLD_MS,
};
use crate::forest::{
    evaluate_with_threshold, train, ForestError, ForestModel, ForestParams, MetricsReport,
};
use crate::log_schema::Outcome;
use crate::stats::{nearest_rank, quantile_table, EmpiricalCdf, QuantilePoint};
use crate::FAILURE_TIME_MS;

/// What would have happened had the device picked this candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection_time_ms: Option<u32>,
}

impl GroundTruth {
    pub fn failed(&self) -> bool {
        !self.outcome.is_success()
    }

    /// Connection time, or the 30 s failure score.
    pub fn scored_time_ms(&self) -> u32 {
        match (self.outcome, self.connection_time_ms) {
            (Outcome::Success, Some(t)) => t,
            _ => FAILURE_TIME_MS,
        }
    }

    /// Non-willing outcomes count as SLOW here.
    pub fn label(&self, threshold_ms: u32) -> SpeedLabel {
        label_outcome(self.outcome, self.connection_time_ms, threshold_ms)
            .unwrap_or(SpeedLabel::Slow)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub ap_model: String,
    pub rssi_dbm: i32,
    pub encrypted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub event_id: String,
    pub hour_of_day: u8,
    pub device_model: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("candidate set {0} has no candidates")]
    NoCandidates(String),
    #[error("candidate set {event} repeats candidate id {id}")]
    DuplicateId { event: String, id: String },
    #[error("candidate set {event}: hour_of_day {hour} outside 0..=23")]
    BadHour { event: String, hour: u8 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("nothing to compute PoA over")]
    EmptyPoa,
    #[error("no candidate set carries ground truth")]
    NoGroundTruth,
    #[error("the tuning half has no labelled candidates of both classes")]
    NotTrainable,
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CandidateSet {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.candidates.is_empty() {
            return Err(SelectionError::NoCandidates(self.event_id.clone()));
        }
        if self.hour_of_day > 23 {
            return Err(SelectionError::BadHour {
                event: self.event_id.clone(),
                hour: self.hour_of_day,
            });
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c.id.as_str()) {
                return Err(SelectionError::DuplicateId {
                    event: self.event_id.clone(),
                    id: c.id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn has_ground_truth(&self) -> bool {
        self.candidates.iter().all(|c| c.truth.is_some())
    }

    pub fn encode(
        &self,
        c: &Candidate,
        enc: &Encoders,
        unseen: &mut UnseenCounts,
    ) -> FeatureVector {
        enc.encode_fields(
            self.hour_of_day,
            c.rssi_dbm.min(crate::RSSI_CLAMP_DBM),
            &self.device_model,
            &c.ap_model,
            c.encrypted,
            unseen,
        )
    }
}

/// One validated candidate set per non-blank line.
pub fn read_candidate_sets<R: BufRead>(reader: R) -> Result<Vec<CandidateSet>, SelectionError> {
    let mut sets = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let set: CandidateSet = serde_json::from_str(&line).map_err(|e| SelectionError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        set.validate().map_err(|e| SelectionError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        sets.push(set);
    }
    Ok(sets)
}

pub fn write_candidate_sets<W: Write>(sets: &[CandidateSet], mut w: W) -> io::Result<()> {
    for s in sets {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub event_id: String,
    pub chosen: String,
    /// Candidate ids in input order. Both empty for the baseline.
    pub fast: Vec<String>,
    pub slow: Vec<String>,
    pub fallback_used: bool,
}

pub trait SpeedClassifier: Sync {
    fn classify(&self, set: &CandidateSet, candidate: &Candidate) -> SpeedLabel;
}

/// A forest with a decision threshold on the SLOW vote share.
pub struct ForestClassifier<'a> {
    pub model: &'a ForestModel,
    pub threshold: f64,
}

impl SpeedClassifier for ForestClassifier<'_> {
    fn classify(&self, set: &CandidateSet, c: &Candidate) -> SpeedLabel {
        let fv = set.encode(c, &self.model.encoders, &mut UnseenCounts::default());
        self.model.predict_with_threshold(&fv, self.threshold).0
    }
}

impl SpeedClassifier for ForestModel {
    fn classify(&self, set: &CandidateSet, c: &Candidate) -> SpeedLabel {
        ForestClassifier {
            model: self,
            threshold: 0.5,
        }
        .classify(set, c)
    }
}

/// Labels each candidate from its ground truth; candidates without one are SLOW.
pub struct OracleClassifier {
    pub threshold_ms: u32,
}

impl SpeedClassifier for OracleClassifier {
    fn classify(&self, _: &CandidateSet, c: &Candidate) -> SpeedLabel {
        c.truth
            .map_or(SpeedLabel::Slow, |t| t.label(self.threshold_ms))
    }
}

/// Strongest RSSI, ties to the lexicographically smallest id.
fn strongest<'a>(cands: impl Iterator<Item = &'a Candidate>) -> Option<&'a Candidate> {
    cands.min_by(|a, b| b.rssi_dbm.cmp(&a.rssi_dbm).then_with(|| a.id.cmp(&b.id)))
}

pub fn select_baseline(set: &CandidateSet) -> SelectionDecision {
    let chosen = strongest(set.candidates.iter()).expect("candidate set is validated non-empty");
    SelectionDecision {
        event_id: set.event_id.clone(),
        chosen: chosen.id.clone(),
        fast: Vec::new(),
        slow: Vec::new(),
        fallback_used: false,
    }
}

pub fn select_ml(clf: &dyn SpeedClassifier, set: &CandidateSet) -> SelectionDecision {
    let labels: Vec<SpeedLabel> = set
        .candidates
        .iter()
        .map(|c| clf.classify(set, c))
        .collect();
    select_labelled(set, &labels)
}

fn select_labelled(set: &CandidateSet, labels: &[SpeedLabel]) -> SelectionDecision {
    let fast_iter = || {
        set.candidates
            .iter()
            .zip(labels)
            .filter(|(_, l)| **l == SpeedLabel::Fast)
            .map(|(c, _)| c)
    };
    let (chosen, fallback_used) = match strongest(fast_iter()) {
        Some(c) => (c, false),
        None => (
            strongest(set.candidates.iter()).expect("candidate set is validated non-empty"),
            true,
        ),
    };
    let ids = |want: SpeedLabel| {
        set.candidates
            .iter()
            .zip(labels)
            .filter(|(_, l)| **l == want)
            .map(|(c, _)| c.id.clone())
            .collect()
    };
    SelectionDecision {
        event_id: set.event_id.clone(),
        chosen: chosen.id.clone(),
        fast: ids(SpeedLabel::Fast),
        slow: ids(SpeedLabel::Slow),
        fallback_used,
    }
}

/// `|FAST| / (|FAST| + |SLOW|)` over all classified candidates.
pub fn poa(decisions: &[SelectionDecision]) -> Result<f64, SelectionError> {
    let fast: usize = decisions.iter().map(|d| d.fast.len()).sum();
    let total: usize = decisions.iter().map(|d| d.fast.len() + d.slow.len()).sum();
    if total == 0 {
        return Err(SelectionError::EmptyPoa);
    }
    Ok(fast as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmReport {
    pub name: String,
    pub n_events: usize,
    pub failure_rate: f64,
    pub p80_ms: f64,
    pub mean_ms: f64,
    /// Scored time cost (failures at 30 000 ms).
    pub quantiles: Vec<QuantilePoint>,
    pub cdf: EmpiricalCdf,
    /// 1.0 for the baseline, which filters nothing.
    pub poa: f64,
    pub fallback_count: usize,
}

pub const REPORT_QUANTILES: [f64; 7] = [0.1, 0.25, 0.5, 0.75, 0.8, 0.9, 0.99];

fn chosen_truth<'a>(set: &'a CandidateSet, d: &SelectionDecision) -> &'a GroundTruth {
    set.candidates
        .iter()
        .find(|c| c.id == d.chosen)
        .and_then(|c| c.truth.as_ref())
        .expect("replayed sets carry ground truth for every candidate")
}

fn summarize(
    name: &str,
    sets: &[&CandidateSet],
    decisions: &[SelectionDecision],
    poa_value: f64,
) -> AlgorithmReport {
    let truths: Vec<&GroundTruth> = sets
        .iter()
        .zip(decisions)
        .map(|(s, d)| chosen_truth(s, d))
        .collect();
    let mut times: Vec<f64> = truths.iter().map(|t| t.scored_time_ms() as f64).collect();
    times.sort_by(f64::total_cmp);
    let n = sets.len();
    AlgorithmReport {
        name: name.to_string(),
        n_events: n,
        failure_rate: truths.iter().filter(|t| t.failed()).count() as f64 / n.max(1) as f64,
        p80_ms: nearest_rank(&times, 0.8).unwrap_or(0.0),
        mean_ms: times.iter().sum::<f64>() / n.max(1) as f64,
        quantiles: quantile_table(&times, &REPORT_QUANTILES),
        cdf: EmpiricalCdf::from_samples(times),
        poa: poa_value,
        fallback_count: decisions.iter().filter(|d| d.fallback_used).count(),
    }
}

/// Replays the baseline and the ML policy on `sets` (all with ground truth).
pub fn replay(
    clf: &dyn SpeedClassifier,
    sets: &[&CandidateSet],
) -> (AlgorithmReport, AlgorithmReport) {
    let base: Vec<SelectionDecision> = sets.par_iter().map(|s| select_baseline(s)).collect();
    let ml: Vec<SelectionDecision> = sets.par_iter().map(|s| select_ml(clf, s)).collect();
    let ml_poa = poa(&ml).unwrap_or(0.0);
    (
        summarize("baseline", sets, &base, 1.0),
        summarize("ml", sets, &ml, ml_poa),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub split_seed: u64,
    pub forest: ForestParams,
    pub threshold_ms: u32,
    pub encoder_floor: usize,
    /// Share of the tuning half held out for validation.
    pub validation_fraction: f64,
    /// SLOW vote share at which a candidate is classified SLOW.
    pub decision_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split_seed: 0,
            forest: ForestParams::default(),
            threshold_ms: DEFAULT_THRESHOLD_MS,
            encoder_floor: DEFAULT_FREQUENCY_FLOOR,
            validation_fraction: 0.2,
            decision_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_events: usize,
    pub excluded_without_truth: usize,
    pub n_train_events: usize,
    pub n_validation_events: usize,
    pub n_eval_events: usize,
    /// Per-candidate metrics on the validation part of the tuning half.
    pub validation: Option<MetricsReport>,
    pub baseline: AlgorithmReport,
    pub ml: AlgorithmReport,
}

/// Seeded 50/50 partition of `n` events: `(tuning, evaluation)` indices.
pub fn split_halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let eval = idx.split_off(n / 2);
    (idx, eval)
}

/// Encoded, labelled candidates of `sets`.
pub fn labelled_candidates(
    sets: &[&CandidateSet],
    enc: &Encoders,
    threshold_ms: u32,
) -> (Vec<FeatureVector>, Vec<SpeedLabel>) {
    let mut unseen = UnseenCounts::default();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in sets {
        for c in &s.candidates {
            if let Some(t) = c.truth {
                x.push(s.encode(c, enc, &mut unseen));
                y.push(t.label(threshold_ms));
            }
        }
    }
    (x, y)
}

/// Splits `sets` with `cfg.split_seed`, trains a forest on the first half
/// (after holding out `validation_fraction` of it) and replays both policies
/// on the second half.
pub fn what_if_eval(
    sets: &[CandidateSet],
    cfg: &EvalConfig,
) -> Result<(EvalReport, ForestModel), SelectionError> {
    let usable: Vec<&CandidateSet> = sets.iter().filter(|s| s.has_ground_truth()).collect();
    if usable.is_empty() {
        return Err(SelectionError::NoGroundTruth);
    }
    let (tune_idx, _) = split_halves(usable.len(), cfg.split_seed);
    let n_val = (tune_idx.len() as f64 * cfg.validation_fraction).round() as usize;
    let (train_idx, val_idx) = tune_idx.split_at(tune_idx.len() - n_val);
    let train_sets: Vec<&CandidateSet> = train_idx.iter().map(|&i| usable[i]).collect();
    let val_sets: Vec<&CandidateSet> = val_idx.iter().map(|&i| usable[i]).collect();

    let pairs: Vec<(&str, &str)> = train_sets
        .iter()
        .flat_map(|s| {
            s.candidates
                .iter()
                .map(move |c| (s.device_model.as_str(), c.ap_model.as_str()))
        })
        .collect();
    let (enc, _) = Encoders::fit(pairs.iter().copied(), cfg.encoder_floor);
    let (x, y) = labelled_candidates(&train_sets, &enc, cfg.threshold_ms);
    if !(y.contains(&SpeedLabel::Fast) && y.contains(&SpeedLabel::Slow)) {
        return Err(SelectionError::NotTrainable);
    }
    let model = train(&x, &y, enc, &cfg.forest)?;
    let validation = (!val_sets.is_empty()).then(|| {
        let (vx, vy) = labelled_candidates(&val_sets, &model.encoders, cfg.threshold_ms);
        evaluate_with_threshold(&model, &vx, &vy, cfg.decision_threshold)
    });
    let mut report = evaluate_model(sets, &model, cfg)?;
    report.n_train_events = train_sets.len();
    report.n_validation_events = val_sets.len();
    report.validation = validation;
    Ok((report, model))
}

/// Replays an already trained model on the evaluation half chosen by
/// `cfg.split_seed`.
pub fn evaluate_model(
    sets: &[CandidateSet],
    model: &ForestModel,
    cfg: &EvalConfig,
) -> Result<EvalReport, SelectionError> {
    let usable: Vec<&CandidateSet> = sets.iter().filter(|s| s.has_ground_truth()).collect();
    if usable.is_empty() {
        return Err(SelectionError::NoGroundTruth);
    }
    let (_, eval_idx) = split_halves(usable.len(), cfg.split_seed);
    let eval_sets: Vec<&CandidateSet> = eval_idx.iter().map(|&i| usable[i]).collect();
    let clf = ForestClassifier {
        model,
        threshold: cfg.decision_threshold,
    };
    let (baseline, ml) = replay(&clf, &eval_sets);
    Ok(EvalReport {
        n_events: sets.len(),
        excluded_without_truth: sets.len() - usable.len(),
        n_train_events: 0,
        n_validation_events: 0,
        n_eval_events: eval_sets.len(),
        validation: None,
        baseline,
        ml,
    })
}

/// One operating point of the decision-threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    /// Over every evaluation candidate, against its ground-truth label.
    pub recall_slow: Option<f64>,
    pub poa: f64,
    pub failure_rate: f64,
    pub p80_ms: f64,
}

/// Replays the ML policy on the evaluation half once per decision
/// threshold. Forest scores are computed once and reused.
pub fn threshold_sweep(
    sets: &[CandidateSet],
    model: &ForestModel,
    cfg: &EvalConfig,
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>, SelectionError> {
    let usable: Vec<&CandidateSet> = sets.iter().filter(|s| s.has_ground_truth()).collect();
    if usable.is_empty() {
        return Err(SelectionError::NoGroundTruth);
    }
    let (_, eval_idx) = split_halves(usable.len(), cfg.split_seed);
    let eval_sets: Vec<&CandidateSet> = eval_idx.iter().map(|&i| usable[i]).collect();
    let scores: Vec<Vec<f64>> = eval_sets
        .par_iter()
        .map(|s| {
            let mut unseen = UnseenCounts::default();
            s.candidates
                .iter()
                .map(|c| model.score(&s.encode(c, &model.encoders, &mut unseen)))
                .collect()
        })
        .collect();
    let truth_slow: Vec<bool> = eval_sets
        .iter()
        .flat_map(|s| {
            s.candidates.iter().map(|c| {
                c.truth
                    .is_some_and(|t| t.label(cfg.threshold_ms) == SpeedLabel::Slow)
            })
        })
        .collect();
    let n_truth_slow = truth_slow.iter().filter(|s| **s).count();
    Ok(thresholds
        .iter()
        .map(|&th| {
            let label = |sc: f64| {
                if sc >= th {
                    SpeedLabel::Slow
                } else {
                    SpeedLabel::Fast
                }
            };
            let decisions: Vec<SelectionDecision> = eval_sets
                .iter()
                .zip(&scores)
                .map(|(s, sc)| {
                    select_labelled(s, &sc.iter().map(|&x| label(x)).collect::<Vec<_>>())
                })
                .collect();
            let caught = scores
                .iter()
                .flatten()
                .zip(&truth_slow)
                .filter(|(sc, t)| **t && label(**sc) == SpeedLabel::Slow)
                .count();
            let r = summarize("ml", &eval_sets, &decisions, poa(&decisions).unwrap_or(0.0));
            SweepPoint {
                threshold: th,
                recall_slow: (n_truth_slow > 0).then(|| caught as f64 / n_truth_slow as f64),
                poa: r.poa,
                failure_rate: r.failure_rate,
                p80_ms: r.p80_ms,
            }
        })
        .collect())
}
