//! Acceptance gate. Runs without the libtest harness so every criterion
//! prints its PASS/FAIL line; exits non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use assoclab::analytics::{
    correlation_report, kendall_on_binned_means, outcome_proportions, relative_information_gain,
    success_time_cdf, Feature,
};
use assoclab::binning::{BinSpec, Value};
use assoclab::features::{Encoders, FeatureVector, SpeedLabel};
use assoclab::forest::{train, ForestModel, ForestParams};
use assoclab::log_schema::Outcome;
use assoclab::selection::{threshold_sweep, what_if_eval, CandidateSet, EvalConfig, EvalReport};
use assoclab::sim::{
    eap_overhead, generate_candidate_sets, generate_corpus, run_attempt, simulate_process,
    CandidateCorpusConfig, ConnState, CorpusConfig, EapParams, ScenarioConfig,
};
use assoclab::sub_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{kendall_oracle, rig_oracle};

const PP: f64 = 0.015;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

/// Collects named checks; the verdict fails if any check fails.
#[derive(Default)]
struct Checks {
    failed: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failed.push(what);
        }
    }

    fn verdict(self) -> Verdict {
        if self.failed.is_empty() {
            Verdict::new(true, self.notes.join("; "))
        } else {
            Verdict::new(false, format!("failed: {}", self.failed.join("; ")))
        }
    }
}

fn marginals() -> Verdict {
    let t0 = Instant::now();
    let corpus = generate_corpus(&CorpusConfig::field_regime(100_000, 2015))
        .expect("preset is valid")
        .attempts;
    let props = outcome_proportions(&corpus).expect("non-empty corpus");
    let cdf = success_time_cdf(&corpus).expect("corpus has successes");
    let elapsed = t0.elapsed();

    let success = props.get(Outcome::Success);
    let failure = 1.0 - success;
    let under_5s = cdf.eval(4_999.0);
    let over_15s = cdf.fraction_above(15_000.0);
    let mut c = Checks::default();
    for (name, got, want) in [
        ("failure", failure, 0.45),
        ("success", success, 0.549),
        ("<5s", under_5s, 0.80),
        (">15s", over_15s, 0.03),
    ] {
        c.check(
            (got - want).abs() <= PP,
            format!("{name} {got:.4} (target {want})"),
        );
    }
    c.check(
        elapsed < Duration::from_secs(60),
        format!("{:.1}s", elapsed.as_secs_f64()),
    );
    c.verdict()
}

fn rig_oracle_agreement() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec_x = BinSpec::numeric(1.0, 0.0).unwrap();
    let spec_y = BinSpec::numeric(1.0, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    let fixtures = 25;
    for _ in 0..fixtures {
        let n = rng.random_range(2..=1_000);
        let (kx, ky) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let bx: Vec<i64> = (0..n).map(|_| rng.random_range(0..kx)).collect();
        let by: Vec<i64> = bx
            .iter()
            .map(|&x| {
                if rng.random_bool(0.5) {
                    x % ky
                } else {
                    rng.random_range(0..ky)
                }
            })
            .collect();
        let vx: Vec<Value> = bx.iter().map(|&b| Value::Num(b as f64 + 0.5)).collect();
        let vy: Vec<Value> = by.iter().map(|&b| Value::Num(b as f64 + 0.25)).collect();
        let got = relative_information_gain(&vx, &vy, &spec_x, &spec_y)
            .unwrap()
            .rig;
        worst = worst.max((got - rig_oracle(&bx, &by)).abs());
    }
    let mut in_range = 0;
    let fuzz = 10_000;
    for _ in 0..fuzz {
        let n = rng.random_range(1..50);
        let vx: Vec<Value> = (0..n)
            .map(|_| Value::Num(rng.random_range(-50.0..50.0)))
            .collect();
        let vy: Vec<Value> = (0..n)
            .map(|_| Value::Num(rng.random_range(-50.0..50.0)))
            .collect();
        let w = BinSpec::numeric(rng.random_range(0.5..30.0), 0.0).unwrap();
        let rig = relative_information_gain(&vx, &vy, &w, &w).unwrap().rig;
        in_range += (0.0..=1.0).contains(&rig) as usize;
    }
    let mut c = Checks::default();
    c.check(
        worst <= 1e-9,
        format!("{fixtures} fixtures, max |diff| {worst:.2e}"),
    );
    c.check(
        in_range == fuzz,
        format!("{in_range}/{fuzz} fuzz inputs in [0, 1]"),
    );
    c.verdict()
}

fn kendall_oracle_agreement() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut exact, mut fixtures) = (0, 0);
    while fixtures < 25 {
        let n = rng.random_range(10..=600);
        let slope = rng.random_range(-1.0..1.0);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| (slope * x + rng.random_range(-5.0..5.0)).round())
            .collect();
        let spec = BinSpec::numeric(5.0, 0.0).unwrap();
        let Ok(got) = kendall_on_binned_means(&xs, &ys, &spec) else {
            continue;
        };
        fixtures += 1;
        exact += (got == kendall_oracle(&xs, &ys, 5.0, 0.0)) as usize;
    }
    let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let up: Vec<f64> = xs.iter().map(|x| x.sqrt()).collect();
    let down: Vec<f64> = xs.iter().map(|x| 1.0 / (1.0 + x)).collect();
    let spec = BinSpec::numeric(10.0, 0.0).unwrap();
    let (t_up, t_down) = (
        kendall_on_binned_means(&xs, &up, &spec).unwrap(),
        kendall_on_binned_means(&xs, &down, &spec).unwrap(),
    );
    let mut c = Checks::default();
    c.check(
        exact == fixtures,
        format!("{exact}/{fixtures} fixtures exact"),
    );
    c.check(
        t_up == 1.0 && t_down == -1.0,
        format!("monotone curves give {t_up} and {t_down}"),
    );
    c.verdict()
}

fn state_machine_invariants() -> Verdict {
    let mut c = Checks::default();
    let disconnected = (0..5_000u64)
        .filter(|&i| {
            let r = simulate_process(&ScenarioConfig {
                rng_seed: sub_seed(3, i),
                ..ScenarioConfig::default()
            });
            r.transitions
                .iter()
                .any(|t| t.to == ConnState::Disconnected)
        })
        .count();
    c.check(
        disconnected == 0,
        format!("{disconnected} zero-loss runs disconnect"),
    );

    let corpus = generate_corpus(&CorpusConfig::field_regime(20_000, 4))
        .unwrap()
        .attempts;
    let successes: Vec<_> = corpus
        .iter()
        .filter(|a| a.outcome == Outcome::Success)
        .collect();
    let bad = successes
        .iter()
        .filter(|a| a.phases.map(|p| p.total_ms()) != a.connection_time_ms.map(|t| t as u64))
        .count();
    c.check(
        bad == 0,
        format!(
            "phase sums match on {}/{} successes",
            successes.len() - bad,
            successes.len()
        ),
    );

    let n = 10_000u64;
    let total: usize = (0..n)
        .map(|i| {
            let cfg = ScenarioConfig {
                p_loss_probe: 0.5,
                rng_seed: sub_seed(5, i),
                ..ScenarioConfig::default()
            };
            run_attempt(&cfg).1.scanning_entries()
        })
        .sum();
    let mean = total as f64 / n as f64;
    let half = 1.96 * (2.0 / n as f64).sqrt();
    c.check(
        (mean - 2.0).abs() <= half,
        format!("mean scanning entries {mean:.4} (2 +/- {half:.4})"),
    );
    c.verdict()
}

fn eap_formula() -> Verdict {
    let reference = eap_overhead(EapParams {
        n_e: 4,
        t_w_ms: 10,
        t_a_ms: 5,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let fuzz = 100_000;
    let agree = (0..fuzz)
        .filter(|_| {
            let p = EapParams {
                n_e: rng.random_range(0..10_000),
                t_w_ms: rng.random(),
                t_a_ms: rng.random(),
            };
            eap_overhead(p)
                == 2 * p.n_e as u64 * (p.t_w_ms as u64 + p.t_a_ms as u64) + p.t_a_ms as u64
        })
        .count();
    let mut c = Checks::default();
    c.check(
        reference == 125,
        format!("eap_overhead(4, 10, 5) = {reference} ms"),
    );
    c.check(agree == fuzz, format!("{agree}/{fuzz} fuzzed inputs match"));
    c.verdict()
}

fn forest_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let vector = |rng: &mut ChaCha8Rng| FeatureVector {
        hour_of_day: rng.random_range(0..24),
        rssi_dbm: rng.random_range(-100..=-55),
        device_model: rng.random_range(0..10),
        ap_model: rng.random_range(0..30),
        encrypted: rng.random_bool(0.5),
    };
    let x: Vec<FeatureVector> = (0..4_000).map(|_| vector(&mut rng)).collect();
    let y: Vec<SpeedLabel> = x
        .iter()
        .map(|v| {
            let slow = v.rssi_dbm < -82 || v.ap_model % 5 == 0;
            if rng.random_bool(0.1) != slow {
                SpeedLabel::Slow
            } else {
                SpeedLabel::Fast
            }
        })
        .collect();
    let probes: Vec<FeatureVector> = (0..1_000).map(|_| vector(&mut rng)).collect();
    let enc = Encoders::fit([("d", "a")], 1).0;
    let mut c = Checks::default();

    let single = ForestParams {
        n_trees: 1,
        bootstrap: false,
        ..Default::default()
    };
    let m1 = train(&x, &y, enc.clone(), &single).unwrap();
    c.check(
        probes
            .iter()
            .all(|v| m1.predict(v).0 == m1.trees[0].vote(v)),
        "single-tree forest equals its tree",
    );

    let params = ForestParams {
        n_trees: 40,
        rng_seed: 8,
        ..Default::default()
    };
    let m = train(&x, &y, enc.clone(), &params).unwrap();
    let mut permuted = m.clone();
    permuted.trees.reverse();
    permuted.trees.rotate_left(13);
    c.check(
        probes.iter().all(|v| m.predict(v) == permuted.predict(v)),
        "tree permutation invariant",
    );
    c.check(m.max_depth() <= 90, format!("max depth {}", m.max_depth()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forest.bin");
    m.save(&path).unwrap();
    let loaded = ForestModel::load(&path).unwrap();
    c.check(
        probes.iter().all(|v| loaded.predict(v) == m.predict(v)),
        "save/load keeps 1000 predictions",
    );

    let again = train(&x, &y, enc, &params).unwrap();
    c.check(
        again == m && again.to_bytes() == m.to_bytes(),
        "fixed seed reproduces the model",
    );
    c.verdict()
}

struct WhatIf {
    sets: Vec<CandidateSet>,
    cfg: EvalConfig,
    report: EvalReport,
    model: ForestModel,
    elapsed: Duration,
}

fn run_what_if() -> WhatIf {
    let t0 = Instant::now();
    let sets = generate_candidate_sets(&CandidateCorpusConfig::field_regime(200_000, 2016))
        .expect("preset is valid");
    let cfg = EvalConfig {
        split_seed: 2016,
        ..EvalConfig::default()
    };
    let (report, model) = what_if_eval(&sets, &cfg).expect("corpus is trainable");
    WhatIf {
        sets,
        cfg,
        report,
        model,
        elapsed: t0.elapsed(),
    }
}

fn what_if_regime(w: &WhatIf) -> Verdict {
    let (b, m) = (&w.report.baseline, &w.report.ml);
    let mut c = Checks::default();
    c.check(
        (b.failure_rate - 0.33).abs() <= 0.03,
        format!("baseline failure {:.4}", b.failure_rate),
    );
    c.check(
        m.failure_rate <= b.failure_rate / 5.0,
        format!("ML failure {:.4}", m.failure_rate),
    );
    let ratio = b.p80_ms / m.p80_ms.max(1.0);
    c.check(
        ratio >= 5.0,
        format!("p80 {} -> {} ms ({ratio:.1}x)", b.p80_ms, m.p80_ms),
    );
    c.check(
        w.model.trees.len() == 100,
        format!("{} trees", w.model.trees.len()),
    );
    c.check(
        w.elapsed < Duration::from_secs(300),
        format!("{:.1}s end to end", w.elapsed.as_secs_f64()),
    );
    c.verdict()
}

fn correlation_ordering() -> Verdict {
    let corpus = generate_corpus(&CorpusConfig::field_regime(100_000, 2017))
        .unwrap()
        .attempts;
    let r = correlation_report(&corpus).expect("corpus has successes");
    let rig = |f| r.get(f).map_or(f64::NAN, |c| c.rig);
    let (dev, ap, rssi, hour) = (
        rig(Feature::DeviceModel),
        rig(Feature::ApModel),
        rig(Feature::Rssi),
        rig(Feature::HourOfDay),
    );
    let tau = r.get(Feature::Rssi).and_then(|c| c.kendall);
    let mut c = Checks::default();
    c.check(
        dev > ap && ap > rssi && rssi > hour,
        format!("RIG device {dev:.4} > ap {ap:.4} > rssi {rssi:.4} > hour {hour:.4}"),
    );
    c.check(
        tau.is_some_and(|t| t < 0.0),
        format!("Kendall(rssi) {tau:?}"),
    );
    c.verdict()
}

fn poa_tradeoff(w: &WhatIf) -> Verdict {
    let thresholds = [0.95, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05];
    let points = threshold_sweep(&w.sets, &w.model, &w.cfg, &thresholds)
        .expect("evaluation half has ground truth");
    let recall: Vec<f64> = points
        .iter()
        .map(|p| p.recall_slow.unwrap_or(f64::NAN))
        .collect();
    let poa: Vec<f64> = points.iter().map(|p| p.poa).collect();
    let mut c = Checks::default();
    c.check(
        recall.windows(2).all(|p| p[1] >= p[0]),
        "recall(SLOW) rises as the threshold drops",
    );
    c.check(
        poa.windows(2).all(|p| p[1] <= p[0]),
        "PoA falls as the threshold drops",
    );
    let (r0, r1) = (recall[0], recall[recall.len() - 1]);
    let (p0, p1) = (poa[0], poa[poa.len() - 1]);
    c.check(
        r1 > r0 && p1 < p0,
        format!("recall {r0:.3} -> {r1:.3}, PoA {p0:.3} -> {p1:.3}"),
    );
    c.verdict()
}

fn main() -> ExitCode {
    let mut results: Vec<(u8, &str, Verdict)> = Vec::new();
    let mut run = |id: u8, name: &'static str, f: &dyn Fn() -> Verdict| {
        let v = f();
        println!(
            "criterion {id} [{name}]: {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, name, v));
    };
    run(1, "round-trip marginals", &marginals);
    run(2, "RIG oracle", &rig_oracle_agreement);
    run(3, "Kendall oracle", &kendall_oracle_agreement);
    run(4, "state-machine invariants", &state_machine_invariants);
    run(5, "EAP formula", &eap_formula);
    run(6, "forest correctness", &forest_correctness);
    let what_if = run_what_if();
    run(7, "what-if replay", &|| what_if_regime(&what_if));
    run(8, "correlation ordering", &correlation_ordering);
    run(9, "PoA trade-off", &|| poa_tradeoff(&what_if));

    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
