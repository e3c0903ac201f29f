use assoclab::selection::{threshold_sweep, what_if_eval, EvalConfig};
use assoclab::sim::{generate_candidate_sets, CandidateCorpusConfig};

#[test]
fn field_regime_replay() {
    let sets = generate_candidate_sets(&CandidateCorpusConfig::field_regime(100_000, 12)).unwrap();
    let mut cfg = EvalConfig::default();
    cfg.forest.n_trees = 40;
    let (report, model) = what_if_eval(&sets, &cfg).unwrap();

    let recall = report
        .validation
        .as_ref()
        .and_then(|v| v.recall_slow)
        .unwrap();
    assert!(recall >= 0.85, "validation recall(SLOW) {recall}");
    let (b, m) = (&report.baseline, &report.ml);
    assert!(
        (b.failure_rate - 0.33).abs() <= 0.03,
        "baseline {}",
        b.failure_rate
    );
    assert!(m.failure_rate <= 0.05, "ML {}", m.failure_rate);
    assert!(
        b.p80_ms >= 5.0 * m.p80_ms,
        "p80 {} vs {}",
        b.p80_ms,
        m.p80_ms
    );

    // Near recall 0.9 the PoA sits just above the FAST share of candidates.
    let sweep = threshold_sweep(&sets, &model, &cfg, &[0.95, 0.9, 0.8, 0.7]).unwrap();
    let p = sweep
        .iter()
        .min_by(|a, b| {
            let d = |p: &assoclab::selection::SweepPoint| (p.recall_slow.unwrap() - 0.9).abs();
            d(a).total_cmp(&d(b))
        })
        .unwrap();
    assert!(
        (0.55..=0.8).contains(&p.poa),
        "PoA {} at recall {:?}",
        p.poa,
        p.recall_slow
    );
}
