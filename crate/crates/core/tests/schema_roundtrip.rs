use assoclab::log_schema::{
    emit, ingest, AttemptRecord, Band, ConnectionAttempt, Format, Outcome, PhaseTiming,
};
use assoclab::sim::{generate_corpus, CorpusConfig};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    // Separators, quotes and non-ASCII exercise the CSV quoting.
    prop_oneof![
        "[A-Za-z0-9:_-]{1,12}",
        "[a-z ,\"';é漢]{1,10}".prop_filter("not blank", |s| !s.trim().is_empty()),
    ]
}

fn phases_summing_to(total: u32) -> impl Strategy<Value = PhaseTiming> {
    (0..=total, 0..=total, 0..=total).prop_map(move |(a, b, c)| {
        let mut cuts = [a, b, c];
        cuts.sort_unstable();
        PhaseTiming {
            scan_ms: cuts[0],
            assoc_ms: cuts[1] - cuts[0],
            auth_ms: cuts[2] - cuts[1],
            dhcp_ms: total - cuts[2],
        }
    })
}

fn attempt() -> impl Strategy<Value = ConnectionAttempt> {
    let outcome = prop::sample::select(Outcome::ALL.to_vec());
    let band = prop::option::of(prop::sample::select(vec![Band::Band2_4GHz, Band::Band5GHz]));
    (
        text(),
        text(),
        0u8..24,
        -120i32..=-55,
        0u32..500,
        text(),
        text(),
        any::<bool>(),
        any::<Option<bool>>(),
        band,
        outcome,
    )
        .prop_flat_map(
            |(id, user, hour, rssi, devices, dev, ap, enc, public, band, outcome)| {
                let timing = if outcome == Outcome::Success {
                    (1u32..=30_000)
                        .prop_flat_map(|t| (Just(Some(t)), prop::option::of(phases_summing_to(t))))
                        .boxed()
                } else {
                    Just((None, None)).boxed()
                };
                timing.prop_map(move |(time, phases)| {
                    ConnectionAttempt::new(AttemptRecord {
                        attempt_id: id.clone(),
                        user_id: user.clone(),
                        hour_of_day: hour,
                        rssi_dbm: rssi,
                        num_devices: devices,
                        device_model: dev.clone(),
                        ap_model: ap.clone(),
                        encrypted: enc,
                        is_public: public,
                        band,
                        outcome,
                        connection_time_ms: time,
                        phases,
                    })
                    .expect("strategy only builds valid records")
                })
            },
        )
}

fn round_trip(attempts: &[ConnectionAttempt], format: Format) -> Vec<ConnectionAttempt> {
    let mut buf = Vec::new();
    emit(attempts, format, &mut buf).unwrap();
    let report = ingest(buf.as_slice(), format).unwrap();
    assert!(report.rejected.is_empty(), "{:?}", report.rejected);
    assert!(report.repaired.is_empty(), "{:?}", report.repaired);
    report.attempts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn jsonl_round_trip(attempts in prop::collection::vec(attempt(), 0..20)) {
        prop_assert_eq!(round_trip(&attempts, Format::Jsonl), attempts);
    }

    #[test]
    fn csv_round_trip(attempts in prop::collection::vec(attempt(), 0..20)) {
        prop_assert_eq!(round_trip(&attempts, Format::Csv), attempts);
    }

    #[test]
    fn emit_is_a_fixed_point(attempts in prop::collection::vec(attempt(), 1..10)) {
        for format in [Format::Jsonl, Format::Csv] {
            let mut first = Vec::new();
            emit(&attempts, format, &mut first).unwrap();
            let mut second = Vec::new();
            emit(&round_trip(&attempts, format), format, &mut second).unwrap();
            prop_assert_eq!(&first, &second);
        }
    }
}

#[test]
fn simulated_corpus_round_trips() {
    let corpus = generate_corpus(&CorpusConfig::field_regime(10_000, 21))
        .unwrap()
        .attempts;
    assert_eq!(corpus.len(), 10_000);
    for format in [Format::Jsonl, Format::Csv] {
        assert_eq!(round_trip(&corpus, format), corpus);
    }
}
