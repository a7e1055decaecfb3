use nucmem_core::decode::{StopReason, Strategy};
use nucmem_core::memometrics::MemorizationRecord;
use nucmem_core::sweep::{
    aggregate_heatmap, detect_rampup, detect_saturation, ramp_sat_report, RampSatThresholds,
};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;

fn record(key: (u32, u32, usize, u64), verbatim: bool) -> MemorizationRecord {
    let (probe, dup, s, seed) = key;
    let setting = [
        Strategy::Greedy,
        Strategy::Nucleus { top_p: 0.2 },
        Strategy::Nucleus { top_p: 0.8 },
    ][s];
    MemorizationRecord {
        probe_id: format!("p{probe}-{dup}"),
        duplicity: dup,
        setting,
        seed,
        prefix_len: 8,
        verbatim,
        bleu4: if verbatim { 1.0 } else { 0.0 },
        gen_len: 3,
        stop_reason: StopReason::Eos,
        det_steps: 1,
        generated: vec![],
    }
}

/// Records with distinct keys, some of them repeated.
fn records() -> impl proptest::strategy::Strategy<Value = Vec<MemorizationRecord>> {
    (
        prop::collection::btree_map(
            (0u32..12, 1u32..31, 0usize..3, 0u64..3),
            any::<bool>(),
            1..80,
        ),
        prop::collection::vec(any::<prop::sample::Index>(), 0..10),
    )
        .prop_map(|(map, repeats)| {
            let mut out: Vec<MemorizationRecord> =
                map.into_iter().map(|(k, v)| record(k, v)).collect();
            for i in repeats {
                let r = out[i.index(out.len())].clone();
                out.push(r);
            }
            out
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn heatmap_ignores_record_order(
        mut records in records(),
        width in 1u32..8,
        rot in 0usize..80,
    ) {
        let a = aggregate_heatmap(&records, width);
        let r = rot % records.len();
        records.rotate_left(r);
        records.reverse();
        prop_assert_eq!(aggregate_heatmap(&records, width), a.clone());
        for cell in a.cells.iter().flatten().flatten() {
            prop_assert!((0.0..=1.0).contains(&cell.mean));
        }
    }

    #[test]
    fn saturation_never_precedes_rampup(values in prop::collection::vec(0.0f64..1.0, 1..30)) {
        let series: Vec<(u32, f64)> = values.iter().enumerate().map(|(i, &v)| (i as u32 + 1, v)).collect();
        let t = RampSatThresholds::default();
        if let Some(r) = detect_rampup(&series, t.tau_r, t.growth_factor) {
            let at = series.iter().position(|&(d, _)| d == r).unwrap();
            prop_assert!(at > 0);
            prop_assert!(series[at].1 >= t.tau_r && series[at].1 >= t.growth_factor * series[at - 1].1);
            if let Some(s) = detect_saturation(&series[at..], t.tau_s, t.epsilon) {
                prop_assert!(s >= r);
            }
        }
    }
}

#[test]
fn report_over_a_sweep() {
    let mut records = Vec::new();
    let fractions = [0.0, 0.0, 0.25, 0.75, 1.0, 1.0];
    for (i, &f) in fractions.iter().enumerate() {
        let d = i as u32 + 1;
        for probe in 0..4 {
            records.push(MemorizationRecord {
                probe_id: format!("d{d}-{probe}"),
                duplicity: d,
                setting: Strategy::Greedy,
                seed: 0,
                prefix_len: 8,
                verbatim: (probe as f64) < f * 4.0,
                bleu4: 0.0,
                gen_len: 1,
                stop_reason: StopReason::Eos,
                det_steps: 1,
                generated: vec![],
            });
        }
    }
    let report = ramp_sat_report(
        &aggregate_heatmap(&records, 1),
        &RampSatThresholds::default(),
    );
    assert_eq!(report.len(), 1);
    assert_eq!(report[0].ramp_up, Some(3));
    assert_eq!(report[0].saturation, Some(5));
    assert_eq!(report[0].series[3], (4, 0.75));
}

#[test]
fn deterministic_fraction_extremes() {
    use nucmem_core::decode::{generate, DecodeConfig};
    use nucmem_core::lm::{NGramModel, NGramParams};
    use nucmem_core::sweep::deterministic_fraction;

    let docs: Vec<Vec<u32>> = (0..20u32)
        .map(|i| {
            (0..12)
                .map(|j| 2 + (i * 3 + j * 5) % 9)
                .chain([1])
                .collect()
        })
        .collect();
    let model =
        NGramModel::train(docs.iter().map(Vec::as_slice), 12, NGramParams::default()).unwrap();
    let run = |top_p: f64| {
        let cfg = DecodeConfig {
            strategy: Strategy::Nucleus { top_p },
            max_new_tokens: 40,
            ..DecodeConfig::default()
        };
        generate(&model, &docs[0][..4], &cfg, "d0").unwrap()
    };
    let full = run(1.0);
    let tight = run(1e-9);
    let f = deterministic_fraction([("full", &full), ("tight", &tight)]);
    assert_eq!(f["full"].fraction(), Some(0.0));
    assert_eq!(f["tight"].fraction(), Some(1.0));
    assert!(full.steps.iter().all(|s| s.nucleus_size > 1));
}
