use nucmem::config::{parse_config_str, Provenance, RunConfig};
use nucmem::model_file::{load_model, save_model};
use nucmem::reports::RecordLine;
use nucmem_core::corpus::{build_vocab, encode};
use nucmem_core::decode::{StopReason, Strategy};
use nucmem_core::lm::{LanguageModel, NGramModel, NGramParams};
use nucmem_core::memometrics::MemorizationRecord;
use proptest::prelude::*;

fn provenance() -> Provenance {
    Provenance {
        schema_version: 1,
        config_hash: "ab".into(),
        seed: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn record_lines_round_trip(
        top_p in prop::option::of(0.01f64..=1.0),
        verbatim in any::<bool>(),
        bleu4 in 0.0f64..=1.0,
        generated in prop::collection::vec(0u32..1000, 0..20),
        seed in any::<u64>(),
    ) {
        let record = MemorizationRecord {
            probe_id: "doc".into(),
            duplicity: 7,
            setting: top_p.map_or(Strategy::Greedy, |top_p| Strategy::Nucleus { top_p }),
            seed,
            prefix_len: 32,
            verbatim,
            bleu4,
            gen_len: generated.len(),
            stop_reason: StopReason::Cap,
            det_steps: generated.len() / 2,
            generated,
        };
        let line = serde_json::to_string(&RecordLine::new(record.clone(), &provenance())).unwrap();
        let back: RecordLine = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(back.into_record(), record);
    }

    #[test]
    fn models_round_trip(
        docs in prop::collection::vec(prop::collection::vec(0u8..6, 0..20), 1..6),
        order in 1usize..5,
        contexts in prop::collection::vec(prop::collection::vec(0u32..8, 0..5), 1..10),
    ) {
        let texts: Vec<String> = docs
            .iter()
            .map(|d| d.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" "))
            .collect();
        let vocab = build_vocab(texts.iter().map(String::as_str));
        let encoded: Vec<Vec<u32>> = texts.iter().map(|t| encode(t, &vocab)).collect();
        let params = NGramParams { order, ..NGramParams::default() };
        let model = NGramModel::train(encoded.iter().map(Vec::as_slice), vocab.len(), params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &model, &vocab, &provenance()).unwrap();
        let back = load_model(&path).unwrap().model;
        let v = vocab.len() as u32;
        for ctx in contexts {
            let ctx: Vec<u32> = ctx.into_iter().map(|t| t % v).collect();
            prop_assert_eq!(back.next_distribution(&ctx), model.next_distribution(&ctx));
        }
    }

    #[test]
    fn configs_round_trip(seed in any::<u64>(), order in 1usize..6, p in 0.01f64..=1.0, prefix in 1usize..400) {
        let mut cfg = RunConfig { seed, ..RunConfig::default() };
        cfg.model.order = order;
        cfg.sweep.top_p_values = vec![p];
        cfg.sweep.prefix_len = prefix;
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = parse_config_str(&text).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}
