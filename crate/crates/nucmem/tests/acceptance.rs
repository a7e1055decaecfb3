//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nucmem::config::RunConfig;
use nucmem::pipeline::{self, PerplexityReport};
use nucmem_core::corpus::{
    assign_buckets, build_vocab, generate_synthetic_corpus, plan_duplication, Document,
    DuplicationPlan, LengthBucket, SyntheticConfig,
};
use nucmem_core::decode::{
    generate, greedy_pick, nucleus_truncate, sample_with_uniform, DecodeConfig, Strategy,
};
use nucmem_core::lm::LanguageModel;
use nucmem_core::memometrics::{bleu4, MemorizationRecord};
use nucmem_core::sweep::{
    aggregate_bleu, aggregate_heatmap, detect_rampup, detect_saturation,
    deterministic_fraction_from_records, BleuVariant, DuplicityBin, HeatmapResult,
};
use nucmem_core::TokenId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget: Duration, detail: String) -> Check {
    ensure(
        elapsed < budget,
        format!(
            "{detail}; {:.1}s of {}s",
            elapsed.as_secs_f64(),
            budget.as_secs()
        ),
    )
}

fn plan_exactness() -> Check {
    let start = Instant::now();
    let plan = DuplicationPlan::default();
    let raw = generate_synthetic_corpus(&SyntheticConfig {
        num_docs: 9200,
        ..SyntheticConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let vocab = build_vocab(raw.iter().map(|r| r.text.as_str()));
    let docs: Vec<Document> = raw.iter().map(|r| Document::encode(r, &vocab)).collect();
    let manifest = plan_duplication(&assign_buckets(&docs), &plan).map_err(|e| e.to_string())?;
    manifest.validate().map_err(|e| e.to_string())?;
    let levels = manifest.level_counts();
    let mut per_bucket: BTreeMap<(u32, LengthBucket), usize> = BTreeMap::new();
    for e in manifest.train_entries().filter(|e| e.duplicity >= 2) {
        *per_bucket.entry((e.duplicity, e.bucket)).or_default() += 1;
    }
    let ok = manifest.duplicated_docs() == 8120
        && (2..=30).all(|n| levels.get(&n) == Some(&280))
        && levels.keys().all(|&n| n == 1 || (2..=30).contains(&n))
        && per_bucket.len() == 29 * 4
        && per_bucket.values().all(|&c| c == 70)
        && manifest.duplicated_copies() == 129_920;
    within(
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "{} duplicated docs, {} copies, levels 2..=30 at 280",
            manifest.duplicated_docs(),
            manifest.duplicated_copies()
        ),
    )
    .and_then(|d| ensure(ok, d))
}

fn nucleus_properties() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = Vec::new();
    for case in 0..10_000 {
        let n = rng.gen_range(1..=64);
        // Raising uniforms to a random power mixes flat and peaked shapes.
        let sharpness = rng.gen_range(0.5..12.0);
        let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powf(sharpness)).collect();
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            continue;
        }
        let dist: Vec<f64> = w.iter().map(|x| x / total).collect();
        for k in 1..=10 {
            let top_p = k as f64 / 10.0;
            let nucleus = nucleus_truncate(&dist, top_p);
            let raw: Vec<f64> = nucleus.tokens.iter().map(|&t| dist[t as usize]).collect();
            let minimal = raw[..raw.len() - 1].iter().sum::<f64>() < top_p;
            let renormalized = (nucleus.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
            let best = greedy_pick(&dist);
            let deterministic = dist[best as usize] < top_p
                || (nucleus.len() == 1 && sample_with_uniform(&nucleus, rng.gen()) == best);
            if !(minimal && renormalized && deterministic) {
                violations.push((case, top_p));
            }
        }
    }
    within(
        start.elapsed(),
        Duration::from_secs(30),
        format!("100000 truncations, {} violations", violations.len()),
    )
    .and_then(|d| ensure(violations.is_empty(), d))
}

/// Puts `peak` on a fixed successor of the last token and spreads the rest.
struct Peaked {
    peak: f64,
    successor: Vec<TokenId>,
}

impl LanguageModel for Peaked {
    fn vocab_size(&self) -> usize {
        self.successor.len()
    }

    fn next_distribution_into(&self, context: &[TokenId], out: &mut Vec<f64>) {
        let v = self.successor.len();
        out.clear();
        out.resize(v, (1.0 - self.peak) / (v - 1) as f64);
        out[self.successor[*context.last().unwrap() as usize] as usize] = self.peak;
    }
}

fn greedy_convergence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for case in 0..100u64 {
        let v = rng.gen_range(3..40);
        let successor: Vec<TokenId> = (0..v).map(|_| rng.gen_range(0..v as TokenId)).collect();
        let top_p = rng.gen_range(1..=10) as f64 / 10.0;
        let peak = if top_p == 1.0 {
            1.0
        } else {
            rng.gen_range(top_p..1.0).max(0.5)
        };
        let model = Peaked { peak, successor };
        let prefix = [rng.gen_range(0..v as TokenId)];
        let greedy = DecodeConfig {
            max_new_tokens: 48,
            seed: case,
            ..DecodeConfig::default()
        };
        let nucleus = DecodeConfig {
            strategy: Strategy::Nucleus { top_p },
            ..greedy
        };
        let g = generate(&model, &prefix, &greedy, "fixture").map_err(|e| e.to_string())?;
        let n = generate(&model, &prefix, &nucleus, "fixture").map_err(|e| e.to_string())?;
        let dominated = n.steps.iter().all(|s| s.raw_max_prob >= top_p);
        if !dominated || g.generated != n.generated {
            mismatches += 1;
        }
    }
    ensure(
        mismatches == 0,
        format!("100 fixtures, {mismatches} mismatches"),
    )
}

fn brute_force_bleu(cand: &[u32], reference: &[u32]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut logs = Vec::new();
    for n in 1..=4usize {
        let cg: Vec<&[u32]> = if cand.len() >= n {
            cand.windows(n).collect()
        } else {
            vec![]
        };
        let rg: Vec<&[u32]> = if reference.len() >= n {
            reference.windows(n).collect()
        } else {
            vec![]
        };
        if cg.is_empty() && rg.is_empty() {
            continue;
        }
        if cg.is_empty() {
            return 0.0;
        }
        let mut used = vec![false; rg.len()];
        let mut matched = 0;
        for g in &cg {
            if let Some(j) = (0..rg.len()).find(|&j| !used[j] && rg[j] == *g) {
                used[j] = true;
                matched += 1;
            }
        }
        if matched == 0 {
            return 0.0;
        }
        logs.push((matched as f64 / cg.len() as f64).ln());
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

fn bleu_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for _ in 0..100 {
        let alphabet = rng.gen_range(2..8);
        let sample = |rng: &mut ChaCha8Rng| -> Vec<u32> {
            let n = rng.gen_range(1..40);
            (0..n).map(|_| rng.gen_range(0..alphabet)).collect()
        };
        let (a, b) = (sample(&mut rng), sample(&mut rng));
        let got = bleu4(&a, &b);
        worst = worst.max((got - brute_force_bleu(&a, &b)).abs());
        nonzero += usize::from(got > 0.0);
    }
    let x: Vec<u32> = (0..30).map(|_| rng.gen_range(0..50)).collect();
    let identity = bleu4(&x, &x) == 1.0;
    let disjoint = bleu4(&[1, 2, 3, 4, 5, 6], &[1, 2, 3, 9, 4, 5, 6, 9, 2, 3]);
    within(
        start.elapsed(),
        Duration::from_secs(10),
        format!("max deviation {worst:.1e} over 100 pairs ({nonzero} nonzero), bleu(x,x) {identity}, no shared 4-gram {disjoint}"),
    )
    .and_then(|d| ensure(worst <= 1e-9 && identity && disjoint == 0.0, d))
}

fn detectors() -> Check {
    let indexed = |v: &[f64]| -> Vec<(u32, f64)> {
        v.iter()
            .enumerate()
            .map(|(i, &f)| (i as u32 + 1, f))
            .collect()
    };
    let got = [
        detect_rampup(&indexed(&[0.01, 0.02, 0.04, 0.10, 0.70]), 0.10, 2.0),
        detect_rampup(&indexed(&[0.0; 8]), 0.10, 2.0),
        detect_rampup(&indexed(&[0.1, 0.11, 0.12]), 0.10, 2.0),
        detect_saturation(&indexed(&[0.1, 0.7, 0.93, 0.95]), 0.90, 0.02),
        detect_saturation(&indexed(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.5]), 0.90, 0.02),
        detect_saturation(&indexed(&[0.95; 6]), 0.90, 0.02),
    ];
    let want = [Some(4), None, None, Some(3), None, Some(1)];
    ensure(got == want, format!("{got:?}"))
}

/// One seeded end-to-end run of the trend fixture.
struct FixtureRun {
    records: Vec<MemorizationRecord>,
    soft: Vec<MemorizationRecord>,
    perplexity: PerplexityReport,
}

fn fixture_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.corpus.synthetic.num_docs = 4000;
    cfg.plan.docs_per_level = 8;
    cfg.plan.docs_per_bucket_per_level = 2;
    cfg.model.order = 4;
    cfg.sweep.prefix_len = 32;
    cfg.sweep.bleu_prefix_len = 32;
    cfg.sweep.seeds = vec![seed];
    cfg.sweep.include_singletons = Some(true);
    cfg.sweep.singleton_sample = Some(16);
    cfg
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run_fixture(seed: u64, out: &Path) -> Result<FixtureRun, String> {
    let cfg = fixture_config(seed);
    pipeline::run_all(&cfg, out, jobs()).map_err(|e| e.to_string())?;
    let perplexity = serde_json::from_slice(
        &fs::read(out.join(pipeline::PERPLEXITY)).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    Ok(FixtureRun {
        records: pipeline::read_records(&out.join(pipeline::RECORDS)).map_err(|e| e.to_string())?,
        soft: pipeline::read_records(&out.join(pipeline::BLEU_RECORDS))
            .map_err(|e| e.to_string())?,
        perplexity,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (a, b) = (ranks(x), ranks(y));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn duplicity_trend(runs: &[FixtureRun]) -> Check {
    let all: Vec<_> = runs
        .iter()
        .flat_map(|r| r.records.iter().cloned())
        .collect();
    let series = aggregate_heatmap(&all, 1).column_series(Strategy::Greedy);
    let d: Vec<f64> = series.iter().map(|(b, _)| b.lo as f64).collect();
    let f: Vec<f64> = series.iter().map(|&(_, f)| f).collect();
    let rho = spearman(&d, &f);
    ensure(
        rho >= 0.8,
        format!("greedy rho {rho:.3} over {} duplicity levels", d.len()),
    )
}

fn mean_of(h: &HeatmapResult, bin: DuplicityBin, setting: Strategy) -> Option<f64> {
    h.cell(bin, setting).map(|c| c.mean)
}

fn top_p_direction(runs: &[FixtureRun]) -> Check {
    let all: Vec<_> = runs
        .iter()
        .flat_map(|r| r.records.iter().cloned())
        .collect();
    let h = aggregate_heatmap(&all, 5);
    let (low, high) = (
        Strategy::Nucleus { top_p: 0.2 },
        Strategy::Nucleus { top_p: 0.8 },
    );
    let mut failures = Vec::new();
    for &bin in &h.rows {
        let greedy = mean_of(&h, bin, Strategy::Greedy);
        let ordered = matches!(
            (mean_of(&h, bin, high), mean_of(&h, bin, low)),
            (Some(hi), Some(lo)) if hi <= lo + 0.05
        );
        let greedy_top =
            h.cols.iter().filter(|s| **s != Strategy::Greedy).all(
                |&s| matches!((greedy, mean_of(&h, bin, s)), (Some(g), Some(v)) if g >= v - 0.05),
            );
        if !(ordered && greedy_top) {
            failures.push(bin.label());
        }
    }
    ensure(
        failures.is_empty(),
        format!("{} bins of width 5, failing: {failures:?}", h.rows.len()),
    )
}

fn deterministic_steps(runs: &[FixtureRun]) -> Check {
    let key = |r: &MemorizationRecord| {
        (r.setting == Strategy::Nucleus { top_p: 0.2 }).then_some(r.duplicity)
    };
    let mut d1 = 0.0;
    let mut d25 = 0.0;
    for run in runs {
        let f = deterministic_fraction_from_records(&run.records, key);
        let frac = |d: u32| {
            f.get(&d)
                .and_then(|s| s.fraction())
                .ok_or(format!("no steps at duplicity {d}"))
        };
        d1 += frac(1)?;
        d25 += frac(25)?;
    }
    let n = runs.len() as f64;
    let (d1, d25) = (d1 / n, d25 / n);
    ensure(
        d25 > d1,
        format!("top_p 0.2: duplicity 25 {d25:.4} vs duplicity 1 {d1:.4}"),
    )
}

fn soft_direction(runs: &[FixtureRun]) -> Check {
    let soft: Vec<_> = runs.iter().flat_map(|r| r.soft.iter().cloned()).collect();
    let (one, high) = (DuplicityBin::new(1, 1), DuplicityBin::new(20, 30));
    let table = aggregate_bleu(&soft, &[one, high], BleuVariant::NonVerbatim);
    let mut parts = Vec::new();
    let mut ok = true;
    for &s in table.cols.iter().filter(|s| **s != Strategy::Greedy) {
        let (a, b) = (mean_of(&table, one, s), mean_of(&table, high, s));
        ok &= matches!((a, b), (Some(a), Some(b)) if b > a);
        parts.push(format!(
            "{} {:.3}->{:.3}",
            s.label(),
            a.unwrap_or(f64::NAN),
            b.unwrap_or(f64::NAN)
        ));
    }
    ensure(ok && !parts.is_empty(), parts.join(", "))
}

fn perplexity_sanity(runs: &[FixtureRun]) -> Check {
    let mut below_v = true;
    let (mut p1, mut p25, mut train) = (0.0, 0.0, 0.0);
    for run in runs {
        let p = &run.perplexity;
        let t = p.train.ok_or("no training perplexity")?;
        below_v &= t < p.vocab_size as f64;
        train += t;
        let at = |d: u32| {
            p.by_duplicity
                .iter()
                .find(|x| x.duplicity == d)
                .map(|x| x.mean_perplexity)
                .ok_or(format!("no documents at duplicity {d}"))
        };
        p1 += at(1)?;
        p25 += at(25)?;
    }
    let n = runs.len() as f64;
    let v = runs[0].perplexity.vocab_size;
    ensure(
        below_v && p25 / n < p1 / n,
        format!(
            "train {:.1} < V={v}; duplicity 25 {:.2} vs duplicity 1 {:.2}",
            train / n,
            p25 / n,
            p1 / n
        ),
    )
}

fn end_to_end_determinism(first: &Path, second: &Path) -> Check {
    run_fixture(0, second)?;
    let mut differing = Vec::new();
    for name in [
        pipeline::MANIFEST,
        pipeline::MODEL,
        pipeline::RECORDS,
        pipeline::AGGREGATE,
    ] {
        let a = fs::read(first.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = fs::read(second.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if a != b {
            differing.push(name);
        }
    }
    ensure(
        differing.is_empty(),
        format!("differing files: {differing:?}"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Check)> = vec![
        (1, "duplication plan exactness", plan_exactness()),
        (2, "nucleus truncation properties", nucleus_properties()),
        (3, "greedy convergence", greedy_convergence()),
        (4, "BLEU-4 oracle equivalence", bleu_oracle()),
    ];

    let dir = tempfile::tempdir().expect("temp dir");
    let start = Instant::now();
    let runs: Result<Vec<FixtureRun>, String> = (0..5)
        .map(|seed| run_fixture(seed, &dir.path().join(format!("seed{seed}"))))
        .collect();
    eprintln!(
        "fixture: 5 seeded runs in {:.1}s",
        start.elapsed().as_secs_f64()
    );
    let on_runs = |f: fn(&[FixtureRun]) -> Check| match &runs {
        Ok(r) => f(r),
        Err(e) => Err(format!("fixture failed: {e}")),
    };
    results.push((5, "duplicity trend under greedy", on_runs(duplicity_trend)));
    results.push((6, "top_p effect direction", on_runs(top_p_direction)));
    results.push((
        7,
        "deterministic steps by duplicity",
        on_runs(deterministic_steps),
    ));
    results.push((8, "soft memorization direction", on_runs(soft_direction)));
    results.push((9, "ramp-up and saturation detectors", detectors()));
    results.push((
        10,
        "end-to-end determinism",
        end_to_end_determinism(&dir.path().join("seed0"), &dir.path().join("again")),
    ));
    results.push((11, "perplexity sanity", on_runs(perplexity_sanity)));

    let mut failed = 0;
    for (id, name, check) in &results {
        match check {
            Ok(d) => println!("criterion {id:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
