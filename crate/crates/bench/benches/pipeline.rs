use criterion::{criterion_group, criterion_main, Criterion};

use fts_core::cohort::{clinic_v1, sample_cohort};
use fts_core::eval::{dimwise_r2, unigram_r2, TokenFilter, DEFAULT_TRUNCATION};
use fts_core::federation::{generate_timelines, ClientSynthesis, Conditioning};
use fts_core::model::{train_local, Backend};
use fts_core::pht::{decode_pht1, encode_pht1, tokenize_cohort, tokenize_timeline, CodeScheme, IntervalLadder};
use fts_core::zeroshot::{cut_at_anchor, simulate_fphts, TaskKind};
use fts_core::{InferenceTask, TrainConfig};

fn pipeline(c: &mut Criterion) {
    let process = clinic_v1();
    let cohort = sample_cohort(&process, 2000, 1).unwrap();
    let (cfg, vocab, phts) =
        tokenize_cohort(&cohort.timelines, IntervalLadder::default(), CodeScheme::default(), 10).unwrap();
    let seqs: Vec<Vec<u32>> = phts.iter().map(|p| p.tokens.clone()).collect();
    let ngram = TrainConfig { backend: Backend::Ngram, order: 6, alpha: 0.1, ..TrainConfig::default() };
    let params = train_local(&seqs, &vocab, &ngram).unwrap();

    c.bench_function("sample_cohort_2000", |b| b.iter(|| sample_cohort(&process, 2000, 2).unwrap()));
    c.bench_function("tokenize_timelines_2000", |b| {
        b.iter(|| cohort.timelines.iter().map(|t| tokenize_timeline(t, &cfg, &vocab).unwrap()).count())
    });
    c.bench_function("pht1_round_trip", |b| {
        b.iter(|| decode_pht1(&encode_pht1(vocab.fingerprint(), &seqs)).unwrap())
    });
    c.bench_function("ngram_fit_order6", |b| b.iter(|| train_local(&seqs, &vocab, &ngram).unwrap()));

    let settings =
        ClientSynthesis { samples: 200, temperature: 1.0, max_new: 2048, conditioning: Conditioning::Unconditional };
    c.bench_function("ngram_generate_200", |b| {
        b.iter(|| generate_timelines(&params, &vocab, &cfg, &settings, 3).unwrap())
    });

    let task = InferenceTask {
        name: "icu_or_death".into(),
        anchor: "LAB".into(),
        kind: TaskKind::Binary { positive: vec!["ICU_ADMISSION".into(), "DEATH".into()] },
        horizon: 512,
        trajectories: 100,
        temperature: 1.0,
        label_window: None,
    };
    let resolved = task.resolve(&vocab, None).unwrap();
    let lab = vocab.id("LAB").unwrap();
    let prefix = seqs.iter().find_map(|s| cut_at_anchor(s, lab, &vocab)).unwrap().0;
    c.bench_function("simulate_100_trajectories", |b| b.iter(|| simulate_fphts(&params, &prefix, &resolved, 4).unwrap()));

    let (synthetic, _) = generate_timelines(&params, &vocab, &cfg, &ClientSynthesis { samples: 2000, ..settings }, 5).unwrap();
    let filter = TokenFilter::default();
    c.bench_function("fidelity_r2_2000", |b| {
        b.iter(|| {
            unigram_r2(&seqs, &synthetic, &vocab, &filter, DEFAULT_TRUNCATION).unwrap();
            dimwise_r2(&seqs, &synthetic, &vocab, &filter, DEFAULT_TRUNCATION).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = pipeline
}
criterion_main!(benches);
