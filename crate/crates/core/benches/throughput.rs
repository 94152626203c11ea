//! Sequential vs parallel execution of the data-parallel paths.
//!
//!     cargo bench -p cogchain --bench throughput
//!
//! Build with `--no-default-features` to confirm both arms collapse to the
//! sequential path.

use std::sync::Arc;
use std::time::Duration;

use cogchain::chain::{AnnotatedSample, CognitionChain, Post, Split, Stage, StressVerdict};
use cogchain::dataset::stats;
use cogchain::gateway::mock::{chain_reply, FnTransport};
use cogchain::gateway::{EndpointConfig, Gateway};
use cogchain::par::Execution;
use cogchain::pipeline::{AnnotateConfig, Annotator};
use cogchain::prompt::TemplateSet;
use cogchain::quality::{filter, train, QualityClassifier, TrainConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 20] = [
    "rent", "deadline", "sleep", "exam", "friend", "garden", "coffee", "boss", "money", "walk", "doctor", "kids",
    "weekend", "message", "panic", "calm", "news", "family", "bills", "trip",
];

fn sentence(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn posts(n: usize) -> Vec<Post> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|i| {
            let len = rng.random_range(20..120);
            let label = if i % 2 == 0 { StressVerdict::Stressed } else { StressVerdict::NonStressed };
            Post::new(i.to_string(), sentence(&mut rng, len), label, "bench", Split::Train).unwrap()
        })
        .collect()
}

fn samples(n: usize) -> Vec<AnnotatedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    posts(n)
        .into_iter()
        .map(|p| {
            let marker = if p.gold_label == StressVerdict::Stressed { "grounded" } else { "generic" };
            let chain = CognitionChain::new(
                Some(&sentence(&mut rng, 8)),
                &format!("evaluated as harmful {}", sentence(&mut rng, 12)),
                &format!("{marker} {}", sentence(&mut rng, 12)),
                p.gold_label,
            )
            .unwrap();
            AnnotatedSample::new(p, chain, Stage::Generate, 1).unwrap()
        })
        .collect()
}

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn bench_stats(c: &mut Criterion) {
    let corpus = posts(20_000);
    let mut g = c.benchmark_group("stats");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| stats(&corpus, m))
        });
    }
    g.finish();
}

fn bench_quality(c: &mut Criterion) {
    let set = samples(2_000);
    let examples: Vec<(String, bool)> =
        set.iter().map(|s| (s.review_text(), s.post.gold_label == StressVerdict::Stressed)).collect();
    let clf: QualityClassifier =
        train(&examples, &TrainConfig { epochs: 20, ..Default::default() }).unwrap().classifier;

    let mut g = c.benchmark_group("quality-train");
    g.sample_size(10);
    for mode in MODES {
        let cfg = TrainConfig { epochs: 20, execution: mode, ..Default::default() };
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &cfg, |b, cfg| {
            b.iter(|| train(&examples, cfg).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("quality-filter");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| filter(&clf, &set, 0.5, m).unwrap())
        });
    }
    g.finish();
}

/// Stage-1 annotation against a backend with a fixed 2 ms latency; only the
/// worker count differs between the arms.
fn bench_pipeline(c: &mut Criterion) {
    let corpus: Vec<Post> = posts(64)
        .into_iter()
        .map(|mut p| {
            p.gold_label = StressVerdict::Stressed;
            p
        })
        .collect();
    let transport = Arc::new(FnTransport::new(|_, _| {
        std::thread::sleep(Duration::from_millis(2));
        Ok(chain_reply(StressVerdict::Stressed))
    }));
    let mut g = c.benchmark_group("annotate-stage1");
    g.sample_size(10);
    for workers in [1usize, 8] {
        let gw = Arc::new(Gateway::live(EndpointConfig::offline("bench"), transport.clone()).unwrap());
        let cfg = AnnotateConfig { workers, ..Default::default() };
        let annotator = Annotator::new(cfg, gw, TemplateSet::builtin().clone()).unwrap();
        let name = if workers == 1 { "Sequential" } else { "Parallel" };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| annotator.run_stage1(&corpus).unwrap()));
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().measurement_time(Duration::from_secs(3)).warm_up_time(Duration::from_millis(500));
    targets = bench_stats, bench_quality, bench_pipeline
}
criterion_main!(benches);
