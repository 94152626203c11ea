//! Acceptance run: one PASS/FAIL line per criterion, with its runtime and
//! limit. Exits non-zero if any criterion fails.

mod common;

use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cogchain::chain::{parse_chain, serialize_chain, ChainConfig, Stage, StressVerdict};
use cogchain::dataset::{export_alpaca, revalidate_export, sidecar_path, ExportOptions, LossMaskSpec};
use cogchain::demo::{demo_endpoint, run_demo, DemoInputs};
use cogchain::eval::{compute_metrics, EvalConfig, Evaluator};
use cogchain::gateway::{Cassette, EndpointConfig, Gateway};
use cogchain::par::Execution;
use cogchain::pipeline::{derive_run_id, AnnotateConfig, AnnotateError, RunManifest, RunStatus};
use cogchain::prompt::{PromptKind, SlotValues, TemplateSet};
use cogchain::quality::{filter, labeled_examples, train, TrainConfig};
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::parse_cases::{adversarial_cases, chain, check_adversarial};
use common::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn prompt_fidelity() -> Outcome {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden");
    let kinds = [PromptKind::CogChain, PromptKind::SelfReflect, PromptKind::AnswerReflect];
    for kind in kinds {
        let values = match kind {
            PromptKind::CogChain => SlotValues { examples: "----- Example -----\n...\n".into(), ..Default::default() },
            _ => SlotValues::default(),
        };
        let rendered = TemplateSet::builtin().template(kind).render(&values);
        let golden = std::fs::read_to_string(Path::new(dir).join(kind.file_name())).map_err(|e| e.to_string())?;
        if rendered != golden {
            let at = rendered.bytes().zip(golden.bytes()).take_while(|(a, b)| a == b).count();
            return Err(format!("{kind} differs from its golden fixture at byte {at}"));
        }
    }
    Ok(format!("{} templates byte-identical outside slots", kinds.len()))
}

fn parser_round_trip() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    runner
        .run(&chain(), |c| {
            let text = serialize_chain(&c);
            let back = parse_chain(&text).map_err(|e| proptest::test_runner::TestCaseError::fail(e.to_string()))?;
            proptest::prop_assert_eq!(back, c);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    ensure!(adversarial_cases().len() == 30, "expected 30 adversarial cases");
    let n = check_adversarial()?;
    Ok(format!("1000 random chains round-trip; {n}/30 adversarial strings as expected"))
}

fn conserved(m: &RunManifest) -> Result<(), String> {
    let s = &m.stages;
    let (g, r, a) = (&s.generate, &s.self_reflect, &s.answer_reflect);
    let pending =
        (g.verdict_incorrect + g.parse_failed - r.attempted) + (r.verdict_incorrect + r.parse_failed - a.attempted);
    let correct = g.verdict_correct + r.verdict_correct + a.verdict_correct;
    if correct + a.dropped + pending != g.attempted || m.pending != pending || m.total_correct != correct {
        return Err(format!("conservation broken at cursor {:?}", m.cursor));
    }
    m.check_conservation()
}

fn annotate_cfg(runs: &Path, workers: usize, batch: usize) -> AnnotateConfig {
    AnnotateConfig { workers, batch_size: batch, runs_dir: runs.to_path_buf(), ..Default::default() }
}

fn pipeline_conservation() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let posts = corpus(100);
    let cassette = Arc::new(Cassette::in_memory());
    let recorder =
        Gateway::recording(EndpointConfig::offline("mock-model"), Arc::new(scenario_transport()), cassette.clone())
            .map_err(|e| e.to_string())?;
    let mut commits = 0;
    let mut broken = None;
    let mut observer = |m: &RunManifest| {
        commits += 1;
        if let Err(e) = conserved(m) {
            broken.get_or_insert(e);
        }
        ControlFlow::Continue(())
    };
    let m = annotator(recorder, annotate_cfg(&root.path().join("rec"), 4, 8))
        .run(&posts, None, Some(&mut observer))
        .map_err(|e| e.to_string())?;
    if let Some(e) = broken {
        return Err(e);
    }
    let counts = (
        m.stages.generate.verdict_correct,
        m.stages.self_reflect.verdict_correct,
        m.stages.answer_reflect.verdict_correct,
        m.total_dropped,
    );
    ensure!(counts == (75, 4, 18, 3), "stage counts {counts:?}, want (75, 4, 18, 3)");
    ensure!(m.status == RunStatus::Complete && m.pending == 0, "run not complete");

    let mut snapshots = Vec::new();
    for name in ["replay-a", "replay-b"] {
        let gw = Gateway::replay(EndpointConfig::offline("mock-model"), cassette.clone()).map_err(|e| e.to_string())?;
        let runs = root.path().join(name);
        let a = annotator(gw, annotate_cfg(&runs, 3, 7));
        a.run(&posts, None, None).map_err(|e| e.to_string())?;
        ensure!(a.gateway().network_requests() == 0, "replay issued network requests");
        snapshots.push(snapshot_dir(&runs));
    }
    ensure!(snapshots[0] == snapshots[1], "replay outputs differ");
    ensure!(snapshots[0] == snapshot_dir(&root.path().join("rec")), "replay differs from the recording");
    Ok(format!("75/4/18/3 over {commits} commits, conserved at each; two replays byte-identical, 0 network requests"))
}

fn resume_correctness() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let posts = corpus(100);
    let total = scenario_requests(100);
    let clean = root.path().join("clean");
    let mut stages = Vec::new();
    let mut log = |m: &RunManifest| {
        stages.push(m.cursor.as_ref().map(|c| c.stage));
        ControlFlow::Continue(())
    };
    annotator(live_gateway(Arc::new(scenario_transport())), annotate_cfg(&clean, 2, 6))
        .run(&posts, None, Some(&mut log))
        .map_err(|e| e.to_string())?;
    let expected = snapshot_dir(&clean);

    // the first commit plus one commit in the middle of every stage
    let mut points = vec![1usize];
    for stage in Stage::ALL {
        let at: Vec<usize> = (0..stages.len()).filter(|&i| stages[i] == Some(stage)).collect();
        ensure!(!at.is_empty(), "no commit during {stage}");
        points.push(at[at.len() / 2] + 1);
    }
    let mut cuts = Vec::new();
    for cut in points {
        let runs = root.path().join(format!("cut{cut}"));
        let first = Arc::new(scenario_transport());
        let a = annotator(live_gateway(first.clone()), annotate_cfg(&runs, 2, 6));
        let mut commits = 0;
        let mut stop = |_: &RunManifest| {
            commits += 1;
            if commits == cut {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        };
        match a.run(&posts, None, Some(&mut stop)) {
            Err(AnnotateError::Interrupted) => {}
            other => return Err(format!("cut {cut}: expected an interruption, got {other:?}")),
        }
        let run_id = derive_run_id(&cogchain::dataset::corpus_fingerprint(&posts), &a.snapshot());
        let killed_at = RunManifest::load(&runs.join(&run_id).join("manifest.json")).map_err(|e| e.to_string())?;
        let second = Arc::new(scenario_transport());
        annotator(live_gateway(second.clone()), annotate_cfg(&runs, 2, 6))
            .resume(&posts, &run_id, None)
            .map_err(|e| e.to_string())?;
        ensure!(
            first.calls() + second.calls() == total,
            "cut {cut}: {} + {} requests, want {total}",
            first.calls(),
            second.calls()
        );
        ensure!(snapshot_dir(&runs) == expected, "cut {cut}: resumed run differs from the uninterrupted one");
        cuts.push(format!("{}@{}", killed_at.cursor.map(|c| c.stage.to_string()).unwrap_or_default(), second.calls()));
    }
    Ok(format!("{} kill points, resumed with exactly the remaining requests ({})", cuts.len(), cuts.join(", ")))
}

fn metrics_oracle() -> Outcome {
    use StressVerdict::{NonStressed, Stressed};
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let v = |b: bool| if b { Stressed } else { NonStressed };
    for case in 0..1000 {
        let n = rng.random_range(0..300);
        let pairs: Vec<(bool, bool)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        let pred: Vec<_> = pairs.iter().map(|p| v(p.0)).collect();
        let gold: Vec<_> = pairs.iter().map(|p| v(p.1)).collect();
        let (_, s) = compute_metrics(&pred, &gold).map_err(|e| e.to_string())?;
        let count = |p: bool, g: bool| pairs.iter().filter(|x| **x == (p, g)).count() as f64;
        let (tp, fp, fn_) = (count(true, true), count(true, false), count(false, true));
        let agree = pairs.iter().filter(|x| x.0 == x.1).count() as f64;
        let want = [
            if n == 0 { 0.0 } else { agree / n as f64 },
            if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) },
            if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) },
            if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) },
        ];
        for (got, want) in [s.accuracy, s.precision, s.recall, s.f1].into_iter().zip(want) {
            ensure!((got - want).abs() <= 1e-12, "vector {case}: {got} vs {want}");
        }
    }
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (p, g, k) in
        [(Stressed, Stressed, 3), (Stressed, NonStressed, 1), (NonStressed, Stressed, 1), (NonStressed, NonStressed, 5)]
    {
        pred.extend(std::iter::repeat_n(p, k));
        gold.extend(std::iter::repeat_n(g, k));
    }
    let (_, s) = compute_metrics(&pred, &gold).map_err(|e| e.to_string())?;
    let hand = (s.accuracy, s.precision, s.recall, s.f1);
    ensure!(hand == (0.8, 0.75, 0.75, 0.75), "hand case gave {hand:?}");
    Ok("1000 random vectors within 1e-12; hand case 0.8/0.75/0.75/0.75 exact".into())
}

fn quality_gate() -> Outcome {
    let (samples, labels) = marker_samples(200, 11);
    let examples = labeled_examples(&samples, &labels);
    ensure!(examples.len() == 200, "{} labelled examples", examples.len());
    let report = train(&examples, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let clf = &report.classifier;
    let whole = examples.iter().filter(|(t, q)| (clf.score_text(t) >= 0.5) == *q).count() as f64 / 200.0;
    ensure!(report.train_accuracy >= 0.95, "training accuracy {}", report.train_accuracy);
    ensure!(whole >= 0.95, "accuracy over all 200 samples {whole}");

    let mut previous: Option<Vec<String>> = None;
    for step in 1..=9 {
        let tau = step as f64 / 10.0;
        let r = filter(clf, &samples, tau, Execution::Parallel).map_err(|e| e.to_string())?;
        let ids: Vec<String> = r.admitted.iter().map(|s| s.sample.id().to_string()).collect();
        if let Some(prev) = &previous {
            ensure!(ids.iter().all(|id| prev.contains(id)), "admitted set grew at tau {tau}");
        }
        previous = Some(ids);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let mut shuffled = examples.clone();
        shuffled.shuffle(&mut rng);
        let c = train(&shuffled, &TrainConfig::default()).map_err(|e| e.to_string())?.classifier;
        ensure!(
            c.weights == clf.weights && c.bias.to_bits() == clf.bias.to_bits(),
            "permuted training changed weights"
        );
    }
    Ok(format!(
        "training accuracy {:.4} ({:.4} over all 200); monotone over tau 0.1..0.9; 3 permutations give identical weights",
        report.train_accuracy, whole
    ))
}

fn export_integrity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (samples, _) = marker_samples(120, 5);
    let a = dir.path().join("a/train.jsonl");
    let b = dir.path().join("b/train.jsonl");
    let opts = ExportOptions::default();
    export_alpaca(&samples, TemplateSet::builtin(), &opts, &a).map_err(|e| e.to_string())?;
    let mut reversed = samples.clone();
    reversed.reverse();
    export_alpaca(&reversed, TemplateSet::builtin(), &opts, &b).map_err(|e| e.to_string())?;
    let checked = revalidate_export(&a, &samples).map_err(|e| e.to_string())?;
    ensure!(checked == samples.len(), "revalidated {checked} of {}", samples.len());
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
    ensure!(read(&a)? == read(&b)?, "export is not byte-identical on rerun");
    ensure!(read(&sidecar_path(&a))? == read(&sidecar_path(&b))?, "sidecar is not byte-identical on rerun");
    let spec: LossMaskSpec = serde_json::from_slice(&read(&sidecar_path(&a))?).map_err(|e| e.to_string())?;
    ensure!(spec.supervised == "output", "supervised field {:?}", spec.supervised);
    ensure!(spec.masked == ["instruction", "input"], "masked fields {:?}", spec.masked);
    Ok(format!("{checked} records revalidated against gold; rerun byte-identical; sidecar supervises only output"))
}

fn ablation_grid() -> Outcome {
    let gw = live_gateway(Arc::new(step_sensitive()));
    let ev = Evaluator::new(&gw, TemplateSet::builtin(), EvalConfig { runs: 2, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let table = ev.ablation_suite(&corpus(40), &ChainConfig::ablation_rows()).map_err(|e| e.to_string())?;
    let codes: Vec<&str> = table.rows.iter().map(|r| r.chain.as_str()).collect();
    ensure!(codes == ["SERA", "SEA", "SRA", "SA", "A"], "rows {codes:?}");
    let full = &table.row("SERA").ok_or("no full-chain row")?.mean;
    let answer = &table.row("A").ok_or("no answer-only row")?.mean;
    for (name, f, a) in [
        ("accuracy", full.accuracy, answer.accuracy),
        ("precision", full.precision, answer.precision),
        ("recall", full.recall, answer.recall),
        ("f1", full.f1, answer.f1),
    ] {
        ensure!(f > a, "{name}: full chain {f} does not beat answer-only {a}");
    }
    Ok(format!("5-row grid; full chain F1 {:.4} > answer-only F1 {:.4} on every metric", full.f1, answer.f1))
}

fn replay_demo() -> Outcome {
    let fixtures = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/demo"));
    let inputs = DemoInputs::in_dir(fixtures);
    let expected = std::fs::read_to_string(fixtures.join("expected_report.txt")).map_err(|e| e.to_string())?;
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cassette = Arc::new(Cassette::load(&inputs.cassette).map_err(|e| e.to_string())?);
    let gw = Arc::new(Gateway::replay(demo_endpoint(), cassette).map_err(|e| e.to_string())?);
    let report = run_demo(&inputs, gw.clone(), work.path()).map_err(|e| e.to_string())?;
    ensure!(gw.network_requests() == 0, "demo touched the network");
    ensure!(report.text == expected, "report differs from the checked-in one:\n{}", report.text);
    Ok(format!("ingest, annotate, filter, export, eval offline; {} admitted; report matches fixture", report.admitted))
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("prompt-fidelity", Some(Duration::from_secs(1)), prompt_fidelity),
        ("parser-round-trip", Some(Duration::from_secs(5)), parser_round_trip),
        ("pipeline-conservation", Some(Duration::from_secs(30)), pipeline_conservation),
        ("resume-correctness", Some(Duration::from_secs(30)), resume_correctness),
        ("metrics-oracle", None, metrics_oracle),
        ("quality-gate", None, quality_gate),
        ("export-integrity", None, export_integrity),
        ("ablation-grid", None, ablation_grid),
        ("e2e-replay-demo", Some(Duration::from_secs(120)), replay_demo),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = started.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        let budget = limit.map_or(String::new(), |l| format!(" < {}s", l.as_secs()));
        match result {
            Ok(detail) => println!("PASS  {name:<22} {:>7.2}s{budget}  {detail}", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<22} {:>7.2}s{budget}  {why}", elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
