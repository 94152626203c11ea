mod common;

use cogchain::par::Execution;
use cogchain::quality::{
    aggregate_labels, filter, labeled_examples, read_labels, train, FeatureSpec, QualityClassifier, QualityError,
    QualityLabel, QualityVerdict, Scorer, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;

use common::*;

fn marker_examples() -> Vec<(String, bool)> {
    let (samples, labels) = marker_samples(200, 11);
    labeled_examples(&samples, &labels)
}

#[test]
fn marker_set_is_learned() {
    let ex = marker_examples();
    assert_eq!(ex.len(), 200);
    let r = train(&ex, &TrainConfig::default()).unwrap();
    assert_eq!((r.train_size, r.holdout_size), (160, 40));
    assert!(r.train_accuracy >= 0.95, "train accuracy {}", r.train_accuracy);
    assert!(r.holdout_accuracy.unwrap() >= 0.95, "holdout accuracy {:?}", r.holdout_accuracy);
}

#[test]
fn qualified_scores_sit_above_unqualified() {
    let ex = marker_examples();
    let clf = train(&ex, &TrainConfig::default()).unwrap().classifier;
    let median = |q: bool| {
        let mut s: Vec<f64> = ex.iter().filter(|e| e.1 == q).map(|e| clf.score_text(&e.0)).collect();
        s.sort_by(f64::total_cmp);
        s[s.len() / 2]
    };
    assert!(median(true) > 0.5 && median(false) < 0.5, "{} {}", median(true), median(false));
}

#[test]
fn permuted_training_set_gives_identical_weights() {
    let ex = marker_examples();
    let base = train(&ex, &TrainConfig::default()).unwrap().classifier;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let mut shuffled = ex.clone();
        shuffled.shuffle(&mut rng);
        let c = train(&shuffled, &TrainConfig::default()).unwrap().classifier;
        assert_eq!(c.weights, base.weights);
        assert_eq!(c.bias.to_bits(), base.bias.to_bits());
    }
}

#[test]
fn sequential_and_parallel_training_agree_bitwise() {
    let ex = marker_examples();
    let seq = train(&ex, &TrainConfig { execution: Execution::Sequential, ..Default::default() }).unwrap();
    let par = train(&ex, &TrainConfig { execution: Execution::Parallel, ..Default::default() }).unwrap();
    assert_eq!(seq.classifier, par.classifier);
    assert_eq!(seq.classifier.to_json(), par.classifier.to_json());
}

#[test]
fn threshold_monotonicity() {
    let (samples, labels) = marker_samples(200, 11);
    let clf = train(&labeled_examples(&samples, &labels), &TrainConfig::default()).unwrap().classifier;
    let mut previous: Option<Vec<String>> = None;
    for step in 1..=9 {
        let tau = step as f64 / 10.0;
        let r = filter(&clf, &samples, tau, Execution::Parallel).unwrap();
        assert_eq!(r.admitted.len() + r.rejected.len(), samples.len());
        assert!(r.admitted.iter().all(|s| s.score >= tau) && r.rejected.iter().all(|s| s.score < tau));
        let ids: Vec<String> = r.admitted.iter().map(|s| s.sample.id().to_string()).collect();
        if let Some(prev) = &previous {
            assert!(ids.iter().all(|id| prev.contains(id)), "admitted set grew at tau {tau}");
        }
        previous = Some(ids);
    }
    let all = filter(&clf, &samples, 0.0, Execution::Sequential).unwrap();
    assert_eq!(all.admitted.len(), samples.len());
    let seq = filter(&clf, &samples, 0.5, Execution::Sequential).unwrap();
    let par = filter(&clf, &samples, 0.5, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn zero_classifier_and_whitespace() {
    let zero = QualityClassifier::zero(FeatureSpec::default());
    assert_eq!(zero.score_text("anything at all"), 0.5);
    let clf = train(&marker_examples(), &TrainConfig::default()).unwrap().classifier;
    let text = "1. Stimulus: rent\n2. Evaluation: harmful\n3. Reaction: grounded reaction\n4. Stress state: stressed";
    assert_eq!(clf.score_text(text), clf.score_text(&format!("{text}  \n\t")));
    assert_eq!(clf.score(text).unwrap(), clf.score_text(text));
}

#[test]
fn artifact_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let clf = train(&marker_examples(), &TrainConfig::default()).unwrap().classifier;
    let path = dir.path().join("clf.json");
    clf.save(&path).unwrap();
    let back = QualityClassifier::load(&path).unwrap();
    assert_eq!(back, clf);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["version", "feature_spec", "weights", "bias", "tau", "seed"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    std::fs::write(&path, "{\"version\": 99}").unwrap();
    assert!(matches!(QualityClassifier::load(&path), Err(QualityError::Artifact(_))));
}

#[test]
fn tau_must_be_open_interval_for_training() {
    for tau in [0.0, 1.0, -0.5, f64::NAN] {
        let cfg = TrainConfig { tau, ..Default::default() };
        assert!(matches!(train(&marker_examples(), &cfg), Err(QualityError::Config(_))), "tau {tau}");
    }
}

#[test]
fn label_file_round_trip_and_vote() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.jsonl");
    let labels = [
        QualityLabel { sample_id: "1".into(), verdict: QualityVerdict::Qualified, rater: "a".into(), timestamp: 5 },
        QualityLabel { sample_id: "1".into(), verdict: QualityVerdict::Unqualified, rater: "a".into(), timestamp: 9 },
        QualityLabel { sample_id: "1".into(), verdict: QualityVerdict::Qualified, rater: "b".into(), timestamp: 1 },
    ];
    let body: String = labels.iter().map(|l| serde_json::to_string(l).unwrap() + "\n").collect();
    std::fs::write(&path, body).unwrap();
    let read = read_labels(&path).unwrap();
    assert_eq!(read, labels);
    let agg = aggregate_labels(&read);
    // rater a's later label replaces the earlier one: one vote each way, a tie
    assert_eq!((agg["1"].qualified, agg["1"].unqualified, agg["1"].verdict), (1, 1, QualityVerdict::Unqualified));
    std::fs::write(&path, "{\"sample_id\": 1}\n").unwrap();
    let err = read_labels(&path).unwrap_err().to_string();
    assert!(err.contains("labels.jsonl:1"), "{err}");
}
