use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureSpec, SparseVec};
use super::QualityError;
use crate::par::{self, Execution};

pub const ARTIFACT_VERSION: u32 = 1;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression over hashed n-gram features.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityClassifier {
    pub feature_spec: FeatureSpec,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub tau: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Artifact {
    version: u32,
    feature_spec: FeatureSpec,
    /// Little-endian f64 values, base64-encoded.
    weights: String,
    bias: f64,
    tau: f64,
    seed: u64,
}

impl QualityClassifier {
    /// A classifier that scores every input 0.5.
    pub fn zero(feature_spec: FeatureSpec) -> Self {
        let weights = vec![0.0; feature_spec.dim()];
        QualityClassifier { feature_spec, weights, bias: 0.0, tau: 0.5, seed: 0 }
    }

    pub fn score_text(&self, text: &str) -> f64 {
        self.score_features(&self.feature_spec.extract(text))
    }

    pub(crate) fn score_features(&self, x: &SparseVec) -> f64 {
        sigmoid(x.dot(&self.weights) + self.bias)
    }

    pub fn to_json(&self) -> String {
        let mut bytes = Vec::with_capacity(self.weights.len() * 8);
        for w in &self.weights {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        let artifact = Artifact {
            version: ARTIFACT_VERSION,
            feature_spec: self.feature_spec.clone(),
            weights: BASE64.encode(bytes),
            bias: self.bias,
            tau: self.tau,
            seed: self.seed,
        };
        serde_json::to_string_pretty(&artifact).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, QualityError> {
        let bad = |m: String| QualityError::Artifact(m);
        let a: Artifact = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if a.version != ARTIFACT_VERSION {
            return Err(bad(format!("unsupported artifact version {}", a.version)));
        }
        a.feature_spec.validate().map_err(bad)?;
        let bytes = BASE64.decode(a.weights.as_bytes()).map_err(|e| bad(e.to_string()))?;
        if bytes.len() != a.feature_spec.dim() * 8 {
            return Err(bad(format!(
                "{} weight bytes for a {}-dimensional feature space",
                bytes.len(),
                a.feature_spec.dim()
            )));
        }
        let weights = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if !(a.tau > 0.0 && a.tau < 1.0) {
            return Err(bad(format!("tau {} outside (0, 1)", a.tau)));
        }
        Ok(QualityClassifier { feature_spec: a.feature_spec, weights, bias: a.bias, tau: a.tau, seed: a.seed })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), QualityError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|source| QualityError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, QualityError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| QualityError::Io { path: path.display().to_string(), source })?;
        QualityClassifier::from_json(&text)
    }
}

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub feature_spec: FeatureSpec,
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    /// Fraction of each class held out for evaluation.
    pub holdout: f64,
    pub seed: u64,
    pub tau: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            feature_spec: FeatureSpec::default(),
            learning_rate: 1.0,
            l2: 1e-4,
            epochs: 300,
            holdout: 0.2,
            seed: 0,
            tau: 0.5,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub classifier: QualityClassifier,
    pub train_size: usize,
    pub holdout_size: usize,
    pub train_accuracy: f64,
    /// `None` when nothing was held out.
    pub holdout_accuracy: Option<f64>,
}

fn accuracy(clf: &QualityClassifier, xs: &[(SparseVec, bool)]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let hits = xs.iter().filter(|(x, y)| (clf.score_features(x) >= clf.tau) == *y).count();
    hits as f64 / xs.len() as f64
}

/// Fits the classifier on `(text, qualified)` pairs.
///
/// Input order is irrelevant: examples are put in a canonical order before
/// the seeded stratified split and before every gradient sum, so a permuted
/// copy of the same set yields identical weights.
pub fn train(examples: &[(String, bool)], cfg: &TrainConfig) -> Result<TrainReport, QualityError> {
    cfg.feature_spec.validate().map_err(QualityError::Config)?;
    if !(cfg.tau > 0.0 && cfg.tau < 1.0) {
        return Err(QualityError::Config(format!("tau {} outside (0, 1)", cfg.tau)));
    }
    if !(0.0..1.0).contains(&cfg.holdout) {
        return Err(QualityError::Config(format!("holdout {} outside [0, 1)", cfg.holdout)));
    }
    let positives = examples.iter().filter(|e| e.1).count();
    let negatives = examples.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(QualityError::InsufficientClasses { qualified: positives, unqualified: negatives });
    }

    let mut canonical: Vec<&(String, bool)> = examples.iter().collect();
    canonical.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train_set = Vec::new();
    let mut holdout_set = Vec::new();
    for class in [true, false] {
        let mut members: Vec<&(String, bool)> = canonical.iter().copied().filter(|e| e.1 == class).collect();
        members.shuffle(&mut rng);
        let held = ((members.len() as f64) * cfg.holdout).round() as usize;
        let held = held.min(members.len() - 1);
        holdout_set.extend_from_slice(&members[..held]);
        train_set.extend_from_slice(&members[held..]);
    }
    train_set.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let spec = &cfg.feature_spec;
    let featurize = |set: &[&(String, bool)]| -> Vec<(SparseVec, bool)> {
        par::map(cfg.execution, set, |(text, y)| (spec.extract(text), *y))
    };
    let train_x = featurize(&train_set);
    let holdout_x = featurize(&holdout_set);

    let mut active: Vec<u32> = train_x.iter().flat_map(|(x, _)| x.entries.iter().map(|e| e.0)).collect();
    active.sort_unstable();
    active.dedup();

    let mut clf = QualityClassifier::zero(spec.clone());
    clf.tau = cfg.tau;
    clf.seed = cfg.seed;
    let n = train_x.len() as f64;
    let mut grad = vec![0.0; spec.dim()];
    for _ in 0..cfg.epochs {
        let residuals = par::map(cfg.execution, &train_x, |(x, y)| clf.score_features(x) - if *y { 1.0 } else { 0.0 });
        let mut grad_bias = 0.0;
        for ((x, _), r) in train_x.iter().zip(&residuals) {
            grad_bias += r;
            for &(i, v) in &x.entries {
                grad[i as usize] += r * v;
            }
        }
        for &i in &active {
            let i = i as usize;
            let g = grad[i] / n + cfg.l2 * clf.weights[i];
            clf.weights[i] -= cfg.learning_rate * g;
            grad[i] = 0.0;
        }
        clf.bias -= cfg.learning_rate * grad_bias / n;
    }

    Ok(TrainReport {
        train_size: train_x.len(),
        holdout_size: holdout_x.len(),
        train_accuracy: accuracy(&clf, &train_x),
        holdout_accuracy: (!holdout_x.is_empty()).then(|| accuracy(&clf, &holdout_x)),
        classifier: clf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> FeatureSpec {
        FeatureSpec { dim_log2: 12, ..Default::default() }
    }

    #[test]
    fn zero_classifier_scores_half() {
        let c = QualityClassifier::zero(small_spec());
        assert_eq!(c.score_text("anything"), 0.5);
        assert_eq!(c.score_text(""), 0.5);
    }

    #[test]
    fn artifact_round_trip_is_exact() {
        let mut c = QualityClassifier::zero(small_spec());
        c.weights[3] = -0.1;
        c.weights[4000] = 1.0 / 3.0;
        c.bias = 0.25;
        c.tau = 0.7;
        c.seed = 9;
        let back = QualityClassifier::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn single_class_rejected() {
        let ex: Vec<(String, bool)> = (0..5).map(|i| (format!("t{i}"), true)).collect();
        assert!(matches!(
            train(&ex, &TrainConfig::default()),
            Err(QualityError::InsufficientClasses { qualified: 5, unqualified: 0 })
        ));
    }

    #[test]
    fn conflicting_duplicate_cannot_be_fit() {
        let mut ex: Vec<(String, bool)> = (0..4).map(|i| (format!("good sample {i}"), true)).collect();
        ex.extend((0..4).map(|i| (format!("bad sample {i}"), false)));
        ex.push(("same text".into(), true));
        ex.push(("same text".into(), false));
        let cfg = TrainConfig { feature_spec: small_spec(), holdout: 0.0, ..Default::default() };
        let r = train(&ex, &cfg).unwrap();
        assert!(r.train_accuracy < 1.0);
        assert!(r.holdout_accuracy.is_none());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(1000.0) <= 1.0 && sigmoid(-1000.0) >= 0.0);
        assert!(sigmoid(-1000.0).is_finite());
    }
}
