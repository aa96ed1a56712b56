//! Logistic-regression evaluation of node embeddings.
//!
//! Features are standardised with training-split statistics, a binary or
//! one-vs-rest model is fit by full-batch gradient descent, and the test
//! split is scored with AUC, precision/recall/F1 and macro/micro F1.
//! Splits are stratified by class and repeated; each repetition draws from
//! its own random stream.

mod logreg;
mod metrics;

pub use logreg::{argmax, fit_binary, sigmoid, train_logreg, BinaryModel, Design, LogRegModel, LogRegParams, Prediction};
pub use metrics::{auc, f1_suite, F1Suite};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::NodeVectors;
use crate::error::{Error, Result};
use crate::graph::NodeToken;
use crate::ingest::Dataset;
use crate::rng::{stream, Domain};
use crate::task::{TargetPartition, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub id: String,
    pub features: Vec<f64>,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    rows: Vec<LabeledRow>,
    class_names: Vec<String>,
    dim: usize,
}

impl LabeledFeatures {
    pub fn new(class_names: Vec<String>, rows: Vec<LabeledRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("no labeled feature rows"));
        }
        let dim = rows[0].features.len();
        for r in &rows {
            if r.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.features.len(),
                });
            }
            if r.class >= class_names.len() {
                return Err(Error::Malformed(format!("row `{}` has class index {}", r.id, r.class)));
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Malformed(format!("row `{}` has a non-finite feature", r.id)));
            }
        }
        Ok(LabeledFeatures { rows, class_names, dim })
    }

    /// Collects the vectors of labeled target-partition entities. Entities
    /// without a vector are skipped; the second value counts them.
    pub fn from_vectors(vectors: &NodeVectors, dataset: &Dataset, task: Task) -> Result<(Self, usize)> {
        let spec = task.spec();
        let labeled: Vec<(String, String, usize)> = match spec.target_partition {
            TargetPartition::User => dataset
                .user_labels
                .keys()
                .filter_map(|u| {
                    let c = dataset.user_class(task, u)?;
                    Some((u.clone(), NodeToken::User(u.clone()).to_string(), c))
                })
                .collect(),
            TargetPartition::Location => dataset
                .location_labels
                .keys()
                .filter_map(|l| {
                    let c = dataset.location_class(l)?;
                    Some((l.clone(), NodeToken::Location(l.clone()).to_string(), c))
                })
                .collect(),
        };
        let mut missing = 0;
        let mut rows = Vec::with_capacity(labeled.len());
        for (id, token, class) in labeled {
            match vectors.index_of(&token) {
                Some(i) => rows.push(LabeledRow {
                    id,
                    features: vectors.row(i).iter().map(|&v| f64::from(v)).collect(),
                    class,
                }),
                None => missing += 1,
            }
        }
        Ok((LabeledFeatures::new(spec.classes, rows)?, missing))
    }

    pub fn rows(&self) -> &[LabeledRow] {
        &self.rows
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.class).collect()
    }

    /// Copy without the rows whose id is in `ids`.
    pub fn without(&self, ids: &std::collections::BTreeSet<String>) -> Result<Self> {
        let rows = self.rows.iter().filter(|r| !ids.contains(&r.id)).cloned().collect();
        LabeledFeatures::new(self.class_names.clone(), rows)
    }

    /// Copy with class labels permuted at random, destroying any signal.
    pub fn shuffled_labels(&self, seed: u64) -> Self {
        let mut labels = self.labels();
        labels.shuffle(&mut stream(seed, Domain::Split, 1 << 40));
        let rows = self
            .rows
            .iter()
            .zip(labels)
            .map(|(r, class)| LabeledRow { class, ..r.clone() })
            .collect();
        LabeledFeatures { rows, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub train_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub logreg: LogRegParams,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            train_fraction: 0.7,
            repetitions: 10,
            seed: 1,
            logreg: LogRegParams::default(),
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be positive".into()));
        }
        self.logreg.validate()
    }
}

/// Stratified split of row indices into (train, test). Each class with at
/// least two members contributes to both sides.
pub fn stratified_split(labels: &[usize], n_classes: usize, train_fraction: f64, seed: u64, repetition: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream(seed, Domain::Split, repetition as u64);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let mut k = (n as f64 * train_fraction).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = n;
        }
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Per-dimension centring and scaling fit on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0.0;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for x in rows {
            n += 1.0;
            for j in 0..dim {
                let d = x[j] - mean[j];
                mean[j] += d / n;
                m2[j] += d * (x[j] - mean[j]);
            }
        }
        let scale = m2
            .iter()
            .map(|&s| {
                let sd = if n > 0.0 { (s / n).sqrt() } else { 0.0 };
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionMetrics {
    pub repetition: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub auc: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanMetrics {
    pub auc: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub classes: Vec<String>,
    /// Class scored by AUC and binary P/R/F1.
    pub positive_class: String,
    pub per_repetition: Vec<RepetitionMetrics>,
    pub mean: MeanMetrics,
    /// Repetitions whose test split lacked a class, so AUC was skipped.
    pub skipped_auc: usize,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn run_repetition(features: &LabeledFeatures, protocol: &EvalProtocol, repetition: usize) -> Result<RepetitionMetrics> {
    let labels = features.labels();
    let k = features.n_classes();
    let dim = features.dim();
    let (train, test) = stratified_split(&labels, k, protocol.train_fraction, protocol.seed, repetition);
    if test.is_empty() {
        return Err(Error::Empty("test split is empty"));
    }
    let rows = features.rows();
    let standardizer = Standardizer::fit(train.iter().map(|&i| rows[i].features.as_slice()), dim);
    let mut x = Vec::with_capacity(train.len() * dim);
    for &i in &train {
        standardizer.apply(&rows[i].features, &mut x);
    }
    let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let model = train_logreg(&Design { x: &x, dim }, &y, k, &protocol.logreg)?;

    let mut predictions = Vec::with_capacity(test.len());
    let mut positive_scores = Vec::with_capacity(test.len());
    let mut z = Vec::with_capacity(dim);
    for &i in &test {
        z.clear();
        standardizer.apply(&rows[i].features, &mut z);
        let p = model.predict(&z)?;
        positive_scores.push(p.scores[0]);
        predictions.push(p.class);
    }
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let suite = f1_suite(&predictions, &truth, k, 0)?;
    let binary = k == 2;
    let auc = if binary {
        let is_pos: Vec<bool> = truth.iter().map(|&c| c == 0).collect();
        match auc(&positive_scores, &is_pos) {
            Ok(a) => Some(a),
            Err(Error::MissingClass) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(RepetitionMetrics {
        repetition,
        train_size: train.len(),
        test_size: test.len(),
        auc,
        precision: binary.then_some(suite.precision),
        recall: binary.then_some(suite.recall),
        f1: binary.then_some(suite.f1),
        macro_f1: suite.macro_f1,
        micro_f1: suite.micro_f1,
    })
}

/// Repeated stratified holdout evaluation. Repetitions run in parallel and
/// give the same result as a serial run.
pub fn evaluate(features: &LabeledFeatures, protocol: &EvalProtocol) -> Result<MetricsReport> {
    protocol.validate()?;
    let labels = features.labels();
    let mut present = vec![false; features.n_classes()];
    labels.iter().for_each(|&c| present[c] = true);
    let distinct = present.iter().filter(|&&p| p).count();
    if distinct < 2 {
        return Err(Error::SingleClass(distinct));
    }
    let per_repetition: Vec<RepetitionMetrics> = (0..protocol.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(features, protocol, r))
        .collect::<Result<_>>()?;
    let binary = features.n_classes() == 2;
    let skipped_auc = if binary {
        per_repetition.iter().filter(|r| r.auc.is_none()).count()
    } else {
        0
    };
    if skipped_auc > 0 {
        log::warn!("AUC skipped in {skipped_auc} repetition(s): test split lacked a class");
    }
    let n = per_repetition.len() as f64;
    let mean = MeanMetrics {
        auc: mean_of(per_repetition.iter().map(|r| r.auc)),
        precision: mean_of(per_repetition.iter().map(|r| r.precision)),
        recall: mean_of(per_repetition.iter().map(|r| r.recall)),
        f1: mean_of(per_repetition.iter().map(|r| r.f1)),
        macro_f1: per_repetition.iter().map(|r| r.macro_f1).sum::<f64>() / n,
        micro_f1: per_repetition.iter().map(|r| r.micro_f1).sum::<f64>() / n,
    };
    Ok(MetricsReport {
        classes: features.class_names().to_vec(),
        positive_class: features.class_names()[0].clone(),
        per_repetition,
        mean,
        skipped_auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;

    fn synthetic(n: usize, dim: usize, n_classes: usize, separation: f64, seed: u64) -> LabeledFeatures {
        let mut rng = stream(seed, Domain::Test, 0);
        let rows = (0..n)
            .map(|i| {
                let class = i % n_classes;
                let features = (0..dim)
                    .map(|j| {
                        let shift = if j == class { separation } else { 0.0 };
                        rng.random::<f64>() * 2.0 - 1.0 + shift
                    })
                    .collect();
                LabeledRow {
                    id: format!("e{i}"),
                    features,
                    class,
                }
            })
            .collect();
        let names = (0..n_classes).map(|c| format!("c{c}")).collect();
        LabeledFeatures::new(names, rows).unwrap()
    }

    #[test]
    fn rejects_invalid_rows() {
        let row = |f: Vec<f64>, class| LabeledRow {
            id: "x".into(),
            features: f,
            class,
        };
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(LabeledFeatures::new(names.clone(), vec![]).is_err());
        assert!(LabeledFeatures::new(names.clone(), vec![row(vec![1.0], 0), row(vec![1.0, 2.0], 1)]).is_err());
        assert!(LabeledFeatures::new(names.clone(), vec![row(vec![1.0], 2)]).is_err());
        assert!(LabeledFeatures::new(names, vec![row(vec![f64::NAN], 0)]).is_err());
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i % 10 == 0)).collect();
        let (train, test) = stratified_split(&labels, 2, 0.7, 5, 0);
        assert_eq!(train.len() + test.len(), 100);
        assert_eq!(train.iter().filter(|&&i| labels[i] == 1).count(), 7);
        assert_eq!(test.iter().filter(|&&i| labels[i] == 1).count(), 3);
        assert!(train.iter().all(|i| !test.contains(i)));
        assert_ne!(stratified_split(&labels, 2, 0.7, 5, 1), (train, test));
    }

    #[test]
    fn report_shape_and_determinism() {
        let f = synthetic(200, 4, 2, 1.0, 3);
        let p = EvalProtocol::default();
        let a = evaluate(&f, &p).unwrap();
        assert_eq!(a.per_repetition.len(), 10);
        assert_eq!(a.positive_class, "c0");
        assert_eq!(a, evaluate(&f, &p).unwrap());
        assert!(a.mean.auc.unwrap() > 0.8);
        for r in &a.per_repetition {
            for v in [r.auc, r.precision, r.recall, r.f1].into_iter().flatten().chain([r.macro_f1, r.micro_f1]) {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn multiclass_reports_f1_only() {
        let f = synthetic(300, 3, 3, 2.0, 4);
        let r = evaluate(&f, &EvalProtocol::default()).unwrap();
        assert!(r.mean.auc.is_none() && r.mean.f1.is_none());
        assert!(r.mean.micro_f1 > 0.7);
    }

    #[test]
    fn shuffled_labels_give_chance_auc() {
        let f = synthetic(400, 8, 2, 1.5, 9).shuffled_labels(2);
        let auc = evaluate(&f, &EvalProtocol::default()).unwrap().mean.auc.unwrap();
        assert!((auc - 0.5).abs() <= 0.05, "{auc}");
    }

    #[test]
    fn protocol_validation() {
        let f = synthetic(20, 2, 2, 1.0, 1);
        for p in [
            EvalProtocol { train_fraction: 1.0, ..Default::default() },
            EvalProtocol { repetitions: 0, ..Default::default() },
        ] {
            assert!(matches!(evaluate(&f, &p), Err(Error::InvalidConfig(_))));
        }
    }
}
