use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of full-batch gradient-descent logistic regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub l2: f64,
    pub iterations: usize,
    pub lr: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            l2: 1e-4,
            iterations: 500,
            lr: 0.1,
        }
    }
}

impl LogRegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::InvalidConfig(format!("l2 must be a nonnegative number, got {}", self.l2)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("classifier lr must be positive, got {}", self.lr)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("classifier iterations must be positive".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<'a> {
    pub x: &'a [f64],
    pub dim: usize,
}

impl Design<'_> {
    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.x.len() / self.dim
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BinaryModel {
    pub fn zeros(dim: usize) -> Self {
        BinaryModel {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    fn margin(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(sigmoid(self.margin(x)))
    }

    /// Mean log loss plus `l2/2 * |w|^2`; the bias is not penalised.
    pub fn loss(&self, design: &Design, targets: &[bool], l2: f64) -> f64 {
        let n = design.rows() as f64;
        let data: f64 = (0..design.rows())
            .map(|i| {
                let z = self.margin(design.row(i));
                if targets[i] {
                    softplus(-z)
                } else {
                    softplus(z)
                }
            })
            .sum();
        data / n + 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Gradient of the data term only, as `(d/dw, d/db)`.
    fn data_gradient(&self, design: &Design, targets: &[bool]) -> (Vec<f64>, f64) {
        let n = design.rows() as f64;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = 0.0;
        for i in 0..design.rows() {
            let x = design.row(i);
            let r = sigmoid(self.margin(x)) - f64::from(u8::from(targets[i]));
            for (g, v) in gw.iter_mut().zip(x) {
                *g += r * v;
            }
            gb += r;
        }
        gw.iter_mut().for_each(|g| *g /= n);
        (gw, gb / n)
    }

    /// Gradient of [`BinaryModel::loss`].
    pub fn gradient(&self, design: &Design, targets: &[bool], l2: f64) -> (Vec<f64>, f64) {
        let (mut gw, gb) = self.data_gradient(design, targets);
        for (g, w) in gw.iter_mut().zip(&self.weights) {
            *g += l2 * w;
        }
        (gw, gb)
    }

    /// One proximal gradient step: explicit on the log loss, implicit on the
    /// L2 penalty, so arbitrarily strong penalties stay stable.
    pub fn step(&mut self, design: &Design, targets: &[bool], params: &LogRegParams) {
        let (gw, gb) = self.data_gradient(design, targets);
        let shrink = 1.0 + params.lr * params.l2;
        for (w, g) in self.weights.iter_mut().zip(&gw) {
            *w = (*w - params.lr * g) / shrink;
        }
        self.bias -= params.lr * gb;
    }
}

/// Fits one binary model by `params.iterations` full-batch steps from zero.
pub fn fit_binary(design: &Design, targets: &[bool], params: &LogRegParams) -> BinaryModel {
    let mut model = BinaryModel::zeros(design.dim);
    for _ in 0..params.iterations {
        model.step(design, targets, params);
    }
    model
}

/// Binary problems hold a single model scoring class 0; multi-class problems
/// hold one one-vs-rest model per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub n_classes: usize,
    pub models: Vec<BinaryModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub class: usize,
}

/// First index of the maximum score.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

impl LogRegModel {
    pub fn dim(&self) -> usize {
        self.models[0].weights.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let scores = if self.n_classes == 2 {
            let s = self.models[0].score(x)?;
            vec![s, 1.0 - s]
        } else {
            self.models.iter().map(|m| m.score(x)).collect::<Result<_>>()?
        };
        Ok(Prediction {
            class: argmax(&scores),
            scores,
        })
    }
}

/// Trains on `labels` (class indices below `n_classes`).
pub fn train_logreg(design: &Design, labels: &[usize], n_classes: usize, params: &LogRegParams) -> Result<LogRegModel> {
    params.validate()?;
    if design.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: design.rows(),
            actual: labels.len(),
        });
    }
    let mut present = vec![false; n_classes];
    for &l in labels {
        *present.get_mut(l).ok_or_else(|| Error::Malformed(format!("class index {l} out of range")))? = true;
    }
    let distinct = present.iter().filter(|&&p| p).count();
    if distinct < 2 {
        return Err(Error::SingleClass(distinct));
    }
    let fit = |c: usize| {
        let targets: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        fit_binary(design, &targets, params)
    };
    let models = if n_classes == 2 {
        vec![fit(0)]
    } else {
        (0..n_classes).map(fit).collect()
    };
    Ok(LogRegModel { n_classes, models })
}
