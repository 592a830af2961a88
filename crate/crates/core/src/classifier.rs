//! From-scratch classifiers over [`SparseVector`] features: multinomial
//! logistic regression, multinomial and Gaussian naive Bayes, and a
//! cosine nearest-centroid rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureChannel, SparseVector};

const LR_MAX_EPOCHS: usize = 500;
const LR_LOSS_TOL: f64 = 1e-6;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    LogReg,
    NaiveBayes,
    GaussianNb,
    Centroid,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::LogReg => "logreg",
            Algorithm::NaiveBayes => "nb",
            Algorithm::GaussianNb => "gnb",
            Algorithm::Centroid => "centroid",
        }
    }

    /// Hyper-parameter grid searched by cross-validation.
    pub fn default_grid(self) -> Vec<HyperParams> {
        match self {
            Algorithm::LogReg => [1e-4, 1e-3, 1e-2, 1e-1]
                .map(|l2| HyperParams::LogReg { l2 })
                .to_vec(),
            Algorithm::NaiveBayes => [0.1, 0.5, 1.0]
                .map(|alpha| HyperParams::NaiveBayes { alpha })
                .to_vec(),
            Algorithm::GaussianNb => [1e-9, 1e-6, 1e-3]
                .map(|var_smoothing| HyperParams::GaussianNb { var_smoothing })
                .to_vec(),
            Algorithm::Centroid => vec![HyperParams::Centroid],
        }
    }

    pub fn supports(self, channel: FeatureChannel) -> bool {
        !matches!(
            (self, channel),
            (Algorithm::NaiveBayes, FeatureChannel::Embedding)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum HyperParams {
    LogReg { l2: f64 },
    NaiveBayes { alpha: f64 },
    GaussianNb { var_smoothing: f64 },
    Centroid,
}

impl HyperParams {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            HyperParams::LogReg { .. } => Algorithm::LogReg,
            HyperParams::NaiveBayes { .. } => Algorithm::NaiveBayes,
            HyperParams::GaussianNb { .. } => Algorithm::GaussianNb,
            HyperParams::Centroid => Algorithm::Centroid,
        }
    }

    pub fn fit(&self, x: &[SparseVector], y: &[usize], num_classes: usize) -> Result<Model> {
        check_training_set(x, y, num_classes)?;
        Ok(match *self {
            HyperParams::LogReg { l2 } => {
                Model::LogReg(LogisticRegression::fit(x, y, num_classes, l2))
            }
            HyperParams::NaiveBayes { alpha } => {
                Model::NaiveBayes(MultinomialNb::fit(x, y, num_classes, alpha)?)
            }
            HyperParams::GaussianNb { var_smoothing } => {
                Model::GaussianNb(GaussianNb::fit(x, y, num_classes, var_smoothing))
            }
            HyperParams::Centroid => Model::Centroid(NearestCentroid::fit(x, y, num_classes)),
        })
    }
}

fn check_training_set(x: &[SparseVector], y: &[usize], num_classes: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let dim = x[0].dim();
    if let Some(bad) = x.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            left: bad.dim(),
            right: dim,
        });
    }
    if let Some(&label) = y.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Validation(format!(
            "training label {label} outside [0, {num_classes})"
        )));
    }
    Ok(())
}

/// First index of the maximum; NaN never wins.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum Model {
    LogReg(LogisticRegression),
    NaiveBayes(MultinomialNb),
    GaussianNb(GaussianNb),
    Centroid(NearestCentroid),
}

impl Model {
    pub fn num_classes(&self) -> usize {
        match self {
            Model::LogReg(m) => m.num_classes,
            Model::NaiveBayes(m) => m.log_prior.len(),
            Model::GaussianNb(m) => m.log_prior.len(),
            Model::Centroid(m) => m.centroids.len(),
        }
    }

    /// Per-class decision scores; larger is better.
    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        match self {
            Model::LogReg(m) => m.logits(x),
            Model::NaiveBayes(m) => m.joint_log_likelihood(x),
            Model::GaussianNb(m) => m.joint_log_likelihood(x),
            Model::Centroid(m) => m.similarities(x),
        }
    }

    /// Highest-scoring class, ties to the lowest index.
    pub fn predict(&self, x: &SparseVector) -> usize {
        argmax(&self.scores(x))
    }
}

/// Multinomial softmax regression with an L2 penalty on the weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogisticRegression {
    num_classes: usize,
    dim: usize,
    l2: f64,
    /// Row-major `num_classes × dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    #[serde(skip)]
    loss_history: Vec<f64>,
}

// Loss history is a training diagnostic and not part of the model.
impl PartialEq for LogisticRegression {
    fn eq(&self, other: &Self) -> bool {
        self.num_classes == other.num_classes
            && self.dim == other.dim
            && self.l2 == other.l2
            && self.weights == other.weights
            && self.bias == other.bias
    }
}

impl LogisticRegression {
    /// Full-batch gradient descent with Armijo backtracking, so the
    /// objective never increases between epochs. Stops once an epoch
    /// lowers the loss by less than 1e-6, or after 500 epochs.
    pub fn fit(x: &[SparseVector], y: &[usize], num_classes: usize, l2: f64) -> Self {
        let dim = x.first().map_or(0, SparseVector::dim);
        let mut model = LogisticRegression {
            num_classes,
            dim,
            l2,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
            loss_history: Vec::new(),
        };
        let mut loss = model.loss(x, y);
        model.loss_history.push(loss);
        let mut step = 1.0;
        for _ in 0..LR_MAX_EPOCHS {
            let (grad_w, grad_b) = model.gradient(x, y);
            let grad_sq: f64 = grad_w.iter().chain(&grad_b).map(|g| g * g).sum();
            if grad_sq == 0.0 {
                break;
            }
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let candidate = model.stepped(&grad_w, &grad_b, step);
                let candidate_loss = candidate.loss(x, y);
                if candidate_loss <= loss - ARMIJO_C * step * grad_sq {
                    accepted = Some((candidate, candidate_loss));
                    break;
                }
                step *= 0.5;
            }
            let Some((next, next_loss)) = accepted else {
                break;
            };
            let improvement = loss - next_loss;
            let history = std::mem::take(&mut model.loss_history);
            model = next;
            model.loss_history = history;
            model.loss_history.push(next_loss);
            loss = next_loss;
            if improvement < LR_LOSS_TOL {
                break;
            }
            step *= 2.0;
        }
        model
    }

    fn stepped(&self, grad_w: &[f64], grad_b: &[f64], step: f64) -> Self {
        LogisticRegression {
            weights: self
                .weights
                .iter()
                .zip(grad_w)
                .map(|(w, g)| w - step * g)
                .collect(),
            bias: self
                .bias
                .iter()
                .zip(grad_b)
                .map(|(b, g)| b - step * g)
                .collect(),
            loss_history: Vec::new(),
            ..*self
        }
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| self.bias[c] + x.dot_dense(&self.weights[c * self.dim..(c + 1) * self.dim]))
            .collect()
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Mean cross-entropy plus `l2 / 2 · ‖W‖²` (bias unpenalized).
    pub fn loss(&self, x: &[SparseVector], y: &[usize]) -> f64 {
        let n = x.len() as f64;
        let data: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, &yi)| {
                let z = self.logits(xi);
                log_sum_exp(&z) - z[yi]
            })
            .sum();
        let penalty: f64 = self.weights.iter().map(|w| w * w).sum();
        data / n + 0.5 * self.l2 * penalty
    }

    fn gradient(&self, x: &[SparseVector], y: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len() as f64;
        let mut grad_w: Vec<f64> = self.weights.iter().map(|w| self.l2 * w).collect();
        let mut grad_b = vec![0.0; self.num_classes];
        for (xi, &yi) in x.iter().zip(y) {
            let mut p = self.predict_proba(xi);
            p[yi] -= 1.0;
            for (c, &pc) in p.iter().enumerate() {
                let residual = pc / n;
                grad_b[c] += residual;
                let row = &mut grad_w[c * self.dim..(c + 1) * self.dim];
                for (j, v) in xi.iter() {
                    row[j] += residual * v;
                }
            }
        }
        (grad_w, grad_b)
    }

    /// Objective value after initialization and after every epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn parameters(&self) -> (&[f64], &[f64]) {
        (&self.weights, &self.bias)
    }
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Multinomial naive Bayes with additive (Laplace) smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultinomialNb {
    alpha: f64,
    log_prior: Vec<f64>,
    /// Row-major `num_classes × dim` of `ln P(feature | class)`.
    log_prob: Vec<f64>,
    dim: usize,
}

impl MultinomialNb {
    pub fn fit(x: &[SparseVector], y: &[usize], num_classes: usize, alpha: f64) -> Result<Self> {
        if x.iter().any(|v| v.values().iter().any(|&val| val < 0.0)) {
            return Err(Error::ChannelUnsupported {
                algorithm: "multinomial naive Bayes".into(),
                channel: "negative-valued".into(),
            });
        }
        let dim = x.first().map_or(0, SparseVector::dim);
        let mut counts = vec![0.0; num_classes * dim];
        let mut class_n = vec![0usize; num_classes];
        for (xi, &yi) in x.iter().zip(y) {
            class_n[yi] += 1;
            for (j, v) in xi.iter() {
                counts[yi * dim + j] += v;
            }
        }
        let mut log_prob = vec![0.0; num_classes * dim];
        for c in 0..num_classes {
            let row = &counts[c * dim..(c + 1) * dim];
            let total: f64 = row.iter().sum::<f64>() + alpha * dim as f64;
            for j in 0..dim {
                log_prob[c * dim + j] = ((row[j] + alpha) / total).ln();
            }
        }
        let n = x.len() as f64;
        Ok(MultinomialNb {
            alpha,
            log_prior: class_n.iter().map(|&k| (k as f64 / n).ln()).collect(),
            log_prob,
            dim,
        })
    }

    pub fn feature_prob(&self, class: usize, feature: usize) -> f64 {
        self.log_prob[class * self.dim + feature].exp()
    }

    pub fn joint_log_likelihood(&self, x: &SparseVector) -> Vec<f64> {
        self.log_prior
            .iter()
            .enumerate()
            .map(|(c, lp)| lp + x.dot_dense(&self.log_prob[c * self.dim..(c + 1) * self.dim]))
            .collect()
    }
}

/// Gaussian naive Bayes for dense, real-valued features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    var_smoothing: f64,
    log_prior: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

impl GaussianNb {
    /// Variances get `var_smoothing · max feature variance` added.
    pub fn fit(x: &[SparseVector], y: &[usize], num_classes: usize, var_smoothing: f64) -> Self {
        let dim = x.first().map_or(0, SparseVector::dim);
        let dense: Vec<Vec<f64>> = x.iter().map(SparseVector::to_dense).collect();
        let mut class_n = vec![0usize; num_classes];
        let mut means = vec![vec![0.0; dim]; num_classes];
        for (xi, &yi) in dense.iter().zip(y) {
            class_n[yi] += 1;
            for (m, v) in means[yi].iter_mut().zip(xi) {
                *m += v;
            }
        }
        for (mean, &n) in means.iter_mut().zip(&class_n) {
            if n > 0 {
                mean.iter_mut().for_each(|m| *m /= n as f64);
            }
        }
        let mut vars = vec![vec![0.0; dim]; num_classes];
        for (xi, &yi) in dense.iter().zip(y) {
            for j in 0..dim {
                let d = xi[j] - means[yi][j];
                vars[yi][j] += d * d;
            }
        }
        for (var, &n) in vars.iter_mut().zip(&class_n) {
            if n > 0 {
                var.iter_mut().for_each(|v| *v /= n as f64);
            }
        }

        let total = dense.len() as f64;
        let mut overall_max: f64 = 0.0;
        for j in 0..dim {
            let mean = dense.iter().map(|r| r[j]).sum::<f64>() / total;
            let var = dense.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / total;
            overall_max = overall_max.max(var);
        }
        let epsilon = (var_smoothing * overall_max).max(f64::MIN_POSITIVE);
        vars.iter_mut().flatten().for_each(|v| *v += epsilon);

        GaussianNb {
            var_smoothing,
            log_prior: class_n.iter().map(|&k| (k as f64 / total).ln()).collect(),
            means,
            vars,
        }
    }

    pub fn joint_log_likelihood(&self, x: &SparseVector) -> Vec<f64> {
        let x = x.to_dense();
        self.log_prior
            .iter()
            .enumerate()
            .map(|(c, lp)| {
                let ll: f64 = x
                    .iter()
                    .zip(&self.means[c])
                    .zip(&self.vars[c])
                    .map(|((v, m), s)| {
                        -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (v - m).powi(2) / s)
                    })
                    .sum();
                lp + ll
            })
            .collect()
    }
}

/// Per-class mean vectors; predicts the class of maximum cosine similarity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearestCentroid {
    centroids: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl NearestCentroid {
    pub fn fit(x: &[SparseVector], y: &[usize], num_classes: usize) -> Self {
        let dim = x.first().map_or(0, SparseVector::dim);
        let mut centroids = vec![vec![0.0; dim]; num_classes];
        let mut class_n = vec![0usize; num_classes];
        for (xi, &yi) in x.iter().zip(y) {
            class_n[yi] += 1;
            for (j, v) in xi.iter() {
                centroids[yi][j] += v;
            }
        }
        for (centroid, &n) in centroids.iter_mut().zip(&class_n) {
            if n > 0 {
                centroid.iter_mut().for_each(|v| *v /= n as f64);
            }
        }
        let norms = centroids
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        NearestCentroid { centroids, norms }
    }

    pub fn similarities(&self, x: &SparseVector) -> Vec<f64> {
        let xn = x.norm();
        self.centroids
            .iter()
            .zip(&self.norms)
            .map(|(c, &cn)| {
                if xn == 0.0 || cn == 0.0 {
                    0.0
                } else {
                    x.dot_dense(c) / (xn * cn)
                }
            })
            .collect()
    }
}
