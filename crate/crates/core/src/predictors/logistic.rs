//! L2-regularized logistic regression trained by full-batch gradient descent.
//!
//! Expanded features are standardized before training. Each step uses an
//! Armijo backtracking line search, so the training objective never
//! increases from one iteration to the next.

use serde::{Deserialize, Serialize};

use super::FeatureMap;
use crate::data::Matrix;
use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub feature_map: FeatureMap,
    pub max_iterations: usize,
    /// Initial step of the line search.
    pub step_size: f64,
    pub l2_penalty: f64,
    /// Predicted probabilities are clamped to `[clamp, 1 - clamp]`.
    pub probability_clamp: f64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Logistic,
            feature_map: FeatureMap::PolynomialDegree2,
            max_iterations: 1000,
            step_size: 1.0,
            l2_penalty: 1e-4,
            probability_clamp: 0.01,
        }
    }
}

impl ClassifierSpec {
    pub fn linear() -> Self {
        Self {
            feature_map: FeatureMap::Identity,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be positive".into(),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter("step_size must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::InvalidParameter(
                "l2_penalty must be non-negative".into(),
            ));
        }
        if !(self.probability_clamp > 0.0 && self.probability_clamp < 0.5) {
            return Err(Error::InvalidParameter(
                "probability_clamp must lie in (0, 0.5)".into(),
            ));
        }
        Ok(())
    }
}

/// Fitted binary classifier returning clamped class-1 probabilities.
#[derive(Debug, Clone)]
pub struct Classifier {
    input_dim: usize,
    feature_map: FeatureMap,
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
    clamp: f64,
    iterations: usize,
    loss_history: Vec<f64>,
}

const GRADIENT_TOLERANCE: f64 = 1e-8;

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

struct Problem<'a> {
    design: &'a [f64],
    p: usize,
    labels: &'a [f64],
    l2: f64,
}

impl Problem<'_> {
    fn loss(&self, w: &[f64], b: f64) -> f64 {
        let n = self.labels.len();
        let mut total = 0.0;
        for (row, &z) in self.design.chunks_exact(self.p).zip(self.labels) {
            let eta = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            total += softplus(eta) - z * eta;
        }
        total / n as f64 + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, w: &[f64], b: f64, gw: &mut [f64]) -> f64 {
        let n = self.labels.len() as f64;
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (row, &z) in self.design.chunks_exact(self.p).zip(self.labels) {
            let eta = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            let r = sigmoid(eta) - z;
            gb += r;
            for (g, a) in gw.iter_mut().zip(row) {
                *g += r * a;
            }
        }
        for (g, wi) in gw.iter_mut().zip(w) {
            *g = *g / n + self.l2 * wi;
        }
        gb / n
    }
}

/// Fits `P(z = 1 | x)`. Both classes must be present.
pub fn fit_classifier(spec: &ClassifierSpec, x: &Matrix, z: &[bool]) -> Result<Classifier> {
    spec.validate()?;
    if x.nrows() == 0 {
        return Err(Error::Empty("classification data"));
    }
    if x.nrows() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: z.len(),
        });
    }
    ensure_finite(x.as_slice(), "classification features")?;
    if z.iter().all(|&v| v) || z.iter().all(|&v| !v) {
        return Err(Error::SingleClass);
    }

    let expanded = spec.feature_map.expand_matrix(x);
    let n = expanded.nrows();
    let p = expanded.ncols();
    let mut mean = vec![0.0; p];
    for r in expanded.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; p];
    for r in expanded.rows() {
        for k in 0..p {
            scale[k] += (r[k] - mean[k]).powi(2);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / n as f64).sqrt();
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }
    let mut design = Vec::with_capacity(n * p);
    for r in expanded.rows() {
        design.extend(r.iter().enumerate().map(|(k, v)| (v - mean[k]) / scale[k]));
    }
    let labels: Vec<f64> = z.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let problem = Problem {
        design: &design,
        p,
        labels: &labels,
        l2: spec.l2_penalty,
    };

    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut gw = vec![0.0; p];
    let mut cand = vec![0.0; p];
    let mut loss = problem.loss(&w, b);
    let mut loss_history = vec![loss];
    let mut step = spec.step_size;
    let mut iterations = 0;
    while iterations < spec.max_iterations {
        let gb = problem.gradient(&w, b, &mut gw);
        let gnorm2 = gb * gb + gw.iter().map(|g| g * g).sum::<f64>();
        if gnorm2.sqrt() < GRADIENT_TOLERANCE {
            break;
        }
        let mut accepted = false;
        while step > 1e-14 {
            for k in 0..p {
                cand[k] = w[k] - step * gw[k];
            }
            let cand_b = b - step * gb;
            let cand_loss = problem.loss(&cand, cand_b);
            if cand_loss <= loss - 1e-4 * step * gnorm2 {
                w.copy_from_slice(&cand);
                b = cand_b;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if iterations % 10 == 0 {
            loss_history.push(loss);
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(spec.step_size * 64.0);
    }

    Ok(Classifier {
        input_dim: x.ncols(),
        feature_map: spec.feature_map,
        mean,
        scale,
        weights: w,
        bias: b,
        clamp: spec.probability_clamp,
        iterations,
        loss_history,
    })
}

impl Classifier {
    /// Builds a classifier directly from linear parameters on the expanded
    /// (unstandardized) features.
    pub fn from_parameters(
        input_dim: usize,
        feature_map: FeatureMap,
        weights: Vec<f64>,
        bias: f64,
        clamp: f64,
    ) -> Result<Self> {
        let p = feature_map.output_dim(input_dim);
        if weights.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: weights.len(),
            });
        }
        if !(clamp > 0.0 && clamp < 0.5) {
            return Err(Error::InvalidParameter(
                "probability_clamp must lie in (0, 0.5)".into(),
            ));
        }
        Ok(Self {
            input_dim,
            feature_map,
            mean: vec![0.0; p],
            scale: vec![1.0; p],
            weights,
            bias,
            clamp,
            iterations: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    fn logit(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let phi = self.feature_map.expand(x);
        let eta = self.bias
            + phi
                .iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((v, m), s), w)| (v - m) / s * w)
                .sum::<f64>();
        Ok(eta)
    }

    /// Unclamped class-1 probability.
    pub fn raw_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    /// Class-1 probability clamped to `[clamp, 1 - clamp]`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let p = self.raw_proba(x)?;
        Ok(if p.is_nan() {
            0.5
        } else {
            p.clamp(self.clamp, 1.0 - self.clamp)
        })
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Training objective at iteration 0 and every 10th iteration after.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }
}
