//! Base learners: the regression model fitted inside every conformal
//! procedure, and the probabilistic classifier behind density ratios and
//! propensity scores.
//!
//! Fitted models are immutable and `Send + Sync`.

mod boosted;
mod features;
mod logistic;
mod ridge;

pub use boosted::BoostedTrees;
pub use features::FeatureMap;
pub use logistic::{fit_classifier, Classifier, ClassifierKind, ClassifierSpec};

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Ridge,
    BoostedStumps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorSpec {
    pub kind: RegressorKind,
    pub ridge_penalty: f64,
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub feature_map: FeatureMap,
}

impl Default for RegressorSpec {
    fn default() -> Self {
        Self {
            kind: RegressorKind::BoostedStumps,
            ridge_penalty: 0.0,
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 3,
            feature_map: FeatureMap::Identity,
        }
    }
}

impl RegressorSpec {
    pub fn ridge(penalty: f64) -> Self {
        Self {
            kind: RegressorKind::Ridge,
            ridge_penalty: penalty,
            ..Self::default()
        }
    }

    pub fn boosted(n_trees: usize, learning_rate: f64, max_depth: usize) -> Self {
        Self {
            kind: RegressorKind::BoostedStumps,
            n_trees,
            learning_rate,
            max_depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            RegressorKind::Ridge => {
                if !(self.ridge_penalty >= 0.0 && self.ridge_penalty.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "ridge_penalty must be finite and >= 0".into(),
                    ));
                }
            }
            RegressorKind::BoostedStumps => {
                if self.n_trees == 0 || self.max_depth == 0 {
                    return Err(Error::InvalidParameter(
                        "n_trees and max_depth must be positive".into(),
                    ));
                }
                if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
                    return Err(Error::InvalidParameter(
                        "learning_rate must lie in (0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Model {
    Linear { coef: Vec<f64>, intercept: f64 },
    Boosted(BoostedTrees),
}

/// A fitted regression function `R^d -> R`.
#[derive(Debug, Clone)]
pub struct Regressor {
    input_dim: usize,
    feature_map: FeatureMap,
    model: Model,
}

pub fn fit_regressor(spec: &RegressorSpec, x: &Matrix, y: &[f64]) -> Result<Regressor> {
    spec.validate()?;
    if x.nrows() == 0 {
        return Err(Error::Empty("regression data"));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    ensure_finite(x.as_slice(), "regression features")?;
    ensure_finite(y, "regression targets")?;
    let design = spec.feature_map.expand_matrix(x);
    let model = match spec.kind {
        RegressorKind::Ridge => {
            let (coef, intercept) = ridge::fit(&design, y, spec.ridge_penalty)?;
            Model::Linear { coef, intercept }
        }
        RegressorKind::BoostedStumps => Model::Boosted(BoostedTrees::fit(
            &design,
            y,
            spec.n_trees,
            spec.learning_rate,
            spec.max_depth,
        )),
    };
    Ok(Regressor {
        input_dim: x.ncols(),
        feature_map: spec.feature_map,
        model,
    })
}

impl Regressor {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let phi = self.feature_map.expand(x);
        Ok(match &self.model {
            Model::Linear { coef, intercept } => {
                intercept + coef.iter().zip(&phi).map(|(c, v)| c * v).sum::<f64>()
            }
            Model::Boosted(b) => b.predict(&phi),
        })
    }

    pub fn predict_many(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.rows().map(|r| self.predict(r)).collect()
    }

    /// Linear coefficients `(coef, intercept)` for ridge models.
    pub fn linear_parameters(&self) -> Option<(&[f64], f64)> {
        match &self.model {
            Model::Linear { coef, intercept } => Some((coef, *intercept)),
            Model::Boosted(_) => None,
        }
    }

    /// Per-stage training losses of a boosted model.
    pub fn stage_losses(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Boosted(b) => Some(b.stage_losses()),
            Model::Linear { .. } => None,
        }
    }
}
