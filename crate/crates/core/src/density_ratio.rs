//! Density ratios `p^I(x, y) / p^O(x, y)` learned by probabilistic
//! classification, and the conformal weights derived from them.
//!
//! Observational rows get label `z = 1`, interventional rows `z = 0`; the
//! estimated ratio is `p(z=0 | .) / p(z=1 | .)`. The class-prior factor
//! `p(z=1) / p(z=0)` is dropped because normalized weights are invariant to a
//! common scale. It is kept on the model ([`RatioModel::prior_odds`]) for
//! diagnostics that need the ratio on its true scale.
//!
//! Ratios inherit bounds from the classifier clamp `c`: the odds form lies in
//! `[c / (1 - c), (1 - c) / c]`.

use std::fmt;
use std::sync::Arc;

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::predictors::{fit_classifier, Classifier, ClassifierSpec};

type RatioFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

#[derive(Clone)]
enum Source {
    /// `(1 - p) / p` with `p` the clamped observational-class probability.
    Odds(Classifier),
    /// `1 / p` with `p` the clamped probability of the target treatment.
    InversePropensity(Classifier),
    Function(Arc<RatioFn>),
}

/// A fitted (or supplied) density-ratio function.
#[derive(Clone)]
pub struct RatioModel {
    source: Source,
    clamp_low: f64,
    clamp_high: f64,
    uses_outcome: bool,
    input_dim: usize,
    prior_odds: f64,
}

impl fmt::Debug for RatioModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.source {
            Source::Odds(_) => "odds",
            Source::InversePropensity(_) => "inverse_propensity",
            Source::Function(_) => "function",
        };
        f.debug_struct("RatioModel")
            .field("kind", &kind)
            .field("clamp_low", &self.clamp_low)
            .field("clamp_high", &self.clamp_high)
            .field("uses_outcome", &self.uses_outcome)
            .field("input_dim", &self.input_dim)
            .finish()
    }
}

fn stack(obs: &Matrix, intr: &Matrix) -> Result<(Matrix, Vec<bool>)> {
    if obs.nrows() == 0 {
        return Err(Error::Empty("observational sample"));
    }
    if intr.nrows() == 0 {
        return Err(Error::Empty("interventional sample"));
    }
    let x = obs.vstack(intr)?;
    let mut z = vec![true; obs.nrows()];
    z.extend(std::iter::repeat_n(false, intr.nrows()));
    Ok((x, z))
}

fn odds_bounds(clamp: f64) -> (f64, f64) {
    (clamp / (1.0 - clamp), (1.0 - clamp) / clamp)
}

/// Joint ratio over `(x, y)`.
pub fn fit_density_ratio(
    obs: &Dataset,
    intr: &Dataset,
    spec: &ClassifierSpec,
) -> Result<RatioModel> {
    if obs.dim() != intr.dim() {
        return Err(Error::DimensionMismatch {
            expected: obs.dim(),
            got: intr.dim(),
        });
    }
    let (x, z) = stack(&obs.joint(), &intr.joint())?;
    let classifier = fit_classifier(spec, &x, &z)?;
    let (clamp_low, clamp_high) = odds_bounds(spec.probability_clamp);
    Ok(RatioModel {
        source: Source::Odds(classifier),
        clamp_low,
        clamp_high,
        uses_outcome: true,
        input_dim: obs.dim(),
        prior_odds: obs.len() as f64 / intr.len() as f64,
    })
}

/// Covariate-only ratio `p^I(x) / p^O(x)`; the outcome argument of
/// [`RatioModel::ratio`] is ignored.
pub fn fit_covariate_ratio(
    obs_x: &Matrix,
    intr_x: &Matrix,
    spec: &ClassifierSpec,
) -> Result<RatioModel> {
    if obs_x.ncols() != intr_x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: obs_x.ncols(),
            got: intr_x.ncols(),
        });
    }
    let (x, z) = stack(obs_x, intr_x)?;
    let classifier = fit_classifier(spec, &x, &z)?;
    let (clamp_low, clamp_high) = odds_bounds(spec.probability_clamp);
    Ok(RatioModel {
        source: Source::Odds(classifier),
        clamp_low,
        clamp_high,
        uses_outcome: false,
        input_dim: obs_x.ncols(),
        prior_odds: obs_x.nrows() as f64 / intr_x.nrows() as f64,
    })
}

/// Propensity weight `1 / p(T = t | x)`, proportional to `p(x) / p(x | t)`.
pub fn fit_propensity_ratio(obs: &Dataset, t: u8, spec: &ClassifierSpec) -> Result<RatioModel> {
    let treatment = obs
        .treatment
        .as_ref()
        .ok_or_else(|| Error::Schema("propensity fit needs treatments".into()))?;
    let z: Vec<bool> = treatment.iter().map(|&v| v == t).collect();
    let classifier = fit_classifier(spec, &obs.x, &z)?;
    let c = spec.probability_clamp;
    let share = z.iter().filter(|&&v| v).count() as f64 / z.len() as f64;
    Ok(RatioModel {
        source: Source::InversePropensity(classifier),
        clamp_low: 1.0 / (1.0 - c),
        clamp_high: 1.0 / c,
        uses_outcome: false,
        input_dim: obs.dim(),
        prior_odds: share,
    })
}

impl RatioModel {
    /// Wraps an arbitrary ratio function, e.g. an analytic oracle.
    pub fn from_fn<F>(
        input_dim: usize,
        uses_outcome: bool,
        clamp_low: f64,
        clamp_high: f64,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        if !(clamp_low > 0.0 && clamp_low <= clamp_high) {
            return Err(Error::InvalidParameter(
                "ratio clamp bounds must satisfy 0 < low <= high".into(),
            ));
        }
        Ok(Self {
            source: Source::Function(Arc::new(f)),
            clamp_low,
            clamp_high,
            uses_outcome,
            input_dim,
            prior_odds: 1.0,
        })
    }

    /// The ratio identically equal to `value`.
    pub fn constant(input_dim: usize, value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidParameter(
                "constant ratio must be positive".into(),
            ));
        }
        Self::from_fn(input_dim, false, value, value, move |_, _| value)
    }

    /// Ratio from a fitted observational-vs-interventional classifier.
    pub fn from_classifier(classifier: Classifier, uses_outcome: bool) -> Result<Self> {
        let input_dim = if uses_outcome {
            classifier.input_dim() - 1
        } else {
            classifier.input_dim()
        };
        let (clamp_low, clamp_high) = odds_bounds(classifier.clamp());
        Ok(Self {
            source: Source::Odds(classifier),
            clamp_low,
            clamp_high,
            uses_outcome,
            input_dim,
            prior_odds: 1.0,
        })
    }

    pub fn uses_outcome(&self) -> bool {
        self.uses_outcome
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn clamp_bounds(&self) -> (f64, f64) {
        (self.clamp_low, self.clamp_high)
    }

    /// The dropped class-prior factor; `prior_odds * ratio` estimates the
    /// ratio on its true scale.
    pub fn prior_odds(&self) -> f64 {
        self.prior_odds
    }

    pub fn ratio(&self, x: &[f64], y: f64) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let raw = match &self.source {
            Source::Odds(c) | Source::InversePropensity(c) => {
                let p = if self.uses_outcome {
                    let mut joint = Vec::with_capacity(x.len() + 1);
                    joint.extend_from_slice(x);
                    joint.push(y);
                    c.predict_proba(&joint)?
                } else {
                    c.predict_proba(x)?
                };
                match self.source {
                    Source::Odds(_) => (1.0 - p) / p,
                    _ => 1.0 / p,
                }
            }
            Source::Function(f) => f(x, y),
        };
        if raw.is_nan() {
            return Err(Error::NonFinite("density ratio"));
        }
        Ok(raw.clamp(self.clamp_low, self.clamp_high))
    }

    pub fn calibrated_ratio(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.prior_odds * self.ratio(x, y)?)
    }

    /// Ratios for every row of `data`.
    pub fn ratios(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.x
            .rows()
            .zip(&data.y)
            .map(|(x, &y)| self.ratio(x, y))
            .collect()
    }
}

/// Conformal weights over `n` calibration points and one test point.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWeights {
    pub obs_weights: Vec<f64>,
    pub test_weight: f64,
}

fn check_ratios(r: &[f64]) -> Result<()> {
    if r.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidWeights(
            "density ratios must be positive and finite".into(),
        ))
    }
}

/// `p_i = r_i / (sum_j r_j + r_test)`, `p_test = r_test / (same)`.
pub fn normalized_weights(obs_ratios: &[f64], test_ratio: f64) -> Result<NormalizedWeights> {
    if obs_ratios.is_empty() {
        return Err(Error::Empty("observational ratios"));
    }
    check_ratios(obs_ratios)?;
    check_ratios(&[test_ratio])?;
    let denom = obs_ratios.iter().sum::<f64>() + test_ratio;
    Ok(NormalizedWeights {
        obs_weights: obs_ratios.iter().map(|r| r / denom).collect(),
        test_weight: test_ratio / denom,
    })
}

/// `(sum r)^2 / sum r^2`, always in `[1, n]`.
pub fn effective_sample_size(obs_ratios: &[f64]) -> Result<f64> {
    if obs_ratios.is_empty() {
        return Err(Error::Empty("observational ratios"));
    }
    check_ratios(obs_ratios)?;
    // Scale by the maximum to keep squares in range.
    let max = obs_ratios.iter().copied().fold(0.0, f64::max);
    let s: f64 = obs_ratios.iter().map(|r| r / max).sum();
    let s2: f64 = obs_ratios.iter().map(|r| (r / max).powi(2)).sum();
    Ok((s * s / s2).clamp(1.0, obs_ratios.len() as f64))
}
