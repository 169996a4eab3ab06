//! Conformity scores and (weighted) empirical quantiles.
//!
//! All quantiles use the left-continuous inf-type convention: the result is
//! the smallest score whose cumulative mass reaches the requested level.
//! Mass placed at `+inf` is never reached by a finite score, so a level above
//! the finite mass yields `+inf`.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Slack applied when comparing cumulative mass against a level. Absorbs the
/// rounding in levels such as `(1 - alpha) * (1 + 1/n)`.
pub const LEVEL_SLACK: f64 = 1e-12;

/// Tolerance on the total mass of a weighted score distribution.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

pub fn absolute_residual_score(y: f64, y_hat: f64) -> Result<f64> {
    if !y.is_finite() || !y_hat.is_finite() {
        return Err(Error::NonFinite("conformity score input"));
    }
    Ok((y - y_hat).abs())
}

/// Outcome of a quantile query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileResult {
    /// A score from the distribution, or `+inf`.
    pub value: f64,
    pub level_used: f64,
}

impl QuantileResult {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

fn total_cmp(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Smallest score `s` with `#{scores <= s} / n >= level`, or `+inf` when the
/// level exceeds 1. Scores may contain `+inf` (treated as the largest value).
pub fn empirical_quantile(scores: &[f64], level: f64) -> Result<QuantileResult> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if !(level > 0.0) || level.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "quantile level must be positive, got {level}"
        )));
    }
    if scores.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
        return Err(Error::NonFinite("scores"));
    }
    let n = scores.len();
    let k = ((level - LEVEL_SLACK) * n as f64).ceil().max(1.0);
    if k > n as f64 {
        return Ok(QuantileResult {
            value: f64::INFINITY,
            level_used: level,
        });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(total_cmp);
    Ok(QuantileResult {
        value: sorted[k as usize - 1],
        level_used: level,
    })
}

/// Discrete distribution over conformity scores plus a point mass at `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    entries: Vec<(f64, f64)>,
    infinity_mass: f64,
}

impl ScoreDistribution {
    /// Validates `(score, weight)` entries: scores finite and non-negative,
    /// weights non-negative, total mass at most `1 + 1e-9`.
    pub fn new(entries: Vec<(f64, f64)>, infinity_mass: f64) -> Result<Self> {
        for &(s, w) in &entries {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "score {s} must be finite and non-negative"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeights(format!(
                    "weight {w} must be finite and non-negative"
                )));
            }
        }
        if !infinity_mass.is_finite() || !(0.0..=1.0 + WEIGHT_TOLERANCE).contains(&infinity_mass) {
            return Err(Error::InvalidWeights(format!(
                "infinity mass {infinity_mass} outside [0, 1]"
            )));
        }
        let total: f64 = entries.iter().map(|e| e.1).sum::<f64>() + infinity_mass;
        if total > 1.0 + WEIGHT_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "total mass {total} exceeds 1"
            )));
        }
        Ok(Self {
            entries,
            infinity_mass,
        })
    }

    pub fn from_parts(scores: &[f64], weights: &[f64], infinity_mass: f64) -> Result<Self> {
        if scores.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: weights.len(),
            });
        }
        Self::new(
            scores
                .iter()
                .copied()
                .zip(weights.iter().copied())
                .collect(),
            infinity_mass,
        )
    }

    /// Mass `1/n` on each score.
    pub fn uniform(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("scores"));
        }
        let w = 1.0 / scores.len() as f64;
        Self::new(scores.iter().map(|&s| (s, w)).collect(), 0.0)
    }

    /// Mass `1/(n+1)` on each score and on `+inf`.
    pub fn uniform_with_infinity(scores: &[f64]) -> Result<Self> {
        let w = 1.0 / (scores.len() + 1) as f64;
        Self::new(scores.iter().map(|&s| (s, w)).collect(), w)
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum::<f64>() + self.infinity_mass
    }
}

/// Smallest score whose cumulative weight reaches `level`; `+inf` when the
/// finite mass never does.
pub fn weighted_quantile(dist: &ScoreDistribution, level: f64) -> Result<QuantileResult> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "weighted quantile level must be in (0, 1], got {level}"
        )));
    }
    let mut sorted: Vec<(f64, f64)> = dist.entries.clone();
    sorted.sort_by(|a, b| total_cmp(&a.0, &b.0));
    let target = level - LEVEL_SLACK;
    let mut cum = 0.0;
    for (s, w) in sorted {
        cum += w;
        if cum >= target {
            return Ok(QuantileResult {
                value: s,
                level_used: level,
            });
        }
    }
    Ok(QuantileResult {
        value: f64::INFINITY,
        level_used: level,
    })
}

/// Calibration scores with unnormalized ratio weights, prepared for repeated
/// weighted-quantile queries that differ only in the test-point ratio.
///
/// The implied distribution puts `r_i / (S + r_test)` on score `i` and
/// `r_test / (S + r_test)` on `+inf`, with `S = sum(r_i)`.
#[derive(Debug, Clone)]
pub struct RatioWeightedScores {
    sorted_scores: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RatioWeightedScores {
    pub fn new(scores: &[f64], ratios: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("calibration scores"));
        }
        if scores.len() != ratios.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: ratios.len(),
            });
        }
        if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidWeights(
                "ratios must be positive and finite".into(),
            ));
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::NonFinite("calibration scores"));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| total_cmp(&scores[a], &scores[b]));
        let sorted_scores = order.iter().map(|&i| scores[i]).collect();
        let mut acc = 0.0;
        let cumulative = order
            .iter()
            .map(|&i| {
                acc += ratios[i];
                acc
            })
            .collect();
        Ok(Self {
            sorted_scores,
            cumulative,
        })
    }

    pub fn total_ratio(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    /// Weighted quantile at `level` given the test-point ratio.
    pub fn quantile(&self, test_ratio: f64, level: f64) -> QuantileResult {
        let denom = self.total_ratio() + test_ratio;
        let target = (level - LEVEL_SLACK) * denom;
        let idx = self.cumulative.partition_point(|&c| c < target);
        let value = self
            .sorted_scores
            .get(idx)
            .copied()
            .unwrap_or(f64::INFINITY);
        QuantileResult {
            value,
            level_used: level,
        }
    }
}
