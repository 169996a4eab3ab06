//! Coverage and width metrics.

use serde::{Deserialize, Serialize};

use crate::conformal::Interval;
use crate::error::{Error, Result};

/// Fraction of intervals containing their truth (endpoints inclusive).
pub fn coverage(intervals: &[Interval], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: intervals.len(),
            got: truths.len(),
        });
    }
    if intervals.is_empty() {
        return Err(Error::Empty("intervals"));
    }
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|(c, &y)| c.contains(y))
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthSummary {
    /// `+inf` whenever any interval is unbounded.
    pub mean: f64,
    /// Mean over bounded intervals only; `NaN` if there are none.
    pub finite_mean: f64,
    pub infinite_count: usize,
}

pub fn mean_width(intervals: &[Interval]) -> Result<WidthSummary> {
    if intervals.is_empty() {
        return Err(Error::Empty("intervals"));
    }
    let finite: Vec<f64> = intervals
        .iter()
        .map(Interval::width)
        .filter(|w| w.is_finite())
        .collect();
    let infinite_count = intervals.len() - finite.len();
    let finite_mean = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let mean = if infinite_count > 0 {
        f64::INFINITY
    } else {
        finite_mean
    };
    Ok(WidthSummary {
        mean,
        finite_mean,
        infinite_count,
    })
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if !mean.is_finite() {
            return Self {
                mean,
                std: f64::NAN,
            };
        }
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}
