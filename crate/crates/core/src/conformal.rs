//! Interval construction.
//!
//! - [`scp_interval`] / [`SplitConformal`]: split conformal with the
//!   `(1 - alpha)(1 + 1/|cal|)` level.
//! - [`naive_interval`]: split conformal on interventional data only.
//! - [`tcp_interval`] and [`wtcp_dr_interval`]: transductive (weighted)
//!   conformal over a grid of hypothesized outcomes.
//! - [`wscp_dr_first_stage`], [`wscp_dr_inexact`], [`wscp_dr_exact`]: the
//!   two-stage weighted split procedure.
//! - [`wcp_propensity_interval`] / [`WeightedSplitConformal`]: weighted split
//!   conformal with covariate-only weights (the propensity baseline).
//!
//! Weighted methods put mass `r_i / (sum_j r_j + r_test)` on calibration
//! score `i` and the remaining `r_test / (...)` at `+inf`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::density_ratio::{fit_propensity_ratio, RatioModel};
use crate::error::{Error, Result};
use crate::predictors::{fit_regressor, ClassifierSpec, Regressor, RegressorKind, RegressorSpec};
use crate::stats::{empirical_quantile, QuantileResult, RatioWeightedScores};

/// Closed interval `[lower, upper]`, possibly half- or fully infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower == f64::INFINITY || upper == f64::NEG_INFINITY
        {
            return Err(Error::InvalidParameter(format!(
                "invalid interval bounds [{lower}, {upper}]"
            )));
        }
        if lower > upper {
            return Err(Error::InvalidParameter(format!(
                "interval lower {lower} exceeds upper {upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    /// `[center - half_width, center + half_width]`; an infinite half-width
    /// gives the whole line.
    pub fn symmetric(center: f64, half_width: f64) -> Self {
        if half_width.is_infinite() {
            return Self::unbounded();
        }
        Self {
            lower: center - half_width,
            upper: center + half_width,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Split-conformal level `(1 - alpha)(1 + 1/n_cal)`.
pub fn split_level(alpha: f64, n_cal: usize) -> f64 {
    (1.0 - alpha) * (1.0 + 1.0 / n_cal as f64)
}

fn residuals(model: &Regressor, data: &Dataset) -> Result<Vec<f64>> {
    data.x
        .rows()
        .zip(&data.y)
        .map(|(x, &y)| Ok((y - model.predict(x)?).abs()))
        .collect()
}

/// A fitted split-conformal predictor.
#[derive(Debug, Clone)]
pub struct SplitConformal {
    model: Regressor,
    quantile: QuantileResult,
}

impl SplitConformal {
    pub fn fit(train: &Dataset, cal: &Dataset, alpha: f64, spec: &RegressorSpec) -> Result<Self> {
        check_alpha(alpha)?;
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        if cal.is_empty() {
            return Err(Error::Empty("calibration split"));
        }
        let model = fit_regressor(spec, &train.x, &train.y)?;
        let scores = residuals(&model, cal)?;
        let quantile = empirical_quantile(&scores, split_level(alpha, cal.len()))?;
        Ok(Self { model, quantile })
    }

    pub fn quantile(&self) -> f64 {
        self.quantile.value
    }

    pub fn model(&self) -> &Regressor {
        &self.model
    }

    pub fn interval(&self, x: &[f64]) -> Result<Interval> {
        Ok(Interval::symmetric(
            self.model.predict(x)?,
            self.quantile.value,
        ))
    }
}

pub fn scp_interval(
    train: &Dataset,
    cal: &Dataset,
    x_test: &[f64],
    alpha: f64,
    spec: &RegressorSpec,
) -> Result<Interval> {
    SplitConformal::fit(train, cal, alpha, spec)?.interval(x_test)
}

/// First `floor(n * fraction)` rows for training, the rest for calibration.
pub fn split_at_fraction(data: &Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    if data.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples to split, got {}",
            data.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let k = (data.len() as f64 * fraction).floor() as usize;
    if k == 0 || k == data.len() {
        return Err(Error::InvalidParameter("split leaves an empty fold".into()));
    }
    Ok((data.slice(0..k), data.slice(k..data.len())))
}

/// Split conformal on the interventional sample alone.
pub fn naive_interval(
    intr: &Dataset,
    x_test: &[f64],
    alpha: f64,
    spec: &RegressorSpec,
    split_fraction: f64,
) -> Result<Interval> {
    let (train, cal) = split_at_fraction(intr, split_fraction)?;
    scp_interval(&train, &cal, x_test, alpha, spec)
}

/// Evenly spaced hypothesized outcomes `lo, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

pub const DEFAULT_GRID_POINTS: usize = 200;
pub const DEFAULT_GRID_MARGIN: f64 = 0.25;

impl YGrid {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "grid needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidParameter(
                "grid needs at least 2 points".into(),
            ));
        }
        Ok(Self { lo, hi, n_points })
    }

    /// `[min - margin * range, max + margin * range]` over `values`.
    pub fn around(values: &[f64], margin: f64, n_points: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("grid reference outcomes"));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = if max > min { max - min } else { 1.0 };
        Self::new(min - margin * range, max + margin * range, n_points)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.n_points)
            .map(|i| {
                if i + 1 == self.n_points {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }

    /// Same resolution, span scaled by `factor` about the center.
    pub fn widened(&self, factor: f64) -> Self {
        let center = 0.5 * (self.lo + self.hi);
        let half = 0.5 * (self.hi - self.lo) * factor;
        let intervals = ((self.n_points - 1) as f64 * factor).round().max(1.0) as usize;
        Self {
            lo: center - half,
            hi: center + half,
            n_points: intervals + 1,
        }
    }
}

/// Accepted grid values of a transductive procedure and their hull.
#[derive(Debug, Clone, PartialEq)]
pub struct TransductiveResult {
    /// `None` when no grid point was accepted.
    pub hull: Option<Interval>,
    pub accepted_grid: Vec<f64>,
    /// An endpoint of the grid was accepted, so the true set may extend
    /// beyond the grid.
    pub touches_boundary: bool,
}

impl TransductiveResult {
    fn from_accepted(grid: &[f64], accepted: Vec<f64>) -> Self {
        let hull = match (accepted.first(), accepted.last()) {
            (Some(&lo), Some(&hi)) => Some(Interval {
                lower: lo,
                upper: hi,
            }),
            _ => None,
        };
        let touches_boundary = accepted.first() == grid.first() || accepted.last() == grid.last();
        Self {
            hull,
            accepted_grid: accepted,
            touches_boundary: hull.is_some() && touches_boundary,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.hull.is_none()
    }
}

/// Refits for every hypothesized outcome share the observational part of the
/// problem; ridge models are solved once per test point because the solution
/// is affine in the hypothesized outcome.
struct Transductive<'a> {
    data: &'a Dataset,
    obs_ratios: Vec<f64>,
    ratio: Option<&'a RatioModel>,
    spec: &'a RegressorSpec,
}

impl<'a> Transductive<'a> {
    fn new(
        data: &'a Dataset,
        ratio: Option<&'a RatioModel>,
        spec: &'a RegressorSpec,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("transductive data"));
        }
        spec.validate()?;
        let obs_ratios = match ratio {
            Some(r) => r.ratios(data)?,
            None => vec![1.0; data.len()],
        };
        Ok(Self {
            data,
            obs_ratios,
            ratio,
            spec,
        })
    }

    fn test_ratio(&self, x: &[f64], y: f64) -> Result<f64> {
        match self.ratio {
            Some(r) => r.ratio(x, y),
            None => Ok(1.0),
        }
    }

    fn accept(
        &self,
        obs_scores: &[f64],
        test_score: f64,
        test_ratio: f64,
        alpha: f64,
    ) -> Result<bool> {
        let prepared = RatioWeightedScores::new(obs_scores, &self.obs_ratios)?;
        Ok(test_score <= prepared.quantile(test_ratio, 1.0 - alpha).value)
    }

    fn run(&self, x_test: &[f64], alpha: f64, grid: &YGrid) -> Result<TransductiveResult> {
        check_alpha(alpha)?;
        if x_test.len() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                got: x_test.len(),
            });
        }
        let points = grid.points();
        let decisions: Vec<bool> = match self.spec.kind {
            RegressorKind::Ridge => {
                let path = RidgePath::new(self.data, x_test, self.spec)?;
                let mut scores = vec![0.0; self.data.len()];
                points
                    .iter()
                    .map(|&y_bar| {
                        let test_score = path.scores(y_bar, &mut scores);
                        self.accept(&scores, test_score, self.test_ratio(x_test, y_bar)?, alpha)
                    })
                    .collect::<Result<_>>()?
            }
            RegressorKind::BoostedStumps => points
                .par_iter()
                .map(|&y_bar| {
                    let augmented = self.data.augmented(x_test, y_bar)?;
                    let model = fit_regressor(self.spec, &augmented.x, &augmented.y)?;
                    let scores = residuals(&model, self.data)?;
                    let test_score = (y_bar - model.predict(x_test)?).abs();
                    self.accept(&scores, test_score, self.test_ratio(x_test, y_bar)?, alpha)
                })
                .collect::<Result<_>>()?,
        };
        let accepted = points
            .iter()
            .zip(decisions)
            .filter(|(_, ok)| *ok)
            .map(|(&y, _)| y)
            .collect();
        Ok(TransductiveResult::from_accepted(&points, accepted))
    }
}

/// Ridge fit on `data + (x_test, y_bar)` as an affine function of `y_bar`.
///
/// With the intercept unpenalized, centering on the observational means is a
/// reparametrization, so the augmented normal matrix `A` does not depend on
/// `y_bar` and `beta(y_bar) = A^-1 (Z'y) + y_bar * A^-1 z_test`.
struct RidgePath {
    // Residual of obs row i is `base[i] - y_bar * slope[i]`.
    base: Vec<f64>,
    slope: Vec<f64>,
    test_base: f64,
    test_slope: f64,
}

impl RidgePath {
    fn new(data: &Dataset, x_test: &[f64], spec: &RegressorSpec) -> Result<Self> {
        let map = spec.feature_map;
        let phi = map.expand_matrix(&data.x);
        let phi_test = map.expand(x_test);
        let p = phi.ncols() + 1;
        let n = data.len();
        let mut mean = vec![0.0; p - 1];
        for r in phi.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let design = |r: &[f64]| -> Vec<f64> {
            std::iter::once(1.0)
                .chain(r.iter().zip(&mean).map(|(v, m)| v - m))
                .collect()
        };
        let z_test = design(&phi_test);
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = DVector::<f64>::zeros(p);
        let rows: Vec<Vec<f64>> = phi.rows().map(design).collect();
        for (z, &y) in rows.iter().zip(&data.y) {
            for i in 0..p {
                b[i] += z[i] * y;
                for j in i..p {
                    a[(i, j)] += z[i] * z[j];
                }
            }
        }
        for i in 0..p {
            for j in i..p {
                a[(i, j)] += z_test[i] * z_test[j];
            }
        }
        for i in 0..p {
            for j in 0..i {
                a[(i, j)] = a[(j, i)];
            }
            if i > 0 {
                a[(i, i)] += spec.ridge_penalty;
            }
        }
        let scale = (0..p).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let chol = a.cholesky().ok_or(Error::Singular)?;
        if spec.ridge_penalty == 0.0 {
            let l = chol.l();
            let min_pivot = (0..p)
                .map(|i| l[(i, i)] * l[(i, i)])
                .fold(f64::INFINITY, f64::min);
            if min_pivot <= scale * 1e-12 {
                return Err(Error::Singular);
            }
        }
        let beta0 = chol.solve(&b);
        let gamma = chol.solve(&DVector::from_column_slice(&z_test));
        let dot =
            |z: &[f64], v: &DVector<f64>| z.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
        let base = rows
            .iter()
            .zip(&data.y)
            .map(|(z, &y)| y - dot(z, &beta0))
            .collect();
        let slope = rows.iter().map(|z| dot(z, &gamma)).collect();
        Ok(Self {
            base,
            slope,
            test_base: dot(&z_test, &beta0),
            test_slope: dot(&z_test, &gamma),
        })
    }

    /// Fills observational scores and returns the test score.
    fn scores(&self, y_bar: f64, out: &mut [f64]) -> f64 {
        for ((o, b), s) in out.iter_mut().zip(&self.base).zip(&self.slope) {
            *o = (b - y_bar * s).abs();
        }
        (y_bar * (1.0 - self.test_slope) - self.test_base).abs()
    }
}

/// Transductive conformal: accept `y_bar` when its score is within the
/// `(1 - alpha)` quantile of `(1/(n+1)) sum delta_{s_i} + (1/(n+1)) delta_inf`.
pub fn tcp_interval(
    data: &Dataset,
    x_test: &[f64],
    alpha: f64,
    grid: &YGrid,
    spec: &RegressorSpec,
) -> Result<TransductiveResult> {
    Transductive::new(data, None, spec)?.run(x_test, alpha, grid)
}

/// Weighted transductive conformal with density-ratio weights. The test
/// weight uses `r(x_test, y_bar)` for each hypothesized outcome.
pub fn wtcp_dr_interval(
    obs: &Dataset,
    ratio_model: &RatioModel,
    x_test: &[f64],
    alpha: f64,
    grid: &YGrid,
    spec: &RegressorSpec,
) -> Result<TransductiveResult> {
    Transductive::new(obs, Some(ratio_model), spec)?.run(x_test, alpha, grid)
}

/// Transductive runner reusable across many test points.
pub struct WeightedTransductive<'a> {
    inner: Transductive<'a>,
}

impl<'a> WeightedTransductive<'a> {
    pub fn new(
        obs: &'a Dataset,
        ratio_model: Option<&'a RatioModel>,
        spec: &'a RegressorSpec,
    ) -> Result<Self> {
        Ok(Self {
            inner: Transductive::new(obs, ratio_model, spec)?,
        })
    }

    pub fn interval(&self, x_test: &[f64], alpha: f64, grid: &YGrid) -> Result<TransductiveResult> {
        self.inner.run(x_test, alpha, grid)
    }
}

/// Observational rows used by the first stage: the regression model is fit
/// on `fit` (plus one interventional row) and scored on `calibration`.
/// Passing the same dataset for both reproduces the single-sample variant.
#[derive(Debug, Clone, Copy)]
pub struct ObservationalSplit<'a> {
    pub fit: &'a Dataset,
    pub calibration: &'a Dataset,
}

impl<'a> ObservationalSplit<'a> {
    pub fn pooled(data: &'a Dataset) -> Self {
        Self {
            fit: data,
            calibration: data,
        }
    }
}

/// The regression refit for one interventional row: its prediction at that
/// row and the calibration scores.
#[derive(Debug, Clone)]
pub struct Refit {
    pub prediction: f64,
    pub cal_scores: Arc<Vec<f64>>,
}

/// Refits `mu` on `obs.fit` plus each interventional row in turn. With
/// `shared_fit`, a single model fit on `obs.fit` serves every row.
pub fn first_stage_refits(
    obs: ObservationalSplit<'_>,
    intr: &Dataset,
    spec: &RegressorSpec,
    shared_fit: bool,
) -> Result<Vec<Refit>> {
    if obs.fit.is_empty() || obs.calibration.is_empty() {
        return Err(Error::Empty("observational sample"));
    }
    if intr.is_empty() {
        return Err(Error::Empty("interventional sample"));
    }
    if shared_fit {
        let model = fit_regressor(spec, &obs.fit.x, &obs.fit.y)?;
        let scores = Arc::new(residuals(&model, obs.calibration)?);
        return intr
            .x
            .rows()
            .map(|x| {
                Ok(Refit {
                    prediction: model.predict(x)?,
                    cal_scores: Arc::clone(&scores),
                })
            })
            .collect();
    }
    (0..intr.len())
        .into_par_iter()
        .map(|j| {
            let x = intr.x.row(j);
            let augmented = obs.fit.augmented(x, intr.y[j])?;
            let model = fit_regressor(spec, &augmented.x, &augmented.y)?;
            Ok(Refit {
                prediction: model.predict(x)?,
                cal_scores: Arc::new(residuals(&model, obs.calibration)?),
            })
        })
        .collect()
}

/// One first-stage interval `[C^L, C^R]` at an interventional covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageRow {
    pub x: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl FirstStageRow {
    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageIntervals {
    pub rows: Vec<FirstStageRow>,
}

impl FirstStageIntervals {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn infinite_count(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_finite()).count()
    }
}

/// Weighted split intervals from precomputed refits. `cal_ratios` are the
/// ratios at the calibration rows; `intr_ratios[j]` is `r(x_j, y_j)`.
pub fn first_stage_from_refits(
    refits: &[Refit],
    intr: &Dataset,
    cal_ratios: &[f64],
    intr_ratios: &[f64],
    alpha: f64,
) -> Result<FirstStageIntervals> {
    check_alpha(alpha)?;
    if refits.len() != intr.len() || intr_ratios.len() != intr.len() {
        return Err(Error::DimensionMismatch {
            expected: intr.len(),
            got: refits.len().min(intr_ratios.len()),
        });
    }
    let mut cached: Option<(*const Vec<f64>, RatioWeightedScores)> = None;
    let mut rows = Vec::with_capacity(refits.len());
    for (j, refit) in refits.iter().enumerate() {
        let key = Arc::as_ptr(&refit.cal_scores);
        let prepared = match &cached {
            Some((k, prepared)) if *k == key => prepared,
            _ => {
                cached = Some((
                    key,
                    RatioWeightedScores::new(&refit.cal_scores, cal_ratios)?,
                ));
                &cached.as_ref().expect("just set").1
            }
        };
        if !(intr_ratios[j] > 0.0 && intr_ratios[j].is_finite()) {
            return Err(Error::InvalidWeights(
                "interventional ratio must be positive".into(),
            ));
        }
        let q = prepared.quantile(intr_ratios[j], 1.0 - alpha).value;
        let c = Interval::symmetric(refit.prediction, q);
        rows.push(FirstStageRow {
            x: intr.x.row(j).to_vec(),
            lower: c.lower,
            upper: c.upper,
        });
    }
    Ok(FirstStageIntervals { rows })
}

/// First stage of the two-stage weighted split method: a weighted split
/// interval around each interventional sample, with the test weight taken
/// from that sample's own ratio.
pub fn wscp_dr_first_stage(
    obs: ObservationalSplit<'_>,
    intr: &Dataset,
    ratio_model: &RatioModel,
    alpha: f64,
    spec: &RegressorSpec,
    shared_fit: bool,
) -> Result<FirstStageIntervals> {
    check_alpha(alpha)?;
    let refits = first_stage_refits(obs, intr, spec, shared_fit)?;
    let cal_ratios = ratio_model.ratios(obs.calibration)?;
    let intr_ratios = ratio_model.ratios(intr)?;
    first_stage_from_refits(&refits, intr, &cal_ratios, &intr_ratios, alpha)
}

/// Second-stage output; `crossed` marks bounds that were swapped because the
/// lower bound regressor exceeded the upper one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStageInterval {
    pub interval: Interval,
    pub crossed: bool,
}

fn ordered(lower: f64, upper: f64) -> TwoStageInterval {
    if lower > upper {
        TwoStageInterval {
            interval: Interval {
                lower: upper,
                upper: lower,
            },
            crossed: true,
        }
    } else {
        TwoStageInterval {
            interval: Interval { lower, upper },
            crossed: false,
        }
    }
}

fn fit_bounds(rows: &[&FirstStageRow], spec: &RegressorSpec) -> Result<(Regressor, Regressor)> {
    let dim = rows[0].x.len();
    let mut x = crate::data::Matrix::with_cols(dim);
    for r in rows {
        x.push_row(&r.x)?;
    }
    let lo: Vec<f64> = rows.iter().map(|r| r.lower).collect();
    let hi: Vec<f64> = rows.iter().map(|r| r.upper).collect();
    Ok((fit_regressor(spec, &x, &lo)?, fit_regressor(spec, &x, &hi)?))
}

/// Inexact second stage: regress the first-stage bounds on `x`.
#[derive(Debug, Clone)]
pub struct InexactTwoStage {
    lower_model: Regressor,
    upper_model: Regressor,
    excluded: usize,
}

impl InexactTwoStage {
    /// Infinite first-stage intervals are left out of the bound regressions.
    pub fn fit(first: &FirstStageIntervals, spec: &RegressorSpec) -> Result<Self> {
        if first.is_empty() {
            return Err(Error::Empty("first-stage intervals"));
        }
        let finite: Vec<&FirstStageRow> = first.rows.iter().filter(|r| r.is_finite()).collect();
        if finite.is_empty() {
            return Err(Error::AllInfinite);
        }
        let (lower_model, upper_model) = fit_bounds(&finite, spec)?;
        Ok(Self {
            lower_model,
            upper_model,
            excluded: first.len() - finite.len(),
        })
    }

    /// Number of infinite first-stage intervals left out.
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn interval(&self, x: &[f64]) -> Result<TwoStageInterval> {
        Ok(ordered(
            self.lower_model.predict(x)?,
            self.upper_model.predict(x)?,
        ))
    }
}

pub fn wscp_dr_inexact(
    first: &FirstStageIntervals,
    x_test: &[f64],
    spec: &RegressorSpec,
) -> Result<Interval> {
    Ok(InexactTwoStage::fit(first, spec)?
        .interval(x_test)?
        .interval)
}

/// Exact second stage: bound regressors fit on the first `split_index`
/// first-stage rows, then widened by a split-conformal quantile of
/// `max(m_L(x) - C^L, C^R - m_R(x))` over the remaining rows.
#[derive(Debug, Clone)]
pub struct ExactTwoStage {
    lower_model: Regressor,
    upper_model: Regressor,
    quantile: QuantileResult,
    excluded: usize,
}

impl ExactTwoStage {
    pub fn fit(
        first: &FirstStageIntervals,
        split_index: usize,
        alpha: f64,
        spec: &RegressorSpec,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let m = first.len();
        if split_index == 0 || split_index >= m {
            return Err(Error::InvalidParameter(format!(
                "split index {split_index} must lie in [1, {m})"
            )));
        }
        let (train, cal) = first.rows.split_at(split_index);
        let finite: Vec<&FirstStageRow> = train.iter().filter(|r| r.is_finite()).collect();
        if finite.is_empty() {
            return Err(Error::AllInfinite);
        }
        let (lower_model, upper_model) = fit_bounds(&finite, spec)?;
        let scores: Vec<f64> = cal
            .iter()
            .map(|r| {
                let lo = lower_model.predict(&r.x)? - r.lower;
                let hi = r.upper - upper_model.predict(&r.x)?;
                Ok(lo.max(hi))
            })
            .collect::<Result<_>>()?;
        let quantile = empirical_quantile(&scores, split_level(alpha, cal.len()))?;
        Ok(Self {
            lower_model,
            upper_model,
            quantile,
            excluded: train.len() - finite.len(),
        })
    }

    pub fn quantile(&self) -> f64 {
        self.quantile.value
    }

    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn interval(&self, x: &[f64]) -> Result<TwoStageInterval> {
        let q = self.quantile.value;
        if q.is_infinite() {
            return Ok(TwoStageInterval {
                interval: Interval::unbounded(),
                crossed: false,
            });
        }
        Ok(ordered(
            self.lower_model.predict(x)? - q,
            self.upper_model.predict(x)? + q,
        ))
    }
}

pub fn wscp_dr_exact(
    first: &FirstStageIntervals,
    split_index: usize,
    x_test: &[f64],
    alpha: f64,
    spec: &RegressorSpec,
) -> Result<Interval> {
    Ok(ExactTwoStage::fit(first, split_index, alpha, spec)?
        .interval(x_test)?
        .interval)
}

/// Weighted split conformal with a covariate-only ratio.
#[derive(Debug, Clone)]
pub struct WeightedSplitConformal {
    model: Regressor,
    prepared: RatioWeightedScores,
    ratio: RatioModel,
    alpha: f64,
}

impl WeightedSplitConformal {
    pub fn fit(
        train: &Dataset,
        cal: &Dataset,
        ratio: RatioModel,
        alpha: f64,
        spec: &RegressorSpec,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if ratio.uses_outcome() {
            return Err(Error::InvalidParameter(
                "weighted split conformal needs a covariate-only ratio; the test outcome is unknown".into(),
            ));
        }
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        if cal.is_empty() {
            return Err(Error::Empty("calibration split"));
        }
        let model = fit_regressor(spec, &train.x, &train.y)?;
        let scores = residuals(&model, cal)?;
        let cal_ratios = ratio.ratios(cal)?;
        let prepared = RatioWeightedScores::new(&scores, &cal_ratios)?;
        Ok(Self {
            model,
            prepared,
            ratio,
            alpha,
        })
    }

    pub fn quantile_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self
            .prepared
            .quantile(self.ratio.ratio(x, 0.0)?, 1.0 - self.alpha)
            .value)
    }

    pub fn interval(&self, x: &[f64]) -> Result<Interval> {
        Ok(Interval::symmetric(
            self.model.predict(x)?,
            self.quantile_at(x)?,
        ))
    }
}

/// Propensity-weighted split conformal for arm `t`: the propensity model is
/// fit on all of `obs_train`, the outcome model on its arm-`t` rows, and
/// scores come from the arm-`t` rows of `obs_cal`.
pub fn wcp_propensity_interval(
    obs_train: &Dataset,
    obs_cal: &Dataset,
    t: u8,
    x_test: &[f64],
    alpha: f64,
    spec: &RegressorSpec,
    propensity_spec: &ClassifierSpec,
) -> Result<Interval> {
    let propensity = fit_propensity_ratio(obs_train, t, propensity_spec)?;
    WeightedSplitConformal::fit(
        &obs_train.arm(t)?,
        &obs_cal.arm(t)?,
        propensity,
        alpha,
        spec,
    )?
    .interval(x_test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::rng::seeded;
    use crate::stats::{weighted_quantile, ScoreDistribution};
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn linear_data(rng: &mut crate::rng::Rng, n: usize, noise: f64) -> Dataset {
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let y = xs
            .iter()
            .map(|x| 1.0 + 2.0 * x + noise * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect();
        Dataset::new(Matrix::column(&xs), y).unwrap()
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(f64::INFINITY, f64::INFINITY).is_err());
        assert!(Interval::new(f64::NEG_INFINITY, 0.0).is_ok());
        assert_eq!(
            Interval::symmetric(1.0, f64::INFINITY),
            Interval::unbounded()
        );
    }

    #[test]
    fn scp_noiseless_width_zero() {
        let mut rng = seeded(1);
        let train = linear_data(&mut rng, 20, 0.0);
        let cal = linear_data(&mut rng, 20, 0.0);
        let c = scp_interval(&train, &cal, &[0.3], 0.1, &RegressorSpec::ridge(0.0)).unwrap();
        assert!(c.width().abs() < 1e-8);
    }

    #[test]
    fn scp_level_above_one_is_unbounded() {
        let mut rng = seeded(2);
        let train = linear_data(&mut rng, 20, 1.0);
        let cal = linear_data(&mut rng, 5, 1.0);
        let c = scp_interval(&train, &cal, &[0.3], 0.05, &RegressorSpec::ridge(0.0)).unwrap();
        assert_eq!(c, Interval::unbounded());
    }

    #[test]
    fn scp_errors() {
        let mut rng = seeded(3);
        let d = linear_data(&mut rng, 10, 1.0);
        assert!(scp_interval(
            &d,
            &Dataset::empty(1),
            &[0.0],
            0.1,
            &RegressorSpec::ridge(0.0)
        )
        .is_err());
        assert!(scp_interval(&d, &d, &[0.0], 1.0, &RegressorSpec::ridge(0.0)).is_err());
        assert!(
            naive_interval(&d.slice(0..1), &[0.0], 0.1, &RegressorSpec::ridge(0.0), 0.5).is_err()
        );
    }

    #[test]
    fn naive_equals_scp_on_same_split() {
        let mut rng = seeded(4);
        let d = linear_data(&mut rng, 40, 0.5);
        let spec = RegressorSpec::ridge(0.0);
        let naive = naive_interval(&d, &[0.7], 0.1, &spec, 0.5).unwrap();
        let scp = scp_interval(&d.slice(0..20), &d.slice(20..40), &[0.7], 0.1, &spec).unwrap();
        assert_eq!(naive, scp);
    }

    #[test]
    fn naive_width_matches_half_normal_quantile() {
        // Large calibration set: width -> 2 * sigma * z_{0.95} = 2 sqrt(2) sigma erfinv(0.9).
        let mut rng = seeded(5);
        let sigma = 0.5;
        let d = linear_data(&mut rng, 20_000, sigma);
        let c = naive_interval(&d, &[0.0], 0.1, &RegressorSpec::ridge(0.0), 0.5).unwrap();
        let expected = 2.0 * 2f64.sqrt() * sigma * statrs::function::erf::erf_inv(0.9);
        assert!(
            (c.width() / expected - 1.0).abs() < 0.1,
            "{} vs {}",
            c.width(),
            expected
        );
    }

    #[test]
    fn grid_points_and_around() {
        let g = YGrid::new(0.0, 1.0, 5).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = YGrid::around(&[1.0, 3.0], 0.25, 3).unwrap();
        assert_eq!((g.lo, g.hi), (0.5, 3.5));
        assert!(YGrid::new(1.0, 1.0, 5).is_err());
        assert!(YGrid::new(0.0, 1.0, 1).is_err());
        let w = YGrid::new(0.0, 1.0, 11).unwrap().widened(2.0);
        assert_eq!((w.lo, w.hi), (-0.5, 1.5));
        assert!((w.step() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn tcp_constant_data_accepts_constant() {
        let d = Dataset::new(
            Matrix::column(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
            vec![3.0; 6],
        )
        .unwrap();
        let grid = YGrid::new(0.0, 6.0, 13).unwrap();
        let r = tcp_interval(&d, &[2.5], 0.1, &grid, &RegressorSpec::ridge(0.1)).unwrap();
        assert!(r.accepted_grid.contains(&3.0));
    }

    #[test]
    fn tcp_infinite_quantile_accepts_everything() {
        // n = 5, alpha = 0.1: (1 - alpha)(n + 1) = 5.4 > 5, the quantile is +inf.
        let mut rng = seeded(6);
        let d = linear_data(&mut rng, 5, 1.0);
        let grid = YGrid::new(-50.0, 50.0, 21).unwrap();
        let r = tcp_interval(&d, &[0.0], 0.1, &grid, &RegressorSpec::ridge(0.0)).unwrap();
        assert_eq!(r.accepted_grid.len(), 21);
        assert!(r.touches_boundary);
    }

    #[test]
    fn tcp_ridge_fast_path_matches_refit_path() {
        // The ridge path must agree with explicit refits through fit_regressor.
        let mut rng = seeded(7);
        let d = linear_data(&mut rng, 30, 1.0);
        let grid = YGrid::around(&d.y, 0.25, 41).unwrap();
        let spec = RegressorSpec::ridge(0.3);
        let fast = tcp_interval(&d, &[0.4], 0.2, &grid, &spec).unwrap();
        let mut accepted = Vec::new();
        for y_bar in grid.points() {
            let aug = d.augmented(&[0.4], y_bar).unwrap();
            let m = fit_regressor(&spec, &aug.x, &aug.y).unwrap();
            let scores = residuals(&m, &d).unwrap();
            let dist = ScoreDistribution::uniform_with_infinity(&scores).unwrap();
            let q = weighted_quantile(&dist, 0.8).unwrap().value;
            if (y_bar - m.predict(&[0.4]).unwrap()).abs() <= q {
                accepted.push(y_bar);
            }
        }
        assert_eq!(fast.accepted_grid, accepted);
    }

    #[test]
    fn tcp_boosted_runs_and_hull_is_sound() {
        let mut rng = seeded(8);
        let d = linear_data(&mut rng, 40, 0.3);
        let grid = YGrid::around(&d.y, 0.25, 30).unwrap();
        let spec = RegressorSpec::boosted(10, 0.3, 2);
        let r = tcp_interval(&d, &[0.0], 0.2, &grid, &spec).unwrap();
        let hull = r.hull.unwrap();
        assert!(r.accepted_grid.iter().all(|&y| hull.contains(y)));
        assert_eq!(hull.lower, r.accepted_grid[0]);
        assert_eq!(hull.upper, *r.accepted_grid.last().unwrap());
    }

    #[test]
    fn wtcp_with_unit_ratio_equals_tcp() {
        let mut rng = seeded(9);
        let d = linear_data(&mut rng, 50, 1.0);
        let grid = YGrid::around(&d.y, 0.25, 60).unwrap();
        let spec = RegressorSpec::ridge(0.0);
        let one = RatioModel::constant(1, 1.0).unwrap();
        let three = RatioModel::constant(1, 3.0).unwrap();
        let a = tcp_interval(&d, &[0.1], 0.1, &grid, &spec).unwrap();
        assert_eq!(
            a,
            wtcp_dr_interval(&d, &one, &[0.1], 0.1, &grid, &spec).unwrap()
        );
        assert_eq!(
            a,
            wtcp_dr_interval(&d, &three, &[0.1], 0.1, &grid, &spec).unwrap()
        );
    }

    #[test]
    fn wtcp_with_fitted_identical_ratio_close_to_tcp() {
        let mut rng = seeded(10);
        let obs = linear_data(&mut rng, 300, 1.0);
        let intr = linear_data(&mut rng, 300, 1.0);
        let ratio =
            crate::density_ratio::fit_density_ratio(&obs, &intr, &ClassifierSpec::default())
                .unwrap();
        let grid = YGrid::around(&obs.y, 0.25, 200).unwrap();
        let spec = RegressorSpec::ridge(0.0);
        let a = tcp_interval(&obs, &[0.2], 0.1, &grid, &spec)
            .unwrap()
            .hull
            .unwrap();
        let b = wtcp_dr_interval(&obs, &ratio, &[0.2], 0.1, &grid, &spec)
            .unwrap()
            .hull
            .unwrap();
        // Fitted ratios fluctuate around 1; the hull endpoints move by at most a few steps.
        let tol = 3.0 * grid.step();
        assert!(
            (a.lower - b.lower).abs() <= tol && (a.upper - b.upper).abs() <= tol,
            "{a:?} vs {b:?}"
        );
    }

    #[test]
    fn first_stage_single_row_matches_hand_computation() {
        // Oracle: rebuild the weighted distribution explicitly for m = 1.
        let obs = Dataset::new(
            Matrix::column(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
            vec![0.1, 1.3, 1.8, 3.4, 3.9, 5.2],
        )
        .unwrap();
        let intr = Dataset::new(Matrix::column(&[2.5]), vec![2.0]).unwrap();
        let ratio =
            RatioModel::from_fn(1, true, 1e-6, 1e6, |x, y| 0.5 + 0.1 * x[0] + 0.05 * y).unwrap();
        let spec = RegressorSpec::ridge(0.0);
        let alpha = 0.3;
        let first = wscp_dr_first_stage(
            ObservationalSplit::pooled(&obs),
            &intr,
            &ratio,
            alpha,
            &spec,
            false,
        )
        .unwrap();

        let aug = obs.augmented(&[2.5], 2.0).unwrap();
        let m = fit_regressor(&spec, &aug.x, &aug.y).unwrap();
        let scores: Vec<f64> = (0..6)
            .map(|i| (obs.y[i] - m.predict(obs.x.row(i)).unwrap()).abs())
            .collect();
        let r: Vec<f64> = (0..6)
            .map(|i| 0.5 + 0.1 * obs.x.row(i)[0] + 0.05 * obs.y[i])
            .collect();
        let r_test = 0.5 + 0.25 + 0.1;
        let total: f64 = r.iter().sum::<f64>() + r_test;
        let dist = ScoreDistribution::from_parts(
            &scores,
            &r.iter().map(|v| v / total).collect::<Vec<_>>(),
            r_test / total,
        )
        .unwrap();
        let q = weighted_quantile(&dist, 1.0 - alpha).unwrap().value;
        let mu = m.predict(&[2.5]).unwrap();
        assert_eq!(first.rows.len(), 1);
        assert!((first.rows[0].lower - (mu - q)).abs() < 1e-12);
        assert!((first.rows[0].upper - (mu + q)).abs() < 1e-12);
    }

    #[test]
    fn first_stage_infinite_when_test_weight_exceeds_alpha() {
        let mut rng = seeded(11);
        let obs = linear_data(&mut rng, 10, 1.0);
        let intr = Dataset::new(Matrix::column(&[4.0, 0.0, 0.1]), vec![9.0, 1.0, 1.2]).unwrap();
        // Test weight 10 / (10 + 10) = 0.5 > alpha for the first row.
        let heavy = RatioModel::from_fn(
            1,
            true,
            1e-6,
            1e6,
            |x, _| if x[0] == 4.0 { 10.0 } else { 1.0 },
        )
        .unwrap();
        let first = wscp_dr_first_stage(
            ObservationalSplit::pooled(&obs),
            &intr,
            &heavy,
            0.1,
            &RegressorSpec::ridge(0.0),
            false,
        )
        .unwrap();
        assert!(!first.rows[0].is_finite());
        assert_eq!(first.infinite_count(), 1);
        assert!(
            InexactTwoStage::fit(&first, &RegressorSpec::ridge(0.0))
                .unwrap()
                .excluded()
                == 1
        );
    }

    #[test]
    fn first_stage_unit_ratio_matches_split_conformal() {
        // Ratio == 1: weighted level 1 - alpha over n + 1 equals split level over n.
        let mut rng = seeded(12);
        let fit = linear_data(&mut rng, 40, 1.0);
        let cal = linear_data(&mut rng, 30, 1.0);
        let intr = linear_data(&mut rng, 5, 1.0);
        let spec = RegressorSpec::ridge(0.0);
        let one = RatioModel::constant(1, 1.0).unwrap();
        let split = ObservationalSplit {
            fit: &fit,
            calibration: &cal,
        };
        let first = wscp_dr_first_stage(split, &intr, &one, 0.1, &spec, true).unwrap();
        let scp = SplitConformal::fit(&fit, &cal, 0.1, &spec).unwrap();
        for (row, x) in first.rows.iter().zip(intr.x.rows()) {
            let c = scp.interval(x).unwrap();
            assert_eq!((row.lower, row.upper), (c.lower, c.upper));
        }
    }

    #[test]
    fn shared_fit_differs_only_by_refit() {
        let mut rng = seeded(13);
        let obs = linear_data(&mut rng, 200, 0.5);
        let intr = linear_data(&mut rng, 8, 0.5);
        let spec = RegressorSpec::ridge(0.0);
        let split = ObservationalSplit::pooled(&obs);
        let exact = first_stage_refits(split, &intr, &spec, false).unwrap();
        let shared = first_stage_refits(split, &intr, &spec, true).unwrap();
        for (a, b) in exact.iter().zip(&shared) {
            assert!((a.prediction - b.prediction).abs() < 0.05);
        }
    }

    fn linear_first_stage(m: usize) -> FirstStageIntervals {
        let rows = (0..m)
            .map(|i| {
                let x = i as f64 / m as f64;
                FirstStageRow {
                    x: vec![x],
                    lower: 1.0 + 2.0 * x,
                    upper: 3.0 + 2.0 * x,
                }
            })
            .collect();
        FirstStageIntervals { rows }
    }

    #[test]
    fn inexact_constant_bounds() {
        let rows = (0..10)
            .map(|i| FirstStageRow {
                x: vec![i as f64],
                lower: -1.0,
                upper: 2.0,
            })
            .collect();
        let first = FirstStageIntervals { rows };
        for spec in [RegressorSpec::ridge(0.0), RegressorSpec::default()] {
            let c = wscp_dr_inexact(&first, &[42.0], &spec).unwrap();
            assert!(
                (c.lower + 1.0).abs() < 1e-9 && (c.upper - 2.0).abs() < 1e-9,
                "{c:?}"
            );
        }
    }

    #[test]
    fn exact_equals_inexact_when_bounds_are_linear() {
        let first = linear_first_stage(20);
        let spec = RegressorSpec::ridge(0.0);
        let exact = ExactTwoStage::fit(&first, 10, 0.1, &spec).unwrap();
        assert!(exact.quantile().abs() < 1e-9);
        let a = exact.interval(&[0.37]).unwrap().interval;
        let b = InexactTwoStage::fit(
            &FirstStageIntervals {
                rows: first.rows[..10].to_vec(),
            },
            &spec,
        )
        .unwrap()
        .interval(&[0.37])
        .unwrap()
        .interval;
        assert!((a.lower - b.lower).abs() < 1e-9 && (a.upper - b.upper).abs() < 1e-9);
    }

    #[test]
    fn exact_level_above_one_is_unbounded() {
        let first = linear_first_stage(6);
        let c = wscp_dr_exact(&first, 3, &[0.5], 0.1, &RegressorSpec::ridge(0.0)).unwrap();
        assert_eq!(c, Interval::unbounded());
        assert!(wscp_dr_exact(&first, 0, &[0.5], 0.1, &RegressorSpec::ridge(0.0)).is_err());
        assert!(wscp_dr_exact(&first, 6, &[0.5], 0.1, &RegressorSpec::ridge(0.0)).is_err());
    }

    #[test]
    fn inexact_no_wider_than_exact_with_nonnegative_quantile() {
        let mut rng = seeded(14);
        let rows = (0..60)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let c = x + 0.2 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                let h = 1.0 + 0.1 * rng.random::<f64>();
                FirstStageRow {
                    x: vec![x],
                    lower: c - h,
                    upper: c + h,
                }
            })
            .collect();
        let first = FirstStageIntervals { rows };
        let spec = RegressorSpec::ridge(0.0);
        let exact = ExactTwoStage::fit(&first, 30, 0.1, &spec).unwrap();
        assert!(exact.quantile() >= 0.0);
        let inexact = InexactTwoStage::fit(
            &FirstStageIntervals {
                rows: first.rows[..30].to_vec(),
            },
            &spec,
        )
        .unwrap();
        for x in [-0.5, 0.0, 0.9] {
            assert!(
                inexact.interval(&[x]).unwrap().interval.width()
                    <= exact.interval(&[x]).unwrap().interval.width()
            );
        }
    }

    #[test]
    fn crossed_bounds_are_swapped_and_flagged() {
        let rows = (0..10)
            .map(|i| {
                let x = i as f64;
                FirstStageRow {
                    x: vec![x],
                    lower: x,
                    upper: 9.0 - x,
                }
            })
            .collect();
        let stage = InexactTwoStage::fit(&FirstStageIntervals { rows }, &RegressorSpec::ridge(0.0))
            .unwrap();
        let out = stage.interval(&[8.0]).unwrap();
        assert!(out.crossed);
        assert!(out.interval.lower <= out.interval.upper);
        assert!(!stage.interval(&[1.0]).unwrap().crossed);
    }

    #[test]
    fn all_infinite_first_stage_errors() {
        let rows = (0..4).map(|i| FirstStageRow {
            x: vec![i as f64],
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        });
        let first = FirstStageIntervals {
            rows: rows.collect(),
        };
        assert!(matches!(
            wscp_dr_inexact(&first, &[0.0], &RegressorSpec::ridge(0.0)),
            Err(Error::AllInfinite)
        ));
    }

    #[test]
    fn wcp_constant_propensity_reduces_to_weighted_uniform() {
        // Randomized treatment: fitted propensities are nearly constant, so the
        // interval is close to the unweighted one built from the same split.
        let mut rng = seeded(15);
        let n = 4000;
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|x| x + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let t: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
        let d = Dataset::new(Matrix::column(&xs), y)
            .unwrap()
            .with_treatment(t)
            .unwrap();
        let (train, cal) = (d.slice(0..n / 2), d.slice(n / 2..n));
        let spec = RegressorSpec::ridge(0.0);
        let wcp = wcp_propensity_interval(
            &train,
            &cal,
            1,
            &[0.3],
            0.1,
            &spec,
            &ClassifierSpec::linear(),
        )
        .unwrap();
        let scp = scp_interval(
            &train.arm(1).unwrap(),
            &cal.arm(1).unwrap(),
            &[0.3],
            0.1,
            &spec,
        )
        .unwrap();
        assert!(
            (wcp.width() - scp.width()).abs() / scp.width() < 0.05,
            "{wcp:?} vs {scp:?}"
        );
    }

    #[test]
    fn wcp_single_treatment_errors() {
        let d = Dataset::new(
            Matrix::column(&[0.0, 1.0, 2.0, 3.0]),
            vec![0.0, 1.0, 2.0, 3.0],
        )
        .unwrap()
        .with_treatment(vec![1, 1, 1, 1])
        .unwrap();
        let r = wcp_propensity_interval(
            &d,
            &d,
            1,
            &[0.0],
            0.1,
            &RegressorSpec::ridge(0.0),
            &ClassifierSpec::linear(),
        );
        assert!(matches!(r, Err(Error::SingleClass)));
    }

    #[test]
    fn weighted_split_rejects_joint_ratio() {
        let mut rng = seeded(16);
        let d = linear_data(&mut rng, 10, 1.0);
        let joint = RatioModel::from_fn(1, true, 0.1, 10.0, |_, _| 1.0).unwrap();
        assert!(
            WeightedSplitConformal::fit(&d, &d, joint, 0.1, &RegressorSpec::ridge(0.0)).is_err()
        );
    }

    #[test]
    fn intervals_nest_in_alpha() {
        let mut rng = seeded(17);
        let train = linear_data(&mut rng, 100, 1.0);
        let cal = linear_data(&mut rng, 100, 1.0);
        let spec = RegressorSpec::ridge(0.0);
        let ratio = RatioModel::from_fn(1, false, 1e-3, 1e3, |x, _| (0.5 * x[0]).exp()).unwrap();
        let alphas = [0.05, 0.1, 0.2, 0.3];
        let mut prev: Option<(Interval, Interval)> = None;
        for &a in &alphas {
            let s = scp_interval(&train, &cal, &[0.2], a, &spec).unwrap();
            let w = WeightedSplitConformal::fit(&train, &cal, ratio.clone(), a, &spec)
                .unwrap()
                .interval(&[0.2])
                .unwrap();
            if let Some((ps, pw)) = prev {
                assert!(ps.contains_interval(&s));
                assert!(pw.contains_interval(&w));
            }
            prev = Some((s, w));
        }
    }
}
