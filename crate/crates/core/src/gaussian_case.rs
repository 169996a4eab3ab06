//! Linear-Gaussian testbed with analytic density ratios.
//!
//! Observational rows: `x ~ N(0, Sigma_O)`, `y = theta_O'x + sigma e`.
//! Interventional rows: `x ~ N(0, Sigma_I)`, `y = theta_I'x + sigma e`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand_distr::{Distribution, StandardNormal};

use crate::conformal::{naive_interval, WeightedTransductive, YGrid, DEFAULT_GRID_MARGIN};
use crate::data::{Dataset, Matrix};
use crate::density_ratio::{effective_sample_size, fit_density_ratio, RatioModel};
use crate::error::{Error, Result};
use crate::predictors::{ClassifierSpec, RegressorSpec};
use crate::rng::{derive_seed, seeded, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianConfig {
    pub theta_o: Vec<f64>,
    pub theta_i: Vec<f64>,
    pub sigma: f64,
    /// Row-major `d x d` covariances.
    pub sigma_o: Vec<Vec<f64>>,
    pub sigma_i: Vec<Vec<f64>>,
    pub n: usize,
    pub m: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl GaussianConfig {
    /// Identity covariances for both samples.
    pub fn isotropic(theta_o: Vec<f64>, theta_i: Vec<f64>, sigma: f64, n: usize, m: usize) -> Self {
        let d = theta_o.len();
        let eye: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        Self {
            theta_o,
            theta_i,
            sigma,
            sigma_o: eye.clone(),
            sigma_i: eye,
            n,
            m,
            n_test: 10,
            seed: 0,
        }
    }

    pub fn d(&self) -> usize {
        self.theta_o.len()
    }
}

fn to_matrix(rows: &[Vec<f64>], d: usize, what: &'static str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rows.len(),
        });
    }
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()) {
                return Err(Error::NotPositiveDefinite(what));
            }
        }
    }
    Ok(m)
}

struct Normal {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl Normal {
    fn new(cov: DMatrix<f64>, what: &'static str) -> Result<Self> {
        let chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite(what))?;
        let log_det = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        Ok(Self { chol, log_det })
    }

    fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.chol.l_dirty().nrows();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        (self.chol.l() * z).iter().copied().collect()
    }

    /// Log density up to the shared `-(d/2) log(2 pi)` term.
    fn log_density(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        let sol = self.chol.solve(&v);
        -0.5 * v.dot(&sol) - 0.5 * self.log_det
    }
}

/// Validated testbed with precomputed factorizations.
pub struct GaussianModel {
    config: GaussianConfig,
    obs: Normal,
    intr: Normal,
}

impl std::fmt::Debug for GaussianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaussianModel")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl GaussianModel {
    pub fn new(config: GaussianConfig) -> Result<Self> {
        let d = config.d();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if config.theta_i.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: config.theta_i.len(),
            });
        }
        if !(config.sigma > 0.0 && config.sigma.is_finite()) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        if config.n == 0 || config.m == 0 || config.n_test == 0 {
            return Err(Error::InvalidParameter(
                "sample sizes must be positive".into(),
            ));
        }
        let obs = Normal::new(
            to_matrix(&config.sigma_o, d, "observational covariance")?,
            "observational covariance",
        )?;
        let intr = Normal::new(
            to_matrix(&config.sigma_i, d, "interventional covariance")?,
            "interventional covariance",
        )?;
        Ok(Self { config, obs, intr })
    }

    pub fn config(&self) -> &GaussianConfig {
        &self.config
    }

    fn draw(&self, rng: &mut Rng, interventional: bool, count: usize) -> Result<Dataset> {
        let (dist, theta) = if interventional {
            (&self.intr, &self.config.theta_i)
        } else {
            (&self.obs, &self.config.theta_o)
        };
        let mut x = Matrix::with_cols(self.config.d());
        let mut y = Vec::with_capacity(count);
        for _ in 0..count {
            let row = dist.sample(rng);
            let e: f64 = StandardNormal.sample(rng);
            y.push(dot(theta, &row) + self.config.sigma * e);
            x.push_row(&row)?;
        }
        Dataset::new(x, y)
    }

    pub fn sample_observational(&self, rng: &mut Rng, count: usize) -> Result<Dataset> {
        self.draw(rng, false, count)
    }

    pub fn sample_interventional(&self, rng: &mut Rng, count: usize) -> Result<Dataset> {
        self.draw(rng, true, count)
    }

    /// `(obs, intr, test)`; test rows follow the interventional law.
    pub fn generate(&self, rng: &mut Rng) -> Result<(Dataset, Dataset, Dataset)> {
        let obs = self.sample_observational(rng, self.config.n)?;
        let intr = self.sample_interventional(rng, self.config.m)?;
        let test = self.sample_interventional(rng, self.config.n_test)?;
        Ok((obs, intr, test))
    }

    pub fn log_oracle_ratio(&self, x: &[f64], y: f64) -> f64 {
        let s2 = self.config.sigma * self.config.sigma;
        let ri = y - dot(&self.config.theta_i, x);
        let ro = y - dot(&self.config.theta_o, x);
        self.intr.log_density(x) - self.obs.log_density(x) + (ro * ro - ri * ri) / (2.0 * s2)
    }

    /// `p_I(x, y) / p_O(x, y)`.
    pub fn oracle_ratio(&self, x: &[f64], y: f64) -> f64 {
        self.log_oracle_ratio(x, y).exp()
    }

    /// The oracle as a [`RatioModel`] with effectively no clamping.
    pub fn oracle_model(self: &std::sync::Arc<Self>) -> Result<RatioModel> {
        let me = std::sync::Arc::clone(self);
        RatioModel::from_fn(
            self.config.d(),
            true,
            f64::MIN_POSITIVE,
            f64::MAX,
            move |x, y| me.oracle_ratio(x, y),
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn generate_gaussian(config: &GaussianConfig) -> Result<(Dataset, Dataset, Dataset)> {
    let model = GaussianModel::new(config.clone())?;
    model.generate(&mut seeded(config.seed))
}

pub fn oracle_ratio(config: &GaussianConfig, x: &[f64], y: f64) -> Result<f64> {
    let model = GaussianModel::new(config.clone())?;
    if x.len() != config.d() {
        return Err(Error::DimensionMismatch {
            expected: config.d(),
            got: x.len(),
        });
    }
    Ok(model.oracle_ratio(x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// `E_O |r(x, y) - r_hat(x, y)|` over fresh observational draws, using the
/// prior-corrected scale of `ratio_model`.
pub fn estimate_delta_r(
    ratio_model: &RatioModel,
    model: &GaussianModel,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<MonteCarloEstimate> {
    if n_mc < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 Monte Carlo draws, got {n_mc}"
        )));
    }
    let draws = model.sample_observational(rng, n_mc)?;
    let errs: Vec<f64> = draws
        .x
        .rows()
        .zip(&draws.y)
        .map(|(x, &y)| Ok((model.oracle_ratio(x, y) - ratio_model.calibrated_ratio(x, y)?).abs()))
        .collect::<Result<_>>()?;
    Ok(mean_and_se(&errs))
}

fn mean_and_se(v: &[f64]) -> MonteCarloEstimate {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    MonteCarloEstimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// `(tI + tO)' Sigma_I (tI + tO) / (tI - tO)' Sigma_I (tI - tO)`.
pub fn dissimilarity(config: &GaussianConfig) -> Result<f64> {
    let d = config.d();
    if config.theta_i.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: config.theta_i.len(),
        });
    }
    let s = to_matrix(&config.sigma_i, d, "interventional covariance")?;
    let sum = DVector::from_iterator(
        d,
        config
            .theta_i
            .iter()
            .zip(&config.theta_o)
            .map(|(a, b)| a + b),
    );
    let diff = DVector::from_iterator(
        d,
        config
            .theta_i
            .iter()
            .zip(&config.theta_o)
            .map(|(a, b)| a - b),
    );
    let den = diff.dot(&(&s * &diff));
    if den <= 0.0 {
        return Err(Error::InvalidParameter(
            "dissimilarity is unbounded when theta_i equals theta_o".into(),
        ));
    }
    Ok(sum.dot(&(&s * &sum)) / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RatioChoice {
    Oracle,
    Fitted(ClassifierSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthComparisonOptions {
    pub alpha: f64,
    pub grid_points: usize,
    pub reps: usize,
    pub ratio: RatioChoice,
    pub regressor: RegressorSpec,
    /// Fraction of the interventional sample used to train the naive model.
    pub naive_split: f64,
}

impl Default for WidthComparisonOptions {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            grid_points: 200,
            reps: 50,
            ratio: RatioChoice::Oracle,
            regressor: RegressorSpec::ridge(0.0),
            naive_split: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepWidths {
    pub wtcp_median: f64,
    pub naive_median: f64,
    pub n_eff: f64,
    /// Test points whose accepted set stayed empty after one grid widening.
    pub empty_sets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            min: v[0],
            median: median_sorted(&v),
            max: v[v.len() - 1],
        }
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthComparison {
    pub per_rep: Vec<RepWidths>,
    /// Share of repetitions with median weighted width at most the naive one.
    pub fraction_wtcp_not_wider: f64,
    pub wtcp_median: Summary,
    pub naive_median: Summary,
    pub n_eff: Summary,
}

/// Per repetition, compares median widths of transductive weighted intervals
/// (observational data + ratio) and naive split intervals (interventional
/// data only) over the same test points.
pub fn width_comparison(
    config: &GaussianConfig,
    opts: &WidthComparisonOptions,
) -> Result<WidthComparison> {
    if opts.reps < 10 {
        return Err(Error::InvalidParameter(format!(
            "need at least 10 repetitions, got {}",
            opts.reps
        )));
    }
    let model = std::sync::Arc::new(GaussianModel::new(config.clone())?);
    let per_rep: Vec<RepWidths> = (0..opts.reps)
        .into_par_iter()
        .map(|rep| one_rep(&model, opts, rep as u64))
        .collect::<Result<_>>()?;
    let wtcp: Vec<f64> = per_rep.iter().map(|r| r.wtcp_median).collect();
    let naive: Vec<f64> = per_rep.iter().map(|r| r.naive_median).collect();
    let n_eff: Vec<f64> = per_rep.iter().map(|r| r.n_eff).collect();
    let wins = per_rep
        .iter()
        .filter(|r| r.wtcp_median <= r.naive_median)
        .count();
    Ok(WidthComparison {
        fraction_wtcp_not_wider: wins as f64 / per_rep.len() as f64,
        wtcp_median: Summary::of(&wtcp),
        naive_median: Summary::of(&naive),
        n_eff: Summary::of(&n_eff),
        per_rep,
    })
}

fn one_rep(
    model: &std::sync::Arc<GaussianModel>,
    opts: &WidthComparisonOptions,
    rep: u64,
) -> Result<RepWidths> {
    let mut rng = seeded(derive_seed(model.config.seed, rep));
    let (obs, intr, test) = model.generate(&mut rng)?;
    let ratio = match &opts.ratio {
        RatioChoice::Oracle => model.oracle_model()?,
        RatioChoice::Fitted(spec) => fit_density_ratio(&obs, &intr, spec)?,
    };
    let n_eff = effective_sample_size(&ratio.ratios(&obs)?)?;
    let mut pooled = obs.y.clone();
    pooled.extend_from_slice(&intr.y);
    let grid = YGrid::around(&pooled, DEFAULT_GRID_MARGIN, opts.grid_points)?;
    let runner = WeightedTransductive::new(&obs, Some(&ratio), &opts.regressor)?;
    let mut wtcp = Vec::with_capacity(test.len());
    let mut naive = Vec::with_capacity(test.len());
    let mut empty_sets = 0;
    for x in test.x.rows() {
        let mut res = runner.interval(x, opts.alpha, &grid)?;
        if res.is_degenerate() {
            res = runner.interval(x, opts.alpha, &grid.widened(2.0))?;
        }
        match res.hull {
            Some(h) => wtcp.push(h.width()),
            None => {
                empty_sets += 1;
                wtcp.push(0.0);
            }
        }
        naive
            .push(naive_interval(&intr, x, opts.alpha, &opts.regressor, opts.naive_split)?.width());
    }
    Ok(RepWidths {
        wtcp_median: median(&wtcp),
        naive_median: median(&naive),
        n_eff,
        empty_sets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsVarianceCheck {
    pub empirical_variance: f64,
    pub theoretical_variance: f64,
    pub ratio: f64,
}

/// Least squares without intercept on `n` rows of `x ~ N(0, I_d)`; each
/// repetition contributes the residual at one fresh point. The ratio compares
/// their sample variance with `(1 + d/(n - d - 1)) sigma^2`.
pub fn ols_residual_variance_check(
    n: usize,
    d: usize,
    sigma: f64,
    reps: usize,
    seed: u64,
) -> Result<OlsVarianceCheck> {
    if d == 0 || n <= d + 1 {
        return Err(Error::InvalidParameter(format!(
            "need n > d + 1, got n = {n}, d = {d}"
        )));
    }
    if reps < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 repetitions".into(),
        ));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }
    let theta: Vec<f64> = (0..d).map(|j| 1.0 / (1.0 + j as f64)).collect();
    let residuals: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = seeded(derive_seed(seed, rep as u64));
            let x = DMatrix::<f64>::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
            let noise = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let y = &x * DVector::from_column_slice(&theta) + noise * sigma;
            let beta = x
                .tr_mul(&x)
                .cholesky()
                .ok_or(Error::Singular)?
                .solve(&x.tr_mul(&y));
            let x_new: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let e: f64 = StandardNormal.sample(&mut rng);
            let y_new = dot(&theta, &x_new) + sigma * e;
            Ok(y_new - dot(beta.as_slice(), &x_new))
        })
        .collect::<Result<_>>()?;
    let m = residuals.iter().sum::<f64>() / reps as f64;
    let empirical_variance =
        residuals.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let theoretical_variance = (1.0 + d as f64 / (n - d - 1) as f64) * sigma * sigma;
    Ok(OlsVarianceCheck {
        empirical_variance,
        theoretical_variance,
        ratio: empirical_variance / theoretical_variance,
    })
}
