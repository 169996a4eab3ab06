//! Confounded synthetic benchmark.
//!
//! Latent `U, Z ~ N(0, I_d)`, covariates `X = Z * (a^2 (1 - U) + b^2 U) + U`
//! coordinate-wise, and with `u = mean(U)`:
//!
//! ```text
//! rho  = clamp(c u + (1 - c)(1 - u), 0, 1),  T ~ Bernoulli(rho)
//! Y(1) = sigmoid(3 (u + 2)) + noise * e1
//! Y(0) = sigmoid(3 (u - 2)) + noise * e0
//! ```
//!
//! Observational rows keep the selected treatment. Interventional rows are
//! fresh draws with the treatment forced, so their covariates follow the
//! marginal of `X`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, Role};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub d: usize,
    pub n_obs: usize,
    /// Interventional rows per arm.
    pub m_int: usize,
    pub n_test: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            d: 1,
            n_obs: 10_000,
            m_int: 250,
            n_test: 200,
            a: 5.0,
            b: 3.0,
            c: 0.9,
            noise_scale: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidParameter("d must be positive".into()));
        }
        if self.n_obs == 0 || self.m_int == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter(
                "sample sizes must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::InvalidParameter(format!(
                "c must lie in [0, 1], got {}",
                self.c
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidParameter(
                "noise_scale must be finite and non-negative".into(),
            ));
        }
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidParameter("a and b must be finite".into()));
        }
        Ok(())
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One structural draw with both potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub u_bar: f64,
    pub rho: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Unit {
    pub fn outcome(&self, t: u8) -> f64 {
        if t == 1 {
            self.y1
        } else {
            self.y0
        }
    }
}

/// Treatment probability given the confounder mean.
pub fn treatment_probability(c: f64, u_bar: f64) -> f64 {
    (c * u_bar + (1.0 - c) * (1.0 - u_bar)).clamp(0.0, 1.0)
}

pub fn draw_unit(cfg: &SyntheticConfig, rng: &mut Rng) -> Unit {
    let d = cfg.d;
    let u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let (a2, b2) = (cfg.a * cfg.a, cfg.b * cfg.b);
    let x = u
        .iter()
        .zip(&z)
        .map(|(&u, &z)| z * (a2 * (1.0 - u) + b2 * u) + u)
        .collect();
    let u_bar = u.iter().sum::<f64>() / d as f64;
    let e1: f64 = StandardNormal.sample(rng);
    let e0: f64 = StandardNormal.sample(rng);
    Unit {
        u,
        x,
        u_bar,
        rho: treatment_probability(cfg.c, u_bar),
        y1: sigmoid(3.0 * (u_bar + 2.0)) + cfg.noise_scale * e1,
        y0: sigmoid(3.0 * (u_bar - 2.0)) + cfg.noise_scale * e0,
    }
}

/// Test rows with both potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub x: Matrix,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.y0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y0.is_empty()
    }

    pub fn outcome(&self, t: u8) -> &[f64] {
        if t == 1 {
            &self.y1
        } else {
            &self.y0
        }
    }

    pub fn ite(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalSampleSet {
    /// Rows `(x, t, y)` with `t` selected by the confounder.
    pub observational: Dataset,
    /// `interventional[t]` holds rows `(x, y(t))` under `do(T = t)`.
    pub interventional: [Dataset; 2],
    pub test: TestSet,
}

impl CausalSampleSet {
    /// All rows in one dataset with role tags; test rows appear once per arm
    /// with that arm's potential outcome.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let mut out = self
            .observational
            .clone()
            .with_role(vec![Role::Observational; self.observational.len()])?;
        for t in 0..2u8 {
            let intr = &self.interventional[t as usize];
            let rows = intr
                .clone()
                .with_treatment(vec![t; intr.len()])?
                .with_role(vec![Role::Interventional; intr.len()])?;
            out = out.concat(&rows)?;
        }
        for t in 0..2u8 {
            let n = self.test.len();
            let rows = Dataset::new(self.test.x.clone(), self.test.outcome(t).to_vec())?
                .with_treatment(vec![t; n])?
                .with_role(vec![Role::Test; n])?;
            out = out.concat(&rows)?;
        }
        Ok(out)
    }
}

/// Draws observational, interventional (arm 0 then arm 1) and test rows in
/// that order from a generator seeded with `cfg.seed`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<CausalSampleSet> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    generate_with(cfg, &mut rng)
}

pub fn generate_with(cfg: &SyntheticConfig, rng: &mut Rng) -> Result<CausalSampleSet> {
    cfg.validate()?;
    let d = cfg.d;

    let mut x = Matrix::with_cols(d);
    let mut y = Vec::with_capacity(cfg.n_obs);
    let mut t = Vec::with_capacity(cfg.n_obs);
    for _ in 0..cfg.n_obs {
        let unit = draw_unit(cfg, rng);
        let treated = u8::from(rng.random::<f64>() < unit.rho);
        x.push_row(&unit.x)?;
        y.push(unit.outcome(treated));
        t.push(treated);
    }
    let observational = Dataset::new(x, y)?.with_treatment(t)?;

    let mut forced = |arm: u8| -> Result<Dataset> {
        let mut x = Matrix::with_cols(d);
        let mut y = Vec::with_capacity(cfg.m_int);
        for _ in 0..cfg.m_int {
            let unit = draw_unit(cfg, rng);
            x.push_row(&unit.x)?;
            y.push(unit.outcome(arm));
        }
        Dataset::new(x, y)
    };
    let intr0 = forced(0)?;
    let intr1 = forced(1)?;

    let mut x = Matrix::with_cols(d);
    let (mut y0, mut y1) = (
        Vec::with_capacity(cfg.n_test),
        Vec::with_capacity(cfg.n_test),
    );
    for _ in 0..cfg.n_test {
        let unit = draw_unit(cfg, rng);
        x.push_row(&unit.x)?;
        y0.push(unit.y0);
        y1.push(unit.y1);
    }

    Ok(CausalSampleSet {
        observational,
        interventional: [intr0, intr1],
        test: TestSet { x, y0, y1 },
    })
}
