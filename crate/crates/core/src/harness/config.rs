//! Experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::{ClassifierSpec, RegressorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Wcp,
    WtcpDr,
    WscpDrInexact,
    WscpDrExact,
    /// Two-stage method with a covariate-only ratio.
    WscpDrStarInexact,
    WscpDrStarExact,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Naive,
        Method::Wcp,
        Method::WtcpDr,
        Method::WscpDrInexact,
        Method::WscpDrExact,
        Method::WscpDrStarInexact,
        Method::WscpDrStarExact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Wcp => "wcp",
            Method::WtcpDr => "wtcp_dr",
            Method::WscpDrInexact => "wscp_dr_inexact",
            Method::WscpDrExact => "wscp_dr_exact",
            Method::WscpDrStarInexact => "wscp_dr_star_inexact",
            Method::WscpDrStarExact => "wscp_dr_star_exact",
        }
    }

    fn uses_two_stage(self) -> bool {
        matches!(
            self,
            Method::WscpDrInexact
                | Method::WscpDrExact
                | Method::WscpDrStarInexact
                | Method::WscpDrStarExact
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// Quantity an interval is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "y0")]
    Y0,
    #[serde(rename = "y1")]
    Y1,
    #[serde(rename = "ite")]
    Ite,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Y0 => "y0",
            Target::Y1 => "y1",
            Target::Ite => "ite",
        }
    }

    pub fn arm(t: u8) -> Self {
        if t == 1 {
            Target::Y1
        } else {
            Target::Y0
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sample sizes per repetition. Interventional sizes are per arm; `m_ts`
/// is the number of test points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Splits {
    pub n_tr: usize,
    pub n_cal: usize,
    pub m_tr: usize,
    pub m_cal: usize,
    pub m_ts: usize,
}

impl Default for Splits {
    fn default() -> Self {
        Self {
            n_tr: 5000,
            n_cal: 5000,
            m_tr: 125,
            m_cal: 125,
            m_ts: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSource {
    pub d: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub noise_scale: f64,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        Self {
            d: 1,
            a: 5.0,
            b: 3.0,
            c: 0.9,
            noise_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Synthetic(SyntheticSource),
    /// A role-tagged CSV file; rows are reshuffled per repetition.
    Csv {
        path: PathBuf,
    },
}

impl Default for Source {
    fn default() -> Self {
        Source::Synthetic(SyntheticSource::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::InvalidParameter(format!(
                "unknown output format `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub alpha: f64,
    /// Run each arm at `alpha / 2` so effect intervals hold at `1 - alpha`.
    pub split_alpha: bool,
    pub source: Source,
    pub splits: Splits,
    pub reps: usize,
    pub seed: u64,
    pub grid_points: usize,
    /// Fit the first-stage regression once instead of once per
    /// interventional row.
    pub shared_fit: bool,
    /// Test points evaluated by the transductive method per repetition.
    pub wtcp_test_points: usize,
    pub regressor: RegressorSpec,
    pub ratio_classifier: ClassifierSpec,
    pub propensity_classifier: ClassifierSpec,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                Method::Naive,
                Method::Wcp,
                Method::WscpDrInexact,
                Method::WscpDrExact,
                Method::WscpDrStarInexact,
                Method::WscpDrStarExact,
            ],
            alpha: 0.1,
            split_alpha: false,
            source: Source::default(),
            splits: Splits::default(),
            reps: 10,
            seed: 0,
            grid_points: crate::conformal::DEFAULT_GRID_POINTS,
            shared_fit: false,
            wtcp_test_points: 20,
            regressor: RegressorSpec::default(),
            ratio_classifier: ClassifierSpec::default(),
            propensity_classifier: ClassifierSpec::linear(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be positive".into()));
        }
        let s = &self.splits;
        if s.n_tr == 0 || s.n_cal == 0 || s.m_tr == 0 || s.m_cal == 0 || s.m_ts == 0 {
            return Err(Error::InvalidParameter(format!(
                "all split sizes must be positive, got {s:?}"
            )));
        }
        if self.methods.iter().any(|m| m.uses_two_stage()) && s.m_tr + s.m_cal < 2 {
            return Err(Error::InvalidParameter(
                "two-stage methods need at least 2 interventional rows".into(),
            ));
        }
        if self.methods.contains(&Method::WtcpDr) {
            if self.grid_points < 2 {
                return Err(Error::InvalidParameter(
                    "grid_points must be at least 2".into(),
                ));
            }
            if self.wtcp_test_points == 0 {
                return Err(Error::InvalidParameter(
                    "wtcp_test_points must be positive".into(),
                ));
            }
        }
        if let Source::Synthetic(src) = &self.source {
            if src.d == 0 {
                return Err(Error::InvalidParameter("d must be positive".into()));
            }
            if !(0.0..=1.0).contains(&src.c) {
                return Err(Error::InvalidParameter(format!(
                    "c must lie in [0, 1], got {}",
                    src.c
                )));
            }
        }
        self.regressor.validate()?;
        self.ratio_classifier.validate()?;
        self.propensity_classifier.validate()?;
        Ok(())
    }

    /// Per-arm miscoverage level.
    pub fn arm_alpha(&self) -> f64 {
        if self.split_alpha {
            self.alpha / 2.0
        } else {
            self.alpha
        }
    }
}
