//! Repetition loop, per-method interval construction, and aggregation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{
    first_stage_from_refits, first_stage_refits, ExactTwoStage, InexactTwoStage, Interval,
    ObservationalSplit, SplitConformal, TwoStageInterval, WeightedSplitConformal,
    WeightedTransductive, YGrid, DEFAULT_GRID_MARGIN,
};
use crate::data::{Dataset, Matrix, Role};
use crate::density_ratio::{
    fit_covariate_ratio, fit_density_ratio, fit_propensity_ratio, RatioModel,
};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method, Source, Target};
use crate::harness::io::{load_csv_dataset, CsvSchema};
use crate::harness::metrics::MeanStd;
use crate::ite::bonferroni_ite;
use crate::rng::{derive_seed, seeded};
use crate::synthetic::{generate_synthetic, SyntheticConfig};

/// Splits for one repetition. Index `t` selects the arm.
#[derive(Debug, Clone, PartialEq)]
pub struct RepData {
    pub obs_tr: Dataset,
    pub obs_cal: Dataset,
    pub intr_tr: [Dataset; 2],
    pub intr_cal: [Dataset; 2],
    pub test_x: [Matrix; 2],
    pub test_y: [Vec<f64>; 2],
    /// Test rows of both arms describe the same units in the same order, so
    /// effect intervals can be scored.
    pub paired_test: bool,
}

enum PreparedSource {
    Synthetic(crate::harness::config::SyntheticSource),
    Csv {
        obs: Dataset,
        intr: [Dataset; 2],
        test: [Dataset; 2],
    },
}

fn prepare_source(cfg: &ExperimentConfig) -> Result<PreparedSource> {
    match &cfg.source {
        Source::Synthetic(s) => Ok(PreparedSource::Synthetic(s.clone())),
        Source::Csv { path } => {
            let schema = CsvSchema {
                require_treatment: true,
                require_role: true,
                dim: None,
            };
            let all = load_csv_dataset(path, &schema)?;
            let strip = |d: Dataset| Dataset { role: None, ..d };
            let obs = strip(all.with_role_only(Role::Observational)?);
            let intr_all = all.with_role_only(Role::Interventional)?;
            let test_all = all.with_role_only(Role::Test)?;
            let intr = [strip(intr_all.arm(0)?), strip(intr_all.arm(1)?)];
            let test = [strip(test_all.arm(0)?), strip(test_all.arm(1)?)];
            let s = &cfg.splits;
            if s.n_tr + s.n_cal > obs.len() {
                return Err(Error::InvalidParameter(format!(
                    "observational splits need {} rows, file has {}",
                    s.n_tr + s.n_cal,
                    obs.len()
                )));
            }
            for t in 0..2 {
                if s.m_tr + s.m_cal > intr[t].len() {
                    return Err(Error::InvalidParameter(format!(
                        "interventional splits need {} rows for arm {t}, file has {}",
                        s.m_tr + s.m_cal,
                        intr[t].len()
                    )));
                }
                if test[t].is_empty() {
                    return Err(Error::InvalidParameter(format!("no test rows for arm {t}")));
                }
            }
            Ok(PreparedSource::Csv { obs, intr, test })
        }
    }
}

fn shuffled(data: &Dataset, rng: &mut crate::rng::Rng) -> Dataset {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    data.select(&idx)
}

fn rep_data(cfg: &ExperimentConfig, source: &PreparedSource, rep: usize) -> Result<RepData> {
    let s = cfg.splits;
    let seed = derive_seed(cfg.seed, rep as u64);
    match source {
        PreparedSource::Synthetic(src) => {
            let syn = SyntheticConfig {
                d: src.d,
                n_obs: s.n_tr + s.n_cal,
                m_int: s.m_tr + s.m_cal,
                n_test: s.m_ts,
                a: src.a,
                b: src.b,
                c: src.c,
                noise_scale: src.noise_scale,
                seed,
            };
            let set = generate_synthetic(&syn)?;
            let obs = &set.observational;
            let intr = &set.interventional;
            Ok(RepData {
                obs_tr: obs.slice(0..s.n_tr),
                obs_cal: obs.slice(s.n_tr..obs.len()),
                intr_tr: [intr[0].slice(0..s.m_tr), intr[1].slice(0..s.m_tr)],
                intr_cal: [
                    intr[0].slice(s.m_tr..intr[0].len()),
                    intr[1].slice(s.m_tr..intr[1].len()),
                ],
                test_x: [set.test.x.clone(), set.test.x.clone()],
                test_y: [set.test.y0.clone(), set.test.y1.clone()],
                paired_test: true,
            })
        }
        PreparedSource::Csv { obs, intr, test } => {
            let mut rng = seeded(seed);
            let obs = shuffled(obs, &mut rng);
            let i0 = shuffled(&intr[0], &mut rng);
            let i1 = shuffled(&intr[1], &mut rng);
            let paired = test[0].x == test[1].x;
            Ok(RepData {
                obs_tr: obs.slice(0..s.n_tr),
                obs_cal: obs.slice(s.n_tr..s.n_tr + s.n_cal),
                intr_tr: [i0.slice(0..s.m_tr), i1.slice(0..s.m_tr)],
                intr_cal: [
                    i0.slice(s.m_tr..s.m_tr + s.m_cal),
                    i1.slice(s.m_tr..s.m_tr + s.m_cal),
                ],
                test_x: [test[0].x.clone(), test[1].x.clone()],
                test_y: [test[0].y.clone(), test[1].y.clone()],
                paired_test: paired,
            })
        }
    }
}

/// Intervals for one method on one arm. `None` marks an empty accepted set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArmIntervals {
    pub intervals: Vec<Option<Interval>>,
    pub crossed: usize,
    pub excluded_first_stage: usize,
    pub empty_sets: usize,
}

fn from_two_stage(out: Vec<TwoStageInterval>, excluded: usize) -> ArmIntervals {
    let crossed = out.iter().filter(|o| o.crossed).count();
    ArmIntervals {
        intervals: out.into_iter().map(|o| Some(o.interval)).collect(),
        crossed,
        excluded_first_stage: excluded,
        empty_sets: 0,
    }
}

fn plain(out: Vec<Interval>) -> ArmIntervals {
    ArmIntervals {
        intervals: out.into_iter().map(Some).collect(),
        ..Default::default()
    }
}

/// Builds every requested method's intervals for arm `t`.
pub fn run_arm(
    cfg: &ExperimentConfig,
    data: &RepData,
    t: u8,
) -> Result<BTreeMap<Method, ArmIntervals>> {
    let alpha = cfg.arm_alpha();
    let reg = &cfg.regressor;
    let ti = t as usize;
    let obs_tr_t = data.obs_tr.arm(t)?;
    let obs_cal_t = data.obs_cal.arm(t)?;
    let intr_tr = &data.intr_tr[ti];
    let intr_cal = &data.intr_cal[ti];
    let test_x = &data.test_x[ti];
    let wants = |m: Method| cfg.methods.contains(&m);
    let mut out = BTreeMap::new();

    if wants(Method::Naive) {
        let scp = SplitConformal::fit(intr_tr, intr_cal, alpha, reg)?;
        out.insert(
            Method::Naive,
            plain(
                test_x
                    .rows()
                    .map(|x| scp.interval(x))
                    .collect::<Result<_>>()?,
            ),
        );
    }

    if wants(Method::Wcp) {
        let propensity = fit_propensity_ratio(&data.obs_tr, t, &cfg.propensity_classifier)?;
        let wcp = WeightedSplitConformal::fit(&obs_tr_t, &obs_cal_t, propensity, alpha, reg)?;
        out.insert(
            Method::Wcp,
            plain(
                test_x
                    .rows()
                    .map(|x| wcp.interval(x))
                    .collect::<Result<_>>()?,
            ),
        );
    }

    let joint_ratio = if [Method::WscpDrInexact, Method::WscpDrExact, Method::WtcpDr]
        .into_iter()
        .any(wants)
    {
        Some(fit_density_ratio(
            &obs_tr_t,
            intr_tr,
            &cfg.ratio_classifier,
        )?)
    } else {
        None
    };
    let covariate_ratio = if [Method::WscpDrStarInexact, Method::WscpDrStarExact]
        .into_iter()
        .any(wants)
    {
        Some(fit_covariate_ratio(
            &obs_tr_t.x,
            &intr_tr.x,
            &cfg.ratio_classifier,
        )?)
    } else {
        None
    };

    let stage_methods: Vec<(&RatioModel, Method, Method)> = [
        (
            joint_ratio.as_ref(),
            Method::WscpDrInexact,
            Method::WscpDrExact,
        ),
        (
            covariate_ratio.as_ref(),
            Method::WscpDrStarInexact,
            Method::WscpDrStarExact,
        ),
    ]
    .into_iter()
    .filter_map(|(r, inexact, exact)| r.map(|r| (r, inexact, exact)))
    .filter(|&(_, inexact, exact)| wants(inexact) || wants(exact))
    .collect();
    if !stage_methods.is_empty() {
        // Interventional rows ordered training block first: the exact method
        // fits its bound regressors on that block. Refits are shared by both
        // ratio variants.
        let intr_all = intr_tr.concat(intr_cal)?;
        let split = ObservationalSplit {
            fit: &obs_tr_t,
            calibration: &obs_cal_t,
        };
        let refits = first_stage_refits(split, &intr_all, reg, cfg.shared_fit)?;
        for (ratio, inexact, exact) in stage_methods {
            let cal_ratios = ratio.ratios(&obs_cal_t)?;
            let intr_ratios = ratio.ratios(&intr_all)?;
            let first =
                first_stage_from_refits(&refits, &intr_all, &cal_ratios, &intr_ratios, alpha)?;
            if wants(inexact) {
                let stage = InexactTwoStage::fit(&first, reg)?;
                let ivs = test_x
                    .rows()
                    .map(|x| stage.interval(x))
                    .collect::<Result<_>>()?;
                out.insert(inexact, from_two_stage(ivs, stage.excluded()));
            }
            if wants(exact) {
                let stage = ExactTwoStage::fit(&first, intr_tr.len(), alpha, reg)?;
                let ivs = test_x
                    .rows()
                    .map(|x| stage.interval(x))
                    .collect::<Result<_>>()?;
                // Infinite first stages in the calibration block become
                // infinite scores rather than exclusions; count all of them.
                out.insert(exact, from_two_stage(ivs, first.infinite_count()));
            }
        }
    }

    if wants(Method::WtcpDr) {
        let ratio = joint_ratio.as_ref().expect("fitted above");
        out.insert(
            Method::WtcpDr,
            transductive_arm(cfg, &obs_cal_t, intr_tr, ratio, test_x, alpha)?,
        );
    }
    Ok(out)
}

fn transductive_arm(
    cfg: &ExperimentConfig,
    obs: &Dataset,
    intr_tr: &Dataset,
    ratio: &RatioModel,
    test_x: &Matrix,
    alpha: f64,
) -> Result<ArmIntervals> {
    let mut pooled = obs.y.clone();
    pooled.extend_from_slice(&intr_tr.y);
    let grid = YGrid::around(&pooled, DEFAULT_GRID_MARGIN, cfg.grid_points)?;
    let runner = WeightedTransductive::new(obs, Some(ratio), &cfg.regressor)?;
    let mut out = ArmIntervals::default();
    for x in test_x.rows().take(cfg.wtcp_test_points) {
        let mut res = runner.interval(x, alpha, &grid)?;
        if res.is_degenerate() {
            res = runner.interval(x, alpha, &grid.widened(2.0))?;
        }
        if res.hull.is_none() {
            out.empty_sets += 1;
        }
        out.intervals.push(res.hull);
    }
    Ok(out)
}

/// One row of per-repetition output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    pub target: Target,
    pub n_points: usize,
    pub coverage: f64,
    /// `+inf` when any interval is unbounded.
    pub width: f64,
    pub finite_width: f64,
    pub infinite_intervals: usize,
    pub crossed: usize,
    pub excluded_first_stage: usize,
    pub empty_sets: usize,
}

/// Fixed column order of the per-repetition CSV.
pub const RECORD_COLUMNS: [&str; 11] = [
    "rep",
    "method",
    "target",
    "n_points",
    "coverage",
    "width",
    "finite_width",
    "infinite_intervals",
    "crossed",
    "excluded_first_stage",
    "empty_sets",
];

fn score(
    rep: usize,
    method: Method,
    target: Target,
    intervals: &[Option<Interval>],
    truths: &[f64],
) -> RepRecord {
    let n = intervals.len();
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|(c, &y)| c.is_some_and(|c| c.contains(y)))
        .count();
    // Empty accepted sets have zero width.
    let widths: Vec<f64> = intervals
        .iter()
        .map(|c| c.map_or(0.0, |c| c.width()))
        .collect();
    let finite: Vec<f64> = widths.iter().copied().filter(|w| w.is_finite()).collect();
    let infinite_intervals = n - finite.len();
    let finite_width = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    RepRecord {
        rep,
        method,
        target,
        n_points: n,
        coverage: hits as f64 / n as f64,
        width: if infinite_intervals > 0 {
            f64::INFINITY
        } else {
            finite_width
        },
        finite_width,
        infinite_intervals,
        crossed: 0,
        excluded_first_stage: 0,
        empty_sets: intervals.iter().filter(|c| c.is_none()).count(),
    }
}

/// Runs one repetition and scores every method on Y(0), Y(1) and, when
/// test rows are paired, the effect.
pub fn run_repetition(
    cfg: &ExperimentConfig,
    data: &RepData,
    rep: usize,
) -> Result<Vec<RepRecord>> {
    let arms = [run_arm(cfg, data, 0)?, run_arm(cfg, data, 1)?];
    let mut records = Vec::new();
    for &method in &cfg.methods {
        let per_arm = [&arms[0][&method], &arms[1][&method]];
        for t in 0..2u8 {
            let a = per_arm[t as usize];
            let n = a.intervals.len();
            let mut r = score(
                rep,
                method,
                Target::arm(t),
                &a.intervals,
                &data.test_y[t as usize][..n],
            );
            r.crossed = a.crossed;
            r.excluded_first_stage = a.excluded_first_stage;
            records.push(r);
        }
        if data.paired_test {
            let n = per_arm[0].intervals.len().min(per_arm[1].intervals.len());
            let ite: Vec<Option<Interval>> = (0..n)
                .map(
                    |i| match (per_arm[1].intervals[i], per_arm[0].intervals[i]) {
                        (Some(c1), Some(c0)) => bonferroni_ite(&c1, &c0).map(Some),
                        _ => Ok(None),
                    },
                )
                .collect::<Result<_>>()?;
            let truths: Vec<f64> = (0..n)
                .map(|i| data.test_y[1][i] - data.test_y[0][i])
                .collect();
            let mut r = score(rep, method, Target::Ite, &ite, &truths);
            r.crossed = per_arm[0].crossed + per_arm[1].crossed;
            r.excluded_first_stage =
                per_arm[0].excluded_first_stage + per_arm[1].excluded_first_stage;
            records.push(r);
        }
    }
    Ok(records)
}

/// Aggregate over repetitions for one method and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub target: Target,
    pub reps: usize,
    pub coverage: MeanStd,
    /// Over per-repetition mean widths; unbounded if any repetition was.
    pub width: MeanStd,
    /// Over per-repetition means of bounded intervals only.
    pub finite_width: MeanStd,
    pub infinite_intervals: usize,
    pub crossed: usize,
    pub excluded_first_stage: usize,
    pub empty_sets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub records: Vec<RepRecord>,
}

impl ExperimentReport {
    pub fn row(&self, method: Method, target: Target) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.target == target)
    }

    /// Summary rows as pretty JSON. Unbounded means serialize as `null`.
    pub fn write_summary_json<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            config: &'a ExperimentConfig,
            rows: &'a [ReportRow],
        }
        serde_json::to_writer_pretty(
            writer,
            &Summary {
                config: &self.config,
                rows: &self.rows,
            },
        )?;
        Ok(())
    }

    /// One line per (method, target, repetition) with [`RECORD_COLUMNS`].
    pub fn write_records_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(RECORD_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.rep.to_string(),
                r.method.to_string(),
                r.target.to_string(),
                r.n_points.to_string(),
                r.coverage.to_string(),
                r.width.to_string(),
                r.finite_width.to_string(),
                r.infinite_intervals.to_string(),
                r.crossed.to_string(),
                r.excluded_first_stage.to_string(),
                r.empty_sets.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn aggregate(records: &[RepRecord]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(Method, Target), Vec<&RepRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method, r.target)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, target), rs)| {
            let col = |f: fn(&RepRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let finite: Vec<f64> = col(|r| r.finite_width)
                .into_iter()
                .filter(|v| !v.is_nan())
                .collect();
            ReportRow {
                method,
                target,
                reps: rs.len(),
                coverage: MeanStd::of(&col(|r| r.coverage)),
                width: MeanStd::of(&col(|r| r.width)),
                finite_width: MeanStd::of(&finite),
                infinite_intervals: rs.iter().map(|r| r.infinite_intervals).sum(),
                crossed: rs.iter().map(|r| r.crossed).sum(),
                excluded_first_stage: rs.iter().map(|r| r.excluded_first_stage).sum(),
                empty_sets: rs.iter().map(|r| r.empty_sets).sum(),
            }
        })
        .collect()
}

/// The data a given repetition sees; exposed for inspection and tests.
pub fn repetition_data(cfg: &ExperimentConfig, rep: usize) -> Result<RepData> {
    cfg.validate()?;
    rep_data(cfg, &prepare_source(cfg)?, rep)
}

/// Runs all repetitions (concurrently, with seeds derived from `cfg.seed`)
/// and aggregates. Results do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let source = prepare_source(cfg)?;
    let per_rep: Vec<Vec<RepRecord>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, &rep_data(cfg, &source, rep)?, rep))
        .collect::<Result<_>>()?;
    let mut records: Vec<RepRecord> = per_rep.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.method, r.target, r.rep));
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows: aggregate(&records),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Covariate dimension of the synthetic source.
    D,
    /// Interventional rows per arm, split evenly between training and
    /// calibration.
    M,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d" => Ok(SweepParam::D),
            "m" => Ok(SweepParam::M),
            _ => Err(Error::InvalidParameter(format!(
                "unknown sweep parameter `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: usize,
    pub report: ExperimentReport,
}

/// Reruns the experiment for each value of `param`; every point reuses
/// `cfg.seed`.
pub fn sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[usize],
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Empty("sweep values"));
    }
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match param {
                SweepParam::D => match &mut c.source {
                    Source::Synthetic(s) => s.d = v,
                    Source::Csv { .. } => {
                        return Err(Error::InvalidParameter(
                            "dimension sweeps need the synthetic source".into(),
                        ))
                    }
                },
                SweepParam::M => {
                    if v < 2 {
                        return Err(Error::InvalidParameter(format!(
                            "m must be at least 2, got {v}"
                        )));
                    }
                    c.splits.m_tr = v / 2;
                    c.splits.m_cal = v - v / 2;
                }
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    values
        .iter()
        .zip(&configs)
        .map(|(&value, c)| {
            Ok(SweepPoint {
                value,
                report: run_experiment(c)?,
            })
        })
        .collect()
}

/// Per-point rows of a sweep, prefixed by the swept value.
pub fn write_sweep_csv<W: Write>(
    writer: W,
    param: SweepParam,
    points: &[SweepPoint],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let name = match param {
        SweepParam::D => "d",
        SweepParam::M => "m",
    };
    w.write_record(
        [
            name,
            "method",
            "target",
            "reps",
            "coverage_mean",
            "coverage_std",
            "width_mean",
            "width_std",
        ]
        .iter(),
    )?;
    for p in points {
        for r in &p.report.rows {
            w.write_record([
                p.value.to_string(),
                r.method.to_string(),
                r.target.to_string(),
                r.reps.to_string(),
                r.coverage.mean.to_string(),
                r.coverage.std.to_string(),
                r.width.mean.to_string(),
                r.width.std.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
