use std::collections::HashSet;

use cfcp_core::conformal::Interval;
use cfcp_core::harness::experiment::run_arm;
use cfcp_core::harness::{
    repetition_data, run_experiment, save_csv_dataset, sweep, write_sweep_csv, ExperimentConfig,
    Method, RepData, Source, Splits, SweepParam, SyntheticSource, Target, RECORD_COLUMNS,
};
use cfcp_core::ite::bonferroni_ite;
use cfcp_core::predictors::RegressorSpec;
use cfcp_core::synthetic::{generate_synthetic, SyntheticConfig};

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        splits: Splits {
            n_tr: 300,
            n_cal: 300,
            m_tr: 30,
            m_cal: 30,
            m_ts: 25,
        },
        reps: 2,
        seed: 11,
        regressor: RegressorSpec::boosted(15, 0.2, 2),
        ..Default::default()
    }
}

#[test]
fn same_seed_same_report() {
    let cfg = small_config();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    // Debug output is exact for floats and, unlike ==, treats NaN summaries as equal.
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    let c = run_experiment(&ExperimentConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(format!("{:?}", a.records), format!("{:?}", c.records));
}

#[test]
fn report_has_every_method_and_target() {
    let cfg = small_config();
    let report = run_experiment(&cfg).unwrap();
    for &m in &cfg.methods {
        for t in [Target::Y0, Target::Y1, Target::Ite] {
            let row = report
                .row(m, t)
                .unwrap_or_else(|| panic!("missing {m}/{t}"));
            assert_eq!(row.reps, cfg.reps);
            assert!((0.0..=1.0).contains(&row.coverage.mean));
        }
    }
    assert_eq!(report.records.len(), cfg.methods.len() * 3 * cfg.reps);

    let mut csv = Vec::new();
    report.write_records_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), RECORD_COLUMNS.join(","));
    assert_eq!(text.lines().count(), report.records.len() + 1);

    let mut json = Vec::new();
    report.write_summary_json(&mut json).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert!(v["rows"].as_array().unwrap().len() == cfg.methods.len() * 3);
}

#[test]
fn effect_intervals_are_bonferroni_combinations() {
    let cfg = small_config();
    let data = repetition_data(&cfg, 0).unwrap();
    let arms = [
        run_arm(&cfg, &data, 0).unwrap(),
        run_arm(&cfg, &data, 1).unwrap(),
    ];
    for &m in &cfg.methods {
        for (c1, c0) in arms[1][&m].intervals.iter().zip(&arms[0][&m].intervals) {
            let (Some(c1), Some(c0)) = (c1, c0) else {
                continue;
            };
            let ite = bonferroni_ite(c1, c0).unwrap();
            assert_eq!(
                ite,
                Interval::new(c1.lower - c0.upper, c1.upper - c0.lower).unwrap()
            );
            // Any pair of outcomes inside the arm intervals gives an effect inside.
            for (a, b) in [(c1.lower, c0.upper), (c1.upper, c0.lower)] {
                if a.is_finite() && b.is_finite() {
                    assert!(ite.contains(a - b));
                }
            }
        }
    }
}

#[test]
fn repetition_sizes_follow_splits() {
    let cfg = small_config();
    let d: RepData = repetition_data(&cfg, 1).unwrap();
    let s = cfg.splits;
    assert_eq!((d.obs_tr.len(), d.obs_cal.len()), (s.n_tr, s.n_cal));
    for t in 0..2 {
        assert_eq!(d.intr_tr[t].len(), s.m_tr);
        assert_eq!(d.intr_cal[t].len(), s.m_cal);
        assert_eq!(d.test_x[t].nrows(), s.m_ts);
        assert!(d.intr_tr[t]
            .treatment
            .as_ref()
            .is_none_or(|v| v.iter().all(|&x| x as usize == t)));
    }
    assert!(d.paired_test);
}

fn row_keys(d: &cfcp_core::data::Dataset) -> HashSet<Vec<u64>> {
    d.x.rows()
        .zip(&d.y)
        .map(|(x, y)| x.iter().chain([y]).map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn csv_source_round_trips_and_splits_are_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let gen = SyntheticConfig {
        n_obs: 700,
        m_int: 70,
        n_test: 25,
        seed: 3,
        ..Default::default()
    };
    let set = generate_synthetic(&gen).unwrap();
    save_csv_dataset(&path, &set.to_dataset().unwrap()).unwrap();

    let cfg = ExperimentConfig {
        source: Source::Csv { path: path.clone() },
        ..small_config()
    };
    let d = repetition_data(&cfg, 0).unwrap();
    let tr = row_keys(&d.obs_tr);
    let cal = row_keys(&d.obs_cal);
    assert!(tr.is_disjoint(&cal));
    assert_eq!(tr.len() + cal.len(), 600);
    for t in 0..2 {
        assert!(row_keys(&d.intr_tr[t]).is_disjoint(&row_keys(&d.intr_cal[t])));
    }
    let all_obs = row_keys(&set.observational);
    assert!(tr.is_subset(&all_obs) && cal.is_subset(&all_obs));

    let report = run_experiment(&ExperimentConfig {
        methods: vec![Method::Naive, Method::WscpDrInexact],
        ..cfg.clone()
    })
    .unwrap();
    assert!(report.row(Method::Naive, Target::Y1).is_some());

    let too_big = ExperimentConfig {
        splits: Splits {
            n_tr: 5000,
            ..cfg.splits
        },
        ..cfg
    };
    assert!(run_experiment(&too_big).is_err());
}

#[test]
fn dimension_sweep_writes_one_block_per_value() {
    let cfg = ExperimentConfig {
        methods: vec![Method::Naive, Method::Wcp],
        ..small_config()
    };
    let points = sweep(&cfg, SweepParam::D, &[1, 2]).unwrap();
    assert_eq!(points.len(), 2);
    for (p, d) in points.iter().zip([1, 2]) {
        match &p.report.config.source {
            Source::Synthetic(SyntheticSource { d: got, .. }) => assert_eq!(*got, d),
            Source::Csv { .. } => panic!(),
        }
    }
    let mut out = Vec::new();
    write_sweep_csv(&mut out, SweepParam::D, &points).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("d,method,target"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);

    let m_points = sweep(&cfg, SweepParam::M, &[20]).unwrap();
    assert_eq!(
        m_points[0].report.config.splits.m_tr + m_points[0].report.config.splits.m_cal,
        20
    );
    assert!(sweep(&cfg, SweepParam::M, &[1]).is_err());
}

#[test]
fn split_alpha_widens_arm_intervals() {
    let base = ExperimentConfig {
        methods: vec![Method::Naive],
        reps: 1,
        ..small_config()
    };
    let narrow = run_experiment(&base).unwrap();
    let wide = run_experiment(&ExperimentConfig {
        split_alpha: true,
        ..base
    })
    .unwrap();
    for t in [Target::Y0, Target::Y1] {
        assert!(
            wide.row(Method::Naive, t).unwrap().width.mean
                >= narrow.row(Method::Naive, t).unwrap().width.mean
        );
    }
}
