use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cfcp_core::gaussian_case::{
    dissimilarity, ols_residual_variance_check, width_comparison, GaussianConfig, RatioChoice,
    WidthComparisonOptions,
};
use cfcp_core::harness::{
    run_experiment, save_csv_dataset, sweep, write_sweep_csv, ExperimentConfig, ExperimentReport,
    Method, OutputFormat, Source, SweepParam,
};
use cfcp_core::predictors::{ClassifierSpec, RegressorSpec};
use cfcp_core::synthetic::{generate_synthetic, SyntheticConfig};

#[derive(Parser)]
#[command(
    name = "cfcp",
    version,
    about = "Conformal intervals for counterfactual outcomes and treatment effects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment on the synthetic confounded benchmark.
    Synth(ExperimentArgs),
    /// Run the experiment on a role-tagged CSV file.
    Run {
        /// CSV with columns x0..x{d-1}, t, y, role.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        args: ExperimentArgs,
    },
    /// Repeat the synthetic experiment over several values of one parameter.
    Sweep {
        #[arg(long, value_parser = parse_sweep_param)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[command(flatten)]
        args: ExperimentArgs,
    },
    /// Width comparison on the linear-Gaussian testbed, plus the OLS
    /// residual-variance check.
    Gaussian(GaussianArgs),
    /// Write one synthetic draw in the CSV schema.
    Generate {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 10_000)]
        n_obs: usize,
        #[arg(long, default_value_t = 250)]
        m_int: usize,
        #[arg(long, default_value_t = 200)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_sweep_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: cfcp_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: cfcp_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: cfcp_core::Error| e.to_string())
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML file with any subset of the experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated subset of naive, wcp, wtcp_dr, wscp_dr_inexact,
    /// wscp_dr_exact, wscp_dr_star_inexact, wscp_dr_star_exact.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Observational rows, split evenly into training and calibration.
    #[arg(long)]
    n_obs: Option<usize>,
    /// Interventional rows per arm, split evenly into training and calibration.
    #[arg(long)]
    m_int: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// Fit the first-stage model once instead of once per interventional row.
    #[arg(long)]
    shared_fit: bool,
    /// Run each arm at alpha/2.
    #[arg(long)]
    split_alpha: bool,
    /// Base regressor: `boosted` or `ridge`.
    #[arg(long)]
    regressor: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
}

impl ExperimentArgs {
    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<ExperimentConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                toml::from_str::<ExperimentConfig>(&text)
                    .map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = &self.methods {
            cfg.methods = v.clone();
        }
        if let Some(n) = self.n_obs {
            cfg.splits.n_tr = n / 2;
            cfg.splits.n_cal = n - n / 2;
        }
        if let Some(m) = self.m_int {
            cfg.splits.m_tr = m / 2;
            cfg.splits.m_cal = m - m / 2;
        }
        if let Some(v) = self.n_test {
            cfg.splits.m_ts = v;
        }
        if let Some(d) = self.dim {
            match &mut cfg.source {
                Source::Synthetic(s) => s.d = d,
                Source::Csv { .. } => {
                    return Err("--dim applies to the synthetic source only".into())
                }
            }
        }
        if let Some(v) = self.reps {
            cfg.reps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.grid_points {
            cfg.grid_points = v;
        }
        if self.shared_fit {
            cfg.shared_fit = true;
        }
        if self.split_alpha {
            cfg.split_alpha = true;
        }
        match self.regressor.as_deref() {
            None => {}
            Some("boosted") => cfg.regressor = RegressorSpec::default(),
            Some("ridge") => cfg.regressor = RegressorSpec::ridge(1e-6),
            Some(other) => {
                return Err(format!("unknown regressor `{other}`; use boosted or ridge"))
            }
        }
        if let Some(p) = &self.out {
            cfg.output.path = Some(p.clone());
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GaussianArgs {
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 2000)]
    n_obs: usize,
    #[arg(long, default_value_t = 50)]
    m_int: usize,
    /// Test points per repetition.
    #[arg(long, default_value_t = 10)]
    n_test: usize,
    /// Size of the shift added to the first interventional coefficient.
    #[arg(long, default_value_t = 0.1)]
    gap: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    grid_points: usize,
    /// Use a fitted classifier ratio instead of the analytic one.
    #[arg(long)]
    fitted_ratio: bool,
    /// Repetitions of the OLS residual-variance check (0 skips it).
    #[arg(long, default_value_t = 2000)]
    ols_reps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct GaussianOutput {
    dissimilarity: f64,
    comparison: cfcp_core::gaussian_case::WidthComparison,
    ols: Option<cfcp_core::gaussian_case::OlsVarianceCheck>,
}

fn run_gaussian(args: &GaussianArgs) -> Result<(), String> {
    let theta_o = vec![1.0; args.dim];
    let mut theta_i = theta_o.clone();
    theta_i[0] += args.gap;
    let mut cfg = GaussianConfig::isotropic(theta_o, theta_i, args.sigma, args.n_obs, args.m_int);
    cfg.n_test = args.n_test;
    cfg.seed = args.seed;
    let dis = dissimilarity(&cfg).map_err(|e| e.to_string())?;
    let opts = WidthComparisonOptions {
        alpha: args.alpha,
        grid_points: args.grid_points,
        reps: args.reps,
        ratio: if args.fitted_ratio {
            RatioChoice::Fitted(ClassifierSpec::default())
        } else {
            RatioChoice::Oracle
        },
        ..Default::default()
    };
    let comparison = width_comparison(&cfg, &opts).map_err(|e| e.to_string())?;
    let ols = if args.ols_reps > 0 {
        Some(
            ols_residual_variance_check(500, args.dim, args.sigma, args.ols_reps, args.seed)
                .map_err(|e| e.to_string())?,
        )
    } else {
        None
    };
    println!("dissimilarity               {dis:.3}");
    println!(
        "reps with weighted <= naive {:.3}",
        comparison.fraction_wtcp_not_wider
    );
    println!(
        "median width weighted       {:.4} (min {:.4}, max {:.4})",
        comparison.wtcp_median.median, comparison.wtcp_median.min, comparison.wtcp_median.max
    );
    println!(
        "median width naive          {:.4} (min {:.4}, max {:.4})",
        comparison.naive_median.median, comparison.naive_median.min, comparison.naive_median.max
    );
    println!(
        "effective sample size       {:.1} (min {:.1})",
        comparison.n_eff.median, comparison.n_eff.min
    );
    if let Some(o) = &ols {
        println!("OLS variance ratio          {:.4}", o.ratio);
    }
    if let Some(path) = &args.out {
        let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::to_writer_pretty(
            BufWriter::new(file),
            &GaussianOutput {
                dissimilarity: dis,
                comparison,
                ols,
            },
        )
        .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn print_report(report: &ExperimentReport) {
    println!(
        "{:<22} {:<6} {:>16} {:>20}",
        "method", "target", "coverage", "width"
    );
    for r in &report.rows {
        let mut flags = Vec::new();
        if r.infinite_intervals > 0 {
            flags.push(format!("{} unbounded", r.infinite_intervals));
        }
        if r.crossed > 0 {
            flags.push(format!("{} crossed", r.crossed));
        }
        if r.empty_sets > 0 {
            flags.push(format!("{} empty", r.empty_sets));
        }
        let width = if r.width.mean.is_finite() {
            format!("{:.3} ± {:.3}", r.width.mean, r.width.std)
        } else {
            format!("inf (finite {:.3})", r.finite_width.mean)
        };
        println!(
            "{:<22} {:<6} {:>16} {:>20}  {}",
            r.method.as_str(),
            r.target.as_str(),
            format!("{:.3} ± {:.3}", r.coverage.mean, r.coverage.std),
            width,
            flags.join(", ")
        );
    }
}

fn summary_path(path: &Path) -> PathBuf {
    path.with_extension("summary.json")
}

fn emit(report: &ExperimentReport) -> Result<(), String> {
    print_report(report);
    let Some(path) = &report.config.output.path else {
        return Ok(());
    };
    let open = |p: &Path| {
        File::create(p)
            .map(BufWriter::new)
            .map_err(|e| format!("{}: {e}", p.display()))
    };
    match report.config.output.format {
        OutputFormat::Csv => {
            report
                .write_records_csv(open(path)?)
                .map_err(|e| e.to_string())?;
            report
                .write_summary_json(open(&summary_path(path))?)
                .map_err(|e| e.to_string())?;
        }
        OutputFormat::Json => report
            .write_summary_json(open(path)?)
            .map_err(|e| e.to_string())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Synth(args) => {
            let cfg = args.resolve()?;
            if !matches!(cfg.source, Source::Synthetic(_)) {
                return Err("the config file selects a CSV source; use `run`".into());
            }
            emit(&run_experiment(&cfg).map_err(|e| e.to_string())?)
        }
        Command::Run { data, args } => {
            if args.dim.is_some() {
                return Err("--dim applies to the synthetic source only".into());
            }
            let mut cfg = args.resolve()?;
            cfg.source = Source::Csv { path: data };
            emit(&run_experiment(&cfg).map_err(|e| e.to_string())?)
        }
        Command::Sweep {
            param,
            values,
            args,
        } => {
            let cfg = args.resolve()?;
            let points = sweep(&cfg, param, &values).map_err(|e| e.to_string())?;
            for p in &points {
                println!(
                    "== {} = {}",
                    if param == SweepParam::D { "d" } else { "m" },
                    p.value
                );
                print_report(&p.report);
            }
            if let Some(path) = &cfg.output.path {
                let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
                match cfg.output.format {
                    OutputFormat::Csv => write_sweep_csv(BufWriter::new(file), param, &points)
                        .map_err(|e| e.to_string())?,
                    OutputFormat::Json => {
                        let rows: Vec<_> =
                            points.iter().map(|p| (p.value, &p.report.rows)).collect();
                        serde_json::to_writer_pretty(BufWriter::new(file), &rows)
                            .map_err(|e| e.to_string())?
                    }
                }
            }
            Ok(())
        }
        Command::Gaussian(args) => run_gaussian(&args),
        Command::Generate {
            dim,
            n_obs,
            m_int,
            n_test,
            seed,
            out,
        } => {
            let cfg = SyntheticConfig {
                d: dim,
                n_obs,
                m_int,
                n_test,
                seed,
                ..Default::default()
            };
            let set = generate_synthetic(&cfg).map_err(|e| e.to_string())?;
            let data = set.to_dataset().map_err(|e| e.to_string())?;
            save_csv_dataset(&out, &data).map_err(|e| format!("{}: {e}", out.display()))?;
            writeln!(
                io::stdout(),
                "wrote {} rows to {}",
                data.len(),
                out.display()
            )
            .map_err(|e| e.to_string())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
