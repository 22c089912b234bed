use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vdlab_core::analytics::VerificationMode;
use vdlab_core::cv::GridSearchOptions;
use vdlab_core::dataset::{generate_synthetic_dataset, load_dataset, write_dataset, Dataset, Partition};
use vdlab_core::gmm::Criterion;
use vdlab_core::scenario::{
    analytic_sweep, load_configs, measured_t_v, published_t_v, run_sweep, validate_cell, write_analytic_csv, Estimator,
    ScenarioConfig, BLOCK_LIMITS,
};
use vdlab_core::sim::standard_miners;
use vdlab_core::workload::{fit_workload, sample_transactions, FittedWorkload, WorkloadFitOptions};
use vdlab_core::PowerProfile;

#[derive(Parser)]
#[command(
    name = "vdlab",
    version,
    about = "Verification cost, mining rewards and workload modelling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit gas-price and used-gas mixtures and a CPU-time forest to a dataset.
    Fit(FitArgs),
    /// Draw transactions from a fitted workload.
    Sample(SampleArgs),
    /// Closed-form reward table over the standard block limits.
    Analytic(AnalyticArgs),
    /// Run simulation sweeps and write results and summary CSVs.
    Simulate(SimulateArgs),
    /// Compare simulated non-verifier gains with the closed form.
    Validate(ValidateArgs),
    /// Write a synthetic transaction dataset.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Transaction CSV (`used_gas,gas_limit,gas_price,cpu_time_s`).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "execution")]
    partition: Partition,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long, default_value = "bic")]
    criterion: Criterion,
    /// Forest sizes to search.
    #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100, 200, 500])]
    trees: Vec<usize>,
    /// Per-tree split budgets to search.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 10, 50, 150, 300])]
    splits: Vec<usize>,
    /// Fraction of rows held out from the forest for test metrics.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Cap on rows used for cross-validation (0 = all).
    #[arg(long, default_value_t = 5000)]
    cv_rows: usize,
}

#[derive(Args)]
struct SampleArgs {
    /// Fitted-model JSON; the built-in reference workload when omitted.
    #[arg(long)]
    workload: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Conflict rate.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ProfileArgs {
    /// Hash power of the non-verifying miner.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Number of verifying miners sharing the remaining power equally.
    #[arg(long, default_value_t = 9)]
    verifiers: usize,
    #[arg(long, default_value_t = 12.42)]
    t_b: f64,
    #[arg(long, default_value = "sequential")]
    mode: VerificationMode,
    /// Conflict rate.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    /// Processors per verifier.
    #[arg(long, default_value_t = 1)]
    p: u32,
}

#[derive(Args)]
struct AnalyticArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    /// Measure t_v from this fitted workload instead of the published means.
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Use this t_v (seconds) for a single row instead of the sweep.
    #[arg(long)]
    t_v: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// Scenario JSON (one object or a list). Flags below build one when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    profile: ProfileArgs,
    /// Block limits (gas) to sweep when no config file is given.
    #[arg(long, value_delimiter = ',', default_values_t = [8_000_000u64])]
    block_limit: Vec<u64>,
    #[arg(long, default_value_t = 0.0)]
    invalid_rate: f64,
    /// Simulated seconds per run.
    #[arg(long, default_value_t = 3600.0)]
    sim_duration: f64,
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Runs per configuration (overrides the config file).
    #[arg(long)]
    runs: Option<u32>,
    /// First seed (overrides the config file's base_seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Output directory for results.csv and summary.csv.
    #[arg(long, default_value = "vdlab-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Allowed relative difference between simulation and closed form.
    #[arg(long, default_value_t = 0.25)]
    tolerance: f64,
    #[arg(long, default_value = "expected")]
    estimator: Estimator,
    /// Also write the validation table as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value = "execution")]
    partition: Partition,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Fit(a) => fit(a),
        Command::Sample(a) => sample(a),
        Command::Analytic(a) => analytic(a),
        Command::Simulate(a) => simulate(a),
        Command::Validate(a) => return validate(a),
        Command::GenData(a) => gen_data(a),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_workload(path: Option<&Path>) -> Result<FittedWorkload> {
    Ok(match path {
        Some(p) => FittedWorkload::load(p)?,
        None => vdlab_core::scenario::reference_workload().clone(),
    })
}

fn fit(a: FitArgs) -> Result<()> {
    let dataset = load_dataset(&a.data, a.partition)?;
    let opts = WorkloadFitOptions {
        k_min: a.k_min,
        k_max: a.k_max,
        criterion: a.criterion,
        grid: GridSearchOptions {
            trees: a.trees,
            split_budgets: a.splits,
            folds: a.folds,
            seed: a.seed,
        },
        test_fraction: a.test_fraction,
        cv_sample_limit: (a.cv_rows > 0).then_some(a.cv_rows),
        seed: a.seed,
        ..WorkloadFitOptions::default()
    };
    let report = fit_workload(&dataset, &opts)?;
    report.workload.save(&a.out)?;

    let w = &report.workload;
    println!(
        "rows: {} ({} train, {} test)",
        dataset.len(),
        report.train_size,
        report.test_size
    );
    println!("gas price mixture: K = {}", w.gas_price_model.k);
    println!("used gas mixture:  K = {}", w.used_gas_model.k);
    println!(
        "cpu time forest:   d = {}, s = {}",
        report.best.trees, report.best.split_budget
    );
    println!("{:<6} {:>12} {:>12} {:>8}", "split", "MAE", "RMSE", "R2");
    let row = |name: &str, m: &vdlab_core::RegressionMetrics| {
        println!("{name:<6} {:>12.6} {:>12.6} {:>8.4}", m.mae, m.rmse, m.r2)
    };
    row("train", &report.train);
    if let Some(test) = &report.test {
        row("test", test);
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let workload = load_workload(a.workload.as_deref())?;
    let records = sample_transactions(&workload, a.n, a.c, a.seed)?;
    let conflicting = records.iter().filter(|r| r.conflicting).count();
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["used_gas", "gas_limit", "gas_price", "cpu_time_s", "conflicting"])?;
    for r in &records {
        w.serialize((r.used_gas, r.gas_limit, r.gas_price, r.cpu_time, r.conflicting))?;
    }
    w.flush()?;
    if a.out.is_some() {
        println!("sampled {} transactions ({conflicting} conflicting)", records.len());
    }
    Ok(())
}

fn profile(p: &ProfileArgs) -> Result<PowerProfile> {
    if p.verifiers == 0 {
        bail!("need at least one verifier");
    }
    Ok(PowerProfile::single_nonverifier(p.alpha, p.verifiers)?)
}

fn analytic(a: AnalyticArgs) -> Result<()> {
    let prof = profile(&a.profile)?;
    let table = match (a.t_v, &a.workload) {
        (Some(t_v), _) => vec![(0, t_v)],
        (None, Some(path)) => {
            let w = FittedWorkload::load(path)?.compile();
            measured_t_v(&w, &BLOCK_LIMITS, 500, a.seed)
        }
        (None, None) => published_t_v(),
    };
    let p = &a.profile;
    let rows = analytic_sweep(&prof, p.t_b, p.mode, p.c, p.p, &table)?;
    if a.out.is_some() {
        write_analytic_csv(&rows, output(a.out.as_deref())?)?;
    }
    println!("{:>12} {:>8} {:>10} {:>12}", "block_limit", "t_v", "R_s", "gain_pct");
    for r in &rows {
        let m = &r.rows[0];
        println!(
            "{:>12} {:>8.3} {:>10.5} {:>+12.3}",
            r.block_limit, r.t_v, m.expected_fraction, m.relative_gain_pct
        );
    }
    Ok(())
}

fn sweep_configs(a: &SweepArgs) -> Result<Vec<ScenarioConfig>> {
    let mut configs = match &a.config {
        Some(path) => load_configs(path)?,
        None => {
            let p = &a.profile;
            a.block_limit
                .iter()
                .map(|&limit| {
                    let mut c = ScenarioConfig::standard(limit, p.alpha, a.invalid_rate);
                    c.miners = standard_miners(p.alpha, p.verifiers, a.invalid_rate, 1);
                    c.t_b = p.t_b;
                    c.mode = p.mode;
                    c.c = p.c;
                    c.p = p.p;
                    c.sim_duration = a.sim_duration;
                    c.workload = a.workload.clone();
                    c
                })
                .collect()
        }
    };
    for c in &mut configs {
        if let Some(runs) = a.runs {
            c.runs = runs;
        }
        if let Some(seed) = a.seed {
            c.base_seed = seed;
        }
        c.validate()?;
    }
    Ok(configs)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let configs = sweep_configs(&a.sweep)?;
    let report = run_sweep(&configs)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let results = a.out.join("results.csv");
    let summary = a.out.join("summary.csv");
    report.write_results(output(Some(&results))?)?;
    report.write_summary(output(Some(&summary))?)?;

    for cell in &report.cells {
        let tv = &cell.verification_time;
        println!(
            "config {} | limit {} | {} runs | t_v mean {:.3}s sd {:.3} min {:.3} median {:.3} max {:.3}",
            cell.config_id,
            cell.config.block_limit,
            cell.runs.len(),
            tv.mean,
            tv.sd,
            tv.min,
            tv.median,
            tv.max
        );
        for m in cell.miners.iter().filter(|m| !m.verifies || m.produces_invalid) {
            println!(
                "  miner {:>2} alpha {:.3}{}: gain {:+.3}% ± {:.3} (expected {:+.3}% ± {:.3}){}",
                m.miner_id,
                m.alpha,
                if m.produces_invalid { " invalid" } else { "" },
                m.realized_gain.mean,
                m.realized_gain.half_width,
                m.expected_gain.mean,
                m.expected_gain.half_width,
                m.closed_form_gain
                    .filter(|_| !m.produces_invalid)
                    .map_or_else(String::new, |g| format!(", closed form {g:+.3}%"))
            );
        }
    }
    println!("wrote {} and {}", results.display(), summary.display());
    Ok(())
}

/// Exits with status 1 when any cell is outside tolerance.
fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let configs = sweep_configs(&a.sweep)?;
    let report = run_sweep(&configs)?;
    let rows: Vec<_> = report
        .cells
        .iter()
        .flat_map(|c| validate_cell(c, a.tolerance, a.estimator))
        .collect();
    for r in &rows {
        println!("{r}");
    }
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_writer(output(Some(path))?);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} of {} cells passed", rows.len() - failed, rows.len());
    Ok(if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let ds: Dataset = generate_synthetic_dataset(a.n, a.partition, a.seed)?;
    write_dataset(&a.out, &ds)?;
    println!("wrote {} {} transactions to {}", ds.len(), a.partition, a.out.display());
    Ok(())
}
