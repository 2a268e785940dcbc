use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use supobs::engine::{convergence_metrics, run, write_trace_csv, ConvergenceMetrics, ScenarioConfig};
use supobs::lmi::{check_certificate, Certificate, CheckOptions};
use supobs::model::{case_study_system, CaseStudyParams, LureSystem};

/// Supervisory multi-observer parameter and state estimation.
#[derive(Debug, Parser)]
#[command(name = "supobs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check an observer certificate on the plant's parameter box.
    Check(CheckArgs),
    /// Simulate one scenario and write its trace and metrics.
    Run(RunArgs),
    /// Run a scenario once per value of one setting.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Certificate JSON; the bundled case-study certificate when omitted.
    #[arg(long)]
    certificate: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "supobs-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Scenario whose plant settings define the model; the case study when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Also check every pair of an N-per-axis grid over the box.
    #[arg(long)]
    audit_grid: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulate even if the certificate check fails.
    #[arg(long)]
    skip_check: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    #[value(name = "N")]
    N,
    #[value(name = "lambda")]
    Lambda,
    #[value(name = "alpha")]
    Alpha,
    #[value(name = "M_d")]
    MD,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::N => "N",
            Axis::Lambda => "lambda",
            Axis::Alpha => "alpha",
            Axis::MD => "M_d",
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    axis: Axis,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    values: Vec<String>,
}

enum Failure {
    /// Bad arguments, unreadable or malformed files.
    Usage(String),
    /// Certificate check failure or aborted simulation.
    Domain(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Domain(m) => m,
        }
    }
}

fn usage(context: impl std::fmt::Display, e: supobs::Error) -> Failure {
    match e {
        supobs::Error::Internal(_) => Failure::Domain(format!("{context}: {e}")),
        _ => Failure::Usage(format!("{context}: {e}")),
    }
}

fn load_certificate(path: Option<&Path>) -> Result<Certificate, Failure> {
    match path {
        Some(p) => Certificate::from_path(p).map_err(|e| usage(p.display(), e)),
        None => Ok(Certificate::case_study()),
    }
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::from_path(path).map_err(|e| usage(path.display(), e))
}

fn system_for(plant: &CaseStudyParams) -> Result<LureSystem, Failure> {
    case_study_system(plant).map_err(|e| usage("plant", e))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn verify(cert: &Certificate, system: &LureSystem) -> Result<(), Failure> {
    let report =
        check_certificate(cert, &system.parameter_box, system, CheckOptions::default()).map_err(|e| usage("certificate", e))?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Domain(report.to_text()))
    }
}

fn cmd_check(args: &CheckArgs) -> Result<(), Failure> {
    let cert = load_certificate(args.common.certificate.as_deref())?;
    let plant = match &args.scenario {
        Some(p) => load_scenario(p)?.plant,
        None => CaseStudyParams::default(),
    };
    let system = system_for(&plant)?;
    let options = CheckOptions { audit_grid: args.audit_grid, ..Default::default() };
    let report = check_certificate(&cert, &system.parameter_box, &system, options).map_err(|e| usage("certificate", e))?;
    create_dir(&args.common.out)?;
    write_file(&args.common.out.join("check_report.json"), to_json(&report))?;
    write_file(&args.common.out.join("check_report.txt"), report.to_text())?;
    print!("{}", report.to_text());
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Domain(report.failure.unwrap_or_else(|| "certificate check failed".into())))
    }
}

fn simulate(config: &ScenarioConfig, cert: &Certificate) -> Result<(String, ConvergenceMetrics), Failure> {
    let system = system_for(&config.plant)?;
    let trace = run(config, &system, cert).map_err(|e| usage("scenario", e))?;
    let metrics = convergence_metrics(&trace, trace.margin);
    let mut csv = Vec::new();
    write_trace_csv(&trace, &mut csv).map_err(|e| usage("trace", e))?;
    Ok((String::from_utf8(csv).expect("csv is utf-8"), metrics))
}

fn summary_line(m: &ConvergenceMetrics) -> String {
    let entry = m.entry_time.map_or("never".to_string(), |k| k.to_string());
    format!(
        "steps {} margin {:.6} entry_time {} trailing_err_p {:.6e} trailing_err_x {:.6e} zooms {:?}",
        m.steps, m.margin, entry, m.trailing_max_err_p, m.trailing_max_err_x, m.zoom_instants
    )
}

fn prepare(args: &RunArgs) -> Result<(ScenarioConfig, Certificate), Failure> {
    let mut config = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let cert = load_certificate(args.common.certificate.as_deref())?;
    if !args.skip_check {
        verify(&cert, &system_for(&config.plant)?)?;
    }
    Ok((config, cert))
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let (config, cert) = prepare(args)?;
    let (csv, metrics) = simulate(&config, &cert)?;
    create_dir(&args.common.out)?;
    write_file(&args.common.out.join("trace.csv"), csv)?;
    write_file(&args.common.out.join("metrics.json"), to_json(&metrics))?;
    println!("{}", summary_line(&metrics));
    match metrics.aborted {
        Some(reason) => Err(Failure::Domain(reason)),
        None => Ok(()),
    }
}

fn apply(config: &mut ScenarioConfig, axis: Axis, value: &str) -> Result<(), String> {
    let bad = |e: &dyn std::fmt::Display| format!("invalid {} value `{value}`: {e}", axis.name());
    match axis {
        Axis::N => config.observers = value.parse().map_err(|e| bad(&e))?,
        Axis::Lambda => config.lambda = value.parse().map_err(|e| bad(&e))?,
        Axis::Alpha => config.alpha = value.parse().map_err(|e| bad(&e))?,
        Axis::MD => config.zoom_interval = Some(value.parse().map_err(|e| bad(&e))?),
    }
    config.validate().map_err(|e| e.to_string())
}

struct SweepRow {
    status: &'static str,
    entry_time: Option<usize>,
    trailing_err_p: Option<f64>,
    trailing_err_x: Option<f64>,
    error: Option<String>,
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SUPOBS_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Failure::Usage(format!("SUPOBS_THREADS must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| Failure::Usage(e.to_string()))
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let values: Vec<&str> = args.values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Usage("--values needs at least one value".into()));
    }
    let (template, cert) = prepare(&args.run)?;
    let out = &args.run.common.out;
    create_dir(out)?;

    let results: Vec<Result<ConvergenceMetrics, String>> = thread_pool()?.install(|| {
        values
            .par_iter()
            .map(|value| {
                let mut config = template.clone();
                apply(&mut config, args.axis, value)?;
                simulate(&config, &cert).map(|(_, m)| m).map_err(|f| f.message().to_string())
            })
            .collect()
    });

    let summary_path = out.join("summary.csv");
    let csv_err = |e: csv::Error| Failure::Usage(format!("{}: {e}", summary_path.display()));
    let mut summary = csv::Writer::from_path(&summary_path).map_err(csv_err)?;
    summary
        .write_record(["index", "axis", "value", "status", "entry_time", "trailing_err_p", "trailing_err_x", "error"])
        .map_err(csv_err)?;
    let mut failed = 0;
    for (index, (value, result)) in values.iter().zip(&results).enumerate() {
        let row = match result {
            Ok(m) => {
                let aborted = m.aborted.clone();
                SweepRow {
                    status: if aborted.is_some() { "aborted" } else { "ok" },
                    entry_time: m.entry_time,
                    trailing_err_p: Some(m.trailing_max_err_p),
                    trailing_err_x: Some(m.trailing_max_err_x),
                    error: aborted,
                }
            }
            Err(e) => SweepRow {
                status: "failed",
                entry_time: None,
                trailing_err_p: None,
                trailing_err_x: None,
                error: Some(e.clone()),
            },
        };
        if row.status != "ok" {
            failed += 1;
        }
        if let Ok(m) = result {
            write_file(&out.join(format!("metrics_{index}.json")), to_json(m))?;
        }
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.16e}"));
        summary
            .write_record([
                &index.to_string(),
                args.axis.name(),
                value,
                row.status,
                &row.entry_time.map_or(String::new(), |k| k.to_string()),
                &opt(row.trailing_err_p),
                &opt(row.trailing_err_x),
                row.error.as_deref().unwrap_or(""),
            ])
            .map_err(csv_err)?;
        println!(
            "[{index}] {}={value} {} entry_time {} trailing_err_p {}",
            args.axis.name(),
            row.status,
            row.entry_time.map_or("never".to_string(), |k| k.to_string()),
            opt(row.trailing_err_p)
        );
    }
    summary.flush().map_err(|e| Failure::Usage(format!("{}: {e}", summary_path.display())))?;
    if failed > 0 {
        Err(Failure::Domain(format!("{failed} of {} runs did not complete", values.len())))
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("supobs: {}", f.message().trim_end());
            ExitCode::from(f.code())
        }
    }
}
