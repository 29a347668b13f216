//! `dcopf`: centralized and distributed DC optimal power flow from the command line.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dcopf_core::cases;
use dcopf_core::cert::{
    build_update_system, evaluate_certificate, tune_parameters, Certificate, ParamGrid, TuneObjective,
};
use dcopf_core::engine::{
    run, Engine, EngineError, RunConfig, RunOutcome, StopRule, TuningParams, UpdateMode,
};
use dcopf_core::export::{solution_document, trace_manifest, write_sweep_csv, write_trace_csv};
use dcopf_core::model::{load_case_path, CaseError, GridCase};
use dcopf_core::oracle::{solve_centralized, OracleError};
use dcopf_core::report::{compare, ComparisonReport};

const EXIT_OTHER: u8 = 1;
const EXIT_PARSE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_INFEASIBLE: u8 = 5;
const EXIT_DIVERGED: u8 = 6;

/// First-order residual tolerance used in reports.
const REPORT_KKT_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "dcopf", version, about = "Distributed DC optimal power flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the centralized problem and write solution.json.
    SolveCentral(CentralArgs),
    /// Run the per-bus iteration and write trace.csv and report.json.
    SolveDistributed(DistributedArgs),
    /// Contraction certificate for one step-size setting or a grid.
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Synchronous,
    Serial,
}

impl From<ModeArg> for UpdateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Synchronous => UpdateMode::Synchronous,
            ModeArg::Serial => UpdateMode::Serial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ObjectiveArg {
    MinRadius,
    FirstCertified,
    Empirical,
}

#[derive(clap::Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CentralArgs {
    /// Case file, or the name of a bundled case.
    #[serde(skip)]
    case: String,
    /// Multiply every line limit by this factor.
    #[arg(long)]
    limit_scale: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file supplying any of the flags above.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(clap::Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DistributedArgs {
    /// Case file, or the name of a bundled case.
    #[serde(skip)]
    case: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Iteration limit [default: 10000].
    #[arg(long)]
    iters: Option<usize>,
    /// Update order [default: synchronous].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Multiply every line limit by this factor.
    #[arg(long)]
    limit_scale: Option<f64>,
    /// Solve the centralized problem for the relative gap and the comparison.
    #[arg(long)]
    oracle: bool,
    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave wall-clock data out of the written files.
    #[arg(long)]
    no_timestamp: bool,
    /// Stop when consecutive iterates differ by at most this much [default: 1e-9].
    #[arg(long)]
    delta_tol: Option<f64>,
    /// Stop when the relative objective gap reaches this value (needs --oracle).
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Stop when the balance residual reaches this value, MW.
    #[arg(long)]
    res_tol: Option<f64>,
    /// Write every n-th iterate to the trace [default: 1].
    #[arg(long)]
    record_stride: Option<usize>,
    /// Starting price at every bus, $/MWh [default: 10].
    #[arg(long)]
    init_lambda: Option<f64>,
    /// JSON file supplying any of the flags above.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(clap::Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CertifyArgs {
    /// Case file, or the name of a bundled case.
    #[serde(skip)]
    case: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    limit_scale: Option<f64>,
    /// JSON grid with `alpha`, `beta`, `gamma` and `delta` value lists.
    #[arg(long, conflicts_with = "log_grid")]
    grid: Option<PathBuf>,
    /// Log-spaced grid `LO:HI:N` applied to all four step sizes.
    #[arg(long)]
    log_grid: Option<String>,
    /// Grid selection rule [default: min-radius].
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Iteration budget of the empirical rule [default: 1000].
    #[arg(long)]
    empirical_iters: Option<usize>,
    /// Relative gap target of the empirical rule [default: 0.01].
    #[arg(long)]
    empirical_tol: Option<f64>,
    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

/// Reads a JSON config; flags given on the command line win.
fn with_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())).into())
        }
    }
}

#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "malformed config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn load(case: &str, limit_scale: Option<f64>) -> Result<GridCase> {
    let path = Path::new(case);
    let grid = if !path.exists() {
        match cases::builtin(case) {
            Some(c) => c,
            None => load_case_path(path).with_context(|| format!("loading {case}"))?,
        }
    } else {
        load_case_path(path).with_context(|| format!("loading {case}"))?
    };
    match limit_scale {
        Some(f) => Ok(grid.scale_line_limits(f)?),
        None => Ok(grid),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn unix_time() -> Option<u64> {
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn params_from(
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    delta: Option<f64>,
    mode: Option<ModeArg>,
) -> TuningParams {
    let reference = TuningParams::rts_reference();
    TuningParams::new(
        alpha.unwrap_or(reference.alpha),
        beta.unwrap_or(reference.beta),
        gamma.unwrap_or(reference.gamma),
        delta.unwrap_or(reference.delta),
    )
    .with_mode(mode.map_or(UpdateMode::Synchronous, UpdateMode::from))
}

fn describe_lines(report: &[dcopf_core::report::BindingLine]) -> String {
    if report.is_empty() {
        return "none".into();
    }
    report
        .iter()
        .map(|b| format!("{}-{} {:?} mu={:.4}", b.from, b.to, b.direction, b.mu))
        .collect::<Vec<_>>()
        .join(", ")
}

fn solve_central_cmd(cli: CentralArgs) -> Result<u8> {
    let file: CentralArgs = with_config(cli.config.as_deref())?;
    let case = load(&cli.case, cli.limit_scale.or(file.limit_scale))?;
    let out = cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));
    let solution = solve_centralized(&case)?;
    let doc = solution_document(&case, &solution);
    fs::create_dir_all(&out)?;
    write_json(&out.join("solution.json"), &doc)?;
    println!("objective {:.6} $/h", doc.objective);
    println!("binding lines: {}", describe_lines(&doc.binding_lines));
    Ok(0)
}

#[derive(Serialize)]
struct RunDocument<'a> {
    case: Option<&'a str>,
    params: TuningParams,
    stop: StopRule,
    outcome: RunOutcome,
    iterations: usize,
    init_lambda: f64,
    limit_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix_s: Option<u64>,
    comparison: ComparisonReport,
}

fn solve_distributed_cmd(cli: DistributedArgs) -> Result<u8> {
    let file: DistributedArgs = with_config(cli.config.as_deref())?;
    let limit_scale = cli.limit_scale.or(file.limit_scale);
    let case = load(&cli.case, limit_scale)?;
    let params = params_from(
        cli.alpha.or(file.alpha),
        cli.beta.or(file.beta),
        cli.gamma.or(file.gamma),
        cli.delta.or(file.delta),
        cli.mode.or(file.mode),
    );
    params.validate()?;
    let use_oracle = cli.oracle || file.oracle;
    let no_timestamp = cli.no_timestamp || file.no_timestamp;
    let out = cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));
    let init_lambda = cli.init_lambda.or(file.init_lambda).unwrap_or(10.0);
    let rel_tol = cli.rel_tol.or(file.rel_tol);
    if rel_tol.is_some() && !use_oracle {
        bail!(EngineError::Config("--rel-tol needs --oracle".into()));
    }
    let stop = StopRule {
        max_iters: cli.iters.or(file.iters).unwrap_or(10_000),
        rel_tol,
        res_tol: cli.res_tol.or(file.res_tol).map(|mw| mw / case.base_mva),
        delta_tol: Some(cli.delta_tol.or(file.delta_tol).unwrap_or(1e-9)),
        ..StopRule::default()
    };

    let oracle = if use_oracle { Some(solve_centralized(&case)?) } else { None };
    let engine = Engine::new(&case);
    let config = RunConfig {
        stop,
        record_stride: cli.record_stride.or(file.record_stride).unwrap_or(1),
        oracle_objective: oracle.as_ref().map(|o| o.objective),
    };
    let trace = run(&case, &params, engine.init_uniform(init_lambda), &config)?;

    fs::create_dir_all(&out)?;
    let csv_path = out.join("trace.csv");
    let writer = BufWriter::new(fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?);
    write_trace_csv(&case, &trace, writer)?;
    write_json(&out.join("trace_manifest.json"), &trace_manifest(&case, &trace))?;
    if let Some(o) = &oracle {
        write_json(&out.join("solution.json"), &solution_document(&case, o))?;
    }
    let comparison = compare(&case, &trace.final_state, oracle.as_ref(), REPORT_KKT_TOL);
    let doc = RunDocument {
        case: case.name.as_deref(),
        params,
        stop,
        outcome: trace.outcome,
        iterations: trace.iterations,
        init_lambda,
        limit_scale,
        wall_time_s: (!no_timestamp).then_some(trace.wall_time_s),
        generated_unix_s: if no_timestamp { None } else { unix_time() },
        comparison,
    };
    write_json(&out.join("report.json"), &doc)?;

    let c = &doc.comparison;
    println!("outcome {:?} after {} iterations ({:.3} s)", trace.outcome, trace.iterations, trace.wall_time_s);
    println!("objective {:.6} $/h, balance residual {:.3e} MW", c.objective, c.res_final_mw);
    if let Some(rel) = c.rel_final {
        println!("relative gap {rel:.3e}");
    }
    println!("price spread {:.3e} $/MWh around {:.4}", c.lmp_spread, c.lmp_mean);
    println!("binding lines: {}", describe_lines(&c.binding_lines));
    Ok(if trace.outcome == RunOutcome::Diverged { EXIT_DIVERGED } else { 0 })
}

fn parse_log_grid(text: &str) -> Result<ParamGrid> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || EngineError::Config(format!("--log-grid expects LO:HI:N, got {text}"));
    if parts.len() != 3 {
        bail!(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo && n >= 1) {
        bail!(bad());
    }
    Ok(ParamGrid::log_uniform(lo, hi, n))
}

fn print_certificate(cert: &Certificate) {
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    println!(
        "norms of I-A: l1 {:.6}, l2 {}, linf {:.6}; spectral radius {}",
        cert.norms.l1,
        show(cert.norms.l2),
        cert.norms.linf,
        show(cert.spectral_radius)
    );
    if cert.certified {
        println!("certified: some norm is below one");
    } else {
        println!("warning: not certified; no norm is below one (the condition is sufficient only)");
    }
}

fn certify_cmd(cli: CertifyArgs) -> Result<u8> {
    let file: CertifyArgs = with_config(cli.config.as_deref())?;
    let case = load(&cli.case, cli.limit_scale.or(file.limit_scale))?;
    let out = cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));
    let mode = cli.mode.or(file.mode);
    let grid = match (cli.grid.or(file.grid), cli.log_grid.or(file.log_grid)) {
        (Some(path), _) => {
            let text = fs::read_to_string(&path).with_context(|| format!("reading grid {}", path.display()))?;
            let mut g: ParamGrid = serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            if let Some(m) = mode {
                g.mode = m.into();
            }
            Some(g)
        }
        (None, Some(text)) => {
            let mut g = parse_log_grid(&text)?;
            g.mode = mode.map_or(UpdateMode::Synchronous, UpdateMode::from);
            Some(g)
        }
        (None, None) => None,
    };
    fs::create_dir_all(&out)?;

    let Some(grid) = grid else {
        let params = params_from(
            cli.alpha.or(file.alpha),
            cli.beta.or(file.beta),
            cli.gamma.or(file.gamma),
            cli.delta.or(file.delta),
            mode,
        );
        params.validate()?;
        let cert = evaluate_certificate(&build_update_system(&case, &params));
        write_json(&out.join("certificate.json"), &cert)?;
        print_certificate(&cert);
        return Ok(0);
    };

    for p in grid.points() {
        p.validate()?;
    }
    let objective = match cli.objective.or(file.objective).unwrap_or(ObjectiveArg::MinRadius) {
        ObjectiveArg::MinRadius => TuneObjective::MinSpectralRadius,
        ObjectiveArg::FirstCertified => TuneObjective::FirstCertified,
        ObjectiveArg::Empirical => TuneObjective::Empirical {
            max_iters: cli.empirical_iters.or(file.empirical_iters).unwrap_or(1000),
            rel_tol: cli.empirical_tol.or(file.empirical_tol).unwrap_or(1e-2),
        },
    };
    let result = tune_parameters(&case, &grid, objective);
    let csv_path = out.join("sweep.csv");
    write_sweep_csv(&result.table, BufWriter::new(fs::File::create(&csv_path)?))?;
    println!("{} grid points", result.table.len());
    match &result.best {
        Some(best) => {
            write_json(&out.join("certificate.json"), &best.certificate)?;
            let p = best.params;
            println!("best: alpha {} beta {} gamma {} delta {}", p.alpha, p.beta, p.gamma, p.delta);
            if let Some(k) = best.empirical_iters {
                println!("relative gap held from iteration {k}");
            }
            print_certificate(&best.certificate);
        }
        None => println!("warning: no grid point satisfies the selection rule"),
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CaseError>() {
            return match e {
                CaseError::Parse(_) => EXIT_PARSE,
                CaseError::Validation { .. } | CaseError::Argument(_) => EXIT_VALIDATION,
                CaseError::Io(_) => EXIT_OTHER,
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_PARSE;
        }
        if let Some(e) = cause.downcast_ref::<OracleError>() {
            return match e {
                OracleError::Infeasible(_) => EXIT_INFEASIBLE,
                _ => EXIT_OTHER,
            };
        }
        if let Some(e) = cause.downcast_ref::<EngineError>() {
            return match e {
                EngineError::InvalidParam { .. } | EngineError::Config(_) => EXIT_VALIDATION,
                _ => EXIT_OTHER,
            };
        }
    }
    EXIT_OTHER
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveCentral(a) => solve_central_cmd(a),
        Command::SolveDistributed(a) => solve_distributed_cmd(a),
        Command::Certify(a) => certify_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
