//! Thin command-line front end over the library.
//!
//! Subcommands: `test` runs the two-sample test on long-CSV panels,
//! `simulate` runs one empirical size/power cell, `qq` emits
//! null-distribution quantile pairs, and `oracle` runs the built-in
//! verification comparisons.
//!
//! Exit codes: 0 the command ran (a rejection is not an error), 2 input or
//! configuration error, 3 degenerate variance estimate, 4 oracle check
//! failure. `MRP_THREADS` caps the worker count.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mrp::engine::{MrpTestResult, TestOptions};
use mrp::oracle::{dense_itr_hat, dense_mrp_hat, mc_mrp, OracleConfig};
use mrp::sim::{DependenceCase, KernelChoice, SimConfig, SimFamily};
use mrp::{
    kernel_gram, load_long_csv, mrp_population, run_qq, run_size_power, run_test, ExperimentReport,
    MrpError, ProjectionKernel,
};

const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "mrp", version, about = "Two-sample mean test for high-dimensional functional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Ou,
    Wiener,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Sim1,
    Sim2,
    Sim3,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CaseArg {
    I,
    II,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleCheck {
    Mrp,
    Itr,
    Mc,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether the two groups in long-CSV files share a mean function.
    Test(TestArgs),
    /// Run one empirical size/power experiment cell.
    Simulate(SimArgs),
    /// Emit null-distribution QQ pairs (theoretical, empirical) as CSV.
    Qq(QqArgs),
    /// Run a built-in verification comparison and report PASS/FAIL.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Long CSV with the group X rows (may equal --y when one file holds both).
    #[arg(long)]
    x: PathBuf,
    /// Long CSV with the group Y rows.
    #[arg(long)]
    y: PathBuf,
    #[arg(long, value_enum, default_value = "ou")]
    kernel: KernelArg,
    /// Rate of the Ornstein-Uhlenbeck covariance.
    #[arg(long = "ou-a", default_value_t = 1.0)]
    ou_a: f64,
    /// Spline order (degree + 1).
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Knot-count rate r in (0, 1]: K = floor(N^r).
    #[arg(long = "knot-rate", default_value_t = 0.5)]
    knot_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, value_enum, default_value = "i")]
    case: CaseArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    p: usize,
    /// Families 1-2: percent of dimensions with equal means.
    #[arg(long, default_value_t = 100)]
    percent: u32,
    /// Family 3: signal strength per dimension.
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    /// Family 3: sparsity exponent.
    #[arg(long, default_value_t = 0.55)]
    c: f64,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "ou")]
    kernel: KernelArg,
    #[arg(long = "ou-a", default_value_t = 1.0)]
    ou_a: f64,
    /// Observation points per curve.
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Append one CSV row (with header on first write) to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct QqArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "ou")]
    kernel: KernelArg,
    #[arg(long = "ou-a", default_value_t = 1.0)]
    ou_a: f64,
    #[arg(long, default_value_t = 100)]
    grid: usize,
    /// Write the two-column CSV here (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum)]
    check: OracleCheck,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct CliReport<C: Serialize, R: Serialize> {
    schema_version: u32,
    version: &'static str,
    command: &'static str,
    config: C,
    result: R,
    timing_ms: u64,
}

#[derive(Serialize)]
struct TestConfigEcho {
    x: String,
    y: String,
    kernel: String,
    order: usize,
    knot_rate: f64,
    alpha: f64,
}

fn exit_code_for(err: &MrpError) -> u8 {
    match err {
        MrpError::DegenerateVariance(_) => 3,
        MrpError::Replication { source, .. } => exit_code_for(source),
        _ => 2,
    }
}

fn write_json(path: &PathBuf, payload: &str) -> Result<(), MrpError> {
    std::fs::write(path, payload)?;
    Ok(())
}

fn make_kernel(arg: KernelArg, ou_a: f64) -> Result<ProjectionKernel, MrpError> {
    match arg {
        KernelArg::Ou => ProjectionKernel::ou(ou_a),
        KernelArg::Wiener => Ok(ProjectionKernel::wiener()),
    }
}

fn cmd_test(args: &TestArgs) -> Result<(), MrpError> {
    let start = Instant::now();
    // One file may hold both groups (pass it to both flags); otherwise the
    // two files' rows are concatenated before the strict cross-group load.
    let (px, py) = if args.x == args.y {
        load_long_csv(&args.x)?
    } else {
        let mut merged = std::fs::read(&args.x)?;
        let second = std::fs::read_to_string(&args.y)?;
        match second.split_once('\n') {
            Some((_, body)) => {
                if !merged.ends_with(b"\n") {
                    merged.push(b'\n');
                }
                merged.extend_from_slice(body.as_bytes());
            }
            None => {
                return Err(MrpError::Parse {
                    line: 1,
                    msg: format!("{} has no data rows", args.y.display()),
                })
            }
        }
        mrp::panel::load_long_csv_reader(merged.as_slice())?
    };

    let opts = TestOptions {
        kernel: make_kernel(args.kernel, args.ou_a)?,
        alpha: args.alpha,
        spline_order: args.order,
        knot_rate: args.knot_rate,
        quad_order: 16,
    };
    let result = run_test(&px, &py, &opts)?;
    print_test_result(&result);

    if let Some(path) = &args.json {
        let report = CliReport {
            schema_version: REPORT_SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION"),
            command: "test",
            config: TestConfigEcho {
                x: args.x.display().to_string(),
                y: args.y.display().to_string(),
                kernel: opts.kernel.describe(),
                order: args.order,
                knot_rate: args.knot_rate,
                alpha: args.alpha,
            },
            result: &result,
            timing_ms: start.elapsed().as_millis() as u64,
        };
        write_json(path, &serde_json::to_string_pretty(&report).expect("serializable"))?;
    }
    Ok(())
}

fn print_test_result(r: &MrpTestResult) {
    println!(
        "n = {}, m = {}, p = {}, basis functions = {}",
        r.n, r.m, r.p, r.basis_len
    );
    println!(
        "statistic = {:.6}, variance = {:.6e}, standardized = {:.4}",
        r.mrp_hat, r.sigma2_hat, r.q_stat
    );
    println!(
        "p-value = {:.6}, alpha = {}: {}",
        r.p_value,
        r.alpha,
        if r.reject {
            "reject equal means"
        } else {
            "no evidence against equal means"
        }
    );
}

fn sim_config(args: &SimArgs) -> SimConfig {
    SimConfig {
        family: match args.family {
            FamilyArg::Sim1 => SimFamily::Sim1,
            FamilyArg::Sim2 => SimFamily::Sim2,
            FamilyArg::Sim3 => SimFamily::Sim3,
        },
        dependence: match args.case {
            CaseArg::I => DependenceCase::CaseI,
            CaseArg::II => DependenceCase::CaseII,
        },
        n: args.n,
        m: args.m,
        p: args.p,
        grid_size: args.grid,
        percent_equal: args.percent,
        epsilon: args.eps,
        sparsity: args.c,
        replications: args.reps,
        alpha: args.alpha,
        kernel: match args.kernel {
            KernelArg::Ou => KernelChoice::Ou { a: args.ou_a },
            KernelArg::Wiener => KernelChoice::Wiener,
        },
        seed: args.seed,
        ..SimConfig::default()
    }
}

fn cmd_simulate(args: &SimArgs) -> Result<(), MrpError> {
    let start = Instant::now();
    let cfg = sim_config(args);
    let mut report = run_size_power(&cfg)?;
    println!(
        "rejection rate = {:.4} ± {:.4} ({} replications)",
        report.rejection_rate, report.mc_standard_error, cfg.replications
    );
    if let Some(path) = &args.out {
        let add_header = !path.exists();
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if add_header {
            writeln!(file, "{}", ExperimentReport::csv_header())?;
        }
        writeln!(file, "{}", report.to_csv_row())?;
    }
    if let Some(path) = &args.json {
        report.q_stats = None; // keep reports compact
        let cli = CliReport {
            schema_version: REPORT_SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION"),
            command: "simulate",
            config: &report.config,
            result: serde_json::json!({
                "rejection_rate": report.rejection_rate,
                "mc_standard_error": report.mc_standard_error,
            }),
            timing_ms: start.elapsed().as_millis() as u64,
        };
        write_json(path, &serde_json::to_string_pretty(&cli).expect("serializable"))?;
    }
    Ok(())
}

fn cmd_qq(args: &QqArgs) -> Result<(), MrpError> {
    let cfg = SimConfig {
        family: SimFamily::Sim1,
        dependence: DependenceCase::CaseI,
        n: args.n,
        m: args.m,
        p: args.p,
        grid_size: args.grid,
        percent_equal: 100,
        replications: args.reps,
        kernel: match args.kernel {
            KernelArg::Ou => KernelChoice::Ou { a: args.ou_a },
            KernelArg::Wiener => KernelChoice::Wiener,
        },
        seed: args.seed,
        ..SimConfig::default()
    };
    let pairs = run_qq(&cfg)?;
    let mut out = String::from("theoretical,empirical\n");
    for (t, e) in &pairs {
        out.push_str(&format!("{t},{e}\n"));
    }
    match &args.out {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

/// One oracle comparison line; `ok` decides the exit code.
pub struct CheckLine {
    pub label: String,
    pub detail: String,
    pub ok: bool,
}

fn oracle_checks(which: OracleCheck, seed: u64) -> Result<Vec<CheckLine>, MrpError> {
    let mut lines = Vec::new();
    match which {
        OracleCheck::Mc => {
            // closed form vs Monte Carlo sampling of the projection
            // definition, three seeded mean pairs
            for idx in 0..3u64 {
                let mu1 = mrp::oracle::seeded_smooth_mean(3, seed, 2 * idx);
                let mu2 = mrp::oracle::seeded_smooth_mean(3, seed, 2 * idx + 1);
                let kernel = if idx % 2 == 0 {
                    ProjectionKernel::ou(1.0)?
                } else {
                    ProjectionKernel::wiener()
                };
                let closed = mrp_population(&mu1, &mu2, &kernel, 16)?;
                let cfg = OracleConfig {
                    num_alpha_draws: 400,
                    num_gamma_draws: 10,
                    seed: seed ^ idx,
                    ..OracleConfig::default()
                };
                let (est, se) = mc_mrp(&mu1, &mu2, &kernel, &cfg)?;
                let ok = (est - closed).abs() <= 3.0 * se;
                lines.push(CheckLine {
                    label: format!("mc closed-form #{idx} ({})", kernel.describe()),
                    detail: format!("closed = {closed:.6}, mc = {est:.6} ± {se:.6}"),
                    ok,
                });
            }
        }
        OracleCheck::Mrp => {
            let (px, py, gram, kernel) = seeded_panels(seed)?;
            let fast = mrp::mrp_hat(&px, &py, &gram)?;
            let dense = dense_mrp_hat(&px, &py, &kernel, 200)?;
            let rel = (fast - dense).abs() / dense.abs().max(1e-12);
            lines.push(CheckLine {
                label: "statistic: Gram reduction vs dense quadrature".into(),
                detail: format!("fast = {fast:.8}, dense = {dense:.8}, rel = {rel:.2e}"),
                ok: rel <= 1e-3,
            });
        }
        OracleCheck::Itr => {
            let (px, py, gram, kernel) = seeded_panels(seed)?;
            for which in [
                mrp::ItrComponent::WithinX,
                mrp::ItrComponent::WithinY,
                mrp::ItrComponent::Between,
            ] {
                let fast = mrp::engine::itr_hat(&px, &py, &gram, which)?;
                let dense = dense_itr_hat(&px, &py, &kernel, 40, which)?;
                let rel = (fast - dense).abs() / dense.abs().max(1e-12);
                lines.push(CheckLine {
                    label: format!("trace functional {which:?}"),
                    detail: format!("fast = {fast:.8}, dense = {dense:.8}, rel = {rel:.2e}"),
                    ok: rel <= 1e-3,
                });
            }
        }
    }
    Ok(lines)
}

/// Deterministic smooth curve panels for the dense-oracle comparisons.
fn seeded_panels(
    seed: u64,
) -> Result<
    (
        mrp::CurvePanel,
        mrp::CurvePanel,
        mrp::KernelGram,
        ProjectionKernel,
    ),
    MrpError,
> {
    let (px, py) = mrp::oracle::seeded_smooth_panels(6, 3, seed);
    let kernel = ProjectionKernel::ou(1.0)?;
    let gram = kernel_gram(&px.basis, &kernel, 16)?;
    Ok((px, py, gram, kernel))
}

fn cmd_oracle(args: &OracleArgs) -> Result<bool, MrpError> {
    let lines = oracle_checks(args.check, args.seed)?;
    let mut all_ok = true;
    for line in &lines {
        println!(
            "[{}] {}: {}",
            if line.ok { "PASS" } else { "FAIL" },
            line.label,
            line.detail
        );
        all_ok &= line.ok;
    }
    Ok(all_ok)
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MRP_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Qq(args) => cmd_qq(args),
        Command::Oracle(args) => {
            return match cmd_oracle(args) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(4),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code_for(&e))
                }
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
