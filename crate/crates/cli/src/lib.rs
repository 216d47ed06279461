//! Command implementations behind the `dyson` binary.
//!
//! Every command returns a [`Report`] carrying the rendered output and the
//! process exit code, so the same entry points serve the binary and tests.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use dyson_core::clockprep::{
    prepare_clock_compressed_with, prepare_clock_sorted_with, ClockConfig,
};
use dyson_core::dysoncore::{plan_parameters, Plan, PlanOptions, Scheme, DEFAULT_QUBIT_CAP};
use dyson_core::hammodel::{
    estimate_norms, random_sparse_spec, reference, HamiltonianSpec, SparseHamiltonian,
    DEFAULT_NORM_GRID,
};
use dyson_core::lcu::{simulate_evolution, Backend, Psi0Spec, RunOptions};
use dyson_core::resources::{predict, SweepRow};
use dyson_core::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_SPEC: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "dyson",
    version,
    about = "Time-dependent Hamiltonian simulation by truncated Dyson series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Choose simulation parameters and print the plan as JSON.
    Plan(RunConfig),
    /// Plan, simulate and compare against the reference propagator.
    Run(RunConfig),
    /// Build both clock states and compare their amplitudes.
    ClockCompare(ClockArgs),
    /// Run a parameter sweep and emit CSV.
    Sweep(SweepArgs),
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct RunConfig {
    /// Spec JSON file, or `builtin:<sigma_x|cos_sigma_z|driven|random:N:D>`.
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 1e-2)]
    pub eps: f64,
    #[arg(long, default_value = "compressed")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = DEFAULT_QUBIT_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "force-K")]
    pub force_k: Option<usize>,
    #[arg(long = "force-M")]
    pub force_m: Option<usize>,
    #[arg(long = "force-r")]
    pub force_r: Option<usize>,
    /// Accept forced values that break planner invariants.
    #[arg(long)]
    pub unsafe_overrides: bool,
    /// Initial state: `basis:<i>`, `random` (uses --seed) or `random:<seed>`.
    #[arg(long, default_value = "basis:0")]
    pub psi0: String,
    #[arg(long, default_value = "auto", value_parser = parse_backend)]
    #[serde(skip)]
    pub backend: Backend,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ClockArgs {
    #[arg(long = "K", default_value_t = 2)]
    pub k: usize,
    #[arg(long = "M", default_value_t = 4)]
    pub m: usize,
    #[arg(long, default_value_t = 0.25)]
    pub zeta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: RunConfig,
    /// Swept quantity: K, M, T or epsilon.
    #[arg(long)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
pub enum SweepParam {
    #[value(name = "K")]
    K,
    #[value(name = "M")]
    M,
    #[value(name = "T")]
    T,
    #[value(name = "epsilon")]
    Epsilon,
}

fn parse_backend(s: &str) -> std::result::Result<Backend, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Rendered command output and exit status.
#[derive(Debug)]
pub struct Report {
    pub code: i32,
    pub body: String,
}

impl Report {
    fn json(code: i32, v: &Value) -> Self {
        Report {
            code,
            body: serde_json::to_string_pretty(v).expect("report serializes"),
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidSpec(_) | Error::Json(_) => EXIT_INVALID_SPEC,
        Error::Capacity { .. } => EXIT_CAPACITY,
        _ => EXIT_FAILURE,
    }
}

fn error_report(err: &Error) -> Report {
    Report::json(exit_code(err), &json!({"error": err.to_string()}))
}

/// Loads a spec from a file path or a `builtin:` name.
pub fn load_spec(source: &str, seed: u64) -> Result<HamiltonianSpec> {
    let Some(name) = source.strip_prefix("builtin:") else {
        return HamiltonianSpec::from_json_file(Path::new(source));
    };
    let bad = || Error::InvalidSpec(format!("unknown builtin spec '{name}'"));
    match name {
        "sigma_x" => Ok(reference::sigma_x(1.0)),
        "cos_sigma_z" => Ok(reference::cos_sigma_z(1.0, 1.0)),
        "driven" => Ok(reference::driven_qubit(5.0, 1.0)),
        "linear_ramp" => Ok(reference::linear_ramp(1.0)),
        other => {
            let parts: Vec<&str> = other.split(':').collect();
            match parts.as_slice() {
                ["random", n, d] => {
                    let n = n.parse().map_err(|_| bad())?;
                    let d = d.parse().map_err(|_| bad())?;
                    let spec = random_sparse_spec(n, d, 1.0, seed);
                    spec.validate()?;
                    Ok(spec)
                }
                _ => Err(bad()),
            }
        }
    }
}

fn plan_options(cfg: &RunConfig) -> PlanOptions {
    PlanOptions {
        cap: cfg.cap,
        force_k: cfg.force_k,
        force_m: cfg.force_m,
        force_r: cfg.force_r,
        unsafe_overrides: cfg.unsafe_overrides,
        ..PlanOptions::default()
    }
}

fn build_plan(cfg: &RunConfig, spec: HamiltonianSpec) -> Result<(SparseHamiltonian, Plan)> {
    let ham = SparseHamiltonian::new(spec)?;
    let norms = estimate_norms(&ham, DEFAULT_NORM_GRID)?;
    let plan = plan_parameters(&ham, &norms, cfg.eps, cfg.scheme, &plan_options(cfg))?;
    Ok((ham, plan))
}

fn plan_json(cfg: &RunConfig) -> Result<Value> {
    let (_, plan) = build_plan(cfg, load_spec(&cfg.spec, cfg.seed)?)?;
    Ok(json!({
        "config": cfg,
        "plan": plan.report(),
        "predictions": predict(&plan.params, &plan.norms),
    }))
}

pub fn cmd_plan(cfg: &RunConfig) -> Report {
    match plan_json(cfg) {
        Ok(v) => Report::json(EXIT_OK, &v),
        Err(e) => error_report(&e),
    }
}

fn psi0_of(cfg: &RunConfig) -> Result<Psi0Spec> {
    match Psi0Spec::parse(&cfg.psi0)? {
        Psi0Spec::Random(0) if cfg.psi0.trim() == "random" => Ok(Psi0Spec::Random(cfg.seed)),
        p => Ok(p),
    }
}

/// Runs one configuration; returns the report JSON and whether the budget held.
pub fn run_json(cfg: &RunConfig, spec: HamiltonianSpec) -> Result<(Value, bool)> {
    let (ham, plan) = build_plan(cfg, spec)?;
    let psi0 = psi0_of(cfg)?;
    let opts = RunOptions {
        backend: cfg.backend,
        ..RunOptions::default()
    };
    let (_, report) = simulate_evolution(
        &ham,
        &plan,
        &psi0.build(ham.dim())?,
        &psi0.to_string(),
        &opts,
    )?;
    let ok = report.within_budget;
    let mut v = json!({
        "config": cfg,
        "predictions": predict(&plan.params, &plan.norms),
    });
    v["run"] = serde_json::to_value(&report)?;
    Ok((v, ok))
}

pub fn cmd_run(cfg: &RunConfig) -> Report {
    match load_spec(&cfg.spec, cfg.seed).and_then(|spec| run_json(cfg, spec)) {
        Ok((v, true)) => Report::json(EXIT_OK, &v),
        Ok((v, false)) => Report::json(EXIT_BUDGET, &v),
        Err(e) => error_report(&e),
    }
}

fn clock_json(args: &ClockArgs) -> Result<Value> {
    let sorted = prepare_clock_sorted_with(args.k, args.m, args.zeta)?;
    let compressed = prepare_clock_compressed_with(args.k, args.m, args.zeta, args.m)?;
    let ms = sorted.marginals();
    let mc = compressed.marginals();
    // Both laws give ζ^k / s on strictly increasing tuples.
    let law = |c: &ClockConfig, w: f64, s: f64| w * s / args.zeta.powi(c.k as i32);
    let mut deviation: f64 = 0.0;
    let mut rows = Vec::new();
    for (c, &w) in &ms {
        let strict = c.times.windows(2).all(|p| p[0] < p[1]);
        let other = mc.get(c).copied();
        if strict {
            let ratio = law(c, w, sorted.s) / law(c, other.unwrap_or(0.0), compressed.s);
            deviation = deviation.max((ratio - 1.0).abs());
        }
        rows.push(json!({
            "k": c.k,
            "times": c.times,
            "sorted": w,
            "compressed": other,
            "repeated": !strict,
        }));
    }
    Ok(json!({
        "config": args,
        "max_ratio_deviation": deviation,
        "sorted": {"s": sorted.s, "tuples": ms.len()},
        "compressed": {
            "S": compressed.big_s,
            "s": compressed.s,
            "mu2": compressed.mu2,
            "remainder_weight": compressed.remainder_weight(),
            "tuples": mc.len(),
        },
        "rows": rows,
    }))
}

pub fn cmd_clock_compare(args: &ClockArgs) -> Report {
    match clock_json(args) {
        Ok(v) => Report::json(EXIT_OK, &v),
        Err(e) => error_report(&e),
    }
}

/// One sweep row; failures are kept as rows rather than aborting the sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRecord {
    pub x: f64,
    /// Oracle queries (loc + val).
    pub measured: f64,
    pub predicted: f64,
    pub ratio: f64,
    pub error: f64,
    pub r: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub status: String,
}

fn as_count(x: f64, what: &str) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
        Ok(x as usize)
    } else {
        Err(Error::InputDomain(format!(
            "{what} must be a non-negative integer, got {x}"
        )))
    }
}

fn sweep_row(args: &SweepArgs, base: &HamiltonianSpec, x: f64) -> SweepRecord {
    let failed = |status: String| SweepRecord {
        x,
        measured: f64::NAN,
        predicted: f64::NAN,
        ratio: f64::NAN,
        error: f64::NAN,
        r: 0,
        k: 0,
        m: 0,
        l: 0,
        status,
    };
    let mut cfg = args.config.clone();
    let mut spec = base.clone();
    let setup = match args.param {
        SweepParam::K => as_count(x, "K").map(|v| {
            cfg.force_k = Some(v);
            cfg.unsafe_overrides = true;
        }),
        SweepParam::M => as_count(x, "M").map(|v| {
            cfg.force_m = Some(v);
            cfg.unsafe_overrides = true;
        }),
        SweepParam::T => {
            spec.duration = x;
            spec.validate()
        }
        SweepParam::Epsilon => {
            cfg.eps = x;
            Ok(())
        }
    };
    if let Err(e) = setup {
        return failed(format!("failed: {e}"));
    }
    let run = || -> Result<SweepRecord> {
        let (ham, plan) = build_plan(&cfg, spec.clone())?;
        let psi0 = psi0_of(&cfg)?.build(ham.dim())?;
        let opts = RunOptions {
            backend: cfg.backend,
            ..RunOptions::default()
        };
        let (_, rep) = simulate_evolution(&ham, &plan, &psi0, &cfg.psi0, &opts)?;
        let pred = predict(&plan.params, &plan.norms);
        let row = SweepRow::new(x, rep.resources.total_queries() as f64, pred.query_pred);
        let p = &plan.params;
        Ok(SweepRecord {
            x,
            measured: row.measured,
            predicted: row.predicted,
            ratio: row.ratio,
            error: rep.total_error,
            r: p.r,
            k: p.k,
            m: p.m,
            l: p.l,
            status: if rep.within_budget {
                "ok"
            } else {
                "over_budget"
            }
            .into(),
        })
    };
    run().unwrap_or_else(|e| failed(format!("failed: {e}")))
}

pub fn sweep_records(args: &SweepArgs) -> Result<Vec<SweepRecord>> {
    let base = load_spec(&args.config.spec, args.config.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| Error::InputDomain(e.to_string()))?;
    Ok(pool.install(|| {
        args.values
            .par_iter()
            .map(|&x| sweep_row(args, &base, x))
            .collect()
    }))
}

pub fn render_csv(rows: &[SweepRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::InputDomain(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InputDomain(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn cmd_sweep(args: &SweepArgs) -> Report {
    match sweep_records(args).and_then(|rows| render_csv(&rows)) {
        Ok(body) => Report {
            code: EXIT_OK,
            body,
        },
        Err(e) => error_report(&e),
    }
}

fn out_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Plan(c) | Command::Run(c) => c.out.as_deref(),
        Command::ClockCompare(a) => a.out.as_deref(),
        Command::Sweep(a) => a.config.out.as_deref(),
    }
}

/// Runs a parsed command; writes to `--out` when given.
pub fn execute(cli: &Cli) -> Report {
    let report = match &cli.command {
        Command::Plan(c) => cmd_plan(c),
        Command::Run(c) => cmd_run(c),
        Command::ClockCompare(a) => cmd_clock_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    if let Some(path) = out_path(&cli.command) {
        if let Err(e) = std::fs::write(path, &report.body) {
            return error_report(&Error::Io(e));
        }
    }
    report
}
