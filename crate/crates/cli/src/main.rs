use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use cddp_core::ambiguity::{
    centile_radius, generate_candidates, proximity_csv, proximity_statistics, select_ambiguity, AmbiguityMember,
    AmbiguitySet, Family, NominalDistribution, PerturbationConfig, Rho, FAMILIES,
};
use cddp_core::bounds::{full_model, run_bounds, BoundsConfig, BoundsReport, EvalStatus};
use cddp_core::generator::{generate_instance, GeneratorConfig, Shape};
use cddp_core::instance::{read_instance, CddpInstance};
use cddp_core::models::{DroData, SdConfig, Variant};
use cddp_core::oracle::OracleLimits;
use cddp_core::report::{cost_summaries, dimensions_row, model_name, solve, summary_csv, CostSource, Method, SolveConfig, DIMENSIONS_HEADER};
use cddp_core::{par, CddpError};
use cddp_milp::{export_lp_file, SolveStatus};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Distributionally robust cross-dock door design.
#[derive(Parser)]
#[command(name = "cddp", version)]
struct Cli {
    /// Worker threads for the parallel phases (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Include wall-clock timings in the outputs.
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Generate a random instance with an embedded nominal distribution.
    Gen(GenArgs),
    /// Score perturbed candidates and select an ambiguity set.
    Ambiguity(AmbiguityArgs),
    /// Solve LIP-RN or LIP-SD exactly, or export it as an LP file.
    Solve(SolveArgs),
    /// Cluster decomposition lower and upper bounds.
    Bounds(BoundsArgs),
    /// Per-member cost-distribution summaries of solve or bounds reports.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    /// I1, I3, I7, or groups `scen/nM/nN/nI/nJ/cells` separated by commas.
    #[arg(long)]
    shape: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct AmbiguityArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated families among normal, weibull, gamma, lognormal.
    #[arg(long, value_delimiter = ',', default_value = "normal,weibull,gamma,lognormal")]
    families: Vec<String>,
    #[arg(long, default_value_t = 20)]
    per_family: usize,
    #[arg(long, default_value_t = 0.05)]
    sigma_eps: f64,
    /// Wasserstein order: 1, 2 or inf.
    #[arg(long, default_value = "2")]
    rho: String,
    /// Proximity radius.
    #[arg(long, conflicts_with = "centile")]
    theta: Option<f64>,
    /// Radius at this centile (percent) of the candidate proximities.
    #[arg(long)]
    centile: Option<f64>,
    #[arg(long)]
    max_members: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Centiles reported in the proximity table.
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    stat_centiles: Vec<f64>,
    /// Proximity table path (defaults to the output with a `.proximity.csv` suffix).
    #[arg(long)]
    stats_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ModelArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Ambiguity-set file; without it the nominal distribution is the only member.
    #[arg(long)]
    ambiguity: Option<PathBuf>,
    #[arg(long, default_value = "rn")]
    model: String,
    /// SD configuration as inline JSON or a file path.
    #[arg(long)]
    sd_config: Option<String>,
    /// Solver limits as inline JSON or a file path.
    #[arg(long)]
    limits: Option<String>,
    /// Per-solve time limit in seconds (overrides --limits).
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "exact")]
    method: String,
    /// Write the model as an LP file instead of solving.
    #[arg(long)]
    export_lp: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct BoundsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 2)]
    clusters_per_member: usize,
    /// Subgradient iterations of the Lagrangean phase (skipped when absent).
    #[arg(long)]
    ld_iterations: Option<usize>,
    /// Reference value for the goodness ratio.
    #[arg(long)]
    reference: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// Solve or bounds report files.
    #[arg(long, num_args = 0..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Solver limits accepted by `--limits`.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LimitsFile {
    time_limit: Option<f64>,
    node_limit: Option<u64>,
    rel_gap: Option<f64>,
    abs_gap: Option<f64>,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

const EXIT_VALIDATION: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(Exit(c)) = e.downcast_ref::<Exit>() {
        return *c;
    }
    match e.downcast_ref::<CddpError>() {
        Some(CddpError::Build(_)) | Some(CddpError::Milp(_)) | Some(CddpError::Io(_)) => 1,
        Some(_) => EXIT_VALIDATION,
        None if e.downcast_ref::<clap::Error>().is_some() => EXIT_VALIDATION,
        None => 1,
    }
}

fn inline_or_file<T: for<'de> Deserialize<'de>>(arg: &str) -> anyhow::Result<T> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
    };
    serde_json::from_str(&text).map_err(|e| CddpError::Config(format!("{arg}: {e}")).into())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(CddpError::from).with_context(|| format!("writing {}", path.display()))
}

/// Serializes `report` with the invocation echoed under `cli`.
fn with_echo<T: Serialize>(report: &T, echo: &Value) -> anyhow::Result<String> {
    let mut v = serde_json::to_value(report)?;
    if let Value::Object(m) = &mut v {
        m.insert("cli".into(), echo.clone());
    }
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn csv_echo(echo: &Value) -> String {
    format!("# {}\n", serde_json::to_string(echo).unwrap_or_default())
}

fn load_data(args: &ModelArgs) -> anyhow::Result<(CddpInstance, DroData)> {
    let inst = read_instance(&args.instance).with_context(|| format!("reading {}", args.instance.display()))?;
    let nd = NominalDistribution::from_instance(&inst)?;
    let members = match &args.ambiguity {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(CddpError::from).with_context(|| format!("reading {}", p.display()))?;
            let set: AmbiguitySet = serde_json::from_str(&text).map_err(|e| CddpError::Parse(e.to_string()))?;
            set.validate(&nd)?;
            if set.members.is_empty() {
                return Err(CddpError::Validation(format!("{}: ambiguity set is empty", p.display())).into());
            }
            set.members
        }
        None => vec![AmbiguityMember::nominal(&nd)],
    };
    let data = DroData::new(&inst, &members)?;
    Ok((inst, data))
}

fn parse_variant(s: &str) -> anyhow::Result<Variant> {
    s.parse::<Variant>().map_err(|_| CddpError::Config(format!("--model must be rn or sd, got `{s}`")).into())
}

/// Applies the model flags on top of `base`.
fn solve_config(args: &ModelArgs, base: SolveConfig) -> anyhow::Result<SolveConfig> {
    let variant = parse_variant(&args.model)?;
    let mut cfg = SolveConfig { variant, ..base };
    if let Some(l) = &args.limits {
        let l: LimitsFile = inline_or_file(l)?;
        cfg.time_limit = l.time_limit.or(cfg.time_limit);
        cfg.node_limit = l.node_limit.unwrap_or(cfg.node_limit);
        cfg.rel_gap = l.rel_gap.unwrap_or(cfg.rel_gap);
        cfg.abs_gap = l.abs_gap.unwrap_or(cfg.abs_gap);
    }
    if let Some(t) = args.time_limit {
        cfg.time_limit = Some(t);
    }
    if cfg.time_limit.is_some_and(|t| !(t >= 0.0)) {
        return Err(CddpError::Config("time limit must be nonnegative".into()).into());
    }
    cfg.sd = match &args.sd_config {
        Some(s) => Some(inline_or_file::<SdConfig>(s)?),
        None if variant == Variant::Sd => {
            return Err(CddpError::Config("--model sd needs --sd-config".into()).into());
        }
        None => None,
    };
    Ok(cfg)
}

fn cmd_gen(a: &GenArgs, echo: &Value) -> anyhow::Result<()> {
    let shape: Shape = a.shape.parse()?;
    let mut inst = generate_instance(a.seed, &shape, &GeneratorConfig::default())?;
    if inst.name.is_empty() {
        inst.name = format!("{}-{}", shape, a.seed);
    }
    write(&a.out, &with_echo(&inst, echo)?)
}

fn cmd_ambiguity(a: &AmbiguityArgs, echo: &Value) -> anyhow::Result<()> {
    let inst = read_instance(&a.instance).with_context(|| format!("reading {}", a.instance.display()))?;
    let nd = NominalDistribution::from_instance(&inst)?;
    let families = a.families.iter().map(|f| f.parse::<Family>()).collect::<Result<Vec<_>, _>>()?;
    let cfg = PerturbationConfig {
        families: if families.is_empty() { FAMILIES.to_vec() } else { families },
        per_family: a.per_family,
        sigma_eps: a.sigma_eps,
        rho: a.rho.parse::<Rho>()?,
        seed: a.seed,
    };
    let pool = generate_candidates(&nd, &cfg)?;
    let prox = pool.proximities();
    let (theta, centile) = match (a.theta, a.centile) {
        (Some(t), _) => (t, None),
        (None, c) => {
            let c = c.unwrap_or(10.0);
            if !(0.0..=100.0).contains(&c) {
                return Err(CddpError::Config("--centile must lie in [0, 100]".into()).into());
            }
            if prox.is_empty() {
                return Err(CddpError::Validation("every candidate was rejected".into()).into());
            }
            (centile_radius(&prox, c), Some(c))
        }
    };
    let max_members = a.max_members.unwrap_or(usize::MAX);
    let members = select_ambiguity(&pool.members, theta, max_members);
    if members.is_empty() {
        eprintln!("warning: no candidate lies within theta = {theta}; the ambiguity set is empty");
    }
    let set = AmbiguitySet {
        config: cfg,
        theta,
        centile,
        max_members,
        candidates_scored: pool.members.len(),
        rejected: pool.rejected.clone(),
        members,
    };
    write(&a.out, &with_echo(&set, echo)?)?;
    let stats = proximity_statistics(&pool, &a.stat_centiles);
    let path = a.stats_out.clone().unwrap_or_else(|| sibling(&a.out, ".proximity.csv"));
    write(&path, &(csv_echo(echo) + &proximity_csv(&stats, &a.stat_centiles)))
}

fn status_exit(status: SolveStatus) -> anyhow::Result<()> {
    match status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible | SolveStatus::Unbounded => Err(Exit(EXIT_INFEASIBLE).into()),
        _ => Err(Exit(EXIT_LIMIT).into()),
    }
}

fn cmd_solve(a: &SolveArgs, echo: &Value, timings: bool) -> anyhow::Result<()> {
    let method: Method = a.method.parse()?;
    let cfg = solve_config(&a.model, SolveConfig { method, ..SolveConfig::default() })?;
    let (inst, data) = load_data(&a.model)?;
    if let Some(lp) = &a.export_lp {
        let sd = cfg.resolve_sd(&inst, &data)?;
        let built = full_model(cfg.variant, &inst, &data, sd.as_ref())?;
        export_lp_file(&built.model, lp).map_err(CddpError::from)?;
        let s = built.stats();
        println!("{DIMENSIONS_HEADER}\n{}", dimensions_row(&built.model.name, data.members.len(), &s));
        return Ok(());
    }
    let out = a.out.as_ref().ok_or_else(|| CddpError::Config("solve needs --out or --export-lp".into()))?;
    let t = Instant::now();
    let report = solve(&inst, &data, &cfg, &OracleLimits::default())?;
    let mut text = with_echo(&report, echo)?;
    if timings {
        let mut v: Value = serde_json::from_str(&text)?;
        v["timings"] = json!({ "solve": t.elapsed().as_secs_f64() });
        text = serde_json::to_string_pretty(&v)? + "\n";
    }
    write(out, &text)?;
    write(&sibling(out, ".dims.csv"), &(csv_echo(echo) + &report.dimensions_csv()))?;
    write(&sibling(out, ".costs.csv"), &(csv_echo(echo) + &report.cost_csv()))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    status_exit(report.status)
}

fn bounds_exit(r: &BoundsReport) -> anyhow::Result<()> {
    if r.z_ub.is_some() {
        return Ok(());
    }
    if r.upper.evaluations.iter().any(|e| e.status == EvalStatus::Limit) {
        return Err(Exit(EXIT_LIMIT).into());
    }
    Err(Exit(EXIT_INFEASIBLE).into())
}

fn cmd_bounds(a: &BoundsArgs, echo: &Value, timings: bool) -> anyhow::Result<()> {
    let defaults = BoundsConfig::default();
    let base = SolveConfig {
        time_limit: defaults.time_limit,
        node_limit: defaults.node_limit,
        rel_gap: defaults.rel_gap,
        abs_gap: defaults.abs_gap,
        ..SolveConfig::default()
    };
    let sc = solve_config(&a.model, base)?;
    let (inst, data) = load_data(&a.model)?;
    let cfg = BoundsConfig {
        variant: sc.variant,
        clusters_per_member: a.clusters_per_member,
        sd: sc.sd,
        time_limit: sc.time_limit,
        node_limit: sc.node_limit,
        rel_gap: sc.rel_gap,
        abs_gap: sc.abs_gap,
        ld_iterations: a.ld_iterations,
        reference: a.reference,
        ..defaults
    };
    let mut report = run_bounds(&inst, &data, &cfg)?;
    if !timings {
        report.timings = None;
    }
    write(&a.out, &with_echo(&report, echo)?)?;
    write(&sibling(&a.out, ".csv"), &(csv_echo(echo) + &report.csv()))?;
    let dims = format!("{DIMENSIONS_HEADER}\n{}\n", dimensions_row(model_name(cfg.variant), data.members.len(), &report.stats));
    write(&sibling(&a.out, ".dims.csv"), &(csv_echo(echo) + &dims))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    bounds_exit(&report)
}

fn cmd_report(a: &ReportArgs, echo: &Value) -> anyhow::Result<()> {
    if a.inputs.is_empty() {
        return Err(CddpError::Validation("report needs at least one --inputs file".into()).into());
    }
    let mut sources = Vec::new();
    for p in &a.inputs {
        let text = std::fs::read_to_string(p).map_err(CddpError::from).with_context(|| format!("reading {}", p.display()))?;
        let src = CostSource::from_json(&text).with_context(|| format!("{} is not a solve or bounds report", p.display()))?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        sources.push((name, src));
    }
    let rows = cost_summaries(&sources)?;
    let text = csv_echo(echo) + &summary_csv(&rows);
    match &a.out {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let echo = json!({ "version": env!("CARGO_PKG_VERSION"), "command": &cli.command });
    let timings = cli.timings;
    par::with_threads(cli.threads, move || match &cli.command {
        Command::Gen(a) => cmd_gen(a, &echo),
        Command::Ambiguity(a) => cmd_ambiguity(a, &echo),
        Command::Solve(a) => cmd_solve(a, &echo, timings),
        Command::Bounds(a) => cmd_bounds(a, &echo, timings),
        Command::Report(a) => cmd_report(a, &echo),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<Exit>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
