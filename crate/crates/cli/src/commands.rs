use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use rcoda::experiments::{run_experiment, ExperimentSpec};
use rcoda::hmrf::{fit_hmrf, posterior_predictive_check, HmrfSettings, MixturePriors, PredictiveSettings, Refresh};
use rcoda::inference::{sample_posterior, McmcSettings, Prior, Uniform};
use rcoda::likelihood::{default_tdi_grid, RcodaConfig, TdiTable, TerminalMode};
use rcoda::potts::{expected_bonds_curve, gibbs_sample, DEFAULT_GENERATION_SWEEPS};
use rcoda::seed::RngSeed;
use rcoda::{io, Backend, LatticeGeometry, Order, PottsModel};

use crate::config::resolve;
use crate::manifest::Recorder;
use crate::{Common, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value.clone().ok_or_else(|| usage(format!("--{flag} is required")))
}

fn interval(v: &[f64], what: &str) -> Result<Uniform> {
    match v {
        [lo, hi] => Ok(Uniform::new(*lo, *hi)?),
        _ => Err(usage(format!("{what} needs exactly two values: lo,hi"))),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_table(path: &Option<PathBuf>) -> Result<Option<Arc<TdiTable>>> {
    path.as_ref()
        .map(|p| {
            TdiTable::load(p)
                .with_context(|| format!("loading integration table {}", p.display()))
                .map(Arc::new)
        })
        .transpose()
}

// ---------------------------------------------------------------- simulate

#[derive(Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    order: Option<Order>,
    /// Gibbs sweeps from a uniform random start.
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; `.bin` or `.field` selects the binary format, CSV otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    rows: usize,
    cols: usize,
    q: usize,
    beta: Option<f64>,
    order: Order,
    sweeps: usize,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            rows: 32,
            cols: 32,
            q: 2,
            beta: None,
            order: Order::First,
            sweeps: DEFAULT_GENERATION_SWEEPS,
            seed: 0,
            out: None,
        }
    }
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let rec = Recorder::start("simulate");
    let (cfg, resolved): (SimulateConfig, _) = resolve("simulate", args.common.config.as_ref(), &args)?;
    let beta = required(&cfg.beta, "beta")?;
    if !(0.0..=4.0).contains(&beta) {
        return Err(usage(format!("--beta must lie in [0, 4], got {beta}")));
    }
    let out = required(&cfg.out, "out")?;
    let geometry = LatticeGeometry::new(cfg.rows, cfg.cols, cfg.order)?;
    let model = PottsModel::new(geometry, cfg.q, beta)?;
    let field = gibbs_sample(&model, cfg.sweeps, RngSeed(cfg.seed), None)?;
    io::save_field(&field, &out)?;
    eprintln!("wrote {}", out.display());
    rec.finish(args.common.manifest.as_deref(), resolved, json!({ "seed": cfg.seed }), vec![out])?;
    Ok(())
}

// --------------------------------------------------------------------- fit

#[derive(Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    /// Observed field (CSV or binary).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Number of states; read from the file when omitted.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    order: Option<Order>,
    /// exact, pl, rcoda, rcoda-m, rcoda-c or tdi.
    #[arg(long)]
    backend: Option<String>,
    /// Integration table for the tdi backend.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Uniform prior on beta, as lo,hi.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    prior_beta: Option<Vec<f64>>,
    /// Uniform prior on alpha, as lo,hi.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    prior_alpha: Option<Vec<f64>>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    proposal_sd_beta: Option<f64>,
    #[arg(long)]
    proposal_sd_alpha: Option<f64>,
    /// Scale proposals during burn-in (true/false).
    #[arg(long)]
    adapt: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Recursion depth of the decomposition backends.
    #[arg(long)]
    depth: Option<usize>,
    /// exact or independent.
    #[arg(long)]
    terminal: Option<TerminalMode>,
    #[arg(long)]
    terminal_exponent: Option<u32>,
    /// Credible level of the reported interval.
    #[arg(long)]
    level: Option<f64>,
    /// CSV trace output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write the summary JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitConfig {
    field: Option<PathBuf>,
    q: Option<usize>,
    order: Order,
    backend: String,
    table: Option<PathBuf>,
    prior_beta: Vec<f64>,
    prior_alpha: Vec<f64>,
    iterations: usize,
    burn_in: usize,
    proposal_sd_beta: f64,
    proposal_sd_alpha: f64,
    adapt: bool,
    seed: u64,
    depth: Option<usize>,
    terminal: TerminalMode,
    terminal_exponent: Option<u32>,
    level: f64,
    trace: Option<PathBuf>,
    summary: Option<PathBuf>,
}

impl Default for FitConfig {
    fn default() -> Self {
        let m = McmcSettings::default();
        let p = Prior::simulation();
        let a = p.alpha_or_default();
        FitConfig {
            field: None,
            q: None,
            order: Order::First,
            backend: "rcoda".into(),
            table: None,
            prior_beta: vec![p.beta.lo, p.beta.hi],
            prior_alpha: vec![a.lo, a.hi],
            iterations: m.iterations,
            burn_in: m.burn_in,
            proposal_sd_beta: m.proposal_sd_beta,
            proposal_sd_alpha: m.proposal_sd_alpha,
            adapt: m.adapt,
            seed: 0,
            depth: None,
            terminal: TerminalMode::Exact,
            terminal_exponent: None,
            level: 0.95,
            trace: None,
            summary: None,
        }
    }
}

pub fn fit(args: FitArgs) -> Result<()> {
    let rec = Recorder::start("fit");
    let (cfg, resolved): (FitConfig, _) = resolve("fit", args.common.config.as_ref(), &args)?;
    let path = required(&cfg.field, "field")?;
    let field = io::load_field(&path, cfg.q).with_context(|| format!("reading field {}", path.display()))?;
    let geometry = LatticeGeometry::new(field.rows(), field.cols(), cfg.order)?;
    let rcoda = RcodaConfig {
        depth: cfg.depth,
        terminal: cfg.terminal,
        terminal_exponent: cfg.terminal_exponent,
    };
    let backend = Backend::from_name(&cfg.backend, rcoda, load_table(&cfg.table)?)?;
    let prior = Prior {
        beta: interval(&cfg.prior_beta, "--prior-beta")?,
        alpha: Some(interval(&cfg.prior_alpha, "--prior-alpha")?),
    };
    let settings = McmcSettings {
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        proposal_sd_beta: cfg.proposal_sd_beta,
        proposal_sd_alpha: cfg.proposal_sd_alpha,
        adapt: cfg.adapt,
        seed: RngSeed(cfg.seed),
        ..McmcSettings::default()
    };
    let chain = sample_posterior(&field, &geometry, &backend, &prior, &settings)?;
    let summary = json!({
        "backend": chain.backend,
        "rows": field.rows(),
        "cols": field.cols(),
        "q": field.q(),
        "order": cfg.order,
        "iterations": cfg.iterations,
        "burn_in": cfg.burn_in,
        "beta": chain.summary_beta(cfg.level)?,
        "alpha": chain.summary_alpha(cfg.level)?,
        "acceptance_beta": chain.acceptance_beta(),
        "acceptance_alpha": chain.acceptance_alpha(),
    });
    let mut artifacts = Vec::new();
    if let Some(p) = &cfg.summary {
        io::write_json(&summary, p)?;
        artifacts.push(p.clone());
    }
    if let Some(p) = &cfg.trace {
        chain.write_trace(std::fs::File::create(p)?)?;
        artifacts.push(p.clone());
    }
    print_json(&summary)?;
    rec.finish(args.common.manifest.as_deref(), resolved, json!({ "seed": cfg.seed }), artifacts)?;
    Ok(())
}

// --------------------------------------------------------------- tdi-table

#[derive(Args, Serialize)]
pub struct TdiTableArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    order: Option<Order>,
    /// Explicit grid (must start at 0), comma separated.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Regular grid 0, step, ..., max (used when --grid is absent).
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    /// Recorded sweeps per grid point.
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Table CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the expected-bond curve (beta, mean_U, se_U).
    #[arg(long)]
    bonds_out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TdiTableConfig {
    rows: usize,
    cols: usize,
    q: usize,
    order: Order,
    grid: Option<Vec<f64>>,
    grid_max: Option<f64>,
    grid_step: Option<f64>,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
    out: Option<PathBuf>,
    bonds_out: Option<PathBuf>,
}

impl Default for TdiTableConfig {
    fn default() -> Self {
        let s = rcoda::likelihood::TdiSettings::default();
        TdiTableConfig {
            rows: 32,
            cols: 32,
            q: 2,
            order: Order::First,
            grid: None,
            grid_max: None,
            grid_step: None,
            sweeps: s.sweeps,
            burn_in: s.burn_in,
            seed: 0,
            out: None,
            bonds_out: None,
        }
    }
}

fn regular_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && max > 0.0 && max.is_finite()) {
        return Err(usage("--grid-step and --grid-max must be positive"));
    }
    let n = (max / step + 1e-9).floor() as usize;
    // Built from integer multiples so grid points print cleanly.
    Ok((0..=n).map(|k| (k as f64 * step * 1e9).round() / 1e9).collect())
}

pub fn tdi_table(args: TdiTableArgs) -> Result<()> {
    let rec = Recorder::start("tdi-table");
    let (cfg, resolved): (TdiTableConfig, _) = resolve("tdi-table", args.common.config.as_ref(), &args)?;
    let out = required(&cfg.out, "out")?;
    let geometry = LatticeGeometry::new(cfg.rows, cfg.cols, cfg.order)?;
    let grid = match (&cfg.grid, cfg.grid_max, cfg.grid_step) {
        (Some(g), _, _) => g.clone(),
        (None, None, None) => default_tdi_grid(cfg.order),
        (None, max, step) => regular_grid(
            max.unwrap_or(*default_tdi_grid(cfg.order).last().unwrap()),
            step.unwrap_or(0.01),
        )?,
    };
    let curve = expected_bonds_curve(&geometry, cfg.q, &grid, cfg.sweeps, cfg.burn_in, RngSeed(cfg.seed))?;
    let table = TdiTable::from_curve(&geometry, cfg.q, &curve)?;
    table.save(&out)?;
    let mut artifacts = vec![out.clone()];
    if let Some(p) = &cfg.bonds_out {
        io::write_bonds_csv(&curve, std::fs::File::create(p)?)?;
        artifacts.push(p.clone());
    }
    eprintln!("wrote {} ({} grid points)", out.display(), grid.len());
    rec.finish(
        args.common.manifest.as_deref(),
        resolved,
        json!({ "seed": cfg.seed, "grid_point_seeds": "derived from seed and grid index" }),
        artifacts,
    )?;
    Ok(())
}

// -------------------------------------------------------------- experiment

#[derive(Args, Serialize)]
pub struct ExperimentArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Built-in spec, e.g. rmse-desk; see the README for the list.
    #[arg(long)]
    preset: Option<String>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Directory for the report files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Report file stem; defaults to the spec name.
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentConfig {
    spec: Option<PathBuf>,
    preset: Option<String>,
    /// Inline spec; takes precedence over `spec` and `preset`.
    experiment: Option<ExperimentSpec>,
    workers: Option<usize>,
    replicates: Option<usize>,
    master_seed: Option<u64>,
    out_dir: Option<PathBuf>,
    stem: Option<String>,
}

pub fn experiment(args: ExperimentArgs) -> Result<()> {
    let rec = Recorder::start("experiment");
    let (cfg, _): (ExperimentConfig, _) = resolve("experiment", args.common.config.as_ref(), &args)?;
    let mut spec = match (&cfg.experiment, &cfg.spec, &cfg.preset) {
        (Some(s), _, _) => s.clone(),
        (None, Some(p), None) => ExperimentSpec::load(p).with_context(|| format!("reading spec {}", p.display()))?,
        (None, None, Some(name)) => ExperimentSpec::preset(name)?,
        (None, Some(_), Some(_)) => return Err(usage("give either --spec or --preset, not both")),
        (None, None, None) => return Err(usage("--spec or --preset is required")),
    };
    if let Some(r) = cfg.replicates {
        spec.replicates = r;
    }
    if let Some(s) = cfg.master_seed {
        spec.master_seed = s;
    }
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let stem = cfg.stem.clone().unwrap_or_else(|| spec.name.clone());
    eprintln!("running '{}' ({} replicates, {workers} workers)", spec.name, spec.replicates);
    let report = run_experiment(&spec, workers)?;
    let artifacts = report.save(&out_dir, &stem)?;
    let failures = report.replicates.iter().filter(|r| r.error.is_some()).count();
    print_json(&json!({
        "name": spec.name,
        "cells": report.cells,
        "decay": report.decay,
        "bonds": report.bonds,
        "failed_replicates": failures,
        "artifacts": artifacts,
    }))?;
    let resolved = json!({
        "experiment": spec,
        "workers": workers,
        "out_dir": out_dir,
        "stem": stem,
    });
    let seeds = json!({
        "master_seed": spec.master_seed,
        "derivation": "per-task seeds derived from master seed and (stream, size, beta index, replicate, backend)",
    });
    let manifest = args.common.manifest.clone().unwrap_or_else(|| out_dir.join(format!("{stem}.manifest.json")));
    rec.finish(Some(&manifest), resolved, seeds, artifacts)?;
    Ok(())
}

// ------------------------------------------------------------------- hmrf

#[derive(Args, Serialize)]
pub struct HmrfArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    /// Grayscale image: 8-bit PGM (P5) or CSV matrix.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Number of mixture components (= Potts states).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    order: Option<Order>,
    /// pl, rcoda, rcoda-m, rcoda-c, tdi or exact.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    table: Option<PathBuf>,
    /// Hold beta fixed instead of sampling it.
    #[arg(long)]
    fixed_beta: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    prior_beta: Option<Vec<f64>>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    /// Label maps kept for the predictive check.
    #[arg(long)]
    snapshots: Option<usize>,
    /// posterior or prior refresh of replicate label maps.
    #[arg(long)]
    refresh: Option<String>,
    #[arg(long)]
    refresh_sweeps: Option<usize>,
    /// Run the posterior predictive check (true/false, default true).
    #[arg(long)]
    predictive: Option<bool>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct HmrfConfig {
    image: Option<PathBuf>,
    k: usize,
    order: Order,
    backend: String,
    table: Option<PathBuf>,
    fixed_beta: Option<f64>,
    prior_beta: Vec<f64>,
    iterations: usize,
    burn_in: usize,
    seed: u64,
    depth: Option<usize>,
    snapshots: usize,
    refresh: Refresh,
    refresh_sweeps: usize,
    levels: Vec<f64>,
    predictive: bool,
    out_dir: PathBuf,
}

impl Default for HmrfConfig {
    fn default() -> Self {
        let m = McmcSettings::default();
        let p = MixturePriors::default();
        let ps = PredictiveSettings::default();
        HmrfConfig {
            image: None,
            k: 2,
            order: Order::First,
            backend: "rcoda".into(),
            table: None,
            fixed_beta: None,
            prior_beta: vec![p.beta.lo, p.beta.hi],
            iterations: m.iterations,
            burn_in: m.burn_in,
            seed: 0,
            depth: None,
            snapshots: HmrfSettings::default().snapshots,
            refresh: ps.refresh,
            refresh_sweeps: ps.refresh_sweeps,
            levels: ps.levels,
            predictive: true,
            out_dir: PathBuf::from("."),
        }
    }
}

fn write_labels(path: &Path, field: &rcoda::LabelField) -> Result<()> {
    io::write_field_csv(field, std::fs::File::create(path)?)?;
    Ok(())
}

pub fn hmrf(args: HmrfArgs) -> Result<()> {
    let rec = Recorder::start("hmrf");
    let (cfg, resolved): (HmrfConfig, _) = resolve("hmrf", args.common.config.as_ref(), &args)?;
    let path = required(&cfg.image, "image")?;
    let y = io::load_image(&path).with_context(|| format!("reading image {}", path.display()))?;
    let geometry = LatticeGeometry::new(y.rows(), y.cols(), cfg.order)?;
    let rcoda = RcodaConfig { depth: cfg.depth, ..RcodaConfig::default() };
    let backend = Backend::from_name(&cfg.backend, rcoda, load_table(&cfg.table)?)?;
    let priors = MixturePriors {
        beta: interval(&cfg.prior_beta, "--prior-beta")?,
        ..MixturePriors::default()
    };
    let settings = HmrfSettings {
        mcmc: McmcSettings {
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            seed: RngSeed(cfg.seed),
            ..McmcSettings::default()
        },
        fixed_beta: cfg.fixed_beta,
        snapshots: cfg.snapshots,
    };
    let chain = fit_hmrf(&y, &geometry, cfg.k, &backend, &priors, &settings)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let trace = cfg.out_dir.join("hmrf_trace.csv");
    chain.write_trace(std::fs::File::create(&trace)?)?;
    let labels = cfg.out_dir.join("hmrf_labels.csv");
    write_labels(&labels, &chain.modal_labels()?)?;
    let mut artifacts = vec![trace, labels];
    let predictive_seed = RngSeed(cfg.seed).derive(&[rcoda::seed::stream_tag("predictive")]);
    let predictive = if cfg.predictive {
        let ps = PredictiveSettings {
            levels: cfg.levels.clone(),
            refresh_sweeps: cfg.refresh_sweeps,
            refresh: cfg.refresh,
            seed: predictive_seed,
            ..PredictiveSettings::default()
        };
        let cov = posterior_predictive_check(&y, &geometry, &chain, &ps)?;
        let p = cfg.out_dir.join("hmrf_predictive.json");
        io::write_json(&cov, &p)?;
        artifacts.push(p);
        Some(cov)
    } else {
        None
    };
    let summary = json!({
        "backend": chain.backend,
        "rows": y.rows(),
        "cols": y.cols(),
        "k": cfg.k,
        "order": cfg.order,
        "beta": chain.summary_beta(0.95)?,
        "alpha": chain.summary_alpha(0.95)?,
        "mu": chain.summary_mu(0.95)?,
        "sigma2": chain.summary_sigma2(0.95)?,
        "acceptance_beta": chain.acceptance_beta(),
        "empty_component_draws": chain.empty_component_draws,
        "predictive": predictive,
    });
    let p = cfg.out_dir.join("hmrf_summary.json");
    io::write_json(&summary, &p)?;
    artifacts.push(p);
    print_json(&summary)?;
    let manifest = args.common.manifest.clone().unwrap_or_else(|| cfg.out_dir.join("hmrf.manifest.json"));
    rec.finish(
        Some(&manifest),
        resolved,
        json!({ "seed": cfg.seed, "predictive_seed": predictive_seed }),
        artifacts,
    )?;
    Ok(())
}

// -------------------------------------------------------------- plan-dump

#[derive(Args, Serialize)]
pub struct PlanDumpArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    order: Option<Order>,
    /// Recursion depth; defaults to the smallest depth with a <= 4x4 terminal.
    #[arg(long = "T", alias = "depth")]
    #[serde(rename = "depth")]
    t: Option<usize>,
    /// Write the JSON here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlanDumpConfig {
    rows: usize,
    cols: usize,
    order: Order,
    depth: Option<usize>,
    out: Option<PathBuf>,
}

impl Default for PlanDumpConfig {
    fn default() -> Self {
        PlanDumpConfig { rows: 6, cols: 6, order: Order::First, depth: None, out: None }
    }
}

pub fn plan_dump(args: PlanDumpArgs) -> Result<()> {
    let rec = Recorder::start("plan-dump");
    let (cfg, resolved): (PlanDumpConfig, _) = resolve("plan-dump", args.common.config.as_ref(), &args)?;
    let geometry = LatticeGeometry::new(cfg.rows, cfg.cols, cfg.order)?;
    let depth = cfg.depth.unwrap_or_else(|| rcoda::lattice::default_depth(&geometry));
    let plan = rcoda::lattice::build_plan(&geometry, depth)?;
    let description = plan.describe();
    let mut artifacts = Vec::new();
    if let Some(p) = &cfg.out {
        io::write_json(&description, p)?;
        artifacts.push(p.clone());
    }
    print_json(&description)?;
    rec.finish(args.common.manifest.as_deref(), resolved, json!(null), artifacts)?;
    Ok(())
}
