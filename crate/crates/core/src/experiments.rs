//! Replicate-study harness: RMSE and coverage tables, decay-curve checks and
//! expected-bond scans, driven by declarative JSON specs.
//!
//! Every random draw is seeded from the master seed and the task's position
//! (size, beta, replicate, backend), so results do not depend on the number of
//! workers or the order in which tasks finish.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::{mple_beta, sample_posterior, McmcSettings, Prior};
use crate::lattice::{build_plan, default_depth, LabelField, LatticeGeometry, Order};
use crate::likelihood::{build_tdi_table, default_tdi_grid, Backend, RcodaConfig, TdiSettings};
use crate::potts::{expected_bonds_curve, gibbs_sample, PottsModel, DEFAULT_GENERATION_SWEEPS};
use crate::seed::{stream_tag, RngSeed};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rmse,
    Coverage,
    DecayCurve,
    BondsCurve,
}

/// How the thermodynamic-integration backend gets its table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdiSource {
    /// Grid of interaction values; defaults to the order's standard grid.
    pub grid: Option<Vec<f64>>,
    pub settings: TdiSettings,
}

/// A replicate study. Unset fields take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    /// Square lattice side lengths; one cell group per size.
    pub sizes: Vec<usize>,
    pub q: usize,
    pub order: Order,
    pub betas: Vec<f64>,
    /// Backend names: `exact`, `pl`, `rcoda`, `rcoda-m`, `rcoda-c`, `tdi`.
    pub backends: Vec<String>,
    pub replicates: usize,
    pub generation_sweeps: usize,
    pub mcmc: McmcSettings,
    pub prior: Prior,
    pub rcoda: RcodaConfig,
    /// Credible level for coverage.
    pub level: f64,
    pub master_seed: u64,
    pub tdi: TdiSource,
    /// Deepest level of the decay curve.
    pub decay_levels: usize,
    /// Sublattices with fewer sites are left out of the decay curve.
    pub decay_min_sites: usize,
    /// Sweeps and burn-in per grid point for expected-bond scans.
    pub bonds_sweeps: usize,
    pub bonds_burn_in: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            kind: ExperimentKind::Rmse,
            sizes: vec![32],
            q: 2,
            order: Order::First,
            betas: vec![0.2, 0.5, 0.8],
            backends: vec!["rcoda".into(), "pl".into()],
            replicates: 200,
            generation_sweeps: DEFAULT_GENERATION_SWEEPS,
            mcmc: McmcSettings::default(),
            prior: Prior::simulation(),
            rcoda: RcodaConfig::default(),
            level: 0.95,
            master_seed: 1,
            tdi: TdiSource::default(),
            decay_levels: 8,
            decay_min_sites: 256,
            bonds_sweeps: 2000,
            bonds_burn_in: 500,
        }
    }
}

/// Names accepted by [`ExperimentSpec::preset`].
pub const PRESETS: &[&str] = &[
    "rmse-desk",
    "coverage-desk",
    "decay-desk",
    "second-order-desk",
    "bonds-desk",
    "table1-full-q2",
    "table1-full-q3",
    "table2-full",
    "coverage-full",
    "decay-full",
];

impl ExperimentSpec {
    /// Built-in studies. `*-desk` presets are sized for a workstation; the
    /// `*-full` ones follow the full replicate protocol.
    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentSpec { name: name.into(), ..Default::default() };
        let spec = match name {
            "rmse-desk" => ExperimentSpec { replicates: 50, ..base },
            "coverage-desk" => ExperimentSpec {
                kind: ExperimentKind::Coverage,
                betas: vec![0.1, 0.4],
                replicates: 100,
                ..base
            },
            "decay-desk" => ExperimentSpec {
                kind: ExperimentKind::DecayCurve,
                sizes: vec![256],
                betas: vec![0.8],
                backends: vec!["rcoda".into()],
                replicates: 20,
                ..base
            },
            "second-order-desk" => ExperimentSpec {
                sizes: vec![128],
                order: Order::Second,
                betas: vec![0.2],
                backends: vec!["rcoda-m".into(), "rcoda-c".into()],
                replicates: 30,
                ..base
            },
            "bonds-desk" => ExperimentSpec {
                kind: ExperimentKind::BondsCurve,
                sizes: vec![8, 16, 32],
                order: Order::Second,
                betas: (0..=20).map(|k| k as f64 * 0.05).collect(),
                backends: vec![],
                replicates: 1,
                ..base
            },
            "table1-full-q2" | "table1-full-q3" => ExperimentSpec {
                sizes: vec![32, 64, 128, 256],
                q: if name.ends_with("q3") { 3 } else { 2 },
                backends: vec!["rcoda".into(), "pl".into(), "tdi".into()],
                ..base
            },
            "table2-full" => ExperimentSpec {
                sizes: vec![32, 64, 128, 256],
                order: Order::Second,
                betas: vec![0.1, 0.2, 0.3],
                backends: vec!["rcoda-m".into(), "rcoda-c".into(), "pl".into(), "tdi".into()],
                prior: Prior { beta: crate::inference::Uniform { lo: 0.0, hi: 0.5 }, ..Prior::simulation() },
                ..base
            },
            "coverage-full" => ExperimentSpec {
                kind: ExperimentKind::Coverage,
                betas: (1..=8).map(|k| k as f64 * 0.1).collect(),
                backends: vec!["rcoda".into(), "pl".into(), "tdi".into()],
                ..base
            },
            "decay-full" => ExperimentSpec {
                kind: ExperimentKind::DecayCurve,
                sizes: vec![256],
                betas: vec![0.8],
                backends: vec!["rcoda".into()],
                ..base
            },
            other => {
                return invalid(format!("unknown preset '{other}'; available: {}", PRESETS.join(", ")))
            }
        };
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: ExperimentSpec = crate::io::read_json(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return invalid("replicates must be at least 1");
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return invalid("sizes must be a non-empty list of positive side lengths");
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return invalid("betas must be a non-empty list of non-negative values");
        }
        if !(2..=255).contains(&self.q) {
            return invalid(format!("q must be in 2..=255, got {}", self.q));
        }
        match self.kind {
            ExperimentKind::Rmse | ExperimentKind::Coverage => {
                self.mcmc.validate()?;
                if self.backends.is_empty() {
                    return invalid("at least one backend is required");
                }
                if let Some(b) = self.betas.iter().find(|&&b| !self.prior.beta.contains(b)) {
                    return invalid(format!(
                        "beta {b} lies outside the prior support [{}, {}]",
                        self.prior.beta.lo, self.prior.beta.hi
                    ));
                }
                for name in &self.backends {
                    self.check_backend(name)?;
                }
                if !(self.level > 0.0 && self.level <= 1.0) {
                    return invalid("credible level must lie in (0, 1]");
                }
            }
            ExperimentKind::DecayCurve => {
                self.mcmc.validate()?;
                if self.order != Order::First {
                    return invalid("decay curves are defined for first-order lattices");
                }
            }
            ExperimentKind::BondsCurve => {
                if self.bonds_sweeps == 0 {
                    return invalid("bonds_sweeps must be positive");
                }
            }
        }
        Ok(())
    }

    fn check_backend(&self, name: &str) -> Result<()> {
        match (name, self.order) {
            ("exact" | "pl" | "pseudo" | "tdi", _) | ("rcoda", Order::First) | ("rcoda-m" | "rcoda-c", Order::Second) => {
                Ok(())
            }
            ("rcoda", _) | ("rcoda-m" | "rcoda-c", _) => {
                invalid(format!("backend '{name}' does not match a {} order lattice", self.order))
            }
            _ => invalid(format!("unknown likelihood backend '{name}'")),
        }
    }
}

/// One (size, beta, backend) cell of an RMSE or coverage study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub size: usize,
    pub q: usize,
    pub beta: f64,
    pub backend: String,
    pub replicates: usize,
    pub n_effective: usize,
    pub rmse: f64,
    pub rmse_se: f64,
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_estimate: f64,
    pub mean_alpha: Option<f64>,
    pub partial: bool,
}

/// Outcome of one backend on one replicate field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub size: usize,
    pub beta: f64,
    pub replicate: usize,
    pub backend: String,
    pub field_seed: u64,
    pub mcmc_seed: u64,
    pub estimate: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub alpha: Option<f64>,
    pub acceptance: Option<f64>,
    pub error: Option<String>,
}

/// One level of an averaged decay curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRecord {
    pub size: usize,
    pub beta: f64,
    pub level: usize,
    pub sites: usize,
    pub n: usize,
    /// Average of `alpha_hat^t * beta_hat`.
    pub decayed: f64,
    pub decayed_se: f64,
    /// Average MPLE on the level's sublattice.
    pub sublattice_mple: f64,
    pub sublattice_mple_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondsRecord {
    pub size: usize,
    pub edges: usize,
    pub beta: f64,
    pub mean_u: f64,
    pub se_u: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub version: String,
    pub cells: Vec<CellRecord>,
    pub replicates: Vec<ReplicateRecord>,
    pub decay: Vec<DecayRecord>,
    pub bonds: Vec<BondsRecord>,
    /// Diagnostics only; excluded from the CSV outputs.
    pub workers: usize,
    pub wall_time_secs: f64,
}

fn field_seed(spec: &ExperimentSpec, size: usize, bi: usize, rep: usize) -> RngSeed {
    RngSeed(spec.master_seed).derive(&[stream_tag("field"), size as u64, bi as u64, rep as u64])
}

fn mcmc_seed(spec: &ExperimentSpec, size: usize, bi: usize, rep: usize, backend: &str) -> RngSeed {
    RngSeed(spec.master_seed).derive(&[
        stream_tag("mcmc"),
        size as u64,
        bi as u64,
        rep as u64,
        stream_tag(backend),
    ])
}

fn simulate_field(spec: &ExperimentSpec, geometry: &LatticeGeometry, beta: f64, seed: RngSeed) -> Result<LabelField> {
    gibbs_sample(&PottsModel::new(geometry.clone(), spec.q, beta)?, spec.generation_sweeps, seed, None)
}

fn build_backends(spec: &ExperimentSpec, geometry: &LatticeGeometry, size: usize) -> Result<Vec<Backend>> {
    let mut table = None;
    spec.backends
        .iter()
        .map(|name| {
            if name == "tdi" && table.is_none() {
                let grid = spec.tdi.grid.clone().unwrap_or_else(|| default_tdi_grid(spec.order));
                let seed = RngSeed(spec.master_seed).derive(&[stream_tag("tdi"), size as u64]);
                table = Some(Arc::new(build_tdi_table(geometry, spec.q, &grid, &spec.tdi.settings, seed)?));
            }
            Backend::from_name(name, spec.rcoda, table.clone())
        })
        .collect()
}

fn run_replicates(spec: &ExperimentSpec) -> Result<(Vec<CellRecord>, Vec<ReplicateRecord>)> {
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for &size in &spec.sizes {
        let geometry = LatticeGeometry::new(size, size, spec.order)?;
        let backends = build_backends(spec, &geometry, size)?;
        for b in &backends {
            b.check_compatible(&geometry, spec.q)?;
        }
        let tasks: Vec<(usize, usize)> = (0..spec.betas.len())
            .flat_map(|bi| (0..spec.replicates).map(move |r| (bi, r)))
            .collect();
        let results: Vec<Vec<ReplicateRecord>> = tasks
            .par_iter()
            .map(|&(bi, rep)| {
                let beta = spec.betas[bi];
                let fseed = field_seed(spec, size, bi, rep);
                let field = simulate_field(spec, &geometry, beta, fseed);
                backends
                    .iter()
                    .map(|backend| {
                        let name = backend.name().to_string();
                        let mseed = mcmc_seed(spec, size, bi, rep, &name);
                        let mut rec = ReplicateRecord {
                            size,
                            beta,
                            replicate: rep,
                            backend: name,
                            field_seed: fseed.0,
                            mcmc_seed: mseed.0,
                            estimate: None,
                            lower: None,
                            upper: None,
                            alpha: None,
                            acceptance: None,
                            error: None,
                        };
                        let outcome = field.as_ref().map_err(|e| e.to_string()).and_then(|f| {
                            let settings = McmcSettings { seed: mseed, ..spec.mcmc };
                            let chain = sample_posterior(f, &geometry, backend, &spec.prior, &settings)
                                .map_err(|e| e.to_string())?;
                            let s = chain.summary_beta(spec.level).map_err(|e| e.to_string())?;
                            let a = chain.summary_alpha(spec.level).map_err(|e| e.to_string())?;
                            Ok((s, a.map(|a| a.mean), chain.acceptance_beta()))
                        });
                        match outcome {
                            Ok((s, a, acc)) => {
                                rec.estimate = Some(s.mean);
                                rec.lower = Some(s.lower);
                                rec.upper = Some(s.upper);
                                rec.alpha = a;
                                rec.acceptance = Some(acc);
                            }
                            Err(msg) => rec.error = Some(msg),
                        }
                        rec
                    })
                    .collect()
            })
            .collect();
        let flat: Vec<ReplicateRecord> = results.into_iter().flatten().collect();
        for &beta in &spec.betas {
            for backend in &backends {
                let name = backend.name();
                let group: Vec<&ReplicateRecord> = flat
                    .iter()
                    .filter(|r| r.beta.to_bits() == beta.to_bits() && r.backend == name)
                    .collect();
                cells.push(summarize_cell(size, spec.q, beta, name, &group));
            }
        }
        records.extend(flat);
    }
    Ok((cells, records))
}

fn summarize_cell(size: usize, q: usize, beta: f64, backend: &str, group: &[&ReplicateRecord]) -> CellRecord {
    let ok: Vec<&ReplicateRecord> = group.iter().copied().filter(|r| r.estimate.is_some()).collect();
    let n = ok.len();
    let sq: Vec<f64> = ok.iter().map(|r| (r.estimate.unwrap() - beta).powi(2)).collect();
    let hits: Vec<f64> = ok
        .iter()
        .map(|r| {
            let inside = r.lower.unwrap() <= beta && beta <= r.upper.unwrap();
            if inside { 1.0 } else { 0.0 }
        })
        .collect();
    let (rmse, rmse_se, coverage, coverage_se, mean_estimate) = if n == 0 {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mse = stats::mean(&sq);
        let rmse = mse.sqrt();
        // Delta method on the mean squared error.
        let rmse_se = if rmse > 0.0 { stats::sd(&sq) / (n as f64).sqrt() / (2.0 * rmse) } else { 0.0 };
        let p = stats::mean(&hits);
        let mean_estimate = stats::mean(&ok.iter().map(|r| r.estimate.unwrap()).collect::<Vec<_>>());
        (rmse, rmse_se, p, (p * (1.0 - p) / n as f64).sqrt(), mean_estimate)
    };
    let alphas: Vec<f64> = ok.iter().filter_map(|r| r.alpha).collect();
    CellRecord {
        size,
        q,
        beta,
        backend: backend.to_string(),
        replicates: group.len(),
        n_effective: n,
        rmse,
        rmse_se,
        coverage,
        coverage_se,
        mean_estimate,
        mean_alpha: (!alphas.is_empty()).then(|| stats::mean(&alphas)),
        partial: n < group.len(),
    }
}

/// `(alpha^t beta, sublattice MPLE)` per included level.
type CurvePoints = Vec<(f64, f64)>;

fn run_decay(spec: &ExperimentSpec) -> Result<(Vec<DecayRecord>, Vec<ReplicateRecord>)> {
    let mut out = Vec::new();
    let mut records = Vec::new();
    let backend = Backend::Rcoda(spec.rcoda);
    for &size in &spec.sizes {
        let geometry = LatticeGeometry::new(size, size, Order::First)?;
        let depth = spec.rcoda.depth.unwrap_or_else(|| default_depth(&geometry)).max(spec.decay_levels);
        let plan = build_plan(&geometry, depth)?;
        let levels: Vec<usize> = (0..=spec.decay_levels)
            .filter(|&t| plan.frame(t).map(|(g, _)| g.n_present() >= spec.decay_min_sites).unwrap_or(false))
            .collect();
        for (bi, &beta) in spec.betas.iter().enumerate() {
            let per_rep: Vec<(ReplicateRecord, Option<CurvePoints>)> = (0..spec.replicates)
                .into_par_iter()
                .map(|rep| {
                    let fseed = field_seed(spec, size, bi, rep);
                    let mseed = mcmc_seed(spec, size, bi, rep, backend.name());
                    let run = || -> Result<(f64, f64, CurvePoints)> {
                        let field = simulate_field(spec, &geometry, beta, fseed)?;
                        let settings = McmcSettings { seed: mseed, ..spec.mcmc };
                        let chain = sample_posterior(&field, &geometry, &backend, &spec.prior, &settings)?;
                        let b = chain.summary_beta(spec.level)?.mean;
                        let a = chain.summary_alpha(spec.level)?.map_or(1.0, |s| s.mean);
                        let points = levels
                            .iter()
                            .map(|&t| {
                                let (g, f) = plan.extract(t, &field)?;
                                let m = mple_beta(&f, &g, spec.q, (0.0, 4.0))?;
                                Ok((a.powi(t as i32) * b, m.estimate))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok((b, a, points))
                    };
                    let mut rec = ReplicateRecord {
                        size,
                        beta,
                        replicate: rep,
                        backend: backend.name().into(),
                        field_seed: fseed.0,
                        mcmc_seed: mseed.0,
                        estimate: None,
                        lower: None,
                        upper: None,
                        alpha: None,
                        acceptance: None,
                        error: None,
                    };
                    match run() {
                        Ok((b, a, points)) => {
                            rec.estimate = Some(b);
                            rec.alpha = Some(a);
                            (rec, Some(points))
                        }
                        Err(e) => {
                            rec.error = Some(e.to_string());
                            (rec, None)
                        }
                    }
                })
                .collect();
            let ok: Vec<&Vec<(f64, f64)>> = per_rep.iter().filter_map(|(_, p)| p.as_ref()).collect();
            if !ok.is_empty() {
                for (j, &t) in levels.iter().enumerate() {
                    let decayed: Vec<f64> = ok.iter().map(|p| p[j].0).collect();
                    let mple: Vec<f64> = ok.iter().map(|p| p[j].1).collect();
                    let root_n = (ok.len() as f64).sqrt();
                    out.push(DecayRecord {
                        size,
                        beta,
                        level: t,
                        sites: plan.frame(t)?.0.n_present(),
                        n: ok.len(),
                        decayed: stats::mean(&decayed),
                        decayed_se: stats::sd(&decayed) / root_n,
                        sublattice_mple: stats::mean(&mple),
                        sublattice_mple_se: stats::sd(&mple) / root_n,
                    });
                }
            }
            records.extend(per_rep.into_iter().map(|(r, _)| r));
        }
    }
    Ok((out, records))
}

fn run_bonds(spec: &ExperimentSpec) -> Result<Vec<BondsRecord>> {
    let mut out = Vec::new();
    for &size in &spec.sizes {
        let geometry = LatticeGeometry::new(size, size, spec.order)?;
        let seed = RngSeed(spec.master_seed).derive(&[stream_tag("bonds"), size as u64]);
        let curve = expected_bonds_curve(&geometry, spec.q, &spec.betas, spec.bonds_sweeps, spec.bonds_burn_in, seed)?;
        out.extend(curve.into_iter().map(|p| BondsRecord {
            size,
            edges: geometry.edge_count(),
            beta: p.beta,
            mean_u: p.mean_u,
            se_u: p.se_u,
        }));
    }
    Ok(out)
}

/// Run a study on a pool of `workers` threads.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<ExperimentReport> {
    spec.validate()?;
    if workers == 0 {
        return invalid("at least one worker is required");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let mut report = ExperimentReport {
        spec: spec.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        cells: Vec::new(),
        replicates: Vec::new(),
        decay: Vec::new(),
        bonds: Vec::new(),
        workers,
        wall_time_secs: 0.0,
    };
    pool.install(|| -> Result<()> {
        match spec.kind {
            ExperimentKind::Rmse | ExperimentKind::Coverage => {
                let (cells, reps) = run_replicates(spec)?;
                report.cells = cells;
                report.replicates = reps;
            }
            ExperimentKind::DecayCurve => {
                let (decay, reps) = run_decay(spec)?;
                report.decay = decay;
                report.replicates = reps;
            }
            ExperimentKind::BondsCurve => report.bonds = run_bonds(spec)?,
        }
        Ok(())
    })?;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

impl ExperimentReport {
    /// Main long-format table for the study kind. Contains no timing data, so
    /// reruns with the same seed are byte-identical.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self.spec.kind {
            ExperimentKind::Rmse | ExperimentKind::Coverage => {
                w.write_record([
                    "size", "q", "beta", "backend", "replicates", "n_effective", "rmse", "rmse_se", "coverage",
                    "coverage_se", "mean_estimate", "mean_alpha", "partial",
                ])?;
                for c in &self.cells {
                    w.write_record([
                        c.size.to_string(),
                        c.q.to_string(),
                        c.beta.to_string(),
                        c.backend.clone(),
                        c.replicates.to_string(),
                        c.n_effective.to_string(),
                        c.rmse.to_string(),
                        c.rmse_se.to_string(),
                        c.coverage.to_string(),
                        c.coverage_se.to_string(),
                        c.mean_estimate.to_string(),
                        opt(c.mean_alpha),
                        c.partial.to_string(),
                    ])?;
                }
            }
            ExperimentKind::DecayCurve => {
                w.write_record(["size", "beta", "level", "sites", "series", "value", "se", "n"])?;
                for d in &self.decay {
                    for (series, v, se) in [
                        ("alpha_t_beta", d.decayed, d.decayed_se),
                        ("sublattice_mple", d.sublattice_mple, d.sublattice_mple_se),
                    ] {
                        w.write_record([
                            d.size.to_string(),
                            d.beta.to_string(),
                            d.level.to_string(),
                            d.sites.to_string(),
                            series.to_string(),
                            v.to_string(),
                            se.to_string(),
                            d.n.to_string(),
                        ])?;
                    }
                }
            }
            ExperimentKind::BondsCurve => {
                w.write_record(["size", "edges", "beta", "mean_U", "se_U"])?;
                for b in &self.bonds {
                    w.write_record([
                        b.size.to_string(),
                        b.edges.to_string(),
                        b.beta.to_string(),
                        b.mean_u.to_string(),
                        b.se_u.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Per-replicate estimates with their seeds.
    pub fn write_replicates_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "size", "beta", "replicate", "backend", "field_seed", "mcmc_seed", "estimate", "lower", "upper", "alpha",
            "acceptance", "error",
        ])?;
        for r in &self.replicates {
            w.write_record([
                r.size.to_string(),
                r.beta.to_string(),
                r.replicate.to_string(),
                r.backend.clone(),
                r.field_seed.to_string(),
                r.mcmc_seed.to_string(),
                opt(r.estimate),
                opt(r.lower),
                opt(r.upper),
                opt(r.alpha),
                opt(r.acceptance),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write `<stem>.csv`, `<stem>_replicates.csv` (when there are replicate
    /// rows) and `<stem>.json` into `dir`. Returns the paths written.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        let main = dir.join(format!("{stem}.csv"));
        self.write_csv(std::fs::File::create(&main)?)?;
        paths.push(main);
        if !self.replicates.is_empty() {
            let reps = dir.join(format!("{stem}_replicates.csv"));
            self.write_replicates_csv(std::fs::File::create(&reps)?)?;
            paths.push(reps);
        }
        let json = dir.join(format!("{stem}.json"));
        crate::io::write_json(self, &json)?;
        paths.push(json);
        Ok(paths)
    }

    pub fn cell(&self, backend: &str, beta: f64) -> Option<&CellRecord> {
        self.cells.iter().find(|c| c.backend == backend && (c.beta - beta).abs() < 1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ExperimentKind) -> ExperimentSpec {
        ExperimentSpec {
            kind,
            sizes: vec![8],
            betas: vec![0.2, 0.5],
            replicates: 3,
            generation_sweeps: 50,
            mcmc: McmcSettings { iterations: 200, burn_in: 50, ..Default::default() },
            bonds_sweeps: 40,
            bonds_burn_in: 10,
            ..Default::default()
        }
    }

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            ExperimentSpec::preset(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentSpec::preset("nope").is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = tiny(ExperimentKind::Rmse);
        s.betas = vec![1.5];
        assert!(s.validate().is_err());
        let mut s = tiny(ExperimentKind::Rmse);
        s.backends = vec!["rcoda-c".into()];
        assert!(s.validate().is_err());
        let mut s = tiny(ExperimentKind::Rmse);
        s.replicates = 0;
        assert!(s.validate().is_err());
        let json = r#"{"kind": "coverage", "sizes": [16], "replicates": 5}"#;
        let s: ExperimentSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s.kind, ExperimentKind::Coverage);
        assert_eq!(s.generation_sweeps, 5000);
        assert!(serde_json::from_str::<ExperimentSpec>(r#"{"kinds": "rmse"}"#).is_err());
    }

    fn csv_of(r: &ExperimentReport) -> (String, String) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        r.write_csv(&mut a).unwrap();
        r.write_replicates_csv(&mut b).unwrap();
        (String::from_utf8(a).unwrap(), String::from_utf8(b).unwrap())
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = tiny(ExperimentKind::Rmse);
        let one = run_experiment(&s, 1).unwrap();
        let three = run_experiment(&s, 3).unwrap();
        assert_eq!(csv_of(&one), csv_of(&three));
        assert_eq!(one.cells.len(), 4);
        for c in &one.cells {
            assert!(c.rmse >= 0.0 && (0.0..=1.0).contains(&c.coverage));
            assert_eq!(c.n_effective, 3);
        }
    }

    #[test]
    fn full_level_coverage_is_one() {
        let mut s = tiny(ExperimentKind::Coverage);
        s.level = 1.0;
        s.backends = vec!["pl".into()];
        let r = run_experiment(&s, 2).unwrap();
        assert!(r.cells.iter().all(|c| c.coverage == 1.0));
    }

    #[test]
    fn bonds_curve_scales_with_edges_at_zero() {
        let mut s = tiny(ExperimentKind::BondsCurve);
        s.sizes = vec![4, 8];
        s.betas = vec![0.0, 0.3];
        s.bonds_sweeps = 400;
        let r = run_experiment(&s, 2).unwrap();
        assert_eq!(r.bonds.len(), 4);
        for b in r.bonds.iter().filter(|b| b.beta == 0.0) {
            let expect = b.edges as f64 / 2.0;
            assert!((b.mean_u - expect).abs() < 4.0 * b.se_u.max(0.05), "{b:?}");
        }
    }

    #[test]
    fn decay_level_zero_is_full_field() {
        let mut s = tiny(ExperimentKind::DecayCurve);
        s.sizes = vec![16];
        s.betas = vec![0.4];
        s.decay_min_sites = 32;
        s.replicates = 2;
        let r = run_experiment(&s, 1).unwrap();
        let levels: Vec<usize> = r.decay.iter().map(|d| d.level).collect();
        assert_eq!(levels[0], 0);
        assert!(r.decay.iter().all(|d| d.sites >= 32));
        assert!((r.decay[0].decayed - r.replicates.iter().map(|x| x.estimate.unwrap()).sum::<f64>() / 2.0).abs() < 1e-12);
    }
}
