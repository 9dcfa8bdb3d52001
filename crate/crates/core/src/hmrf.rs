//! Hidden Potts model for image segmentation: Gaussian emissions given
//! latent labels, with the interaction strength sampled through any
//! likelihood backend.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::{accept, summarize, McmcSettings, RandomWalk, Summary, Uniform};
use crate::lattice::{LabelField, LatticeGeometry};
use crate::likelihood::Backend;
use crate::potts::{bond_weights, gibbs_sweep};
use crate::seed::{stream_tag, RngSeed};
use crate::stats;

/// Real-valued image on the lattice, intensities normally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Observation {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return invalid(format!("image has {} values for a {rows}x{cols} lattice", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("image contains non-finite intensities");
        }
        Ok(Observation { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn check_geometry(&self, geometry: &LatticeGeometry) -> Result<()> {
        if (self.rows, self.cols) != (geometry.rows(), geometry.cols()) {
            return Err(Error::Mismatch(format!(
                "image is {}x{} but the lattice is {}x{}",
                self.rows,
                self.cols,
                geometry.rows(),
                geometry.cols()
            )));
        }
        Ok(())
    }

    /// Simulate `y_i ~ N(mu[z_i], sigma2[z_i])`.
    pub fn simulate<R: Rng + ?Sized>(labels: &LabelField, params: &MixtureParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        if params.k() != labels.q() {
            return Err(Error::Mismatch("mixture size differs from the number of label states".into()));
        }
        let values = labels
            .values()
            .iter()
            .map(|&c| {
                let c = c as usize;
                Normal::new(params.mu[c], params.sigma2[c].sqrt()).unwrap().sample(rng)
            })
            .collect();
        Observation::new(labels.rows(), labels.cols(), values)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl MixtureParams {
    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma2.len() || self.mu.len() < 2 {
            return invalid("mixture needs at least two components with one mean and variance each");
        }
        if self.sigma2.iter().any(|&s| !(s > 0.0 && s.is_finite())) || self.mu.iter().any(|m| !m.is_finite()) {
            return invalid("mixture variances must be positive and all parameters finite");
        }
        Ok(())
    }

    /// Sort components by mean. Returns `perm` with `perm[old] = new`.
    pub fn enforce_order(&mut self) -> Vec<u8> {
        let mut idx: Vec<usize> = (0..self.k()).collect();
        idx.sort_by(|&a, &b| self.mu[a].total_cmp(&self.mu[b]));
        let mut perm = vec![0u8; self.k()];
        for (new, &old) in idx.iter().enumerate() {
            perm[old] = new as u8;
        }
        self.mu = idx.iter().map(|&i| self.mu[i]).collect();
        self.sigma2 = idx.iter().map(|&i| self.sigma2[i]).collect();
        perm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixturePriors {
    pub mu_mean: f64,
    pub mu_sd: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    pub beta: Uniform,
    pub alpha: Uniform,
}

impl Default for MixturePriors {
    fn default() -> Self {
        MixturePriors {
            mu_mean: 0.5,
            mu_sd: 100.0,
            sigma2_shape: 0.001,
            sigma2_scale: 0.001,
            beta: Uniform { lo: 0.0, hi: 4.0 },
            alpha: Uniform { lo: 0.0, hi: 1.0 },
        }
    }
}

impl MixturePriors {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_sd > 0.0 && self.sigma2_shape > 0.0 && self.sigma2_scale > 0.0) {
            return invalid("prior scale and shape hyperparameters must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmrfSettings {
    pub mcmc: McmcSettings,
    /// Hold beta fixed (the backend is then never evaluated).
    pub fixed_beta: Option<f64>,
    /// Number of evenly thinned retained label maps kept for predictive checks.
    pub snapshots: usize,
}

impl Default for HmrfSettings {
    fn default() -> Self {
        HmrfSettings {
            mcmc: McmcSettings::default(),
            fixed_beta: None,
            snapshots: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub labels: Vec<u8>,
    pub params: MixtureParams,
    pub beta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HmrfChain {
    pub backend: String,
    pub rows: usize,
    pub cols: usize,
    pub settings: HmrfSettings,
    pub priors: MixturePriors,
    pub mu: Vec<Vec<f64>>,
    pub sigma2: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub accepted_beta: Vec<bool>,
    pub accepted_alpha: Option<Vec<bool>>,
    /// Component updates that fell back to a prior draw because no site held
    /// that label.
    pub empty_component_draws: usize,
    pub snapshots: Vec<Snapshot>,
    /// Per-site tallies of retained labels, `site * k + state`.
    label_tally: Vec<u32>,
}

impl HmrfChain {
    pub fn k(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    pub fn burn_in(&self) -> usize {
        self.settings.mcmc.burn_in
    }

    pub fn n_retained(&self) -> usize {
        self.beta.len() - self.burn_in()
    }

    pub fn summary_beta(&self, level: f64) -> Result<Summary> {
        summarize(&self.beta[self.burn_in()..], level)
    }

    pub fn summary_alpha(&self, level: f64) -> Result<Option<Summary>> {
        self.alpha.as_ref().map(|a| summarize(&a[self.burn_in()..], level)).transpose()
    }

    pub fn summary_mu(&self, level: f64) -> Result<Vec<Summary>> {
        (0..self.k())
            .map(|c| summarize(&self.mu[self.burn_in()..].iter().map(|m| m[c]).collect::<Vec<_>>(), level))
            .collect()
    }

    pub fn summary_sigma2(&self, level: f64) -> Result<Vec<Summary>> {
        (0..self.k())
            .map(|c| summarize(&self.sigma2[self.burn_in()..].iter().map(|s| s[c]).collect::<Vec<_>>(), level))
            .collect()
    }

    pub fn acceptance_beta(&self) -> f64 {
        let kept = &self.accepted_beta[self.burn_in()..];
        kept.iter().filter(|&&a| a).count() as f64 / kept.len().max(1) as f64
    }

    /// Most frequent retained label at each site (ties to the lower label).
    pub fn modal_labels(&self) -> Result<LabelField> {
        let k = self.k();
        let values = self
            .label_tally
            .chunks(k)
            .map(|t| {
                let mut best = 0;
                for c in 1..k {
                    if t[c] > t[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        LabelField::new(self.rows, self.cols, k, values)
    }

    /// CSV trace with one row per iteration.
    pub fn write_trace<W: std::io::Write>(&self, out: W) -> Result<()> {
        let k = self.k();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "beta".into(), "alpha".into()];
        header.extend((1..=k).map(|c| format!("mu_{c}")));
        header.extend((1..=k).map(|c| format!("sigma2_{c}")));
        header.extend(["accepted_beta".into(), "accepted_alpha".into()]);
        w.write_record(&header)?;
        for i in 0..self.beta.len() {
            let mut row = vec![
                i.to_string(),
                self.beta[i].to_string(),
                self.alpha.as_ref().map_or(String::new(), |a| a[i].to_string()),
            ];
            row.extend(self.mu[i].iter().map(f64::to_string));
            row.extend(self.sigma2[i].iter().map(f64::to_string));
            row.push((self.accepted_beta[i] as u8).to_string());
            row.push(
                self.accepted_alpha
                    .as_ref()
                    .map_or(String::new(), |a| (a[i] as u8).to_string()),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
/// One raster sweep of `z_i` from `N(y_i; mu_c, sigma2_c) exp(beta s_c(i))`.
fn sweep_labels<R: Rng + ?Sized>(
    geometry: &LatticeGeometry,
    z: &mut [u8],
    y: &[f64],
    params: &MixtureParams,
    beta: f64,
    logw: &mut [f64],
    counts: &mut [u32],
    rng: &mut R,
) {
    let k = params.k();
    let log_norm: Vec<f64> = params.sigma2.iter().map(|s| -0.5 * s.ln()).collect();
    for i in 0..z.len() {
        if !geometry.is_present(i) {
            continue;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for &j in geometry.neighbours(i) {
            counts[z[j as usize] as usize] += 1;
        }
        let mut top = f64::NEG_INFINITY;
        for c in 0..k {
            let d = y[i] - params.mu[c];
            logw[c] = log_norm[c] - d * d / (2.0 * params.sigma2[c]) + beta * counts[c] as f64;
            top = top.max(logw[c]);
        }
        let mut total = 0.0;
        for w in logw.iter_mut() {
            *w = (*w - top).exp();
            total += *w;
        }
        if cfg!(debug_assertions) && i == 0 {
            let s: f64 = logw.iter().map(|w| w / total).sum();
            debug_assert!((s - 1.0).abs() < 1e-12, "label conditional sums to {s}");
        }
        let mut u = rng.random::<f64>() * total;
        let mut new = k - 1;
        for (c, &w) in logw.iter().enumerate() {
            if u < w {
                new = c;
                break;
            }
            u -= w;
        }
        z[i] = new as u8;
    }
}

fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).unwrap().sample(rng);
    (1.0 / g).clamp(1e-12, 1e12)
}

/// Conjugate updates of every component. Returns how many components were
/// empty. The ordering constraint is imposed between the mean and variance
/// updates, relabelling `z` to match.
fn update_components<R: Rng + ?Sized>(
    y: &[f64],
    geometry: &LatticeGeometry,
    z: &mut [u8],
    params: &mut MixtureParams,
    priors: &MixturePriors,
    rng: &mut R,
) -> usize {
    let k = params.k();
    let mut n = vec![0usize; k];
    let mut sum = vec![0.0; k];
    for i in geometry.present_sites() {
        n[z[i] as usize] += 1;
        sum[z[i] as usize] += y[i];
    }
    let prior_prec = 1.0 / (priors.mu_sd * priors.mu_sd);
    let mut empty = 0;
    for c in 0..k {
        if n[c] == 0 {
            empty += 1;
            params.mu[c] = Normal::new(priors.mu_mean, priors.mu_sd).unwrap().sample(rng);
            continue;
        }
        let prec = prior_prec + n[c] as f64 / params.sigma2[c];
        let mean = (priors.mu_mean * prior_prec + sum[c] / params.sigma2[c]) / prec;
        params.mu[c] = Normal::new(mean, prec.sqrt().recip()).unwrap().sample(rng);
    }
    let perm = params.enforce_order();
    if perm.iter().enumerate().any(|(a, &b)| a != b as usize) {
        for i in geometry.present_sites() {
            z[i] = perm[z[i] as usize];
        }
        let mut moved = vec![0usize; k];
        for (old, &new) in perm.iter().enumerate() {
            moved[new as usize] = n[old];
        }
        n = moved;
    }
    let mut ss = vec![0.0; k];
    for i in geometry.present_sites() {
        let c = z[i] as usize;
        let d = y[i] - params.mu[c];
        ss[c] += d * d;
    }
    for c in 0..k {
        params.sigma2[c] = if n[c] == 0 {
            draw_inverse_gamma(priors.sigma2_shape, priors.sigma2_scale, rng)
        } else {
            draw_inverse_gamma(
                priors.sigma2_shape + 0.5 * n[c] as f64,
                priors.sigma2_scale + 0.5 * ss[c],
                rng,
            )
        };
    }
    empty
}

/// Starting point: means at evenly spaced quantiles, a common variance, and
/// labels assigned to the nearest mean.
fn initial_state(y: &Observation, geometry: &LatticeGeometry, k: usize) -> (MixtureParams, Vec<u8>) {
    let present: Vec<f64> = geometry.present_sites().map(|i| y.values[i]).collect();
    let sorted = stats::sorted(&present);
    let mu: Vec<f64> = (0..k)
        .map(|c| stats::quantile_sorted(&sorted, (c as f64 + 0.5) / k as f64))
        .collect();
    let var = (stats::sd(&present).powi(2) / k as f64).max(1e-6);
    let z = y
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !geometry.is_present(i) {
                return 0;
            }
            (0..k)
                .min_by(|&a, &b| (v - mu[a]).abs().total_cmp(&(v - mu[b]).abs()))
                .unwrap() as u8
        })
        .collect();
    (MixtureParams { mu, sigma2: vec![var; k] }, z)
}

fn snapshot_schedule(burn_in: usize, iterations: usize, wanted: usize) -> Vec<usize> {
    let retained = iterations - burn_in;
    let m = wanted.min(retained);
    (0..m).map(|j| burn_in + j * retained / m).collect()
}

/// Fit the hidden Potts model by Metropolis-within-Gibbs.
///
/// Each iteration sweeps the labels, updates the component means (then sorts
/// them), the variances, and finally beta (and alpha for decomposition
/// backends) with the backend evaluated on the current labels.
pub fn fit_hmrf(
    y: &Observation,
    geometry: &LatticeGeometry,
    k: usize,
    backend: &Backend,
    priors: &MixturePriors,
    settings: &HmrfSettings,
) -> Result<HmrfChain> {
    y.check_geometry(geometry)?;
    priors.validate()?;
    let mcmc = &settings.mcmc;
    mcmc.validate()?;
    if !(2..=255).contains(&k) {
        return invalid(format!("number of components must be in 2..=255, got {k}"));
    }
    let spatial = match settings.fixed_beta {
        Some(b) if !(b >= 0.0 && b.is_finite()) => return invalid("fixed beta must be non-negative"),
        Some(_) => None,
        None => {
            let bound = backend.bind(geometry, k)?;
            let probe = bound.prepare(&LabelField::constant(geometry.rows(), geometry.cols(), k, 0)?)?;
            if let Some((lo, hi)) = probe.beta_range() {
                if priors.beta.lo < lo || priors.beta.hi > hi {
                    return Err(Error::Range(format!(
                        "beta prior [{}, {}] exceeds the integration table range [{lo}, {hi}]",
                        priors.beta.lo, priors.beta.hi
                    )));
                }
            }
            Some(bound)
        }
    };
    let uses_alpha = spatial.is_some() && backend.uses_alpha();

    let mut rng = mcmc.seed.rng();
    let (mut params, mut z) = initial_state(y, geometry, k);
    let mut beta = match settings.fixed_beta {
        Some(b) => b,
        None => mcmc
            .initial_beta
            .unwrap_or_else(|| (priors.beta.lo + 0.3).min(0.5 * (priors.beta.lo + priors.beta.hi))),
    };
    let mut alpha = mcmc
        .initial_alpha
        .unwrap_or(0.5 * (priors.alpha.lo + priors.alpha.hi));
    let mut beta_walk = RandomWalk { sd: mcmc.proposal_sd_beta, support: priors.beta };
    let mut alpha_walk = RandomWalk { sd: mcmc.proposal_sd_alpha, support: priors.alpha };

    let n = mcmc.iterations;
    let schedule = snapshot_schedule(mcmc.burn_in, n, settings.snapshots);
    let mut next_snapshot = 0;
    let mut chain = HmrfChain {
        backend: if spatial.is_some() { backend.name().to_string() } else { "fixed".into() },
        rows: geometry.rows(),
        cols: geometry.cols(),
        settings: *settings,
        priors: *priors,
        mu: Vec::with_capacity(n),
        sigma2: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        alpha: uses_alpha.then(|| Vec::with_capacity(n)),
        accepted_beta: Vec::with_capacity(n),
        accepted_alpha: uses_alpha.then(|| Vec::with_capacity(n)),
        empty_component_draws: 0,
        snapshots: Vec::with_capacity(schedule.len()),
        label_tally: vec![0; geometry.len() * k],
    };
    let mut logw = vec![0.0; k];
    let mut counts = vec![0u32; k];
    for it in 0..n {
        sweep_labels(geometry, &mut z, &y.values, &params, beta, &mut logw, &mut counts, &mut rng);
        chain.empty_component_draws += update_components(&y.values, geometry, &mut z, &mut params, priors, &mut rng);

        let (mut acc_b, mut acc_a) = (false, false);
        if let Some(bound) = &spatial {
            let field = LabelField::new(geometry.rows(), geometry.cols(), k, z.clone())?;
            let lik = bound.prepare(&field)?;
            let mut ll = lik.log_lik(beta, alpha)?;
            let proposal = beta_walk.propose(beta, &mut rng);
            let ll_new = lik.log_lik(proposal, alpha)?;
            acc_b = accept(ll_new - ll, &mut rng);
            if acc_b {
                beta = proposal;
                ll = ll_new;
            }
            if uses_alpha {
                let proposal = alpha_walk.propose(alpha, &mut rng);
                let ll_new = lik.log_lik(beta, proposal)?;
                acc_a = accept(ll_new - ll, &mut rng);
                if acc_a {
                    alpha = proposal;
                }
            }
            if mcmc.adapt && it < mcmc.burn_in {
                beta_walk.adapt(acc_b, it, mcmc.target_acceptance);
                if uses_alpha {
                    alpha_walk.adapt(acc_a, it, mcmc.target_acceptance);
                }
            }
        }

        chain.mu.push(params.mu.clone());
        chain.sigma2.push(params.sigma2.clone());
        chain.beta.push(beta);
        chain.accepted_beta.push(acc_b);
        if let (Some(a), Some(f)) = (chain.alpha.as_mut(), chain.accepted_alpha.as_mut()) {
            a.push(alpha);
            f.push(acc_a);
        }
        if it >= mcmc.burn_in {
            for i in geometry.present_sites() {
                chain.label_tally[i * k + z[i] as usize] += 1;
            }
        }
        if schedule.get(next_snapshot) == Some(&it) {
            chain.snapshots.push(Snapshot {
                iteration: it,
                labels: z.clone(),
                params: params.clone(),
                beta,
            });
            next_snapshot += 1;
        }
    }
    Ok(chain)
}

/// How replicate label maps are refreshed from a stored snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Refresh {
    /// Gibbs sweeps of the full conditional given the observed image.
    #[default]
    Posterior,
    /// Gibbs sweeps of the Potts prior alone.
    Prior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictiveSettings {
    pub levels: Vec<f64>,
    pub refresh_sweeps: usize,
    pub refresh: Refresh,
    pub seed: RngSeed,
    /// Minimum number of retained iterations the chain must carry.
    pub min_retained: usize,
}

impl Default for PredictiveSettings {
    fn default() -> Self {
        PredictiveSettings {
            levels: vec![0.95, 0.90, 0.80],
            refresh_sweeps: 1,
            refresh: Refresh::Posterior,
            seed: RngSeed(0),
            min_retained: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveCoverage {
    pub levels: Vec<f64>,
    /// Fraction of observed pixels inside each central predictive interval.
    pub coverage: Vec<f64>,
    pub replicates: usize,
    pub pixels: usize,
}

/// Posterior predictive check: replicate images from the stored snapshots,
/// per-pixel central intervals, and the share of observed pixels inside.
pub fn posterior_predictive_check(
    y: &Observation,
    geometry: &LatticeGeometry,
    chain: &HmrfChain,
    settings: &PredictiveSettings,
) -> Result<PredictiveCoverage> {
    y.check_geometry(geometry)?;
    if chain.n_retained() < settings.min_retained {
        return Err(Error::Insufficient(format!(
            "predictive check needs at least {} retained draws, chain has {}",
            settings.min_retained,
            chain.n_retained()
        )));
    }
    if chain.snapshots.len() < 2 {
        return Err(Error::Insufficient("chain stored fewer than two label snapshots".into()));
    }
    if settings.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return invalid("predictive levels must lie in (0, 1)");
    }
    let k = chain.k();
    let pixels: Vec<usize> = geometry.present_sites().collect();
    let stream = stream_tag("predictive");
    let replicates: Vec<Vec<f32>> = chain
        .snapshots
        .par_iter()
        .enumerate()
        .map(|(d, snap)| {
            let mut rng = settings.seed.derive(&[stream, d as u64]).rng();
            let mut z = snap.labels.clone();
            let mut counts = vec![0u32; k];
            match settings.refresh {
                Refresh::Posterior => {
                    let mut logw = vec![0.0; k];
                    for _ in 0..settings.refresh_sweeps {
                        sweep_labels(geometry, &mut z, &y.values, &snap.params, snap.beta, &mut logw, &mut counts, &mut rng);
                    }
                }
                Refresh::Prior => {
                    let weights = bond_weights(snap.beta, geometry.order().max_neighbours());
                    let (mut c, mut p) = (Vec::new(), Vec::new());
                    for _ in 0..settings.refresh_sweeps {
                        gibbs_sweep(geometry, &mut z, k, &weights, &mut c, &mut p, &mut rng);
                    }
                }
            }
            let normals: Vec<Normal<f64>> = (0..k)
                .map(|c| Normal::new(snap.params.mu[c], snap.params.sigma2[c].sqrt()).unwrap())
                .collect();
            pixels.iter().map(|&i| normals[z[i] as usize].sample(&mut rng) as f32).collect()
        })
        .collect();
    let r = replicates.len();
    let inside: Vec<Vec<bool>> = (0..pixels.len())
        .into_par_iter()
        .map(|p| {
            let mut column: Vec<f64> = replicates.iter().map(|rep| rep[p] as f64).collect();
            column.sort_by(f64::total_cmp);
            let obs = y.values[pixels[p]];
            settings
                .levels
                .iter()
                .map(|&l| {
                    let lo = stats::quantile_sorted(&column, 0.5 * (1.0 - l));
                    let hi = stats::quantile_sorted(&column, 0.5 * (1.0 + l));
                    lo <= obs && obs <= hi
                })
                .collect()
        })
        .collect();
    let coverage = (0..settings.levels.len())
        .map(|j| inside.iter().filter(|v| v[j]).count() as f64 / pixels.len() as f64)
        .collect();
    Ok(PredictiveCoverage {
        levels: settings.levels.clone(),
        coverage,
        replicates: r,
        pixels: pixels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Order;
    use crate::likelihood::RcodaConfig;
    use crate::potts::{gibbs_sample, PottsModel};

    fn short(iterations: usize, burn_in: usize, seed: u64) -> HmrfSettings {
        HmrfSettings {
            mcmc: McmcSettings { iterations, burn_in, seed: RngSeed(seed), ..Default::default() },
            ..Default::default()
        }
    }

    fn synthetic(n: usize, beta: f64, seed: u64) -> (LatticeGeometry, LabelField, Observation) {
        let g = LatticeGeometry::new(n, n, Order::First).unwrap();
        let z = gibbs_sample(&PottsModel::new(g.clone(), 2, beta).unwrap(), 300, RngSeed(seed), None).unwrap();
        let truth = MixtureParams { mu: vec![0.3, 0.7], sigma2: vec![0.01, 0.01] };
        let y = Observation::simulate(&z, &truth, &mut RngSeed(seed + 1).rng()).unwrap();
        (g, z, y)
    }

    #[test]
    fn ordering_relabels_consistently() {
        let mut p = MixtureParams { mu: vec![0.8, 0.1, 0.5], sigma2: vec![1.0, 2.0, 3.0] };
        let perm = p.enforce_order();
        assert_eq!(p.mu, vec![0.1, 0.5, 0.8]);
        assert_eq!(p.sigma2, vec![2.0, 3.0, 1.0]);
        assert_eq!(perm, vec![2, 0, 1]);
    }

    #[test]
    fn recovers_means_and_keeps_order() {
        let (g, z, y) = synthetic(24, 0.5, 3);
        let chain = fit_hmrf(&y, &g, 2, &Backend::Rcoda(RcodaConfig::default()), &MixturePriors::default(), &short(600, 200, 4)).unwrap();
        assert!(chain.mu.iter().all(|m| m[0] < m[1]));
        let mu = chain.summary_mu(0.95).unwrap();
        assert!((mu[0].mean - 0.3).abs() < 0.02 && (mu[1].mean - 0.7).abs() < 0.02, "{mu:?}");
        let modal = chain.modal_labels().unwrap();
        let agree = modal.values().iter().zip(z.values()).filter(|(a, b)| a == b).count();
        assert!(agree as f64 > 0.95 * z.values().len() as f64);
        assert_eq!(chain.snapshots.len(), 200);
        assert!(chain.alpha.is_some());
        let mut buf = Vec::new();
        chain.write_trace(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 601);
    }

    #[test]
    fn deterministic_given_seed() {
        let (g, _, y) = synthetic(12, 0.4, 9);
        let s = short(120, 40, 1);
        let a = fit_hmrf(&y, &g, 2, &Backend::Pseudo, &MixturePriors::default(), &s).unwrap();
        let b = fit_hmrf(&y, &g, 2, &Backend::Pseudo, &MixturePriors::default(), &s).unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.mu, b.mu);
        assert!(a.alpha.is_none());
    }

    #[test]
    fn predictive_guards_and_degenerate_image() {
        let g = LatticeGeometry::new(10, 10, Order::First).unwrap();
        let y = Observation::new(10, 10, vec![0.5; 100]).unwrap();
        let mut s = short(700, 100, 2);
        s.fixed_beta = Some(0.0);
        let chain = fit_hmrf(&y, &g, 2, &Backend::Pseudo, &MixturePriors::default(), &s).unwrap();
        assert_eq!(chain.backend, "fixed");
        let cov = posterior_predictive_check(&y, &g, &chain, &PredictiveSettings::default()).unwrap();
        assert!(cov.coverage.iter().all(|&c| c > 0.99), "{cov:?}");
        let short_chain = fit_hmrf(&y, &g, 2, &Backend::Pseudo, &MixturePriors::default(), &{
            let mut s = short(300, 100, 2);
            s.fixed_beta = Some(0.0);
            s
        })
        .unwrap();
        assert!(matches!(
            posterior_predictive_check(&y, &g, &short_chain, &PredictiveSettings::default()),
            Err(Error::Insufficient(_))
        ));
    }

    #[test]
    fn tdi_range_is_checked() {
        use crate::likelihood::{build_tdi_table, TdiSettings};
        use std::sync::Arc;
        let (g, _, y) = synthetic(4, 0.3, 1);
        let table = build_tdi_table(&g, 2, &[0.0, 0.5, 0.9], &TdiSettings { sweeps: 50, burn_in: 10 }, RngSeed(1)).unwrap();
        let r = fit_hmrf(&y, &g, 2, &Backend::Tdi(Arc::new(table)), &MixturePriors::default(), &short(20, 5, 1));
        assert!(matches!(r, Err(Error::Range(_))));
    }
}
