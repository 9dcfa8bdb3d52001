//! Random-walk Metropolis samplers for the interaction strength (and decay)
//! and maximum pseudo-likelihood estimation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{LabelField, LatticeGeometry};
use crate::likelihood::{Backend, PreparedLikelihood, ProfileSum};
use crate::seed::{Rng as SeedRng, RngSeed};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    pub lo: f64,
    pub hi: f64,
}

impl Uniform {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return invalid(format!("uniform prior needs lo < hi, got [{lo}, {hi}]"));
        }
        Ok(Uniform { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Fold `x` back into the interval by repeated reflection at the ends.
    pub fn reflect(&self, x: f64) -> f64 {
        let w = self.width();
        let mut y = (x - self.lo).rem_euclid(2.0 * w);
        if y > w {
            y = 2.0 * w - y;
        }
        self.lo + y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub beta: Uniform,
    /// Prior on the decay coefficient; only read by backends that use one.
    pub alpha: Option<Uniform>,
}

impl Prior {
    /// `beta ~ U(0, 0.9)`, `alpha ~ U(0, 1)`.
    pub fn simulation() -> Self {
        Prior {
            beta: Uniform { lo: 0.0, hi: 0.9 },
            alpha: Some(Uniform { lo: 0.0, hi: 1.0 }),
        }
    }

    /// `beta ~ U(0, 4)`, `alpha ~ U(0, 1)`.
    pub fn hmrf() -> Self {
        Prior {
            beta: Uniform { lo: 0.0, hi: 4.0 },
            alpha: Some(Uniform { lo: 0.0, hi: 1.0 }),
        }
    }

    pub fn alpha_or_default(&self) -> Uniform {
        self.alpha.unwrap_or(Uniform { lo: 0.0, hi: 1.0 })
    }
}

impl Default for Prior {
    fn default() -> Self {
        Prior::simulation()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_sd_beta: f64,
    pub proposal_sd_alpha: f64,
    pub seed: RngSeed,
    /// Robbins-Monro scaling of the proposal sds during burn-in.
    pub adapt: bool,
    pub target_acceptance: f64,
    pub initial_beta: Option<f64>,
    pub initial_alpha: Option<f64>,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            iterations: 6000,
            burn_in: 2000,
            proposal_sd_beta: 0.05,
            proposal_sd_alpha: 0.1,
            seed: RngSeed(0),
            adapt: true,
            target_acceptance: 0.35,
            initial_beta: None,
            initial_alpha: None,
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return invalid(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if !(self.proposal_sd_beta > 0.0 && self.proposal_sd_alpha > 0.0) {
            return invalid("proposal standard deviations must be positive");
        }
        if !(0.0 < self.target_acceptance && self.target_acceptance < 1.0) {
            return invalid("target acceptance must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Gaussian random-walk proposal reflected into a bounded support, with
/// optional Robbins-Monro adaptation of its scale.
#[derive(Clone, Debug)]
pub struct RandomWalk {
    pub sd: f64,
    pub support: Uniform,
}

impl RandomWalk {
    pub fn propose<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let step: f64 = StandardNormal.sample(rng);
        self.support.reflect(x + self.sd * step)
    }

    pub fn adapt(&mut self, accepted: bool, step: usize, target: f64) {
        let gain = (step as f64 + 1.0).powf(-0.6);
        let signal = if accepted { 1.0 } else { 0.0 } - target;
        self.sd = (self.sd.ln() + gain * signal)
            .exp()
            .clamp(1e-5, self.support.width());
    }
}

/// Metropolis accept/reject on a log ratio.
pub(crate) fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n: usize,
}

impl Summary {
    pub fn covers(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Mean, sd and equal-tailed empirical credible interval.
pub fn summarize(draws: &[f64], level: f64) -> Result<Summary> {
    if draws.is_empty() {
        return Err(Error::Insufficient("no retained draws to summarize".into()));
    }
    if !(level > 0.0 && level <= 1.0) {
        return invalid(format!("credible level must lie in (0, 1], got {level}"));
    }
    let sorted = stats::sorted(draws);
    let tail = 0.5 * (1.0 - level);
    Ok(Summary {
        mean: stats::mean(draws),
        sd: stats::sd(draws),
        lower: stats::quantile_sorted(&sorted, tail),
        upper: stats::quantile_sorted(&sorted, 1.0 - tail),
        level,
        n: draws.len(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainResult {
    pub backend: String,
    pub prior: Prior,
    pub settings: McmcSettings,
    /// Full traces, burn-in included.
    pub beta: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub loglik: Vec<f64>,
    pub accepted_beta: Vec<bool>,
    pub accepted_alpha: Option<Vec<bool>>,
    pub final_sd_beta: f64,
    pub final_sd_alpha: Option<f64>,
}

fn rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|&&a| a).count() as f64 / flags.len() as f64
}

impl ChainResult {
    pub fn burn_in(&self) -> usize {
        self.settings.burn_in
    }

    pub fn retained_beta(&self) -> &[f64] {
        &self.beta[self.burn_in()..]
    }

    pub fn retained_alpha(&self) -> Option<&[f64]> {
        self.alpha.as_deref().map(|a| &a[self.burn_in()..])
    }

    /// Post-burn-in acceptance rate of the beta block.
    pub fn acceptance_beta(&self) -> f64 {
        rate(&self.accepted_beta[self.burn_in()..])
    }

    pub fn acceptance_alpha(&self) -> Option<f64> {
        self.accepted_alpha.as_deref().map(|a| rate(&a[self.burn_in()..]))
    }

    /// Summary of beta; a level of 1 reports the whole prior support.
    pub fn summary_beta(&self, level: f64) -> Result<Summary> {
        let mut s = summarize(self.retained_beta(), level)?;
        if level >= 1.0 {
            s.lower = self.prior.beta.lo;
            s.upper = self.prior.beta.hi;
        }
        Ok(s)
    }

    pub fn summary_alpha(&self, level: f64) -> Result<Option<Summary>> {
        self.retained_alpha().map(|a| summarize(a, level)).transpose()
    }

    /// CSV trace: iteration, beta, alpha, loglik, accepted_beta, accepted_alpha.
    pub fn write_trace<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "beta", "alpha", "loglik", "accepted_beta", "accepted_alpha"])?;
        for i in 0..self.beta.len() {
            let alpha = self.alpha.as_ref().map_or(String::new(), |a| a[i].to_string());
            let acc_a = self
                .accepted_alpha
                .as_ref()
                .map_or(String::new(), |a| (a[i] as u8).to_string());
            w.write_record([
                i.to_string(),
                self.beta[i].to_string(),
                alpha,
                self.loglik[i].to_string(),
                (self.accepted_beta[i] as u8).to_string(),
                acc_a,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample the posterior of beta (and alpha for decomposition backends) given
/// an observed field.
pub fn sample_posterior(
    field: &LabelField,
    geometry: &LatticeGeometry,
    backend: &Backend,
    prior: &Prior,
    settings: &McmcSettings,
) -> Result<ChainResult> {
    let prepared = backend.prepare(geometry, field)?;
    sample_prepared(&prepared, backend.name(), prior, settings)
}

pub fn sample_prepared(
    likelihood: &PreparedLikelihood,
    backend_name: &str,
    prior: &Prior,
    settings: &McmcSettings,
) -> Result<ChainResult> {
    settings.validate()?;
    if let Some((lo, hi)) = likelihood.beta_range() {
        if prior.beta.lo < lo || prior.beta.hi > hi {
            return Err(Error::Range(format!(
                "prior support [{}, {}] exceeds the integration table range [{lo}, {hi}]",
                prior.beta.lo, prior.beta.hi
            )));
        }
    }
    let mut rng: SeedRng = settings.seed.rng();
    let uses_alpha = likelihood.uses_alpha();
    let mut beta_walk = RandomWalk {
        sd: settings.proposal_sd_beta,
        support: prior.beta,
    };
    let mut alpha_walk = RandomWalk {
        sd: settings.proposal_sd_alpha,
        support: prior.alpha_or_default(),
    };
    let mut beta = settings
        .initial_beta
        .unwrap_or_else(|| (prior.beta.lo + 0.3).min(0.5 * (prior.beta.lo + prior.beta.hi)));
    let mut alpha = settings
        .initial_alpha
        .unwrap_or(0.5 * (alpha_walk.support.lo + alpha_walk.support.hi));
    if !prior.beta.contains(beta) || (uses_alpha && !alpha_walk.support.contains(alpha)) {
        return invalid("initial values lie outside the prior support");
    }
    let mut ll = likelihood.log_lik(beta, alpha)?;

    let n = settings.iterations;
    let mut result = ChainResult {
        backend: backend_name.to_string(),
        prior: *prior,
        settings: *settings,
        beta: Vec::with_capacity(n),
        alpha: uses_alpha.then(|| Vec::with_capacity(n)),
        loglik: Vec::with_capacity(n),
        accepted_beta: Vec::with_capacity(n),
        accepted_alpha: uses_alpha.then(|| Vec::with_capacity(n)),
        final_sd_beta: 0.0,
        final_sd_alpha: None,
    };
    for it in 0..n {
        let proposal = beta_walk.propose(beta, &mut rng);
        let ll_new = likelihood.log_lik(proposal, alpha)?;
        let acc_b = accept(ll_new - ll, &mut rng);
        if acc_b {
            beta = proposal;
            ll = ll_new;
        }
        let mut acc_a = false;
        if uses_alpha {
            let proposal = alpha_walk.propose(alpha, &mut rng);
            let ll_new = likelihood.log_lik(beta, proposal)?;
            acc_a = accept(ll_new - ll, &mut rng);
            if acc_a {
                alpha = proposal;
                ll = ll_new;
            }
        }
        if settings.adapt && it < settings.burn_in {
            beta_walk.adapt(acc_b, it, settings.target_acceptance);
            if uses_alpha {
                alpha_walk.adapt(acc_a, it, settings.target_acceptance);
            }
        }
        result.beta.push(beta);
        result.loglik.push(ll);
        result.accepted_beta.push(acc_b);
        if let (Some(a), Some(f)) = (result.alpha.as_mut(), result.accepted_alpha.as_mut()) {
            a.push(alpha);
            f.push(acc_a);
        }
    }
    result.final_sd_beta = beta_walk.sd;
    result.final_sd_alpha = uses_alpha.then_some(alpha_walk.sd);
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mple {
    pub estimate: f64,
    pub loglik: f64,
    /// The maximizer sits on an end of the search interval.
    pub at_boundary: bool,
}

/// Maximum pseudo-likelihood estimate by golden-section search.
pub fn mple_beta(field: &LabelField, geometry: &LatticeGeometry, q: usize, interval: (f64, f64)) -> Result<Mple> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
        return invalid(format!("search interval [{lo}, {hi}] must be finite, non-negative and non-empty"));
    }
    if field.q() != q {
        return Err(Error::Mismatch(format!("field has q={} but q={q} requested", field.q())));
    }
    let pl = ProfileSum::from_lattice(field, geometry)?;
    let f = |b: f64| pl.loglik(b);
    let tol = 1e-6;
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let mut estimate = 0.5 * (a + b);
    // Pick an endpoint outright when it beats the interior optimum.
    for end in [lo, hi] {
        if f(end) > f(estimate) {
            estimate = end;
        }
    }
    let edge = 1e-4 * (hi - lo).max(1.0);
    Ok(Mple {
        estimate,
        loglik: f(estimate),
        at_boundary: estimate - lo < edge || hi - estimate < edge,
    })
}
