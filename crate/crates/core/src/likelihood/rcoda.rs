use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{DecompositionPlan, LabelField, Order};
use crate::potts::{bond_count, log_constant_transfer};

use super::conditional::conditional_block_loglik;

/// How the terminal lattice of the recursion is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalMode {
    /// Exact Potts likelihood at the decayed interaction.
    #[default]
    Exact,
    /// Independent-field limit: `-n log q`.
    Independent,
}

impl std::str::FromStr for TerminalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(TerminalMode::Exact),
            "independent" => Ok(TerminalMode::Independent),
            other => invalid(format!("unknown terminal mode '{other}'")),
        }
    }
}

/// Treatment of the second coding class in second-order decompositions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SecondOrderVariant {
    /// Class 2 given the remainder only, as if independent of class 1.
    Marginal,
    /// Class 2 given classes 1, 3 and 4.
    Conditional,
}

/// Decomposition settings carried by the RCoDA backends.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RcodaConfig {
    /// Recursion depth; `None` picks the smallest depth with a <= 4x4 terminal.
    pub depth: Option<usize>,
    pub terminal: TerminalMode,
    /// Power of `alpha` applied on the terminal lattice; defaults to the depth.
    pub terminal_exponent: Option<u32>,
}

/// Full parameterization of an RCoDA likelihood evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub alpha: f64,
    pub depth: usize,
    pub q: usize,
    pub order: Order,
    #[serde(default)]
    pub terminal: TerminalMode,
    #[serde(default)]
    pub terminal_exponent: Option<u32>,
}

impl ModelParams {
    pub fn new(beta: f64, alpha: f64, depth: usize, q: usize, order: Order) -> Result<Self> {
        let p = ModelParams {
            beta,
            alpha,
            depth,
            q,
            order,
            terminal: TerminalMode::Exact,
            terminal_exponent: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return invalid(format!("beta must be finite and non-negative, got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return invalid(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.q < 2 {
            return invalid("q must be at least 2");
        }
        Ok(())
    }

    /// Interaction applied at level `t`.
    pub fn level_beta(&self, t: usize) -> f64 {
        self.alpha.powi(t as i32) * self.beta
    }

    pub fn terminal_beta(&self) -> f64 {
        let e = self.terminal_exponent.unwrap_or(self.depth as u32);
        self.alpha.powi(e as i32) * self.beta
    }
}

fn check(field: &LabelField, params: &ModelParams, plan: &DecompositionPlan) -> Result<()> {
    params.validate()?;
    field.check_geometry(plan.root())?;
    if field.q() != params.q {
        return Err(Error::Mismatch(format!(
            "field has q={} but parameters say q={}",
            field.q(),
            params.q
        )));
    }
    if plan.depth() != params.depth {
        return Err(Error::Mismatch(format!(
            "plan depth {} does not match parameter depth {}",
            plan.depth(),
            params.depth
        )));
    }
    if plan.order() != params.order {
        return Err(Error::Mismatch(format!(
            "plan is {} order but parameters are {} order",
            plan.order(),
            params.order
        )));
    }
    Ok(())
}

pub(crate) fn terminal_loglik(
    field: &LabelField,
    params: &ModelParams,
    plan: &DecompositionPlan,
) -> Result<f64> {
    let t = plan.depth();
    let (geometry, sub) = plan.extract(t, field)?;
    match params.terminal {
        TerminalMode::Independent => Ok(-(geometry.n_present() as f64) * (params.q as f64).ln()),
        TerminalMode::Exact => {
            let beta = params.terminal_beta();
            let u = bond_count(&geometry, &sub)? as f64;
            Ok(beta * u - log_constant_transfer(&geometry, params.q, beta)?)
        }
    }
}

/// First-order RCoDA log-likelihood: one conditional factor per level at
/// `alpha^t * beta`, closed by the terminal term.
pub fn rcoda_loglik_first(field: &LabelField, params: &ModelParams, plan: &DecompositionPlan) -> Result<f64> {
    if plan.order() != Order::First {
        return invalid("first-order RCoDA needs a first-order plan");
    }
    check(field, params, plan)?;
    let mut total = 0.0;
    for (t, level) in plan.levels().iter().enumerate() {
        let b = &level.conditioned;
        total += conditional_block_loglik(field, &b.sites, &b.neighbours, params.level_beta(t))?;
    }
    Ok(total + terminal_loglik(field, params, plan)?)
}

/// Second-order RCoDA: per level the first coding class given everything
/// else, the second class given either the remainder (`Marginal`) or
/// everything else (`Conditional`), then recursion on the remainder.
pub fn rcoda_loglik_second(
    field: &LabelField,
    params: &ModelParams,
    plan: &DecompositionPlan,
    variant: SecondOrderVariant,
) -> Result<f64> {
    if plan.order() != Order::Second {
        return invalid("second-order RCoDA variants need a second-order plan");
    }
    check(field, params, plan)?;
    let mut total = 0.0;
    for (t, level) in plan.levels().iter().enumerate() {
        let beta = params.level_beta(t);
        let b = &level.conditioned;
        total += conditional_block_loglik(field, &b.sites, &b.neighbours, beta)?;
        let cross = level
            .cross
            .as_ref()
            .ok_or_else(|| Error::Mismatch("second-order level without a second class".into()))?;
        let b2 = match variant {
            SecondOrderVariant::Marginal => &cross.marginal,
            SecondOrderVariant::Conditional => &cross.conditional,
        };
        total += conditional_block_loglik(field, &b2.sites, &b2.neighbours, beta)?;
    }
    Ok(total + terminal_loglik(field, params, plan)?)
}

/// Dispatch on the plan order; second order uses the conditional variant.
pub fn rcoda_loglik(field: &LabelField, params: &ModelParams, plan: &DecompositionPlan) -> Result<f64> {
    match plan.order() {
        Order::First => rcoda_loglik_first(field, params, plan),
        Order::Second => rcoda_loglik_second(field, params, plan, SecondOrderVariant::Conditional),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_plan, LatticeGeometry};
    use crate::potts::{exact_log_likelihood, PottsModel};
    use crate::seed::RngSeed;

    fn random_field(g: &LatticeGeometry, q: usize, seed: u64) -> LabelField {
        LabelField::random(g, q, &mut RngSeed(seed).rng()).unwrap()
    }

    #[test]
    fn zero_depth_equals_exact() {
        for order in [Order::First, Order::Second] {
            let g = LatticeGeometry::new(3, 4, order).unwrap();
            let plan = build_plan(&g, 0).unwrap();
            let f = random_field(&g, 3, 2);
            let p = ModelParams::new(0.45, 0.3, 0, 3, order).unwrap();
            let exact = exact_log_likelihood(&f, &PottsModel::new(g.clone(), 3, 0.45).unwrap()).unwrap();
            let v = match order {
                Order::First => rcoda_loglik_first(&f, &p, &plan).unwrap(),
                Order::Second => {
                    rcoda_loglik_second(&f, &p, &plan, SecondOrderVariant::Marginal).unwrap()
                }
            };
            assert!((v - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_beta_is_uniform_for_every_depth() {
        for order in [Order::First, Order::Second] {
            let g = LatticeGeometry::new(8, 8, order).unwrap();
            let f = random_field(&g, 2, 4);
            for depth in 0..=4 {
                let plan = build_plan(&g, depth).unwrap();
                for alpha in [0.0, 0.5, 1.0] {
                    let p = ModelParams::new(0.0, alpha, depth, 2, order).unwrap();
                    let v = rcoda_loglik(&f, &p, &plan).unwrap();
                    assert!((v + 64.0 * 2f64.ln()).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn independent_terminal() {
        let g = LatticeGeometry::new(8, 8, Order::First).unwrap();
        let plan = build_plan(&g, 2).unwrap();
        let f = random_field(&g, 2, 8);
        let mut p = ModelParams::new(0.5, 0.7, 2, 2, Order::First).unwrap();
        let levels: f64 = plan
            .levels()
            .iter()
            .enumerate()
            .map(|(t, l)| {
                conditional_block_loglik(&f, &l.conditioned.sites, &l.conditioned.neighbours, p.level_beta(t))
                    .unwrap()
            })
            .sum();
        let (tg, tf) = plan.extract(2, &f).unwrap();
        let terminal = exact_log_likelihood(&tf, &PottsModel::new(tg.clone(), 2, 0.5 * 0.49).unwrap()).unwrap();
        assert!((rcoda_loglik_first(&f, &p, &plan).unwrap() - (levels + terminal)).abs() < 1e-10);
        p.terminal = TerminalMode::Independent;
        let indep = levels - tg.n_present() as f64 * 2f64.ln();
        assert!((rcoda_loglik_first(&f, &p, &plan).unwrap() - indep).abs() < 1e-10);
    }

    #[test]
    fn terminal_exponent_override() {
        let g = LatticeGeometry::new(8, 8, Order::First).unwrap();
        let plan = build_plan(&g, 2).unwrap();
        let f = random_field(&g, 2, 1);
        let mut p = ModelParams::new(0.6, 0.5, 2, 2, Order::First).unwrap();
        assert!((p.terminal_beta() - 0.15).abs() < 1e-15);
        p.terminal_exponent = Some(1);
        assert!((p.terminal_beta() - 0.3).abs() < 1e-15);
        assert!(rcoda_loglik_first(&f, &p, &plan).is_ok());
    }

    #[test]
    fn mismatches_are_errors() {
        let g = LatticeGeometry::new(6, 6, Order::Second).unwrap();
        let plan = build_plan(&g, 1).unwrap();
        let f = random_field(&g, 2, 1);
        let p = ModelParams::new(0.3, 0.5, 1, 2, Order::Second).unwrap();
        assert!(rcoda_loglik_first(&f, &p, &plan).is_err());
        let wrong_depth = ModelParams { depth: 2, ..p };
        assert!(rcoda_loglik_second(&f, &wrong_depth, &plan, SecondOrderVariant::Conditional).is_err());
        assert!(ModelParams::new(0.3, 1.5, 1, 2, Order::Second).is_err());
        assert!(ModelParams::new(-0.1, 0.5, 1, 2, Order::Second).is_err());
    }

    #[test]
    fn second_order_variants_differ_only_in_class_two() {
        let g = LatticeGeometry::new(8, 8, Order::Second).unwrap();
        let plan = build_plan(&g, 3).unwrap();
        let f = random_field(&g, 3, 12);
        let p = ModelParams::new(0.35, 0.6, 3, 3, Order::Second).unwrap();
        let m = rcoda_loglik_second(&f, &p, &plan, SecondOrderVariant::Marginal).unwrap();
        let c = rcoda_loglik_second(&f, &p, &plan, SecondOrderVariant::Conditional).unwrap();
        let mut diff = 0.0;
        for (t, level) in plan.levels().iter().enumerate() {
            let cross = level.cross.as_ref().unwrap();
            let b = p.level_beta(t);
            diff += conditional_block_loglik(&f, &cross.marginal.sites, &cross.marginal.neighbours, b).unwrap()
                - conditional_block_loglik(&f, &cross.conditional.sites, &cross.conditional.neighbours, b)
                    .unwrap();
        }
        assert!((m - c - diff).abs() < 1e-10);
    }
}
