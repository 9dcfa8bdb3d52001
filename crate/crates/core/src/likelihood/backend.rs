use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::lattice::{build_plan, default_depth, DecompositionPlan, LabelField, LatticeGeometry, Order};
use crate::potts::{bond_count, exact_log_constant, log_constant_transfer, PottsModel};

use super::conditional::ProfileSum;
use super::rcoda::{RcodaConfig, TerminalMode};
use super::tdi::TdiTable;

/// Choice of likelihood for the interaction strength.
#[derive(Clone, Debug)]
pub enum Backend {
    /// Exact Potts likelihood (small lattices only).
    Exact,
    /// Pseudo-likelihood.
    Pseudo,
    /// First-order recursive decomposition.
    Rcoda(RcodaConfig),
    /// Second-order decomposition, second class treated marginally.
    RcodaM(RcodaConfig),
    /// Second-order decomposition, second class conditioned on the first.
    RcodaC(RcodaConfig),
    /// Thermodynamic integration against a precomputed table.
    Tdi(Arc<TdiTable>),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Pseudo => "pl",
            Backend::Rcoda(_) => "rcoda",
            Backend::RcodaM(_) => "rcoda-m",
            Backend::RcodaC(_) => "rcoda-c",
            Backend::Tdi(_) => "tdi",
        }
    }

    /// Parse a backend name; `tdi` needs its table supplied separately.
    pub fn from_name(name: &str, rcoda: RcodaConfig, table: Option<Arc<TdiTable>>) -> Result<Self> {
        Ok(match name {
            "exact" => Backend::Exact,
            "pl" | "pseudo" => Backend::Pseudo,
            "rcoda" => Backend::Rcoda(rcoda),
            "rcoda-m" => Backend::RcodaM(rcoda),
            "rcoda-c" => Backend::RcodaC(rcoda),
            "tdi" => Backend::Tdi(table.ok_or_else(|| {
                Error::InvalidArgument("the tdi backend requires an integration table".into())
            })?),
            other => return invalid(format!("unknown likelihood backend '{other}'")),
        })
    }

    pub fn uses_alpha(&self) -> bool {
        matches!(self, Backend::Rcoda(_) | Backend::RcodaM(_) | Backend::RcodaC(_))
    }

    pub fn check_compatible(&self, geometry: &LatticeGeometry, q: usize) -> Result<()> {
        match (self, geometry.order()) {
            (Backend::Rcoda(_), Order::Second) => {
                invalid("rcoda is the first-order decomposition; use rcoda-m or rcoda-c for second order")
            }
            (Backend::RcodaM(_) | Backend::RcodaC(_), Order::First) => {
                invalid("rcoda-m and rcoda-c need a second-order lattice; use rcoda for first order")
            }
            (Backend::Exact, _) => {
                exact_log_constant(&PottsModel::new(geometry.clone(), q, 0.0)?).map(|_| ())
            }
            (Backend::Tdi(table), _) => table.check_compatible(geometry, q),
            _ => Ok(()),
        }
    }

    /// Compile the backend against an observed field.
    pub fn prepare(&self, geometry: &LatticeGeometry, field: &LabelField) -> Result<PreparedLikelihood> {
        self.bind(geometry, field.q())?.prepare(field)
    }

    /// Check compatibility and do the field-independent work (decomposition
    /// plan, capacity probes) once for a geometry.
    pub fn bind(&self, geometry: &LatticeGeometry, q: usize) -> Result<BoundBackend> {
        self.check_compatible(geometry, q)?;
        let plan = match self {
            Backend::Rcoda(cfg) | Backend::RcodaM(cfg) | Backend::RcodaC(cfg) => {
                let depth = cfg.depth.unwrap_or_else(|| default_depth(geometry));
                let plan = build_plan(geometry, depth)?;
                if cfg.terminal == TerminalMode::Exact {
                    // Probe capacity once so evaluation cannot fail later.
                    log_constant_transfer(&plan.terminal().geometry, q, 0.0)?;
                }
                Some(plan)
            }
            _ => None,
        };
        Ok(BoundBackend {
            backend: self.clone(),
            geometry: geometry.clone(),
            q,
            plan,
        })
    }
}

/// A backend fixed to one geometry and number of states.
#[derive(Clone, Debug)]
pub struct BoundBackend {
    backend: Backend,
    geometry: LatticeGeometry,
    q: usize,
    plan: Option<DecompositionPlan>,
}

impl BoundBackend {
    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn prepare(&self, field: &LabelField) -> Result<PreparedLikelihood> {
        let geometry = &self.geometry;
        field.check_geometry(geometry)?;
        let q = field.q();
        if q != self.q {
            return Err(Error::Mismatch(format!("field has q={q}, backend bound for q={}", self.q)));
        }
        let kind = match &self.backend {
            Backend::Exact => Prepared::Exact {
                geometry: geometry.clone(),
                bonds: bond_count(geometry, field)? as f64,
            },
            Backend::Pseudo => Prepared::Pseudo(ProfileSum::from_lattice(field, geometry)?),
            Backend::Rcoda(cfg) | Backend::RcodaM(cfg) | Backend::RcodaC(cfg) => {
                let plan = self.plan.as_ref().expect("decomposition backends carry a plan");
                let depth = plan.depth();
                let marginal = matches!(self.backend, Backend::RcodaM(_));
                let levels = plan
                    .levels()
                    .iter()
                    .map(|l| {
                        let first = ProfileSum::from_block(field, &l.conditioned.sites, &l.conditioned.neighbours)?;
                        let second = match &l.cross {
                            None => None,
                            Some(c) => {
                                let b = if marginal { &c.marginal } else { &c.conditional };
                                Some(ProfileSum::from_block(field, &b.sites, &b.neighbours)?)
                            }
                        };
                        Ok((first, second))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (tg, tf) = plan.extract(depth, field)?;
                let terminal = match cfg.terminal {
                    TerminalMode::Exact => PreparedTerminal::Exact {
                        bonds: bond_count(&tg, &tf)? as f64,
                        geometry: tg,
                    },
                    TerminalMode::Independent => PreparedTerminal::Independent {
                        n: tg.n_present(),
                    },
                };
                Prepared::Rcoda {
                    levels,
                    terminal,
                    exponent: cfg.terminal_exponent.unwrap_or(depth as u32),
                }
            }
            Backend::Tdi(table) => Prepared::Tdi {
                bonds: bond_count(geometry, field)? as f64,
                table: Arc::clone(table),
            },
        };
        Ok(PreparedLikelihood {
            kind,
            q,
            n_sites: geometry.n_present(),
        })
    }
}

#[derive(Clone, Debug)]
enum PreparedTerminal {
    Exact { geometry: LatticeGeometry, bonds: f64 },
    Independent { n: usize },
}

#[derive(Clone, Debug)]
enum Prepared {
    Exact {
        geometry: LatticeGeometry,
        bonds: f64,
    },
    Pseudo(ProfileSum),
    Rcoda {
        levels: Vec<(ProfileSum, Option<ProfileSum>)>,
        terminal: PreparedTerminal,
        exponent: u32,
    },
    Tdi {
        bonds: f64,
        table: Arc<TdiTable>,
    },
}

/// A backend bound to one observed field, ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct PreparedLikelihood {
    kind: Prepared,
    q: usize,
    n_sites: usize,
}

impl PreparedLikelihood {
    pub fn uses_alpha(&self) -> bool {
        matches!(self.kind, Prepared::Rcoda { .. })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Interaction range over which evaluation is defined, if restricted.
    pub fn beta_range(&self) -> Option<(f64, f64)> {
        match &self.kind {
            Prepared::Tdi { table, .. } => Some(table.beta_range()),
            _ => None,
        }
    }

    /// Log-likelihood at `(beta, alpha)`; `alpha` is ignored by backends
    /// without a decay parameter.
    pub fn log_lik(&self, beta: f64, alpha: f64) -> Result<f64> {
        let q = self.q;
        match &self.kind {
            Prepared::Exact { geometry, bonds } => {
                Ok(beta * bonds - log_constant_transfer(geometry, q, beta).or_else(|_| {
                    exact_log_constant(&PottsModel::new(geometry.clone(), q, beta)?)
                })?)
            }
            Prepared::Pseudo(p) => Ok(p.loglik(beta)),
            Prepared::Rcoda {
                levels,
                terminal,
                exponent,
            } => {
                let mut total = 0.0;
                let mut b = beta;
                for (first, second) in levels {
                    total += first.loglik(b);
                    if let Some(s) = second {
                        total += s.loglik(b);
                    }
                    b *= alpha;
                }
                let tb = alpha.powi(*exponent as i32) * beta;
                total += match terminal {
                    PreparedTerminal::Independent { n } => -(*n as f64) * (q as f64).ln(),
                    PreparedTerminal::Exact { geometry, bonds } => {
                        tb * bonds - log_constant_transfer(geometry, q, tb)?
                    }
                };
                Ok(total)
            }
            Prepared::Tdi { bonds, table } => Ok(beta * bonds - table.interpolate(beta)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_plan;
    use crate::likelihood::rcoda::{rcoda_loglik_first, rcoda_loglik_second, ModelParams, SecondOrderVariant};
    use crate::likelihood::{pseudo_loglik, tdi_loglik};
    use crate::potts::exact_log_likelihood;
    use crate::seed::RngSeed;

    fn field(g: &LatticeGeometry, q: usize, seed: u64) -> LabelField {
        crate::potts::gibbs_sample(&PottsModel::new(g.clone(), q, 0.4).unwrap(), 3, RngSeed(seed), None).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn prepared_rcoda_matches_direct() {
        for (order, q) in [(Order::First, 2), (Order::First, 3), (Order::Second, 2), (Order::Second, 3)] {
            let g = LatticeGeometry::new(17, 13, order).unwrap();
            let f = field(&g, q, 5);
            let depth = default_depth(&g);
            let plan = build_plan(&g, depth).unwrap();
            let cfg = RcodaConfig::default();
            let backends = match order {
                Order::First => vec![Backend::Rcoda(cfg)],
                Order::Second => vec![Backend::RcodaM(cfg), Backend::RcodaC(cfg)],
            };
            for backend in backends {
                let prepared = backend.prepare(&g, &f).unwrap();
                for (beta, alpha) in [(0.0, 0.3), (0.4, 0.8), (0.9, 1.0), (0.7, 0.0)] {
                    let p = ModelParams::new(beta, alpha, depth, q, order).unwrap();
                    let direct = match &backend {
                        Backend::Rcoda(_) => rcoda_loglik_first(&f, &p, &plan).unwrap(),
                        Backend::RcodaM(_) => {
                            rcoda_loglik_second(&f, &p, &plan, SecondOrderVariant::Marginal).unwrap()
                        }
                        _ => rcoda_loglik_second(&f, &p, &plan, SecondOrderVariant::Conditional).unwrap(),
                    };
                    let fast = prepared.log_lik(beta, alpha).unwrap();
                    assert!(close(fast, direct), "{} {fast} vs {direct}", backend.name());
                }
            }
        }
    }

    #[test]
    fn prepared_exact_and_pseudo_match_direct() {
        let g = LatticeGeometry::new(3, 4, Order::Second).unwrap();
        let f = field(&g, 3, 2);
        let exact = Backend::Exact.prepare(&g, &f).unwrap();
        let pl = Backend::Pseudo.prepare(&g, &f).unwrap();
        for beta in [0.0, 0.35, 1.2] {
            let m = PottsModel::new(g.clone(), 3, beta).unwrap();
            assert!(close(exact.log_lik(beta, 0.0).unwrap(), exact_log_likelihood(&f, &m).unwrap()));
            assert!(close(pl.log_lik(beta, 0.0).unwrap(), pseudo_loglik(&f, 3, beta, &g).unwrap()));
        }
    }

    #[test]
    fn prepared_tdi_matches_direct() {
        let g = LatticeGeometry::new(4, 4, Order::First).unwrap();
        let table = crate::likelihood::build_tdi_table(
            &g,
            2,
            &[0.0, 0.2, 0.4],
            &crate::likelihood::TdiSettings { sweeps: 100, burn_in: 10 },
            RngSeed(1),
        )
        .unwrap();
        let f = field(&g, 2, 3);
        let b = Backend::Tdi(Arc::new(table.clone()));
        let p = b.prepare(&g, &f).unwrap();
        assert_eq!(p.beta_range(), Some((0.0, 0.4)));
        assert!(close(p.log_lik(0.3, 0.5).unwrap(), tdi_loglik(&f, 2, 0.3, &table).unwrap()));
        assert!(p.log_lik(0.5, 0.5).is_err());
        let other = LatticeGeometry::new(5, 4, Order::First).unwrap();
        assert!(b.prepare(&other, &field(&other, 2, 1)).is_err());
    }

    #[test]
    fn compatibility_guards() {
        let g1 = LatticeGeometry::new(20, 20, Order::First).unwrap();
        let f1 = field(&g1, 2, 1);
        assert!(matches!(Backend::Exact.prepare(&g1, &f1), Err(Error::Capacity(_))));
        assert!(Backend::RcodaC(RcodaConfig::default()).prepare(&g1, &f1).is_err());
        let g2 = LatticeGeometry::new(8, 8, Order::Second).unwrap();
        assert!(Backend::Rcoda(RcodaConfig::default()).prepare(&g2, &field(&g2, 2, 1)).is_err());
        assert!(Backend::from_name("tdi", RcodaConfig::default(), None).is_err());
        assert!(Backend::from_name("nope", RcodaConfig::default(), None).is_err());
    }
}
