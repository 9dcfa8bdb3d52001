//! Potts model primitives: the bond statistic, single-site Gibbs sampling,
//! and exact normalizing constants for small lattices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{LabelField, LatticeGeometry};
use crate::seed::RngSeed;
use crate::stats;

/// Generation protocol default: sweeps before the final iterate is taken.
pub const DEFAULT_GENERATION_SWEEPS: usize = 5000;

/// Enumeration is only attempted up to this many sites...
pub const ENUMERATION_MAX_SITES: usize = 20;
/// ...and this many configurations.
pub const ENUMERATION_MAX_STATES: u64 = 1 << 26;
/// Transfer recursion limit on the shorter lattice side.
pub const TRANSFER_MAX_WIDTH: usize = 12;
/// Transfer recursion limit on the number of window states.
pub const TRANSFER_MAX_STATES: u64 = 1 << 24;

#[derive(Clone, Debug)]
pub struct PottsModel {
    pub geometry: LatticeGeometry,
    pub q: usize,
    pub beta: f64,
}

impl PottsModel {
    pub fn new(geometry: LatticeGeometry, q: usize, beta: f64) -> Result<Self> {
        if !(2..=255).contains(&q) {
            return invalid(format!("number of states must be in 2..=255, got {q}"));
        }
        if !beta.is_finite() || beta < 0.0 {
            return invalid(format!("interaction strength must be finite and non-negative, got {beta}"));
        }
        Ok(PottsModel { geometry, q, beta })
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.geometry.clone(), self.q, beta)
    }
}

/// Number of unordered neighbour pairs in the same state.
pub fn bond_count(geometry: &LatticeGeometry, field: &LabelField) -> Result<usize> {
    field.check_geometry(geometry)?;
    let z = field.values();
    Ok(geometry.edges().filter(|&(i, j)| z[i] == z[j]).count())
}

/// `exp(beta * k)` for every possible neighbour count `k`.
pub(crate) fn bond_weights(beta: f64, max_neighbours: usize) -> Vec<f64> {
    (0..=max_neighbours).map(|k| (beta * k as f64).exp()).collect()
}

/// One raster-scan sweep of single-site Gibbs updates. Returns the change in
/// the bond count.
pub(crate) fn gibbs_sweep<R: Rng + ?Sized>(
    geometry: &LatticeGeometry,
    z: &mut [u8],
    q: usize,
    weights: &[f64],
    counts: &mut Vec<u32>,
    probs: &mut Vec<f64>,
    rng: &mut R,
) -> i64 {
    if q == 2 {
        return gibbs_sweep_binary(geometry, z, weights, rng);
    }
    counts.resize(q, 0);
    probs.resize(q, 0.0);
    let mut delta = 0i64;
    for i in 0..z.len() {
        if !geometry.is_present(i) {
            continue;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for &j in geometry.neighbours(i) {
            counts[z[j as usize] as usize] += 1;
        }
        let mut total = 0.0;
        for (p, &c) in probs.iter_mut().zip(counts.iter()) {
            *p = weights[c as usize];
            total += *p;
        }
        if cfg!(debug_assertions) && i == 0 {
            let s: f64 = probs.iter().map(|p| p / total).sum();
            debug_assert!((s - 1.0).abs() < 1e-12, "full conditional sums to {s}");
        }
        let mut u = rng.random::<f64>() * total;
        let mut new = q - 1;
        for (c, &p) in probs.iter().enumerate() {
            if u < p {
                new = c;
                break;
            }
            u -= p;
        }
        let old = z[i] as usize;
        if new != old {
            delta += counts[new] as i64 - counts[old] as i64;
            z[i] = new as u8;
        }
    }
    delta
}

/// Two-state sweep with the conditional probabilities tabulated by
/// (degree, neighbours in state 1).
fn gibbs_sweep_binary<R: Rng + ?Sized>(geometry: &LatticeGeometry, z: &mut [u8], weights: &[f64], rng: &mut R) -> i64 {
    let max = weights.len();
    let mut p_zero = vec![0.0; max * max];
    for deg in 0..max {
        for ones in 0..=deg {
            let (w0, w1) = (weights[deg - ones], weights[ones]);
            p_zero[deg * max + ones] = w0 / (w0 + w1);
        }
    }
    debug_assert!(p_zero.iter().all(|p| (0.0..=1.0).contains(p)));
    let mut delta = 0i64;
    for i in 0..z.len() {
        if !geometry.is_present(i) {
            continue;
        }
        let nb = geometry.neighbours(i);
        let ones: usize = nb.iter().map(|&j| z[j as usize] as usize).sum();
        let new = u8::from(rng.random::<f64>() >= p_zero[nb.len() * max + ones]);
        if new != z[i] {
            let zeros = (nb.len() - ones) as i64;
            delta += if new == 1 { ones as i64 - zeros } else { zeros - ones as i64 };
            z[i] = new;
        }
    }
    delta
}

/// Run `sweeps` raster-scan Gibbs sweeps and return the final field. Starts
/// from `initial` when given, otherwise from an iid uniform field.
pub fn gibbs_sample(
    model: &PottsModel,
    sweeps: usize,
    seed: RngSeed,
    initial: Option<&LabelField>,
) -> Result<LabelField> {
    if sweeps == 0 {
        return invalid("at least one sweep is required");
    }
    let mut rng = seed.rng();
    let g = &model.geometry;
    let mut field = match initial {
        Some(f) => {
            f.check_geometry(g)?;
            if f.q() != model.q {
                return Err(Error::Mismatch(format!(
                    "initial field has q={} but model has q={}",
                    f.q(),
                    model.q
                )));
            }
            f.clone()
        }
        None => LabelField::random(g, model.q, &mut rng)?,
    };
    let weights = bond_weights(model.beta, g.order().max_neighbours());
    let (mut counts, mut probs) = (Vec::new(), Vec::new());
    for _ in 0..sweeps {
        gibbs_sweep(g, field.values_mut(), model.q, &weights, &mut counts, &mut probs, &mut rng);
    }
    Ok(field)
}

fn present_list(geometry: &LatticeGeometry) -> Vec<usize> {
    geometry.present_sites().collect()
}

/// Number of configurations at each bond count, by exhaustive enumeration.
pub fn bond_histogram(geometry: &LatticeGeometry, q: usize) -> Result<Vec<u64>> {
    let sites = present_list(geometry);
    let n = sites.len();
    let states = (q as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if n > ENUMERATION_MAX_SITES || states > ENUMERATION_MAX_STATES {
        return Err(Error::Capacity(format!(
            "enumeration needs at most {ENUMERATION_MAX_SITES} sites and {ENUMERATION_MAX_STATES} configurations; got {n} sites, q={q}"
        )));
    }
    let edges: Vec<(usize, usize)> = geometry.edges().collect();
    let mut z = vec![0u8; geometry.len()];
    let mut hist = vec![0u64; edges.len() + 1];
    for _ in 0..states {
        let u = edges.iter().filter(|&&(i, j)| z[i] == z[j]).count();
        hist[u] += 1;
        for &s in &sites {
            z[s] += 1;
            if (z[s] as usize) < q {
                break;
            }
            z[s] = 0;
        }
    }
    Ok(hist)
}

pub fn log_constant_enumeration(geometry: &LatticeGeometry, q: usize, beta: f64) -> Result<f64> {
    let hist = bond_histogram(geometry, q)?;
    Ok(stats::log_sum_exp(
        hist.iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(u, &c)| beta * u as f64 + (c as f64).ln()),
    ))
}

/// Log normalizing constant by a site-by-site transfer recursion.
///
/// Sites are added in raster order along the shorter side; the state is the
/// configuration of the last `width + 1` sites, which covers every backward
/// neighbour under either stencil. Weights are renormalized after each site
/// and the scale is accumulated in log space.
pub fn log_constant_transfer(geometry: &LatticeGeometry, q: usize, beta: f64) -> Result<f64> {
    let transpose = geometry.cols() > geometry.rows();
    let (height, width) = if transpose {
        (geometry.cols(), geometry.rows())
    } else {
        (geometry.rows(), geometry.cols())
    };
    let window = width + 1;
    let size = (q as u64).checked_pow(window as u32).unwrap_or(u64::MAX);
    if width > TRANSFER_MAX_WIDTH || size > TRANSFER_MAX_STATES {
        return Err(Error::Capacity(format!(
            "transfer recursion needs the shorter side <= {TRANSFER_MAX_WIDTH} and q^(side+1) <= {TRANSFER_MAX_STATES}; got side {width}, q={q}"
        )));
    }
    let size = size as usize;
    let second = geometry.order() == crate::lattice::Order::Second;
    let original = |r: usize, c: usize| {
        if transpose {
            c * geometry.cols() + r
        } else {
            r * geometry.cols() + c
        }
    };
    let pow: Vec<usize> = (0..window).map(|k| q.pow(k as u32)).collect();
    let weights = bond_weights(beta, 4);

    let mut cur = vec![0.0f64; size];
    let mut next = vec![0.0f64; size];
    cur[0] = 1.0;
    let mut log_scale = 0.0;
    let mut back: Vec<usize> = Vec::with_capacity(4);
    for r in 0..height {
        for c in 0..width {
            // Window digit d-1 holds the site d steps back in raster order.
            back.clear();
            let mut push = |ok: bool, rr: usize, cc: usize, d: usize| {
                if ok && geometry.is_present(original(rr, cc)) {
                    back.push(d - 1);
                }
            };
            if c > 0 {
                push(true, r, c - 1, 1);
            }
            if r > 0 {
                push(true, r - 1, c, width);
                if second {
                    if c > 0 {
                        push(true, r - 1, c - 1, width + 1);
                    }
                    if c + 1 < width {
                        push(true, r - 1, c + 1, width - 1);
                    }
                }
            }
            let present = geometry.is_present(original(r, c));
            if !present {
                back.clear();
            }
            let choices = if present { q } else { 1 };
            next.iter_mut().for_each(|w| *w = 0.0);
            for (idx, &w) in cur.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let shifted = (idx * q) % size;
                for s in 0..choices {
                    let bonds = back.iter().filter(|&&k| (idx / pow[k]) % q == s).count();
                    next[shifted + s] += w * weights[bonds];
                }
            }
            let m = next.iter().copied().fold(0.0, f64::max);
            next.iter_mut().for_each(|w| *w /= m);
            log_scale += m.ln();
            std::mem::swap(&mut cur, &mut next);
        }
    }
    Ok(log_scale + cur.iter().sum::<f64>().ln())
}

/// `log C(beta)`; uses the transfer recursion when it fits and falls back to
/// enumeration.
pub fn exact_log_constant(model: &PottsModel) -> Result<f64> {
    match log_constant_transfer(&model.geometry, model.q, model.beta) {
        Ok(v) => Ok(v),
        Err(Error::Capacity(transfer)) => {
            log_constant_enumeration(&model.geometry, model.q, model.beta).map_err(|e| match e {
                Error::Capacity(enumeration) => {
                    Error::Capacity(format!("{transfer}; {enumeration}"))
                }
                other => other,
            })
        }
        Err(e) => Err(e),
    }
}

pub fn exact_log_likelihood(field: &LabelField, model: &PottsModel) -> Result<f64> {
    if field.q() != model.q {
        return Err(Error::Mismatch(format!(
            "field has q={} but model has q={}",
            field.q(),
            model.q
        )));
    }
    let u = bond_count(&model.geometry, field)? as f64;
    Ok(model.beta * u - exact_log_constant(model)?)
}

/// Monte Carlo estimate of `E[U | beta]` at one interaction strength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondsPoint {
    pub beta: f64,
    pub mean_u: f64,
    pub se_u: f64,
}

/// Gibbs estimate of the expected bond count at a single `beta`: `burn_in`
/// discarded sweeps followed by `sweeps` recorded ones.
pub fn expected_bonds_at(
    geometry: &LatticeGeometry,
    q: usize,
    beta: f64,
    sweeps: usize,
    burn_in: usize,
    seed: RngSeed,
) -> Result<BondsPoint> {
    let model = PottsModel::new(geometry.clone(), q, beta)?;
    if sweeps == 0 {
        return invalid("at least one recorded sweep is required");
    }
    let mut rng = seed.rng();
    let mut field = LabelField::random(geometry, q, &mut rng)?;
    let weights = bond_weights(model.beta, geometry.order().max_neighbours());
    let (mut counts, mut probs) = (Vec::new(), Vec::new());
    for _ in 0..burn_in {
        gibbs_sweep(geometry, field.values_mut(), q, &weights, &mut counts, &mut probs, &mut rng);
    }
    let mut u = bond_count(geometry, &field)? as i64;
    let mut trace = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        u += gibbs_sweep(geometry, field.values_mut(), q, &weights, &mut counts, &mut probs, &mut rng);
        trace.push(u as f64);
    }
    debug_assert_eq!(u as usize, bond_count(geometry, &field)?);
    Ok(BondsPoint {
        beta,
        mean_u: stats::mean(&trace),
        se_u: stats::batch_means_se(&trace),
    })
}

pub(crate) fn validate_grid(beta_grid: &[f64]) -> Result<()> {
    if beta_grid.first() != Some(&0.0) {
        return invalid("interaction grid must start at 0");
    }
    if beta_grid.windows(2).any(|w| !(w[1] > w[0])) || beta_grid.iter().any(|b| !b.is_finite()) {
        return invalid("interaction grid must be finite and strictly increasing");
    }
    Ok(())
}

/// `E[U | beta]` over a grid; each grid point runs an independent chain with
/// a seed derived from `seed` and the point's index.
pub fn expected_bonds_curve(
    geometry: &LatticeGeometry,
    q: usize,
    beta_grid: &[f64],
    sweeps: usize,
    burn_in: usize,
    seed: RngSeed,
) -> Result<Vec<BondsPoint>> {
    use rayon::prelude::*;
    validate_grid(beta_grid)?;
    beta_grid
        .par_iter()
        .enumerate()
        .map(|(k, &beta)| expected_bonds_at(geometry, q, beta, sweeps, burn_in, seed.derive(&[k as u64])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Order;

    fn geom(r: usize, c: usize, o: Order) -> LatticeGeometry {
        LatticeGeometry::new(r, c, o).unwrap()
    }

    #[test]
    fn bond_counts() {
        let g = geom(2, 2, Order::First);
        assert_eq!(bond_count(&g, &LabelField::constant(2, 2, 2, 0).unwrap()).unwrap(), 4);
        let checker = LabelField::from_one_based(2, 2, 2, &[1, 2, 2, 1]).unwrap();
        assert_eq!(bond_count(&g, &checker).unwrap(), 0);
        let g2 = geom(3, 3, Order::Second);
        assert_eq!(bond_count(&g2, &LabelField::constant(3, 3, 2, 1).unwrap()).unwrap(), 20);
        assert!(bond_count(&g2, &LabelField::constant(2, 3, 2, 1).unwrap()).is_err());
    }

    #[test]
    fn two_by_two_histogram() {
        // The 4-cycle under two colours: 2 constant configurations (U=4), 8
        // with one odd site and 4 split into two equal adjacent pairs (U=2),
        // and the 2 checkerboards (U=0).
        let hist = bond_histogram(&geom(2, 2, Order::First), 2).unwrap();
        assert_eq!(hist, vec![2, 0, 12, 0, 2]);
        assert_eq!(hist.iter().sum::<u64>(), 16);
    }

    #[test]
    fn zero_beta_constant() {
        for (r, c, q) in [(2, 3, 2), (3, 3, 3), (1, 7, 2)] {
            for o in [Order::First, Order::Second] {
                let g = geom(r, c, o);
                let expect = (r * c) as f64 * (q as f64).ln();
                assert!((log_constant_transfer(&g, q, 0.0).unwrap() - expect).abs() < 1e-12);
                assert!((log_constant_enumeration(&g, q, 0.0).unwrap() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transfer_matches_enumeration_with_masks() {
        let mask = vec![true, false, true, true, true, false, true, true, true, true, false, true];
        for o in [Order::First, Order::Second] {
            let g = LatticeGeometry::with_mask(3, 4, o, mask.clone()).unwrap();
            for beta in [0.0, 0.4, 1.3] {
                let a = log_constant_transfer(&g, 3, beta).unwrap();
                let b = log_constant_enumeration(&g, 3, beta).unwrap();
                assert!((a - b).abs() <= 1e-10 * b.abs(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn transposed_orientation_agrees() {
        for o in [Order::First, Order::Second] {
            let a = log_constant_transfer(&geom(2, 5, o), 2, 0.7).unwrap();
            let b = log_constant_transfer(&geom(5, 2, o), 2, 0.7).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn large_beta_stays_finite() {
        let v = log_constant_transfer(&geom(10, 10, Order::Second), 2, 50.0).unwrap();
        // Dominated by the two constant configurations.
        let edges = geom(10, 10, Order::Second).edge_count() as f64;
        assert!((v - (50.0 * edges + 2f64.ln())).abs() < 1e-6);
    }

    #[test]
    fn capacity_errors() {
        let g = geom(20, 20, Order::First);
        let err = exact_log_constant(&PottsModel::new(g, 2, 0.3).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
        assert!(err.to_string().contains("12"));
    }

    #[test]
    fn gibbs_is_deterministic() {
        let m = PottsModel::new(geom(16, 16, Order::First), 3, 0.6).unwrap();
        let a = gibbs_sample(&m, 20, RngSeed(5), None).unwrap();
        let b = gibbs_sample(&m, 20, RngSeed(5), None).unwrap();
        let c = gibbs_sample(&m, 20, RngSeed(6), None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(gibbs_sample(&m, 0, RngSeed(5), None).is_err());
    }

    #[test]
    fn zero_beta_gibbs_is_uniform() {
        let q = 3;
        let g = geom(128, 128, Order::First);
        let m = PottsModel::new(g.clone(), q, 0.0).unwrap();
        let f = gibbs_sample(&m, 1, RngSeed(11), None).unwrap();
        let n = g.len() as f64;
        let p = 1.0 / q as f64;
        let se = (p * (1.0 - p) / n).sqrt();
        for c in f.state_counts(&g) {
            assert!((c as f64 / n - p).abs() < 3.0 * se);
        }
    }

    #[test]
    fn stronger_coupling_gives_more_bonds() {
        let g = geom(64, 64, Order::First);
        let lo = gibbs_sample(&PottsModel::new(g.clone(), 2, 0.1).unwrap(), 5000, RngSeed(3), None).unwrap();
        let hi = gibbs_sample(&PottsModel::new(g.clone(), 2, 0.8).unwrap(), 5000, RngSeed(3), None).unwrap();
        let frac = |f: &LabelField| bond_count(&g, f).unwrap() as f64 / g.edge_count() as f64;
        assert!(frac(&hi) > frac(&lo));
    }

    #[test]
    fn grid_validation() {
        let g = geom(4, 4, Order::First);
        assert!(expected_bonds_curve(&g, 2, &[0.1, 0.2], 10, 0, RngSeed(1)).is_err());
        assert!(expected_bonds_curve(&g, 2, &[0.0, 0.2, 0.2], 10, 0, RngSeed(1)).is_err());
    }

    #[test]
    fn zero_beta_expected_bonds() {
        let g = geom(16, 16, Order::Second);
        let p = expected_bonds_at(&g, 2, 0.0, 2000, 10, RngSeed(9)).unwrap();
        let expect = g.edge_count() as f64 / 2.0;
        assert!((p.mean_u - expect).abs() < 3.0 * p.se_u, "{} vs {expect} (se {})", p.mean_u, p.se_u);
    }
}
