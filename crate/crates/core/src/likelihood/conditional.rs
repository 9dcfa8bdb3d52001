use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::{LabelField, LatticeGeometry};

/// Log full-conditional probability of a site in state `own` given the
/// number of its neighbours in each state:
/// `beta * counts[own] - log sum_c exp(beta * counts[c])`.
pub fn site_log_conditional(own: usize, counts: &[u32], beta: f64) -> f64 {
    let max = counts.iter().copied().max().unwrap_or(0) as f64;
    let norm: f64 = counts
        .iter()
        .map(|&c| (beta * (c as f64 - max)).exp())
        .sum();
    beta * (counts[own] as f64 - max) - norm.ln()
}

fn check_field(field: &LabelField, sites: &[usize], neighbours: &[Vec<usize>]) -> Result<()> {
    if sites.len() != neighbours.len() {
        return Err(Error::Mismatch(format!(
            "{} conditioned sites but {} neighbour lists",
            sites.len(),
            neighbours.len()
        )));
    }
    let n = field.values().len();
    let out_of_range = sites
        .iter()
        .chain(neighbours.iter().flatten())
        .any(|&s| s >= n);
    if out_of_range {
        return Err(Error::Mismatch("plan refers to sites outside the field".into()));
    }
    Ok(())
}

/// Sum of log full conditionals of `sites`, each given its own neighbour list.
pub fn conditional_block_loglik(
    field: &LabelField,
    sites: &[usize],
    neighbours: &[Vec<usize>],
    beta_eff: f64,
) -> Result<f64> {
    check_field(field, sites, neighbours)?;
    let z = field.values();
    let mut counts = vec![0u32; field.q()];
    let mut total = 0.0;
    for (&i, nbrs) in sites.iter().zip(neighbours) {
        counts.iter_mut().for_each(|c| *c = 0);
        for &j in nbrs {
            counts[z[j] as usize] += 1;
        }
        total += site_log_conditional(z[i] as usize, &counts, beta_eff);
    }
    Ok(total)
}

/// Besag's pseudo-log-likelihood: every present site given its full
/// neighbourhood.
pub fn pseudo_loglik(field: &LabelField, q: usize, beta: f64, geometry: &LatticeGeometry) -> Result<f64> {
    field.check_geometry(geometry)?;
    if field.q() != q {
        return Err(Error::Mismatch(format!("field has q={} but q={q} requested", field.q())));
    }
    let z = field.values();
    let mut counts = vec![0u32; q];
    let mut total = 0.0;
    for i in geometry.present_sites() {
        counts.iter_mut().for_each(|c| *c = 0);
        for &j in geometry.neighbours(i) {
            counts[z[j as usize] as usize] += 1;
        }
        total += site_log_conditional(z[i] as usize, &counts, beta);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
struct Profile {
    own: u32,
    counts: Vec<u32>,
    multiplicity: f64,
}

/// A block of site conditionals reduced to its sufficient statistics: the
/// multiset of (own-state count, sorted neighbour-count vector) pairs.
///
/// Profiles are kept in a deterministic order so evaluation is bit-stable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileSum {
    profiles: Vec<Profile>,
    n_sites: usize,
}

impl ProfileSum {
    fn from_counts(q: usize, sites: impl Iterator<Item = (u8, Vec<u8>)>) -> Self {
        let mut map: BTreeMap<(u32, Vec<u32>), u64> = BTreeMap::new();
        let mut n_sites = 0;
        let mut counts = vec![0u32; q];
        for (own, nbr_states) in sites {
            counts.iter_mut().for_each(|c| *c = 0);
            for s in nbr_states {
                counts[s as usize] += 1;
            }
            let own_count = counts[own as usize];
            let mut key = counts.clone();
            key.sort_unstable();
            *map.entry((own_count, key)).or_insert(0) += 1;
            n_sites += 1;
        }
        let profiles = map
            .into_iter()
            .map(|((own, counts), m)| Profile {
                own,
                counts,
                multiplicity: m as f64,
            })
            .collect();
        ProfileSum { profiles, n_sites }
    }

    pub fn from_block(field: &LabelField, sites: &[usize], neighbours: &[Vec<usize>]) -> Result<Self> {
        check_field(field, sites, neighbours)?;
        let z = field.values();
        Ok(Self::from_counts(
            field.q(),
            sites
                .iter()
                .zip(neighbours)
                .map(|(&i, nb)| (z[i], nb.iter().map(|&j| z[j]).collect())),
        ))
    }

    pub fn from_lattice(field: &LabelField, geometry: &LatticeGeometry) -> Result<Self> {
        field.check_geometry(geometry)?;
        let z = field.values();
        Ok(Self::from_counts(
            field.q(),
            geometry
                .present_sites()
                .map(|i| (z[i], geometry.neighbours(i).iter().map(|&j| z[j as usize]).collect())),
        ))
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_profiles(&self) -> usize {
        self.profiles.len()
    }

    pub fn loglik(&self, beta: f64) -> f64 {
        self.profiles
            .iter()
            .map(|p| {
                let max = *p.counts.last().unwrap_or(&0) as f64;
                let norm: f64 = p.counts.iter().map(|&c| (beta * (c as f64 - max)).exp()).sum();
                p.multiplicity * (beta * (p.own as f64 - max) - norm.ln())
            })
            .sum()
    }
}
