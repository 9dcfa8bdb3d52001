use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticeGeometry;

/// Discrete state per lattice site.
///
/// States are stored zero-based (`0..q`); file formats and user-facing output
/// use `1..=q`. Masked slots of a geometry hold state 0 and are ignored.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelField {
    rows: usize,
    cols: usize,
    q: usize,
    values: Vec<u8>,
}

impl LabelField {
    pub fn new(rows: usize, cols: usize, q: usize, values: Vec<u8>) -> Result<Self> {
        if !(2..=255).contains(&q) {
            return invalid(format!("number of states must be in 2..=255, got {q}"));
        }
        if values.len() != rows * cols {
            return invalid(format!(
                "field has {} values for a {rows}x{cols} lattice",
                values.len()
            ));
        }
        if let Some(bad) = values.iter().find(|&&v| v as usize >= q) {
            return invalid(format!("state {} outside 1..={q}", *bad as usize + 1));
        }
        Ok(LabelField { rows, cols, q, values })
    }

    /// Build from one-based labels as found in files.
    pub fn from_one_based(rows: usize, cols: usize, q: usize, labels: &[u32]) -> Result<Self> {
        let values = labels
            .iter()
            .map(|&l| {
                if l == 0 || l as usize > q {
                    invalid(format!("label {l} outside 1..={q}"))
                } else {
                    Ok((l - 1) as u8)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, q, values)
    }

    pub fn constant(rows: usize, cols: usize, q: usize, state: u8) -> Result<Self> {
        Self::new(rows, cols, q, vec![state; rows * cols])
    }

    pub fn random<R: Rng + ?Sized>(geometry: &LatticeGeometry, q: usize, rng: &mut R) -> Result<Self> {
        let values = (0..geometry.len())
            .map(|i| {
                if geometry.is_present(i) {
                    rng.random_range(0..q) as u8
                } else {
                    0
                }
            })
            .collect();
        Self::new(geometry.rows(), geometry.cols(), q, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [u8] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.cols + col]
    }

    pub fn one_based(&self) -> impl Iterator<Item = u32> + '_ {
        self.values.iter().map(|&v| v as u32 + 1)
    }

    /// Apply a permutation of the state labels (`perm[old] = new`).
    pub fn relabel(&self, perm: &[u8]) -> Result<Self> {
        let mut seen = vec![false; self.q];
        if perm.len() != self.q {
            return invalid("permutation length must equal q");
        }
        for &p in perm {
            if p as usize >= self.q || std::mem::replace(&mut seen[p as usize], true) {
                return invalid("relabelling is not a permutation of the states");
            }
        }
        Ok(LabelField {
            values: self.values.iter().map(|&v| perm[v as usize]).collect(),
            ..self.clone()
        })
    }

    pub fn check_geometry(&self, geometry: &LatticeGeometry) -> Result<()> {
        if self.rows != geometry.rows() || self.cols != geometry.cols() {
            return Err(Error::Mismatch(format!(
                "field is {}x{} but lattice is {}x{}",
                self.rows,
                self.cols,
                geometry.rows(),
                geometry.cols()
            )));
        }
        Ok(())
    }

    /// Empirical frequency of each state over present sites.
    pub fn state_counts(&self, geometry: &LatticeGeometry) -> Vec<usize> {
        let mut counts = vec![0; self.q];
        for i in geometry.present_sites() {
            counts[self.values[i] as usize] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(LabelField::new(2, 2, 2, vec![0, 1, 1, 0]).is_ok());
        assert!(LabelField::new(2, 2, 2, vec![0, 1, 2, 0]).is_err());
        assert!(LabelField::new(2, 2, 1, vec![0; 4]).is_err());
        assert!(LabelField::new(2, 3, 2, vec![0; 4]).is_err());
        assert!(LabelField::from_one_based(1, 2, 3, &[0, 1]).is_err());
        let f = LabelField::from_one_based(1, 3, 3, &[1, 2, 3]).unwrap();
        assert_eq!(f.values(), &[0, 1, 2]);
        assert_eq!(f.one_based().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn relabel_rejects_non_permutations() {
        let f = LabelField::new(1, 3, 3, vec![0, 1, 2]).unwrap();
        assert_eq!(f.relabel(&[2, 0, 1]).unwrap().values(), &[2, 0, 1]);
        assert!(f.relabel(&[0, 0, 1]).is_err());
        assert!(f.relabel(&[0, 1]).is_err());
    }
}
