use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Neighbourhood order of the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// Four nearest neighbours.
    First,
    /// Eight neighbours (nearest plus diagonals).
    Second,
}

impl Order {
    fn stencil(self) -> &'static [(isize, isize)] {
        const FIRST: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const SECOND: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Order::First => &FIRST,
            Order::Second => &SECOND,
        }
    }

    pub fn max_neighbours(self) -> usize {
        self.stencil().len()
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Order::First => write!(f, "first"),
            Order::Second => write!(f, "second"),
        }
    }
}

impl std::str::FromStr for Order {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "first" | "1" => Ok(Order::First),
            "second" | "2" => Ok(Order::Second),
            other => invalid(format!("unknown neighbourhood order '{other}'")),
        }
    }
}

/// Only free (non-toroidal) boundaries are supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteIndex {
    pub row: usize,
    pub col: usize,
}

/// A `rows x cols` rectangle of sites with a neighbourhood stencil and an
/// optional presence mask.
///
/// Masked (absent) sites keep their slot in the row-major storage but have no
/// neighbours and are never neighbours of anything. Decomposition levels use
/// masks when the remapped remainder does not fill its bounding rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGeometry {
    rows: usize,
    cols: usize,
    order: Order,
    boundary: Boundary,
    mask: Option<Vec<bool>>,
    offsets: Vec<u32>,
    adjacency: Vec<u32>,
}

impl LatticeGeometry {
    pub fn new(rows: usize, cols: usize, order: Order) -> Result<Self> {
        Self::build(rows, cols, order, None)
    }

    /// Geometry with a presence mask. A mask with every site present is
    /// normalized away.
    pub fn with_mask(rows: usize, cols: usize, order: Order, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != rows * cols {
            return invalid(format!(
                "mask has {} entries for a {rows}x{cols} lattice",
                mask.len()
            ));
        }
        let mask = if mask.iter().all(|&p| p) { None } else { Some(mask) };
        Self::build(rows, cols, order, mask)
    }

    fn build(rows: usize, cols: usize, order: Order, mask: Option<Vec<bool>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid(format!("lattice dimensions must be positive, got {rows}x{cols}"));
        }
        if rows.checked_mul(cols).is_none_or(|n| n > u32::MAX as usize) {
            return invalid(format!("lattice {rows}x{cols} is too large"));
        }
        let n = rows * cols;
        let present = |i: usize| mask.as_ref().is_none_or(|m| m[i]);
        let mut offsets = Vec::with_capacity(n + 1);
        let mut adjacency = Vec::with_capacity(n * order.max_neighbours());
        offsets.push(0u32);
        for i in 0..n {
            if present(i) {
                let (r, c) = ((i / cols) as isize, (i % cols) as isize);
                for &(dr, dc) in order.stencil() {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                        continue;
                    }
                    let j = nr as usize * cols + nc as usize;
                    if present(j) {
                        adjacency.push(j as u32);
                    }
                }
            }
            offsets.push(adjacency.len() as u32);
        }
        Ok(LatticeGeometry {
            rows,
            cols,
            order,
            boundary: Boundary::Free,
            mask,
            offsets,
            adjacency,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Number of storage slots (`rows * cols`), present or not.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.n_present() == 0
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[i])
    }

    pub fn n_present(&self) -> usize {
        match &self.mask {
            None => self.len(),
            Some(m) => m.iter().filter(|&&p| p).count(),
        }
    }

    pub fn present_sites(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.is_present(i))
    }

    #[inline]
    pub fn neighbours(&self, i: usize) -> &[u32] {
        &self.adjacency[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn site(&self, i: usize) -> SiteIndex {
        SiteIndex {
            row: i / self.cols,
            col: i % self.cols,
        }
    }

    /// Unordered neighbour pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |i| {
            self.neighbours(i)
                .iter()
                .map(|&j| j as usize)
                .filter(move |&j| i < j)
                .map(move |j| (i, j))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    /// Hex SHA-256 over dimensions, order and mask; used to bind cached
    /// artifacts (such as integration tables) to the lattice they were built for.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}x{}:{}:", self.rows, self.cols, self.order).as_bytes());
        match &self.mask {
            None => h.update(b"full"),
            Some(m) => h.update(m.iter().map(|&p| p as u8).collect::<Vec<_>>()),
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degree(g: &LatticeGeometry, r: usize, c: usize) -> usize {
        g.neighbours(g.index(r, c)).len()
    }

    #[test]
    fn first_order_three_by_three() {
        let g = LatticeGeometry::new(3, 3, Order::First).unwrap();
        assert_eq!(degree(&g, 1, 1), 4);
        assert_eq!(degree(&g, 0, 0), 2);
        assert_eq!(degree(&g, 0, 1), 3);
        assert_eq!(g.edge_count(), 12);
    }

    #[test]
    fn second_order_three_by_three() {
        let g = LatticeGeometry::new(3, 3, Order::Second).unwrap();
        assert_eq!(degree(&g, 1, 1), 8);
        assert_eq!(degree(&g, 0, 0), 3);
        assert_eq!(degree(&g, 0, 1), 5);
        assert_eq!(g.edge_count(), 20);
    }

    #[test]
    fn path_graph() {
        let g = LatticeGeometry::new(1, 5, Order::First).unwrap();
        assert!(g.present_sites().all(|i| g.neighbours(i).len() <= 2));
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.edges().count(), 4);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(LatticeGeometry::new(0, 3, Order::First).is_err());
        assert!(LatticeGeometry::new(3, 0, Order::Second).is_err());
    }

    #[test]
    fn symmetric_neighbours() {
        for order in [Order::First, Order::Second] {
            for rows in 1..7 {
                for cols in 1..7 {
                    let g = LatticeGeometry::new(rows, cols, order).unwrap();
                    for i in 0..g.len() {
                        for &j in g.neighbours(i) {
                            assert!(g.neighbours(j as usize).contains(&(i as u32)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn interior_degrees() {
        let g1 = LatticeGeometry::new(6, 7, Order::First).unwrap();
        let g2 = LatticeGeometry::new(6, 7, Order::Second).unwrap();
        for r in 1..5 {
            for c in 1..6 {
                assert_eq!(degree(&g1, r, c), 4);
                assert_eq!(degree(&g2, r, c), 8);
            }
        }
    }

    #[test]
    fn masked_sites_are_isolated() {
        let mut mask = vec![true; 9];
        mask[4] = false;
        let g = LatticeGeometry::with_mask(3, 3, Order::First, mask).unwrap();
        assert_eq!(g.n_present(), 8);
        assert!(g.neighbours(4).is_empty());
        assert_eq!(degree(&g, 0, 1), 2);
        assert_eq!(g.edge_count(), 8);
        let full = LatticeGeometry::with_mask(2, 2, Order::First, vec![true; 4]).unwrap();
        assert!(full.mask().is_none());
        assert_ne!(g.content_hash(), LatticeGeometry::new(3, 3, Order::First).unwrap().content_hash());
    }
}
