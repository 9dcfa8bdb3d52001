use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{LabelField, LatticeGeometry, Order};

/// Sites conditioned on at one level, with the neighbour lists (in original
/// lattice indices) that their conditional factors use.
#[derive(Clone, Debug, Default)]
pub struct Block {
    pub sites: Vec<usize>,
    pub neighbours: Vec<Vec<usize>>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// The second coding class of a second-order level, kept in both of the
/// forms the two second-order variants need.
#[derive(Clone, Debug)]
pub struct CrossBlock {
    /// Conditioned on every neighbour (first class included).
    pub conditional: Block,
    /// Conditioned on remainder neighbours only; first-class neighbours dropped.
    pub marginal: Block,
}

#[derive(Clone, Debug)]
pub struct Level {
    pub index: usize,
    /// The rectangle this level splits, in its own remapped coordinates.
    pub geometry: LatticeGeometry,
    /// Slot of `geometry` -> original site index.
    pub site_map: Vec<Option<usize>>,
    /// First coding class (the only one for first order).
    pub conditioned: Block,
    /// Second coding class, second order only.
    pub cross: Option<CrossBlock>,
    /// Original indices of the sites passed down to the next level.
    pub remainder: Vec<usize>,
    /// Slot in `geometry` of each remainder site.
    pub remainder_local: Vec<usize>,
    /// Slot in the next level's rectangle of each remainder site.
    pub remap: Vec<usize>,
    /// Sizes of the two remainder coding classes (second order only).
    pub remainder_classes: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct Terminal {
    pub level: usize,
    pub geometry: LatticeGeometry,
    pub site_map: Vec<Option<usize>>,
}

/// Recursive coding decomposition of a lattice into `depth` conditioned
/// levels and a terminal lattice.
///
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct DecompositionPlan {
    root: LatticeGeometry,
    levels: Vec<Level>,
    terminal: Terminal,
}

struct Frame {
    geometry: LatticeGeometry,
    site_map: Vec<Option<usize>>,
}

impl Frame {
    fn root(geometry: &LatticeGeometry) -> Frame {
        let site_map = (0..geometry.len())
            .map(|i| geometry.is_present(i).then_some(i))
            .collect();
        Frame {
            geometry: geometry.clone(),
            site_map,
        }
    }

    fn original(&self, local: usize) -> usize {
        self.site_map[local].expect("present slot has an original site")
    }

    fn fits_terminal(&self) -> bool {
        self.geometry.rows() <= 4 && self.geometry.cols() <= 4
    }
}

fn neighbour_list(frame: &Frame, local: usize, keep: impl Fn(usize) -> bool) -> Vec<usize> {
    frame
        .geometry
        .neighbours(local)
        .iter()
        .map(|&j| j as usize)
        .filter(|&j| keep(j))
        .map(|j| frame.original(j))
        .collect()
}

/// One first-order split: odd-parity sites are conditioned, even-parity
/// sites are rotated by 45 degrees so that diagonal pairs become nearest
/// neighbours of the next rectangle.
fn split_first(frame: &Frame, index: usize) -> Option<(Level, Frame)> {
    let g = &frame.geometry;
    let mut conditioned = Block::default();
    let mut remainder_local = Vec::new();
    for i in g.present_sites() {
        let s = g.site(i);
        if (s.row + s.col) % 2 == 1 {
            conditioned.sites.push(frame.original(i));
            conditioned.neighbours.push(neighbour_list(frame, i, |_| true));
        } else {
            remainder_local.push(i);
        }
    }
    if conditioned.is_empty() || remainder_local.is_empty() {
        return None;
    }

    let rotated: Vec<(isize, isize)> = remainder_local
        .iter()
        .map(|&i| {
            let s = g.site(i);
            let (r, c) = (s.row as isize, s.col as isize);
            ((r + c) / 2, (r - c) / 2)
        })
        .collect();
    let (umin, umax) = min_max(rotated.iter().map(|p| p.0));
    let (vmin, vmax) = min_max(rotated.iter().map(|p| p.1));
    let rows = (umax - umin + 1) as usize;
    let cols = (vmax - vmin + 1) as usize;
    let remap: Vec<usize> = rotated
        .iter()
        .map(|&(u, v)| (u - umin) as usize * cols + (v - vmin) as usize)
        .collect();
    finish_level(frame, index, conditioned, None, remainder_local, remap, None, rows, cols)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    Rows,
    Cols,
}

/// One second-order split along `axis`: slots with odd coordinate along the
/// axis form the two conditioned coding classes (split by the parity of the
/// other coordinate); even slots are compressed contiguously.
fn split_second(frame: &Frame, index: usize) -> Option<(Level, Frame)> {
    let g = &frame.geometry;
    let preferred = if index.is_multiple_of(2) { Axis::Cols } else { Axis::Rows };
    let len = |a: Axis| if a == Axis::Cols { g.cols() } else { g.rows() };
    let axis = if len(preferred) >= 2 {
        preferred
    } else if preferred == Axis::Cols && g.rows() >= 2 {
        Axis::Rows
    } else if preferred == Axis::Rows && g.cols() >= 2 {
        Axis::Cols
    } else {
        return None;
    };
    let coords = |i: usize| {
        let s = g.site(i);
        match axis {
            Axis::Cols => (s.col, s.row),
            Axis::Rows => (s.row, s.col),
        }
    };

    let mut class1 = Block::default();
    let mut class2 = Block::default();
    let mut class2_marginal = Block::default();
    let mut remainder_local = Vec::new();
    let (mut class3, mut class4) = (0, 0);
    for i in g.present_sites() {
        let (along, other) = coords(i);
        if along % 2 == 1 {
            let all = neighbour_list(frame, i, |_| true);
            if other % 2 == 0 {
                class1.sites.push(frame.original(i));
                class1.neighbours.push(all);
            } else {
                class2.sites.push(frame.original(i));
                class2.neighbours.push(all);
                class2_marginal.sites.push(frame.original(i));
                class2_marginal
                    .neighbours
                    .push(neighbour_list(frame, i, |j| coords(j).0 % 2 == 0));
            }
        } else {
            if other % 2 == 1 {
                class3 += 1;
            } else {
                class4 += 1;
            }
            remainder_local.push(i);
        }
    }
    if class1.is_empty() || remainder_local.is_empty() {
        return None;
    }

    let (rows, cols) = match axis {
        Axis::Cols => (g.rows(), g.cols().div_ceil(2)),
        Axis::Rows => (g.rows().div_ceil(2), g.cols()),
    };
    let remap = remainder_local
        .iter()
        .map(|&i| {
            let s = g.site(i);
            match axis {
                Axis::Cols => s.row * cols + s.col / 2,
                Axis::Rows => (s.row / 2) * cols + s.col,
            }
        })
        .collect();
    let cross = CrossBlock {
        conditional: class2,
        marginal: class2_marginal,
    };
    finish_level(
        frame,
        index,
        class1,
        Some(cross),
        remainder_local,
        remap,
        Some((class3, class4)),
        rows,
        cols,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish_level(
    frame: &Frame,
    index: usize,
    conditioned: Block,
    cross: Option<CrossBlock>,
    remainder_local: Vec<usize>,
    remap: Vec<usize>,
    remainder_classes: Option<(usize, usize)>,
    rows: usize,
    cols: usize,
) -> Option<(Level, Frame)> {
    let mut mask = vec![false; rows * cols];
    let mut site_map = vec![None; rows * cols];
    let mut remainder = Vec::with_capacity(remainder_local.len());
    for (&local, &slot) in remainder_local.iter().zip(&remap) {
        debug_assert!(!mask[slot], "remap must be injective");
        mask[slot] = true;
        let orig = frame.original(local);
        site_map[slot] = Some(orig);
        remainder.push(orig);
    }
    let geometry = LatticeGeometry::with_mask(rows, cols, frame.geometry.order(), mask).ok()?;
    let level = Level {
        index,
        geometry: frame.geometry.clone(),
        site_map: frame.site_map.clone(),
        conditioned,
        cross,
        remainder,
        remainder_local,
        remap,
        remainder_classes,
    };
    Some((level, Frame { geometry, site_map }))
}

fn min_max(it: impl Iterator<Item = isize>) -> (isize, isize) {
    it.fold((isize::MAX, isize::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn split(frame: &Frame, index: usize) -> Option<(Level, Frame)> {
    match frame.geometry.order() {
        Order::First => split_first(frame, index),
        Order::Second => split_second(frame, index),
    }
}

/// Build the decomposition matching the geometry's neighbourhood order.
pub fn build_plan(geometry: &LatticeGeometry, depth: usize) -> Result<DecompositionPlan> {
    let mut frame = Frame::root(geometry);
    let mut levels = Vec::with_capacity(depth);
    for t in 0..depth {
        match split(&frame, t) {
            Some((level, next)) => {
                levels.push(level);
                frame = next;
            }
            None => {
                return invalid(format!(
                    "decomposition depth {depth} is infeasible for a {}x{} {} order lattice; maximum feasible depth is {t}",
                    geometry.rows(),
                    geometry.cols(),
                    geometry.order()
                ))
            }
        }
    }
    Ok(DecompositionPlan {
        root: geometry.clone(),
        levels,
        terminal: Terminal {
            level: depth,
            geometry: frame.geometry,
            site_map: frame.site_map,
        },
    })
}

pub fn build_plan_first_order(geometry: &LatticeGeometry, depth: usize) -> Result<DecompositionPlan> {
    if geometry.order() != Order::First {
        return invalid("first-order decomposition requires a first-order lattice");
    }
    build_plan(geometry, depth)
}

pub fn build_plan_second_order(geometry: &LatticeGeometry, depth: usize) -> Result<DecompositionPlan> {
    if geometry.order() != Order::Second {
        return invalid("second-order decomposition requires a second-order lattice");
    }
    build_plan(geometry, depth)
}

/// Smallest depth whose terminal rectangle is at most 4x4. Falls back to the
/// maximum feasible depth when no split sequence gets there.
pub fn default_depth(geometry: &LatticeGeometry) -> usize {
    let mut frame = Frame::root(geometry);
    let mut t = 0;
    while !frame.fits_terminal() {
        match split(&frame, t) {
            Some((_, next)) => frame = next,
            None => break,
        }
        t += 1;
    }
    t
}

/// Largest depth for which every level has a non-empty conditioned class.
pub fn max_depth(geometry: &LatticeGeometry) -> usize {
    let mut frame = Frame::root(geometry);
    let mut t = 0;
    while let Some((_, next)) = split(&frame, t) {
        frame = next;
        t += 1;
    }
    t
}

impl DecompositionPlan {
    pub fn root(&self) -> &LatticeGeometry {
        &self.root
    }

    pub fn order(&self) -> Order {
        self.root.order()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn terminal(&self) -> &Terminal {
        &self.terminal
    }

    /// Geometry and slot map of the sublattice handled at level `t`
    /// (`t == depth` is the terminal lattice).
    pub fn frame(&self, t: usize) -> Result<(&LatticeGeometry, &[Option<usize>])> {
        if t < self.levels.len() {
            let l = &self.levels[t];
            Ok((&l.geometry, &l.site_map))
        } else if t == self.levels.len() {
            Ok((&self.terminal.geometry, &self.terminal.site_map))
        } else {
            Err(Error::Range(format!(
                "level {t} exceeds plan depth {}",
                self.levels.len()
            )))
        }
    }

    /// The field restricted to the level-`t` sublattice, laid out on that
    /// level's remapped rectangle.
    pub fn extract(&self, t: usize, field: &LabelField) -> Result<(LatticeGeometry, LabelField)> {
        field.check_geometry(&self.root)?;
        let (geometry, site_map) = self.frame(t)?;
        let values = site_map
            .iter()
            .map(|s| s.map_or(0, |orig| field.values()[orig]))
            .collect();
        let sub = LabelField::new(geometry.rows(), geometry.cols(), field.q(), values)?;
        Ok((geometry.clone(), sub))
    }

    pub fn describe(&self) -> PlanDescription {
        let root = &self.root;
        let coord = |i: usize| {
            let s = root.site(i);
            [s.row, s.col]
        };
        let levels = self
            .levels
            .iter()
            .map(|l| {
                let mut class_sizes = vec![l.conditioned.len()];
                if let Some(cross) = &l.cross {
                    class_sizes.push(cross.conditional.len());
                }
                if let Some((c3, c4)) = l.remainder_classes {
                    class_sizes.extend([c3, c4]);
                } else {
                    class_sizes.push(l.remainder.len());
                }
                LevelDescription {
                    level: l.index,
                    rows: l.geometry.rows(),
                    cols: l.geometry.cols(),
                    present: l.geometry.n_present(),
                    class_sizes,
                    conditioned: l.conditioned.sites.iter().map(|&i| coord(i)).collect(),
                    cross: l
                        .cross
                        .as_ref()
                        .map(|c| c.conditional.sites.iter().map(|&i| coord(i)).collect()),
                    remainder: l.remainder.iter().map(|&i| coord(i)).collect(),
                }
            })
            .collect();
        let t = &self.terminal;
        PlanDescription {
            rows: root.rows(),
            cols: root.cols(),
            order: root.order(),
            depth: self.depth(),
            geometry_hash: root.content_hash(),
            levels,
            terminal: TerminalDescription {
                level: t.level,
                rows: t.geometry.rows(),
                cols: t.geometry.cols(),
                present: t.geometry.n_present(),
                sites: t.site_map.iter().flatten().map(|&i| coord(i)).collect(),
            },
        }
    }
}

/// JSON-friendly dump of a plan; coordinates are `[row, col]` in the
/// original lattice.
#[derive(Clone, Debug, Serialize)]
pub struct PlanDescription {
    pub rows: usize,
    pub cols: usize,
    pub order: Order,
    pub depth: usize,
    pub geometry_hash: String,
    pub levels: Vec<LevelDescription>,
    pub terminal: TerminalDescription,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelDescription {
    pub level: usize,
    pub rows: usize,
    pub cols: usize,
    pub present: usize,
    pub class_sizes: Vec<usize>,
    pub conditioned: Vec<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross: Option<Vec<[usize; 2]>>,
    pub remainder: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TerminalDescription {
    pub level: usize,
    pub rows: usize,
    pub cols: usize,
    pub present: usize,
    pub sites: Vec<[usize; 2]>,
}
