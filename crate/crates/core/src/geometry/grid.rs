use std::collections::HashMap;

use super::{Aabb, MAX_DIM};
use crate::error::{config, Result};

type CellKey = [i32; MAX_DIM];

/// Uniform hash grid over item boxes.
///
/// Every item is registered in each lattice cell its stored box overlaps, so
/// a query box only needs to look at the cells it overlaps itself.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_size: f64,
    dim: usize,
    boxes: Vec<Aabb>,
    cells: HashMap<CellKey, Vec<u32>>,
}

impl GridIndex {
    pub fn new(dim: usize, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return config(format!("grid cell size must be positive, got {cell_size}"));
        }
        if !(1..=MAX_DIM).contains(&dim) {
            return config(format!("grid dimension {dim} unsupported"));
        }
        Ok(Self { cell_size, dim, boxes: Vec::new(), cells: HashMap::new() })
    }

    pub fn build(dim: usize, cell_size: f64, boxes: &[Aabb]) -> Result<Self> {
        let mut idx = Self::new(dim, cell_size)?;
        for b in boxes {
            idx.insert(*b)?;
        }
        Ok(idx)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn item_box(&self, id: u32) -> &Aabb {
        &self.boxes[id as usize]
    }

    /// Registers `b` and returns its id (ids are assigned consecutively).
    pub fn insert(&mut self, b: Aabb) -> Result<u32> {
        if b.dim() != self.dim {
            return config("box dimension does not match grid");
        }
        let id = self.boxes.len() as u32;
        let (lo, hi) = self.cell_range(&b);
        for key in CellIter::new(&lo, &hi, self.dim) {
            self.cells.entry(key).or_default().push(id);
        }
        self.boxes.push(b);
        Ok(id)
    }

    fn cell_of(&self, x: f64) -> i32 {
        (x / self.cell_size).floor().clamp(i32::MIN as f64, i32::MAX as f64) as i32
    }

    fn cell_range(&self, b: &Aabb) -> (CellKey, CellKey) {
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        for i in 0..self.dim {
            lo[i] = self.cell_of(b.lo[i]);
            hi[i] = self.cell_of(b.hi[i]);
        }
        (lo, hi)
    }

    /// Ids of items that may overlap `query`: a sorted superset of the exact
    /// overlap set.
    pub fn candidates(&self, query: &Aabb) -> Vec<u32> {
        let (lo, hi) = self.cell_range(query);
        let mut out = Vec::new();
        for key in CellIter::new(&lo, &hi, self.dim) {
            if let Some(ids) = self.cells.get(&key) {
                out.extend_from_slice(ids);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// All unordered pairs `(a, b)`, `a < b`, whose stored boxes overlap,
    /// sorted lexicographically.
    pub fn overlapping_pairs(&self) -> Vec<(u32, u32)> {
        let mut pairs = Vec::new();
        for ids in self.cells.values() {
            for (k, &a) in ids.iter().enumerate() {
                for &b in &ids[k + 1..] {
                    let (a, b) = if a < b { (a, b) } else { (b, a) };
                    if self.boxes[a as usize].intersects(&self.boxes[b as usize]) {
                        pairs.push((a, b));
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

/// Cell size at the given quantile of the boxes' longest edges, floored at a
/// tiny positive value so degenerate boxes still give a usable grid.
pub fn default_cell_size(boxes: &[Aabb], quantile: f64) -> f64 {
    let mut edges: Vec<f64> = boxes.iter().map(|b| b.longest_edge()).filter(|e| e.is_finite()).collect();
    if edges.is_empty() {
        return 1.0;
    }
    edges.sort_by(f64::total_cmp);
    let k = ((edges.len() - 1) as f64 * quantile.clamp(0.0, 1.0)).round() as usize;
    edges[k].max(1e-9)
}

struct CellIter {
    lo: CellKey,
    hi: CellKey,
    cur: CellKey,
    dim: usize,
    done: bool,
}

impl CellIter {
    fn new(lo: &CellKey, hi: &CellKey, dim: usize) -> Self {
        Self { lo: *lo, hi: *hi, cur: *lo, dim, done: false }
    }
}

impl Iterator for CellIter {
    type Item = CellKey;

    fn next(&mut self) -> Option<CellKey> {
        if self.done {
            return None;
        }
        let out = self.cur;
        let mut axis = 0;
        loop {
            if axis == self.dim {
                self.done = true;
                break;
            }
            if self.cur[axis] < self.hi[axis] {
                self.cur[axis] += 1;
                break;
            }
            self.cur[axis] = self.lo[axis];
            axis += 1;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointD;

    fn bx(lo: &[f64], hi: &[f64]) -> Aabb {
        Aabb::new(PointD::new(lo).unwrap(), PointD::new(hi).unwrap()).unwrap()
    }

    #[test]
    fn empty_index_has_no_candidates() {
        let idx = GridIndex::new(3, 1.0).unwrap();
        assert!(idx.candidates(&bx(&[0., 0., 0.], &[5., 5., 5.])).is_empty());
    }

    #[test]
    fn item_equal_to_query_is_found() {
        let b = bx(&[0.2, -3.1, 7.0, 1.0], &[0.9, -2.0, 7.5, 1.0]);
        let idx = GridIndex::build(4, 0.37, &[b]).unwrap();
        assert_eq!(idx.candidates(&b), vec![0]);
    }

    #[test]
    fn rejects_nonpositive_cell() {
        assert!(GridIndex::new(3, 0.0).is_err());
        assert!(GridIndex::new(3, -1.0).is_err());
    }

    #[test]
    fn cell_iteration_counts() {
        let idx = GridIndex::build(3, 1.0, &[bx(&[0.5, 0.5, 0.5], &[2.5, 1.5, 0.7])]).unwrap();
        assert_eq!(idx.cells.len(), 3 * 2);
    }

    #[test]
    fn quantile_cell_size() {
        let boxes: Vec<Aabb> = (1..=10).map(|k| bx(&[0., 0., 0.], &[k as f64, 0., 0.])).collect();
        assert_eq!(default_cell_size(&boxes, 0.9), 9.0);
    }
}
