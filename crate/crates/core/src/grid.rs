//! Uniform partition of a bounded box into cells, plus the `Out` symbol.
//!
//! Cells are half-open `[lo, hi)` in every dimension except along the
//! domain's upper face, where they are closed, so every point of the domain
//! has exactly one cell. Flat indices are row-major with dimension 0 slowest;
//! index `total_cells` is the `Out` symbol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::IntervalBox;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionGrid {
    domain: IntervalBox,
    cells_per_dim: Vec<usize>,
    total_cells: usize,
}

impl PartitionGrid {
    pub fn new(domain: IntervalBox, cells_per_dim: Vec<usize>) -> Result<Self> {
        if cells_per_dim.len() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), found: cells_per_dim.len() });
        }
        if !domain.is_bounded() {
            return Err(Error::InvalidGrid(format!("domain {domain} is unbounded")));
        }
        if cells_per_dim.iter().any(|&n| n == 0) {
            return Err(Error::InvalidGrid("zero cells in a dimension".into()));
        }
        if domain.widths().iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidGrid(format!("domain {domain} is degenerate")));
        }
        let total_cells = cells_per_dim
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .filter(|t| *t < u32::MAX as usize)
            .ok_or_else(|| Error::InvalidGrid("cell count overflows".into()))?;
        Ok(PartitionGrid { domain, cells_per_dim, total_cells })
    }

    /// Number of cells a grid would have, without building anything.
    pub fn count_cells(cells_per_dim: &[usize]) -> usize {
        cells_per_dim.iter().product()
    }

    pub fn domain(&self) -> &IntervalBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn cells_per_dim(&self) -> &[usize] {
        &self.cells_per_dim
    }

    pub fn total_cells(&self) -> usize {
        self.total_cells
    }

    /// Index of the `Out` symbol.
    pub fn out(&self) -> usize {
        self.total_cells
    }

    /// Lower boundary of slab `j` along dimension `d` (`j == n` gives the upper face).
    pub fn boundary(&self, d: usize, j: usize) -> f64 {
        let n = self.cells_per_dim[d];
        let (lo, hi) = (self.domain.lo()[d], self.domain.hi()[d]);
        if j >= n {
            hi
        } else {
            lo + (hi - lo) * (j as f64 / n as f64)
        }
    }

    pub fn flatten(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.cells_per_dim).fold(0, |acc, (m, n)| acc * n + m)
    }

    pub fn unflatten(&self, mut index: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            multi[d] = index % self.cells_per_dim[d];
            index /= self.cells_per_dim[d];
        }
        multi
    }

    pub fn cell_box(&self, index: usize) -> IntervalBox {
        let multi = self.unflatten(index);
        self.cell_box_multi(&multi)
    }

    pub fn cell_box_multi(&self, multi: &[usize]) -> IntervalBox {
        let lo = multi.iter().enumerate().map(|(d, &j)| self.boundary(d, j)).collect();
        let hi = multi.iter().enumerate().map(|(d, &j)| self.boundary(d, j + 1)).collect();
        IntervalBox::new(lo, hi).expect("grid cells are well formed")
    }

    fn slab_of(&self, d: usize, x: f64) -> Option<usize> {
        let (lo, hi) = (self.domain.lo()[d], self.domain.hi()[d]);
        if !(lo <= x && x <= hi) {
            return None;
        }
        let n = self.cells_per_dim[d];
        let mut j = (((x - lo) / (hi - lo)) * n as f64).floor().clamp(0.0, (n - 1) as f64) as usize;
        while j > 0 && x < self.boundary(d, j) {
            j -= 1;
        }
        while j + 1 < n && x >= self.boundary(d, j + 1) {
            j += 1;
        }
        Some(j)
    }

    /// The symbol `H(x)`: containing cell, or `Out` outside the domain.
    pub fn cell_of(&self, x: &[f64]) -> usize {
        if x.len() != self.dim() {
            return self.out();
        }
        let mut index = 0;
        for (d, v) in x.iter().enumerate() {
            match self.slab_of(d, *v) {
                Some(j) => index = index * self.cells_per_dim[d] + j,
                None => return self.out(),
            }
        }
        index
    }

    /// Inclusive slab range along `d` of cells whose closed boxes meet `[a, b]`.
    pub fn slab_range(&self, d: usize, a: f64, b: f64) -> Option<(usize, usize)> {
        let (lo, hi) = (self.domain.lo()[d], self.domain.hi()[d]);
        if b < lo || a > hi || a > b {
            return None;
        }
        let n = self.cells_per_dim[d];
        let guess = |x: f64| (((x - lo) / (hi - lo)) * n as f64).floor().clamp(0.0, (n - 1) as f64) as usize;
        let mut first = guess(a.max(lo));
        while first > 0 && self.boundary(d, first) >= a {
            first -= 1;
        }
        while self.boundary(d, first + 1) < a {
            first += 1;
        }
        let mut last = guess(b.min(hi));
        while last + 1 < n && self.boundary(d, last + 1) <= b {
            last += 1;
        }
        while last > first && self.boundary(d, last) > b {
            last -= 1;
        }
        Some((first, last))
    }

    /// Calls `f` with every cell index whose closed box intersects `region`,
    /// in increasing order.
    pub fn for_each_intersecting(&self, region: &IntervalBox, f: impl FnMut(usize)) {
        let ranges: Option<Vec<_>> = (0..self.dim()).map(|d| self.slab_range(d, region.lo()[d], region.hi()[d])).collect();
        if let Some(r) = ranges {
            self.for_each_in_ranges(&r, f);
        }
    }

    /// Calls `f` with every cell containing at least one point of `region`
    /// under the half-open cell convention, in increasing order.
    pub fn for_each_meeting(&self, region: &IntervalBox, f: impl FnMut(usize)) {
        let mut ranges = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let a = region.lo()[d].max(self.domain.lo()[d]);
            let b = region.hi()[d].min(self.domain.hi()[d]);
            match (self.slab_of(d, a), self.slab_of(d, b)) {
                (Some(first), Some(last)) if a <= b => ranges.push((first, last)),
                _ => return,
            }
        }
        self.for_each_in_ranges(&ranges, f);
    }

    fn for_each_in_ranges(&self, ranges: &[(usize, usize)], mut f: impl FnMut(usize)) {
        let mut multi: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            f(self.flatten(&multi));
            let mut d = self.dim();
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                if multi[d] < ranges[d].1 {
                    multi[d] += 1;
                    break;
                }
                multi[d] = ranges[d].0;
            }
        }
    }
}
