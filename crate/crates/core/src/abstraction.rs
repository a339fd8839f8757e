//! Finite transition system of the continuous abstraction on a uniform grid.
//!
//! `δ(s, û)` is the set of cells (half-open, as for `cell_of`) meeting the
//! reachable-set box of cell `s` under the held input `û`. Cells flagged as
//! avoid are merged into `Out`: they have no outgoing transitions and never
//! appear as successors.
//!
//! # Binary format
//!
//! Little-endian. Header: magic `RSTS`, `u32` version, 32-byte config hash.
//! Grid: `u32` dim, `(f64 lo, f64 hi)` per dim, `u32` cells per dim.
//! Inputs: `u32` dim, `(f64 lo, f64 hi)` per dim, `u32` values per dim,
//! `u32` point count, points as `f64` rows. Body: one safe-mask byte per
//! cell, `u64` offsets (`cells × inputs + 1` entries, row `s * inputs + u`),
//! then `u32` successor indices with `Out = total_cells`.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::codec;
use crate::error::{Error, Result};
use crate::grid::PartitionGrid;
use crate::interval::IntervalBox;
use crate::reach::{embed_integrate_with, Decomposition, EmbedScratch, ReachSettings};

const MAGIC: &[u8; 4] = b"RSTS";

/// Uniform grid of representative input values, endpoints included.
#[derive(Clone, Debug, PartialEq)]
pub struct InputGrid {
    domain: IntervalBox,
    values_per_dim: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl InputGrid {
    /// Builds the full grid and keeps only the points accepted by `keep`.
    pub fn new(domain: IntervalBox, values_per_dim: Vec<usize>, keep: impl Fn(&[f64]) -> bool) -> Result<Self> {
        if values_per_dim.len() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), found: values_per_dim.len() });
        }
        if !domain.is_bounded() {
            return Err(Error::InvalidGrid(format!("input domain {domain} is unbounded")));
        }
        if values_per_dim.iter().any(|n| *n == 0) {
            return Err(Error::InvalidGrid("zero input values in a dimension".into()));
        }
        let axes: Vec<Vec<f64>> = values_per_dim
            .iter()
            .enumerate()
            .map(|(d, &n)| {
                let (lo, hi) = (domain.lo()[d], domain.hi()[d]);
                if n == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..n).map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * (k as f64 / (n - 1) as f64) }).collect()
                }
            })
            .collect();
        let total: usize = values_per_dim.iter().product();
        let mut points = Vec::new();
        let mut multi = vec![0usize; domain.dim()];
        for _ in 0..total {
            let p: Vec<f64> = multi.iter().enumerate().map(|(d, &k)| axes[d][k]).collect();
            if keep(&p) {
                points.push(p);
            }
            for d in (0..multi.len()).rev() {
                multi[d] += 1;
                if multi[d] < values_per_dim[d] {
                    break;
                }
                multi[d] = 0;
            }
        }
        Ok(InputGrid { domain, values_per_dim, points })
    }

    pub fn from_parts(domain: IntervalBox, values_per_dim: Vec<usize>, points: Vec<Vec<f64>>) -> Result<Self> {
        if values_per_dim.len() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), found: values_per_dim.len() });
        }
        if points.len() > values_per_dim.iter().product() {
            return Err(Error::Format("more input points than grid values".into()));
        }
        if let Some(p) = points.iter().find(|p| !domain.contains_point(p)) {
            return Err(Error::Format(format!("input point {p:?} outside {domain}")));
        }
        Ok(InputGrid { domain, values_per_dim, points })
    }

    pub fn domain(&self) -> &IntervalBox {
        &self.domain
    }

    pub fn values_per_dim(&self) -> &[usize] {
        &self.values_per_dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, u: usize) -> &[f64] {
        &self.points[u]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Abstraction `(𝒳, 𝒰, δ)` with compressed successor rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionSystem {
    grid: PartitionGrid,
    inputs: InputGrid,
    offsets: Vec<u64>,
    successors: Vec<u32>,
    safe_mask: Vec<bool>,
    config_hash: [u8; 32],
}

impl TransitionSystem {
    /// Assembles a system from explicit successor rows (`rows[s][u]`).
    /// Rows of unsafe cells must be empty.
    pub fn from_rows(grid: PartitionGrid, inputs: InputGrid, safe_mask: Vec<bool>, rows: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let n = grid.total_cells();
        let m = inputs.len();
        if safe_mask.len() != n || rows.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rows.len().min(safe_mask.len()) });
        }
        let mut offsets = Vec::with_capacity(n * m + 1);
        let mut successors = Vec::new();
        offsets.push(0u64);
        for (s, row) in rows.into_iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: row.len() });
            }
            for mut succ in row {
                succ.sort_unstable();
                succ.dedup();
                if succ.iter().any(|&t| t > n || (t < n && !safe_mask[t])) {
                    return Err(Error::StateOutOfRange(s));
                }
                if safe_mask[s] && succ.is_empty() {
                    return Err(Error::Format(format!("cell {s} has an empty successor set")));
                }
                successors.extend(succ.iter().map(|&t| t as u32));
                offsets.push(successors.len() as u64);
            }
        }
        Ok(TransitionSystem { grid, inputs, offsets, successors, safe_mask, config_hash: [0; 32] })
    }

    pub fn grid(&self) -> &PartitionGrid {
        &self.grid
    }

    pub fn inputs(&self) -> &InputGrid {
        &self.inputs
    }

    pub fn num_states(&self) -> usize {
        self.grid.total_cells()
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn out(&self) -> usize {
        self.grid.out()
    }

    /// Whether cell `s` is a proper state (not merged into `Out`).
    pub fn is_safe(&self, s: usize) -> bool {
        s < self.safe_mask.len() && self.safe_mask[s]
    }

    pub fn safe_mask(&self) -> &[bool] {
        &self.safe_mask
    }

    pub fn config_hash(&self) -> &[u8; 32] {
        &self.config_hash
    }

    pub fn set_config_hash(&mut self, hash: [u8; 32]) {
        self.config_hash = hash;
    }

    /// Total number of stored transitions.
    pub fn num_transitions(&self) -> usize {
        self.successors.len()
    }

    /// Successor row without range checks beyond slice indexing.
    pub(crate) fn row(&self, s: usize, u: usize) -> &[u32] {
        let k = s * self.inputs.len() + u;
        &self.successors[self.offsets[k] as usize..self.offsets[k + 1] as usize]
    }

    pub fn successors(&self, s: usize, u: usize) -> Result<Vec<usize>> {
        if s == self.out() {
            return Err(Error::OutHasNoSuccessors);
        }
        if s > self.out() {
            return Err(Error::StateOutOfRange(s));
        }
        if u >= self.num_inputs() {
            return Err(Error::InputOutOfRange(u));
        }
        if !self.safe_mask[s] {
            return Ok(vec![self.out()]);
        }
        Ok(self.row(s, u).iter().map(|&t| t as usize).collect())
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        codec::write_header(w, MAGIC, &self.config_hash)?;
        codec::write_grid(w, &self.grid)?;
        codec::write_inputs(w, &self.inputs)?;
        w.write_all(&self.safe_mask.iter().map(|b| *b as u8).collect::<Vec<u8>>())?;
        for o in &self.offsets {
            w.write_u64::<LE>(*o)?;
        }
        for s in &self.successors {
            w.write_u32::<LE>(*s)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let config_hash = codec::read_header(r, MAGIC)?;
        let grid = codec::read_grid(r)?;
        let inputs = codec::read_inputs(r)?;
        let n = grid.total_cells();
        let mut mask = vec![0u8; n];
        r.read_exact(&mut mask)?;
        let safe_mask: Vec<bool> = mask.iter().map(|b| *b != 0).collect();
        let mut offsets = vec![0u64; n * inputs.len() + 1];
        r.read_u64_into::<LE>(&mut offsets)?;
        if offsets.windows(2).any(|w| w[0] > w[1]) || offsets[0] != 0 {
            return Err(Error::Format("offsets are not monotone".into()));
        }
        let mut successors = vec![0u32; *offsets.last().unwrap() as usize];
        r.read_u32_into::<LE>(&mut successors)?;
        if successors.iter().any(|&t| t as usize > n) {
            return Err(Error::Format("successor index out of range".into()));
        }
        Ok(TransitionSystem { grid, inputs, offsets, successors, safe_mask, config_hash })
    }

    /// One line per pair: `s u: t1 t2 ...`, with `Out` spelled `out`.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# cells {} inputs {} out {}", self.num_states(), self.num_inputs(), self.out())?;
        for s in 0..self.num_states() {
            if !self.safe_mask[s] {
                writeln!(w, "{s} avoid")?;
                continue;
            }
            for u in 0..self.num_inputs() {
                write!(w, "{s} {u}:")?;
                for &t in self.row(s, u) {
                    if t as usize == self.out() {
                        write!(w, " out")?;
                    } else {
                        write!(w, " {t}")?;
                    }
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Builds `δ` for every safe cell and input.
///
/// `avoid` marks cells merged into `Out`. When the dynamics are invariant
/// under translations along some coordinates, reachable boxes are computed
/// once per class of cells that differ only along those coordinates and
/// then translated; a relative pad of `1e-12` absorbs the rounding
/// difference between the translated and the directly integrated box.
pub fn build_abstraction<D: Decomposition + ?Sized>(
    d: &D,
    grid: &PartitionGrid,
    inputs: &InputGrid,
    w: &IntervalBox,
    settings: &ReachSettings,
    avoid: impl Fn(usize) -> bool + Sync,
) -> Result<TransitionSystem> {
    settings.validate()?;
    if grid.dim() != d.dim_x() {
        return Err(Error::DimensionMismatch { expected: d.dim_x(), found: grid.dim() });
    }
    if inputs.domain().dim() != d.dim_u() {
        return Err(Error::DimensionMismatch { expected: d.dim_u(), found: inputs.domain().dim() });
    }
    let n = grid.total_cells();
    let m = inputs.len();
    let safe_mask: Vec<bool> = (0..n).map(|s| !avoid(s)).collect();
    let invariant = d.translation_invariant_dims();
    let dim = grid.dim();

    // representative cells: slab 0 along every invariant coordinate
    let reference = |s: usize| -> usize {
        let mut multi = grid.unflatten(s);
        for &k in &invariant {
            multi[k] = 0;
        }
        grid.flatten(&multi)
    };
    let mut needed: Vec<usize> = if invariant.is_empty() {
        (0..n).filter(|&s| safe_mask[s]).collect()
    } else {
        (0..n).filter(|&s| safe_mask[s]).map(reference).collect()
    };
    needed.sort_unstable();
    needed.dedup();

    let boxes: Vec<Vec<IntervalBox>> = needed
        .par_iter()
        .map_init(
            || EmbedScratch::new(d.dim_x(), d.dim_w()),
            |scratch, &s| {
                let cell = grid.cell_box(s);
                (0..m)
                    .map(|u| {
                        embed_integrate_with(d, &cell, inputs.point(u), w, settings, scratch).map_err(|e| match e {
                            Error::NonFiniteIntegration => Error::NonFinite { cell: s, input: u },
                            other => other,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<Vec<Vec<u32>>> = (0..n)
        .into_par_iter()
        .map(|s| {
            if !safe_mask[s] {
                return vec![Vec::new(); m];
            }
            let r = if invariant.is_empty() { s } else { reference(s) };
            let k = needed.binary_search(&r).expect("reference cell was integrated");
            let shift: Option<Vec<f64>> = (r != s).then(|| {
                let (cs, cr) = (grid.unflatten(s), grid.unflatten(r));
                (0..dim).map(|i| grid.boundary(i, cs[i]) - grid.boundary(i, cr[i])).collect()
            });
            (0..m)
                .map(|u| {
                    let reach = match &shift {
                        None => boxes[k][u].clone(),
                        Some(off) => {
                            let t = boxes[k][u].translate(off);
                            let pad: Vec<f64> = (0..dim).map(|i| 1e-12 * (1.0 + t.lo()[i].abs().max(t.hi()[i].abs()))).collect();
                            t.expand(&pad).expect("pad is non-negative")
                        }
                    };
                    successor_row(grid, &safe_mask, &reach)
                })
                .collect()
        })
        .collect();

    let mut offsets = Vec::with_capacity(n * m + 1);
    offsets.push(0u64);
    let mut successors = Vec::new();
    for row in rows {
        for succ in row {
            successors.extend_from_slice(&succ);
            offsets.push(successors.len() as u64);
        }
    }
    Ok(TransitionSystem { grid: grid.clone(), inputs: inputs.clone(), offsets, successors, safe_mask, config_hash: [0; 32] })
}

fn successor_row(grid: &PartitionGrid, safe_mask: &[bool], reach: &IntervalBox) -> Vec<u32> {
    let mut out = Vec::new();
    let mut spill = !grid.domain().contains(reach).unwrap_or(false);
    grid.for_each_meeting(reach, |c| {
        if safe_mask[c] {
            out.push(c as u32);
        } else {
            spill = true;
        }
    });
    if spill {
        out.push(grid.out() as u32);
    }
    out
}
