//! The affine reference map `π(x̂, û) = P [x̂; û] + Ω` and its interval preimage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalBox};

/// Affine map from the abstract state-input space to the concrete state space.
///
/// Every row of `p` has at most one non-zero entry, which is what makes
/// preimages of boxes boxes again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineRepr", into = "AffineRepr")]
pub struct AffineMap {
    p: Vec<Vec<f64>>,
    omega: Vec<f64>,
    nhat_x: usize,
    nhat_u: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineRepr {
    p: Vec<Vec<f64>>,
    omega: Vec<f64>,
    nhat_x: usize,
    nhat_u: usize,
}

impl TryFrom<AffineRepr> for AffineMap {
    type Error = Error;
    fn try_from(r: AffineRepr) -> Result<Self> {
        AffineMap::new(r.p, r.omega, r.nhat_x, r.nhat_u)
    }
}

impl From<AffineMap> for AffineRepr {
    fn from(m: AffineMap) -> Self {
        AffineRepr { p: m.p, omega: m.omega, nhat_x: m.nhat_x, nhat_u: m.nhat_u }
    }
}

impl AffineMap {
    pub fn new(p: Vec<Vec<f64>>, omega: Vec<f64>, nhat_x: usize, nhat_u: usize) -> Result<Self> {
        if p.len() != omega.len() {
            return Err(Error::DimensionMismatch { expected: p.len(), found: omega.len() });
        }
        for (row, r) in p.iter().enumerate() {
            if r.len() != nhat_x + nhat_u {
                return Err(Error::DimensionMismatch { expected: nhat_x + nhat_u, found: r.len() });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidAffineMap(format!("row {row} has non-finite entries")));
            }
            let count = r.iter().filter(|v| **v != 0.0).count();
            if count > 1 {
                return Err(Error::AffineRowRestriction { row, count });
            }
        }
        Ok(AffineMap { p, omega, nhat_x, nhat_u })
    }

    /// `π(x̂, û) = [x̂; û]`.
    pub fn identity_stacking(nhat_x: usize, nhat_u: usize) -> Self {
        let n = nhat_x + nhat_u;
        let p = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        AffineMap { p, omega: vec![0.0; n], nhat_x, nhat_u }
    }

    pub fn n_x(&self) -> usize {
        self.omega.len()
    }

    pub fn nhat_x(&self) -> usize {
        self.nhat_x
    }

    pub fn nhat_u(&self) -> usize {
        self.nhat_u
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn offset(&self) -> &[f64] {
        &self.omega
    }

    pub fn apply(&self, xhat: &[f64], uhat: &[f64]) -> Vec<f64> {
        self.p
            .iter()
            .zip(&self.omega)
            .map(|(row, o)| {
                let sx: f64 = row[..self.nhat_x].iter().zip(xhat).map(|(a, b)| a * b).sum();
                let su: f64 = row[self.nhat_x..].iter().zip(uhat).map(|(a, b)| a * b).sum();
                sx + su + o
            })
            .collect()
    }

    /// Columns of `P` acting on `û`, i.e. `∂π/∂û` (`n_x × n̂_u`).
    pub fn input_block(&self) -> Vec<Vec<f64>> {
        self.p.iter().map(|r| r[self.nhat_x..].to_vec()).collect()
    }

    /// Columns of `P` acting on `x̂`, i.e. `∂π/∂x̂` (`n_x × n̂_x`).
    pub fn state_block(&self) -> Vec<Vec<f64>> {
        self.p.iter().map(|r| r[..self.nhat_x].to_vec()).collect()
    }

    /// Interval image of a box of abstract states and inputs.
    pub fn image(&self, xhat: &IntervalBox, uhat: &IntervalBox) -> IntervalBox {
        let ivs: Vec<Interval> = self
            .p
            .iter()
            .zip(&self.omega)
            .map(|(row, o)| {
                let mut acc = Interval::point(*o);
                for (j, c) in row.iter().enumerate() {
                    if *c != 0.0 {
                        let z = if j < self.nhat_x { xhat.interval(j) } else { uhat.interval(j - self.nhat_x) };
                        acc = acc + z.scale(*c);
                    }
                }
                acc
            })
            .collect();
        IntervalBox::from_intervals(&ivs).expect("image of a box is a box")
    }
}

/// Preimage `{(x̂, û) | π(x̂, û) ∈ X}` as a pair of boxes, or `None` when empty.
///
/// Abstract coordinates not constrained by any row are unbounded.
pub fn preimage_pi(pi: &AffineMap, x: &IntervalBox, nhat_x: usize, nhat_u: usize) -> Result<Option<(IntervalBox, IntervalBox)>> {
    if x.dim() != pi.n_x() {
        return Err(Error::DimensionMismatch { expected: pi.n_x(), found: x.dim() });
    }
    if nhat_x != pi.nhat_x || nhat_u != pi.nhat_u {
        return Err(Error::DimensionMismatch { expected: pi.nhat_x + pi.nhat_u, found: nhat_x + nhat_u });
    }
    for (row, r) in pi.p.iter().enumerate() {
        let count = r.iter().filter(|v| **v != 0.0).count();
        if count > 1 {
            return Err(Error::AffineRowRestriction { row, count });
        }
    }
    let n = nhat_x + nhat_u;
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    for (i, row) in pi.p.iter().enumerate() {
        let (xl, xh, o) = (x.lo()[i], x.hi()[i], pi.omega[i]);
        match row.iter().position(|v| *v != 0.0) {
            None => {
                if !(xl <= o && o <= xh) {
                    return Ok(None);
                }
            }
            Some(j) => {
                let c = row[j];
                let (a, b) = ((xl - o) / c, (xh - o) / c);
                let (a, b) = if c > 0.0 { (a, b) } else { (b, a) };
                lo[j] = lo[j].max(a);
                hi[j] = hi[j].min(b);
                if lo[j] > hi[j] {
                    return Ok(None);
                }
            }
        }
    }
    let xb = IntervalBox::new(lo[..nhat_x].to_vec(), hi[..nhat_x].to_vec())?;
    let ub = IntervalBox::new(lo[nhat_x..].to_vec(), hi[nhat_x..].to_vec())?;
    Ok(Some((xb, ub)))
}
