//! Scalar intervals and axis-aligned boxes.
//!
//! Bounds are plain `f64` without directed rounding. Unbounded coordinates
//! use `±INFINITY`; an empty box is never represented by crossed bounds,
//! operations that can produce one return `None` instead.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` with `lo <= hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "crossed interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    /// Degenerate interval holding a single point.
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    /// Interval spanning two values given in any order.
    pub fn spanning(a: f64, b: f64) -> Self {
        Interval { lo: a.min(b), hi: a.max(b) }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        if self.lo.is_finite() && self.hi.is_finite() {
            0.5 * (self.lo + self.hi)
        } else if self.lo.is_finite() {
            self.lo
        } else if self.hi.is_finite() {
            self.hi
        } else {
            0.0
        }
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn is_nan(&self) -> bool {
        self.lo.is_nan() || self.hi.is_nan()
    }

    pub fn sqr(&self) -> Interval {
        if self.lo >= 0.0 {
            Interval { lo: self.lo * self.lo, hi: self.hi * self.hi }
        } else if self.hi <= 0.0 {
            Interval { lo: self.hi * self.hi, hi: self.lo * self.lo }
        } else {
            Interval { lo: 0.0, hi: (self.lo * self.lo).max(self.hi * self.hi) }
        }
    }

    pub fn powi(&self, n: u32) -> Interval {
        match n {
            0 => Interval::point(1.0),
            1 => *self,
            2 => self.sqr(),
            _ if n % 2 == 0 => self.sqr().powi(n / 2),
            _ => {
                // odd powers are monotone
                let p = n as i32;
                Interval { lo: self.lo.powi(p), hi: self.hi.powi(p) }
            }
        }
    }

    pub fn sin(&self) -> Interval {
        (*self - Interval::point(std::f64::consts::FRAC_PI_2)).cos()
    }

    pub fn cos(&self) -> Interval {
        use std::f64::consts::PI;
        if !self.is_finite() || self.width() >= 2.0 * PI {
            return Interval { lo: -1.0, hi: 1.0 };
        }
        let a = self.lo.cos();
        let b = self.hi.cos();
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        // maxima of cos at 2kπ, minima at (2k+1)π
        let k_max = (self.lo / (2.0 * PI)).ceil();
        if 2.0 * PI * k_max <= self.hi {
            hi = 1.0;
        }
        let k_min = ((self.lo - PI) / (2.0 * PI)).ceil();
        if 2.0 * PI * k_min + PI <= self.hi {
            lo = -1.0;
        }
        Interval { lo, hi }
    }

    /// Scales the interval by a real constant.
    pub fn scale(&self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval { lo: self.lo * c, hi: self.hi * c }
        } else {
            Interval { lo: self.hi * c, hi: self.lo * c }
        }
    }
}

fn mul_bound(a: f64, b: f64) -> f64 {
    // 0 * inf is taken as 0 for interval products
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval { lo: self.lo + rhs.lo, hi: self.hi + rhs.hi }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval { lo: self.lo - rhs.hi, hi: self.hi - rhs.lo }
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let p = [
            mul_bound(self.lo, rhs.lo),
            mul_bound(self.lo, rhs.hi),
            mul_bound(self.hi, rhs.lo),
            mul_bound(self.hi, rhs.hi),
        ];
        Interval {
            lo: p.iter().copied().fold(f64::INFINITY, f64::min),
            hi: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl Div for Interval {
    type Output = Interval;
    fn div(self, rhs: Interval) -> Interval {
        if rhs.contains(0.0) {
            return Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
        }
        self * Interval::new(1.0 / rhs.hi, 1.0 / rhs.lo)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Axis-aligned box `[lo, hi]` in `R^dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr", into = "BoxRepr")]
pub struct IntervalBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRepr {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<BoxRepr> for IntervalBox {
    type Error = Error;
    fn try_from(r: BoxRepr) -> Result<Self> {
        IntervalBox::new(r.lo, r.hi)
    }
}

impl From<IntervalBox> for BoxRepr {
    fn from(b: IntervalBox) -> Self {
        BoxRepr { lo: b.lo, hi: b.hi }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

impl IntervalBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::InvalidBox(format!("dimension {i}: [{l}, {h}]")));
            }
        }
        Ok(IntervalBox { lo, hi })
    }

    pub fn from_intervals(iv: &[Interval]) -> Result<Self> {
        Self::new(iv.iter().map(|i| i.lo).collect(), iv.iter().map(|i| i.hi).collect())
    }

    pub fn point(x: &[f64]) -> Result<Self> {
        Self::new(x.to_vec(), x.to_vec())
    }

    /// `[-r, r]` in every dimension.
    pub fn symmetric(r: &[f64]) -> Result<Self> {
        Self::new(r.iter().map(|v| -v).collect(), r.to_vec())
    }

    /// The whole space `R^dim`.
    pub fn unbounded(dim: usize) -> Self {
        IntervalBox { lo: vec![f64::NEG_INFINITY; dim], hi: vec![f64::INFINITY; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn interval(&self, i: usize) -> Interval {
        Interval { lo: self.lo[i], hi: self.hi[i] }
    }

    pub fn intervals(&self) -> Vec<Interval> {
        (0..self.dim()).map(|i| self.interval(i)).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.interval(i).mid()).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    /// Minkowski sum with `[-eps, eps]`.
    pub fn expand(&self, eps: &[f64]) -> Result<IntervalBox> {
        check_dim(self.dim(), eps.len())?;
        check_non_negative(eps)?;
        Ok(IntervalBox {
            lo: self.lo.iter().zip(eps).map(|(l, e)| l - e).collect(),
            hi: self.hi.iter().zip(eps).map(|(h, e)| h + e).collect(),
        })
    }

    /// Points `x` with `x + [-eps, eps]` inside the box; `None` when empty.
    pub fn shrink(&self, eps: &[f64]) -> Result<Option<IntervalBox>> {
        check_dim(self.dim(), eps.len())?;
        check_non_negative(eps)?;
        let lo: Vec<f64> = self.lo.iter().zip(eps).map(|(l, e)| l + e).collect();
        let hi: Vec<f64> = self.hi.iter().zip(eps).map(|(h, e)| h - e).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Ok(None);
        }
        Ok(Some(IntervalBox { lo, hi }))
    }

    /// Closed-box intersection test (shared faces count).
    pub fn intersects(&self, other: &IntervalBox) -> Result<bool> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.intersects_unchecked(other))
    }

    pub(crate) fn intersects_unchecked(&self, other: &IntervalBox) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &IntervalBox) -> Result<bool> {
        check_dim(self.dim(), other.dim())?;
        Ok((0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i]))
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| self.lo[i] <= *v && *v <= self.hi[i])
    }

    pub fn intersect(&self, other: &IntervalBox) -> Result<Option<IntervalBox>> {
        check_dim(self.dim(), other.dim())?;
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Ok(None);
        }
        Ok(Some(IntervalBox { lo, hi }))
    }

    pub fn hull(&self, other: &IntervalBox) -> Result<IntervalBox> {
        check_dim(self.dim(), other.dim())?;
        Ok(IntervalBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        })
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &IntervalBox) -> IntervalBox {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        IntervalBox { lo, hi }
    }

    /// Sub-box over the coordinate range `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> IntervalBox {
        IntervalBox { lo: self.lo[range.clone()].to_vec(), hi: self.hi[range].to_vec() }
    }

    /// Splits dimension `i` at its midpoint.
    pub fn bisect(&self, i: usize) -> (IntervalBox, IntervalBox) {
        let m = self.interval(i).mid();
        let mut a = self.clone();
        let mut b = self.clone();
        a.hi[i] = m;
        b.lo[i] = m;
        (a, b)
    }

    /// Returns a copy with dimension `i` replaced.
    pub fn with_interval(&self, i: usize, iv: Interval) -> IntervalBox {
        let mut b = self.clone();
        b.lo[i] = iv.lo;
        b.hi[i] = iv.hi;
        b
    }

    /// Translates the box by `offset`.
    pub fn translate(&self, offset: &[f64]) -> IntervalBox {
        IntervalBox {
            lo: self.lo.iter().zip(offset).map(|(l, o)| l + o).collect(),
            hi: self.hi.iter().zip(offset).map(|(h, o)| h + o).collect(),
        }
    }

    /// Corner selected by the bits of `mask` (bit i set → upper bound).
    pub fn corner(&self, mask: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }).collect()
    }
}

fn check_non_negative(eps: &[f64]) -> Result<()> {
    if eps.iter().all(|e| *e >= 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidBox(format!("negative expansion vector {eps:?}")))
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, "×")?;
            }
            write!(f, "{}", self.interval(i))?;
        }
        Ok(())
    }
}
