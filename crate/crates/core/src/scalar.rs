//! Scalar abstraction shared by point, interval and first-order
//! (gradient-carrying) evaluation of the same model code.

use std::ops::{Add, Mul, Neg, Sub};

use crate::interval::Interval;

pub trait Scalar: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> {
    fn cst(c: f64) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;

    fn powi(&self, n: u32) -> Self {
        let mut acc = Self::cst(1.0);
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }

    fn scale(&self, c: f64) -> Self {
        self.clone() * Self::cst(c)
    }
}

impl Scalar for f64 {
    fn cst(c: f64) -> Self {
        c
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn powi(&self, n: u32) -> Self {
        f64::powi(*self, n as i32)
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
}

impl Scalar for Interval {
    fn cst(c: f64) -> Self {
        Interval::point(c)
    }
    fn sin(&self) -> Self {
        Interval::sin(self)
    }
    fn cos(&self) -> Self {
        Interval::cos(self)
    }
    fn powi(&self, n: u32) -> Self {
        Interval::powi(self, n)
    }
    fn scale(&self, c: f64) -> Self {
        Interval::scale(self, c)
    }
}

/// Interval value together with interval enclosures of its partial
/// derivatives with respect to a fixed set of seed variables.
#[derive(Clone, Debug)]
pub struct Dual {
    pub v: Interval,
    pub g: Vec<Interval>,
}

impl Dual {
    /// Seed variable `index` of `n` with value range `v`.
    pub fn var(v: Interval, index: usize, n: usize) -> Dual {
        let mut g = vec![Interval::point(0.0); n];
        g[index] = Interval::point(1.0);
        Dual { v, g }
    }

    fn zip(a: &[Interval], b: &[Interval], f: impl Fn(Interval, Interval) -> Interval) -> Vec<Interval> {
        if a.is_empty() {
            return b.to_vec();
        }
        if b.is_empty() {
            return a.to_vec();
        }
        a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
    }
}

// Constants carry an empty gradient, which `zip` treats as all zeros.
impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual { v: self.v + rhs.v, g: Dual::zip(&self.g, &rhs.g, |a, b| a + b) }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        let g = if self.g.is_empty() {
            rhs.g.iter().map(|x| -*x).collect()
        } else {
            Dual::zip(&self.g, &rhs.g, |a, b| a - b)
        };
        Dual { v: self.v - rhs.v, g }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, g: self.g.into_iter().map(|x| -x).collect() }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let g = match (self.g.is_empty(), rhs.g.is_empty()) {
            (true, true) => Vec::new(),
            (true, false) => rhs.g.iter().map(|d| self.v * *d).collect(),
            (false, true) => self.g.iter().map(|d| rhs.v * *d).collect(),
            (false, false) => self.g.iter().zip(&rhs.g).map(|(a, b)| rhs.v * *a + self.v * *b).collect(),
        };
        Dual { v: self.v * rhs.v, g }
    }
}

impl Scalar for Dual {
    fn cst(c: f64) -> Self {
        Dual { v: Interval::point(c), g: Vec::new() }
    }
    fn sin(&self) -> Self {
        let d = self.v.cos();
        Dual { v: self.v.sin(), g: self.g.iter().map(|x| d * *x).collect() }
    }
    fn cos(&self) -> Self {
        let d = -self.v.sin();
        Dual { v: self.v.cos(), g: self.g.iter().map(|x| d * *x).collect() }
    }
    fn powi(&self, n: u32) -> Self {
        if n == 0 {
            return Dual::cst(1.0);
        }
        let d = self.v.powi(n - 1).scale(n as f64);
        Dual { v: self.v.powi(n), g: self.g.iter().map(|x| d * *x).collect() }
    }
    fn scale(&self, c: f64) -> Self {
        Dual { v: self.v.scale(c), g: self.g.iter().map(|x| x.scale(c)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly<S: Scalar>(x: &S, y: &S) -> S {
        x.powi(2) * y.clone() + x.sin().scale(3.0) - y.cos()
    }

    #[test]
    fn dual_gradient_matches_analytic_at_a_point() {
        let (x0, y0) = (0.7, -1.3);
        let x = Dual::var(Interval::point(x0), 0, 2);
        let y = Dual::var(Interval::point(y0), 1, 2);
        let r = poly(&x, &y);
        let dx = 2.0 * x0 * y0 + 3.0 * x0.cos();
        let dy = x0 * x0 + y0.sin();
        assert!((r.g[0].mid() - dx).abs() < 1e-12);
        assert!((r.g[1].mid() - dy).abs() < 1e-12);
        assert!((r.v.mid() - poly(&x0, &y0)).abs() < 1e-12);
    }

    #[test]
    fn dual_over_box_encloses_sampled_gradients() {
        let xi = Interval::new(0.2, 0.9);
        let yi = Interval::new(-1.5, -0.5);
        let r = poly(&Dual::var(xi, 0, 2), &Dual::var(yi, 1, 2));
        for k in 0..50 {
            let s = k as f64 / 49.0;
            let x0 = xi.lo + s * xi.width();
            let y0 = yi.hi - s * yi.width();
            assert!(r.g[0].contains(2.0 * x0 * y0 + 3.0 * x0.cos()));
            assert!(r.g[1].contains(x0 * x0 + y0.sin()));
            assert!(r.v.contains(poly(&x0, &y0)));
        }
    }
}
