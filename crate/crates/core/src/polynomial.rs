//! Vector-valued multivariate polynomials over the variable groups
//! `(t, e, x̂, û, w, ŵ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of variables in each group; the flat variable vector is the
/// concatenation `[t, e, x̂, û, w, ŵ]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arities {
    pub t: usize,
    pub e: usize,
    pub xhat: usize,
    pub uhat: usize,
    pub w: usize,
    pub what: usize,
}

impl Arities {
    pub fn total(&self) -> usize {
        self.t + self.e + self.xhat + self.uhat + self.w + self.what
    }

    pub fn e_offset(&self) -> usize {
        self.t
    }

    pub fn xhat_offset(&self) -> usize {
        self.t + self.e
    }

    pub fn uhat_offset(&self) -> usize {
        self.t + self.e + self.xhat
    }

    pub fn w_offset(&self) -> usize {
        self.uhat_offset() + self.uhat
    }

    pub fn what_offset(&self) -> usize {
        self.w_offset() + self.w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct PolynomialMap {
    arities: Arities,
    outputs: Vec<Vec<Monomial>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyRepr {
    arities: Arities,
    output_dim: usize,
    terms: Vec<TermRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRepr {
    out: usize,
    coeff: f64,
    exps: Vec<u32>,
}

impl TryFrom<PolyRepr> for PolynomialMap {
    type Error = Error;
    fn try_from(r: PolyRepr) -> Result<Self> {
        let mut outputs = vec![Vec::new(); r.output_dim];
        for t in r.terms {
            if t.out >= r.output_dim {
                return Err(Error::Format(format!("term output {} exceeds output dimension {}", t.out, r.output_dim)));
            }
            outputs[t.out].push(Monomial { coeff: t.coeff, exps: t.exps });
        }
        PolynomialMap::new(r.arities, outputs)
    }
}

impl From<PolynomialMap> for PolyRepr {
    fn from(p: PolynomialMap) -> Self {
        let output_dim = p.outputs.len();
        let terms = p
            .outputs
            .into_iter()
            .enumerate()
            .flat_map(|(out, ms)| ms.into_iter().map(move |m| TermRepr { out, coeff: m.coeff, exps: m.exps }))
            .collect();
        PolyRepr { arities: p.arities, output_dim, terms }
    }
}

impl PolynomialMap {
    pub fn new(arities: Arities, outputs: Vec<Vec<Monomial>>) -> Result<Self> {
        let n = arities.total();
        for m in outputs.iter().flatten() {
            if m.exps.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: m.exps.len() });
            }
            if !m.coeff.is_finite() {
                return Err(Error::Format("non-finite polynomial coefficient".into()));
            }
        }
        Ok(PolynomialMap { arities, outputs })
    }

    pub fn zero(arities: Arities, output_dim: usize) -> Self {
        PolynomialMap { arities, outputs: vec![Vec::new(); output_dim] }
    }

    pub fn arities(&self) -> &Arities {
        &self.arities
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn terms(&self, out: usize) -> &[Monomial] {
        &self.outputs[out]
    }

    pub fn degree(&self) -> u32 {
        self.outputs.iter().flatten().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, out: usize, coeff: f64, exps: Vec<u32>) {
        assert_eq!(exps.len(), self.arities.total(), "exponent vector length");
        if coeff != 0.0 {
            self.outputs[out].push(Monomial { coeff, exps });
        }
    }

    /// `eᵀ Q e + β t + c` as a scalar polynomial.
    pub fn quadratic(arities: Arities, q: &[Vec<f64>], beta: f64, c: f64) -> Self {
        let n = arities.total();
        let off = arities.e_offset();
        let mut p = PolynomialMap::zero(arities, 1);
        for i in 0..arities.e {
            for j in i..arities.e {
                let coeff = if i == j { q[i][i] } else { q[i][j] + q[j][i] };
                let mut exps = vec![0; n];
                exps[off + i] += 1;
                exps[off + j] += 1;
                p.add_term(0, coeff, exps);
            }
        }
        if arities.t > 0 {
            let mut exps = vec![0; n];
            exps[0] = 1;
            p.add_term(0, beta, exps);
        }
        p.add_term(0, c, vec![0; n]);
        p
    }

    /// `K e` with `K` of shape `output_dim × n_e`.
    pub fn linear_in_e(arities: Arities, k: &[Vec<f64>]) -> Self {
        let n = arities.total();
        let off = arities.e_offset();
        let mut p = PolynomialMap::zero(arities, k.len());
        for (i, row) in k.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                let mut exps = vec![0; n];
                exps[off + j] = 1;
                p.add_term(i, *c, exps);
            }
        }
        p
    }

    /// Re-indexes a polynomial onto larger arities; each group must grow
    /// only at its end (or stay the same).
    pub fn embed(&self, target: Arities) -> Result<Self> {
        let a = self.arities;
        let pairs = [
            (a.t, target.t, 0, 0),
            (a.e, target.e, a.e_offset(), target.e_offset()),
            (a.xhat, target.xhat, a.xhat_offset(), target.xhat_offset()),
            (a.uhat, target.uhat, a.uhat_offset(), target.uhat_offset()),
            (a.w, target.w, a.w_offset(), target.w_offset()),
            (a.what, target.what, a.what_offset(), target.what_offset()),
        ];
        let mut outputs = vec![Vec::new(); self.outputs.len()];
        for (o, ms) in self.outputs.iter().enumerate() {
            for m in ms {
                let mut exps = vec![0; target.total()];
                for &(from, to, src, dst) in &pairs {
                    for k in 0..from {
                        if m.exps[src + k] != 0 {
                            if k >= to {
                                return Err(Error::DimensionMismatch { expected: to, found: from });
                            }
                            exps[dst + k] = m.exps[src + k];
                        }
                    }
                }
                outputs[o].push(Monomial { coeff: m.coeff, exps });
            }
        }
        PolynomialMap::new(target, outputs)
    }

    /// Output-wise sum; arities and output dimensions must agree.
    pub fn plus(&self, other: &PolynomialMap) -> Result<Self> {
        if self.arities != other.arities || self.outputs.len() != other.outputs.len() {
            return Err(Error::Format("polynomial shapes differ".into()));
        }
        let outputs = self.outputs.iter().zip(&other.outputs).map(|(a, b)| a.iter().chain(b).cloned().collect()).collect();
        Ok(PolynomialMap { arities: self.arities, outputs })
    }

    /// Exact partial derivative with respect to flat variable `var`.
    pub fn partial(&self, var: usize) -> PolynomialMap {
        let outputs = self
            .outputs
            .iter()
            .map(|ms| {
                ms.iter()
                    .filter(|m| m.exps[var] > 0)
                    .map(|m| {
                        let mut exps = m.exps.clone();
                        exps[var] -= 1;
                        Monomial { coeff: m.coeff * m.exps[var] as f64, exps }
                    })
                    .collect()
            })
            .collect();
        PolynomialMap { arities: self.arities, outputs }
    }

    pub fn eval<S: Scalar>(&self, vars: &[S]) -> Vec<S> {
        self.outputs.iter().map(|ms| eval_terms(ms, vars)).collect()
    }

    pub fn eval_scalar<S: Scalar>(&self, vars: &[S]) -> S {
        eval_terms(&self.outputs[0], vars)
    }
}

fn eval_terms<S: Scalar>(ms: &[Monomial], vars: &[S]) -> S {
    let mut acc = S::cst(0.0);
    for m in ms {
        let mut term: Option<S> = None;
        for (i, &k) in m.exps.iter().enumerate() {
            if k > 0 {
                let f = vars[i].powi(k);
                term = Some(match term {
                    None => f,
                    Some(t) => t * f,
                });
            }
        }
        acc = acc
            + match term {
                None => S::cst(m.coeff),
                Some(t) => t.scale(m.coeff),
            };
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Interval;

    fn ar(e: usize) -> Arities {
        Arities { t: 1, e, xhat: 0, uhat: 0, w: 0, what: 0 }
    }

    #[test]
    fn quadratic_matches_matrix_form() {
        let q = vec![vec![4.0, 1.0], vec![1.0, 2.0]];
        let v = PolynomialMap::quadratic(ar(2), &q, 0.5, 0.25);
        let (t, e1, e2) = (0.3, -0.7, 1.1);
        let expected = 4.0 * e1 * e1 + 2.0 * e1 * e2 + 2.0 * e2 * e2 + 0.5 * t + 0.25;
        assert!((v.eval_scalar(&[t, e1, e2]) - expected).abs() < 1e-14);
        assert_eq!(v.degree(), 2);
    }

    #[test]
    fn partial_derivatives() {
        let q = vec![vec![4.0, 1.0], vec![1.0, 2.0]];
        let v = PolynomialMap::quadratic(ar(2), &q, 0.5, 0.0);
        let d1 = v.partial(1);
        let d0 = v.partial(0);
        assert!((d1.eval_scalar(&[0.0, 1.0, 2.0]) - (8.0 + 2.0 * 2.0)).abs() < 1e-14);
        assert!((d0.eval_scalar(&[9.0, 1.0, 2.0]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn interval_evaluation_encloses_points() {
        let v = PolynomialMap::quadratic(ar(2), &[vec![1.0, -0.5], vec![-0.5, 3.0]], 0.0, 0.0);
        let b = [Interval::point(0.0), Interval::new(-1.0, 0.5), Interval::new(0.2, 0.9)];
        let r = v.eval_scalar(&b);
        for i in 0..=10 {
            for j in 0..=10 {
                let e1 = -1.0 + 1.5 * i as f64 / 10.0;
                let e2 = 0.2 + 0.7 * j as f64 / 10.0;
                assert!(r.contains(v.eval_scalar(&[0.0, e1, e2])));
            }
        }
    }

    #[test]
    fn toml_roundtrip_is_exact() {
        let k = vec![vec![-1.234_567_890_123_456_7, 0.1], vec![3.0e-17, -2.5]];
        let p = PolynomialMap::linear_in_e(ar(2), &k);
        let s = toml::to_string(&p).unwrap();
        let back: PolynomialMap = toml::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn embed_moves_groups() {
        let small = Arities { t: 0, e: 0, xhat: 0, uhat: 1, w: 0, what: 0 };
        let mut p = PolynomialMap::zero(small, 1);
        p.add_term(0, 2.0, vec![2]);
        let big = Arities { t: 1, e: 2, xhat: 1, uhat: 1, w: 0, what: 0 };
        let q = p.embed(big).unwrap();
        assert_eq!(q.eval_scalar(&[0.0, 0.0, 0.0, 0.0, 3.0]), 18.0);
    }
}
