//! Univariate polynomials over exact rationals.
//!
//! This is the backbone of the exact integration path: kernel slices,
//! weights and boundary coefficient functions that happen to be polynomial
//! with rational coefficients are integrated through closed-form
//! antiderivatives here instead of quadrature, so constants such as the
//! kernel functional integrals are reproduced as exact rationals.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{ToPrimitive, Zero};

use crate::scalar::rat_to_f64;

/// Dense coefficients, lowest degree first, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    coeffs: Vec<BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Poly { coeffs: vec![c] };
        p.trim();
        p
    }

    pub fn x() -> Self {
        Poly {
            coeffs: vec![BigRational::zero(), BigRational::from_integer(BigInt::from(1))],
        }
    }

    pub fn from_coeffs(coeffs: Vec<BigRational>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(c) if c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn add(&self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let a = self.coeffs.get(k).cloned().unwrap_or_else(BigRational::zero);
            let b = rhs.coeffs.get(k).cloned().unwrap_or_else(BigRational::zero);
            out.push(a + b);
        }
        Poly::from_coeffs(out)
    }

    pub fn sub(&self, rhs: &Poly) -> Poly {
        self.add(&rhs.scale(&BigRational::from_integer(BigInt::from(-1))))
    }

    pub fn scale(&self, c: &BigRational) -> Poly {
        Poly::from_coeffs(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn mul(&self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::from_coeffs(out)
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut acc = Poly::constant(BigRational::from_integer(BigInt::from(1)));
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + rat_to_f64(c);
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        let out = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * BigRational::from_integer(BigInt::from(k)))
            .collect();
        Poly::from_coeffs(out)
    }

    pub fn antiderivative(&self) -> Poly {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(BigRational::zero());
        for (k, c) in self.coeffs.iter().enumerate() {
            out.push(c / BigRational::from_integer(BigInt::from(k as i64 + 1)));
        }
        Poly::from_coeffs(out)
    }

    /// Exact definite integral over [lo, hi].
    pub fn integrate(&self, lo: &BigRational, hi: &BigRational) -> BigRational {
        let anti = self.antiderivative();
        anti.eval(hi) - anti.eval(lo)
    }
}

/// A polynomial on each of finitely many abutting intervals.
#[derive(Clone, Debug)]
pub struct PiecewisePoly {
    /// (lo, hi, piece) with lo < hi, ascending, abutting is not required.
    pub pieces: Vec<(BigRational, BigRational, Poly)>,
}

impl PiecewisePoly {
    pub fn single(lo: BigRational, hi: BigRational, p: Poly) -> Self {
        PiecewisePoly {
            pieces: vec![(lo, hi, p)],
        }
    }

    /// Exact integral over [lo, hi]; None if [lo, hi] is not covered.
    pub fn integrate(&self, lo: &BigRational, hi: &BigRational) -> Option<BigRational> {
        if lo > hi {
            return None;
        }
        let mut total = BigRational::zero();
        let mut covered = lo.clone();
        for (plo, phi, poly) in &self.pieces {
            if phi <= &covered || plo >= hi {
                continue;
            }
            let seg_lo = if plo > &covered { plo.clone() } else { covered.clone() };
            let seg_hi = if phi < hi { phi.clone() } else { hi.clone() };
            if seg_lo > covered {
                return None; // gap
            }
            if seg_hi > seg_lo {
                total += poly.integrate(&seg_lo, &seg_hi);
                covered = seg_hi;
            }
        }
        if &covered >= hi {
            Some(total)
        } else {
            None
        }
    }

    /// Pointwise product with another piecewise polynomial, split at both
    /// breakpoint sets. Both operands must cover the requested span where
    /// it is used, so intersection of pieces is all that is needed.
    pub fn mul(&self, rhs: &PiecewisePoly) -> PiecewisePoly {
        let mut pieces = vec![];
        for (alo, ahi, ap) in &self.pieces {
            for (blo, bhi, bp) in &rhs.pieces {
                let lo = if alo > blo { alo } else { blo };
                let hi = if ahi < bhi { ahi } else { bhi };
                if lo < hi {
                    pieces.push((lo.clone(), hi.clone(), ap.mul(bp)));
                }
            }
        }
        pieces.sort_by(|x, y| x.0.cmp(&y.0));
        PiecewisePoly { pieces }
    }

    pub fn eval_f64(&self, x: f64) -> Option<f64> {
        for (lo, hi, p) in &self.pieces {
            if x >= lo.to_f64()? && x <= hi.to_f64()? {
                return Some(p.eval_f64(x));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn int(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    #[test]
    fn arithmetic_and_eval() {
        // (1 - x)(1 + x) = 1 - x^2
        let one_minus = Poly::from_coeffs(vec![int(1), int(-1)]);
        let one_plus = Poly::from_coeffs(vec![int(1), int(1)]);
        let prod = one_minus.mul(&one_plus);
        assert_eq!(prod.coeffs(), &[int(1), int(0), int(-1)]);
        assert_eq!(prod.eval(&rat(1, 2)), rat(3, 4));
        assert_eq!(prod.eval_f64(0.5), 0.75);
    }

    #[test]
    fn integral_of_x_squared() {
        let p = Poly::x().mul(&Poly::x());
        assert_eq!(p.integrate(&int(0), &int(1)), rat(1, 3));
        assert_eq!(p.integrate(&rat(1, 4), &rat(3, 4)), rat(13, 96));
    }

    #[test]
    fn piecewise_integration_spans_breaks() {
        // |x - 1/2| on [0,1] via two linear pieces; integral = 1/4.
        let left = Poly::from_coeffs(vec![rat(1, 2), int(-1)]);
        let right = Poly::from_coeffs(vec![rat(-1, 2), int(1)]);
        let pp = PiecewisePoly {
            pieces: vec![
                (int(0), rat(1, 2), left),
                (rat(1, 2), int(1), right),
            ],
        };
        assert_eq!(pp.integrate(&int(0), &int(1)), Some(rat(1, 4)));
        assert_eq!(pp.integrate(&rat(1, 4), &rat(3, 4)), Some(rat(1, 16)));
        assert_eq!(pp.integrate(&int(0), &int(2)), None);
    }

    #[test]
    fn piecewise_product_splits_at_both_grids() {
        let pp1 = PiecewisePoly::single(int(0), int(1), Poly::x());
        let step = PiecewisePoly {
            pieces: vec![
                (int(0), rat(1, 3), Poly::constant(int(2))),
                (rat(1, 3), int(1), Poly::constant(int(1))),
            ],
        };
        let prod = pp1.mul(&step);
        assert_eq!(prod.pieces.len(), 2);
        // ∫0^1 = 2·(1/18) + (1 - 1/9)/2 = 1/9 + 4/9 = 5/9
        assert_eq!(prod.integrate(&int(0), &int(1)), Some(rat(5, 9)));
    }

    #[test]
    fn antiderivative_roundtrip() {
        let p = Poly::from_coeffs(vec![int(3), rat(-1, 2), int(6)]);
        assert_eq!(p.antiderivative().derivative(), p);
    }
}
