//! Integral kernels split along the diagonal, their upper envelopes Φ and
//! cone coefficients c(t).
//!
//! Each kernel satisfies 0 ≤ k(t,s) ≤ Φ(s) and k(t,s) ≥ c(t)·Φ(s) on the
//! unit square; the infimum of c over the cone window [a, b] is the kernel
//! contribution to the cone constant. Two classical kernels are built in:
//!
//! * `SecondOrderDirichlet`: k(t,s) = s(1-t) for s ≤ t, t(1-s) above,
//!   with Φ(s) = s(1-s) and c(t) = min(t, 1-t);
//! * `FourthOrderBeam`: the clamped-sliding beam kernel
//!   k(t,s) = (1/6)s(1-t)(2t-s²-t²) for s ≤ t, (1/6)t(1-s)(2s-t²-s²) above,
//!   whose envelope and cone coefficient are irrational but piecewise
//!   polynomial up to one scalar factor.
//!
//! Custom kernels supply the two halves, Φ, and c as expressions; their
//! claimed bounds are then spot-checked during problem validation.
//!
//! For exact rational t the slice k(t, ·) of every built-in (and of any
//! polynomial custom kernel) is exposed as a piecewise polynomial, which is
//! what keeps the downstream kernel functionals on the exact track.

use num::rational::BigRational;
use num::{BigInt, One, Zero};

use crate::expr::{EvalError, Expression};
use crate::poly::{PiecewisePoly, Poly};
use crate::quadrature::{minimize, snap_rational, Extremum};
use crate::scalar::{rat_to_f64, Scalar};

#[derive(Clone, Debug)]
pub enum Kernel {
    SecondOrderDirichlet,
    FourthOrderBeam,
    Custom(Box<CustomKernel>),
}

/// User-supplied kernel: `below`/`above` are the s ≤ t and s ≥ t halves
/// over variables (t, s); `phi` is Φ(s); `cone` is c(t).
#[derive(Clone, Debug)]
pub struct CustomKernel {
    pub below: Expression,
    pub above: Expression,
    pub phi: Expression,
    pub cone: Expression,
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::SecondOrderDirichlet => "second_order_dirichlet",
            Kernel::FourthOrderBeam => "fourth_order_beam",
            Kernel::Custom(_) => "custom",
        }
    }

    pub fn eval(&self, t: f64, s: f64) -> Result<f64, EvalError> {
        match self {
            Kernel::SecondOrderDirichlet => Ok(if s <= t { s * (1.0 - t) } else { t * (1.0 - s) }),
            Kernel::FourthOrderBeam => Ok(if s <= t {
                s * (1.0 - t) * (2.0 * t - s * s - t * t) / 6.0
            } else {
                t * (1.0 - s) * (2.0 * s - t * t - s * s) / 6.0
            }),
            Kernel::Custom(c) => {
                if s <= t {
                    c.below.eval(&[t, s])
                } else {
                    c.above.eval(&[t, s])
                }
            }
        }
    }

    pub fn eval_scalar(&self, t: &Scalar, s: &Scalar) -> Result<Scalar, EvalError> {
        let below = s.cmp_val(t) != std::cmp::Ordering::Greater;
        match self {
            Kernel::SecondOrderDirichlet => {
                let one = Scalar::one();
                Ok(if below {
                    s.mul(&one.sub(t))
                } else {
                    t.mul(&one.sub(s))
                })
            }
            Kernel::FourthOrderBeam => {
                let sixth = Scalar::ratio(1, 6);
                let two = Scalar::from_int(2);
                let one = Scalar::one();
                Ok(if below {
                    // s(1-t)(2t - s² - t²)/6
                    let inner = two.mul(t).sub(&s.mul(s)).sub(&t.mul(t));
                    sixth.mul(s).mul(&one.sub(t)).mul(&inner)
                } else {
                    let inner = two.mul(s).sub(&t.mul(t)).sub(&s.mul(s));
                    sixth.mul(t).mul(&one.sub(s)).mul(&inner)
                })
            }
            Kernel::Custom(c) => {
                let binds = [t.clone(), s.clone()];
                if below {
                    c.below.eval_scalar(&binds)
                } else {
                    c.above.eval_scalar(&binds)
                }
            }
        }
    }

    /// The slice k(t, ·) on [0, 1] as a piecewise polynomial in s.
    pub fn poly_in_s(&self, t: &BigRational) -> Option<PiecewisePoly> {
        let zero = BigRational::zero();
        let one = BigRational::one();
        if t < &zero || t > &one {
            return None;
        }
        let (below, above) = match self {
            Kernel::SecondOrderDirichlet => {
                // s(1-t) and t(1-s)
                let below = Poly::from_coeffs(vec![zero.clone(), &one - t]);
                let above = Poly::from_coeffs(vec![t.clone(), -t.clone()]);
                (Some(below), Some(above))
            }
            Kernel::FourthOrderBeam => {
                let sixth = BigRational::new(BigInt::from(1), BigInt::from(6));
                let two_t = t + t;
                // (1-t)/6 · ((2t - t²)s - s³)
                let below = Poly::from_coeffs(vec![
                    zero.clone(),
                    &two_t - &(t * t),
                    zero.clone(),
                    -one.clone(),
                ])
                .scale(&(&sixth * &(&one - t)));
                // t/6 · (1-s)(2s - t² - s²)
                let above = Poly::from_coeffs(vec![one.clone(), -one.clone()])
                    .mul(&Poly::from_coeffs(vec![
                        -(t * t),
                        &one + &one,
                        -one.clone(),
                    ]))
                    .scale(&(&sixth * t));
                (Some(below), Some(above))
            }
            Kernel::Custom(c) => (
                c.below.as_poly_in(1, &[(0, t.clone())]),
                c.above.as_poly_in(1, &[(0, t.clone())]),
            ),
        };
        let mut pieces = vec![];
        if t > &zero {
            pieces.push((zero.clone(), t.clone(), below?));
        }
        if t < &one {
            pieces.push((t.clone(), one, above?));
        }
        Some(PiecewisePoly { pieces })
    }

    /// Abscissae where the slice k(t, ·) may kink.
    pub fn s_breakpoints(&self, t: f64) -> Vec<f64> {
        vec![t]
    }

    /// Interior breakpoints of t ↦ c(t) (and of t ↦ k(t, s) envelopes).
    pub fn t_breakpoints(&self) -> Vec<BigRational> {
        match self {
            Kernel::SecondOrderDirichlet => {
                vec![BigRational::new(BigInt::from(1), BigInt::from(2))]
            }
            Kernel::FourthOrderBeam => {
                vec![BigRational::new(BigInt::from(1), BigInt::from(2))]
            }
            Kernel::Custom(c) => c.cone.breakpoints(),
        }
    }

    /// Upper envelope Φ(s).
    pub fn phi(&self, s: f64) -> Result<f64, EvalError> {
        match self {
            Kernel::SecondOrderDirichlet => Ok(s * (1.0 - s)),
            Kernel::FourthOrderBeam => Ok(if s <= 0.5 {
                SQRT3 / 27.0 * s * (1.0 - s * s).powf(1.5)
            } else {
                SQRT3 / 27.0 * (1.0 - s) * (s * (2.0 - s)).powf(1.5)
            }),
            Kernel::Custom(c) => c.phi.eval(&[s]),
        }
    }

    /// Cone coefficient c(t).
    pub fn c_eval(&self, t: f64) -> Result<f64, EvalError> {
        match self {
            Kernel::SecondOrderDirichlet => Ok(t.min(1.0 - t)),
            Kernel::FourthOrderBeam => Ok(if t <= 0.5 {
                1.5 * SQRT3 * t * (1.0 - t * t)
            } else {
                1.5 * SQRT3 * t * (1.0 - t) * (2.0 - t)
            }),
            Kernel::Custom(c) => c.cone.eval(&[t]),
        }
    }

    /// inf over [a, b] of c(t), on the exact track where the minimizer can
    /// be pinned to a rational point.
    pub fn c_inf_on(&self, a: &BigRational, b: &BigRational) -> Result<Scalar, EvalError> {
        match self {
            Kernel::SecondOrderDirichlet => {
                // min(t, 1-t) is concave, so the inf sits at an endpoint
                let at_a = Scalar::Exact(a.clone()).min(&Scalar::Exact(&BigRational::one() - a));
                let at_b = Scalar::Exact(b.clone()).min(&Scalar::Exact(&BigRational::one() - b));
                Ok(at_a.min(&at_b))
            }
            Kernel::FourthOrderBeam => {
                // c(t) = (3√3/2)·p(t) with p piecewise polynomial; minimize
                // p, snap the minimizer, keep the scalar factor aside
                let p = |t: f64| {
                    Ok(if t <= 0.5 {
                        t * (1.0 - t * t)
                    } else {
                        t * (1.0 - t) * (2.0 - t)
                    })
                };
                let lo = rat_to_f64(a);
                let hi = rat_to_f64(b);
                let m = minimize(p, lo, hi, &[0.5])?;
                let candidates = [a.clone(), b.clone(), half()];
                let exact_min = snap_rational(m.arg, &candidates, 128, 1e-5)
                    .map(|arg| {
                        let pp = if arg <= half() {
                            Poly::from_coeffs(vec![
                                zero_r(),
                                BigRational::one(),
                                zero_r(),
                                -BigRational::one(),
                            ])
                        } else {
                            // t(1-t)(2-t) = 2t - 3t² + t³
                            Poly::from_coeffs(vec![
                                zero_r(),
                                BigRational::from_integer(BigInt::from(2)),
                                BigRational::from_integer(BigInt::from(-3)),
                                BigRational::one(),
                            ])
                        };
                        pp.eval(&arg)
                    })
                    // a snapped minimizer must reproduce the sampled minimum
                    .filter(|v| (rat_to_f64(v) - m.value).abs() <= 1e-9 * (1.0 + m.value.abs()));
                let base = match exact_min {
                    Some(v) => rat_to_f64(&v),
                    None => m.value,
                };
                Ok(Scalar::Float(1.5 * SQRT3 * base))
            }
            Kernel::Custom(c) => {
                let lo = rat_to_f64(a);
                let hi = rat_to_f64(b);
                let breaks: Vec<f64> = c.cone.breakpoints().iter().map(rat_to_f64).collect();
                let m: Extremum = minimize(|t| c.cone.eval(&[t]), lo, hi, &breaks)?;
                let mut candidates = vec![a.clone(), b.clone()];
                candidates.extend(c.cone.breakpoints());
                if let Some(arg) = snap_rational(m.arg, &candidates, 128, 1e-5) {
                    let v = c.cone.eval_scalar(&[Scalar::Exact(arg)])?;
                    if (v.to_f64() - m.value).abs() <= 1e-9 * (1.0 + m.value.abs()) {
                        return Ok(v);
                    }
                }
                Ok(Scalar::Float(m.value))
            }
        }
    }

    /// Spot-checks 0 ≤ k ≤ Φ and k ≥ c·Φ on a sample grid; returns
    /// human-readable violations. A clean pass is evidence, not proof.
    pub fn check_bounds(&self, grid: usize) -> Result<Vec<String>, EvalError> {
        let mut out = vec![];
        let tol = 1e-9;
        for i in 0..=grid {
            let t = i as f64 / grid as f64;
            let c = self.c_eval(t)?;
            if !(-tol..=1.0 + tol).contains(&c) {
                out.push(format!("cone coefficient c({t}) = {c} is outside [0, 1]"));
            }
            for j in 0..=grid {
                let s = j as f64 / grid as f64;
                let k = self.eval(t, s)?;
                let phi = self.phi(s)?;
                if k < -tol {
                    out.push(format!("kernel is negative at (t, s) = ({t}, {s}): {k}"));
                } else if k > phi + tol {
                    out.push(format!(
                        "kernel exceeds its envelope at (t, s) = ({t}, {s}): {k} > {phi}"
                    ));
                } else if k + tol < c * phi {
                    out.push(format!(
                        "cone bound fails at (t, s) = ({t}, {s}): {k} < {} = c(t)·Φ(s)",
                        c * phi
                    ));
                }
                if out.len() > 8 {
                    return Ok(out);
                }
            }
        }
        Ok(out)
    }
}

fn half() -> BigRational {
    BigRational::new(BigInt::from(1), BigInt::from(2))
}

fn zero_r() -> BigRational {
    BigRational::zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn halves_agree_on_the_diagonal() {
        for kernel in [Kernel::SecondOrderDirichlet, Kernel::FourthOrderBeam] {
            for t in [0.0, 0.3, 0.5, 0.77, 1.0] {
                let below = kernel.eval(t, t - 1e-12).unwrap();
                let above = kernel.eval(t, t + 1e-12).unwrap();
                assert!((below - above).abs() < 1e-10, "{} at {t}", kernel.name());
            }
        }
    }

    #[test]
    fn second_order_point_values() {
        let k = Kernel::SecondOrderDirichlet;
        assert_eq!(k.eval(0.25, 0.5).unwrap(), 0.25 * 0.5);
        assert_eq!(k.eval(0.5, 0.25).unwrap(), 0.25 * 0.5);
        let v = k
            .eval_scalar(&Scalar::ratio(1, 4), &Scalar::ratio(1, 2))
            .unwrap();
        assert_eq!(v.as_exact(), Some(&rat(1, 8)));
    }

    #[test]
    fn slice_integrals_are_exact() {
        // ∫₀¹ k(t,s) ds = t(1-t)/2 for the second-order kernel
        let k = Kernel::SecondOrderDirichlet;
        let pp = k.poly_in_s(&rat(1, 4)).unwrap();
        assert_eq!(pp.integrate(&rat(0, 1), &rat(1, 1)), Some(rat(3, 32)));
        assert_eq!(pp.integrate(&rat(1, 4), &rat(3, 4)), Some(rat(1, 16)));

        // ∫₀¹ k(t,s) ds = t⁴/24 - t³/12 + t/24 for the beam kernel
        let k = Kernel::FourthOrderBeam;
        let pp = k.poly_in_s(&rat(1, 2)).unwrap();
        assert_eq!(pp.integrate(&rat(0, 1), &rat(1, 1)), Some(rat(5, 384)));
        let pp = k.poly_in_s(&rat(1, 4)).unwrap();
        let expect = rat(1, 4 * 4 * 4 * 4 * 24) - rat(1, 4 * 4 * 4 * 12) + rat(1, 4 * 24);
        assert_eq!(pp.integrate(&rat(0, 1), &rat(1, 1)), Some(expect));
    }

    #[test]
    fn slice_at_domain_corners_is_single_piece() {
        let k = Kernel::SecondOrderDirichlet;
        assert_eq!(k.poly_in_s(&rat(0, 1)).unwrap().pieces.len(), 1);
        assert_eq!(k.poly_in_s(&rat(1, 1)).unwrap().pieces.len(), 1);
    }

    #[test]
    fn cone_infimum_second_order_is_exact() {
        let k = Kernel::SecondOrderDirichlet;
        let c = k.c_inf_on(&rat(1, 4), &rat(3, 4)).unwrap();
        assert_eq!(c.as_exact(), Some(&rat(1, 4)));
        let c = k.c_inf_on(&rat(1, 3), &rat(1, 2)).unwrap();
        assert_eq!(c.as_exact(), Some(&rat(1, 3)));
    }

    #[test]
    fn cone_infimum_beam_hits_the_endpoint_value() {
        // inf over [1/4, 3/4] is attained at both endpoints: (3√3/2)·(15/64)
        let k = Kernel::FourthOrderBeam;
        let c = k.c_inf_on(&rat(1, 4), &rat(3, 4)).unwrap();
        let expect = 45.0 * 3.0_f64.sqrt() / 128.0;
        assert!((c.to_f64() - expect).abs() < 1e-14, "{}", c.to_f64());
    }

    #[test]
    fn builtin_bounds_hold_on_a_grid() {
        for kernel in [Kernel::SecondOrderDirichlet, Kernel::FourthOrderBeam] {
            let violations = kernel.check_bounds(64).unwrap();
            assert!(violations.is_empty(), "{:?}", violations);
        }
    }

    #[test]
    fn custom_kernel_mirrors_builtin() {
        let c = CustomKernel {
            below: Expression::parse("s*(1 - t)", &["t", "s"]).unwrap(),
            above: Expression::parse("t*(1 - s)", &["t", "s"]).unwrap(),
            phi: Expression::parse("s*(1 - s)", &["s"]).unwrap(),
            cone: Expression::parse("min(t, 1 - t)", &["t"]).unwrap(),
        };
        let k = Kernel::Custom(Box::new(c));
        let b = Kernel::SecondOrderDirichlet;
        for (t, s) in [(0.2, 0.7), (0.7, 0.2), (0.5, 0.5)] {
            assert_eq!(k.eval(t, s).unwrap(), b.eval(t, s).unwrap());
        }
        let pp = k.poly_in_s(&rat(1, 4)).unwrap();
        assert_eq!(pp.integrate(&rat(0, 1), &rat(1, 1)), Some(rat(3, 32)));
        let inf = k.c_inf_on(&rat(1, 4), &rat(3, 4)).unwrap();
        assert_eq!(inf.as_exact(), Some(&rat(1, 4)));
        assert!(k.check_bounds(32).unwrap().is_empty());
    }
}
