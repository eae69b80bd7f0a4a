//! Every scalar the cone machinery needs, computed from a problem
//! definition: cone ratios, the slice-integral extrema m and M, the
//! boundary determinants with their inverse (theta) tables, the Q/S
//! aggregates, and the Stieltjes-transformed kernel functionals.
//!
//! Wherever the data is rational (atomic measures, polynomial kernels and
//! weights, rational interval endpoints) the computation stays on the exact
//! track; everything else degrades to f64 with the quadrature tolerance.

use num::{BigRational, Zero};
use rayon::prelude::*;

use crate::expr::EvalError;

use crate::problem::{Equation, ProblemDef};
use crate::quadrature::{maximize, minimize, snap_rational, QuadError, Quadrature};
use crate::scalar::{rat_to_f64, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum ConstError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("constant out of range: {0}")]
    Invariant(String),
}

// ---------------------------------------------------------------------------
// 2x2 sign-pattern matrices

/// A matrix of the shape [[a, -b], [-c, d]] with a, b, c, d >= 0. When its
/// determinant is positive, every entry of the inverse is nonnegative, so
/// the inverse preserves componentwise order.
#[derive(Debug, Clone)]
pub struct Matrix2 {
    pub a: Scalar,
    pub b: Scalar,
    pub c: Scalar,
    pub d: Scalar,
}

impl Matrix2 {
    pub fn new(a: Scalar, b: Scalar, c: Scalar, d: Scalar) -> Self {
        Matrix2 { a, b, c, d }
    }

    /// ad - bc.
    pub fn det(&self) -> Scalar {
        self.a.mul(&self.d).sub(&self.b.mul(&self.c))
    }

    /// Nonnegative entries and positive determinant.
    pub fn hypotheses_hold(&self) -> bool {
        !self.a.is_negative()
            && !self.b.is_negative()
            && !self.c.is_negative()
            && !self.d.is_negative()
            && self.det().cmp_val(&Scalar::zero()).is_gt()
    }

    /// [[a, -b], [-c, d]] applied to a column vector.
    pub fn apply(&self, x: &(Scalar, Scalar)) -> (Scalar, Scalar) {
        (
            self.a.mul(&x.0).sub(&self.b.mul(&x.1)),
            self.d.mul(&x.1).sub(&self.c.mul(&x.0)),
        )
    }

    /// Entries of the inverse, row-major; None when the determinant is
    /// zero. Under `hypotheses_hold` all four are nonnegative.
    pub fn inverse_entries(&self) -> Option<[Scalar; 4]> {
        let det = self.det();
        if det.is_zero() {
            return None;
        }
        Some([
            self.d.div(&det),
            self.b.div(&det),
            self.c.div(&det),
            self.a.div(&det),
        ])
    }

    pub fn inverse_apply(&self, y: &(Scalar, Scalar)) -> Option<(Scalar, Scalar)> {
        let e = self.inverse_entries()?;
        Some((
            e[0].mul(&y.0).add(&e[1].mul(&y.1)),
            e[2].mul(&y.0).add(&e[3].mul(&y.1)),
        ))
    }

    /// The order-preservation criterion: the sign pattern plus a positive
    /// determinant force an all-nonnegative inverse.
    pub fn inverse_order_preserving(&self) -> bool {
        if !self.hypotheses_hold() {
            return false;
        }
        self.inverse_entries()
            .map(|e| e.iter().all(|x| !x.is_negative()))
            .unwrap_or(false)
    }
}

/// [[mu - a, -b], [-c, mu - d]], the shifted family the eigenvalue-style
/// argument runs over.
pub fn mu_shifted(a: &Scalar, b: &Scalar, c: &Scalar, d: &Scalar, mu: &Scalar) -> Matrix2 {
    Matrix2::new(mu.sub(a), b.clone(), c.clone(), mu.sub(d))
}

/// Monotonicity in the shift: when [[1-a, -b], [-c, 1-d]] satisfies the
/// order-preservation criterion, p, q >= 0 and mu >= 1, the mu-shifted
/// inverse image of (p, q) is componentwise no larger than the unshifted
/// one. Returns None if either matrix is singular (impossible under the
/// hypotheses).
pub fn mu_monotone(
    a: &Scalar,
    b: &Scalar,
    c: &Scalar,
    d: &Scalar,
    p: &Scalar,
    q: &Scalar,
    mu: &Scalar,
) -> Option<bool> {
    let one = Scalar::one();
    let base = mu_shifted(a, b, c, d, &one).inverse_apply(&(p.clone(), q.clone()))?;
    let shifted = mu_shifted(a, b, c, d, mu).inverse_apply(&(p.clone(), q.clone()))?;
    let tol = 1e-9 * (1.0 + base.0.to_f64().abs() + base.1.to_f64().abs());
    Some(
        shifted.0.to_f64() <= base.0.to_f64() + tol
            && shifted.1.to_f64() <= base.1.to_f64() + tol,
    )
}

// ---------------------------------------------------------------------------
// the constant table

#[derive(Debug, Clone)]
pub struct PerEquation {
    /// Infimum over [a, b] of the kernel's cone-ratio function.
    pub c_kernel: Scalar,
    /// min of c_kernel and the two gamma ratios of this equation.
    pub tilde_c: Scalar,
    /// 1/m is the largest full-interval slice integral sup_t int_0^1 k g.
    pub m: Scalar,
    /// 1/M is the smallest restricted slice integral inf_[a,b] int_a^b k g.
    pub m_big: Scalar,
    /// Determinant of the upper-slope boundary matrix.
    pub d: Scalar,
    /// Same determinant built from the lower slopes.
    pub d_under: Scalar,
    /// Row-major inverse of the upper-slope matrix: [t1, t2; t3, t4].
    pub theta: [Scalar; 4],
    /// Row-major inverse of the lower-slope matrix.
    pub theta_under: [Scalar; 4],
    /// sum_l beta_i1[gamma_il] l_il2 delta_il[1].
    pub q: Scalar,
    /// sum_l beta_i2[gamma_il] l_il2 delta_il[1].
    pub s: Scalar,
}

#[derive(Debug, Clone)]
pub struct PerTerm {
    pub gamma_sup: Scalar,
    pub c_gamma: Scalar,
    /// beta_ij applied to gamma_il for l = 1, 2.
    pub beta_gamma: [Scalar; 2],
    pub delta_one: Scalar,
    /// int_0^1 K_ij(s) g_i(s) ds where K_ij(s) = int k_i(t,s) dB_ij(t).
    pub kernel_functional_full: Scalar,
    /// Same integrand over [a_i, b_i].
    pub kernel_functional_ab: Scalar,
}

#[derive(Debug, Clone)]
pub struct TheoryConstants {
    pub per_equation: [PerEquation; 2],
    /// Indexed [i][j], 0-based.
    pub per_term: [[PerTerm; 2]; 2],
    /// min over i of tilde_c; the cone-ball inflation factor rho -> rho/c.
    pub c: Scalar,
}

// ---------------------------------------------------------------------------
// kernel functionals

/// int_lo^hi [int_0^1 k_i(t,s) dB_ij(t)] g_i(s) ds. Atomic measures with a
/// polynomial kernel slice and weight integrate exactly; anything else goes
/// through adaptive quadrature with breakpoints on the kernel diagonal at
/// every atom location.
pub fn kernel_functional(
    p: &ProblemDef,
    i: usize,
    j: usize,
    lo: &Scalar,
    hi: &Scalar,
) -> Result<Scalar, ConstError> {
    let eq = &p.equations[i];
    let meas = &p.boundary[i][j].beta;

    if meas.density.is_none() {
        if let Some(v) = exact_functional(eq, meas, lo, hi) {
            return Ok(Scalar::Exact(v));
        }
    }

    let quad = p.quad();
    let (lo_f, hi_f) = (lo.to_f64(), hi.to_f64());
    let mut breaks: Vec<f64> = meas.atom_locations_f64();
    breaks.extend(eq.g.breakpoints().iter().map(rat_to_f64));
    let kernel = &eq.kernel;
    let g = &eq.g;
    let val = quad.integrate(
        |s| {
            let ks = meas
                .apply(|_| None, |t| kernel.eval(t, s), &[s], &quad)
                .map_err(|e| EvalError {
                    subexpr: format!("K_{}{}({s})", i + 1, j + 1),
                    message: e.to_string(),
                })?;
            Ok(ks.to_f64() * g.eval(&[s])?)
        },
        lo_f,
        hi_f,
        &breaks,
    )?;
    Ok(Scalar::Float(val))
}

fn exact_functional(
    eq: &Equation,
    meas: &crate::quadrature::Measure,
    lo: &Scalar,
    hi: &Scalar,
) -> Option<BigRational> {
    let lo = lo.as_exact()?;
    let hi = hi.as_exact()?;
    let g = eq.g.as_piecewise_poly(lo, hi)?;
    let mut acc = BigRational::zero();
    for (at, w) in &meas.atoms {
        let at = at.as_exact()?;
        let w = w.as_exact()?;
        let slice = eq.kernel.poly_in_s(at)?;
        let v = slice.mul(&g).integrate(lo, hi)?;
        acc += w * v;
    }
    Some(acc)
}

// ---------------------------------------------------------------------------
// slice-integral extrema

/// Extremum over t in [t_lo, t_hi] of int_{s_lo}^{s_hi} k(t,s) g(s) ds.
/// The located argument is snapped to a nearby small-denominator rational
/// and re-evaluated through the polynomial route when that reproduces the
/// sampled value, keeping reciprocals like m and M exact.
fn extremal_slice_integral(
    eq: &Equation,
    quad: &Quadrature,
    s_lo: &Scalar,
    s_hi: &Scalar,
    t_lo: &Scalar,
    t_hi: &Scalar,
    maximum: bool,
) -> Result<Scalar, ConstError> {
    let (slo, shi) = (s_lo.to_f64(), s_hi.to_f64());
    let g_breaks: Vec<f64> = eq.g.breakpoints().iter().map(rat_to_f64).collect();
    let kernel = &eq.kernel;
    let g = &eq.g;
    let f = |t: f64| -> Result<f64, EvalError> {
        let mut breaks = g_breaks.clone();
        breaks.extend(kernel.s_breakpoints(t));
        quad.integrate(|s| Ok(kernel.eval(t, s)? * g.eval(&[s])?), slo, shi, &breaks)
            .map_err(|e| EvalError {
                subexpr: "slice integral".into(),
                message: e.to_string(),
            })
    };
    let t_breaks: Vec<f64> = kernel.t_breakpoints().iter().map(rat_to_f64).collect();
    let ext = if maximum {
        maximize(f, t_lo.to_f64(), t_hi.to_f64(), &t_breaks)?
    } else {
        minimize(f, t_lo.to_f64(), t_hi.to_f64(), &t_breaks)?
    };

    let mut candidates: Vec<BigRational> = vec![];
    candidates.extend(t_lo.as_exact().cloned());
    candidates.extend(t_hi.as_exact().cloned());
    candidates.extend(kernel.t_breakpoints());
    candidates.extend(eq.g.breakpoints());
    // the argument is only determined to about sqrt(quadrature noise), so
    // snap loosely and let the value comparison reject wrong candidates
    if let (Some(r), Some(lo_r), Some(hi_r)) = (
        snap_rational(ext.arg, &candidates, 128, 1e-4),
        s_lo.as_exact(),
        s_hi.as_exact(),
    ) {
        let in_range =
            rat_to_f64(&r) >= t_lo.to_f64() - 1e-12 && rat_to_f64(&r) <= t_hi.to_f64() + 1e-12;
        if in_range {
            if let Some(v) = exact_slice_value(eq, &r, lo_r, hi_r) {
                if (rat_to_f64(&v) - ext.value).abs() <= 1e-8 * (1.0 + ext.value.abs()) {
                    return Ok(Scalar::Exact(v));
                }
            }
        }
    }
    Ok(Scalar::Float(ext.value))
}

fn exact_slice_value(
    eq: &Equation,
    t: &BigRational,
    lo: &BigRational,
    hi: &BigRational,
) -> Option<BigRational> {
    let slice = eq.kernel.poly_in_s(t)?;
    let g = eq.g.as_piecewise_poly(lo, hi)?;
    slice.mul(&g).integrate(lo, hi)
}

// ---------------------------------------------------------------------------
// assembly

pub fn compute_all(p: &ProblemDef) -> Result<TheoryConstants, ConstError> {
    let quad = p.quad();
    let zero = Scalar::zero();
    let one = Scalar::one();

    // the quadrature-heavy work: four extremum scans and eight functionals
    let scan_jobs: Vec<(usize, bool)> = vec![(0, true), (0, false), (1, true), (1, false)];
    let scans: Result<Vec<Scalar>, ConstError> = scan_jobs
        .par_iter()
        .map(|&(i, full)| {
            let eq = &p.equations[i];
            if full {
                extremal_slice_integral(eq, &quad, &zero, &one, &zero, &one, true)
            } else {
                let (a, b) = (&eq.interval.0, &eq.interval.1);
                extremal_slice_integral(eq, &quad, a, b, a, b, false)
            }
        })
        .collect();
    let scans = scans?;

    let func_jobs: Vec<(usize, usize, bool)> = (0..2)
        .flat_map(|i| (0..2).flat_map(move |j| [(i, j, true), (i, j, false)]))
        .collect();
    let funcs: Result<Vec<Scalar>, ConstError> = func_jobs
        .par_iter()
        .map(|&(i, j, full)| {
            if full {
                kernel_functional(p, i, j, &zero, &one)
            } else {
                let (a, b) = &p.equations[i].interval;
                kernel_functional(p, i, j, a, b)
            }
        })
        .collect();
    let funcs = funcs?;
    let functional = |i: usize, j: usize, full: bool| -> Scalar {
        let idx = func_jobs
            .iter()
            .position(|&(a, b, c)| (a, b, c) == (i, j, full))
            .expect("job enumerated above");
        funcs[idx].clone()
    };

    let mut per_equation = vec![];
    let mut per_term_rows = vec![];
    for i in 0..2 {
        let eq = &p.equations[i];
        let (a, b) = &eq.interval;
        let a_r = a
            .as_exact()
            .ok_or_else(|| ConstError::Invariant(format!("interval of equation {} must be rational", i + 1)))?;
        let b_r = b.as_exact().expect("checked with a");

        let c_kernel = eq.kernel.c_inf_on(a_r, b_r)?;
        let terms = &p.boundary[i];
        let tilde_c = c_kernel
            .min(&terms[0].gamma.c_gamma)
            .min(&terms[1].gamma.c_gamma);
        if !tilde_c.cmp_val(&zero).is_gt() || tilde_c.cmp_val(&one).is_gt() {
            return Err(ConstError::Invariant(format!(
                "tilde_c_{} = {tilde_c} must lie in (0, 1]",
                i + 1
            )));
        }

        let sup_slice = &scans[2 * i];
        let inf_slice = &scans[2 * i + 1];
        if !sup_slice.cmp_val(&zero).is_gt() {
            return Err(ConstError::Invariant(format!(
                "sup of the full slice integral for equation {} is {sup_slice}, want > 0",
                i + 1
            )));
        }
        if !inf_slice.cmp_val(&zero).is_gt() {
            return Err(ConstError::Invariant(format!(
                "inf of the restricted slice integral for equation {} is {inf_slice}, want > 0",
                i + 1
            )));
        }
        let m = sup_slice.recip();
        let m_big = inf_slice.recip();
        if m_big.to_f64() < m.to_f64() - 1e-9 {
            return Err(ConstError::Invariant(format!(
                "M_{i1} = {m_big} fell below m_{i1} = {m}",
                i1 = i + 1
            )));
        }

        // beta_gamma[j][l] = beta_ij[gamma_il]
        let mut beta_gamma = [[zero.clone(), zero.clone()], [zero.clone(), zero.clone()]];
        for j in 0..2 {
            for l in 0..2 {
                beta_gamma[j][l] = p.beta_gamma(i, j, l)?;
            }
        }
        let upper = boundary_matrix(&beta_gamma, &terms[0].h_hi, &terms[1].h_hi);
        let lower = boundary_matrix(&beta_gamma, &terms[0].h_lo, &terms[1].h_lo);
        let d = upper.det();
        let d_under = lower.det();
        if !d.cmp_val(&zero).is_gt() {
            return Err(ConstError::Invariant(format!("D_{} = {d} must be > 0", i + 1)));
        }
        if !d_under.cmp_val(&zero).is_gt() {
            return Err(ConstError::Invariant(format!(
                "underline D_{} = {d_under} must be > 0",
                i + 1
            )));
        }
        let theta = inverse_checked(&upper, i, "upper")?;
        let theta_under = inverse_checked(&lower, i, "lower")?;

        let mut q = Scalar::zero();
        let mut s = Scalar::zero();
        let mut delta_ones = vec![];
        for l in 0..2 {
            let d1 = p.delta_one(i, l)?;
            q = q.add(&beta_gamma[0][l].mul(&terms[l].l_hi).mul(&d1));
            s = s.add(&beta_gamma[1][l].mul(&terms[l].l_hi).mul(&d1));
            delta_ones.push(d1);
        }

        let mut row = vec![];
        for j in 0..2 {
            row.push(PerTerm {
                gamma_sup: terms[j].gamma.sup_norm.clone(),
                c_gamma: terms[j].gamma.c_gamma.clone(),
                beta_gamma: beta_gamma[j].clone(),
                delta_one: delta_ones[j].clone(),
                kernel_functional_full: functional(i, j, true),
                kernel_functional_ab: functional(i, j, false),
            });
        }
        per_term_rows.push(row);

        per_equation.push(PerEquation {
            c_kernel,
            tilde_c,
            m,
            m_big,
            d,
            d_under,
            theta,
            theta_under,
            q,
            s,
        });
    }

    let c = per_equation[0].tilde_c.min(&per_equation[1].tilde_c);
    let per_equation: [PerEquation; 2] = per_equation.try_into().unwrap();
    let per_term: [[PerTerm; 2]; 2] = per_term_rows
        .into_iter()
        .map(|row| <[PerTerm; 2]>::try_from(row).unwrap())
        .collect::<Vec<_>>()
        .try_into()
        .unwrap();

    Ok(TheoryConstants {
        per_equation,
        per_term,
        c,
    })
}

/// [[1 - h1 bg[0][0], -(h2 bg[0][1])], [-(h1 bg[1][0]), 1 - h2 bg[1][1]]]
/// where bg[j][l] = beta_ij[gamma_il]: the matrix the boundary functionals
/// satisfy after applying both betas to the fixed-point relation.
fn boundary_matrix(bg: &[[Scalar; 2]; 2], h1: &Scalar, h2: &Scalar) -> Matrix2 {
    let one = Scalar::one();
    Matrix2::new(
        one.sub(&h1.mul(&bg[0][0])),
        h2.mul(&bg[0][1]),
        h1.mul(&bg[1][0]),
        one.sub(&h2.mul(&bg[1][1])),
    )
}

/// Invert and verify: the product with the original matrix must be the
/// identity (exactly on the rational track, to 1e-12 otherwise), and the
/// entries must come out nonnegative.
fn inverse_checked(mat: &Matrix2, i: usize, which: &str) -> Result<[Scalar; 4], ConstError> {
    let theta = mat.inverse_entries().ok_or_else(|| {
        ConstError::Invariant(format!(
            "{which} boundary matrix of equation {} is singular",
            i + 1
        ))
    })?;
    for (k, th) in theta.iter().enumerate() {
        if th.is_negative() {
            return Err(ConstError::Invariant(format!(
                "theta_{}{} ({which}) = {th} is negative",
                i + 1,
                k + 1
            )));
        }
    }
    // rows of theta times columns of [[a, -b], [-c, d]]
    let prod = [
        theta[0].mul(&mat.a).sub(&theta[1].mul(&mat.c)),
        theta[1].mul(&mat.d).sub(&theta[0].mul(&mat.b)),
        theta[2].mul(&mat.a).sub(&theta[3].mul(&mat.c)),
        theta[3].mul(&mat.d).sub(&theta[2].mul(&mat.b)),
    ];
    let ident = [1.0, 0.0, 0.0, 1.0];
    for (got, want) in prod.iter().zip(ident) {
        if (got.to_f64() - want).abs() > 1e-12 {
            return Err(ConstError::Invariant(format!(
                "inverse of the {which} boundary matrix of equation {} failed the identity check",
                i + 1
            )));
        }
    }
    Ok(theta)
}
