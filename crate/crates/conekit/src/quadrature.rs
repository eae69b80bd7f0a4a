//! Adaptive Gauss–Legendre quadrature, Riemann–Stieltjes measures, and
//! one-dimensional extremum search.
//!
//! The integrator runs a 15-point Gauss–Legendre rule on a worklist of
//! panels, always splitting the panel with the largest error estimate
//! (whole-panel value against the two-half value). Initial panels never
//! straddle caller-supplied breakpoints; integrands here are smooth between
//! breakpoints, so the error estimates are reliable and convergence is
//! fast. A budget of panels bounds runaway refinement, and failing to reach
//! the requested tolerance is an error, not a silent degradation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use num::rational::BigRational;

use crate::expr::{EvalError, Expression};
use crate::scalar::Scalar;

#[derive(Debug, Clone, thiserror::Error)]
pub enum QuadError {
    #[error("integration tolerance not met: achieved {achieved:.3e}, requested {requested:.3e}")]
    ToleranceNotMet { achieved: f64, requested: f64 },
    #[error("integrand is not finite near {at}")]
    NonFinite { at: f64 },
    #[error(transparent)]
    Domain(#[from] EvalError),
}

/// 15-point Gauss–Legendre rule on [-1, 1]; exact through degree 29.
pub struct GaussRule {
    pub nodes: [f64; 15],
    pub weights: [f64; 15],
}

/// Nodes are roots of the degree-15 Legendre polynomial, found by Newton
/// from the Chebyshev initial guesses; computed once per process.
pub fn gl15() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 15usize;
        let mut nodes = [0.0; 15];
        let mut weights = [0.0; 15];
        for (k, (node, weight)) in nodes.iter_mut().zip(weights.iter_mut()).enumerate() {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..64 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            *node = x;
            *weight = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussRule { nodes, weights }
    })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub tol: f64,
    pub max_panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            tol: 1e-10,
            max_panels: 1 << 14,
        }
    }
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

impl Quadrature {
    /// ∫ f over [lo, hi]. `breaks` lists abscissae the integrand may kink
    /// or jump at; initial panels are cut there.
    pub fn integrate<F>(&self, f: F, lo: f64, hi: f64, breaks: &[f64]) -> Result<f64, QuadError>
    where
        F: Fn(f64) -> Result<f64, EvalError>,
    {
        assert!(lo <= hi, "inverted integration range");
        if lo == hi {
            return Ok(0.0);
        }
        let mut cuts: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|b| *b > lo && *b < hi)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(lo);
        edges.extend(cuts);
        edges.push(hi);

        let mut heap = BinaryHeap::new();
        let mut total = 0.0;
        let mut err_sum = 0.0;
        let mut irreducible = 0.0;
        let mut count = 0usize;
        for pair in edges.windows(2) {
            let p = self.make_panel(&f, pair[0], pair[1])?;
            total += p.value;
            err_sum += p.err;
            count += 1;
            heap.push(p);
        }
        while err_sum + irreducible > self.tol {
            let worst = match heap.pop() {
                Some(p) => p,
                None => break,
            };
            if worst.hi - worst.lo < 1e-15 * (1.0 + worst.hi.abs()) {
                // cannot split further; its error estimate stands
                err_sum -= worst.err;
                irreducible += worst.err;
                continue;
            }
            if count >= self.max_panels {
                return Err(QuadError::ToleranceNotMet {
                    achieved: err_sum + irreducible,
                    requested: self.tol,
                });
            }
            total -= worst.value;
            err_sum -= worst.err;
            let mid = 0.5 * (worst.lo + worst.hi);
            for (a, b) in [(worst.lo, mid), (mid, worst.hi)] {
                let p = self.make_panel(&f, a, b)?;
                total += p.value;
                err_sum += p.err;
                heap.push(p);
            }
            count += 1;
        }
        if err_sum + irreducible > self.tol {
            return Err(QuadError::ToleranceNotMet {
                achieved: err_sum + irreducible,
                requested: self.tol,
            });
        }
        Ok(total)
    }

    fn make_panel<F>(&self, f: &F, lo: f64, hi: f64) -> Result<Panel, QuadError>
    where
        F: Fn(f64) -> Result<f64, EvalError>,
    {
        let whole = gl_panel(f, lo, hi)?;
        let mid = 0.5 * (lo + hi);
        let halves = gl_panel(f, lo, mid)? + gl_panel(f, mid, hi)?;
        Ok(Panel {
            lo,
            hi,
            value: halves,
            err: (whole - halves).abs(),
        })
    }
}

fn gl_panel<F>(f: &F, lo: f64, hi: f64) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let rule = gl15();
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut sum = 0.0;
    for i in 0..15 {
        let x = c + h * rule.nodes[i];
        let v = f(x)?;
        if !v.is_finite() {
            return Err(QuadError::NonFinite { at: x });
        }
        sum += rule.weights[i] * v;
    }
    Ok(sum * h)
}

/// A positive Borel measure on [0, 1]: point masses plus an absolutely
/// continuous part with an expression density. Functionals β[·], δ[·] in
/// problem data are integrals against such measures.
#[derive(Clone, Debug)]
pub struct Measure {
    /// (location, weight) pairs.
    pub atoms: Vec<(Scalar, Scalar)>,
    pub density: Option<Expression>,
}

impl Measure {
    pub fn from_atoms(atoms: Vec<(Scalar, Scalar)>) -> Self {
        Measure {
            atoms,
            density: None,
        }
    }

    /// ∫ φ dμ. `exact_at` supplies exact values of φ at atom locations
    /// where available (keeping atomic measures on the exact track), and
    /// `float_at` is the f64 fallback also used under the density.
    pub fn apply<E, F>(
        &self,
        exact_at: E,
        float_at: F,
        extra_breaks: &[f64],
        quad: &Quadrature,
    ) -> Result<Scalar, QuadError>
    where
        E: Fn(&Scalar) -> Option<Scalar>,
        F: Fn(f64) -> Result<f64, EvalError>,
    {
        let mut acc = Scalar::zero();
        for (t, w) in &self.atoms {
            let v = match exact_at(t) {
                Some(v) => v,
                None => Scalar::Float(float_at(t.to_f64())?),
            };
            acc = acc.add(&w.mul(&v));
        }
        if let Some(d) = &self.density {
            let mut breaks: Vec<f64> = d
                .breakpoints()
                .iter()
                .map(crate::scalar::rat_to_f64)
                .collect();
            breaks.extend_from_slice(extra_breaks);
            let v = quad.integrate(
                |s| Ok(d.eval(&[s])? * float_at(s)?),
                0.0,
                1.0,
                &breaks,
            )?;
            acc = acc.add(&Scalar::Float(v));
        }
        Ok(acc)
    }

    /// μ[1], the total mass.
    pub fn total(&self, quad: &Quadrature) -> Result<Scalar, QuadError> {
        self.apply(|_| Some(Scalar::one()), |_| Ok(1.0), &[], quad)
    }

    /// ∫ φ dμ for a single-variable expression φ.
    pub fn apply_expr(&self, phi: &Expression, quad: &Quadrature) -> Result<Scalar, QuadError> {
        let breaks: Vec<f64> = phi
            .breakpoints()
            .iter()
            .map(crate::scalar::rat_to_f64)
            .collect();
        self.apply(
            |t| phi.eval_scalar(std::slice::from_ref(t)).ok(),
            |s| phi.eval(&[s]),
            &breaks,
            quad,
        )
    }

    /// Atom weights must be nonnegative and the density nonnegative on
    /// [0, 1]; the density side is a dense sample, not a proof.
    pub fn nonnegative(&self) -> Result<bool, EvalError> {
        for (_, w) in &self.atoms {
            if w.is_negative() {
                return Ok(false);
            }
        }
        if let Some(d) = &self.density {
            let n = 512;
            for k in 0..=n {
                let s = k as f64 / n as f64;
                if d.eval(&[s])? < -1e-12 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn atom_locations_f64(&self) -> Vec<f64> {
        self.atoms.iter().map(|(t, _)| t.to_f64()).collect()
    }
}

/// Location and value of a one-dimensional extremum.
#[derive(Clone, Copy, Debug)]
pub struct Extremum {
    pub arg: f64,
    pub value: f64,
}

const SCAN_POINTS: usize = 1024;

/// Minimum of f over [lo, hi]: dense scan (plus the supplied breakpoints)
/// followed by golden-section refinement around the best bracket.
pub fn minimize<F>(f: F, lo: f64, hi: f64, breaks: &[f64]) -> Result<Extremum, EvalError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    assert!(lo <= hi);
    let mut pts: Vec<f64> = (0..=SCAN_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / SCAN_POINTS as f64)
        .collect();
    pts.extend(breaks.iter().copied().filter(|b| *b >= lo && *b <= hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut best = Extremum {
        arg: lo,
        value: f64::INFINITY,
    };
    let mut best_idx = 0;
    for (i, &x) in pts.iter().enumerate() {
        let v = f(x)?;
        if v < best.value {
            best = Extremum { arg: x, value: v };
            best_idx = i;
        }
    }
    let a = pts[best_idx.saturating_sub(1)];
    let b = pts[(best_idx + 1).min(pts.len() - 1)];
    if b > a {
        let refined = golden_min(&f, a, b)?;
        if refined.value < best.value {
            best = refined;
        }
    }
    Ok(best)
}

pub fn maximize<F>(f: F, lo: f64, hi: f64, breaks: &[f64]) -> Result<Extremum, EvalError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let m = minimize(|x| Ok(-f(x)?), lo, hi, breaks)?;
    Ok(Extremum {
        arg: m.arg,
        value: -m.value,
    })
}

fn golden_min<F>(f: &F, mut a: f64, mut b: f64) -> Result<Extremum, EvalError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if b - a < 1e-13 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd {
        Extremum { arg: c, value: fc }
    } else {
        Extremum { arg: d, value: fd }
    })
}

/// Rational point near `x`: a hit in `candidates` wins, otherwise the
/// first continued-fraction convergent with a small denominator that sits
/// within `tol`. Extremum locations of the piecewise-rational data handled
/// here are usually such points, and snapping them lets the exact
/// evaluation path reproduce constants as rationals. Extremum arguments
/// are only determined to about the square root of the value noise, so
/// callers pass a loose `tol` and must verify the snapped point by value.
pub fn snap_rational(
    x: f64,
    candidates: &[BigRational],
    max_den: u64,
    tol: f64,
) -> Option<BigRational> {
    use num::{BigInt, FromPrimitive, ToPrimitive};
    for c in candidates {
        if (crate::scalar::rat_to_f64(c) - x).abs() <= tol {
            return Some(c.clone());
        }
    }
    // continued-fraction convergents of x
    let mut h_prev = BigInt::from(1);
    let mut h = BigInt::from_f64(x.trunc())?;
    let mut k_prev = BigInt::from(0);
    let mut k = BigInt::from(1);
    let mut frac = x - x.trunc();
    for _ in 0..32 {
        let cand = BigRational::new(h.clone(), k.clone());
        if k.to_u64().map_or(false, |den| den <= max_den)
            && (crate::scalar::rat_to_f64(&cand) - x).abs() <= tol
        {
            // into lowest terms with a positive denominator
            return Some(cand);
        }
        if frac.abs() < 1e-12 {
            break;
        }
        let inv = 1.0 / frac;
        let a = BigInt::from_f64(inv.trunc())?;
        frac = inv - inv.trunc();
        let h_next = &a * &h + &h_prev;
        let k_next = &a * &k + &k_prev;
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use num::BigInt;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn rule_is_exact_through_degree_29() {
        let v = Quadrature::default()
            .integrate(|x| Ok(x.powi(29)), 0.0, 1.0, &[])
            .unwrap();
        assert!((v - 1.0 / 30.0).abs() < 1e-14, "{v}");
    }

    #[test]
    fn kinked_integrand_with_declared_break() {
        let v = Quadrature::default()
            .integrate(|x| Ok((x - 0.5).abs()), 0.0, 1.0, &[0.5])
            .unwrap();
        assert!((v - 0.25).abs() < 1e-14, "{v}");
    }

    #[test]
    fn kinked_integrand_without_break_still_converges() {
        let v = Quadrature::default()
            .integrate(|x| Ok((x - 0.5).abs()), 0.0, 1.0, &[])
            .unwrap();
        assert!((v - 0.25).abs() < 1e-10, "{v}");
    }

    #[test]
    fn sqrt_endpoint_behaviour() {
        let e = Expression::parse("sqrt(s)", &["s"]).unwrap();
        let v = Quadrature::default()
            .integrate(|x| e.eval(&[x]), 0.0, 1.0, &[])
            .unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn refusal_when_budget_is_too_small() {
        let q = Quadrature {
            tol: 1e-12,
            max_panels: 8,
        };
        let step = |x: f64| Ok(if x < std::f64::consts::FRAC_1_PI { 0.0 } else { 1.0 });
        assert!(matches!(
            q.integrate(step, 0.0, 1.0, &[]),
            Err(QuadError::ToleranceNotMet { .. })
        ));
    }

    #[test]
    fn atomic_measure_stays_exact() {
        let m = Measure::from_atoms(vec![
            (Scalar::ratio(1, 4), Scalar::ratio(1, 2)),
            (Scalar::ratio(3, 4), Scalar::ratio(1, 2)),
        ]);
        let phi = Expression::parse("t^2", &["t"]).unwrap();
        let v = m.apply_expr(&phi, &Quadrature::default()).unwrap();
        assert_eq!(v.as_exact(), Some(&rat(5, 16)));
        assert_eq!(
            m.total(&Quadrature::default()).unwrap().as_exact(),
            Some(&rat(1, 1))
        );
    }

    #[test]
    fn density_measure_goes_numeric() {
        let m = Measure {
            atoms: vec![],
            density: Some(Expression::parse("s", &["s"]).unwrap()),
        };
        let phi = Expression::parse("t", &["t"]).unwrap();
        let v = m.apply_expr(&phi, &Quadrature::default()).unwrap();
        assert!(!v.is_exact());
        assert!((v.to_f64() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn negative_weights_are_flagged() {
        let m = Measure::from_atoms(vec![(Scalar::ratio(1, 2), Scalar::ratio(-1, 2))]);
        assert!(!m.nonnegative().unwrap());
    }

    #[test]
    fn extremum_search_hits_interior_and_boundary() {
        // t(1-t) on [1/4, 3/4]: max 1/4 at 1/2, min 3/16 at both ends
        let f = |t: f64| Ok(t * (1.0 - t));
        let max = maximize(f, 0.25, 0.75, &[]).unwrap();
        assert!((max.value - 0.25).abs() < 1e-12);
        assert!((max.arg - 0.5).abs() < 1e-9);
        let min = minimize(f, 0.25, 0.75, &[]).unwrap();
        assert!((min.value - 3.0 / 16.0).abs() < 1e-12);
        let sharp = minimize(|t| Ok((t - 1.0 / 3.0) * (t - 1.0 / 3.0)), 0.0, 1.0, &[]).unwrap();
        assert!((sharp.arg - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn snapping_prefers_candidates_then_small_denominators() {
        let c = rat(3, 4);
        assert_eq!(
            snap_rational(0.7500000001, std::slice::from_ref(&c), 128, 1e-9),
            Some(rat(3, 4))
        );
        assert_eq!(
            snap_rational(0.3333333333333, &[], 128, 1e-9),
            Some(rat(1, 3))
        );
        assert_eq!(snap_rational(0.6089, &[], 128, 1e-9), None);
        assert_eq!(
            snap_rational(std::f64::consts::FRAC_1_SQRT_2, &[], 128, 1e-9),
            None
        );
        // a loose tolerance accepts extremum-grade argument scatter
        assert_eq!(snap_rational(0.5000123, &[], 128, 1e-4), Some(rat(1, 2)));
        // ... but quadratic irrationals still have no nearby small fraction
        assert_eq!(
            snap_rational(1.0 / 3.0f64.sqrt(), &[], 128, 1e-6),
            None
        );
    }
}
