//! Radius-indexed growth conditions and the multiplicity ladder.
//!
//! A condition at radius rho compares an extremum of the nonlinearity
//! f_i, scaled by 1/rho, against a bracket of constants from
//! [`TheoryConstants`]. Three kinds exist:
//!
//! * `index1`: the sup of f_i/rho over [0,1] x [0,rho]^2, weighted by the
//!   upper-slope bracket, must stay below 1 for BOTH equations;
//! * `index0`: the inf of f_i/rho over [a_i,b_i] x (an asymmetric box
//!   reaching up to rho/c), weighted by the lower-slope bracket, must
//!   exceed 1 for BOTH equations;
//! * `index0_star`: same inequality with the full box [0,rho/c]^2, required
//!   for only ONE equation.
//!
//! Interleaving satisfied conditions at increasing radii pins down a
//! guaranteed number of distinct fixed points between the shells; the
//! [`multiplicity`] verdict names the matching clause and checks the
//! radius-gap constraints that keep consecutive shells disjoint.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::constants::TheoryConstants;
use crate::expr::{EvalError, Expression};
use crate::problem::{ExtremumMode, ProblemDef};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid request: {0}")]
    Request(String),
    #[error("malformed ladder: {0}")]
    Ladder(String),
}

// ---------------------------------------------------------------------------
// Condition kinds and extremum boxes

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    Index1,
    Index0,
    Index0Star,
}

impl ConditionKind {
    /// Both index0 variants sit on the same rung of a ladder; alternation is
    /// between this side and index1.
    pub fn is_zero_side(self) -> bool {
        !matches!(self, ConditionKind::Index1)
    }

    /// Short token used in ladder specs like `1:one` or `11:zero`.
    pub fn token(self) -> &'static str {
        match self {
            ConditionKind::Index1 => "one",
            ConditionKind::Index0 => "zero",
            ConditionKind::Index0Star => "star",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ConditionKind::Index1 => "index1",
            ConditionKind::Index0 => "index0",
            ConditionKind::Index0Star => "index0_star",
        };
        f.write_str(name)
    }
}

impl FromStr for ConditionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "one" | "index1" | "1" => Ok(ConditionKind::Index1),
            "zero" | "index0" | "0" => Ok(ConditionKind::Index0),
            "star" | "index0_star" | "0*" | "zero*" => Ok(ConditionKind::Index0Star),
            other => Err(format!(
                "unknown condition kind {other:?} (expected one, zero, or star)"
            )),
        }
    }
}

/// Closed box in (t, u, v) space an f-extremum is taken over.
#[derive(Debug, Clone)]
pub struct SearchBox {
    pub t: (Scalar, Scalar),
    pub u: (Scalar, Scalar),
    pub v: (Scalar, Scalar),
}

impl SearchBox {
    fn validate(&self) -> Result<(), IndexError> {
        for (name, (lo, hi)) in [("t", &self.t), ("u", &self.u), ("v", &self.v)] {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(IndexError::Request(format!("{name}-interval is not finite")));
            }
            if lo.cmp_val(hi) == Ordering::Greater {
                return Err(IndexError::Request(format!(
                    "{name}-interval [{lo}, {hi}] is empty"
                )));
            }
        }
        Ok(())
    }

    fn matches_override(&self, o: &crate::problem::FOverride) -> bool {
        o.t.0.close_to(&self.t.0)
            && o.t.1.close_to(&self.t.1)
            && o.u.0.close_to(&self.u.0)
            && o.u.1.close_to(&self.u.1)
            && o.v.0.close_to(&self.v.0)
            && o.v.1.close_to(&self.v.1)
    }
}

impl fmt::Display for SearchBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}] x [{}, {}] x [{}, {}]",
            self.t.0, self.t.1, self.u.0, self.u.1, self.v.0, self.v.1
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumSource {
    /// Lattice sampling; a sampled sup is a lower estimate of the true sup
    /// and a sampled inf an upper estimate of the true inf.
    Sampled,
    /// Exact value supplied in the problem file's `f_bounds` section.
    UserExact,
}

impl fmt::Display for ExtremumSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtremumSource::Sampled => "sampled",
            ExtremumSource::UserExact => "user-exact",
        })
    }
}

/// Extremum of f_i(t,u,v)/rho over a box.
#[derive(Debug, Clone)]
pub struct BoxExtremum {
    /// Equation index, 0-based.
    pub i: usize,
    pub mode: ExtremumMode,
    pub search_box: SearchBox,
    /// Extremum of f_i/rho, the quantity the conditions compare.
    pub value: Scalar,
    /// Extremum of f_i itself, before dividing by rho.
    pub raw: Scalar,
    pub source: ExtremumSource,
    /// Lattice points per axis (0 when the value came from an override).
    pub grid: usize,
    /// Local refinement passes applied after the lattice scan.
    pub refinements: usize,
}

fn lattice(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if n <= 1 {
        return lo;
    }
    lo + (hi - lo) * (k as f64) / ((n - 1) as f64)
}

/// Scan a box for the extremum of `f`. Returns the best value and argument.
fn sample_box(
    f: &Expression,
    bx: &SearchBox,
    mode: ExtremumMode,
    grid: usize,
) -> Result<(f64, [f64; 3]), EvalError> {
    let (t0, t1) = (bx.t.0.to_f64(), bx.t.1.to_f64());
    let (u0, u1) = (bx.u.0.to_f64(), bx.u.1.to_f64());
    let (v0, v1) = (bx.v.0.to_f64(), bx.v.1.to_f64());
    let maximizing = mode == ExtremumMode::Sup;
    let worst = if maximizing {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    let better = |a: f64, b: f64| if maximizing { a > b } else { a < b };

    let slices: Vec<Result<(f64, [f64; 3]), EvalError>> = (0..grid)
        .into_par_iter()
        .map(|it| {
            let t = lattice(t0, t1, grid, it);
            let mut best = worst;
            let mut arg = [t, u0, v0];
            for iu in 0..grid {
                let u = lattice(u0, u1, grid, iu);
                for iv in 0..grid {
                    let v = lattice(v0, v1, grid, iv);
                    let val = f.eval(&[t, u, v])?;
                    if better(val, best) {
                        best = val;
                        arg = [t, u, v];
                    }
                }
            }
            Ok((best, arg))
        })
        .collect();

    let mut best = worst;
    let mut arg = [t0, u0, v0];
    for slice in slices {
        let (val, a) = slice?;
        if better(val, best) {
            best = val;
            arg = a;
        }
    }

    // One refinement pass: resample the incumbent's one-cell neighbourhood
    // at triple density.
    let steps = [
        (t1 - t0) / ((grid - 1).max(1) as f64),
        (u1 - u0) / ((grid - 1).max(1) as f64),
        (v1 - v0) / ((grid - 1).max(1) as f64),
    ];
    let bounds = [(t0, t1), (u0, u1), (v0, v1)];
    let axis_points = |axis: usize| -> Vec<f64> {
        let (lo, hi) = bounds[axis];
        let w = steps[axis];
        if w == 0.0 {
            return vec![arg[axis]];
        }
        (-3_i32..=3)
            .map(|j| arg[axis] + (j as f64) * w / 3.0)
            .filter(|x| *x >= lo - 1e-15 && *x <= hi + 1e-15)
            .map(|x| x.clamp(lo, hi))
            .collect()
    };
    let (ts, us, vs) = (axis_points(0), axis_points(1), axis_points(2));
    for &t in &ts {
        for &u in &us {
            for &v in &vs {
                let val = f.eval(&[t, u, v])?;
                if better(val, best) {
                    best = val;
                    arg = [t, u, v];
                }
            }
        }
    }
    Ok((best, arg))
}

/// Extremum of f_i/rho over a box: an `f_bounds` override matching (i, mode,
/// box) wins, otherwise lattice sampling with one refinement pass.
pub fn f_extremum(
    p: &ProblemDef,
    i: usize,
    mode: ExtremumMode,
    search_box: &SearchBox,
    rho: &Scalar,
    grid: usize,
) -> Result<BoxExtremum, IndexError> {
    search_box.validate()?;
    if grid < 2 {
        return Err(IndexError::Request(format!(
            "extremum grid must be at least 2, got {grid}"
        )));
    }
    if !rho.is_finite() || rho.cmp_val(&Scalar::zero()) != Ordering::Greater {
        return Err(IndexError::Request(format!("rho must be positive, got {rho}")));
    }

    if let Some(o) = p
        .f_overrides
        .iter()
        .find(|o| o.i == i && o.mode == mode && search_box.matches_override(o))
    {
        return Ok(BoxExtremum {
            i,
            mode,
            search_box: search_box.clone(),
            value: o.value.div(rho),
            raw: o.value.clone(),
            source: ExtremumSource::UserExact,
            grid: 0,
            refinements: 0,
        });
    }

    let (raw, _) = sample_box(&p.equations[i].f, search_box, mode, grid)?;
    let raw = Scalar::Float(raw);
    Ok(BoxExtremum {
        i,
        mode,
        search_box: search_box.clone(),
        value: raw.div(rho),
        raw,
        source: ExtremumSource::Sampled,
        grid,
        refinements: 1,
    })
}

// ---------------------------------------------------------------------------
// Conditions at a single radius

/// One equation's side of a condition.
#[derive(Debug, Clone)]
pub struct EquationCheck {
    /// Full left-hand side of the inequality (compared against 1).
    pub lhs: Scalar,
    /// Critical scaled f-extremum: the inequality holds exactly when the
    /// extremum stays below (index1) or above (index0 kinds) this value.
    pub threshold: Scalar,
    pub f_extremum: BoxExtremum,
    pub satisfied: bool,
    /// 1 - lhs for index1, lhs - 1 for the index0 kinds; positive iff
    /// satisfied.
    pub margin: f64,
}

/// A fully evaluated condition at one radius.
#[derive(Debug, Clone)]
pub struct RhoCondition {
    pub kind: ConditionKind,
    pub rho: Scalar,
    pub per_equation: [EquationCheck; 2],
    /// Both equations for index1/index0, at least one for index0_star.
    pub satisfied: bool,
    /// Worst per-equation margin for the both-i kinds, best for star.
    pub margin: f64,
}

pub fn check(
    p: &ProblemDef,
    k: &TheoryConstants,
    kind: ConditionKind,
    rho: &Scalar,
) -> Result<RhoCondition, IndexError> {
    check_with_grid(p, k, kind, rho, p.options.f_grid)
}

fn check_with_grid(
    p: &ProblemDef,
    k: &TheoryConstants,
    kind: ConditionKind,
    rho: &Scalar,
    grid: usize,
) -> Result<RhoCondition, IndexError> {
    match kind {
        ConditionKind::Index1 => check_index1_grid(p, k, rho, grid),
        ConditionKind::Index0 => check_index0_grid(p, k, rho, false, grid),
        ConditionKind::Index0Star => check_index0_grid(p, k, rho, true, grid),
    }
}

pub fn check_index1(
    p: &ProblemDef,
    k: &TheoryConstants,
    rho: &Scalar,
) -> Result<RhoCondition, IndexError> {
    check_index1_grid(p, k, rho, p.options.f_grid)
}

pub fn check_index0(
    p: &ProblemDef,
    k: &TheoryConstants,
    rho: &Scalar,
    star: bool,
) -> Result<RhoCondition, IndexError> {
    check_index0_grid(p, k, rho, star, p.options.f_grid)
}

/// Upper-slope bracket and additive constant for equation i.
///
/// bracket = (g1 h12 t1 + g2 h22 t3) K_i1 + (g1 h12 t2 + g2 h22 t4) K_i2 + 1/m
/// konst   = g1 h12 (t1 Q + t2 S) + g2 h22 (t3 Q + t4 S) + sum_j g_j l_j d_j
///
/// where g_j = sup gamma_ij, K_ij integrates over all of [0,1], and
/// d_j = delta_ij[1]. The inequality is f^{sup} * bracket + konst < 1.
fn index1_parts(p: &ProblemDef, k: &TheoryConstants, i: usize) -> (Scalar, Scalar) {
    let pe = &k.per_equation[i];
    let th = &pe.theta;
    let g = [&k.per_term[i][0].gamma_sup, &k.per_term[i][1].gamma_sup];
    let h = [&p.boundary[i][0].h_hi, &p.boundary[i][1].h_hi];
    let l = [&p.boundary[i][0].l_hi, &p.boundary[i][1].l_hi];
    let dl = [&k.per_term[i][0].delta_one, &k.per_term[i][1].delta_one];
    let kf = [
        &k.per_term[i][0].kernel_functional_full,
        &k.per_term[i][1].kernel_functional_full,
    ];

    let w0 = g[0].mul(h[0]);
    let w1 = g[1].mul(h[1]);
    let coef1 = w0.mul(&th[0]).add(&w1.mul(&th[2]));
    let coef2 = w0.mul(&th[1]).add(&w1.mul(&th[3]));
    let bracket = coef1
        .mul(kf[0])
        .add(&coef2.mul(kf[1]))
        .add(&pe.m.recip());

    let konst = w0
        .mul(&th[0].mul(&pe.q).add(&th[1].mul(&pe.s)))
        .add(&w1.mul(&th[2].mul(&pe.q).add(&th[3].mul(&pe.s))))
        .add(&g[0].mul(l[0]).mul(dl[0]))
        .add(&g[1].mul(l[1]).mul(dl[1]));
    (bracket, konst)
}

fn check_index1_grid(
    p: &ProblemDef,
    k: &TheoryConstants,
    rho: &Scalar,
    grid: usize,
) -> Result<RhoCondition, IndexError> {
    let one = Scalar::one();
    let mut checks = Vec::with_capacity(2);
    for i in 0..2 {
        let (bracket, konst) = index1_parts(p, k, i);
        let bx = SearchBox {
            t: (Scalar::zero(), Scalar::one()),
            u: (Scalar::zero(), rho.clone()),
            v: (Scalar::zero(), rho.clone()),
        };
        let ext = f_extremum(p, i, ExtremumMode::Sup, &bx, rho, grid)?;
        let lhs = ext.value.mul(&bracket).add(&konst);
        let satisfied = lhs.cmp_val(&one) == Ordering::Less;
        let threshold = one.sub(&konst).div(&bracket);
        let margin = 1.0 - lhs.to_f64();
        checks.push(EquationCheck {
            lhs,
            threshold,
            f_extremum: ext,
            satisfied,
            margin,
        });
    }
    let [c0, c1]: [EquationCheck; 2] = checks.try_into().unwrap();
    let satisfied = c0.satisfied && c1.satisfied;
    let margin = c0.margin.min(c1.margin);
    Ok(RhoCondition {
        kind: ConditionKind::Index1,
        rho: rho.clone(),
        per_equation: [c0, c1],
        satisfied,
        margin,
    })
}

/// Lower-slope bracket for equation i.
///
/// bracket = (c1 g1 h11 t1 + c2 g2 h21 t3) K_i1[a,b]
///         + (c1 g1 h11 t2 + c2 g2 h21 t4) K_i2[a,b] + 1/M
///
/// with t* the lower-slope theta entries, c_j the gamma cone ratios, and
/// K_ij[a,b] integrating over [a_i, b_i] only. The inequality is
/// f^{inf} * bracket > 1.
fn index0_bracket(p: &ProblemDef, k: &TheoryConstants, i: usize) -> Scalar {
    let pe = &k.per_equation[i];
    let th = &pe.theta_under;
    let g = [&k.per_term[i][0].gamma_sup, &k.per_term[i][1].gamma_sup];
    let c = [&k.per_term[i][0].c_gamma, &k.per_term[i][1].c_gamma];
    let h = [&p.boundary[i][0].h_lo, &p.boundary[i][1].h_lo];
    let kf = [
        &k.per_term[i][0].kernel_functional_ab,
        &k.per_term[i][1].kernel_functional_ab,
    ];

    let w0 = c[0].mul(g[0]).mul(h[0]);
    let w1 = c[1].mul(g[1]).mul(h[1]);
    let coef1 = w0.mul(&th[0]).add(&w1.mul(&th[2]));
    let coef2 = w0.mul(&th[1]).add(&w1.mul(&th[3]));
    coef1
        .mul(kf[0])
        .add(&coef2.mul(kf[1]))
        .add(&pe.m_big.recip())
}

fn check_index0_grid(
    p: &ProblemDef,
    k: &TheoryConstants,
    rho: &Scalar,
    star: bool,
    grid: usize,
) -> Result<RhoCondition, IndexError> {
    let one = Scalar::one();
    let rho_over_c = rho.div(&k.c);
    let mut checks = Vec::with_capacity(2);
    for i in 0..2 {
        let bracket = index0_bracket(p, k, i);
        let (a, b) = p.equations[i].interval.clone();
        let full = (Scalar::zero(), rho_over_c.clone());
        let lifted = (rho.clone(), rho_over_c.clone());
        // The plain condition pins the equation's own component away from
        // zero; the star variant drops that and scans the whole box.
        let (ubox, vbox) = if star {
            (full.clone(), full)
        } else if i == 0 {
            (lifted, full)
        } else {
            (full, lifted)
        };
        let bx = SearchBox {
            t: (a, b),
            u: ubox,
            v: vbox,
        };
        let ext = f_extremum(p, i, ExtremumMode::Inf, &bx, rho, grid)?;
        let lhs = ext.value.mul(&bracket);
        let satisfied = lhs.cmp_val(&one) == Ordering::Greater;
        let threshold = bracket.recip();
        let margin = lhs.to_f64() - 1.0;
        checks.push(EquationCheck {
            lhs,
            threshold,
            f_extremum: ext,
            satisfied,
            margin,
        });
    }
    let [c0, c1]: [EquationCheck; 2] = checks.try_into().unwrap();
    let (kind, satisfied, margin) = if star {
        (
            ConditionKind::Index0Star,
            c0.satisfied || c1.satisfied,
            c0.margin.max(c1.margin),
        )
    } else {
        (
            ConditionKind::Index0,
            c0.satisfied && c1.satisfied,
            c0.margin.min(c1.margin),
        )
    };
    Ok(RhoCondition {
        kind,
        rho: rho.clone(),
        per_equation: [c0, c1],
        satisfied,
        margin,
    })
}

// ---------------------------------------------------------------------------
// Multiplicity ladders

#[derive(Debug, Clone)]
pub struct LadderEntry {
    pub rho: Scalar,
    pub kind: ConditionKind,
}

/// Which interleaving pattern a ladder instantiates. S1/S2 guarantee one
/// solution, S3/S4 two, S5/S6 three; longer alternating ladders report
/// `Extended(len)` and guarantee len - 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    Extended(usize),
    None,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clause::S1 => f.write_str("S1"),
            Clause::S2 => f.write_str("S2"),
            Clause::S3 => f.write_str("S3"),
            Clause::S4 => f.write_str("S4"),
            Clause::S5 => f.write_str("S5"),
            Clause::S6 => f.write_str("S6"),
            Clause::Extended(n) => write!(f, "extended({n})"),
            Clause::None => f.write_str("none"),
        }
    }
}

fn clause_for(first_zero_side: bool, len: usize) -> Clause {
    match (len, first_zero_side) {
        (0 | 1, _) => Clause::None,
        (2, true) => Clause::S1,
        (2, false) => Clause::S2,
        (3, true) => Clause::S3,
        (3, false) => Clause::S4,
        (4, true) => Clause::S5,
        (4, false) => Clause::S6,
        (n, _) => Clause::Extended(n),
    }
}

/// One radius-gap constraint between consecutive ladder rungs.
#[derive(Debug, Clone)]
pub struct GapCheck {
    /// Human-readable form, e.g. `rho_1/c < rho_2`.
    pub constraint: String,
    pub lhs: Scalar,
    pub rhs: Scalar,
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct MultiplicityVerdict {
    pub clause: Clause,
    pub ladder: Vec<LadderEntry>,
    pub conditions: Vec<RhoCondition>,
    pub gap_checks: Vec<GapCheck>,
    /// True when every condition and every gap check holds.
    pub established: bool,
    /// Distinct fixed points certified: ladder length - 1 when established,
    /// otherwise the longest satisfied prefix minus 1.
    pub guaranteed_count: usize,
}

/// Evaluate a ladder of conditions.
///
/// The ladder must be non-empty, strictly increasing in rho, and must
/// alternate between the index0 side (index0 or index0_star) and index1;
/// anything else is a malformed-ladder error. Unsatisfied conditions and
/// failed gap checks are results, not errors.
///
/// Between consecutive rungs the shells must separate: after an index0-side
/// rung at rho the next radius must exceed rho/c, after an index1 rung it
/// must merely exceed rho.
pub fn multiplicity(
    p: &ProblemDef,
    k: &TheoryConstants,
    ladder: &[LadderEntry],
) -> Result<MultiplicityVerdict, IndexError> {
    if ladder.is_empty() {
        return Err(IndexError::Ladder("ladder is empty".into()));
    }
    for e in ladder {
        if !e.rho.is_finite() || e.rho.cmp_val(&Scalar::zero()) != Ordering::Greater {
            return Err(IndexError::Ladder(format!(
                "radius {} is not positive",
                e.rho
            )));
        }
    }
    for w in ladder.windows(2) {
        if w[0].rho.cmp_val(&w[1].rho) != Ordering::Less {
            return Err(IndexError::Ladder(format!(
                "radii must be strictly increasing, got {} then {}",
                w[0].rho, w[1].rho
            )));
        }
        if w[0].kind.is_zero_side() == w[1].kind.is_zero_side() {
            return Err(IndexError::Ladder(format!(
                "kinds must alternate between the index0 side and index1, got {} then {}",
                w[0].kind, w[1].kind
            )));
        }
    }

    let conditions = ladder
        .par_iter()
        .map(|e| check(p, k, e.kind, &e.rho))
        .collect::<Result<Vec<_>, _>>()?;

    let gap_checks: Vec<GapCheck> = ladder
        .windows(2)
        .enumerate()
        .map(|(idx, w)| {
            let n = idx + 1;
            let (constraint, lhs) = if w[0].kind.is_zero_side() {
                (
                    format!("rho_{}/c < rho_{}", n, n + 1),
                    w[0].rho.div(&k.c),
                )
            } else {
                (format!("rho_{} < rho_{}", n, n + 1), w[0].rho.clone())
            };
            let rhs = w[1].rho.clone();
            let satisfied = lhs.cmp_val(&rhs) == Ordering::Less;
            GapCheck {
                constraint,
                lhs,
                rhs,
                satisfied,
            }
        })
        .collect();

    let clause = clause_for(ladder[0].kind.is_zero_side(), ladder.len());

    // Longest prefix whose conditions and internal gaps all hold; a broken
    // rung invalidates everything above it but not below.
    let mut good = 0;
    for idx in 0..ladder.len() {
        if !conditions[idx].satisfied {
            break;
        }
        if idx > 0 && !gap_checks[idx - 1].satisfied {
            break;
        }
        good = idx + 1;
    }
    let established = good == ladder.len();
    let guaranteed_count = good.saturating_sub(1);

    Ok(MultiplicityVerdict {
        clause,
        ladder: ladder.to_vec(),
        conditions,
        gap_checks,
        established,
        guaranteed_count,
    })
}

// ---------------------------------------------------------------------------
// Ladder auto-search

/// Controls [`propose_ladder`]'s scan of candidate radii.
#[derive(Debug, Clone)]
pub struct AutoOptions {
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// Candidate radii per decade on a log grid.
    pub per_decade: usize,
    /// Coarse extremum grid used during the scan; the winning ladder is
    /// re-verified at the problem's full grid.
    pub scan_grid: usize,
}

impl Default for AutoOptions {
    fn default() -> Self {
        AutoOptions {
            rho_lo: 1e-2,
            rho_hi: 1e2,
            per_decade: 6,
            scan_grid: 12,
        }
    }
}

/// Scan a log grid of radii for satisfied conditions and assemble the
/// longest alternating ladder whose gap constraints hold, preferring plain
/// index0 over the star variant on the zero side. The result is re-verified
/// with [`multiplicity`] at the problem's configured extremum grid, so a
/// marginal scan hit can still come back not established. Returns `None`
/// when no condition holds anywhere on the grid.
pub fn propose_ladder(
    p: &ProblemDef,
    k: &TheoryConstants,
    opts: &AutoOptions,
) -> Result<Option<MultiplicityVerdict>, IndexError> {
    if !(opts.rho_lo > 0.0) || !(opts.rho_hi > opts.rho_lo) {
        return Err(IndexError::Request(
            "auto-search span must satisfy 0 < lo < hi".into(),
        ));
    }
    if opts.per_decade == 0 {
        return Err(IndexError::Request("per_decade must be positive".into()));
    }
    let decades = (opts.rho_hi / opts.rho_lo).log10();
    let n = (decades * opts.per_decade as f64).ceil() as usize + 1;
    let rhos: Vec<f64> = (0..n)
        .map(|j| (opts.rho_lo * 10f64.powf(j as f64 / opts.per_decade as f64)).min(opts.rho_hi))
        .collect();

    struct Slot {
        one: bool,
        zero: bool,
        star: bool,
    }
    let slots = rhos
        .par_iter()
        .map(|&r| {
            let rho = Scalar::Float(r);
            let one = check_with_grid(p, k, ConditionKind::Index1, &rho, opts.scan_grid)?;
            let zero = check_with_grid(p, k, ConditionKind::Index0, &rho, opts.scan_grid)?;
            let star = check_with_grid(p, k, ConditionKind::Index0Star, &rho, opts.scan_grid)?;
            Ok(Slot {
                one: one.satisfied,
                zero: zero.satisfied,
                star: star.satisfied,
            })
        })
        .collect::<Result<Vec<_>, IndexError>>()?;

    // Longest-chain DP over (grid point, side). side 0 = index0-ish,
    // side 1 = index1.
    let c = k.c.to_f64();
    let holds = |i: usize, side: usize| {
        if side == 0 {
            slots[i].zero || slots[i].star
        } else {
            slots[i].one
        }
    };
    let mut len = vec![[0usize; 2]; n];
    let mut prev = vec![[usize::MAX; 2]; n];
    let mut best = (0usize, 0usize, 0usize); // (len, i, side)
    for i in 0..n {
        for side in 0..2 {
            if !holds(i, side) {
                continue;
            }
            len[i][side] = 1;
            for j in 0..i {
                let pside = 1 - side;
                if len[j][pside] == 0 {
                    continue;
                }
                let gap_ok = if pside == 0 {
                    rhos[j] / c < rhos[i]
                } else {
                    rhos[j] < rhos[i]
                };
                if gap_ok && len[j][pside] + 1 > len[i][side] {
                    len[i][side] = len[j][pside] + 1;
                    prev[i][side] = j;
                }
            }
            if len[i][side] > best.0 {
                best = (len[i][side], i, side);
            }
        }
    }
    if best.0 == 0 {
        return Ok(None);
    }

    let mut chain = Vec::with_capacity(best.0);
    let (mut i, mut side) = (best.1, best.2);
    loop {
        let kind = if side == 1 {
            ConditionKind::Index1
        } else if slots[i].zero {
            ConditionKind::Index0
        } else {
            ConditionKind::Index0Star
        };
        chain.push(LadderEntry {
            rho: Scalar::Float(rhos[i]),
            kind,
        });
        let j = prev[i][side];
        if j == usize::MAX {
            break;
        }
        i = j;
        side = 1 - side;
    }
    chain.reverse();

    multiplicity(p, k, &chain).map(Some)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::compute_all;
    use crate::scalar::Scalar;
    use std::sync::OnceLock;

    fn example() -> &'static (ProblemDef, TheoryConstants) {
        static CELL: OnceLock<(ProblemDef, TheoryConstants)> = OnceLock::new();
        CELL.get_or_init(|| {
            let p = ProblemDef::load(std::path::Path::new(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/../../problems/example.problem"
            )))
            .expect("example problem loads");
            let k = compute_all(&p).expect("constants");
            (p, k)
        })
    }

    fn entry(rho: Scalar, kind: ConditionKind) -> LadderEntry {
        LadderEntry { rho, kind }
    }

    #[test]
    fn kind_tokens_round_trip() {
        for kind in [
            ConditionKind::Index1,
            ConditionKind::Index0,
            ConditionKind::Index0Star,
        ] {
            assert_eq!(kind.token().parse::<ConditionKind>().unwrap(), kind);
            assert_eq!(kind.to_string().parse::<ConditionKind>().unwrap(), kind);
        }
        assert!("both".parse::<ConditionKind>().is_err());
    }

    #[test]
    fn star_condition_at_small_radius() {
        let (p, k) = example();
        let rho = Scalar::ratio(1, 8);
        let cond = check_index0(p, k, &rho, true).unwrap();
        assert!(cond.satisfied);

        // Equation 1 carries the certificate via its exact override.
        let c0 = &cond.per_equation[0];
        assert!(c0.satisfied);
        assert_eq!(c0.f_extremum.source, ExtremumSource::UserExact);
        assert_eq!(c0.f_extremum.raw, Scalar::from_int(2));
        assert_eq!(c0.f_extremum.value, Scalar::from_int(16));
        assert_eq!(c0.threshold, Scalar::ratio(2768, 187));
        assert_eq!(
            c0.lhs,
            Scalar::from_int(16).mul(&Scalar::ratio(187, 2768))
        );
        assert!(c0.margin > 0.08 && c0.margin < 0.081);

        // Equation 2's inf over the star box is 0 at the corner; sampled,
        // unsatisfied, and that is fine for the some-i quantifier.
        let c1 = &cond.per_equation[1];
        assert!(!c1.satisfied);
        assert_eq!(c1.f_extremum.source, ExtremumSource::Sampled);
        assert!(c1.f_extremum.value.to_f64().abs() < 1e-12);
        assert!((cond.margin - c0.margin).abs() < 1e-15);
    }

    #[test]
    fn index1_condition_at_unit_radius() {
        let (p, k) = example();
        let cond = check_index1(p, k, &Scalar::one()).unwrap();
        assert!(cond.satisfied);

        let c0 = &cond.per_equation[0];
        assert_eq!(c0.threshold, Scalar::ratio(1052, 345));
        assert_eq!(c0.f_extremum.value, Scalar::ratio(9, 4));
        assert_eq!(c0.f_extremum.source, ExtremumSource::UserExact);
        assert_eq!(c0.lhs, Scalar::ratio(4177, 5280));

        let c1 = &cond.per_equation[1];
        assert_eq!(c1.f_extremum.value, Scalar::from_int(14));
        assert!((c1.threshold.to_f64() - 54.5787).abs() < 0.01);
        assert!(c1.satisfied && c1.lhs.to_f64() < 0.31);

        assert!((cond.margin - (1.0 - c0.lhs.to_f64())).abs() < 1e-15 || cond.margin <= 1.0);
        assert!(cond.margin > 0.0);
    }

    #[test]
    fn plain_index0_condition_at_large_radius() {
        let (p, k) = example();
        let rho = Scalar::from_int(11);
        let cond = check_index0(p, k, &rho, false).unwrap();
        assert!(cond.satisfied);

        let c0 = &cond.per_equation[0];
        // The lower-slope bracket does not depend on rho, so this threshold
        // matches the small-radius star check exactly.
        assert_eq!(c0.threshold, Scalar::ratio(2768, 187));
        assert_eq!(c0.f_extremum.raw, Scalar::ratio(1347, 8));
        assert_eq!(c0.f_extremum.value, Scalar::ratio(1347, 88));
        assert_eq!(c0.f_extremum.source, ExtremumSource::UserExact);
        assert!(c0.satisfied);

        let c1 = &cond.per_equation[1];
        assert!((c1.threshold.to_f64() - 141.4892).abs() < 0.01);
        assert_eq!(c1.f_extremum.raw, Scalar::from_int(1573));
        assert_eq!(c1.f_extremum.value, Scalar::from_int(143));
        assert!(c1.satisfied && c1.margin > 0.0 && c1.margin < 0.02);
    }

    #[test]
    fn extremum_examples() {
        let (p, _) = example();
        let bx = SearchBox {
            t: (Scalar::zero(), Scalar::one()),
            u: (Scalar::zero(), Scalar::one()),
            v: (Scalar::zero(), Scalar::one()),
        };
        let e = f_extremum(p, 0, ExtremumMode::Sup, &bx, &Scalar::one(), 16).unwrap();
        assert_eq!(e.value, Scalar::ratio(9, 4));

        let bx = SearchBox {
            t: (Scalar::ratio(1, 4), Scalar::ratio(3, 4)),
            u: (Scalar::zero(), Scalar::ratio(1, 2)),
            v: (Scalar::zero(), Scalar::ratio(1, 2)),
        };
        let e = f_extremum(p, 0, ExtremumMode::Inf, &bx, &Scalar::ratio(1, 8), 16).unwrap();
        assert_eq!(e.value, Scalar::from_int(16));

        let bx = SearchBox {
            t: (Scalar::ratio(1, 4), Scalar::ratio(3, 4)),
            u: (Scalar::zero(), Scalar::from_int(44)),
            v: (Scalar::from_int(11), Scalar::from_int(44)),
        };
        let e = f_extremum(p, 1, ExtremumMode::Inf, &bx, &Scalar::from_int(11), 16).unwrap();
        assert_eq!(e.value, Scalar::from_int(143));
    }

    #[test]
    fn sampling_agrees_with_overrides_at_corners() {
        let (p, _) = example();
        let mut stripped = p.clone();
        stripped.f_overrides.clear();

        // sup of f_1 over the unit cube sits at the corner (1,1,1), which
        // the lattice hits exactly.
        let bx = SearchBox {
            t: (Scalar::zero(), Scalar::one()),
            u: (Scalar::zero(), Scalar::one()),
            v: (Scalar::zero(), Scalar::one()),
        };
        let e = f_extremum(&stripped, 0, ExtremumMode::Sup, &bx, &Scalar::one(), 17).unwrap();
        assert_eq!(e.source, ExtremumSource::Sampled);
        assert!((e.value.to_f64() - 2.25).abs() < 1e-12);
        assert_eq!(e.grid, 17);
        assert_eq!(e.refinements, 1);

        // inf of f_1 is at u = v = 0, again a lattice corner.
        let bx = SearchBox {
            t: (Scalar::ratio(1, 4), Scalar::ratio(3, 4)),
            u: (Scalar::zero(), Scalar::ratio(1, 2)),
            v: (Scalar::zero(), Scalar::ratio(1, 2)),
        };
        let e = f_extremum(&stripped, 0, ExtremumMode::Inf, &bx, &Scalar::ratio(1, 8), 17).unwrap();
        assert!((e.value.to_f64() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn extremum_rejects_bad_requests() {
        let (p, _) = example();
        let bx = SearchBox {
            t: (Scalar::zero(), Scalar::one()),
            u: (Scalar::one(), Scalar::zero()),
            v: (Scalar::zero(), Scalar::one()),
        };
        assert!(matches!(
            f_extremum(p, 0, ExtremumMode::Sup, &bx, &Scalar::one(), 8),
            Err(IndexError::Request(_))
        ));
        let bx = SearchBox {
            t: (Scalar::zero(), Scalar::one()),
            u: (Scalar::zero(), Scalar::one()),
            v: (Scalar::zero(), Scalar::one()),
        };
        assert!(matches!(
            f_extremum(p, 0, ExtremumMode::Sup, &bx, &Scalar::one(), 1),
            Err(IndexError::Request(_))
        ));
        assert!(matches!(
            f_extremum(p, 0, ExtremumMode::Sup, &bx, &Scalar::zero(), 8),
            Err(IndexError::Request(_))
        ));
    }

    #[test]
    fn example_ladder_certifies_two_solutions() {
        let (p, k) = example();
        let ladder = [
            entry(Scalar::ratio(1, 8), ConditionKind::Index0Star),
            entry(Scalar::one(), ConditionKind::Index1),
            entry(Scalar::from_int(11), ConditionKind::Index0),
        ];
        let v = multiplicity(p, k, &ladder).unwrap();
        assert_eq!(v.clause, Clause::S3);
        assert!(v.established);
        assert_eq!(v.guaranteed_count, 2);
        assert_eq!(v.gap_checks.len(), 2);
        assert_eq!(v.gap_checks[0].constraint, "rho_1/c < rho_2");
        assert_eq!(v.gap_checks[0].lhs, Scalar::ratio(1, 2));
        assert!(v.gap_checks[0].satisfied);
        assert_eq!(v.gap_checks[1].constraint, "rho_2 < rho_3");
        assert!(v.gap_checks[1].satisfied);
        assert!(v.conditions.iter().all(|c| c.satisfied));
    }

    #[test]
    fn shorter_ladders_and_clause_names() {
        let (p, k) = example();

        // Dropping the top rung leaves an S1 ladder guaranteeing one.
        let v = multiplicity(
            p,
            k,
            &[
                entry(Scalar::ratio(1, 8), ConditionKind::Index0Star),
                entry(Scalar::one(), ConditionKind::Index1),
            ],
        )
        .unwrap();
        assert_eq!(v.clause, Clause::S1);
        assert!(v.established);
        assert_eq!(v.guaranteed_count, 1);

        let v = multiplicity(
            p,
            k,
            &[
                entry(Scalar::one(), ConditionKind::Index1),
                entry(Scalar::from_int(11), ConditionKind::Index0),
            ],
        )
        .unwrap();
        assert_eq!(v.clause, Clause::S2);
        assert_eq!(v.guaranteed_count, 1);

        // A single index1 rung certifies nothing.
        let v = multiplicity(p, k, &[entry(Scalar::one(), ConditionKind::Index1)]).unwrap();
        assert_eq!(v.clause, Clause::None);
        assert!(v.established);
        assert_eq!(v.guaranteed_count, 0);
    }

    #[test]
    fn malformed_ladders_are_rejected() {
        let (p, k) = example();
        assert!(matches!(
            multiplicity(p, k, &[]),
            Err(IndexError::Ladder(_))
        ));
        // Two index0-side rungs in a row.
        assert!(matches!(
            multiplicity(
                p,
                k,
                &[
                    entry(Scalar::ratio(1, 8), ConditionKind::Index0),
                    entry(Scalar::one(), ConditionKind::Index0Star),
                ]
            ),
            Err(IndexError::Ladder(_))
        ));
        // Radii out of order.
        assert!(matches!(
            multiplicity(
                p,
                k,
                &[
                    entry(Scalar::one(), ConditionKind::Index1),
                    entry(Scalar::ratio(1, 8), ConditionKind::Index0),
                ]
            ),
            Err(IndexError::Ladder(_))
        ));
        // Non-positive radius.
        assert!(matches!(
            multiplicity(p, k, &[entry(Scalar::zero(), ConditionKind::Index1)]),
            Err(IndexError::Ladder(_))
        ));
    }

    #[test]
    fn broken_rung_truncates_the_guarantee() {
        let (p, k) = example();
        let mut cheap = p.clone();
        cheap.options.f_grid = 9;
        // Third rung fails twice over: the gap needs rho_2/c = 44 < 20 and
        // the index1 condition is hopeless at rho = 20.
        let ladder = [
            entry(Scalar::one(), ConditionKind::Index1),
            entry(Scalar::from_int(11), ConditionKind::Index0),
            entry(Scalar::from_int(20), ConditionKind::Index1),
        ];
        let v = multiplicity(&cheap, k, &ladder).unwrap();
        assert_eq!(v.clause, Clause::S4);
        assert!(!v.established);
        assert!(!v.gap_checks[1].satisfied);
        assert!(!v.conditions[2].satisfied);
        assert_eq!(v.guaranteed_count, 1);
    }

    #[test]
    fn star_is_no_harder_than_plain_per_equation() {
        let (p, k) = example();
        let rho = Scalar::from_int(11);
        let plain = check_index0(p, k, &rho, false).unwrap();
        let star = check_index0(p, k, &rho, true).unwrap();
        for i in 0..2 {
            // The star box contains the plain box, so its inf is no larger.
            assert!(
                star.per_equation[i].lhs.to_f64() <= plain.per_equation[i].lhs.to_f64() + 1e-12
            );
        }
    }

    #[test]
    fn auto_search_recovers_a_three_rung_ladder() {
        let (p, k) = example();
        let mut cheap = p.clone();
        cheap.options.f_grid = 17;
        let opts = AutoOptions {
            rho_lo: 1e-2,
            rho_hi: 1e2,
            per_decade: 4,
            scan_grid: 9,
        };
        let v = propose_ladder(&cheap, k, &opts)
            .unwrap()
            .expect("a ladder exists in this span");
        assert!(v.established, "proposed ladder should re-verify");
        assert_eq!(v.clause, Clause::S3);
        assert_eq!(v.guaranteed_count, 2);
        // Alternation comes out of the chain builder by construction.
        for w in v.ladder.windows(2) {
            assert_ne!(w[0].kind.is_zero_side(), w[1].kind.is_zero_side());
        }
    }
}
