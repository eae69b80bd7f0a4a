//! Problem files: the JSON input format, standing-assumption checks, and
//! the per-term derived data every other module consumes.
//!
//! A problem couples two integral equations. Each equation carries a kernel
//! k_i, a weight g_i, a nonlinearity f_i(t, u, v) and a subinterval
//! [a_i, b_i]. Each of the four boundary terms (i, j) carries a coefficient
//! function gamma_ij, two positive Stieltjes measures beta_ij and delta_ij,
//! slope bounds h_lo <= h_hi and l_hi, and optionally the concrete
//! nonlinearities H_ij, L_ij (only the solver needs those).

use std::fmt;
use std::fs;
use std::path::Path;

use num::BigRational;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::expr::Expression;
use crate::kernels::{CustomKernel, Kernel};
use crate::quadrature::{maximize, minimize, snap_rational, Measure, QuadError, Quadrature};
use crate::scalar::{parse_rational, rat_to_f64, Scalar};

/// The standing assumptions a problem must satisfy. Every rejection names
/// exactly one of these.
pub const A_POSITIVE_MEASURES: &str = "beta_ij and delta_ij are positive Stieltjes measures";
pub const A_H_BETA_GAMMA: &str = "h_ij2 * beta_ij[gamma_ij] < 1";
pub const A_D_POSITIVE: &str = "D_i > 0";
pub const A_GAMMA_NONNEG: &str = "gamma_ij >= 0 on [0,1]";
pub const A_G_NONNEG: &str = "g_i >= 0 on [0,1]";
pub const A_PHI_G_POSITIVE: &str = "integral of Phi_i * g_i over [a_i, b_i] > 0";

/// One failed standing assumption, with the concrete numbers that broke it.
#[derive(Debug, Clone)]
pub struct Violation {
    pub assumption: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "violated assumption `{}`: {}", self.assumption, self.detail)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("numerical failure while deriving constants: {0}")]
    Numeric(String),
    #[error("{}", render_violations(.0))]
    Invalid(Vec<Violation>),
}

fn render_violations(vs: &[Violation]) -> String {
    let lines: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
    format!(
        "{} standing assumption(s) violated:\n  {}",
        vs.len(),
        lines.join("\n  ")
    )
}

// ---------------------------------------------------------------------------
// input schema

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemIn {
    spec_version: u32,
    equations: Vec<EquationIn>,
    boundary: Vec<BoundaryIn>,
    #[serde(default)]
    f_bounds: Vec<FBoundIn>,
    #[serde(default)]
    options: Options,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumIn {
    Num(f64),
    Str(String),
}

impl NumIn {
    fn scalar(&self, what: &str) -> Result<Scalar, LoadError> {
        let r = match self {
            NumIn::Num(x) => Scalar::from_f64_exact(*x),
            NumIn::Str(s) => parse_rational(s).map(Scalar::Exact),
        };
        r.ok_or_else(|| LoadError::Schema(format!("{what}: not a finite number")))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KernelIn {
    Name(String),
    Custom {
        below: String,
        above: String,
        phi: String,
        cone: String,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EquationIn {
    kernel: KernelIn,
    g: String,
    f: String,
    interval: [NumIn; 2],
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MeasureIn {
    #[serde(default)]
    atoms: Vec<AtomIn>,
    #[serde(default)]
    density: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomIn {
    at: NumIn,
    weight: NumIn,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryIn {
    i: usize,
    j: usize,
    gamma: String,
    #[serde(default)]
    beta: MeasureIn,
    #[serde(default)]
    delta: MeasureIn,
    h_lo: NumIn,
    h_hi: NumIn,
    l_hi: NumIn,
    #[serde(default, rename = "H")]
    h_fn: Option<String>,
    #[serde(default, rename = "L")]
    l_fn: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FBoundIn {
    i: usize,
    mode: String,
    t: [NumIn; 2],
    u: [NumIn; 2],
    v: [NumIn; 2],
    value: NumIn,
}

/// Tunables read from the problem file's `options` block; every field has a
/// default and the CLI can override the tolerances.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub quad_tol: f64,
    pub f_grid: usize,
    pub nodes: usize,
    pub damping: f64,
    pub picard_tol: f64,
    pub max_iters: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            quad_tol: 1e-10,
            f_grid: 64,
            nodes: 257,
            damping: 0.8,
            picard_tol: 1e-10,
            max_iters: 1000,
        }
    }
}

// ---------------------------------------------------------------------------
// compiled problem

/// A coefficient function gamma_ij together with the cone data derived from
/// it: its sup-norm over [0,1], its minimum over [a_i, b_i], and the ratio
/// c_gamma = min / sup. The identically-zero function is accepted with the
/// convention c_gamma = 1 so the term drops out of every formula downstream.
#[derive(Debug, Clone)]
pub struct GammaTerm {
    pub expr: Expression,
    pub sup_norm: Scalar,
    pub min_ab: Scalar,
    pub c_gamma: Scalar,
}

#[derive(Debug, Clone)]
pub struct BoundaryTerm {
    pub gamma: GammaTerm,
    pub beta: Measure,
    pub delta: Measure,
    pub h_lo: Scalar,
    pub h_hi: Scalar,
    pub l_hi: Scalar,
    pub h_fn: Option<Expression>,
    pub l_fn: Option<Expression>,
}

#[derive(Debug, Clone)]
pub struct Equation {
    pub kernel: Kernel,
    pub g: Expression,
    pub f: Expression,
    /// [a_i, b_i], the subinterval the cone's lower bound is taken over.
    pub interval: (Scalar, Scalar),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumMode {
    Sup,
    Inf,
}

impl fmt::Display for ExtremumMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtremumMode::Sup => "sup",
            ExtremumMode::Inf => "inf",
        })
    }
}

/// A user-supplied exact extremum of f_i over a box, overriding the sampled
/// estimate when the requested box matches.
#[derive(Debug, Clone)]
pub struct FOverride {
    /// 0-based equation index.
    pub i: usize,
    pub mode: ExtremumMode,
    pub t: (Scalar, Scalar),
    pub u: (Scalar, Scalar),
    pub v: (Scalar, Scalar),
    pub value: Scalar,
}

#[derive(Debug, Clone)]
pub struct ProblemDef {
    pub equations: [Equation; 2],
    /// Indexed [i][j], 0-based.
    pub boundary: [[BoundaryTerm; 2]; 2],
    pub f_overrides: Vec<FOverride>,
    pub options: Options,
    /// SHA-256 of the problem file bytes.
    pub digest: String,
}

/// Worst sandwich margins for one concrete H_ij or L_ij, sampled at
/// log-spaced points. Negative margins are violations; sampling reports
/// them but cannot prove their absence.
#[derive(Debug, Clone)]
pub struct SandwichRow {
    pub i: usize,
    pub j: usize,
    pub which: char,
    /// min over samples of F(w) - slope_lo * w (for H) or of F(w) (for L).
    pub worst_lower: f64,
    /// min over samples of slope_hi * w - F(w).
    pub worst_upper: f64,
    pub violations: usize,
}

impl ProblemDef {
    pub fn load(path: impl AsRef<Path>) -> Result<ProblemDef, LoadError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes).map_err(|_| {
            LoadError::Schema(format!("{} is not valid UTF-8", path.display()))
        })?;
        ProblemDef::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<ProblemDef, LoadError> {
        let digest = hex_digest(text.as_bytes());
        let raw: ProblemIn = serde_json::from_str(text)
            .map_err(|e| LoadError::Schema(e.to_string()))?;
        let p = compile(raw, digest)?;
        let violations = validate(&p)?;
        if violations.is_empty() {
            Ok(p)
        } else {
            Err(LoadError::Invalid(violations))
        }
    }

    pub fn quad(&self) -> Quadrature {
        Quadrature {
            tol: self.options.quad_tol,
            ..Quadrature::default()
        }
    }

    /// beta_ij applied to gamma_il; all indices 0-based. The measures of
    /// term (i, j) only ever act on the coefficient functions of the same
    /// equation i.
    pub fn beta_gamma(&self, i: usize, j: usize, l: usize) -> Result<Scalar, QuadError> {
        self.boundary[i][j]
            .beta
            .apply_expr(&self.boundary[i][l].gamma.expr, &self.quad())
    }

    /// delta_ij[1], the total mass of the delta measure.
    pub fn delta_one(&self, i: usize, j: usize) -> Result<Scalar, QuadError> {
        self.boundary[i][j].delta.total(&self.quad())
    }

    /// D_i = (1 - h_i12 b11)(1 - h_i22 b22) - h_i12 h_i22 b12 b21 where
    /// bjl = beta_ij[gamma_il]. Positive by assumption; the index-1
    /// condition divides by it.
    pub fn d_value(&self, i: usize) -> Result<Scalar, QuadError> {
        self.d_with(i, &self.boundary[i][0].h_hi, &self.boundary[i][1].h_hi)
    }

    /// Same determinant built from the lower slopes h_ij1; positive
    /// whenever D_i is, since the slopes only shrink.
    pub fn d_under_value(&self, i: usize) -> Result<Scalar, QuadError> {
        self.d_with(i, &self.boundary[i][0].h_lo, &self.boundary[i][1].h_lo)
    }

    fn d_with(&self, i: usize, h1: &Scalar, h2: &Scalar) -> Result<Scalar, QuadError> {
        let b11 = self.beta_gamma(i, 0, 0)?;
        let b12 = self.beta_gamma(i, 0, 1)?;
        let b21 = self.beta_gamma(i, 1, 0)?;
        let b22 = self.beta_gamma(i, 1, 1)?;
        let one = Scalar::one();
        let diag = one
            .sub(&h1.mul(&b11))
            .mul(&one.sub(&h2.mul(&b22)));
        Ok(diag.sub(&h1.mul(h2).mul(&b12).mul(&b21)))
    }

    /// Samples h_lo*w <= H(w) <= h_hi*w and 0 <= L(w) <= l_hi*w at n
    /// log-spaced points in (0, w_max], for every term that declares a
    /// concrete H or L. Violations are reported, never thrown: a finite
    /// sample cannot prove the bound, only discredit it.
    pub fn hl_report(&self, w_max: f64, n: usize) -> Result<Vec<SandwichRow>, LoadError> {
        let mut rows = vec![];
        let lo_exp = (w_max.log10() - 9.0).min(-6.0);
        let hi_exp = w_max.log10();
        for i in 0..2 {
            for j in 0..2 {
                let term = &self.boundary[i][j];
                let cases = [
                    ('H', &term.h_fn, Some(&term.h_lo), &term.h_hi),
                    ('L', &term.l_fn, None, &term.l_hi),
                ];
                for (which, f, slope_lo, slope_hi) in cases {
                    let Some(f) = f else { continue };
                    let mut worst_lower = f64::INFINITY;
                    let mut worst_upper = f64::INFINITY;
                    let mut violations = 0;
                    for k in 0..n {
                        let e = lo_exp + (hi_exp - lo_exp) * (k as f64 + 1.0) / n as f64;
                        let w = 10f64.powf(e);
                        let y = f.eval(&[w]).map_err(|err| {
                            LoadError::Numeric(format!(
                                "{which}[{}{}] at w={w}: {err}",
                                i + 1,
                                j + 1
                            ))
                        })?;
                        let lower = match slope_lo {
                            Some(h) => y - h.to_f64() * w,
                            None => y,
                        };
                        let upper = slope_hi.to_f64() * w - y;
                        worst_lower = worst_lower.min(lower);
                        worst_upper = worst_upper.min(upper);
                        if lower < -1e-12 || upper < -1e-12 {
                            violations += 1;
                        }
                    }
                    rows.push(SandwichRow {
                        i: i + 1,
                        j: j + 1,
                        which,
                        worst_lower,
                        worst_upper,
                        violations,
                    });
                }
            }
        }
        Ok(rows)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        use fmt::Write;
        write!(s, "{b:02x}").unwrap();
    }
    s
}

// ---------------------------------------------------------------------------
// compilation

fn parse_expr(src: &str, vars: &[&str], what: &str) -> Result<Expression, LoadError> {
    Expression::parse(src, vars)
        .map_err(|e| LoadError::Schema(format!("{what}: {e}")))
}

fn compile(raw: ProblemIn, digest: String) -> Result<ProblemDef, LoadError> {
    if raw.spec_version != 1 {
        return Err(LoadError::Schema(format!(
            "unsupported spec_version {} (this tool reads version 1)",
            raw.spec_version
        )));
    }
    if raw.equations.len() != 2 {
        return Err(LoadError::Schema(format!(
            "expected 2 equations, found {}",
            raw.equations.len()
        )));
    }
    if !(raw.options.quad_tol > 0.0)
        || !(raw.options.damping > 0.0 && raw.options.damping <= 1.0)
        || raw.options.f_grid < 2
        || raw.options.nodes < 9
    {
        return Err(LoadError::Schema(
            "options out of range: need quad_tol > 0, damping in (0,1], f_grid >= 2, nodes >= 9"
                .into(),
        ));
    }

    let mut equations = vec![];
    for (idx, eq) in raw.equations.into_iter().enumerate() {
        let i = idx + 1;
        let kernel = match eq.kernel {
            KernelIn::Name(name) => match name.as_str() {
                "second_order_dirichlet" => Kernel::SecondOrderDirichlet,
                "fourth_order_beam" => Kernel::FourthOrderBeam,
                other => {
                    return Err(LoadError::Schema(format!(
                        "equation {i}: unknown kernel `{other}` \
                         (known: second_order_dirichlet, fourth_order_beam, \
                         or an object with below/above/phi/cone)"
                    )))
                }
            },
            KernelIn::Custom {
                below,
                above,
                phi,
                cone,
            } => Kernel::Custom(Box::new(CustomKernel {
                below: parse_expr(&below, &["t", "s"], &format!("equation {i} kernel.below"))?,
                above: parse_expr(&above, &["t", "s"], &format!("equation {i} kernel.above"))?,
                phi: parse_expr(&phi, &["s"], &format!("equation {i} kernel.phi"))?,
                cone: parse_expr(&cone, &["t"], &format!("equation {i} kernel.cone"))?,
            })),
        };
        let g = parse_expr(&eq.g, &["s"], &format!("equation {i} g"))?;
        let f = parse_expr(&eq.f, &["t", "u", "v"], &format!("equation {i} f"))?;
        let a = eq.interval[0].scalar(&format!("equation {i} interval[0]"))?;
        let b = eq.interval[1].scalar(&format!("equation {i} interval[1]"))?;
        if a.is_negative()
            || b.cmp_val(&Scalar::one()).is_gt()
            || !a.cmp_val(&b).is_lt()
        {
            return Err(LoadError::Schema(format!(
                "equation {i}: interval must satisfy 0 <= a < b <= 1, got [{a}, {b}]"
            )));
        }
        equations.push(Equation {
            kernel,
            g,
            f,
            interval: (a, b),
        });
    }
    let equations: [Equation; 2] = equations.try_into().map_err(|_| unreachable!()).unwrap();

    if raw.boundary.len() != 4 {
        return Err(LoadError::Schema(format!(
            "expected 4 boundary terms, found {}",
            raw.boundary.len()
        )));
    }
    let mut slots: [[Option<BoundaryTerm>; 2]; 2] = Default::default();
    for term in raw.boundary {
        let (i, j) = (term.i, term.j);
        if !(1..=2).contains(&i) || !(1..=2).contains(&j) {
            return Err(LoadError::Schema(format!(
                "boundary term has indices ({i},{j}); both must be 1 or 2"
            )));
        }
        if slots[i - 1][j - 1].is_some() {
            return Err(LoadError::Schema(format!(
                "boundary term ({i},{j}) appears twice"
            )));
        }
        let tag = format!("boundary ({i},{j})");
        let gamma_expr = parse_expr(&term.gamma, &["t"], &format!("{tag} gamma"))?;
        let beta = compile_measure(term.beta, &format!("{tag} beta"))?;
        let delta = compile_measure(term.delta, &format!("{tag} delta"))?;
        let h_lo = term.h_lo.scalar(&format!("{tag} h_lo"))?;
        let h_hi = term.h_hi.scalar(&format!("{tag} h_hi"))?;
        let l_hi = term.l_hi.scalar(&format!("{tag} l_hi"))?;
        for (name, v) in [("h_lo", &h_lo), ("h_hi", &h_hi), ("l_hi", &l_hi)] {
            if v.is_negative() {
                return Err(LoadError::Schema(format!("{tag} {name} must be >= 0")));
            }
        }
        if h_hi.cmp_val(&h_lo).is_lt() {
            return Err(LoadError::Schema(format!("{tag}: h_lo exceeds h_hi")));
        }
        let h_fn = term
            .h_fn
            .map(|src| parse_expr(&src, &["w"], &format!("{tag} H")))
            .transpose()?;
        let l_fn = term
            .l_fn
            .map(|src| parse_expr(&src, &["w"], &format!("{tag} L")))
            .transpose()?;
        let interval = &equations[i - 1].interval;
        let gamma = derive_gamma(gamma_expr, &interval.0, &interval.1)
            .map_err(|e| LoadError::Numeric(format!("{tag} gamma: {e}")))?;
        slots[i - 1][j - 1] = Some(BoundaryTerm {
            gamma,
            beta,
            delta,
            h_lo,
            h_hi,
            l_hi,
            h_fn,
            l_fn,
        });
    }
    // four terms, in-range indices, no duplicates: every slot is filled
    let boundary = slots.map(|row| row.map(|t| t.expect("slot filled")));

    let mut f_overrides = vec![];
    for (n, fb) in raw.f_bounds.into_iter().enumerate() {
        let tag = format!("f_bounds[{n}]");
        if !(1..=2).contains(&fb.i) {
            return Err(LoadError::Schema(format!("{tag}: i must be 1 or 2")));
        }
        let mode = match fb.mode.as_str() {
            "sup" => ExtremumMode::Sup,
            "inf" => ExtremumMode::Inf,
            other => {
                return Err(LoadError::Schema(format!(
                    "{tag}: mode must be \"sup\" or \"inf\", got \"{other}\""
                )))
            }
        };
        let range = |pair: &[NumIn; 2], name: &str| -> Result<(Scalar, Scalar), LoadError> {
            let lo = pair[0].scalar(&format!("{tag} {name}[0]"))?;
            let hi = pair[1].scalar(&format!("{tag} {name}[1]"))?;
            if hi.cmp_val(&lo).is_lt() {
                return Err(LoadError::Schema(format!("{tag}: {name} range is reversed")));
            }
            Ok((lo, hi))
        };
        f_overrides.push(FOverride {
            i: fb.i - 1,
            mode,
            t: range(&fb.t, "t")?,
            u: range(&fb.u, "u")?,
            v: range(&fb.v, "v")?,
            value: fb.value.scalar(&format!("{tag} value"))?,
        });
    }

    Ok(ProblemDef {
        equations,
        boundary,
        f_overrides,
        options: raw.options,
        digest,
    })
}

fn compile_measure(m: MeasureIn, what: &str) -> Result<Measure, LoadError> {
    let mut atoms = vec![];
    for (n, atom) in m.atoms.into_iter().enumerate() {
        let at = atom.at.scalar(&format!("{what} atoms[{n}].at"))?;
        let weight = atom.weight.scalar(&format!("{what} atoms[{n}].weight"))?;
        if at.is_negative() || at.cmp_val(&Scalar::one()).is_gt() {
            return Err(LoadError::Schema(format!(
                "{what} atoms[{n}]: location {at} lies outside [0,1]"
            )));
        }
        atoms.push((at, weight));
    }
    let density = m
        .density
        .map(|src| parse_expr(&src, &["t"], &format!("{what} density")))
        .transpose()?;
    Ok(Measure { atoms, density })
}

/// Extremum of gamma over [lo, hi], preferring an exact value: the located
/// argument is snapped to a nearby small-denominator rational (interval
/// endpoints and expression breakpoints first) and re-evaluated on the exact
/// path when the snap reproduces the sampled value.
fn gamma_extremum(
    expr: &Expression,
    lo: &Scalar,
    hi: &Scalar,
    maximum: bool,
) -> Result<Scalar, String> {
    let (lo_f, hi_f) = (lo.to_f64(), hi.to_f64());
    let breaks: Vec<f64> = expr.breakpoints().iter().map(rat_to_f64).collect();
    let eval = |t: f64| expr.eval(&[t]);
    let ext = if maximum {
        maximize(eval, lo_f, hi_f, &breaks).map_err(|e| e.to_string())?
    } else {
        minimize(eval, lo_f, hi_f, &breaks).map_err(|e| e.to_string())?
    };
    let mut candidates: Vec<BigRational> = vec![];
    candidates.extend(lo.as_exact().cloned());
    candidates.extend(hi.as_exact().cloned());
    candidates.extend(expr.breakpoints());
    if let Some(r) = snap_rational(ext.arg, &candidates, 128, 1e-5) {
        let inside = rat_to_f64(&r) >= lo_f - 1e-12 && rat_to_f64(&r) <= hi_f + 1e-12;
        if inside {
            if let Ok(v) = expr.eval_scalar(&[Scalar::Exact(r)]) {
                if (v.to_f64() - ext.value).abs() <= 1e-9 * (1.0 + ext.value.abs()) {
                    return Ok(v);
                }
            }
        }
    }
    Ok(Scalar::Float(ext.value))
}

fn derive_gamma(expr: Expression, a: &Scalar, b: &Scalar) -> Result<GammaTerm, String> {
    let zero = Scalar::zero();
    let one = Scalar::one();
    let sup_norm = gamma_extremum(&expr, &zero, &one, true)?;
    if sup_norm.is_zero() {
        // vanishing coefficient: the whole term drops out downstream
        return Ok(GammaTerm {
            expr,
            sup_norm: Scalar::zero(),
            min_ab: Scalar::zero(),
            c_gamma: Scalar::one(),
        });
    }
    let min_ab = gamma_extremum(&expr, a, b, false)?;
    let c_gamma = min_ab.div(&sup_norm);
    Ok(GammaTerm {
        expr,
        sup_norm,
        min_ab,
        c_gamma,
    })
}

// ---------------------------------------------------------------------------
// standing-assumption checks

fn validate(p: &ProblemDef) -> Result<Vec<Violation>, LoadError> {
    let mut out = vec![];
    let quad = p.quad();

    for i in 0..2 {
        for j in 0..2 {
            let term = &p.boundary[i][j];
            for (name, m) in [("beta", &term.beta), ("delta", &term.delta)] {
                for (at, w) in &m.atoms {
                    if w.is_negative() {
                        out.push(Violation {
                            assumption: A_POSITIVE_MEASURES,
                            detail: format!(
                                "{name}_{}{} has an atom of weight {w} at t = {at}",
                                i + 1,
                                j + 1
                            ),
                        });
                    }
                }
                if let Some(d) = &m.density {
                    let neg = sampled_min(d, 0.0, 1.0)
                        .map_err(|e| LoadError::Numeric(format!("{name} density: {e}")))?;
                    if neg.1 < -1e-12 {
                        out.push(Violation {
                            assumption: A_POSITIVE_MEASURES,
                            detail: format!(
                                "{name}_{}{} density reaches {} at t = {}",
                                i + 1,
                                j + 1,
                                neg.1,
                                neg.0
                            ),
                        });
                    }
                }
            }
        }
    }

    for i in 0..2 {
        for j in 0..2 {
            let expr = &p.boundary[i][j].gamma.expr;
            let (at, min) = sampled_min(expr, 0.0, 1.0)
                .map_err(|e| LoadError::Numeric(format!("gamma_{}{}: {e}", i + 1, j + 1)))?;
            if min < -1e-12 {
                out.push(Violation {
                    assumption: A_GAMMA_NONNEG,
                    detail: format!("gamma_{}{} reaches {min} at t = {at}", i + 1, j + 1),
                });
            }
        }
    }

    for (i, eq) in p.equations.iter().enumerate() {
        let (at, min) = sampled_min(&eq.g, 0.0, 1.0)
            .map_err(|e| LoadError::Numeric(format!("g_{}: {e}", i + 1)))?;
        if min < -1e-12 {
            out.push(Violation {
                assumption: A_G_NONNEG,
                detail: format!("g_{} reaches {min} at s = {at}", i + 1),
            });
        }
    }

    // the two determinant-side checks only make sense on nonnegative data;
    // run them regardless, the diagnostics stay meaningful
    for i in 0..2 {
        for j in 0..2 {
            let bg = p
                .beta_gamma(i, j, j)
                .map_err(|e| LoadError::Numeric(e.to_string()))?;
            let prod = p.boundary[i][j].h_hi.mul(&bg);
            if !prod.cmp_val(&Scalar::one()).is_lt() {
                out.push(Violation {
                    assumption: A_H_BETA_GAMMA,
                    detail: format!(
                        "h_{i1}{j1}2 * beta_{i1}{j1}[gamma_{i1}{j1}] = {prod} >= 1",
                        i1 = i + 1,
                        j1 = j + 1
                    ),
                });
            }
        }
    }

    for i in 0..2 {
        let d = p
            .d_value(i)
            .map_err(|e| LoadError::Numeric(e.to_string()))?;
        if !d.cmp_val(&Scalar::zero()).is_gt() {
            out.push(Violation {
                assumption: A_D_POSITIVE,
                detail: format!("D_{} = {d}", i + 1),
            });
        }
    }

    for (i, eq) in p.equations.iter().enumerate() {
        let (a, b) = (eq.interval.0.to_f64(), eq.interval.1.to_f64());
        let mut breaks: Vec<f64> = eq.g.breakpoints().iter().map(rat_to_f64).collect();
        breaks.extend(eq.kernel.t_breakpoints().iter().map(rat_to_f64));
        let kernel = &eq.kernel;
        let g = &eq.g;
        let val = quad
            .integrate(|s| Ok(kernel.phi(s)? * g.eval(&[s])?), a, b, &breaks)
            .map_err(|e| LoadError::Numeric(format!("Phi_{} * g_{}: {e}", i + 1, i + 1)))?;
        if val <= 1e-12 {
            out.push(Violation {
                assumption: A_PHI_G_POSITIVE,
                detail: format!(
                    "integral of Phi_{} * g_{} over [{}, {}] = {val:.3e}",
                    i + 1,
                    i + 1,
                    eq.interval.0,
                    eq.interval.1
                ),
            });
        }
    }

    Ok(out)
}

/// Dense 513-point sample (plus breakpoints) of a one-variable expression,
/// returning the smallest value seen and where.
fn sampled_min(
    expr: &Expression,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64), crate::expr::EvalError> {
    let mut best = (lo, f64::INFINITY);
    let n = 512;
    let mut points: Vec<f64> = (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    points.extend(
        expr.breakpoints()
            .iter()
            .map(rat_to_f64)
            .filter(|x| (lo..=hi).contains(x)),
    );
    for x in points {
        let y = expr.eval(&[x])?;
        if y < best.1 {
            best = (x, y);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_text() -> String {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../problems/example.problem"
        );
        fs::read_to_string(path).expect("example problem file")
    }

    fn example() -> ProblemDef {
        ProblemDef::from_text(&example_text()).expect("example problem loads")
    }

    fn rat(p: i64, q: i64) -> Scalar {
        Scalar::ratio(p, q)
    }

    #[test]
    fn example_loads_and_derives_gamma_constants() {
        let p = example();
        // gamma_11 = 1 - t: sup 1 at t=0, min 1/4 at t=3/4
        let g11 = &p.boundary[0][0].gamma;
        assert_eq!(g11.sup_norm, Scalar::one());
        assert_eq!(g11.min_ab, rat(1, 4));
        assert_eq!(g11.c_gamma, rat(1, 4));
        // gamma_12 = t
        let g12 = &p.boundary[0][1].gamma;
        assert_eq!(g12.c_gamma, rat(1, 4));
        // gamma_21 = 1 - t
        assert_eq!(p.boundary[1][0].gamma.c_gamma, rat(1, 4));
        // gamma_22 = t(1-t^2)/6: sup sqrt(3)/27 at t=1/sqrt(3) (not a
        // rational point, so the value stays on the float track), min 5/128
        let g22 = &p.boundary[1][1].gamma;
        let sqrt3 = 3.0f64.sqrt();
        assert!((g22.sup_norm.to_f64() - sqrt3 / 27.0).abs() < 1e-12);
        assert_eq!(g22.min_ab, rat(5, 128));
        assert!(!g22.sup_norm.is_exact());
        assert!((g22.c_gamma.to_f64() - 45.0 * sqrt3 / 128.0).abs() < 1e-12);
    }

    #[test]
    fn beta_gamma_table_is_exact() {
        let p = example();
        let cases = [
            ((0, 0, 0), rat(3, 4)),
            ((0, 0, 1), rat(1, 4)),
            ((0, 1, 0), rat(1, 4)),
            ((0, 1, 1), rat(3, 4)),
            ((1, 0, 0), rat(2, 3)),
            ((1, 0, 1), rat(4, 81)),
            ((1, 1, 0), rat(1, 3)),
            ((1, 1, 1), rat(5, 81)),
        ];
        for ((i, j, l), want) in cases {
            let got = p.beta_gamma(i, j, l).unwrap();
            assert!(got.is_exact(), "beta_gamma({i},{j},{l}) left the exact track");
            assert_eq!(got, want, "beta_gamma({i},{j},{l})");
        }
    }

    #[test]
    fn determinants_match_hand_computation() {
        let p = example();
        assert_eq!(p.d_value(0).unwrap(), rat(11, 24));
        assert_eq!(p.d_value(1).unwrap(), rat(43, 54));
        assert_eq!(p.d_under_value(0).unwrap(), rat(173, 216));
        assert_eq!(p.d_under_value(1).unwrap(), rat(209, 243));
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(p.delta_one(i, j).unwrap(), Scalar::one());
            }
        }
    }

    #[test]
    fn digest_is_deterministic_and_content_sensitive() {
        let text = example_text();
        let a = ProblemDef::from_text(&text).unwrap().digest;
        let b = ProblemDef::from_text(&text).unwrap().digest;
        assert_eq!(a, b);
        let other = format!("{text}\n");
        let c = ProblemDef::from_text(&other).unwrap().digest;
        assert_ne!(a, c);
    }

    #[test]
    fn sandwich_margins_nonnegative_for_example() {
        let p = example();
        let rows = p.hl_report(100.0, 2000).unwrap();
        assert!(!rows.is_empty());
        for r in &rows {
            assert_eq!(r.violations, 0, "{}_{}{}", r.which, r.i, r.j);
            assert!(r.worst_lower >= -1e-12);
            assert!(r.worst_upper >= -1e-12);
        }
    }

    fn mutate(f: impl FnOnce(&mut serde_json::Value)) -> Result<ProblemDef, LoadError> {
        let mut v: serde_json::Value = serde_json::from_str(&example_text()).unwrap();
        f(&mut v);
        ProblemDef::from_text(&serde_json::to_string(&v).unwrap())
    }

    fn expect_violation(r: Result<ProblemDef, LoadError>, assumption: &str) {
        match r {
            Err(LoadError::Invalid(vs)) => {
                assert!(
                    vs.iter().any(|v| v.assumption == assumption),
                    "expected `{assumption}`, got: {vs:?}"
                );
            }
            Err(e) => panic!("expected assumption violation, got: {e}"),
            Ok(_) => panic!("expected rejection for `{assumption}`"),
        }
    }

    #[test]
    fn rejects_negative_atom_weight() {
        let r = mutate(|v| {
            v["boundary"][0]["beta"]["atoms"][0]["weight"] = serde_json::json!(-1);
        });
        expect_violation(r, A_POSITIVE_MEASURES);
    }

    #[test]
    fn rejects_h_beta_gamma_reaching_one() {
        // h_112 * beta_11[gamma_11] = 2 * 3/4 >= 1
        let r = mutate(|v| {
            v["boundary"][0]["h_hi"] = serde_json::json!(2);
        });
        expect_violation(r, A_H_BETA_GAMMA);
    }

    #[test]
    fn rejects_nonpositive_determinant() {
        // keep both diagonal products below 1 but push the determinant
        // negative through the off-diagonal part
        let r = mutate(|v| {
            v["boundary"][0]["h_hi"] = serde_json::json!("13/10");
            v["boundary"][1]["h_hi"] = serde_json::json!("33/25");
        });
        expect_violation(r, A_D_POSITIVE);
    }

    #[test]
    fn rejects_negative_gamma() {
        let r = mutate(|v| {
            v["boundary"][0]["gamma"] = serde_json::json!("1 - 2*t");
        });
        expect_violation(r, A_GAMMA_NONNEG);
    }

    #[test]
    fn rejects_negative_g() {
        let r = mutate(|v| {
            v["equations"][0]["g"] = serde_json::json!("-1");
        });
        expect_violation(r, A_G_NONNEG);
    }

    #[test]
    fn rejects_weight_vanishing_on_the_subinterval() {
        let r = mutate(|v| {
            v["equations"][0]["g"] = serde_json::json!(
                "piecewise(s in [0,1/4): 1; s in [1/4,3/4]: 0; s in (3/4,1]: 1)"
            );
        });
        expect_violation(r, A_PHI_G_POSITIVE);
    }

    #[test]
    fn schema_rejections_are_not_violations() {
        for (label, f) in [
            (
                "spec_version",
                Box::new(|v: &mut serde_json::Value| {
                    v["spec_version"] = serde_json::json!(2);
                }) as Box<dyn FnOnce(&mut serde_json::Value)>,
            ),
            (
                "kernel name",
                Box::new(|v: &mut serde_json::Value| {
                    v["equations"][0]["kernel"] = serde_json::json!("laplace");
                }),
            ),
            (
                "duplicate boundary term",
                Box::new(|v: &mut serde_json::Value| {
                    v["boundary"][1]["i"] = serde_json::json!(1);
                    v["boundary"][1]["j"] = serde_json::json!(1);
                }),
            ),
            (
                "bad f_bounds mode",
                Box::new(|v: &mut serde_json::Value| {
                    v["f_bounds"][0]["mode"] = serde_json::json!("max");
                }),
            ),
            (
                "reversed interval",
                Box::new(|v: &mut serde_json::Value| {
                    v["equations"][0]["interval"] = serde_json::json!(["3/4", "1/4"]);
                }),
            ),
        ] {
            let r = mutate(f);
            assert!(
                matches!(r, Err(LoadError::Schema(_))),
                "{label}: expected schema error, got {r:?}"
            );
        }
    }

    #[test]
    fn vanishing_gamma_uses_the_degenerate_convention() {
        let p = mutate(|v| {
            v["boundary"][0]["gamma"] = serde_json::json!("0");
        })
        .unwrap();
        let g = &p.boundary[0][0].gamma;
        assert!(g.sup_norm.is_zero());
        assert_eq!(g.c_gamma, Scalar::one());
    }

    #[test]
    fn f_overrides_parse() {
        let p = example();
        assert_eq!(p.f_overrides.len(), 5);
        let first = &p.f_overrides[0];
        assert_eq!(first.i, 0);
        assert_eq!(first.mode, ExtremumMode::Inf);
        assert_eq!(first.value, Scalar::from_int(2));
    }
}
