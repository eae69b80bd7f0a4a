//! A small expression language for problem data.
//!
//! Problem files carry functions (kernels, weights, boundary coefficient
//! functions, nonlinearities) as strings in a deliberately small grammar:
//! rational literals, declared variables, `+ - * / ^`, a fixed set of
//! functions (`sqrt`, `abs`, `exp`, `log`, `sin`, `cos`, `min`, `max`), and
//! a top-level `piecewise(...)` form whose guards must tile an interval.
//!
//! Two evaluators share one AST. [`Expression::eval_scalar`] runs on
//! [`Scalar`] values and keeps results exact while every operation is
//! rational-closed; [`Expression::eval`] is the `f64` fast path used inside
//! quadrature and iteration loops. Constant subtrees are folded to exact
//! rationals at parse time, and both evaluators read the same folded tree
//! and literal caches, so on the same `f64` bindings they agree bit for bit.
//!
//! Power binds tightest, then unary minus, then `*` `/`, then `+` `-`;
//! `^` is right-associative, so `-2^2` is `-4` and `2^3^2` is `512`.

mod eval;
mod lexer;
mod parser;
mod printer;

use num::rational::BigRational;
use num::{BigInt, Signed, ToPrimitive, Zero};

use crate::poly::{PiecewisePoly, Poly};
use crate::scalar::{rat_sqrt_exact, rat_to_f64, Scalar};

/// Parse failure with a 1-based source position.
#[derive(Debug, Clone, thiserror::Error)]
#[error("parse error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// Domain failure during evaluation; `subexpr` is the offending subtree
/// rendered back to source form.
#[derive(Debug, Clone, thiserror::Error)]
#[error("cannot evaluate `{subexpr}`: {message}")]
pub struct EvalError {
    pub subexpr: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fn1 {
    Sqrt,
    Abs,
    Exp,
    Log,
    Sin,
    Cos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fn2 {
    Min,
    Max,
}

/// Exact literal with its cached nearest-f64 image.
#[derive(Clone, Debug, PartialEq)]
pub struct Lit {
    pub value: BigRational,
    pub approx: f64,
}

impl Lit {
    pub fn new(value: BigRational) -> Self {
        let approx = rat_to_f64(&value);
        Lit { value, approx }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Lit(Lit),
    Var(usize),
    Neg(Box<Ast>),
    Bin(BinOp, Box<Ast>, Box<Ast>),
    Call1(Fn1, Box<Ast>),
    Call2(Fn2, Box<Ast>, Box<Ast>),
}

/// One piecewise branch; `hi = None` means unbounded above.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub lo: BigRational,
    pub lo_closed: bool,
    pub hi: Option<BigRational>,
    pub hi_closed: bool,
    pub lo_approx: f64,
    pub hi_approx: f64,
    pub body: Ast,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Single(Ast),
    Piecewise { var: usize, branches: Vec<Branch> },
}

/// A parsed, constant-folded expression over named variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    source: String,
    vars: Vec<String>,
    body: Body,
}

impl Expression {
    /// Parses `src` over the declared variables. The stored source is the
    /// canonical rendering, so `parse(e.source())` reproduces `e`.
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expression, ParseError> {
        let vars: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        for v in &vars {
            if parser::is_reserved(v) {
                return Err(ParseError {
                    line: 1,
                    col: 1,
                    message: format!("variable name `{v}` is reserved"),
                });
            }
        }
        let toks = lexer::lex(src).map_err(|e| at_offset(src, e.offset, e.message))?;
        let body = parser::parse_body(&toks, &vars, src.len())
            .map_err(|e| at_offset(src, e.offset, e.message))?;
        let body = match body {
            Body::Single(ast) => Body::Single(fold(ast)),
            Body::Piecewise { var, branches } => Body::Piecewise {
                var,
                branches: branches
                    .into_iter()
                    .map(|b| Branch {
                        body: fold(b.body),
                        ..b
                    })
                    .collect(),
            },
        };
        let mut e = Expression {
            source: String::new(),
            vars,
            body,
        };
        e.source = printer::render(&e);
        Ok(e)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn is_piecewise(&self) -> bool {
        matches!(self.body, Body::Piecewise { .. })
    }

    /// Dual-track evaluation; exact bindings yield exact results wherever
    /// the expression is rational-closed.
    pub fn eval_scalar(&self, binds: &[Scalar]) -> Result<Scalar, EvalError> {
        self.check_arity(binds.len())?;
        eval::eval_scalar(self, binds)
    }

    /// Float fast path; agrees with [`eval_scalar`](Self::eval_scalar) on
    /// `f64` bindings bit for bit, including which inputs are rejected.
    pub fn eval(&self, binds: &[f64]) -> Result<f64, EvalError> {
        self.check_arity(binds.len())?;
        eval::eval_f64(self, binds)
    }

    fn check_arity(&self, got: usize) -> Result<(), EvalError> {
        if got != self.vars.len() {
            return Err(EvalError {
                subexpr: self.source.clone(),
                message: format!("expected {} bindings, got {got}", self.vars.len()),
            });
        }
        Ok(())
    }

    /// The expression as a polynomial in its first variable, when it is one.
    pub fn as_poly(&self) -> Option<Poly> {
        self.as_poly_in(0, &[])
    }

    /// Polynomial in variable `target` with the `fixed` variables pinned to
    /// exact rationals; None when some other variable stays free or the
    /// expression is not polynomial.
    pub fn as_poly_in(&self, target: usize, fixed: &[(usize, BigRational)]) -> Option<Poly> {
        match &self.body {
            Body::Single(ast) => ast_to_poly(ast, target, fixed),
            Body::Piecewise { .. } => None,
        }
    }

    /// The expression as a piecewise polynomial covering `[lo, hi]`,
    /// clipping unbounded branches to the requested span.
    pub fn as_piecewise_poly(
        &self,
        lo: &BigRational,
        hi: &BigRational,
    ) -> Option<PiecewisePoly> {
        match &self.body {
            Body::Single(ast) => {
                let p = ast_to_poly(ast, 0, &[])?;
                Some(PiecewisePoly::single(lo.clone(), hi.clone(), p))
            }
            Body::Piecewise { var, branches } => {
                if *var != 0 {
                    return None;
                }
                let mut pieces = vec![];
                for b in branches {
                    let p = ast_to_poly(&b.body, 0, &[])?;
                    let plo = if &b.lo > lo { b.lo.clone() } else { lo.clone() };
                    let phi = match &b.hi {
                        Some(h) if h < hi => h.clone(),
                        _ => hi.clone(),
                    };
                    if plo < phi {
                        pieces.push((plo, phi, p));
                    }
                }
                if pieces.is_empty() {
                    return None;
                }
                Some(PiecewisePoly { pieces })
            }
        }
    }

    /// Finite guard endpoints, ascending; integration panels must not
    /// straddle these.
    pub fn breakpoints(&self) -> Vec<BigRational> {
        let mut out: Vec<BigRational> = vec![];
        if let Body::Piecewise { branches, .. } = &self.body {
            for b in branches {
                out.push(b.lo.clone());
                if let Some(h) = &b.hi {
                    out.push(h.clone());
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

impl std::fmt::Display for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.source)
    }
}

fn at_offset(src: &str, offset: usize, message: String) -> ParseError {
    let mut line = 1;
    let mut col = 1;
    for (i, c) in src.char_indices() {
        if i >= offset {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    ParseError { line, col, message }
}

/// Largest |n| treated as an integer power. Folding and both evaluators
/// must share this cap, otherwise the exact path could produce a huge
/// rational where the float path overflows.
const MAX_INT_EXP: u32 = 4096;

/// Bottom-up constant folding over exact rationals. Subtrees whose folding
/// would be a domain error (division by zero, zero to a negative power) are
/// left alone so evaluation reports them with the right context.
fn fold(ast: Ast) -> Ast {
    match ast {
        Ast::Lit(_) | Ast::Var(_) => ast,
        Ast::Neg(a) => {
            let a = fold(*a);
            if let Ast::Lit(l) = &a {
                return Ast::Lit(Lit::new(-&l.value));
            }
            Ast::Neg(Box::new(a))
        }
        Ast::Bin(op, a, b) => {
            let a = fold(*a);
            let b = fold(*b);
            if let (Ast::Lit(la), Ast::Lit(lb)) = (&a, &b) {
                if let Some(v) = fold_bin(&op, &la.value, &lb.value) {
                    return Ast::Lit(Lit::new(v));
                }
            }
            Ast::Bin(op, Box::new(a), Box::new(b))
        }
        Ast::Call1(f, a) => {
            let a = fold(*a);
            if let Ast::Lit(l) = &a {
                let v = match f {
                    Fn1::Abs => Some(l.value.abs()),
                    Fn1::Sqrt => rat_sqrt_exact(&l.value),
                    _ => None,
                };
                if let Some(v) = v {
                    return Ast::Lit(Lit::new(v));
                }
            }
            Ast::Call1(f, Box::new(a))
        }
        Ast::Call2(f, a, b) => {
            let a = fold(*a);
            let b = fold(*b);
            if let (Ast::Lit(la), Ast::Lit(lb)) = (&a, &b) {
                let v = match f {
                    Fn2::Min => la.value.clone().min(lb.value.clone()),
                    Fn2::Max => la.value.clone().max(lb.value.clone()),
                };
                return Ast::Lit(Lit::new(v));
            }
            Ast::Call2(f, Box::new(a), Box::new(b))
        }
    }
}

fn fold_bin(op: &BinOp, a: &BigRational, b: &BigRational) -> Option<BigRational> {
    match op {
        BinOp::Add => Some(a + b),
        BinOp::Sub => Some(a - b),
        BinOp::Mul => Some(a * b),
        BinOp::Div => {
            if b.is_zero() {
                None
            } else {
                Some(a / b)
            }
        }
        BinOp::Pow => {
            if !b.is_integer() {
                return None;
            }
            let n = b.to_integer().to_i32()?;
            if n.unsigned_abs() > MAX_INT_EXP {
                return None;
            }
            if a.is_zero() && n < 0 {
                return None;
            }
            Some(num::pow::Pow::pow(a, n))
        }
    }
}

fn ast_to_poly(ast: &Ast, target: usize, fixed: &[(usize, BigRational)]) -> Option<Poly> {
    match ast {
        Ast::Lit(l) => Some(Poly::constant(l.value.clone())),
        Ast::Var(i) if *i == target => Some(Poly::x()),
        Ast::Var(i) => fixed
            .iter()
            .find(|(j, _)| j == i)
            .map(|(_, v)| Poly::constant(v.clone())),
        Ast::Neg(a) => Some(
            ast_to_poly(a, target, fixed)?
                .scale(&BigRational::from_integer(BigInt::from(-1))),
        ),
        Ast::Bin(op, a, b) => {
            let pa = ast_to_poly(a, target, fixed)?;
            match op {
                BinOp::Add => Some(pa.add(&ast_to_poly(b, target, fixed)?)),
                BinOp::Sub => Some(pa.sub(&ast_to_poly(b, target, fixed)?)),
                BinOp::Mul => Some(pa.mul(&ast_to_poly(b, target, fixed)?)),
                BinOp::Div => {
                    let pb = ast_to_poly(b, target, fixed)?;
                    if pb.degree() == Some(0) {
                        let c = &pb.coeffs()[0];
                        Some(pa.scale(&(BigRational::from_integer(BigInt::from(1)) / c)))
                    } else {
                        None
                    }
                }
                BinOp::Pow => {
                    if let Ast::Lit(l) = &**b {
                        if l.value.is_integer() && !l.value.is_negative() {
                            let n = l.value.to_integer().to_u32()?;
                            if n <= 64 {
                                return Some(pa.pow(n));
                            }
                        }
                    }
                    None
                }
            }
        }
        Ast::Call1(..) | Ast::Call2(..) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn exact(e: &Expression, binds: &[Scalar]) -> BigRational {
        match e.eval_scalar(binds).unwrap() {
            Scalar::Exact(r) => r,
            Scalar::Float(x) => panic!("expected exact result, got {x}"),
        }
    }

    #[test]
    fn cubic_coefficient_function_evaluates_exactly() {
        let e = Expression::parse("(1/6)*t*(1 - t^2)", &["t"]).unwrap();
        assert_eq!(exact(&e, &[Scalar::ratio(2, 3)]), rat(5, 81));
        assert_eq!(exact(&e, &[Scalar::zero()]), rat(0, 1));
    }

    #[test]
    fn piecewise_selects_closed_branch_at_shared_endpoint() {
        let e = Expression::parse(
            "piecewise(w in [0,1]: w/2; w in (1,inf): w/6 + 1/3)",
            &["w"],
        )
        .unwrap();
        assert_eq!(exact(&e, &[Scalar::one()]), rat(1, 2));
        assert_eq!(exact(&e, &[Scalar::zero()]), rat(0, 1));
        assert_eq!(exact(&e, &[Scalar::from_int(4)]), rat(1, 1));
        let below = e.eval_scalar(&[Scalar::ratio(-1, 2)]).unwrap_err();
        assert!(below.message.contains("piecewise"), "{below}");
    }

    #[test]
    fn three_variable_nonlinearity() {
        let e = Expression::parse("(1/8)*(u^3 + t^3*v^3) + 2", &["t", "u", "v"]).unwrap();
        let one = Scalar::one();
        assert_eq!(exact(&e, &[one.clone(), one.clone(), one]), rat(9, 4));
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        let e = Expression::parse("-2^2", &[]).unwrap();
        assert_eq!(exact(&e, &[]), rat(-4, 1));
        let e = Expression::parse("2^-2", &[]).unwrap();
        assert_eq!(exact(&e, &[]), rat(1, 4));
        let e = Expression::parse("2^3^2", &[]).unwrap();
        assert_eq!(exact(&e, &[]), rat(512, 1));
        let e = Expression::parse("-t^2", &["t"]).unwrap();
        assert_eq!(exact(&e, &[Scalar::from_int(3)]), rat(-9, 1));
    }

    #[test]
    fn unary_minus_binds_tighter_than_mul() {
        // -a*b parses as (-a)*b; same value, but the print side must
        // parenthesize -(a*b) to keep the trees distinct.
        let e = Expression::parse("-(t*2) + -t*2", &["t"]).unwrap();
        assert_eq!(exact(&e, &[Scalar::from_int(5)]), rat(-20, 1));
        assert_eq!(e.source(), "-(t*2) + -t*2");
    }

    #[test]
    fn constant_folding_is_exact() {
        let e = Expression::parse("1/3 + 1/6", &[]).unwrap();
        assert_eq!(e.source(), "1/2");
        let e = Expression::parse("0.1 + 0.2", &[]).unwrap();
        assert_eq!(e.source(), "3/10");
        let e = Expression::parse("sqrt(9/4)", &[]).unwrap();
        assert_eq!(e.source(), "3/2");
        // sqrt(2) is irrational: folding leaves it, evaluation goes float
        let e = Expression::parse("sqrt(2)", &[]).unwrap();
        assert_eq!(e.source(), "sqrt(2)");
        assert!(!e.eval_scalar(&[]).unwrap().is_exact());
    }

    #[test]
    fn folding_skips_subtrees_that_would_error() {
        // the operands still fold, the division itself must not
        let e = Expression::parse("1/(2 - 2)", &[]).unwrap();
        assert_eq!(e.source(), "1/0");
        let err = e.eval_scalar(&[]).unwrap_err();
        assert!(err.message.contains("division by zero"), "{err}");
        assert_eq!(err.subexpr, "1/0");
        assert!(Expression::parse("0^-2", &[]).unwrap().eval(&[]).is_err());
    }

    #[test]
    fn round_trip_is_idempotent() {
        for src in [
            "(1/6)*t*(1 - t^2)",
            "piecewise(w in [0,1]: w/2; w in (1,inf): w/6 + 1/3)",
            "(1/8)*(u^3 + t^3*v^3) + 2",
            "sqrt(t*u) + 13*v^2",
            "(1/11)*(1 - cos(w))",
            "min(t, 1 - t)*max(t, 2)",
            "t - -t",
            "2^-t",
            "t/(u*v)",
            "t/u/v",
            "(t^u)^v",
        ] {
            let vars: Vec<&str> = ["t", "u", "v", "w"]
                .iter()
                .copied()
                .filter(|v| src.contains(*v))
                .collect();
            let e1 = Expression::parse(src, &vars).unwrap();
            let e2 = Expression::parse(e1.source(), &vars).unwrap();
            assert_eq!(e1, e2, "round trip changed `{src}`");
            assert_eq!(e1.source(), e2.source());
        }
    }

    #[test]
    fn scalar_and_float_paths_agree_bitwise() {
        let e = Expression::parse("sqrt(t*u) + 13*v^2", &["t", "u", "v"]).unwrap();
        let binds = [0.3, 0.7, 1.9];
        let fast = e.eval(&binds).unwrap();
        let slow = e
            .eval_scalar(&[
                Scalar::Float(0.3),
                Scalar::Float(0.7),
                Scalar::Float(1.9),
            ])
            .unwrap();
        assert_eq!(fast.to_bits(), slow.to_f64().to_bits());
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = Expression::parse("1 +\n* 2", &[]).unwrap_err();
        assert_eq!((err.line, err.col), (2, 1));
        let err = Expression::parse("x + 1", &["t"]).unwrap_err();
        assert!(err.message.contains("unknown variable"), "{err}");
        let err = Expression::parse("frob(1)", &[]).unwrap_err();
        assert!(err.message.contains("unknown function"), "{err}");
    }

    #[test]
    fn guard_partition_is_validated() {
        // overlap at the junction
        assert!(Expression::parse(
            "piecewise(w in [0,1]: w; w in [1,2]: w)",
            &["w"]
        )
        .is_err());
        // gap at the junction
        assert!(Expression::parse(
            "piecewise(w in [0,1): w; w in (1,2]: w)",
            &["w"]
        )
        .is_err());
        // disjoint ranges
        assert!(Expression::parse(
            "piecewise(w in [0,1): w; w in [2,3]: w)",
            &["w"]
        )
        .is_err());
        // well-formed
        assert!(Expression::parse(
            "piecewise(w in [0,1): w; w in [1,3]: w)",
            &["w"]
        )
        .is_ok());
    }

    #[test]
    fn nested_piecewise_is_rejected() {
        let err = Expression::parse(
            "1 + piecewise(w in [0,1]: w)",
            &["w"],
        )
        .unwrap_err();
        assert!(err.message.contains("top level"), "{err}");
    }

    #[test]
    fn polynomial_extraction() {
        let e = Expression::parse("(1/6)*t*(1 - t^2)", &["t"]).unwrap();
        let p = e.as_poly().unwrap();
        assert_eq!(p.degree(), Some(3));
        assert_eq!(p.integrate(&rat(0, 1), &rat(1, 1)), rat(1, 24));
        assert_eq!(
            Expression::parse("sqrt(t)", &["t"]).unwrap().as_poly(),
            None
        );
    }

    #[test]
    fn piecewise_polynomial_extraction_clips_to_domain() {
        let e = Expression::parse(
            "piecewise(s in [0,1/2]: s; s in (1/2,1]: 1 - s)",
            &["s"],
        )
        .unwrap();
        let pp = e.as_piecewise_poly(&rat(0, 1), &rat(1, 1)).unwrap();
        assert_eq!(pp.integrate(&rat(0, 1), &rat(1, 1)), Some(rat(1, 4)));
        assert_eq!(e.breakpoints(), vec![rat(0, 1), rat(1, 2), rat(1, 1)]);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = Expression::parse("1/t + sqrt(u)", &["t", "u"]).unwrap();
        let err = e
            .eval_scalar(&[Scalar::zero(), Scalar::one()])
            .unwrap_err();
        assert_eq!(err.subexpr, "1/t");
        let err = e
            .eval_scalar(&[Scalar::one(), Scalar::from_int(-1)])
            .unwrap_err();
        assert_eq!(err.subexpr, "sqrt(u)");
        let e = Expression::parse("log(t)", &["t"]).unwrap();
        assert!(e.eval_scalar(&[Scalar::zero()]).is_err());
        assert!(e.eval(&[0.0]).is_err());
    }
}
