//! The two evaluators. They walk the same folded tree and make the same
//! error decisions at the same nodes, and the float path reads the cached
//! f64 image of each literal, so on `f64` bindings their results are
//! bit-identical. Keep the two `match` arms in step when editing either.

use num::ToPrimitive;

use super::printer::render_ast;
use super::{Ast, BinOp, Body, Branch, EvalError, Expression, Fn1, Fn2};
use crate::scalar::Scalar;

fn err(ast: &Ast, vars: &[String], message: impl Into<String>) -> EvalError {
    EvalError {
        subexpr: render_ast(ast, vars),
        message: message.into(),
    }
}

pub(super) fn eval_scalar(e: &Expression, binds: &[Scalar]) -> Result<Scalar, EvalError> {
    let ast = select_branch_scalar(e, binds)?;
    let out = ev_scalar(ast, &e.vars, binds)?;
    // f64 image must be finite too, so the float path agrees on rejection
    if !out.to_f64().is_finite() {
        return Err(err(ast, &e.vars, "result is not finite"));
    }
    Ok(out)
}

pub(super) fn eval_f64(e: &Expression, binds: &[f64]) -> Result<f64, EvalError> {
    let ast = select_branch_f64(e, binds)?;
    let out = ev_f64(ast, &e.vars, binds)?;
    if !out.is_finite() {
        return Err(err(ast, &e.vars, "result is not finite"));
    }
    Ok(out)
}

fn domain_error(e: &Expression, var: usize, shown: impl std::fmt::Display) -> EvalError {
    EvalError {
        subexpr: e.source().to_string(),
        message: format!(
            "{} = {shown} falls outside every piecewise guard",
            e.vars[var]
        ),
    }
}

fn select_branch_scalar<'a>(
    e: &'a Expression,
    binds: &[Scalar],
) -> Result<&'a Ast, EvalError> {
    match &e.body {
        Body::Single(ast) => Ok(ast),
        Body::Piecewise { var, branches } => {
            let w = &binds[*var];
            for b in branches {
                if branch_contains_scalar(b, w) {
                    return Ok(&b.body);
                }
            }
            Err(domain_error(e, *var, w))
        }
    }
}

fn select_branch_f64<'a>(e: &'a Expression, binds: &[f64]) -> Result<&'a Ast, EvalError> {
    match &e.body {
        Body::Single(ast) => Ok(ast),
        Body::Piecewise { var, branches } => {
            let w = binds[*var];
            for b in branches {
                if branch_contains_f64(b, w) {
                    return Ok(&b.body);
                }
            }
            Err(domain_error(e, *var, w))
        }
    }
}

fn branch_contains_scalar(b: &Branch, w: &Scalar) -> bool {
    use std::cmp::Ordering::*;
    let lo_ok = match w.cmp_val(&Scalar::Exact(b.lo.clone())) {
        Greater => true,
        Equal => b.lo_closed,
        Less => false,
    };
    if !lo_ok {
        return false;
    }
    match &b.hi {
        None => true,
        Some(h) => match w.cmp_val(&Scalar::Exact(h.clone())) {
            Less => true,
            Equal => b.hi_closed,
            Greater => false,
        },
    }
}

fn branch_contains_f64(b: &Branch, w: f64) -> bool {
    let lo_ok = w > b.lo_approx || (w == b.lo_approx && b.lo_closed);
    lo_ok && (w < b.hi_approx || (w == b.hi_approx && b.hi_closed))
}

fn ev_scalar(ast: &Ast, vars: &[String], binds: &[Scalar]) -> Result<Scalar, EvalError> {
    match ast {
        Ast::Lit(l) => Ok(Scalar::Exact(l.value.clone())),
        Ast::Var(i) => Ok(binds[*i].clone()),
        Ast::Neg(a) => Ok(ev_scalar(a, vars, binds)?.neg()),
        Ast::Bin(op, a, b) => {
            let x = ev_scalar(a, vars, binds)?;
            let y = ev_scalar(b, vars, binds)?;
            match op {
                BinOp::Add => Ok(x.add(&y)),
                BinOp::Sub => Ok(x.sub(&y)),
                BinOp::Mul => Ok(x.mul(&y)),
                BinOp::Div => {
                    if y.is_zero() {
                        return Err(err(ast, vars, "division by zero"));
                    }
                    Ok(x.div(&y))
                }
                BinOp::Pow => {
                    if let Some(n) = exact_int_exponent(&y) {
                        if x.is_zero() && n < 0 {
                            return Err(err(ast, vars, "zero to a negative power"));
                        }
                        return Ok(x.pow_int(n));
                    }
                    let v = x.to_f64().powf(y.to_f64());
                    pow_float_check(ast, vars, v)
                }
            }
        }
        Ast::Call1(f, a) => {
            let x = ev_scalar(a, vars, binds)?;
            match f {
                Fn1::Sqrt => {
                    if x.is_negative() {
                        return Err(err(ast, vars, "square root of a negative number"));
                    }
                    Ok(x.sqrt())
                }
                Fn1::Abs => Ok(x.abs()),
                Fn1::Exp => {
                    let v = x.to_f64().exp();
                    if !v.is_finite() {
                        return Err(err(ast, vars, "exp overflows"));
                    }
                    Ok(Scalar::Float(v))
                }
                Fn1::Log => {
                    if x.is_zero() || x.is_negative() {
                        return Err(err(ast, vars, "logarithm of a non-positive number"));
                    }
                    Ok(Scalar::Float(x.to_f64().ln()))
                }
                Fn1::Sin => Ok(Scalar::Float(x.to_f64().sin())),
                Fn1::Cos => Ok(Scalar::Float(x.to_f64().cos())),
            }
        }
        Ast::Call2(f, a, b) => {
            let x = ev_scalar(a, vars, binds)?;
            let y = ev_scalar(b, vars, binds)?;
            Ok(match f {
                Fn2::Min => x.min(&y),
                Fn2::Max => x.max(&y),
            })
        }
    }
}

fn exact_int_exponent(y: &Scalar) -> Option<i32> {
    let r = y.as_exact()?;
    if !r.is_integer() {
        return None;
    }
    let n = r.to_integer().to_i32()?;
    (n.unsigned_abs() <= super::MAX_INT_EXP).then_some(n)
}

fn pow_float_check(ast: &Ast, vars: &[String], v: f64) -> Result<Scalar, EvalError> {
    if v.is_nan() {
        return Err(err(ast, vars, "negative base with a fractional exponent"));
    }
    if !v.is_finite() {
        return Err(err(ast, vars, "power overflows"));
    }
    Ok(Scalar::Float(v))
}

fn ev_f64(ast: &Ast, vars: &[String], binds: &[f64]) -> Result<f64, EvalError> {
    match ast {
        Ast::Lit(l) => Ok(l.approx),
        Ast::Var(i) => Ok(binds[*i]),
        Ast::Neg(a) => Ok(-ev_f64(a, vars, binds)?),
        Ast::Bin(op, a, b) => {
            let x = ev_f64(a, vars, binds)?;
            match op {
                BinOp::Add => Ok(x + ev_f64(b, vars, binds)?),
                BinOp::Sub => Ok(x - ev_f64(b, vars, binds)?),
                BinOp::Mul => Ok(x * ev_f64(b, vars, binds)?),
                BinOp::Div => {
                    let y = ev_f64(b, vars, binds)?;
                    if y == 0.0 {
                        return Err(err(ast, vars, "division by zero"));
                    }
                    Ok(x / y)
                }
                BinOp::Pow => {
                    // mirrors the scalar path: in a float evaluation the
                    // only exact exponents are literals
                    if let Ast::Lit(l) = &**b {
                        if let Some(n) = lit_int_exponent(l) {
                            if x == 0.0 && n < 0 {
                                return Err(err(ast, vars, "zero to a negative power"));
                            }
                            return Ok(x.powi(n));
                        }
                    }
                    let y = ev_f64(b, vars, binds)?;
                    let v = x.powf(y);
                    if v.is_nan() {
                        return Err(err(
                            ast,
                            vars,
                            "negative base with a fractional exponent",
                        ));
                    }
                    if !v.is_finite() {
                        return Err(err(ast, vars, "power overflows"));
                    }
                    Ok(v)
                }
            }
        }
        Ast::Call1(f, a) => {
            let x = ev_f64(a, vars, binds)?;
            match f {
                Fn1::Sqrt => {
                    if x < 0.0 {
                        return Err(err(ast, vars, "square root of a negative number"));
                    }
                    Ok(x.sqrt())
                }
                Fn1::Abs => Ok(x.abs()),
                Fn1::Exp => {
                    let v = x.exp();
                    if !v.is_finite() {
                        return Err(err(ast, vars, "exp overflows"));
                    }
                    Ok(v)
                }
                Fn1::Log => {
                    if x <= 0.0 {
                        return Err(err(ast, vars, "logarithm of a non-positive number"));
                    }
                    Ok(x.ln())
                }
                Fn1::Sin => Ok(x.sin()),
                Fn1::Cos => Ok(x.cos()),
            }
        }
        Ast::Call2(f, a, b) => {
            let x = ev_f64(a, vars, binds)?;
            let y = ev_f64(b, vars, binds)?;
            // same tie-breaking as Scalar::min/max: ties keep the left value
            Ok(match f {
                Fn2::Min => {
                    if x > y {
                        y
                    } else {
                        x
                    }
                }
                Fn2::Max => {
                    if x < y {
                        y
                    } else {
                        x
                    }
                }
            })
        }
    }
}

fn lit_int_exponent(l: &super::Lit) -> Option<i32> {
    if !l.value.is_integer() {
        return None;
    }
    let n = l.value.to_integer().to_i32()?;
    (n.unsigned_abs() <= super::MAX_INT_EXP).then_some(n)
}
