//! Canonical rendering. Parenthesization is driven by a minimum-precedence
//! context so that parsing the output reproduces the tree exactly.

use num::{One, Signed};

use super::{Ast, BinOp, Body, Branch, Expression, Fn1, Fn2};

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

pub(super) fn render(e: &Expression) -> String {
    let mut out = String::new();
    match &e.body {
        Body::Single(ast) => write_ast(ast, &e.vars, &mut out, 0),
        Body::Piecewise { var, branches } => {
            out.push_str("piecewise(");
            for (k, b) in branches.iter().enumerate() {
                if k > 0 {
                    out.push_str("; ");
                }
                out.push_str(&e.vars[*var]);
                out.push_str(" in ");
                write_guard(b, &mut out);
                out.push_str(": ");
                write_ast(&b.body, &e.vars, &mut out, 0);
            }
            out.push(')');
        }
    }
    out
}

pub(super) fn render_ast(ast: &Ast, vars: &[String]) -> String {
    let mut out = String::new();
    write_ast(ast, vars, &mut out, 0);
    out
}

fn write_guard(b: &Branch, out: &mut String) {
    out.push(if b.lo_closed { '[' } else { '(' });
    out.push_str(&b.lo.to_string());
    out.push(',');
    match &b.hi {
        Some(h) => {
            out.push_str(&h.to_string());
            out.push(if b.hi_closed { ']' } else { ')' });
        }
        None => out.push_str("inf)"),
    }
}

fn prec(ast: &Ast) -> u8 {
    match ast {
        // `p/q` re-lexes as a division and `-p` as a negation, so
        // non-integer and negative literals are not atoms to the parser
        Ast::Lit(l) if !l.value.denom().is_one() => PREC_PRODUCT,
        Ast::Lit(l) if l.value.is_negative() => PREC_NEG,
        Ast::Lit(_) | Ast::Var(_) | Ast::Call1(..) | Ast::Call2(..) => PREC_ATOM,
        Ast::Neg(_) => PREC_NEG,
        Ast::Bin(BinOp::Add | BinOp::Sub, ..) => PREC_SUM,
        Ast::Bin(BinOp::Mul | BinOp::Div, ..) => PREC_PRODUCT,
        Ast::Bin(BinOp::Pow, ..) => PREC_POW,
    }
}

fn write_ast(ast: &Ast, vars: &[String], out: &mut String, ctx: u8) {
    let wrap = prec(ast) < ctx;
    if wrap {
        out.push('(');
    }
    match ast {
        Ast::Lit(l) => out.push_str(&l.value.to_string()),
        Ast::Var(i) => out.push_str(&vars[*i]),
        Ast::Neg(a) => {
            out.push('-');
            write_ast(a, vars, out, PREC_NEG);
        }
        Ast::Bin(op, a, b) => {
            let (text, lp, rp) = match op {
                BinOp::Add => (" + ", PREC_SUM, PREC_PRODUCT),
                BinOp::Sub => (" - ", PREC_SUM, PREC_PRODUCT),
                BinOp::Mul => ("*", PREC_PRODUCT, PREC_NEG),
                BinOp::Div => ("/", PREC_PRODUCT, PREC_NEG),
                // right-associative; the exponent admits unary minus
                BinOp::Pow => ("^", PREC_ATOM, PREC_NEG),
            };
            write_ast(a, vars, out, lp);
            out.push_str(text);
            write_ast(b, vars, out, rp);
        }
        Ast::Call1(f, a) => {
            out.push_str(match f {
                Fn1::Sqrt => "sqrt",
                Fn1::Abs => "abs",
                Fn1::Exp => "exp",
                Fn1::Log => "log",
                Fn1::Sin => "sin",
                Fn1::Cos => "cos",
            });
            out.push('(');
            write_ast(a, vars, out, 0);
            out.push(')');
        }
        Ast::Call2(f, a, b) => {
            out.push_str(match f {
                Fn2::Min => "min",
                Fn2::Max => "max",
            });
            out.push('(');
            write_ast(a, vars, out, 0);
            out.push_str(", ");
            write_ast(b, vars, out, 0);
            out.push(')');
        }
    }
    if wrap {
        out.push(')');
    }
}
