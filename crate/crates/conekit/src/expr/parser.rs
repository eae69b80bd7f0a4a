//! Recursive-descent parser producing [`Body`]/[`Ast`] trees.

use num::rational::BigRational;

use super::lexer::{Token, TokKind};
use super::{Ast, BinOp, Body, Branch, Fn1, Fn2, Lit};
use crate::scalar::rat_to_f64;

pub(super) struct RawError {
    pub offset: usize,
    pub message: String,
}

pub(super) fn is_reserved(name: &str) -> bool {
    fn1_for(name).is_some()
        || fn2_for(name).is_some()
        || matches!(name, "piecewise" | "in" | "inf")
}

fn fn1_for(name: &str) -> Option<Fn1> {
    Some(match name {
        "sqrt" => Fn1::Sqrt,
        "abs" => Fn1::Abs,
        "exp" => Fn1::Exp,
        "log" => Fn1::Log,
        "sin" => Fn1::Sin,
        "cos" => Fn1::Cos,
        _ => return None,
    })
}

fn fn2_for(name: &str) -> Option<Fn2> {
    Some(match name {
        "min" => Fn2::Min,
        "max" => Fn2::Max,
        _ => return None,
    })
}

pub(super) fn parse_body(
    toks: &[Token],
    vars: &[String],
    src_len: usize,
) -> Result<Body, RawError> {
    let mut p = P {
        toks,
        pos: 0,
        end: src_len,
        vars,
    };
    let body = if matches!(p.peek(), Some(TokKind::Ident(name)) if name == "piecewise") {
        p.parse_piecewise()?
    } else {
        Body::Single(p.parse_sum()?)
    };
    if p.pos != toks.len() {
        return Err(p.err("expected end of input"));
    }
    Ok(body)
}

struct P<'a> {
    toks: &'a [Token],
    pos: usize,
    end: usize,
    vars: &'a [String],
}

impl<'a> P<'a> {
    fn peek(&self) -> Option<&TokKind> {
        self.toks.get(self.pos).map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.start)
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn err(&self, message: impl Into<String>) -> RawError {
        RawError {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn eat(&mut self, kind: &TokKind) -> bool {
        if self.peek() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokKind, what: &str) -> Result<(), RawError> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn parse_piecewise(&mut self) -> Result<Body, RawError> {
        self.bump(); // `piecewise`
        self.expect(&TokKind::LParen, "`(` after piecewise")?;
        let mut var: Option<usize> = None;
        let mut branches: Vec<Branch> = vec![];
        loop {
            let name_off = self.offset();
            let name = match self.bump().map(|t| &t.kind) {
                Some(TokKind::Ident(n)) => n.clone(),
                _ => {
                    return Err(RawError {
                        offset: name_off,
                        message: "expected a variable name to open a guard".into(),
                    })
                }
            };
            let idx = self
                .vars
                .iter()
                .position(|v| *v == name)
                .ok_or_else(|| RawError {
                    offset: name_off,
                    message: format!("unknown variable `{name}` in guard"),
                })?;
            match var {
                None => var = Some(idx),
                Some(prev) if prev != idx => {
                    return Err(RawError {
                        offset: name_off,
                        message: "all guards must test the same variable".into(),
                    })
                }
                _ => {}
            }
            if !matches!(self.peek(), Some(TokKind::Ident(kw)) if kw == "in") {
                return Err(self.err("expected `in`"));
            }
            self.bump();
            let (lo, lo_closed, hi, hi_closed) = self.parse_guard()?;
            self.expect(&TokKind::Colon, "`:` after the guard")?;
            let body = self.parse_sum()?;
            branches.push(Branch {
                lo_approx: rat_to_f64(&lo),
                hi_approx: hi.as_ref().map_or(f64::INFINITY, rat_to_f64),
                lo,
                lo_closed,
                hi,
                hi_closed,
                body,
            });
            if !self.eat(&TokKind::Semi) {
                break;
            }
        }
        self.expect(&TokKind::RParen, "`)` to close piecewise")?;
        validate_partition(&branches).map_err(|message| RawError {
            offset: 0,
            message,
        })?;
        Ok(Body::Piecewise {
            var: var.unwrap(),
            branches,
        })
    }

    fn parse_guard(
        &mut self,
    ) -> Result<(BigRational, bool, Option<BigRational>, bool), RawError> {
        let lo_closed = if self.eat(&TokKind::LBracket) {
            true
        } else if self.eat(&TokKind::LParen) {
            false
        } else {
            return Err(self.err("expected `[` or `(` to open a guard interval"));
        };
        let lo = self.parse_guard_bound()?;
        self.expect(&TokKind::Comma, "`,` between guard bounds")?;
        if matches!(self.peek(), Some(TokKind::Ident(kw)) if kw == "inf") {
            self.bump();
            if self.eat(&TokKind::RBracket) {
                return Err(RawError {
                    offset: self.toks[self.pos - 1].start,
                    message: "an unbounded guard must be open on the right".into(),
                });
            }
            self.expect(&TokKind::RParen, "`)` after inf")?;
            return Ok((lo, lo_closed, None, false));
        }
        let hi = self.parse_guard_bound()?;
        let hi_closed = if self.eat(&TokKind::RBracket) {
            true
        } else if self.eat(&TokKind::RParen) {
            false
        } else {
            return Err(self.err("expected `]` or `)` to close a guard interval"));
        };
        if lo >= hi {
            return Err(RawError {
                offset: 0,
                message: format!("empty guard interval: {lo} is not below {hi}"),
            });
        }
        Ok((lo, lo_closed, Some(hi), hi_closed))
    }

    fn parse_guard_bound(&mut self) -> Result<BigRational, RawError> {
        let start = self.offset();
        let ast = self.parse_sum()?;
        match super::fold(ast) {
            Ast::Lit(l) => Ok(l.value),
            _ => Err(RawError {
                offset: start,
                message: "guard bounds must be constant".into(),
            }),
        }
    }

    fn parse_sum(&mut self) -> Result<Ast, RawError> {
        let mut lhs = self.parse_product()?;
        loop {
            let op = match self.peek() {
                Some(TokKind::Plus) => BinOp::Add,
                Some(TokKind::Minus) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_product()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_product(&mut self) -> Result<Ast, RawError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Some(TokKind::Star) => BinOp::Mul,
                Some(TokKind::Slash) => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Ast, RawError> {
        if self.eat(&TokKind::Minus) {
            return Ok(Ast::Neg(Box::new(self.parse_unary()?)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Ast, RawError> {
        let base = self.parse_atom()?;
        if self.eat(&TokKind::Caret) {
            let expo = self.parse_unary()?;
            return Ok(Ast::Bin(BinOp::Pow, Box::new(base), Box::new(expo)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Ast, RawError> {
        let off = self.offset();
        match self.peek().cloned() {
            Some(TokKind::Num(v)) => {
                self.bump();
                Ok(Ast::Lit(Lit::new(v)))
            }
            Some(TokKind::LParen) => {
                self.bump();
                let inner = self.parse_sum()?;
                self.expect(&TokKind::RParen, "`)`")?;
                Ok(inner)
            }
            Some(TokKind::Ident(name)) => {
                self.bump();
                if name == "piecewise" {
                    return Err(RawError {
                        offset: off,
                        message: "piecewise(...) is only allowed at the top level".into(),
                    });
                }
                if name == "in" || name == "inf" {
                    return Err(RawError {
                        offset: off,
                        message: format!("`{name}` is only valid inside a piecewise guard"),
                    });
                }
                if let Some(f) = fn1_for(&name) {
                    self.expect(&TokKind::LParen, &format!("`(` after {name}"))?;
                    let arg = self.parse_sum()?;
                    self.expect(&TokKind::RParen, "`)`")?;
                    return Ok(Ast::Call1(f, Box::new(arg)));
                }
                if let Some(f) = fn2_for(&name) {
                    self.expect(&TokKind::LParen, &format!("`(` after {name}"))?;
                    let a = self.parse_sum()?;
                    self.expect(&TokKind::Comma, &format!("`,` between {name} arguments"))?;
                    let b = self.parse_sum()?;
                    self.expect(&TokKind::RParen, "`)`")?;
                    return Ok(Ast::Call2(f, Box::new(a), Box::new(b)));
                }
                if let Some(idx) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Ast::Var(idx));
                }
                let message = if matches!(self.peek(), Some(TokKind::LParen)) {
                    format!("unknown function `{name}`")
                } else if self.vars.is_empty() {
                    format!("unknown variable `{name}` (no variables are declared)")
                } else {
                    format!(
                        "unknown variable `{name}` (declared: {})",
                        self.vars.join(", ")
                    )
                };
                Err(RawError {
                    offset: off,
                    message,
                })
            }
            _ => Err(self.err("expected a number, a variable, `(` or a function")),
        }
    }
}

/// Guards must tile one interval: ascending, abutting, and with exactly one
/// side closed at every junction.
fn validate_partition(branches: &[Branch]) -> Result<(), String> {
    for pair in branches.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let prev_hi = match &prev.hi {
            Some(h) => h,
            None => return Err("only the last guard may be unbounded".into()),
        };
        if *prev_hi != next.lo {
            return Err(format!(
                "guards must abut: one ends at {prev_hi}, the next starts at {}",
                next.lo
            ));
        }
        match (prev.hi_closed, next.lo_closed) {
            (true, true) => {
                return Err(format!("guards overlap at {prev_hi}"));
            }
            (false, false) => {
                return Err(format!("guards leave a gap at {prev_hi}"));
            }
            _ => {}
        }
    }
    Ok(())
}
