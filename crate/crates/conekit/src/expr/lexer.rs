//! Tokenizer for the expression language.

use num::rational::BigRational;

use crate::scalar::parse_rational;

#[derive(Clone, Debug, PartialEq)]
pub enum TokKind {
    Num(BigRational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub kind: TokKind,
    pub start: usize,
}

#[derive(Debug)]
pub struct LexError {
    pub offset: usize,
    pub message: String,
}

pub fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' => push_simple(&mut toks, TokKind::Plus, &mut i),
            '-' => push_simple(&mut toks, TokKind::Minus, &mut i),
            '*' => push_simple(&mut toks, TokKind::Star, &mut i),
            '/' => push_simple(&mut toks, TokKind::Slash, &mut i),
            '^' => push_simple(&mut toks, TokKind::Caret, &mut i),
            '(' => push_simple(&mut toks, TokKind::LParen, &mut i),
            ')' => push_simple(&mut toks, TokKind::RParen, &mut i),
            '[' => push_simple(&mut toks, TokKind::LBracket, &mut i),
            ']' => push_simple(&mut toks, TokKind::RBracket, &mut i),
            ',' => push_simple(&mut toks, TokKind::Comma, &mut i),
            ';' => push_simple(&mut toks, TokKind::Semi, &mut i),
            ':' => push_simple(&mut toks, TokKind::Colon, &mut i),
            '0'..='9' | '.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        j += 1;
                    }
                }
                // exponent part only when followed by digits (possibly signed)
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && (bytes[k] as char).is_ascii_digit() {
                        j = k;
                        while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let text = &src[i..j];
                let value = parse_rational(text).ok_or_else(|| LexError {
                    offset: i,
                    message: format!("malformed number `{text}`"),
                })?;
                toks.push(Token {
                    kind: TokKind::Num(value),
                    start,
                });
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len()
                    && ((bytes[j] as char).is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                toks.push(Token {
                    kind: TokKind::Ident(src[i..j].to_string()),
                    start,
                });
                i = j;
            }
            other => {
                return Err(LexError {
                    offset: i,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(toks)
}

fn push_simple(toks: &mut Vec<Token>, kind: TokKind, i: &mut usize) {
    toks.push(Token { kind, start: *i });
    *i += 1;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_numbers_and_idents() {
        let toks = lex("w/6 + 1/3").unwrap();
        assert_eq!(toks.len(), 7);
        assert!(matches!(toks[0].kind, TokKind::Ident(ref s) if s == "w"));
        assert!(matches!(toks[1].kind, TokKind::Slash));
        assert!(matches!(toks[2].kind, TokKind::Num(_)));
    }

    #[test]
    fn decimal_and_exponent() {
        let toks = lex("0.25 1e-3 2.5E2").unwrap();
        assert_eq!(toks.len(), 3);
        for t in &toks {
            assert!(matches!(t.kind, TokKind::Num(_)));
        }
    }

    #[test]
    fn exponent_needs_digits() {
        // `2e` lexes as number 2 followed by identifier `e`
        let toks = lex("2e").unwrap();
        assert_eq!(toks.len(), 2);
        assert!(matches!(toks[1].kind, TokKind::Ident(ref s) if s == "e"));
    }

    #[test]
    fn rejects_stray_characters() {
        let err = lex("1 + $").unwrap_err();
        assert_eq!(err.offset, 4);
    }
}
