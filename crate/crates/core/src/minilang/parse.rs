//! S-expression surface syntax.
//!
//! ```text
//! expr := int | x<k> | name
//!       | (neg e) | (abs e)
//!       | (<binop> e e)            binop ∈ + - * div mod min max < <= =
//!       | (if e e e)
//!       | (let name e e)
//!       | (fold <foldop> e xs)     foldop ∈ + * min max
//! ```
//!
//! Error offsets are 1-based character columns; end of input is reported
//! one past the last character.

use super::ast::{BinOp, Expr, FoldOp, UnOp};
use thiserror::Error;

/// Nesting limit; keeps the recursive parser and evaluator off the stack edge.
pub const MAX_DEPTH: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unbalanced parentheses at offset {offset}")]
    Unbalanced { offset: usize },
    #[error("unknown operator `{op}` at offset {offset}")]
    UnknownOperator { op: String, offset: usize },
    #[error("unbound variable `{name}` at offset {offset}")]
    UnboundVariable { name: String, offset: usize },
    #[error("`{op}` expects {expected} operands, found {found} at offset {offset}")]
    Arity {
        op: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("unexpected token `{token}` at offset {offset}")]
    Unexpected { token: String, offset: usize },
    #[error("nesting deeper than {MAX_DEPTH} at offset {offset}")]
    TooDeep { offset: usize },
    #[error("empty program")]
    Empty,
}

impl ParseError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Unbalanced { offset }
            | ParseError::UnknownOperator { offset, .. }
            | ParseError::UnboundVariable { offset, .. }
            | ParseError::Arity { offset, .. }
            | ParseError::Unexpected { offset, .. }
            | ParseError::TooDeep { offset } => Some(*offset),
            ParseError::Empty => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(src: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' || c == ')' {
            out.push(Token {
                tok: if c == '(' { Tok::Open } else { Tok::Close },
                offset: i + 1,
            });
            i += 1;
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && chars[i] != '(' && chars[i] != ')'
            {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Atom(chars[start..i].iter().collect()),
                offset: start + 1,
            });
        }
    }
    out
}

const KEYWORDS: [&str; 10] = [
    "neg", "abs", "if", "let", "fold", "div", "mod", "min", "max", "xs",
];

fn input_index(atom: &str) -> Option<usize> {
    let digits = atom.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn is_identifier(atom: &str) -> bool {
    let mut bytes = atom.bytes();
    matches!(bytes.next(), Some(b) if b.is_ascii_lowercase() || b == b'_')
        && bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        && !KEYWORDS.contains(&atom)
        && input_index(atom).is_none()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end_offset: usize,
    scope: Vec<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token, ParseError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or(ParseError::Unbalanced {
                offset: self.end_offset,
            })?;
        self.pos += 1;
        Ok(t)
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, ParseError> {
        let t = self.next()?;
        if depth > MAX_DEPTH {
            return Err(ParseError::TooDeep { offset: t.offset });
        }
        match t.tok {
            Tok::Close => Err(ParseError::Unbalanced { offset: t.offset }),
            Tok::Atom(a) => self.atom(&a, t.offset),
            Tok::Open => {
                let head = self.next()?;
                let op = match head.tok {
                    Tok::Atom(a) => a,
                    Tok::Open => {
                        return Err(ParseError::Unexpected {
                            token: "(".into(),
                            offset: head.offset,
                        })
                    }
                    Tok::Close => {
                        return Err(ParseError::Unexpected {
                            token: ")".into(),
                            offset: head.offset,
                        })
                    }
                };
                let e = self.form(&op, head.offset, depth)?;
                let close = self.next()?;
                match close.tok {
                    Tok::Close => Ok(e),
                    Tok::Open => Err(ParseError::Arity {
                        op,
                        expected: self.operand_count(&e),
                        found: self.operand_count(&e) + 1,
                        offset: close.offset,
                    }),
                    Tok::Atom(a) => Err(ParseError::Unexpected {
                        token: a,
                        offset: close.offset,
                    }),
                }
            }
        }
    }

    fn operand_count(&self, e: &Expr) -> usize {
        match e {
            Expr::Unary(..) => 1,
            Expr::Binary(..) => 2,
            Expr::If(..) | Expr::Let(..) | Expr::Fold(..) => 3,
            _ => 0,
        }
    }

    fn atom(&self, a: &str, offset: usize) -> Result<Expr, ParseError> {
        if let Ok(n) = a.parse::<i64>() {
            return Ok(Expr::Lit(n));
        }
        if let Some(i) = input_index(a) {
            return Ok(Expr::Input(i));
        }
        if is_identifier(a) {
            if self.scope.iter().any(|s| s == a) {
                return Ok(Expr::Var(a.to_string()));
            }
            return Err(ParseError::UnboundVariable {
                name: a.to_string(),
                offset,
            });
        }
        Err(ParseError::Unexpected {
            token: a.to_string(),
            offset,
        })
    }

    /// Parses exactly `n` operands, reporting an arity error if the form
    /// closes early.
    fn operands(
        &mut self,
        op: &str,
        n: usize,
        offset: usize,
        depth: usize,
    ) -> Result<Vec<Expr>, ParseError> {
        let mut out = Vec::with_capacity(n);
        for found in 0..n {
            if let Some(Token {
                tok: Tok::Close, ..
            }) = self.peek()
            {
                return Err(ParseError::Arity {
                    op: op.to_string(),
                    expected: n,
                    found,
                    offset,
                });
            }
            out.push(self.expr(depth + 1)?);
        }
        Ok(out)
    }

    fn form(&mut self, op: &str, offset: usize, depth: usize) -> Result<Expr, ParseError> {
        if let Some(u) = UnOp::from_symbol(op) {
            let mut a = self.operands(op, 1, offset, depth)?;
            return Ok(Expr::Unary(u, Box::new(a.remove(0))));
        }
        if let Some(b) = BinOp::from_symbol(op) {
            let mut a = self.operands(op, 2, offset, depth)?;
            let rhs = a.pop().expect("two operands");
            let lhs = a.pop().expect("two operands");
            return Ok(Expr::binary(b, lhs, rhs));
        }
        match op {
            "if" => {
                let mut a = self.operands(op, 3, offset, depth)?;
                let e = a.pop().expect("three operands");
                let t = a.pop().expect("three operands");
                let c = a.pop().expect("three operands");
                Ok(Expr::if_(c, t, e))
            }
            "let" => {
                let name_tok = self.next()?;
                let name = match name_tok.tok {
                    Tok::Atom(a) if is_identifier(&a) => a,
                    Tok::Atom(a) => {
                        return Err(ParseError::Unexpected {
                            token: a,
                            offset: name_tok.offset,
                        })
                    }
                    Tok::Open | Tok::Close => {
                        return Err(ParseError::Unexpected {
                            token: if name_tok.tok == Tok::Open { "(" } else { ")" }.into(),
                            offset: name_tok.offset,
                        })
                    }
                };
                let bound = self.operands(op, 1, offset, depth)?.remove(0);
                self.scope.push(name.clone());
                let body = self.operands(op, 1, offset, depth);
                self.scope.pop();
                Ok(Expr::let_(name, bound, body?.remove(0)))
            }
            "fold" => {
                let op_tok = self.next()?;
                let fop = match &op_tok.tok {
                    Tok::Atom(a) => {
                        FoldOp::from_symbol(a).ok_or_else(|| ParseError::UnknownOperator {
                            op: a.clone(),
                            offset: op_tok.offset,
                        })?
                    }
                    _ => {
                        return Err(ParseError::Unexpected {
                            token: "(".into(),
                            offset: op_tok.offset,
                        })
                    }
                };
                let init = self.operands(op, 1, offset, depth)?.remove(0);
                let list = self.next()?;
                match list.tok {
                    Tok::Atom(a) if a == "xs" => Ok(Expr::fold(fop, init)),
                    Tok::Close => Err(ParseError::Arity {
                        op: op.to_string(),
                        expected: 3,
                        found: 2,
                        offset,
                    }),
                    Tok::Atom(a) => Err(ParseError::Unexpected {
                        token: a,
                        offset: list.offset,
                    }),
                    Tok::Open => Err(ParseError::Unexpected {
                        token: "(".into(),
                        offset: list.offset,
                    }),
                }
            }
            _ => Err(ParseError::UnknownOperator {
                op: op.to_string(),
                offset,
            }),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(src);
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        end_offset: src.chars().count() + 1,
        scope: Vec::new(),
    };
    let e = p.expr(0)?;
    if let Some(t) = p.peek() {
        return Err(match &t.tok {
            Tok::Close => ParseError::Unbalanced { offset: t.offset },
            Tok::Open => ParseError::Unexpected {
                token: "(".into(),
                offset: t.offset,
            },
            Tok::Atom(a) => ParseError::Unexpected {
                token: a.clone(),
                offset: t.offset,
            },
        });
    }
    Ok(e)
}
