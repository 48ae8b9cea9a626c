//! Recursive-descent parser for scalar expressions.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr    = term , { ("+" | "-") , term } ;
//! term    = unary , { ("*" | "/") , unary } ;
//! unary   = "-" , unary | power ;
//! power   = primary , [ "^" , unary ] ;          (* right associative *)
//! primary = number | identifier | func , "(" , expr , ")" | "(" , expr , ")" ;
//! func    = "exp" | "log" | "sin" | "cos" | "sqrt" | "abs" ;
//! number  = digits , [ "." , digits ] , [ ("e" | "E") , [ "+" | "-" ] , digits ] ;
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`; the exponent
//! may itself carry a sign (`2^-1`).

use super::{BinaryOp, ExprError, Node, UnaryOp};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    offset: usize,
}

fn tokenize(source: &str) -> Result<Vec<Spanned>, ExprError> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let token = match c {
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'^' => Token::Caret,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &source[start..i];
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                if !value.is_finite() {
                    return Err(ExprError::Syntax {
                        offset: start,
                        message: format!("number `{text}` is not finite"),
                    });
                }
                out.push(Spanned {
                    token: Token::Number(value),
                    offset: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Spanned {
                    token: Token::Ident(source[start..i].to_string()),
                    offset: start,
                });
                continue;
            }
            _ => {
                let ch = source[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        i += 1;
        out.push(Spanned {
            token,
            offset: start,
        });
    }
    out.push(Spanned {
        token: Token::End,
        offset: source.len(),
    });
    Ok(out)
}

fn function(name: &str) -> Option<UnaryOp> {
    Some(match name {
        "exp" => UnaryOp::Exp,
        "log" => UnaryOp::Log,
        "sin" => UnaryOp::Sin,
        "cos" => UnaryOp::Cos,
        "sqrt" => UnaryOp::Sqrt,
        "abs" => UnaryOp::Abs,
        _ => return None,
    })
}

pub(super) struct Parser<'a> {
    tokens: Vec<Spanned>,
    pos: usize,
    symbols: &'a [String],
}

impl<'a> Parser<'a> {
    pub(super) fn new(source: &str, symbols: &'a [String]) -> Result<Self, ExprError> {
        if source.trim().is_empty() {
            return Err(ExprError::Empty);
        }
        Ok(Self {
            tokens: tokenize(source)?,
            pos: 0,
            symbols,
        })
    }

    pub(super) fn parse(mut self) -> Result<Node, ExprError> {
        let node = self.expr()?;
        let next = self.peek();
        if next.token != Token::End {
            return Err(ExprError::Syntax {
                offset: next.offset,
                message: "unexpected trailing input".into(),
            });
        }
        Ok(node)
    }

    fn peek(&self) -> &Spanned {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.tokens[self.pos].clone();
        if t.token != Token::End {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().token {
                Token::Plus => BinaryOp::Add,
                Token::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().token {
                Token::Star => BinaryOp::Mul,
                Token::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek().token == Token::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Node::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.peek().token == Token::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Node::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        let t = self.bump();
        if t.token == Token::RParen {
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: t.offset,
                message: "expected `)`".into(),
            })
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let t = self.bump();
        match t.token {
            Token::Number(v) => Ok(Node::Const(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if let Some(op) = function(&name) {
                    let open = self.bump();
                    if open.token != Token::LParen {
                        return Err(ExprError::Syntax {
                            offset: open.offset,
                            message: format!("expected `(` after function `{name}`"),
                        });
                    }
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Unary(op, Box::new(arg)));
                }
                match self.symbols.iter().position(|s| *s == name) {
                    Some(index) => Ok(Node::Var(index)),
                    None => Err(ExprError::UnknownIdentifier {
                        name,
                        offset: t.offset,
                    }),
                }
            }
            Token::End => Err(ExprError::Syntax {
                offset: t.offset,
                message: "unexpected end of input".into(),
            }),
            _ => Err(ExprError::Syntax {
                offset: t.offset,
                message: "expected a number, variable, function or `(`".into(),
            }),
        }
    }
}
