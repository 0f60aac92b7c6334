use super::{Expr, Func};

/// Syntax error with the byte offset of the offending token.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
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

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v, _) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                let mut integral = true;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    integral = false;
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        integral = false;
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text = &src[i..j];
                let v: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                i = j;
                out.push((Tok::Num(v, integral), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(src[i..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    names: &'a [&'a str],
}

const BUILTIN_NAMES: [&str; 4] = ["t", "x1", "x2", "pi"];

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.offset(),
            message: format!("expected {expected}, found {}", self.peek().describe()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            // a bare literal folds into a negative constant unless it is a power base
            if let Tok::Num(v, _) = *self.peek() {
                if *self.peek_at(1) != Tok::Caret {
                    self.bump();
                    return Ok(Expr::Num(-v));
                }
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let n = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        let start = self.offset();
        let (neg, paren) = match self.peek() {
            Tok::LParen => {
                self.bump();
                let neg = if *self.peek() == Tok::Minus {
                    self.bump();
                    true
                } else {
                    false
                };
                (neg, true)
            }
            Tok::Minus => {
                self.bump();
                (true, false)
            }
            _ => (false, false),
        };
        let mag = match self.bump() {
            Tok::Num(v, true) if v <= i32::MAX as f64 => v as i64,
            Tok::Num(..) => {
                return Err(ParseError {
                    offset: start,
                    message: "exponent must be an integer literal".into(),
                })
            }
            other => {
                self.pos -= usize::from(other != Tok::End);
                return Err(self.error("integer exponent"));
            }
        };
        if paren {
            if *self.peek() != Tok::RParen {
                return Err(self.error("`)`"));
            }
            self.bump();
        }
        let mut n = if neg { -mag } else { mag };
        if !paren && *self.peek() == Tok::Caret {
            self.bump();
            let rhs = self.exponent()?;
            if rhs < 0 {
                return Err(ParseError {
                    offset: start,
                    message: "exponent chain must evaluate to an integer".into(),
                });
            }
            n = n
                .checked_pow(rhs as u32)
                .filter(|v| v.abs() <= i32::MAX as i64)
                .ok_or_else(|| ParseError {
                    offset: start,
                    message: "exponent overflow".into(),
                })?;
        }
        i32::try_from(n).map_err(|_| ParseError {
            offset: start,
            message: "exponent overflow".into(),
        })
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v, _) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    let f = Func::from_name(&name).ok_or(ParseError {
                        offset,
                        message: format!("unknown function `{name}`"),
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.error("`)`"));
                    }
                    self.bump();
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if Func::from_name(&name).is_some() {
                    return Err(ParseError {
                        offset,
                        message: format!("function `{name}` requires an argument"),
                    });
                }
                if !BUILTIN_NAMES.contains(&name.as_str()) && !self.names.contains(&name.as_str()) {
                    return Err(ParseError {
                        offset,
                        message: format!("unknown identifier `{name}`"),
                    });
                }
                Ok(Expr::Var(name))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.error("`)`"));
                }
                self.bump();
                Ok(inner)
            }
            Tok::End if self.pos == 0 => Err(ParseError {
                offset,
                message: "empty expression".into(),
            }),
            _ => Err(self.error("number, identifier or `(`")),
        }
    }
}

/// Parse with the built-in names `t`, `x1`, `x2` and `pi`.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    parse_with(src, &[])
}

/// Parse, additionally accepting the given parameter names.
pub fn parse_with(src: &str, names: &[&str]) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        names,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        let msg = if *p.peek() == Tok::RParen {
            "unbalanced `)`"
        } else {
            "operator or end of input"
        };
        return Err(p.error(msg));
    }
    Ok(e)
}
