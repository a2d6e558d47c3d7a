//! A small expression language for coefficient functions `a_k(x)`.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | 'pi' | 'x1' | 'x2'
//!          | ('sin' | 'cos' | 'abs') '(' expr ')'
//!          | 'chi' '(' expr ',' expr ')'
//!          | '(' expr ')'
//! ```
//!
//! `chi(a, b)` is the indicator of the half-open interval `[a, b)` in `x1`.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("variable {0} is not available at this point")]
    MissingVariable(&'static str),
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X1,
    X2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoeffExpr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<CoeffExpr>),
    Bin(BinOp, Box<CoeffExpr>, Box<CoeffExpr>),
    Call(Func, Box<CoeffExpr>),
    Chi(Box<CoeffExpr>, Box<CoeffExpr>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Token {
    Num(f64),
    Ident(&'static str),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    End,
}

const IDENTS: [&str; 7] = ["pi", "x1", "x2", "sin", "cos", "abs", "chi"];

/// Splits `text` into tokens with their byte offsets. The final token is
/// always [`Token::End`].
pub fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let tok = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b',' => Token::Comma,
            b'0'..=b'9' | b'.' => {
                let start = i;
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
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ParseError {
                    offset: start,
                    message: format!("malformed number '{lit}'"),
                })?;
                out.push((Token::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                match IDENTS.iter().find(|&&k| k == word) {
                    Some(&k) => out.push((Token::Ident(k), start)),
                    None => {
                        return Err(ParseError {
                            offset: start,
                            message: format!("unknown identifier '{word}'"),
                        })
                    }
                }
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap();
                return Err(ParseError {
                    offset: i,
                    message: format!("unexpected character '{ch}'"),
                });
            }
        };
        out.push((tok, i));
        i += 1;
    }
    out.push((Token::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Token {
        self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let t = self.peek();
        if t != Token::End {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ParseError> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn error(&self, expected: &str) -> ParseError {
        let found = match self.peek() {
            Token::End => "end of input".to_string(),
            Token::Num(v) => format!("number {v}"),
            Token::Ident(s) => format!("'{s}'"),
            t => format!("'{}'", token_text(t)),
        };
        ParseError {
            offset: self.offset(),
            message: format!("{expected}, found {found}"),
        }
    }

    fn expr(&mut self) -> Result<CoeffExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinOp::Add,
                Token::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = CoeffExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<CoeffExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinOp::Mul,
                Token::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = CoeffExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<CoeffExpr, ParseError> {
        if self.peek() == Token::Minus {
            self.bump();
            return Ok(CoeffExpr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<CoeffExpr, ParseError> {
        match self.peek() {
            Token::Num(v) => {
                self.bump();
                Ok(CoeffExpr::Num(v))
            }
            Token::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(e)
            }
            Token::Ident(name) => {
                self.bump();
                match name {
                    "pi" => Ok(CoeffExpr::Pi),
                    "x1" => Ok(CoeffExpr::Var(Var::X1)),
                    "x2" => Ok(CoeffExpr::Var(Var::X2)),
                    "chi" => {
                        self.expect(Token::LParen, "'(' after chi")?;
                        let a = self.expr()?;
                        self.expect(Token::Comma, "','")?;
                        let b = self.expr()?;
                        self.expect(Token::RParen, "')'")?;
                        Ok(CoeffExpr::Chi(Box::new(a), Box::new(b)))
                    }
                    f => {
                        let func = match f {
                            "sin" => Func::Sin,
                            "cos" => Func::Cos,
                            _ => Func::Abs,
                        };
                        self.expect(Token::LParen, &format!("'(' after {f}"))?;
                        let a = self.expr()?;
                        self.expect(Token::RParen, "')'")?;
                        Ok(CoeffExpr::Call(func, Box::new(a)))
                    }
                }
            }
            _ => Err(self.error("expected a number, variable, function or '('")),
        }
    }
}

fn token_text(t: Token) -> &'static str {
    match t {
        Token::Plus => "+",
        Token::Minus => "-",
        Token::Star => "*",
        Token::Slash => "/",
        Token::LParen => "(",
        Token::RParen => ")",
        Token::Comma => ",",
        Token::Ident(s) => s,
        Token::Num(_) => "number",
        Token::End => "end of input",
    }
}

pub fn parse(text: &str) -> Result<CoeffExpr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.peek() != Token::End {
        return Err(p.error("expected operator or end of input"));
    }
    Ok(e)
}

impl CoeffExpr {
    /// Evaluates at `(x1, x2)`; `x2` is `None` in one dimension.
    pub fn eval(&self, x1: f64, x2: Option<f64>) -> Result<f64, EvalError> {
        Ok(match self {
            CoeffExpr::Num(v) => *v,
            CoeffExpr::Pi => std::f64::consts::PI,
            CoeffExpr::Var(Var::X1) => x1,
            CoeffExpr::Var(Var::X2) => x2.ok_or(EvalError::MissingVariable("x2"))?,
            CoeffExpr::Neg(a) => -a.eval(x1, x2)?,
            CoeffExpr::Bin(op, a, b) => {
                let a = a.eval(x1, x2)?;
                let b = b.eval(x1, x2)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            CoeffExpr::Call(f, a) => {
                let a = a.eval(x1, x2)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => a.abs(),
                }
            }
            CoeffExpr::Chi(a, b) => {
                let a = a.eval(x1, x2)?;
                let b = b.eval(x1, x2)?;
                if a <= x1 && x1 < b {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// True if the expression mentions `x2`.
    pub fn uses_x2(&self) -> bool {
        match self {
            CoeffExpr::Var(v) => *v == Var::X2,
            CoeffExpr::Num(_) | CoeffExpr::Pi => false,
            CoeffExpr::Neg(a) | CoeffExpr::Call(_, a) => a.uses_x2(),
            CoeffExpr::Bin(_, a, b) | CoeffExpr::Chi(a, b) => a.uses_x2() || b.uses_x2(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            CoeffExpr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            CoeffExpr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            CoeffExpr::Neg(_) => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for CoeffExpr {
    /// Prints with the fewest parentheses that reparse to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoeffExpr::Num(v) => write!(f, "{v:?}"),
            CoeffExpr::Pi => write!(f, "pi"),
            CoeffExpr::Var(Var::X1) => write!(f, "x1"),
            CoeffExpr::Var(Var::X2) => write!(f, "x2"),
            CoeffExpr::Neg(a) => {
                if a.precedence() < 3 {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            CoeffExpr::Bin(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {sym} ")?;
                // Left-associative: an equal-precedence right operand needs
                // parentheses.
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            CoeffExpr::Call(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Abs => "abs",
                };
                write!(f, "{name}({a})")
            }
            CoeffExpr::Chi(a, b) => write!(f, "chi({a}, {b})"),
        }
    }
}
