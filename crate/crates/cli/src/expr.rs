//! Arithmetic expressions in `x` and `theta`.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := unary ('^' factor)?
//! unary  := '-'? atom
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: expected {expected}")]
    Syntax { pos: usize, expected: String },
    #[error("unknown identifier '{name}' at byte {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("function '{name}' at byte {pos} takes {expected} argument(s), got {got}")]
    ArityMismatch {
        pos: usize,
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("evaluation error at byte {pos}: {what}")]
    Eval { pos: usize, what: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Const {
    Pi,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Coth,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
    Pow,
}

const FUNCS: [(&str, Func); 14] = [
    ("sin", Func::Sin),
    ("cos", Func::Cos),
    ("tan", Func::Tan),
    ("sinh", Func::Sinh),
    ("cosh", Func::Cosh),
    ("tanh", Func::Tanh),
    ("coth", Func::Coth),
    ("exp", Func::Exp),
    ("log", Func::Log),
    ("sqrt", Func::Sqrt),
    ("abs", Func::Abs),
    ("min", Func::Min),
    ("max", Func::Max),
    ("pow", Func::Pow),
];

impl Func {
    fn name(self) -> &'static str {
        FUNCS
            .iter()
            .find(|f| f.1 == self)
            .map(|f| f.0)
            .unwrap_or("?")
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Num(f64),
    Var(Var),
    Const(Const),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A parsed expression. Equality ignores source positions.
#[derive(Debug, Clone)]
pub struct Expr {
    pub node: Node,
    pub pos: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.node, &other.node) {
            (Node::Num(a), Node::Num(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Const(a), Node::Const(b)) => a == b,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Bin(o, a, b), Node::Bin(p, c, d)) => o == p && a == c && b == d,
            (Node::Call(f, a), Node::Call(g, b)) => f == g && a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    while j < b.len() && b[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let v: f64 = text[start..i].parse().map_err(|_| ExprError::Syntax {
                pos: start,
                expected: "a number".into(),
            })?;
            if !v.is_finite() {
                return Err(ExprError::Syntax {
                    pos: start,
                    expected: "a finite number".into(),
                });
            }
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            let t = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b',' => Tok::Comma,
                _ => {
                    return Err(ExprError::Syntax {
                        pos: i,
                        expected: "an operator, number, identifier or parenthesis".into(),
                    })
                }
            };
            out.push((t, i));
            i += 1;
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            pos: self.pos(),
            expected: expected.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            let (_, pos) = self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr {
                node: Node::Bin(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            let (_, pos) = self.bump();
            let rhs = self.factor()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr {
                node: Node::Bin(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.unary()?;
        if *self.peek() == Tok::Op('^') {
            let (_, pos) = self.bump();
            let exp = self.factor()?;
            return Ok(Expr {
                node: Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)),
                pos,
            });
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Op('-') {
            let (_, pos) = self.bump();
            let inner = self.atom()?;
            return Ok(Expr {
                node: Node::Neg(Box::new(inner)),
                pos,
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr {
                    node: Node::Num(v),
                    pos,
                })
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.fail("')'");
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    if *self.peek() != Tok::RParen {
                        return self.fail("',' or ')'");
                    }
                    self.bump();
                    let f = FUNCS
                        .iter()
                        .find(|f| f.0 == name)
                        .map(|f| f.1)
                        .ok_or_else(|| ExprError::UnknownIdentifier {
                            pos,
                            name: name.clone(),
                        })?;
                    if args.len() != f.arity() {
                        return Err(ExprError::ArityMismatch {
                            pos,
                            name,
                            expected: f.arity(),
                            got: args.len(),
                        });
                    }
                    return Ok(Expr {
                        node: Node::Call(f, args),
                        pos,
                    });
                }
                let node = match name.as_str() {
                    "x" => Node::Var(Var::X),
                    "theta" => Node::Var(Var::Theta),
                    "pi" => Node::Const(Const::Pi),
                    "e" => Node::Const(Const::E),
                    _ => return Err(ExprError::UnknownIdentifier { pos, name }),
                };
                Ok(Expr { node, pos })
            }
            _ => self.fail("a number, identifier or '('"),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("an operator or end of input");
    }
    Ok(e)
}

impl Expr {
    pub fn eval(&self, x: f64, theta: f64) -> Result<f64, ExprError> {
        let err = |what: &str| ExprError::Eval {
            pos: self.pos,
            what: what.into(),
        };
        Ok(match &self.node {
            Node::Num(v) => *v,
            Node::Var(Var::X) => x,
            Node::Var(Var::Theta) => theta,
            Node::Const(Const::Pi) => std::f64::consts::PI,
            Node::Const(Const::E) => std::f64::consts::E,
            Node::Neg(a) => -a.eval(x, theta)?,
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, theta)?, b.eval(x, theta)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return Err(err("division by zero")),
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Node::Call(f, args) => {
                let a = args[0].eval(x, theta)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Sinh => a.sinh(),
                    Func::Cosh => a.cosh(),
                    Func::Tanh => a.tanh(),
                    Func::Coth if a == 0.0 => return Err(err("coth of zero")),
                    Func::Coth => 1.0 / a.tanh(),
                    Func::Exp => a.exp(),
                    Func::Log if a <= 0.0 => return Err(err("log of a non-positive value")),
                    Func::Log => a.ln(),
                    Func::Sqrt if a < 0.0 => return Err(err("sqrt of a negative value")),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(x, theta)?),
                    Func::Max => a.max(args[1].eval(x, theta)?),
                    Func::Pow => a.powf(args[1].eval(x, theta)?),
                }
            }
        })
    }

    pub fn uses(&self, v: Var) -> bool {
        match &self.node {
            Node::Var(w) => *w == v,
            Node::Num(_) | Node::Const(_) => false,
            Node::Neg(a) => a.uses(v),
            Node::Bin(_, a, b) => a.uses(v) || b.uses(v),
            Node::Call(_, args) => args.iter().any(|a| a.uses(v)),
        }
    }

    fn is_atom(&self) -> bool {
        matches!(
            self.node,
            Node::Num(_) | Node::Var(_) | Node::Const(_) | Node::Call(..)
        )
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if matches!(self.node, Node::Bin(..)) {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Var(Var::X) => f.write_str("x"),
            Node::Var(Var::Theta) => f.write_str("theta"),
            Node::Const(Const::Pi) => f.write_str("pi"),
            Node::Const(Const::E) => f.write_str("e"),
            Node::Neg(a) if a.is_atom() => write!(f, "-{a}"),
            Node::Neg(a) => write!(f, "-({a})"),
            Node::Bin(op, a, b) => {
                a.fmt_operand(f)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_operand(f)
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
