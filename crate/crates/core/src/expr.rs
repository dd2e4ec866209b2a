//! Scalar field expressions over coordinates: numbers, `x y z w`, `pi`,
//! `+ - * / ^`, the functions `sin cos tan exp ln sqrt abs tanh`, and the
//! comparisons `< <= > >=`, which evaluate to 1 or 0.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
}

const VARS: [&str; 4] = ["x", "y", "z", "w"];

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    arity: usize,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.comparison()?;
        if let Some(t) = p.tokens.get(p.pos) {
            return Err(Error::Parse(format!("unexpected {t:?} in {source:?}")));
        }
        let arity = root.arity();
        Ok(Expr { source: source.to_string(), root, arity })
    }

    /// Number of coordinates the expression needs (1 + highest variable used).
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval(&self, coords: &[f64]) -> f64 {
        self.root.eval(coords)
    }

    pub fn check_arity(&self, dim: usize) -> Result<()> {
        if self.arity > dim {
            return Err(Error::Parse(format!("{:?} uses {} coordinates, only {dim} available", self.source, self.arity)));
        }
        Ok(())
    }
}

impl Node {
    fn eval(&self, c: &[f64]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(i) => c.get(*i).copied().unwrap_or(0.0),
            Node::Neg(a) => -a.eval(c),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(c), b.eval(c));
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Pow => a.powf(b),
                    Op::Lt => f64::from(u8::from(a < b)),
                    Op::Le => f64::from(u8::from(a <= b)),
                    Op::Gt => f64::from(u8::from(a > b)),
                    Op::Ge => f64::from(u8::from(a >= b)),
                }
            }
            Node::Call(f, a) => {
                let a = a.eval(c);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Ln => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Tanh => a.tanh(),
                }
            }
        }
    }

    fn arity(&self) -> usize {
        match self {
            Node::Num(_) => 0,
            Node::Var(i) => i + 1,
            Node::Neg(a) | Node::Call(_, a) => a.arity(),
            Node::Bin(_, a, b) => a.arity().max(b.arity()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Sym(char),
    Cmp(Op),
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part, only when followed by a digit or sign+digit
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {text:?}")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if c == '<' || c == '>' {
            let eq = chars.get(i + 1) == Some(&'=');
            out.push(Token::Cmp(match (c, eq) {
                ('<', false) => Op::Lt,
                ('<', true) => Op::Le,
                ('>', false) => Op::Gt,
                _ => Op::Ge,
            }));
            i += 1 + usize::from(eq);
        } else if "+-*/^()".contains(c) {
            out.push(Token::Sym(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character {c:?} in {s:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_sym(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Sym(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_sym() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!("expected {c:?} at token {}", self.pos)))
        }
    }

    fn comparison(&mut self) -> Result<Node> {
        let lhs = self.sum()?;
        if let Some(Token::Cmp(op)) = self.tokens.get(self.pos).cloned() {
            self.pos += 1;
            let rhs = self.sum()?;
            return Ok(Node::Bin(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.product()?;
            let op = if c == '+' { Op::Add } else { Op::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { Op::Mul } else { Op::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // unary minus binds looser than ^, so -x^2 = -(x^2)
    fn unary(&mut self) -> Result<Node> {
        match self.peek_sym() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_sym() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self.tokens.get(self.pos).cloned().ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Node::Num(v)),
            Token::Sym('(') => {
                let inner = self.sum()?;
                self.expect(')')?;
                Ok(inner)
            }
            Token::Sym(c) => Err(Error::Parse(format!("unexpected {c:?}"))),
            Token::Cmp(op) => Err(Error::Parse(format!("unexpected comparison {op:?}"))),
            Token::Ident(name) => {
                if let Some(i) = VARS.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                let f = match name.as_str() {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "tan" => Func::Tan,
                    "exp" => Func::Exp,
                    "ln" | "log" => Func::Ln,
                    "sqrt" => Func::Sqrt,
                    "abs" => Func::Abs,
                    "tanh" => Func::Tanh,
                    _ => return Err(Error::Parse(format!("unknown name {name:?}"))),
                };
                self.expect('(')?;
                let arg = self.sum()?;
                self.expect(')')?;
                Ok(Node::Call(f, Box::new(arg)))
            }
        }
    }
}
