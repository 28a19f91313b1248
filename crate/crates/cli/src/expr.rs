//! Arithmetic expressions over coordinates and time.
//!
//! Grammar:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | name | name '(' expr ')' | '(' expr ')'
//! ```
//!
//! Names are the variables `x`, `y`, `z`, `t`, the constants `pi` and `e`,
//! and the functions `exp`, `log`, `sin`, `cos`, `sqrt` and `abs`.

use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("column {column}: {message}")]
pub struct ParseError {
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Self::Exp,
            "log" => Self::Log,
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "sqrt" => Self::Sqrt,
            "abs" => Self::Abs,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Self::Exp => v.exp(),
            Self::Log => v.ln(),
            Self::Sin => v.sin(),
            Self::Cos => v.cos(),
            Self::Sqrt => v.sqrt(),
            Self::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    /// Coordinate index 0..3, or 3 for time.
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

const TIME: usize = 3;

impl Node {
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(TIME) => t,
            Node::Var(i) => x.get(*i).copied().unwrap_or(0.0),
            Node::Neg(a) => -a.eval(x, t),
            Node::Add(a, b) => a.eval(x, t) + b.eval(x, t),
            Node::Sub(a, b) => a.eval(x, t) - b.eval(x, t),
            Node::Mul(a, b) => a.eval(x, t) * b.eval(x, t),
            Node::Div(a, b) => a.eval(x, t) / b.eval(x, t),
            Node::Pow(a, b) => a.eval(x, t).powf(b.eval(x, t)),
            Node::Call(f, a) => f.apply(a.eval(x, t)),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Num(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Call(_, a) => a.max_var(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.max_var().max(b.max_var())
            }
        }
    }

    fn uses(&self, var: usize) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(i) => *i == var,
            Node::Neg(a) | Node::Call(_, a) => a.uses(var),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.uses(var) || b.uses(var)
            }
        }
    }
}

/// A parsed expression `f(x, y, z, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let mut p = Parser { chars: source.char_indices().collect(), pos: 0, len: source.len() };
        let root = p.expr()?;
        p.skip_ws();
        if let Some(&(i, c)) = p.chars.get(p.pos) {
            return Err(ParseError { column: i + 1, message: format!("unexpected '{c}'") });
        }
        Ok(Self { source: source.to_string(), root })
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        self.root.eval(x, t)
    }

    pub fn uses_time(&self) -> bool {
        self.root.uses(TIME)
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_coordinate(&self) -> Option<usize> {
        (0..TIME).rev().find(|&i| self.root.uses(i))
    }

    pub fn is_constant(&self) -> bool {
        self.root.max_var().is_none()
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn column(&self) -> usize {
        self.chars.get(self.pos).map_or(self.len, |&(i, _)| i) + 1
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { column: self.column(), message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|(_, c)| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            None => self.err("unexpected end of expression"),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected ')'");
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(c) => self.err(format!("unexpected '{c}'")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let column = self.column();
        let mut text = String::new();
        while let Some(&(_, c)) = self.chars.get(self.pos) {
            let exponent_sign = (c == '+' || c == '-') && text.ends_with(['e', 'E']);
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exponent_sign {
                text.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        text.parse::<f64>().map(Node::Num).map_err(|_| {
            self.pos = start;
            ParseError { column, message: format!("invalid number '{text}'") }
        })
    }

    fn name(&mut self) -> Result<Node, ParseError> {
        let column = self.column();
        let mut name = String::new();
        while let Some(&(_, c)) = self.chars.get(self.pos) {
            if c.is_ascii_alphanumeric() || c == '_' {
                name.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        if let Some(func) = Func::from_name(&name) {
            if !self.eat('(') {
                return self.err(format!("expected '(' after {name}"));
            }
            let arg = self.expr()?;
            if !self.eat(')') {
                return self.err("expected ')'");
            }
            return Ok(Node::Call(func, Box::new(arg)));
        }
        Ok(match name.as_str() {
            "x" => Node::Var(0),
            "y" => Node::Var(1),
            "z" => Node::Var(2),
            "t" => Node::Var(TIME),
            "pi" => Node::Num(std::f64::consts::PI),
            "e" => Node::Num(std::f64::consts::E),
            _ => return Err(ParseError { column, message: format!("unknown name '{name}'") }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(s: &str, x: &[f64], t: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, t)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[], 0.0), 7.0);
        assert_eq!(eval("(1 + 2) * 3", &[], 0.0), 9.0);
        assert_eq!(eval("8 / 4 / 2", &[], 0.0), 1.0);
        assert_eq!(eval("2 ^ 3 ^ 2", &[], 0.0), 512.0);
        assert_eq!(eval("-2 ^ 2", &[], 0.0), -4.0);
        assert_eq!(eval("1 - 2 - 3", &[], 0.0), -4.0);
        assert_eq!(eval("1e-3 * 2E+2", &[], 0.0), 0.2);
    }

    #[test]
    fn variables_and_functions() {
        let v = eval("exp(-pi^2*t/2) * cos(pi*x) + y", &[0.25, 1.0], 0.5);
        let expect = (-std::f64::consts::PI.powi(2) / 4.0).exp() * (std::f64::consts::PI / 4.0).cos() + 1.0;
        assert!((v - expect).abs() < 1e-15);
        assert_eq!(eval("log(e) + sqrt(4) + abs(-1)", &[], 0.0), 4.0);
        let e = Expr::parse("x + 0*t").unwrap();
        assert!(e.uses_time());
        assert_eq!(e.max_coordinate(), Some(0));
        assert!(Expr::parse("3*pi").unwrap().is_constant());
    }

    #[test]
    fn errors_carry_columns() {
        let e = Expr::parse("x + ").unwrap_err();
        assert_eq!(e.column, 5);
        let e = Expr::parse("2 * w").unwrap_err();
        assert_eq!(e.column, 5);
        assert!(e.message.contains("unknown name"));
        assert!(Expr::parse("cos x").is_err());
        assert!(Expr::parse("(1 + 2").is_err());
        assert!(Expr::parse("1 2").is_err());
    }
}
