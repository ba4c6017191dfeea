//! A deliberately tiny arithmetic expression grammar over the coordinates
//! `x1..x4`: `+`, `-`, `*`, `/`, `sin`, `cos`, `exp`, numeric literals and
//! `pi`. No user code execution, no other names.

use acs4::error::{Error, Result};
use acs4::field::{FormField, ScalarField};
use acs4::grid::GridChart;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Number(f64),
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: [f64; 4]) -> f64 {
        match self {
            Expr::Number(v) => *v,
            Expr::Coord(a) => x[*a],
            Expr::Neg(e) => -e.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Sin(e) => e.eval(x).sin(),
            Expr::Cos(e) => e.eval(x).cos(),
            Expr::Exp(e) => e.eval(x).exp(),
        }
    }

    /// Samples the expression over a chart; every value must be finite.
    pub fn sample(&self, chart: GridChart) -> Result<ScalarField> {
        let field = FormField::scalar_from_fn(chart, |x| self.eval(x));
        if field.comp(0).iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "expression evaluates to a non-finite value on the grid".into(),
            ));
        }
        Ok(field)
    }
}

pub fn parse(text: &str) -> Result<Expr> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(Error::Config(format!(
            "unexpected trailing input at token {}",
            p.pos
        )));
    }
    Ok(e)
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Number(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Config(format!("bad number literal '{s}'")))?;
                out.push(Token::Number(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                out.push(Token::Name(chars[start..i].iter().collect()));
            }
            other => {
                return Err(Error::Config(format!(
                    "unexpected character '{other}' in expression"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Minus) => Ok(Expr::Neg(Box::new(self.factor()?))),
            Some(Token::Number(v)) => Ok(Expr::Number(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(Error::Config("missing closing parenthesis".into())),
                }
            }
            Some(Token::Name(name)) => match name.as_str() {
                "pi" => Ok(Expr::Number(std::f64::consts::PI)),
                "x1" | "x2" | "x3" | "x4" => {
                    Ok(Expr::Coord(name[1..].parse::<usize>().unwrap() - 1))
                }
                "sin" | "cos" | "exp" => {
                    match self.bump() {
                        Some(Token::LParen) => {}
                        _ => {
                            return Err(Error::Config(format!(
                                "function '{name}' needs parentheses"
                            )))
                        }
                    }
                    let arg = self.expr()?;
                    match self.bump() {
                        Some(Token::RParen) => {}
                        _ => return Err(Error::Config("missing closing parenthesis".into())),
                    }
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(Box::new(arg)),
                        "cos" => Expr::Cos(Box::new(arg)),
                        _ => Expr::Exp(Box::new(arg)),
                    })
                }
                other => Err(Error::Config(format!(
                    "unknown name '{other}' (allowed: x1..x4, pi, sin, cos, exp)"
                ))),
            },
            other => Err(Error::Config(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let e = parse("0.5 * cos(2*pi*x1) - sin(pi*x2)/2 + exp(-x3)").unwrap();
        let x = [0.25, 0.5, 0.0, 0.9];
        let expect = 0.5 * (2.0 * std::f64::consts::PI * 0.25).cos()
            - (std::f64::consts::PI * 0.5).sin() / 2.0
            + 1.0;
        assert!((e.eval(x) - expect).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse("1 - 2 * 3").unwrap();
        assert_eq!(e.eval([0.0; 4]), -5.0);
        let e = parse("-x1 * x2").unwrap();
        assert_eq!(e.eval([2.0, 3.0, 0.0, 0.0]), -6.0);
        let e = parse("(1 - 2) * 3").unwrap();
        assert_eq!(e.eval([0.0; 4]), -3.0);
    }

    #[test]
    fn rejects_unknown_names_and_garbage() {
        assert!(parse("system(1)").is_err());
        assert!(parse("x5").is_err());
        assert!(parse("1 +").is_err());
        assert!(parse("sin 3").is_err());
        assert!(parse("2 ^ 3").is_err());
    }

    #[test]
    fn samples_to_a_field() {
        let chart = GridChart::unit(4).unwrap();
        let f = parse("x1 + 2*x4").unwrap().sample(chart).unwrap();
        let idx = chart.index_of([1, 0, 0, 2]);
        assert!((f.comp(0)[idx] - (0.25 + 1.0)).abs() < 1e-15);
        assert!(parse("1/x1").unwrap().sample(chart).is_err());
    }
}
