//! Parser for test-function selectors such as `fkn(k=1,n=2,kappa=50)` or
//! `psi(n=1) * h(k=2) + 3`.

use std::sync::Arc;

use thiserror::Error;

use super::context::FunctionContext;
use super::function::{Kind, TestFunction, Truncation};
use super::TestFunctionError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectorError {
    #[error("selector: {message} at byte {at}")]
    Syntax { message: String, at: usize },
    #[error("selector: unknown function {0:?}")]
    UnknownFunction(String),
    #[error("selector: {name} does not take argument {key:?}")]
    UnexpectedArgument { name: String, key: String },
    #[error("selector: {name} requires argument {key}")]
    MissingArgument { name: String, key: &'static str },
    #[error("selector: duplicate argument {0:?}")]
    DuplicateArgument(String),
    #[error("selector: {key} must be a positive integer, got {value}")]
    NotAnIndex { key: String, value: f64 },
    #[error(transparent)]
    Invalid(#[from] TestFunctionError),
}

/// Argument value: a finite number or `inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Number(f64),
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub name: String,
    pub args: Vec<(String, Value)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Number(f64),
    Call(Call),
}

/// Sum of products.
#[derive(Debug, Clone, PartialEq)]
pub struct Selector {
    pub terms: Vec<Vec<Factor>>,
}

const NAMES: [&str; 7] = ["psi", "h", "fkn", "fknD", "fknE", "fknF", "f0F"];

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, SelectorError> {
        Err(SelectorError::Syntax {
            message: message.into(),
            at: self.pos,
        })
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), SelectorError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected {c:?}"))
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest.find(|c| !f(c)).unwrap_or(rest.len());
        self.pos += len;
        &self.src[start..start + len]
    }

    fn ident(&mut self) -> &'a str {
        self.take_while(|c| c.is_ascii_alphanumeric() || c == '_')
    }

    fn number(&mut self) -> Result<f64, SelectorError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        let digits = |mut i: usize| {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            i
        };
        end = digits(end);
        if end < bytes.len() && matches!(bytes[end], b'e' | b'E') {
            let mut i = end + 1;
            if i < bytes.len() && matches!(bytes[i], b'+' | b'-') {
                i += 1;
            }
            let j = digits(i);
            if j > i {
                end = j;
            }
        }
        self.pos = end;
        let text = &self.src[start..end];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = start;
                self.err(format!("invalid number {text:?}"))
            }
        }
    }

    fn value(&mut self) -> Result<Value, SelectorError> {
        if self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
            let start = self.pos;
            return match self.ident() {
                "inf" => Ok(Value::Infinite),
                other => {
                    self.pos = start;
                    self.err(format!("expected number or inf, found {other:?}"))
                }
            };
        }
        self.number().map(Value::Number)
    }

    fn factor(&mut self) -> Result<Factor, SelectorError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => self.number().map(Factor::Number),
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.ident().to_string();
                if !NAMES.contains(&name.as_str()) {
                    return Err(SelectorError::UnknownFunction(name));
                }
                let mut args: Vec<(String, Value)> = Vec::new();
                if self.eat('(') && !self.eat(')') {
                    loop {
                        let key = self.ident().to_string();
                        if key.is_empty() {
                            return self.err("expected argument name");
                        }
                        self.expect('=')?;
                        let v = self.value()?;
                        if args.iter().any(|(k, _)| *k == key) {
                            return Err(SelectorError::DuplicateArgument(key));
                        }
                        args.push((key, v));
                        if self.eat(')') {
                            break;
                        }
                        self.expect(',')?;
                    }
                }
                Ok(Factor::Call(Call { name, args }))
            }
            Some(_) => self.err("expected number or function"),
            None => self.err("unexpected end of selector"),
        }
    }
}

impl Selector {
    pub fn parse(text: &str) -> Result<Self, SelectorError> {
        let mut lx = Lexer { src: text, pos: 0 };
        let mut terms = Vec::new();
        loop {
            let mut factors = vec![lx.factor()?];
            while lx.eat('*') {
                factors.push(lx.factor()?);
            }
            terms.push(factors);
            if !lx.eat('+') {
                break;
            }
        }
        if lx.peek().is_some() {
            return lx.err("trailing input");
        }
        Ok(Self { terms })
    }

    /// Builds the function against a context. An omitted `kappa` takes the
    /// context default; `kappa=inf` leaves residuals untruncated. An omitted
    /// `qkappa` is `max(kappa, r^-k)` when `kappa` is finite and `inf`
    /// otherwise.
    pub fn build(&self, ctx: &Arc<FunctionContext>) -> Result<TestFunction, SelectorError> {
        let mut total: Option<TestFunction> = None;
        for term in &self.terms {
            let mut prod: Option<TestFunction> = None;
            for f in term {
                let next = match f {
                    Factor::Number(c) => TestFunction::constant(ctx, *c)?,
                    Factor::Call(call) => build_call(call, ctx)?,
                };
                prod = Some(match prod {
                    None => next,
                    Some(p) => p.times(next)?,
                });
            }
            let prod = prod.expect("non-empty term");
            total = Some(match total {
                None => prod,
                Some(t) => t.plus(prod)?,
            });
        }
        Ok(total.expect("non-empty selector"))
    }
}

/// Parses and builds in one step.
pub fn parse_selector(text: &str, ctx: &Arc<FunctionContext>) -> Result<TestFunction, SelectorError> {
    Selector::parse(text)?.build(ctx)
}

fn build_call(call: &Call, ctx: &Arc<FunctionContext>) -> Result<TestFunction, SelectorError> {
    let name = call.name.as_str();
    let (needs_k, needs_n, has_queue) = match name {
        "psi" => (false, true, false),
        "h" => (true, false, false),
        "f0F" => (false, false, false),
        _ => (true, true, true),
    };
    let mut k = None;
    let mut n = None;
    let mut kappa = None;
    let mut qkappa = None;
    for (key, v) in &call.args {
        let allowed = match key.as_str() {
            "k" => needs_k,
            "n" => needs_n,
            "kappa" => true,
            "qkappa" => has_queue,
            _ => false,
        };
        if !allowed {
            return Err(SelectorError::UnexpectedArgument {
                name: name.into(),
                key: key.clone(),
            });
        }
        let slot = match key.as_str() {
            "k" => &mut k,
            "n" => &mut n,
            "kappa" => &mut kappa,
            _ => &mut qkappa,
        };
        *slot = Some(*v);
    }
    let number = |key: &'static str, v: Option<Value>| -> Result<f64, SelectorError> {
        match v {
            Some(Value::Number(x)) => Ok(x),
            Some(Value::Infinite) => Err(SelectorError::Invalid(TestFunctionError::Exponent {
                what: key,
                value: f64::INFINITY,
            })),
            None => Err(SelectorError::MissingArgument { name: name.into(), key }),
        }
    };
    let k = if needs_k {
        let v = number("k", k)?;
        if v < 1.0 || v.fract() != 0.0 {
            return Err(SelectorError::NotAnIndex { key: "k".into(), value: v });
        }
        v as usize
    } else {
        0
    };
    let n = if needs_n { number("n", n)? } else { 0.0 };
    let residual = match kappa {
        None => Some(ctx.default_kappa()),
        Some(Value::Infinite) => None,
        Some(Value::Number(x)) => Some(x),
    };
    let queue = match qkappa {
        Some(Value::Infinite) => None,
        Some(Value::Number(x)) => Some(x),
        None => residual.map(|kap| ctx.default_queue_kappa(k.max(1), kap)),
    };
    let kind = match name {
        "psi" => Kind::Psi { n },
        "h" => Kind::H { k },
        "fkn" => Kind::Fkn { k, n },
        "fknD" => Kind::FknD { k, n },
        "fknE" => Kind::FknE { k, n },
        "fknF" => Kind::FknF { k, n },
        _ => Kind::F0F,
    };
    let tr = Truncation {
        residual,
        queue: if has_queue { queue } else { None },
    };
    Ok(TestFunction::leaf(ctx, kind, tr)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_examples() {
        let s = Selector::parse("fkn(k=1,n=2,kappa=50)").unwrap();
        assert_eq!(
            s.terms,
            vec![vec![Factor::Call(Call {
                name: "fkn".into(),
                args: vec![
                    ("k".into(), Value::Number(1.0)),
                    ("n".into(), Value::Number(2.0)),
                    ("kappa".into(), Value::Number(50.0)),
                ],
            })]]
        );
        let s = Selector::parse(" psi(n=3, kappa=inf) * h(k=2) + 2.5 ").unwrap();
        assert_eq!(s.terms.len(), 2);
        assert_eq!(s.terms[0].len(), 2);
        assert_eq!(s.terms[1], vec![Factor::Number(2.5)]);
        assert!(Selector::parse("f0F").is_ok());
        assert!(Selector::parse("f0F()").is_ok());
        assert!(Selector::parse("psi(n=1e-1)").is_ok());
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "psi(", "psi(n=)", "psi(n=1,,)", "psi(n=1) +", "foo(n=1)", "psi(n=1) psi(n=2)", "psi(n=1,n=2)", "psi(n=abc)"] {
            assert!(Selector::parse(bad).is_err(), "{bad:?}");
        }
    }
}
