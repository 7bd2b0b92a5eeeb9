//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ('^' INT)?
//! atom   := NUMBER | 'i' | 'x(' INT ')' | 'y(' INT ')' | 'z(' INT ')' | 'zb(' INT ')'
//!         | FUNC '(' expr ')' | '(' expr ')'
//! FUNC   := exp | log | sin | cos | bump | conj
//! ```
//!
//! A leading unary minus on a term and a signed exponent are also accepted.

use super::Expr;
use crate::error::ParseError;

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = if self.eat(b'-') {
            -self.term()?
        } else {
            self.eat(b'+');
            self.term()?
        };
        loop {
            if self.eat(b'+') {
                acc = acc + self.term()?;
            } else if self.eat(b'-') {
                acc = acc - self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            if self.eat(b'*') {
                acc = acc * self.factor()?;
            } else if self.eat(b'/') {
                acc = acc / self.factor()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let neg = self.eat(b'-');
            let n = self.integer()?;
            let n = i32::try_from(n).map_err(|_| self.error("exponent too large"))?;
            return Ok(base.powi(if neg { -n } else { n }));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<usize, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| ParseError {
                pos: start,
                msg: "integer out of range".into(),
            })
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Expr::real).map_err(|_| ParseError {
            pos: start,
            msg: format!("invalid number '{text}'"),
        })
    }

    fn index_arg(&mut self) -> Result<usize, ParseError> {
        self.expect(b'(')?;
        let at = self.pos;
        let i = self.integer()?;
        if i == 0 {
            return Err(ParseError {
                pos: at,
                msg: "variable index must be >= 1".into(),
            });
        }
        self.expect(b')')?;
        Ok(i)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let c = self.peek().ok_or_else(|| self.error("unexpected end of input"))?;
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
                self.pos += 1;
            }
            let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return match word {
                "i" => Ok(Expr::imag_unit()),
                "x" => Ok(Expr::x(self.index_arg()?)),
                "y" => Ok(Expr::y(self.index_arg()?)),
                "z" => Ok(Expr::z(self.index_arg()?)),
                "zb" => Ok(Expr::zb(self.index_arg()?)),
                "exp" | "log" | "sin" | "cos" | "bump" | "conj" => {
                    self.expect(b'(')?;
                    let arg = self.expr()?;
                    self.expect(b')')?;
                    Ok(match word {
                        "exp" => arg.exp(),
                        "log" => arg.ln(),
                        "sin" => arg.sin(),
                        "cos" => arg.cos(),
                        "bump" => arg.bump(),
                        _ => arg.conj(),
                    })
                }
                _ => Err(ParseError {
                    pos: start,
                    msg: format!("unknown identifier '{word}'"),
                }),
            };
        }
        Err(self.error(format!("unexpected character '{}'", c as char)))
    }
}
