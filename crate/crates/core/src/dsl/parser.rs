//! Recursive-descent parser for infix expressions and interval boxes.

use super::lexer::{Tok, Token};
use super::{Diagnostic, Span};
use crate::expr::{Block, Expr, Var};

/// Which variables an expression may reference.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Scope {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub allow_z: bool,
    pub what: &'static str,
}

pub(crate) struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    scope: Scope,
    end: Span,
}

impl<'a> Parser<'a> {
    pub fn new(toks: &'a [Token], scope: Scope, end: Span) -> Self {
        Parser { toks, pos: 0, scope, end }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks.get(self.pos).map_or(self.end, |t| t.span)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Span, Diagnostic> {
        match self.next() {
            Some(t) if t.tok == want => Ok(t.span),
            Some(t) => Err(Diagnostic::error(t.span, format!("expected {what}"))),
            None => Err(Diagnostic::error(self.end, format!("expected {what} before end of line"))),
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn finish(&self) -> Result<(), Diagnostic> {
        if self.at_end() {
            Ok(())
        } else {
            Err(Diagnostic::error(self.span(), "unexpected trailing input".to_string()))
        }
    }

    pub fn eat(&mut self, t: Tok) -> bool {
        if self.peek() == Some(&t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn ident(&mut self) -> Result<(String, Span), Diagnostic> {
        match self.next() {
            Some(Token { tok: Tok::Ident(s), span }) => Ok((s.clone(), *span)),
            Some(t) => Err(Diagnostic::error(t.span, "expected identifier".to_string())),
            None => Err(Diagnostic::error(self.end, "expected identifier".to_string())),
        }
    }

    pub fn expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(Tok::Plus) {
                let rhs = self.term()?;
                lhs = Expr::add(lhs, rhs);
            } else if self.eat(Tok::Minus) {
                let rhs = self.term()?;
                lhs = Expr::sub(lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(Tok::Star) {
                let rhs = self.unary()?;
                lhs = Expr::mul(lhs, rhs);
            } else if self.eat(Tok::Slash) {
                let rhs = self.unary()?;
                lhs = Expr::div(lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, Diagnostic> {
        if self.eat(Tok::Minus) {
            return Ok(Expr::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, Diagnostic> {
        let base = self.atom()?;
        if self.eat(Tok::Caret) {
            let ex = self.unary()?;
            return Ok(Expr::pow(base, ex));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>, Diagnostic> {
        let mut out = vec![self.expr()?];
        while self.eat(Tok::Comma) {
            out.push(self.expr()?);
        }
        Ok(out)
    }

    /// Comma-separated list of expressions at top level.
    pub fn expr_list(&mut self) -> Result<Vec<Expr>, Diagnostic> {
        self.args()
    }

    fn bracket_list(&mut self) -> Result<Vec<Expr>, Diagnostic> {
        self.expect(Tok::LBracket, "`[`")?;
        let v = self.args()?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok(v)
    }

    fn atom(&mut self) -> Result<Expr, Diagnostic> {
        let span = self.span();
        let Some(tok) = self.next() else {
            return Err(Diagnostic::error(self.end, "expected expression before end of line".to_string()));
        };
        match &tok.tok {
            Tok::Num(v) => Ok(Expr::constant(*v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)` (unbalanced parentheses)")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let e = self.call(name, span)?;
                    self.expect(Tok::RParen, "`)` (unbalanced parentheses)")?;
                    return Ok(e);
                }
                self.variable(name, span)
            }
            _ => Err(Diagnostic::error(span, "expected expression".to_string())),
        }
    }

    fn call(&mut self, name: &str, span: Span) -> Result<Expr, Diagnostic> {
        let one = |p: &mut Self| -> Result<Expr, Diagnostic> {
            let args = p.args()?;
            if args.len() != 1 {
                return Err(Diagnostic::error(span, format!("`{name}` takes one argument")));
            }
            Ok(args.into_iter().next().unwrap())
        };
        match name {
            "abs" => Ok(Expr::abs(one(self)?)),
            "sqrt" => Ok(Expr::sqrt(one(self)?)),
            "min" => Ok(Expr::Min(self.args()?)),
            "max" => Ok(Expr::Max(self.args()?)),
            "norm" => Ok(Expr::Norm(self.args()?)),
            "dot" => {
                let a = self.bracket_list()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.bracket_list()?;
                if a.len() != b.len() {
                    return Err(Diagnostic::error(span, "`dot` needs two lists of equal length".to_string()));
                }
                Ok(Expr::Dot(a, b))
            }
            "chi" => {
                let (bname, bspan) = self.ident()?;
                let block = match bname.as_str() {
                    "x" => Block::X,
                    "y" => Block::Y,
                    "z" => Block::Z,
                    "u" => Block::U,
                    _ => return Err(Diagnostic::error(bspan, format!("unknown block `{bname}`"))),
                };
                self.expect(Tok::Comma, "`,`")?;
                let bounds = self.interval_box()?;
                let dim = match block {
                    Block::X => self.scope.n,
                    Block::Y => self.scope.m,
                    Block::Z => self.scope.m * self.scope.n,
                    Block::U => self.scope.d,
                };
                if bounds.len() != dim {
                    return Err(Diagnostic::semantic(
                        bspan,
                        format!("indicator box has {} intervals but block `{bname}` has dimension {dim}", bounds.len()),
                    ));
                }
                self.check_block(block, bspan)?;
                Ok(Expr::Indicator { block, bounds })
            }
            _ => Err(Diagnostic::error(span, format!("unknown function `{name}`"))),
        }
    }

    fn check_block(&self, block: Block, span: Span) -> Result<(), Diagnostic> {
        if block == Block::Z && !self.scope.allow_z {
            return Err(Diagnostic::semantic(span, format!("{} may not reference z", self.scope.what)));
        }
        if block == Block::U && self.scope.d == 0 {
            return Err(Diagnostic::semantic(span, "u referenced but no control space is declared".to_string()));
        }
        Ok(())
    }

    fn variable(&self, name: &str, span: Span) -> Result<Expr, Diagnostic> {
        if name == "pi" {
            return Ok(Expr::constant(std::f64::consts::PI));
        }
        let (head, digits) = name.split_at(1);
        let undeclared = || Diagnostic::semantic(span, format!("undeclared variable `{name}`"));
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(undeclared());
        }
        let sc = self.scope;
        let var = match head {
            "x" | "y" | "u" => {
                let k: usize = digits.parse().map_err(|_| undeclared())?;
                let dim = match head {
                    "x" => sc.n,
                    "y" => sc.m,
                    _ => sc.d,
                };
                if k == 0 || k > dim {
                    return Err(undeclared());
                }
                match head {
                    "x" => Var::X(k - 1),
                    "y" => Var::Y(k - 1),
                    _ => Var::U(k - 1),
                }
            }
            "z" => {
                if digits.len() != 2 {
                    return Err(undeclared());
                }
                let b = digits.as_bytes();
                let i = (b[0] - b'0') as usize;
                let j = (b[1] - b'0') as usize;
                if i == 0 || j == 0 || i > sc.m || j > sc.n {
                    return Err(undeclared());
                }
                Var::Z(i - 1, j - 1)
            }
            _ => return Err(undeclared()),
        };
        self.check_block(var.block(), span)?;
        Ok(Expr::var(var))
    }

    fn signed_number(&mut self) -> Result<f64, Diagnostic> {
        let neg = self.eat(Tok::Minus);
        let span = self.span();
        let v = match self.next().map(|t| &t.tok) {
            Some(Tok::Num(v)) => *v,
            Some(Tok::Ident(s)) if s == "inf" => f64::INFINITY,
            _ => return Err(Diagnostic::error(span, "expected number".to_string())),
        };
        Ok(if neg { -v } else { v })
    }

    /// `[a, b] x [c, d] x ...`
    pub fn interval_box(&mut self) -> Result<Vec<(f64, f64)>, Diagnostic> {
        let mut out = Vec::new();
        loop {
            let span = self.span();
            self.expect(Tok::LBracket, "`[`")?;
            let lo = self.signed_number()?;
            self.expect(Tok::Comma, "`,`")?;
            let hi = self.signed_number()?;
            self.expect(Tok::RBracket, "`]`")?;
            if !(lo <= hi) {
                return Err(Diagnostic::semantic(span, format!("empty interval [{lo}, {hi}]")));
            }
            out.push((lo, hi));
            match self.peek() {
                Some(Tok::Ident(s)) if s == "x" => {
                    self.pos += 1;
                }
                _ => return Ok(out),
            }
        }
    }

    pub fn number_list(&mut self) -> Result<Vec<f64>, Diagnostic> {
        let mut out = vec![self.signed_number()?];
        while self.eat(Tok::Comma) {
            out.push(self.signed_number()?);
        }
        Ok(out)
    }
}
