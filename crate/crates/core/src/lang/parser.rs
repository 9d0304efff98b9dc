//! Recursive-descent parser for MMP source text.
//!
//! Precedence, lowest first: `=` and `!` (right-associative), comparisons
//! (non-associative), `+ -` (left), `*` (left), primaries. A `-` directly in
//! front of an integer literal is part of the literal.

use super::ast::{BinOp, Clause, Expr, FunDef, Module, Pattern};
use super::lexer::{tokenize, Spanned, Tok};
use super::ParseError;

const KEYWORDS: [&str; 4] = ["receive", "case", "of", "end"];

pub fn parse_module(source: &str) -> Result<Module, ParseError> {
    let mut p = Parser { toks: tokenize(source)?, pos: 0 };
    let mut module = Module::default();
    while p.peek() != &Tok::Eof {
        let (line, column) = p.position();
        let def = p.fundef()?;
        let key = (def.name.clone(), def.arity());
        if module.functions.contains_key(&key) {
            return Err(ParseError {
                line,
                column,
                message: format!("duplicate definition of {}/{}", key.0, key.1),
            });
        }
        module.functions.insert(key, def);
    }
    Ok(module)
}

/// Parses a single expression (no trailing `.`), mostly useful in tests.
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: tokenize(source)?, pos: 0 };
    let e = p.body()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn position(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.column)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = self.position();
        Err(ParseError { line, column, message: message.into() })
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        self.error(format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            let wanted = match &tok {
                Tok::Eof => "end of input".to_string(),
                t => t.describe(),
            };
            self.unexpected(&wanted)
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Atom(a) if a == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&format!("'{kw}'"))
        }
    }

    fn fundef(&mut self) -> Result<FunDef, ParseError> {
        let name = match self.peek().clone() {
            Tok::Atom(a) if !KEYWORDS.contains(&a.as_str()) && a != "spawn" && a != "self" => {
                self.bump();
                a
            }
            _ => return self.unexpected("function name"),
        };
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                match self.peek().clone() {
                    Tok::Var(v) if v != "_" => {
                        self.bump();
                        params.push(v);
                    }
                    _ => return self.unexpected("parameter variable"),
                }
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        self.expect(Tok::Arrow)?;
        let body = self.body()?;
        self.expect(Tok::Dot)?;
        Ok(FunDef { name, params, body })
    }

    /// `e1, e2, ..., en` folded into right-nested sequences.
    fn body(&mut self) -> Result<Expr, ParseError> {
        let mut exprs = vec![self.expr()?];
        while self.eat(&Tok::Comma) {
            exprs.push(self.expr()?);
        }
        let mut acc = exprs.pop().expect("at least one expression");
        while let Some(e) = exprs.pop() {
            acc = Expr::Seq(Box::new(e), Box::new(acc));
        }
        Ok(acc)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let (line, column) = self.position();
        let lhs = self.send_expr()?;
        if self.eat(&Tok::Match) {
            let pattern = expr_to_pattern(&lhs).map_err(|message| ParseError { line, column, message })?;
            let rhs = self.expr()?;
            return Ok(Expr::Bind(pattern, Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn send_expr(&mut self) -> Result<Expr, ParseError> {
        let target = self.comparison()?;
        if self.eat(&Tok::Bang) {
            let msg = self.expr()?;
            return Ok(Expr::Send(Box::new(target), Box::new(msg)));
        }
        Ok(target)
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        if matches!(self.peek(), Tok::EqEq | Tok::NotEq | Tok::Lt | Tok::Le) {
            return self.error("comparison operators do not associate; add parentheses");
        }
        Ok(Expr::BinOp(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::BinOp(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while self.eat(&Tok::Star) {
            let rhs = self.unary()?;
            lhs = Expr::BinOp(BinOp::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            if let Tok::Int(n) = *self.peek_at(1) {
                self.bump();
                self.bump();
                return Ok(Expr::Int(-n));
            }
            self.bump();
            let operand = self.unary()?;
            return Ok(Expr::BinOp(BinOp::Sub, Box::new(Expr::Int(0)), Box::new(operand)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Int(n))
            }
            Tok::Var(v) => {
                self.bump();
                Ok(Expr::Var(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::LBrace => {
                self.bump();
                let items = self.expr_list(Tok::RBrace)?;
                Ok(Expr::Tuple(items))
            }
            Tok::LBracket => self.list_expr(),
            Tok::Atom(a) => match a.as_str() {
                "receive" => {
                    self.bump();
                    let clauses = self.clauses("receive")?;
                    Ok(Expr::Receive(clauses))
                }
                "case" => {
                    self.bump();
                    let scrutinee = self.expr()?;
                    self.keyword("of")?;
                    let clauses = self.clauses("case")?;
                    Ok(Expr::Case(Box::new(scrutinee), clauses))
                }
                "of" | "end" => self.unexpected("expression"),
                "self" if *self.peek_at(1) == Tok::LParen => {
                    self.bump();
                    self.bump();
                    self.expect(Tok::RParen)?;
                    Ok(Expr::SelfPid)
                }
                "spawn" if *self.peek_at(1) == Tok::LParen => {
                    self.bump();
                    self.bump();
                    let fname = match self.peek().clone() {
                        Tok::Atom(f) if !KEYWORDS.contains(&f.as_str()) => {
                            self.bump();
                            f
                        }
                        _ => return self.unexpected("function name in spawn"),
                    };
                    self.expect(Tok::Comma)?;
                    self.expect(Tok::LBracket)?;
                    let args = self.expr_list(Tok::RBracket)?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Spawn(fname, args))
                }
                _ if *self.peek_at(1) == Tok::LParen => {
                    if a == "spawn" || a == "self" {
                        return self.unexpected("expression");
                    }
                    self.bump();
                    self.bump();
                    let args = self.expr_list(Tok::RParen)?;
                    Ok(Expr::Call(a, args))
                }
                _ => {
                    self.bump();
                    Ok(Expr::Atom(a))
                }
            },
            _ => self.unexpected("expression"),
        }
    }

    /// Comma-separated expressions up to and including `close`.
    fn expr_list(&mut self, close: Tok) -> Result<Vec<Expr>, ParseError> {
        let mut items = Vec::new();
        if self.eat(&close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat(&close) {
                return Ok(items);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn list_expr(&mut self) -> Result<Expr, ParseError> {
        self.expect(Tok::LBracket)?;
        if self.eat(&Tok::RBracket) {
            return Ok(Expr::Nil);
        }
        let mut heads = vec![self.expr()?];
        while self.eat(&Tok::Comma) {
            heads.push(self.expr()?);
        }
        let tail = if self.eat(&Tok::Bar) { self.expr()? } else { Expr::Nil };
        self.expect(Tok::RBracket)?;
        Ok(heads
            .into_iter()
            .rev()
            .fold(tail, |acc, h| Expr::Cons(Box::new(h), Box::new(acc))))
    }

    fn clauses(&mut self, construct: &str) -> Result<Vec<Clause>, ParseError> {
        if self.is_keyword("end") {
            return self.error(format!("{construct} needs at least one clause"));
        }
        let mut clauses = Vec::new();
        loop {
            let pattern = self.pattern()?;
            self.expect(Tok::Arrow)?;
            let body = self.body()?;
            clauses.push(Clause { pattern, body });
            if self.eat(&Tok::Semi) {
                continue;
            }
            self.keyword("end")?;
            return Ok(clauses);
        }
    }

    fn pattern(&mut self) -> Result<Pattern, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Pattern::Int(n))
            }
            Tok::Minus => {
                if let Tok::Int(n) = *self.peek_at(1) {
                    self.bump();
                    self.bump();
                    Ok(Pattern::Int(-n))
                } else {
                    self.unexpected("integer after '-' in pattern")
                }
            }
            Tok::Var(v) => {
                self.bump();
                Ok(if v == "_" { Pattern::Wildcard } else { Pattern::Var(v) })
            }
            Tok::Atom(a) if !KEYWORDS.contains(&a.as_str()) && *self.peek_at(1) != Tok::LParen => {
                self.bump();
                Ok(Pattern::Atom(a))
            }
            Tok::LBrace => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        items.push(self.pattern()?);
                        if self.eat(&Tok::RBrace) {
                            break;
                        }
                        self.expect(Tok::Comma)?;
                    }
                }
                Ok(Pattern::Tuple(items))
            }
            Tok::LBracket => {
                self.bump();
                if self.eat(&Tok::RBracket) {
                    return Ok(Pattern::Nil);
                }
                let mut heads = vec![self.pattern()?];
                while self.eat(&Tok::Comma) {
                    heads.push(self.pattern()?);
                }
                let tail = if self.eat(&Tok::Bar) { self.pattern()? } else { Pattern::Nil };
                self.expect(Tok::RBracket)?;
                Ok(heads
                    .into_iter()
                    .rev()
                    .fold(tail, |acc, h| Pattern::Cons(Box::new(h), Box::new(acc))))
            }
            _ => self.unexpected("pattern"),
        }
    }
}

/// Reinterprets the left-hand side of `=` as a pattern.
fn expr_to_pattern(e: &Expr) -> Result<Pattern, String> {
    Ok(match e {
        Expr::Int(n) => Pattern::Int(*n),
        Expr::Atom(a) => Pattern::Atom(a.clone()),
        Expr::Var(v) if v == "_" => Pattern::Wildcard,
        Expr::Var(v) => Pattern::Var(v.clone()),
        Expr::Tuple(items) => Pattern::Tuple(items.iter().map(expr_to_pattern).collect::<Result<_, _>>()?),
        Expr::Nil => Pattern::Nil,
        Expr::Cons(h, t) => Pattern::Cons(Box::new(expr_to_pattern(h)?), Box::new(expr_to_pattern(t)?)),
        _ => return Err("left-hand side of '=' is not a valid pattern".to_string()),
    })
}
