//! Reader for the canonical `pure ; spatial` rendering.
//!
//! Identifiers in lower case are program variables, `l<digits>` are plain
//! logicals and upper-case identifiers are anchors.

use std::sync::Arc;

use thiserror::Error;

use super::formula::{Block, Spatial, SymHeap};
use super::term::{name, BinOp, Cmp, Expr, Pure, UnOp, Var};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("formula syntax error at offset {pos}: {msg}")]
pub struct FormulaError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(i64),
    Sym(&'static str),
}

const SYMS: [&str; 21] =
    ["|->", "/\\", "!=", "<=", ">=", "==", "(", ")", "[", "]", ",", ";", ".", "*", "+", "-", "/", "%", "<", ">", "="];

fn lex(s: &str) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let b = s.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    'next: while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let st = i;
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'$') {
                i += 1;
            }
            out.push((st, Tok::Ident(s[st..i].to_string())));
            continue;
        }
        if c.is_ascii_digit() {
            let st = i;
            while i < b.len() && (b[i] as char).is_ascii_digit() {
                i += 1;
            }
            let n = s[st..i].parse().map_err(|_| FormulaError { pos: st, msg: "number too large".into() })?;
            out.push((st, Tok::Num(n)));
            continue;
        }
        if c == '!' && b.get(i + 1) != Some(&b'=') {
            out.push((i, Tok::Sym("!")));
            i += 1;
            continue;
        }
        for sym in SYMS {
            if s[i..].starts_with(sym) {
                out.push((i, Tok::Sym(sym)));
                i += sym.len();
                continue 'next;
            }
        }
        return Err(FormulaError { pos: i, msg: format!("unexpected character {c:?}") });
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    blocks: &'a [Arc<Block>],
}

pub fn var_of_ident(s: &str) -> Var {
    if let Some(rest) = s.strip_prefix('l') {
        if !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()) {
            if let Ok(k) = rest.parse() {
                return Var::Logical(k);
            }
        }
    }
    if s.chars().any(|c| c.is_ascii_uppercase()) {
        Var::Anchor(name(&s.to_lowercase()))
    } else {
        Var::Prog(name(s))
    }
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.at + k).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError { pos: self.pos(), msg: msg.into() })
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), FormulaError> {
        if self.eat(sym) {
            Ok(())
        } else {
            self.err(format!("expected `{sym}`"))
        }
    }

    fn ident(&mut self) -> Result<String, FormulaError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.at += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn heap(&mut self) -> Result<SymHeap, FormulaError> {
        let mut pure = Vec::new();
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "true") && self.peek_at(1) == Some(&Tok::Sym(";")) {
            self.at += 1;
        } else {
            loop {
                pure.push(self.pure()?);
                if !self.eat("/\\") {
                    break;
                }
            }
        }
        self.expect(";")?;
        let mut spatial = Vec::new();
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "emp") {
            self.at += 1;
        } else {
            loop {
                spatial.push(self.spatial()?);
                if !self.eat("*") {
                    break;
                }
            }
        }
        if self.at != self.toks.len() {
            return self.err("trailing input");
        }
        Ok(SymHeap::new(pure, spatial))
    }

    fn pure(&mut self) -> Result<Pure, FormulaError> {
        let l = self.expr(0)?;
        let op = match self.peek() {
            Some(Tok::Sym("=")) | Some(Tok::Sym("==")) => Cmp::Eq,
            Some(Tok::Sym("!=")) => Cmp::Ne,
            Some(Tok::Sym("<=")) => Cmp::Le,
            Some(Tok::Sym("<")) => Cmp::Lt,
            Some(Tok::Sym(">=")) => Cmp::Ge,
            Some(Tok::Sym(">")) => Cmp::Gt,
            _ => return self.err("expected comparison"),
        };
        self.at += 1;
        let r = self.expr(0)?;
        Ok(Pure::new(op, l, r))
    }

    /// Is the token stream at the start of a spatial atom?
    fn at_spatial(&self) -> bool {
        match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Ident(s)), Some(Tok::Sym("("))) if s == "ls" => true,
            (Some(Tok::Ident(s)), Some(Tok::Sym("["))) if s == "iter" => true,
            (Some(Tok::Ident(_)), Some(Tok::Sym("."))) => true,
            _ => false,
        }
    }

    fn spatial(&mut self) -> Result<Spatial, FormulaError> {
        let id = self.ident()?;
        if id == "ls" || id == "iter" {
            let block = if id == "iter" {
                self.expect("[")?;
                let Some(Tok::Num(k)) = self.peek().cloned() else { return self.err("expected block id") };
                self.at += 1;
                self.expect("]")?;
                match self.blocks.iter().find(|b| b.id as i64 == k) {
                    Some(b) => b.clone(),
                    None if k == 0 => Block::list(),
                    None => return self.err(format!("unknown block {k}")),
                }
            } else {
                Block::list()
            };
            self.expect("(")?;
            let h = var_of_ident(&self.ident()?);
            self.expect(",")?;
            let t = self.expr(0)?;
            self.expect(")")?;
            return Ok(Spatial::Seg { block, head: h, tail: t });
        }
        let src = var_of_ident(&id);
        self.expect(".")?;
        let field = self.ident()?;
        self.expect("|->")?;
        let val = self.expr(0)?;
        Ok(Spatial::PointsTo { src, field: name(&field), val })
    }

    fn expr(&mut self, min: u8) -> Result<Expr, FormulaError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym("+")) => BinOp::Add,
                Some(Tok::Sym("-")) => BinOp::Sub,
                Some(Tok::Sym("*")) => BinOp::Mul,
                Some(Tok::Sym("/")) => BinOp::Div,
                Some(Tok::Sym("%")) => BinOp::Mod,
                _ => break,
            };
            if op == BinOp::Mul {
                // `*` followed by a spatial atom separates atoms
                self.at += 1;
                let sep = self.at_spatial() || matches!(self.peek(), Some(Tok::Ident(s)) if s == "emp");
                self.at -= 1;
                if sep {
                    break;
                }
            }
            let p = op.prec();
            if p < min {
                break;
            }
            self.at += 1;
            let rhs = self.expr(p + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FormulaError> {
        if self.eat("-") {
            if let Some(Tok::Num(n)) = self.peek().cloned() {
                self.at += 1;
                return Ok(Expr::Num(-n));
            }
            return Ok(Expr::un(UnOp::Neg, self.unary()?));
        }
        if self.eat("!") {
            return Ok(Expr::un(UnOp::Not, self.unary()?));
        }
        if self.eat("(") {
            let e = self.expr(0)?;
            self.expect(")")?;
            return Ok(e);
        }
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.at += 1;
                Ok(Expr::Num(n))
            }
            Some(Tok::Ident(s)) if s == "NULL" => {
                self.at += 1;
                Ok(Expr::Null)
            }
            Some(Tok::Ident(s)) => {
                self.at += 1;
                Ok(Expr::Var(var_of_ident(&s)))
            }
            _ => self.err("expected expression"),
        }
    }
}

/// Parse a symbolic heap; `iter[k]` atoms are resolved against `blocks`.
pub fn parse_heap_with(s: &str, blocks: &[Arc<Block>]) -> Result<SymHeap, FormulaError> {
    let toks = lex(s)?;
    let mut p = Parser { toks, at: 0, end: s.len(), blocks };
    p.heap()
}

pub fn parse_heap(s: &str) -> Result<SymHeap, FormulaError> {
    parse_heap_with(s, &[])
}

/// Parse a lone expression.
pub fn parse_expr(s: &str) -> Result<Expr, FormulaError> {
    let toks = lex(s)?;
    let mut p = Parser { toks, at: 0, end: s.len(), blocks: &[] };
    let e = p.expr(0)?;
    if p.at != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}
