//! Recursive-descent parser for the C-like surface language.

use thiserror::Error;

use super::ast::{Cond, Exp, FnDef, Module, Stm};
use crate::seplogic::{BinOp, Cmp, UnOp};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(i64),
    Sym(&'static str),
}

const SYMS: [&str; 30] = [
    "->", "&&", "||", "==", "!=", "<=", ">=", "+=", "-=", "*=", "(", ")", "{", "}", ",", ";", "=", "<", ">", "+", "-",
    "*", "/", "%", "!", "?", "[", "]", "&", ".",
];

const TYPES: [&str; 5] = ["int", "long", "void", "ptr", "struct"];

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let b = src.as_bytes();
    let mut i = 0;
    let mut line = 1;
    let mut out = Vec::new();
    'next: while i < b.len() {
        let c = b[i] as char;
        if c == '\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if src[i..].starts_with("//") {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            let Some(end) = src[i + 2..].find("*/") else {
                return Err(ParseError { line, msg: "unterminated comment".into() });
            };
            line += src[i..i + 2 + end].matches('\n').count();
            i += end + 4;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let st = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((line, Tok::Ident(src[st..i].to_string())));
            continue;
        }
        if c.is_ascii_digit() {
            let st = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let n = src[st..i].parse().map_err(|_| ParseError { line, msg: "number too large".into() })?;
            out.push((line, Tok::Num(n)));
            continue;
        }
        for s in SYMS {
            if src[i..].starts_with(s) {
                out.push((line, Tok::Sym(s)));
                i += s.len();
                continue 'next;
            }
        }
        return Err(ParseError { line, msg: format!("unexpected character {c:?}") });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    loops: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.at + k).map(|(_, t)| t)
    }

    fn line(&self) -> usize {
        self.toks.get(self.at).or(self.toks.last()).map(|(l, _)| *l).unwrap_or(1)
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError { line: self.line(), msg: msg.into() })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == s)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> PResult<()> {
        if self.eat(s) {
            Ok(())
        } else {
            let got = match self.peek() {
                Some(Tok::Ident(x)) => x.clone(),
                Some(Tok::Num(n)) => n.to_string(),
                Some(Tok::Sym(x)) => x.to_string(),
                None => "end of input".into(),
            };
            self.err(format!("expected `{s}`, found `{got}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) if !is_keyword(&s) => {
                self.at += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    /// Skip a type prefix such as `int`, `struct node *`.
    fn skip_type(&mut self) -> bool {
        let start = self.at;
        if self.eat_kw("struct") {
            if self.ident().is_err() {
                self.at = start;
                return false;
            }
        } else if !TYPES.iter().any(|t| self.is_kw(t)) {
            return false;
        } else {
            self.at += 1;
        }
        while self.eat("*") {}
        true
    }

    fn module(&mut self) -> PResult<Module> {
        let mut m = Module::default();
        while self.peek().is_some() {
            m.functions.push(self.function()?);
        }
        Ok(m)
    }

    fn function(&mut self) -> PResult<FnDef> {
        let line = self.line();
        self.skip_type();
        let name = self.ident()?;
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.eat(")") {
            loop {
                self.skip_type();
                params.push(self.ident()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.loops = 0;
        let body = self.block()?;
        Ok(FnDef { name, params, body, line })
    }

    fn block(&mut self) -> PResult<Vec<Stm>> {
        self.expect("{")?;
        let mut out = Vec::new();
        while !self.eat("}") {
            if self.peek().is_none() {
                return self.err("unclosed block");
            }
            self.stmt(&mut out)?;
        }
        Ok(out)
    }

    fn body(&mut self) -> PResult<Vec<Stm>> {
        if self.is_sym("{") {
            self.block()
        } else {
            let mut out = Vec::new();
            self.stmt(&mut out)?;
            Ok(out)
        }
    }

    fn stmt(&mut self, out: &mut Vec<Stm>) -> PResult<()> {
        let line = self.line();
        if self.is_sym("{") {
            out.extend(self.block()?);
            return Ok(());
        }
        if self.eat(";") {
            return Ok(());
        }
        if self.eat_kw("if") {
            self.expect("(")?;
            let c = self.cond()?;
            self.expect(")")?;
            let t = self.body()?;
            let e = if self.eat_kw("else") { self.body()? } else { Vec::new() };
            out.push(Stm::If(c, t, e));
            return Ok(());
        }
        if self.eat_kw("while") {
            self.expect("(")?;
            let c = self.cond()?;
            self.expect(")")?;
            let k = self.loops;
            self.loops += 1;
            let b = self.body()?;
            out.push(Stm::While(c, b, k));
            return Ok(());
        }
        if self.eat_kw("return") {
            let e = if self.is_sym(";") { None } else { Some(self.expr()?) };
            self.expect(";")?;
            out.push(Stm::Return(e, line));
            return Ok(());
        }
        if self.is_kw("assume") || self.is_kw("assert") {
            let assume = self.is_kw("assume");
            self.at += 1;
            self.expect("(")?;
            let c = self.cond()?;
            self.expect(")")?;
            self.expect(";")?;
            out.push(if assume { Stm::Assume(c) } else { Stm::Assert(c) });
            return Ok(());
        }
        if self.skip_type() {
            loop {
                let x = self.ident()?;
                if self.eat("=") {
                    let e = self.expr()?;
                    out.push(Stm::Assign(x, e));
                }
                if !self.eat(",") {
                    break;
                }
            }
            self.expect(";")?;
            return Ok(());
        }
        let lhs = self.postfix()?;
        let op = match self.peek() {
            Some(Tok::Sym(s @ ("=" | "+=" | "-=" | "*="))) => *s,
            _ => {
                if matches!(lhs, Exp::Call(..)) {
                    self.expect(";")?;
                    out.push(Stm::Eval(lhs));
                    return Ok(());
                }
                return self.err("expected assignment");
            }
        };
        self.at += 1;
        let mut rhs = self.expr()?;
        if op != "=" {
            let bop = match op {
                "+=" => BinOp::Add,
                "-=" => BinOp::Sub,
                _ => BinOp::Mul,
            };
            rhs = Exp::Bin(bop, Box::new(lhs.clone()), Box::new(rhs));
        }
        self.expect(";")?;
        match lhs {
            Exp::Var(x) => out.push(Stm::Assign(x, rhs)),
            Exp::Load(base, f) => out.push(Stm::Store(*base, f, rhs)),
            _ => return Err(ParseError { line, msg: "cannot assign to this expression".into() }),
        }
        Ok(())
    }

    fn cond(&mut self) -> PResult<Cond> {
        let mut c = self.cond_and()?;
        while self.eat("||") {
            let r = self.cond_and()?;
            c = Cond::Or(Box::new(c), Box::new(r));
        }
        Ok(c)
    }

    fn cond_and(&mut self) -> PResult<Cond> {
        let mut c = self.cond_atom()?;
        while self.eat("&&") {
            let r = self.cond_atom()?;
            c = Cond::And(Box::new(c), Box::new(r));
        }
        Ok(c)
    }

    fn cond_atom(&mut self) -> PResult<Cond> {
        if self.eat("!") {
            return Ok(Cond::Not(Box::new(self.cond_atom()?)));
        }
        if self.is_sym("?") && matches!(self.peek_at(1), Some(Tok::Sym(")" | "&&" | "||"))) {
            self.at += 1;
            return Ok(Cond::Nondet);
        }
        if self.is_sym("(") {
            // a parenthesised condition, unless it turns out to be an operand
            let save = self.at;
            self.at += 1;
            if let Ok(c) = self.cond() {
                if self.eat(")") && !self.at_operator() {
                    return Ok(c);
                }
            }
            self.at = save;
        }
        let a = self.expr()?;
        let op = match self.peek() {
            Some(Tok::Sym("==")) => Cmp::Eq,
            Some(Tok::Sym("!=")) => Cmp::Ne,
            Some(Tok::Sym("<=")) => Cmp::Le,
            Some(Tok::Sym("<")) => Cmp::Lt,
            Some(Tok::Sym(">=")) => Cmp::Ge,
            Some(Tok::Sym(">")) => Cmp::Gt,
            _ => return Ok(Cond::Cmp(Cmp::Ne, a, Exp::Num(0))),
        };
        self.at += 1;
        let b = self.expr()?;
        Ok(Cond::Cmp(op, a, b))
    }

    fn at_operator(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Sym("==" | "!=" | "<=" | "<" | ">=" | ">" | "+" | "-" | "*" | "/" | "%" | "->"))
        )
    }

    fn expr(&mut self) -> PResult<Exp> {
        self.binary(1)
    }

    fn binary(&mut self, min: u8) -> PResult<Exp> {
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
            if op.prec() < min {
                break;
            }
            self.at += 1;
            let rhs = self.binary(op.prec() + 1)?;
            lhs = Exp::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Exp> {
        if self.eat("-") {
            if let Some(Tok::Num(n)) = self.peek().cloned() {
                self.at += 1;
                return Ok(Exp::Un(UnOp::Neg, Box::new(Exp::Num(n))));
            }
            return Ok(Exp::Un(UnOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat("!") {
            return Ok(Exp::Un(UnOp::Not, Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Exp> {
        let mut e = self.primary()?;
        while self.eat("->") {
            let f = self.ident()?;
            e = Exp::Load(Box::new(e), f);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Exp> {
        if self.eat("(") {
            let e = self.expr()?;
            self.expect(")")?;
            return Ok(e);
        }
        if self.eat("?") {
            return Ok(Exp::Nondet);
        }
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.at += 1;
                Ok(Exp::Num(n))
            }
            Some(Tok::Ident(s)) if s == "NULL" => {
                self.at += 1;
                Ok(Exp::Null)
            }
            Some(Tok::Ident(_)) => {
                let x = self.ident()?;
                if self.eat("(") {
                    let mut args = Vec::new();
                    if !self.eat(")") {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(")") {
                                break;
                            }
                            self.expect(",")?;
                        }
                    }
                    return Ok(Exp::Call(x, args));
                }
                Ok(Exp::Var(x))
            }
            _ => self.err("expected expression"),
        }
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "if" | "else" | "while" | "return" | "assume" | "assert" | "NULL") || TYPES.contains(&s)
}

pub fn parse_module(src: &str) -> Result<Module, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, at: 0, loops: 0 };
    p.module()
}
