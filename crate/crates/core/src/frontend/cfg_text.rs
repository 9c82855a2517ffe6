//! Reader for the textual CFG dump produced by `Display for Program`.

use std::collections::BTreeMap;

use super::cfg::{Cfg, Cond, Edge, FnKind, Function, Operand, Program, Rhs, Stmt};
use super::parser::ParseError;
use crate::seplogic::{name, BinOp, Cmp, Name, UnOp};

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, msg: msg.into() })
}

fn names(s: &str) -> Vec<Name> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(name).collect()
}

/// `NAME(a, b) -> (c)` into its three parts.
fn signature(s: &str, line: usize) -> Result<(Name, Vec<Name>, Vec<Name>), ParseError> {
    let Some((head, outs)) = s.split_once(") -> (") else { return err(line, "malformed signature") };
    let Some((f, args)) = head.split_once('(') else { return err(line, "malformed signature") };
    let Some(outs) = outs.strip_suffix(')') else { return err(line, "malformed signature") };
    Ok((name(f.trim()), names(args), names(outs)))
}

fn operand(s: &str, line: usize) -> Result<Operand, ParseError> {
    let s = s.trim();
    if s == "NULL" {
        return Ok(Operand::Null);
    }
    if let Ok(n) = s.parse::<i64>() {
        return Ok(Operand::Num(n));
    }
    if s.is_empty() || s.contains(' ') {
        return err(line, format!("bad operand `{s}`"));
    }
    Ok(Operand::Var(name(s)))
}

fn cond(s: &str, line: usize) -> Result<Cond, ParseError> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let [a, op, b] = parts[..] else { return err(line, format!("bad condition `{s}`")) };
    let op = match op {
        "==" | "=" => Cmp::Eq,
        "!=" => Cmp::Ne,
        "<=" => Cmp::Le,
        "<" => Cmp::Lt,
        ">=" => Cmp::Ge,
        ">" => Cmp::Gt,
        _ => return err(line, format!("bad comparison `{op}`")),
    };
    Ok(Cond { op, lhs: operand(a, line)?, rhs: operand(b, line)? })
}

fn binop(s: &str) -> Option<BinOp> {
    Some(match s {
        "+" => BinOp::Add,
        "-" => BinOp::Sub,
        "*" => BinOp::Mul,
        "/" => BinOp::Div,
        "%" => BinOp::Mod,
        _ => return None,
    })
}

pub fn parse_stmt(s: &str, line: usize) -> Result<Stmt, ParseError> {
    let s = s.trim();
    if let Some(x) = s.strip_prefix("return ") {
        return Ok(Stmt::Return(name(x.trim())));
    }
    for (kw, assume) in [("assume(", true), ("assert(", false)] {
        if let Some(rest) = s.strip_prefix(kw) {
            let Some(c) = rest.strip_suffix(')') else { return err(line, "unclosed condition") };
            let c = cond(c, line)?;
            return Ok(if assume { Stmt::Assume(c) } else { Stmt::Assert(c) });
        }
    }
    if let Some(rest) = s.strip_prefix("loop ") {
        let (callee, args, outputs) = signature(rest, line)?;
        return Ok(Stmt::LoopCall { callee, args, outputs });
    }
    let Some((lhs, rhs)) = s.split_once(" = ") else { return err(line, format!("bad statement `{s}`")) };
    let (lhs, rhs) = (lhs.trim(), rhs.trim());
    if let Some((dst, field)) = lhs.split_once("->") {
        return Ok(Stmt::Store { dst: name(dst), field: name(field), src: name(rhs) });
    }
    let x = name(lhs);
    if let Some((src, field)) = rhs.split_once("->") {
        return Ok(Stmt::Load { dst: x, src: name(src), field: name(field) });
    }
    if let Some((callee, args)) = rhs.split_once('(') {
        let Some(args) = args.strip_suffix(')') else { return err(line, "unclosed call") };
        return Ok(Stmt::Call { dst: x, callee: name(callee), args: names(args) });
    }
    let parts: Vec<&str> = rhs.split_whitespace().collect();
    let r = match parts[..] {
        ["?"] => Rhs::Nondet,
        ["NULL"] => Rhs::Null,
        [y, op, z] => match binop(op) {
            Some(op) => Rhs::Bin(op, name(y), name(z)),
            None => return err(line, format!("bad operator `{op}`")),
        },
        [one] => {
            if let Ok(n) = one.parse::<i64>() {
                Rhs::Num(n)
            } else if let Some(y) = one.strip_prefix('-') {
                Rhs::Un(UnOp::Neg, name(y))
            } else if let Some(y) = one.strip_prefix('!') {
                Rhs::Un(UnOp::Not, name(y))
            } else {
                Rhs::Var(name(one))
            }
        }
        _ => return err(line, format!("bad right-hand side `{rhs}`")),
    };
    Ok(Stmt::Assign(x, r))
}

/// Parse a whole dump. Function order in the text becomes the call order.
pub fn parse_program_text(text: &str) -> Result<Program, ParseError> {
    let mut prog = Program::default();
    let mut cur: Option<Function> = None;
    let mut seen = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if l == "end" {
            let Some(f) = cur.take() else { return err(line, "`end` outside a function") };
            prog.order.push(f.name.clone());
            seen.insert(f.name.clone(), line);
            prog.functions.insert(f.name.clone(), f);
            continue;
        }
        let head =
            l.strip_prefix("fn ").map(|r| (FnKind::Surface, r)).or(l.strip_prefix("loop ").map(|r| (FnKind::Loop, r)));
        if let (None, Some((kind, rest))) = (&cur, head) {
            let (n, params, outputs) = signature(rest, line)?;
            if seen.contains_key(&n) {
                return err(line, format!("duplicate function {n}"));
            }
            let cfg = Cfg { locs: 0, entry: 0, exit: 0, edges: vec![] };
            cur = Some(Function { name: n, kind, params, outputs, cfg });
            continue;
        }
        let Some(f) = cur.as_mut() else { return err(line, "statement outside a function") };
        if let Some(rest) = l.strip_prefix("entry ") {
            let p: Vec<&str> = rest.split_whitespace().collect();
            if p.len() != 5 || p[1] != "exit" || p[3] != "locs" {
                return err(line, "bad header");
            }
            let num = |s: &str| s.parse::<usize>().or_else(|_| err(line, "bad number"));
            f.cfg.entry = num(p[0])?;
            f.cfg.exit = num(p[2])?;
            f.cfg.locs = num(p[4])?;
            continue;
        }
        let Some((ends, stmt)) = l.split_once(": ") else { return err(line, "expected an edge") };
        let Some((a, b)) = ends.split_once(" -> ") else { return err(line, "expected an edge") };
        let (Ok(from), Ok(to)) = (a.trim().parse(), b.trim().parse()) else { return err(line, "bad location") };
        f.cfg.edges.push(Edge { from, to, stmt: parse_stmt(stmt, line)? });
    }
    if cur.is_some() {
        return err(text.lines().count(), "missing `end`");
    }
    Ok(prog)
}
