//! Surface syntax tree for `.tl` programs.

use std::collections::BTreeSet;

use crate::seplogic::{BinOp, Cmp, UnOp};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Exp {
    Num(i64),
    Null,
    Var(String),
    Nondet,
    Un(UnOp, Box<Exp>),
    Bin(BinOp, Box<Exp>, Box<Exp>),
    Load(Box<Exp>, String),
    Call(String, Vec<Exp>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cond {
    Cmp(Cmp, Exp, Exp),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Not(Box<Cond>),
    Nondet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stm {
    Assign(String, Exp),
    Store(Exp, String, Exp),
    Eval(Exp),
    If(Cond, Vec<Stm>, Vec<Stm>),
    While(Cond, Vec<Stm>, usize),
    Return(Option<Exp>, usize),
    Assume(Cond),
    Assert(Cond),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FnDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stm>,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Module {
    pub functions: Vec<FnDef>,
}

impl Exp {
    pub fn uses(&self, out: &mut BTreeSet<String>) {
        match self {
            Exp::Num(_) | Exp::Null | Exp::Nondet => {}
            Exp::Var(v) => {
                out.insert(v.clone());
            }
            Exp::Un(_, a) | Exp::Load(a, _) => a.uses(out),
            Exp::Bin(_, a, b) => {
                a.uses(out);
                b.uses(out);
            }
            Exp::Call(_, args) => args.iter().for_each(|a| a.uses(out)),
        }
    }
}

impl Cond {
    pub fn uses(&self, out: &mut BTreeSet<String>) {
        match self {
            Cond::Cmp(_, a, b) => {
                a.uses(out);
                b.uses(out);
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.uses(out);
                b.uses(out);
            }
            Cond::Not(a) => a.uses(out),
            Cond::Nondet => {}
        }
    }
}

/// Variables live before `stmts` given those live after.
pub fn live_before(stmts: &[Stm], live_after: &BTreeSet<String>) -> BTreeSet<String> {
    let mut live = live_after.clone();
    for s in stmts.iter().rev() {
        live = live_before_stm(s, &live);
    }
    live
}

fn live_before_stm(s: &Stm, after: &BTreeSet<String>) -> BTreeSet<String> {
    let mut live = after.clone();
    match s {
        Stm::Assign(x, e) => {
            live.remove(x);
            e.uses(&mut live);
        }
        Stm::Store(a, _, e) => {
            a.uses(&mut live);
            e.uses(&mut live);
        }
        Stm::Eval(e) => e.uses(&mut live),
        Stm::If(c, t, e) => {
            let mut l = live_before(t, after);
            l.extend(live_before(e, after));
            c.uses(&mut l);
            live = l;
        }
        Stm::While(c, body, _) => live = loop_header_live(c, body, after),
        Stm::Return(e, _) => {
            live.clear();
            if let Some(e) = e {
                e.uses(&mut live);
            }
        }
        Stm::Assume(c) | Stm::Assert(c) => c.uses(&mut live),
    }
    live
}

/// Fixpoint of the variables live at a loop header.
pub fn loop_header_live(c: &Cond, body: &[Stm], after: &BTreeSet<String>) -> BTreeSet<String> {
    let mut cur = after.clone();
    c.uses(&mut cur);
    loop {
        let mut next = cur.clone();
        next.extend(live_before(body, &cur));
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Variables assigned anywhere in `stmts`, nested loops included.
pub fn written(stmts: &[Stm], out: &mut BTreeSet<String>) {
    for s in stmts {
        match s {
            Stm::Assign(x, _) => {
                out.insert(x.clone());
            }
            Stm::If(_, t, e) => {
                written(t, out);
                written(e, out);
            }
            Stm::While(_, b, _) => written(b, out),
            _ => {}
        }
    }
}
