//! Lowered programs: one control-flow graph per function, edges labelled
//! with atomic statements.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::seplogic::{BinOp, Cmp, Expr, Name, Pure, UnOp, Var};

pub type Loc = usize;

/// Name of the program variable that receives a function's result.
pub const RETURN: &str = "return";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operand {
    Var(Name),
    Null,
    Num(i64),
}

impl Operand {
    pub fn expr(&self) -> Expr {
        match self {
            Operand::Var(x) => Expr::Var(Var::Prog(x.clone())),
            Operand::Null => Expr::Null,
            Operand::Num(n) => Expr::Num(*n),
        }
    }

    pub fn var(&self) -> Option<&Name> {
        match self {
            Operand::Var(x) => Some(x),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cond {
    pub op: Cmp,
    pub lhs: Operand,
    pub rhs: Operand,
}

impl Cond {
    pub fn negate(&self) -> Cond {
        Cond { op: self.op.negate(), lhs: self.lhs.clone(), rhs: self.rhs.clone() }
    }

    /// The condition as a pure atom over program variables.
    pub fn pure(&self) -> Pure {
        Pure::new(self.op, self.lhs.expr(), self.rhs.expr())
    }

    pub fn vars(&self) -> Vec<Name> {
        [&self.lhs, &self.rhs].into_iter().filter_map(|o| o.var().cloned()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Rhs {
    Num(i64),
    Null,
    Var(Name),
    Nondet,
    Un(UnOp, Name),
    Bin(BinOp, Name, Name),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign(Name, Rhs),
    Load { dst: Name, src: Name, field: Name },
    Store { dst: Name, field: Name, src: Name },
    Return(Name),
    Assume(Cond),
    Assert(Cond),
    Call { dst: Name, callee: Name, args: Vec<Name> },
    LoopCall { callee: Name, args: Vec<Name>, outputs: Vec<Name> },
}

impl Stmt {
    /// Program variables this statement may overwrite.
    pub fn written(&self) -> Vec<Name> {
        match self {
            Stmt::Assign(x, _) | Stmt::Load { dst: x, .. } | Stmt::Call { dst: x, .. } => vec![x.clone()],
            Stmt::LoopCall { outputs, .. } => outputs.clone(),
            Stmt::Return(_) => vec![crate::seplogic::name(RETURN)],
            _ => vec![],
        }
    }

    pub fn read(&self) -> Vec<Name> {
        match self {
            Stmt::Assign(_, r) => match r {
                Rhs::Var(y) | Rhs::Un(_, y) => vec![y.clone()],
                Rhs::Bin(_, y, z) => vec![y.clone(), z.clone()],
                _ => vec![],
            },
            Stmt::Load { src, .. } => vec![src.clone()],
            Stmt::Store { dst, src, .. } => vec![dst.clone(), src.clone()],
            Stmt::Return(x) => vec![x.clone()],
            Stmt::Assume(c) | Stmt::Assert(c) => c.vars(),
            Stmt::Call { args, .. } | Stmt::LoopCall { args, .. } => args.clone(),
        }
    }

    pub fn callee(&self) -> Option<&Name> {
        match self {
            Stmt::Call { callee, .. } | Stmt::LoopCall { callee, .. } => Some(callee),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: Loc,
    pub stmt: Stmt,
    pub to: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub locs: usize,
    pub entry: Loc,
    pub exit: Loc,
    pub edges: Vec<Edge>,
}

impl Cfg {
    pub fn out_edges(&self, l: Loc) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FnKind {
    Surface,
    Loop,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: Name,
    pub kind: FnKind,
    pub params: Vec<Name>,
    /// Variables handed back to the caller: `return` for surface functions,
    /// the written live-ins for loops.
    pub outputs: Vec<Name>,
    pub cfg: Cfg,
}

impl Function {
    /// All program variables the body mentions, parameters first.
    pub fn vars(&self) -> Vec<Name> {
        let mut out: Vec<Name> = self.params.clone();
        let mut seen: BTreeSet<Name> = out.iter().cloned().collect();
        for e in &self.cfg.edges {
            for x in e.stmt.read().into_iter().chain(e.stmt.written()) {
                if seen.insert(x.clone()) {
                    out.push(x);
                }
            }
        }
        out
    }

    /// Edges into the entry: the back edges of a loop function.
    pub fn back_edges(&self) -> impl Iterator<Item = &Edge> {
        self.cfg.edges.iter().filter(move |e| e.to == self.cfg.entry)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Program {
    pub functions: BTreeMap<Name, Function>,
    /// Callees before callers.
    pub order: Vec<Name>,
}

impl Program {
    pub fn get(&self, f: &str) -> Option<&Function> {
        self.functions.get(f)
    }
}

/// Variables written along the given edges.
pub fn changed_vars<'a>(edges: impl IntoIterator<Item = &'a Edge>) -> BTreeSet<Name> {
    edges.into_iter().flat_map(|e| e.stmt.written()).collect()
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(x) => write!(f, "{x}"),
            Operand::Null => write!(f, "NULL"),
            Operand::Num(n) => write!(f, "{n}"),
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = if self.op == Cmp::Eq { "==" } else { self.op.symbol() };
        write!(f, "{} {} {}", self.lhs, op, self.rhs)
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Assign(x, r) => match r {
                Rhs::Num(n) => write!(f, "{x} = {n}"),
                Rhs::Null => write!(f, "{x} = NULL"),
                Rhs::Var(y) => write!(f, "{x} = {y}"),
                Rhs::Nondet => write!(f, "{x} = ?"),
                Rhs::Un(op, y) => write!(f, "{x} = {}{y}", op.symbol()),
                Rhs::Bin(op, y, z) => write!(f, "{x} = {y} {} {z}", op.symbol()),
            },
            Stmt::Load { dst, src, field } => write!(f, "{dst} = {src}->{field}"),
            Stmt::Store { dst, field, src } => write!(f, "{dst}->{field} = {src}"),
            Stmt::Return(x) => write!(f, "return {x}"),
            Stmt::Assume(c) => write!(f, "assume({c})"),
            Stmt::Assert(c) => write!(f, "assert({c})"),
            Stmt::Call { dst, callee, args } => write!(f, "{dst} = {callee}({})", args.join(", ")),
            Stmt::LoopCall { callee, args, outputs } => {
                write!(f, "loop {callee}({}) -> ({})", args.join(", "), outputs.join(", "))
            }
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            FnKind::Surface => "fn",
            FnKind::Loop => "loop",
        };
        writeln!(f, "{kind} {}({}) -> ({})", self.name, self.params.join(", "), self.outputs.join(", "))?;
        writeln!(f, "  entry {} exit {} locs {}", self.cfg.entry, self.cfg.exit, self.cfg.locs)?;
        for e in &self.cfg.edges {
            writeln!(f, "  {} -> {}: {}", e.from, e.to, e.stmt)?;
        }
        writeln!(f, "end")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for name in &self.order {
            write!(f, "{}", self.functions[name])?;
        }
        Ok(())
    }
}
