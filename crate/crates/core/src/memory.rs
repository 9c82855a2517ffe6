//! Concrete values, stacks and heaps shared by the interpreter and the model checker.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::seplogic::{BinOp, Cmp, Name, UnOp, Var};

/// Locations are numbered from 1; NULL is its own value and is never allocated.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Val {
    Null,
    Int(i64),
    Loc(u32),
}

/// Offset of the numeric view of locations, far above any small integer.
pub const LOC_BASE: i64 = 1 << 40;

impl Val {
    pub fn num(self) -> i64 {
        match self {
            Val::Null => 0,
            Val::Int(n) => n,
            Val::Loc(k) => LOC_BASE + k as i64,
        }
    }

    pub fn as_loc(self) -> Option<u32> {
        match self {
            Val::Loc(k) => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Null => write!(f, "NULL"),
            Val::Int(n) => write!(f, "{n}"),
            Val::Loc(k) => write!(f, "#{k}"),
        }
    }
}

impl Serialize for Val {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

pub fn eval_un(op: UnOp, a: Val) -> Val {
    match op {
        UnOp::Neg => Val::Int(a.num().wrapping_neg()),
        UnOp::Not => Val::Int((a.num() == 0) as i64),
    }
}

pub fn eval_bin(op: BinOp, a: Val, b: Val) -> Val {
    let (x, y) = (a.num(), b.num());
    Val::Int(match op {
        BinOp::Add => x.wrapping_add(y),
        BinOp::Sub => x.wrapping_sub(y),
        BinOp::Mul => x.wrapping_mul(y),
        BinOp::Div => {
            if y == 0 {
                0
            } else {
                x.wrapping_div(y)
            }
        }
        BinOp::Mod => {
            if y == 0 {
                0
            } else {
                x.wrapping_rem(y)
            }
        }
    })
}

/// Equality is structural (NULL differs from 0); orderings use the numeric view.
pub fn eval_cmp(op: Cmp, a: Val, b: Val) -> bool {
    match op {
        Cmp::Eq => a == b,
        Cmp::Ne => a != b,
        Cmp::Le => a.num() <= b.num(),
        Cmp::Lt => a.num() < b.num(),
        Cmp::Ge => a.num() >= b.num(),
        Cmp::Gt => a.num() > b.num(),
    }
}

pub type Heap = BTreeMap<(u32, Name), Val>;

/// A non-error configuration. The stack also carries logical bindings when a
/// configuration is used as a model of a formula.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Config {
    pub stack: BTreeMap<Var, Val>,
    pub heap: Heap,
}

impl Config {
    pub fn lookup(&self, v: &Var) -> Option<Val> {
        self.stack.get(v).copied()
    }

    pub fn used_locs(&self) -> impl Iterator<Item = u32> + '_ {
        self.stack
            .values()
            .filter_map(|v| v.as_loc())
            .chain(self.heap.keys().map(|(l, _)| *l))
            .chain(self.heap.values().filter_map(|v| v.as_loc()))
    }

    pub fn fresh_loc(&self) -> u32 {
        self.used_locs().max().unwrap_or(0) + 1
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stack: Vec<String> = self.stack.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let heap: Vec<String> = self.heap.iter().map(|((l, fld), v)| format!("#{l}.{fld}->{v}")).collect();
        write!(f, "[{}] {{{}}}", stack.join(", "), heap.join(", "))
    }
}
