use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

/// Program variables live on the stack; anchors and plain logicals are the
/// logical side. Anchor `Anchor("x")` is the entry value of program variable `x`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Var {
    Prog(Name),
    Anchor(Name),
    Logical(u32),
}

impl Var {
    pub fn prog(s: &str) -> Var {
        Var::Prog(name(s))
    }

    pub fn anchor(s: &str) -> Var {
        Var::Anchor(name(s))
    }

    pub fn is_prog(&self) -> bool {
        matches!(self, Var::Prog(_))
    }

    pub fn is_anchor(&self) -> bool {
        matches!(self, Var::Anchor(_))
    }

    /// Logical in the broad sense: anchors included.
    pub fn is_logical(&self) -> bool {
        !self.is_prog()
    }

    pub fn is_plain_logical(&self) -> bool {
        matches!(self, Var::Logical(_))
    }

    pub fn anchor_of(&self) -> Option<Var> {
        match self {
            Var::Prog(n) => Some(Var::Anchor(n.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Prog(n) => write!(f, "{n}"),
            Var::Anchor(n) => write!(f, "{}", n.to_uppercase()),
            Var::Logical(k) => write!(f, "l{k}"),
        }
    }
}

impl Serialize for Var {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
        }
    }

    pub fn prec(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            _ => 2,
        }
    }
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::Not => "!",
        }
    }
}

// Variant order matters: derived Ord puts variables before constants, so
// canonical equalities read `x = l1` and `l1 = NULL`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Expr {
    Var(Var),
    Num(i64),
    Null,
    Un(UnOp, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn logical(k: u32) -> Expr {
        Expr::Var(Var::Logical(k))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Expr::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Num(_) | Expr::Null)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn un(op: UnOp, a: Expr) -> Expr {
        Expr::Un(op, Box::new(a))
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Num(_) | Expr::Null => {}
            Expr::Un(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s
    }

    pub fn mentions(&self, v: &Var) -> bool {
        match self {
            Expr::Var(w) => w == v,
            Expr::Num(_) | Expr::Null => false,
            Expr::Un(_, a) => a.mentions(v),
            Expr::Bin(_, a, b) => a.mentions(v) || b.mentions(v),
        }
    }

    pub fn subst(&self, f: &dyn Fn(&Var) -> Option<Expr>) -> Expr {
        match self {
            Expr::Var(v) => f(v).unwrap_or_else(|| self.clone()),
            Expr::Num(_) | Expr::Null => self.clone(),
            Expr::Un(op, a) => Expr::Un(*op, Box::new(a.subst(f))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.subst(f)), Box::new(b.subst(f))),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, outer: u8) -> fmt::Result {
        match self {
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Num(n) => write!(f, "{n}"),
            Expr::Null => write!(f, "NULL"),
            Expr::Un(op, a) => {
                write!(f, "{}", op.symbol())?;
                a.fmt_prec(f, 3)
            }
            Expr::Bin(op, a, b) => {
                let p = op.prec();
                if p < outer {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, p)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_prec(f, p + 1)?;
                if p < outer {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl From<Var> for Expr {
    fn from(v: Var) -> Expr {
        Expr::Var(v)
    }
}

/// Comparison operators as they appear in conditions. Pure atoms only keep
/// `Eq`, `Ne`, `Le`, `Lt`; the other two are flipped on construction.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Cmp {
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
}

impl Cmp {
    pub fn negate(self) -> Cmp {
        match self {
            Cmp::Eq => Cmp::Ne,
            Cmp::Ne => Cmp::Eq,
            Cmp::Le => Cmp::Gt,
            Cmp::Lt => Cmp::Ge,
            Cmp::Ge => Cmp::Lt,
            Cmp::Gt => Cmp::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "=",
            Cmp::Ne => "!=",
            Cmp::Le => "<=",
            Cmp::Lt => "<",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Pure {
    pub op: Cmp,
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Pure {
    pub fn new(op: Cmp, lhs: Expr, rhs: Expr) -> Pure {
        match op {
            Cmp::Ge => Pure::new(Cmp::Le, rhs, lhs),
            Cmp::Gt => Pure::new(Cmp::Lt, rhs, lhs),
            Cmp::Eq | Cmp::Ne if rhs < lhs => Pure { op, lhs: rhs, rhs: lhs },
            _ => Pure { op, lhs, rhs },
        }
    }

    pub fn eq(a: impl Into<Expr>, b: impl Into<Expr>) -> Pure {
        Pure::new(Cmp::Eq, a.into(), b.into())
    }

    pub fn ne(a: impl Into<Expr>, b: impl Into<Expr>) -> Pure {
        Pure::new(Cmp::Ne, a.into(), b.into())
    }

    pub fn negate(&self) -> Pure {
        Pure::new(self.op.negate(), self.lhs.clone(), self.rhs.clone())
    }

    pub fn is_trivial(&self) -> bool {
        match self.op {
            Cmp::Eq | Cmp::Le => self.lhs == self.rhs,
            _ => false,
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.lhs.collect_vars(&mut s);
        self.rhs.collect_vars(&mut s);
        s
    }

    pub fn mentions(&self, v: &Var) -> bool {
        self.lhs.mentions(v) || self.rhs.mentions(v)
    }

    pub fn subst(&self, f: &dyn Fn(&Var) -> Option<Expr>) -> Pure {
        Pure::new(self.op, self.lhs.subst(f), self.rhs.subst(f))
    }

    /// `x = e` with `x` a variable on one side.
    pub fn as_var_eq(&self) -> Option<(&Var, &Expr)> {
        if self.op != Cmp::Eq {
            return None;
        }
        match (&self.lhs, &self.rhs) {
            (Expr::Var(v), e) => Some((v, e)),
            (e, Expr::Var(v)) => Some((v, e)),
            _ => None,
        }
    }
}

impl fmt::Display for Pure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}
