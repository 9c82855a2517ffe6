//! Lowering from the syntax tree to control-flow graphs. Loops are pulled
//! out into functions of their own and replaced by a single loop call.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{self, Exp, FnDef, Module, Stm};
use super::cfg::{Cfg, Cond, Edge, FnKind, Function, Operand, Program, Rhs, Stmt, RETURN};
use super::FrontendError;
use crate::seplogic::{name, Cmp, Name, UnOp};

struct Builder {
    edges: Vec<(usize, Stmt, usize)>,
    parent: Vec<usize>,
    entry: usize,
    exit: usize,
    temps: usize,
    in_loop: bool,
}

impl Builder {
    fn new(in_loop: bool) -> Builder {
        let mut b = Builder { edges: vec![], parent: vec![], entry: 0, exit: 0, temps: 0, in_loop };
        b.entry = b.vertex();
        b.exit = b.vertex();
        b
    }

    fn vertex(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    fn find(&mut self, v: usize) -> usize {
        let mut r = v;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        self.parent[v] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        self.parent[rb] = ra;
        ra
    }

    fn temp(&mut self) -> Name {
        let t = name(&format!("$t{}", self.temps));
        self.temps += 1;
        t
    }

    fn edge(&mut self, from: usize, stmt: Stmt) -> usize {
        let to = self.vertex();
        self.edges.push((from, stmt, to));
        to
    }

    fn edge_to(&mut self, from: usize, stmt: Stmt, to: usize) {
        self.edges.push((from, stmt, to));
    }

    /// Dense renumbering in breadth-first order: entry 0, exit last.
    fn finish(mut self) -> Cfg {
        let entry = self.find(self.entry);
        let exit = self.find(self.exit);
        let raw: Vec<(usize, Stmt, usize)> =
            std::mem::take(&mut self.edges).into_iter().map(|(a, s, b)| (self.find(a), s, self.find(b))).collect();
        let mut id: BTreeMap<usize, usize> = BTreeMap::new();
        let mut queue = std::collections::VecDeque::from([entry]);
        let mut order = Vec::new();
        let mut seen = BTreeSet::from([entry]);
        while let Some(v) = queue.pop_front() {
            if v != exit {
                order.push(v);
            }
            for (a, _, b) in &raw {
                if *a == v && seen.insert(*b) {
                    queue.push_back(*b);
                }
            }
        }
        order.push(exit);
        for (k, v) in order.iter().enumerate() {
            id.entry(*v).or_insert(k);
        }
        let locs = order.iter().collect::<BTreeSet<_>>().len();
        let mut edges: Vec<Edge> = raw
            .into_iter()
            .filter(|(a, _, _)| seen.contains(a))
            .map(|(a, stmt, b)| Edge { from: id[&a], stmt, to: id[&b] })
            .collect();
        edges.sort_by_key(|e| e.from);
        Cfg { locs, entry: id[&entry], exit: id[&exit], edges }
    }
}

struct Lowerer {
    base: String,
    loops: Vec<Function>,
}

type LResult<T> = Result<T, String>;

impl Lowerer {
    fn operand(&mut self, b: &mut Builder, e: &Exp, cur: &mut usize) -> LResult<Operand> {
        Ok(match e {
            Exp::Var(x) => Operand::Var(name(x)),
            Exp::Null => Operand::Null,
            Exp::Num(n) => Operand::Num(*n),
            Exp::Un(UnOp::Neg, a) if matches!(**a, Exp::Num(_)) => {
                let Exp::Num(n) = **a else { unreachable!() };
                Operand::Num(-n)
            }
            _ => Operand::Var(self.var_of(b, e, cur)?),
        })
    }

    fn var_of(&mut self, b: &mut Builder, e: &Exp, cur: &mut usize) -> LResult<Name> {
        if let Exp::Var(x) = e {
            return Ok(name(x));
        }
        let t = b.temp();
        self.assign(b, &t, e, cur)?;
        Ok(t)
    }

    fn assign(&mut self, b: &mut Builder, x: &Name, e: &Exp, cur: &mut usize) -> LResult<()> {
        let stmt = match e {
            Exp::Num(n) => Stmt::Assign(x.clone(), Rhs::Num(*n)),
            Exp::Null => Stmt::Assign(x.clone(), Rhs::Null),
            Exp::Var(y) => Stmt::Assign(x.clone(), Rhs::Var(name(y))),
            Exp::Nondet => Stmt::Assign(x.clone(), Rhs::Nondet),
            Exp::Un(UnOp::Neg, a) if matches!(**a, Exp::Num(_)) => {
                let Exp::Num(n) = **a else { unreachable!() };
                Stmt::Assign(x.clone(), Rhs::Num(-n))
            }
            Exp::Un(op, a) => {
                let y = self.var_of(b, a, cur)?;
                Stmt::Assign(x.clone(), Rhs::Un(*op, y))
            }
            Exp::Bin(op, l, r) => {
                let y = self.var_of(b, l, cur)?;
                let z = self.var_of(b, r, cur)?;
                Stmt::Assign(x.clone(), Rhs::Bin(*op, y, z))
            }
            Exp::Load(base, f) => {
                let y = self.var_of(b, base, cur)?;
                Stmt::Load { dst: x.clone(), src: y, field: name(f) }
            }
            Exp::Call(g, args) => {
                let mut vs = Vec::new();
                for a in args {
                    vs.push(self.var_of(b, a, cur)?);
                }
                Stmt::Call { dst: x.clone(), callee: name(g), args: vs }
            }
        };
        *cur = b.edge(*cur, stmt);
        Ok(())
    }

    /// Emit the two-way branch for `c` at `cur`; returns (then, else) vertices.
    fn branch(&mut self, b: &mut Builder, c: &ast::Cond, mut cur: usize) -> LResult<(usize, usize)> {
        match c {
            ast::Cond::Cmp(op, l, r) => {
                let lhs = self.operand(b, l, &mut cur)?;
                let rhs = self.operand(b, r, &mut cur)?;
                let c = Cond { op: *op, lhs, rhs };
                let t = b.edge(cur, Stmt::Assume(c.clone()));
                let f = b.edge(cur, Stmt::Assume(c.negate()));
                Ok((t, f))
            }
            ast::Cond::And(c1, c2) => {
                let (t1, f1) = self.branch(b, c1, cur)?;
                let (t2, f2) = self.branch(b, c2, t1)?;
                Ok((t2, b.union(f1, f2)))
            }
            ast::Cond::Or(c1, c2) => {
                let (t1, f1) = self.branch(b, c1, cur)?;
                let (t2, f2) = self.branch(b, c2, f1)?;
                Ok((b.union(t1, t2), f2))
            }
            ast::Cond::Not(c) => {
                let (t, f) = self.branch(b, c, cur)?;
                Ok((f, t))
            }
            ast::Cond::Nondet => {
                let t = b.temp();
                cur = b.edge(cur, Stmt::Assign(t.clone(), Rhs::Nondet));
                self.branch(b, &ast::Cond::Cmp(Cmp::Ne, Exp::Var(t.to_string()), Exp::Num(0)), cur)
            }
        }
    }

    /// Conjuncts of an assume/assert or loop condition.
    fn conjuncts(c: &ast::Cond, neg: bool, out: &mut Vec<(Cmp, Exp, Exp)>) -> LResult<()> {
        match (c, neg) {
            (ast::Cond::Cmp(op, l, r), _) => {
                out.push((if neg { op.negate() } else { *op }, l.clone(), r.clone()));
                Ok(())
            }
            (ast::Cond::And(a, b), false) | (ast::Cond::Or(a, b), true) => {
                Self::conjuncts(a, neg, out)?;
                Self::conjuncts(b, neg, out)
            }
            (ast::Cond::Not(a), _) => Self::conjuncts(a, !neg, out),
            _ => Err("condition must be a conjunction of comparisons".into()),
        }
    }

    fn block(
        &mut self,
        b: &mut Builder,
        stmts: &[Stm],
        start: usize,
        live_out: &BTreeSet<String>,
    ) -> LResult<Option<usize>> {
        let mut cur = start;
        for (i, s) in stmts.iter().enumerate() {
            let after = ast::live_before(&stmts[i + 1..], live_out);
            match self.stm(b, s, cur, &after)? {
                Some(v) => cur = v,
                None => return Ok(None),
            }
        }
        Ok(Some(cur))
    }

    fn stm(&mut self, b: &mut Builder, s: &Stm, mut cur: usize, after: &BTreeSet<String>) -> LResult<Option<usize>> {
        match s {
            Stm::Assign(x, e) => self.assign(b, &name(x), e, &mut cur)?,
            Stm::Store(base, f, e) => {
                let dst = self.var_of(b, base, &mut cur)?;
                let src = self.var_of(b, e, &mut cur)?;
                cur = b.edge(cur, Stmt::Store { dst, field: name(f), src });
            }
            Stm::Eval(e) => {
                let t = b.temp();
                self.assign(b, &t, e, &mut cur)?;
            }
            Stm::If(c, t, e) => {
                let (tv, fv) = self.branch(b, c, cur)?;
                let te = self.block(b, t, tv, after)?;
                let ee = self.block(b, e, fv, after)?;
                return Ok(match (te, ee) {
                    (Some(x), Some(y)) => Some(b.union(x, y)),
                    (x, y) => x.or(y),
                });
            }
            Stm::While(c, body, k) => {
                let f = self.extract_loop(c, body, *k, after)?;
                let stmt =
                    Stmt::LoopCall { callee: f.name.clone(), args: f.params.clone(), outputs: f.outputs.clone() };
                self.loops.push(f);
                cur = b.edge(cur, stmt);
            }
            Stm::Return(e, line) => {
                if b.in_loop {
                    return Err(format!("line {line}: return inside a loop"));
                }
                let exit = b.exit;
                match e {
                    Some(e) => {
                        let v = self.var_of(b, e, &mut cur)?;
                        b.edge_to(cur, Stmt::Return(v), exit);
                    }
                    None => b.edge_to(cur, Stmt::Assign(name(RETURN), Rhs::Null), exit),
                }
                return Ok(None);
            }
            Stm::Assume(c) | Stm::Assert(c) => {
                let assume = matches!(s, Stm::Assume(_));
                if *c == ast::Cond::Nondet {
                    let t = b.temp();
                    cur = b.edge(cur, Stmt::Assign(t.clone(), Rhs::Nondet));
                    let c = Cond { op: Cmp::Ne, lhs: Operand::Var(t), rhs: Operand::Num(0) };
                    cur = b.edge(cur, if assume { Stmt::Assume(c) } else { Stmt::Assert(c) });
                    return Ok(Some(cur));
                }
                let mut cs = Vec::new();
                Self::conjuncts(c, false, &mut cs)?;
                for (op, l, r) in cs {
                    let lhs = self.operand(b, &l, &mut cur)?;
                    let rhs = self.operand(b, &r, &mut cur)?;
                    let c = Cond { op, lhs, rhs };
                    cur = b.edge(cur, if assume { Stmt::Assume(c) } else { Stmt::Assert(c) });
                }
            }
        }
        Ok(Some(cur))
    }

    fn extract_loop(&mut self, c: &ast::Cond, body: &[Stm], k: usize, after: &BTreeSet<String>) -> LResult<Function> {
        let live = ast::loop_header_live(c, body, after);
        let mut w = BTreeSet::new();
        ast::written(body, &mut w);
        let params: Vec<Name> = live.iter().map(|x| name(x)).collect();
        let outputs: Vec<Name> = live.iter().filter(|x| w.contains(*x)).map(|x| name(x)).collect();
        let mut cs = Vec::new();
        Self::conjuncts(c, false, &mut cs)
            .map_err(|_| "loop condition is not a conjunction of comparisons".to_string())?;
        let mut b = Builder::new(true);
        let mut cur = b.entry;
        for (op, l, r) in cs {
            let simple = |e: &Exp| match e {
                Exp::Var(x) => Some(Operand::Var(name(x))),
                Exp::Null => Some(Operand::Null),
                Exp::Num(n) => Some(Operand::Num(*n)),
                _ => None,
            };
            let (Some(lhs), Some(rhs)) = (simple(&l), simple(&r)) else {
                return Err("loop condition must compare variables, NULL or constants".into());
            };
            let c = Cond { op, lhs, rhs };
            let exit = b.exit;
            let next = b.edge(cur, Stmt::Assume(c.clone()));
            b.edge_to(cur, Stmt::Assume(c.negate()), exit);
            cur = next;
        }
        if let Some(end) = self.block(&mut b, body, cur, &live)? {
            let entry = b.entry;
            b.union(entry, end);
        }
        Ok(Function {
            name: name(&format!("{}.loop{k}", self.base)),
            kind: FnKind::Loop,
            params,
            outputs,
            cfg: b.finish(),
        })
    }
}

fn lower_fn(def: &FnDef) -> Result<Vec<Function>, FrontendError> {
    let mut lw = Lowerer { base: def.name.clone(), loops: vec![] };
    let mut b = Builder::new(false);
    let entry = b.entry;
    let err = |msg: String| FrontendError::Lower { func: def.name.clone(), msg };
    let end = lw.block(&mut b, &def.body, entry, &BTreeSet::new()).map_err(err)?;
    if let Some(end) = end {
        let exit = b.exit;
        b.union(exit, end);
    }
    let mut out = vec![Function {
        name: name(&def.name),
        kind: FnKind::Surface,
        params: def.params.iter().map(|p| name(p)).collect(),
        outputs: vec![name(RETURN)],
        cfg: b.finish(),
    }];
    out.extend(lw.loops);
    Ok(out)
}

/// Lower a parsed module and compute the bottom-up call order.
pub fn lower_module(m: &Module) -> Result<Program, FrontendError> {
    let mut prog = Program::default();
    let mut source_order = Vec::new();
    for def in &m.functions {
        let mut seen = BTreeSet::new();
        for p in &def.params {
            if !seen.insert(p) {
                return Err(FrontendError::Lower { func: def.name.clone(), msg: format!("duplicate parameter {p}") });
            }
        }
        for f in lower_fn(def)? {
            if prog.functions.contains_key(&f.name) {
                return Err(FrontendError::Lower { func: f.name.to_string(), msg: "defined twice".into() });
            }
            source_order.push(f.name.clone());
            prog.functions.insert(f.name.clone(), f);
        }
    }
    for f in prog.functions.values() {
        for e in &f.cfg.edges {
            if let Stmt::Call { callee, args, .. } = &e.stmt {
                let Some(g) = prog.functions.get(callee) else {
                    return Err(FrontendError::Lower {
                        func: f.name.to_string(),
                        msg: format!("call to unknown function {callee}"),
                    });
                };
                if g.params.len() != args.len() {
                    return Err(FrontendError::Lower {
                        func: f.name.to_string(),
                        msg: format!("{callee} expects {} arguments, got {}", g.params.len(), args.len()),
                    });
                }
            }
        }
    }
    prog.order = call_order(&prog, &source_order)?;
    Ok(prog)
}

/// Callees before callers; recursion is rejected.
pub fn call_order(prog: &Program, roots: &[Name]) -> Result<Vec<Name>, FrontendError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit(
        prog: &Program,
        f: &Name,
        marks: &mut BTreeMap<Name, Mark>,
        out: &mut Vec<Name>,
    ) -> Result<(), FrontendError> {
        match marks.get(f) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Active) => {
                return Err(FrontendError::Lower { func: f.to_string(), msg: "recursion is not supported".into() })
            }
            None => {}
        }
        marks.insert(f.clone(), Mark::Active);
        for e in &prog.functions[f].cfg.edges {
            if let Some(g) = e.stmt.callee() {
                visit(prog, g, marks, out)?;
            }
        }
        marks.insert(f.clone(), Mark::Done);
        out.push(f.clone());
        Ok(())
    }
    let mut marks = BTreeMap::new();
    let mut out = Vec::new();
    for f in roots {
        visit(prog, f, &mut marks, &mut out)?;
    }
    Ok(out)
}
