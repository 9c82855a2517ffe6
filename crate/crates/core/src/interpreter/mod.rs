//! Reference interpreter for lowered programs, and the contract soundness
//! oracle built on it.

pub mod oracle;

use std::collections::BTreeMap;

use crate::frontend::{FnKind, Function, Program, Rhs, Stmt, RETURN};
use crate::memory::{eval_bin, eval_cmp, eval_un, Config, Val};
use crate::seplogic::{name, Name, Var};

pub use oracle::{check_contract, check_inductive, check_program, OracleOptions, SoundnessReport, Violation};

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    /// Back-edge traversals allowed per loop invocation.
    pub loop_bound: usize,
    /// Total interpreter steps before giving up on a run.
    pub max_steps: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { loop_bound: 8, max_steps: 200_000 }
    }
}

/// Outcome of a single pass through a loop body.
#[derive(Clone, Debug, Default)]
pub struct BodyPass {
    /// States arriving back at the loop head.
    pub repeated: Vec<Config>,
    /// States that left the loop.
    pub exited: Vec<Config>,
    pub err: Option<String>,
}

/// Everything one run can end in. `err` dominates: a run that can fault
/// reports the fault and nothing else matters.
#[derive(Clone, Debug, Default)]
pub struct RunResult {
    pub finals: Vec<Config>,
    pub err: Option<String>,
    pub bound_hit: bool,
}

pub struct Interpreter<'p> {
    prog: &'p Program,
    limits: Limits,
    steps: usize,
    watermark: u32,
}

fn pv(x: &Name) -> Var {
    Var::Prog(x.clone())
}

fn read(c: &Config, x: &Name) -> Val {
    c.stack.get(&pv(x)).copied().unwrap_or(Val::Null)
}

fn operand(c: &Config, o: &crate::frontend::Operand) -> Val {
    match o {
        crate::frontend::Operand::Var(x) => read(c, x),
        crate::frontend::Operand::Null => Val::Null,
        crate::frontend::Operand::Num(n) => Val::Int(*n),
    }
}

/// Values a nondeterministic read may produce; the fresh location is added
/// per step.
pub const NONDET_POOL: [Val; 4] = [Val::Null, Val::Int(0), Val::Int(1), Val::Int(2)];

enum Step {
    Next(Vec<Config>),
    Err(String),
}

impl<'p> Interpreter<'p> {
    pub fn new(prog: &'p Program, limits: Limits) -> Interpreter<'p> {
        Interpreter { prog, limits, steps: 0, watermark: 0 }
    }

    fn fresh_loc(&mut self, c: &Config) -> u32 {
        let l = c.fresh_loc().max(self.watermark + 1);
        self.watermark = l;
        l
    }

    /// Initial frame for `f`: parameters from `args`, everything else NULL.
    pub fn frame(f: &Function, args: &[Val], heap: crate::memory::Heap) -> Config {
        let mut stack = BTreeMap::new();
        for x in f.vars() {
            stack.insert(pv(&x), Val::Null);
        }
        stack.insert(pv(&name(RETURN)), Val::Null);
        for (p, v) in f.params.iter().zip(args) {
            stack.insert(pv(p), *v);
        }
        Config { stack, heap }
    }

    fn exec(&mut self, c: &Config, st: &Stmt, bound_hit: &mut bool) -> Step {
        let mut c = c.clone();
        match st {
            Stmt::Assign(x, r) => {
                let vals = match r {
                    Rhs::Num(n) => vec![Val::Int(*n)],
                    Rhs::Null => vec![Val::Null],
                    Rhs::Var(y) => vec![read(&c, y)],
                    Rhs::Un(op, y) => vec![eval_un(*op, read(&c, y))],
                    Rhs::Bin(op, y, z) => vec![eval_bin(*op, read(&c, y), read(&c, z))],
                    Rhs::Nondet => {
                        let mut v = NONDET_POOL.to_vec();
                        v.push(Val::Loc(self.fresh_loc(&c)));
                        v
                    }
                };
                Step::Next(
                    vals.into_iter()
                        .map(|v| {
                            let mut d = c.clone();
                            d.stack.insert(pv(x), v);
                            d
                        })
                        .collect(),
                )
            }
            Stmt::Load { dst, src, field } => {
                let Val::Loc(l) = read(&c, src) else {
                    return Step::Err(format!("load {src}->{field} from a non-location"));
                };
                let Some(v) = c.heap.get(&(l, field.clone())).copied() else {
                    return Step::Err(format!("load {src}->{field} from an unallocated cell"));
                };
                c.stack.insert(pv(dst), v);
                Step::Next(vec![c])
            }
            Stmt::Store { dst, field, src } => {
                let Val::Loc(l) = read(&c, dst) else {
                    return Step::Err(format!("store {dst}->{field} to a non-location"));
                };
                if !c.heap.contains_key(&(l, field.clone())) {
                    return Step::Err(format!("store {dst}->{field} to an unallocated cell"));
                }
                let v = read(&c, src);
                c.heap.insert((l, field.clone()), v);
                Step::Next(vec![c])
            }
            Stmt::Return(x) => {
                let v = read(&c, x);
                c.stack.insert(pv(&name(RETURN)), v);
                Step::Next(vec![c])
            }
            Stmt::Assume(k) => {
                if eval_cmp(k.op, operand(&c, &k.lhs), operand(&c, &k.rhs)) {
                    Step::Next(vec![c])
                } else {
                    Step::Next(vec![])
                }
            }
            Stmt::Assert(k) => {
                if eval_cmp(k.op, operand(&c, &k.lhs), operand(&c, &k.rhs)) {
                    Step::Next(vec![c])
                } else {
                    Step::Err(format!("assertion {k} failed"))
                }
            }
            Stmt::Call { dst, callee, args } => {
                let vals: Vec<Val> = args.iter().map(|a| read(&c, a)).collect();
                let r = self.call(callee, &vals, &c);
                *bound_hit |= r.bound_hit;
                if let Some(e) = r.err {
                    return Step::Err(format!("in {callee}: {e}"));
                }
                Step::Next(
                    r.finals
                        .into_iter()
                        .map(|f| {
                            let mut d = c.clone();
                            d.stack.insert(pv(dst), read(&f, &name(RETURN)));
                            d.heap = f.heap;
                            d
                        })
                        .collect(),
                )
            }
            Stmt::LoopCall { callee, args, outputs } => {
                let vals: Vec<Val> = args.iter().map(|a| read(&c, a)).collect();
                let r = self.call(callee, &vals, &c);
                *bound_hit |= r.bound_hit;
                if let Some(e) = r.err {
                    return Step::Err(format!("in {callee}: {e}"));
                }
                Step::Next(
                    r.finals
                        .into_iter()
                        .map(|f| {
                            let mut d = c.clone();
                            for o in outputs {
                                d.stack.insert(pv(o), read(&f, o));
                            }
                            d.heap = f.heap;
                            d
                        })
                        .collect(),
                )
            }
        }
    }

    fn call(&mut self, callee: &Name, args: &[Val], caller: &Config) -> RunResult {
        let Some(g) = self.prog.get(callee) else {
            return RunResult { err: Some(format!("unknown function {callee}")), ..Default::default() };
        };
        // keep fresh locations fresh across frames
        self.watermark = self.watermark.max(caller.fresh_loc());
        let init = Self::frame(g, args, caller.heap.clone());
        self.run(g, init)
    }

    /// All final configurations of `f` from `init`, exploring every
    /// nondeterministic choice.
    pub fn run(&mut self, f: &Function, init: Config) -> RunResult {
        self.explore(f, init, None)
    }

    /// Run a loop function's body once from the head.
    pub fn body_pass(&mut self, f: &Function, init: Config) -> BodyPass {
        let mut repeated = Vec::new();
        let r = self.explore(f, init, Some(&mut repeated));
        repeated.sort();
        repeated.dedup();
        BodyPass { repeated, exited: r.finals, err: r.err }
    }

    /// With `stop_at_head`, states taking a back edge are collected there
    /// instead of iterating.
    fn explore(&mut self, f: &Function, init: Config, mut stop_at_head: Option<&mut Vec<Config>>) -> RunResult {
        let mut res = RunResult::default();
        self.watermark = self.watermark.max(init.fresh_loc());
        let mut work = vec![(f.cfg.entry, init, 0usize)];
        while let Some((loc, c, backs)) = work.pop() {
            self.steps += 1;
            if self.steps > self.limits.max_steps {
                res.bound_hit = true;
                break;
            }
            if loc == f.cfg.exit {
                res.finals.push(c);
                continue;
            }
            let edges: Vec<_> = f.cfg.out_edges(loc).collect();
            for e in edges.into_iter().rev() {
                let mut hit = false;
                match self.exec(&c, &e.stmt, &mut hit) {
                    Step::Err(msg) => {
                        res.err = Some(msg);
                        res.bound_hit |= hit;
                        return res;
                    }
                    Step::Next(cs) => {
                        res.bound_hit |= hit;
                        let back = f.kind == FnKind::Loop && e.to == f.cfg.entry;
                        if back {
                            if let Some(heads) = stop_at_head.as_deref_mut() {
                                heads.extend(cs);
                                continue;
                            }
                        }
                        let n = backs + back as usize;
                        if n > self.limits.loop_bound {
                            res.bound_hit = true;
                            continue;
                        }
                        for d in cs.into_iter().rev() {
                            work.push((e.to, d, n));
                        }
                    }
                }
            }
        }
        res.finals.sort();
        res.finals.dedup();
        res
    }
}

/// Run `f` on the given argument values and heap.
pub fn run_function(prog: &Program, f: &str, args: &[Val], heap: crate::memory::Heap, limits: Limits) -> RunResult {
    let Some(func) = prog.get(f) else {
        return RunResult { err: Some(format!("unknown function {f}")), ..Default::default() };
    };
    let mut it = Interpreter::new(prog, limits);
    let init = Interpreter::frame(func, args, heap);
    it.run(func, init)
}

/// Run a single statement from `c`, used by tests that compare one symbolic
/// step against the concrete one.
pub fn exec_stmt(prog: &Program, c: &Config, st: &Stmt, limits: Limits) -> Result<Vec<Config>, String> {
    let mut it = Interpreter::new(prog, limits);
    let mut hit = false;
    match it.exec(c, st, &mut hit) {
        Step::Next(cs) => Ok(cs),
        Step::Err(e) => Err(e),
    }
}
