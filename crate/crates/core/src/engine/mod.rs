//! Worklist analysis of loop-free functions over worlds, and the bottom-up
//! driver for whole programs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::biabduction::{
    atomic_contract, call_demand, learn, project, rewrite_cond, simplify_contract, Contract, Learned,
};
use crate::frontend::{Cond, Edge, FnKind, Function, Loc, Program, Stmt, RETURN};
use crate::seplogic::{
    entails_with, heap_sat, name, normalize, reach_set, BlockTable, Fresh, Name, Pure, SymHeap, Var, Verdict,
};

pub mod summary;

pub use summary::{Certificate, Failure, FunctionSummary, Stage, Status};

pub type Summaries = BTreeMap<Name, FunctionSummary>;

/// Deliberate unsoundness, used to show the oracle notices it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Unanchored branches copy the world instead of sharing its precondition.
    NoSharedLearning,
    /// Loop invariants are used without the learning-free re-run of the body.
    SkipVerification,
}

impl std::str::FromStr for Fault {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "no-shared-learning" => Ok(Fault::NoSharedLearning),
            "skip-verification" => Ok(Fault::SkipVerification),
            _ => Err(format!("unknown fault `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub max_worlds: usize,
    /// Worklist items processed per run before giving up.
    pub max_steps: usize,
    pub trace: bool,
    pub fault: Option<Fault>,
}

impl Default for Options {
    fn default() -> Self {
        Options { max_worlds: 64, max_steps: 20_000, trace: false, fault: None }
    }
}

/// How one engine run behaves; loop verification turns learning and
/// assume-as-assert off.
#[derive(Clone, Copy, Debug)]
pub struct RunMode {
    pub learning: bool,
    pub classify: bool,
}

impl RunMode {
    pub const ANALYSIS: RunMode = RunMode { learning: true, classify: true };
    pub const CHECK: RunMode = RunMode { learning: false, classify: false };
}

#[derive(Clone, Debug)]
pub struct Post {
    pub id: usize,
    pub loc: Loc,
    pub curr: SymHeap,
}

#[derive(Clone, Debug)]
pub struct World {
    pub id: usize,
    pub pre: SymHeap,
    pub posts: Vec<Post>,
    pending: BTreeSet<(Loc, usize)>,
    next_post: usize,
}

impl World {
    pub fn new(id: usize, pre: SymHeap, loc: Loc, curr: SymHeap) -> World {
        let mut w = World { id, pre, posts: vec![], pending: BTreeSet::new(), next_post: 0 };
        w.push_post(loc, curr);
        w
    }

    fn push_post(&mut self, loc: Loc, curr: SymHeap) {
        let id = self.next_post;
        self.next_post += 1;
        self.posts.push(Post { id, loc, curr });
        self.pending.insert((loc, id));
    }

    fn post(&self, id: usize) -> Option<&Post> {
        self.posts.iter().find(|p| p.id == id)
    }

    pub fn posts_at(&self, loc: Loc) -> impl Iterator<Item = &Post> {
        self.posts.iter().filter(move |p| p.loc == loc)
    }

    /// Add `q` at `loc` unless it is contradictory or already covered by a
    /// post there.
    fn add_post(&mut self, loc: Loc, q: SymHeap) -> bool {
        if heap_sat(&q) == Verdict::Unsat {
            return false;
        }
        let pre_vars = self.pre.vars();
        for old in self.posts_at(loc) {
            let ex: BTreeSet<Var> = old.curr.plain_logicals().into_iter().filter(|v| !pre_vars.contains(v)).collect();
            let e = entails_with(&q, &old.curr, &ex);
            if e.proved && e.frame.spatial.is_empty() {
                return false;
            }
        }
        self.push_post(loc, q);
        true
    }

    /// Conjoin `extra` to the precondition and every post. Posts that become
    /// contradictory are dropped.
    fn strengthen(&mut self, extra: &SymHeap) {
        self.pre = self.pre.star(extra);
        let mut dropped = Vec::new();
        for p in &mut self.posts {
            p.curr = p.curr.star(extra);
            if heap_sat(&p.curr) == Verdict::Unsat {
                dropped.push(p.id);
            }
        }
        self.posts.retain(|p| !dropped.contains(&p.id));
        self.pending.retain(|(_, id)| !dropped.contains(id));
    }
}

/// The part of a CFG one run explores.
#[derive(Clone, Debug)]
pub struct Region {
    pub edges: Vec<Edge>,
    pub start: Loc,
    pub end: Loc,
}

impl Region {
    pub fn whole(f: &Function) -> Region {
        Region { edges: f.cfg.edges.clone(), start: f.cfg.entry, end: f.cfg.exit }
    }

    /// One pass through a loop body: the leaving edges are cut and back
    /// edges go to a fresh end location.
    pub fn loop_body(f: &Function) -> Region {
        let end = f.cfg.locs;
        let edges = f
            .cfg
            .edges
            .iter()
            .filter(|e| e.to != f.cfg.exit)
            .map(|e| {
                let mut e = e.clone();
                if e.to == f.cfg.entry {
                    e.to = end;
                }
                e
            })
            .collect();
        Region { edges, start: f.cfg.entry, end }
    }

    fn out(&self, l: Loc) -> Vec<&Edge> {
        self.edges.iter().filter(|e| e.from == l).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub worlds: Vec<World>,
    /// Worlds removed because learning failed, with the reason.
    pub failed: Vec<String>,
    pub notes: Vec<String>,
    pub trace: Vec<String>,
    /// Set when the run stopped on a resource limit; `worlds` is then partial.
    pub aborted: Option<String>,
}

pub struct Engine<'a> {
    prog: &'a Program,
    summaries: &'a Summaries,
    opts: Options,
    pub fresh: Fresh,
}

fn pv(x: &str) -> Var {
    Var::Prog(name(x))
}

/// `x = X` for parameters, NULL for every other variable and the result.
pub fn initial_state(f: &Function, fresh: &mut Fresh) -> SymHeap {
    let mut pure = Vec::new();
    for x in f.vars() {
        if f.params.contains(&x) {
            pure.push(Pure::eq(Var::Prog(x.clone()), Var::Anchor(x.clone())));
        } else {
            pure.push(Pure::eq(Var::Prog(x.clone()), crate::seplogic::Expr::Null));
        }
    }
    if !f.params.iter().any(|p| &**p == RETURN) {
        pure.push(Pure::eq(pv(RETURN), crate::seplogic::Expr::Null));
    }
    normalize(&SymHeap::from_pure(pure), fresh).0
}

pub fn param_anchors(f: &Function) -> BTreeSet<Var> {
    f.params.iter().map(|p| Var::Anchor(p.clone())).collect()
}

enum Applied {
    Worlds(Vec<World>),
    Fail(String),
}

impl<'a> Engine<'a> {
    pub fn new(prog: &'a Program, summaries: &'a Summaries, opts: Options) -> Engine<'a> {
        Engine { prog, summaries, opts, fresh: Fresh::new() }
    }

    /// Drive `init` to quiescence over `region`.
    pub fn run(&mut self, f: &Function, region: &Region, init: Vec<World>, mode: RunMode) -> RunOutcome {
        let anchors = param_anchors(f);
        let mut out = RunOutcome::default();
        let mut worlds: BTreeMap<usize, World> = BTreeMap::new();
        let mut next_world = 0;
        for mut w in init {
            w.id = next_world;
            next_world += 1;
            self.fresh.bump_past(&w.pre);
            for p in &w.posts {
                self.fresh.bump_past(&p.curr);
            }
            worlds.insert(w.id, w);
        }
        let mut steps = 0;
        while let Some(wid) = worlds.values().find(|w| !w.pending.is_empty()).map(|w| w.id) {
            steps += 1;
            if steps > self.opts.max_steps {
                out.aborted = Some(format!("resource limit: more than {} worklist steps", self.opts.max_steps));
                break;
            }
            let mut w = worlds.remove(&wid).unwrap();
            let (loc, pid) = w.pending.pop_first().unwrap();
            if loc == region.end || w.post(pid).is_none() {
                worlds.insert(wid, w);
                continue;
            }
            let edges = region.out(loc);
            let mut current = vec![w];
            if let Some((then_e, else_e)) = branch_pair(&edges) {
                current = current
                    .into_iter()
                    .flat_map(|w| self.branch(w, pid, then_e, else_e, &anchors, mode, &mut out))
                    .collect();
            } else {
                for e in edges {
                    let mut next = Vec::new();
                    for w in current {
                        match self.apply_edge(w, pid, e, &anchors, mode, &mut out) {
                            Applied::Worlds(ws) => next.extend(ws),
                            Applied::Fail(msg) => out.failed.push(msg),
                        }
                    }
                    current = next;
                }
            }
            // the first result keeps the id so ordering stays stable
            let mut first = true;
            for mut nw in current {
                if first && !worlds.contains_key(&wid) {
                    nw.id = wid;
                    first = false;
                } else {
                    nw.id = next_world;
                    next_world += 1;
                }
                worlds.insert(nw.id, nw);
            }
            if worlds.len() > self.opts.max_worlds {
                out.aborted = Some(format!("world explosion: more than {} worlds", self.opts.max_worlds));
                break;
            }
        }
        out.worlds = worlds.into_values().collect();
        out
    }

    fn log(&self, out: &mut RunOutcome, w: &World, pid: usize, loc: Loc, stmt: &dyn fmt::Display, m: &str) {
        if self.opts.trace {
            out.trace.push(format!("world#{} post#{} loc={} stmt={} M={}", w.id, pid, loc, stmt, m));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &mut self,
        w: World,
        pid: usize,
        then_e: &Edge,
        else_e: &Edge,
        anchors: &BTreeSet<Var>,
        mode: RunMode,
        out: &mut RunOutcome,
    ) -> Vec<World> {
        let Stmt::Assume(c) = &then_e.stmt else { unreachable!() };
        let q = w.post(pid).unwrap().curr.clone();
        let loc = then_e.from;
        let cond = rewrite_cond(&q, &c.pure());
        let as_assert = mode.classify && {
            let with = w.pre.clone().with_pure(cond.clone());
            cond.vars().is_subset(&reach_set(&with, anchors))
        };
        if as_assert {
            self.log(out, &w, pid, loc, &format!("split on {cond}"), "true ; emp");
            let mut res = Vec::new();
            for (k, e) in [(cond.clone(), then_e), (cond.negate(), else_e)] {
                let mut nw = w.clone();
                nw.strengthen(&SymHeap::from_pure(vec![k.clone()]));
                if heap_sat(&nw.pre) == Verdict::Unsat {
                    out.notes.push(format!("dropped world with contradictory precondition {}", nw.pre));
                    continue;
                }
                nw.add_post(e.to, q.clone().with_pure(k));
                res.push(nw);
            }
            return res;
        }
        self.log(out, &w, pid, loc, &format!("branch on {cond}"), "true ; emp");
        let duplicate = self.opts.fault == Some(Fault::NoSharedLearning) && mode.learning;
        if duplicate {
            let mut res = Vec::new();
            for (k, e) in [(cond.clone(), then_e), (cond.negate(), else_e)] {
                let mut nw = w.clone();
                if nw.add_post(e.to, q.clone().with_pure(k)) {
                    res.push(nw);
                }
            }
            return res;
        }
        let mut w = w;
        for (k, e) in [(cond.clone(), then_e), (cond.negate(), else_e)] {
            if !w.add_post(e.to, q.clone().with_pure(k.clone())) {
                out.notes.push(format!("branch {k} at {loc} is infeasible or covered"));
            }
        }
        vec![w]
    }

    fn apply_edge(
        &mut self,
        w: World,
        pid: usize,
        e: &Edge,
        anchors: &BTreeSet<Var>,
        mode: RunMode,
        out: &mut RunOutcome,
    ) -> Applied {
        let Some(post) = w.post(pid) else { return Applied::Worlds(vec![w]) };
        let q = post.curr.clone();
        if let Stmt::Assume(c) = &e.stmt {
            // a lone assume: the program itself restricts the inputs
            return Applied::Worlds(self.single_assume(w, pid, e, c, &q, anchors, mode, out));
        }
        if let Some(callee) = e.stmt.callee() {
            return self.apply_call(w, pid, e, callee, &q, anchors, mode, out);
        }
        let d = atomic_contract(&e.stmt, &mut self.fresh).expect("non-call statement");
        match learn(&w.pre, &q, &d, anchors, mode.learning, &mut self.fresh) {
            Ok(l) => {
                self.log(out, &w, pid, e.from, &e.stmt, &l.missing.to_string());
                Applied::Worlds(vec![self.shared_learn(w, e.to, l)])
            }
            Err(err) => {
                self.log(out, &w, pid, e.from, &e.stmt, "failed");
                Applied::Fail(format!("world#{} at {} `{}`: {}", w.id, e.from, e.stmt, err))
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn single_assume(
        &mut self,
        mut w: World,
        pid: usize,
        e: &Edge,
        c: &Cond,
        q: &SymHeap,
        anchors: &BTreeSet<Var>,
        mode: RunMode,
        out: &mut RunOutcome,
    ) -> Vec<World> {
        let cond = rewrite_cond(q, &c.pure());
        let with = w.pre.clone().with_pure(cond.clone());
        let as_assert = mode.classify && cond.vars().is_subset(&reach_set(&with, anchors));
        let learned = if as_assert { SymHeap::from_pure(vec![cond.clone()]) } else { SymHeap::default() };
        self.log(out, &w, pid, e.from, &e.stmt, &learned.to_string());
        if as_assert {
            w.strengthen(&SymHeap::from_pure(vec![cond.clone()]));
            if heap_sat(&w.pre) == Verdict::Unsat {
                out.notes.push(format!("dropped world with contradictory precondition {}", w.pre));
                return vec![];
            }
        }
        w.add_post(e.to, q.clone().with_pure(cond));
        vec![w]
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_call(
        &mut self,
        w: World,
        pid: usize,
        e: &Edge,
        callee: &Name,
        q: &SymHeap,
        anchors: &BTreeSet<Var>,
        mode: RunMode,
        out: &mut RunOutcome,
    ) -> Applied {
        let (Some(g), Some(sum)) = (self.prog.get(callee), self.summaries.get(callee)) else {
            return Applied::Fail(format!("no summary for {callee}"));
        };
        if sum.status != Status::Analyzed {
            return Applied::Fail(format!("callee {callee} failed"));
        }
        let mut ok: Vec<Learned> = Vec::new();
        let mut why = Vec::new();
        for c in &sum.call_contracts {
            let d = call_demand(c, g, &e.stmt, &mut self.fresh);
            match learn(&w.pre, q, &d, anchors, mode.learning, &mut self.fresh) {
                Ok(l) => ok.push(l),
                Err(err) => why.push(err.to_string()),
            }
        }
        if ok.is_empty() {
            self.log(out, &w, pid, e.from, &e.stmt, "failed");
            return Applied::Fail(format!(
                "world#{} at {} `{}`: no contract of {callee} applies ({})",
                w.id,
                e.from,
                e.stmt,
                why.join("; ")
            ));
        }
        let mut res = Vec::new();
        for l in ok {
            self.log(out, &w, pid, e.from, &e.stmt, &l.missing.to_string());
            res.push(self.shared_learn(w.clone(), e.to, l));
        }
        Applied::Worlds(res)
    }

    /// Add the learned facts to the precondition and every post, then the
    /// successor posts at `to`.
    fn shared_learn(&mut self, mut w: World, to: Loc, l: Learned) -> World {
        if !l.missing.pure.is_empty() || !l.missing.spatial.is_empty() {
            w.strengthen(&l.missing);
        }
        for q in l.posts {
            self.fresh.bump_past(&q);
            w.add_post(to, q);
        }
        w
    }
}

/// Two assumes on complementary conditions leaving the same location.
fn branch_pair<'e>(edges: &[&'e Edge]) -> Option<(&'e Edge, &'e Edge)> {
    let [a, b] = edges else { return None };
    match (&a.stmt, &b.stmt) {
        (Stmt::Assume(x), Stmt::Assume(y)) if x.negate() == *y || y.negate() == *x => Some((a, b)),
        _ => None,
    }
}

/// Contracts of the surviving worlds, restricted to `outputs`. Worlds that
/// never reach `end` contribute nothing.
pub fn world_contracts(worlds: &[World], end: Loc, outputs: &BTreeSet<Var>) -> Vec<Contract> {
    let mut res = Vec::new();
    for w in worlds {
        let posts: Vec<SymHeap> = w.posts_at(end).map(|p| project(&p.curr, outputs)).collect();
        if posts.is_empty() {
            continue;
        }
        res.push(simplify_contract(&Contract { pre: w.pre.clone(), posts }));
    }
    res
}

/// Analysis of a function without loops.
pub fn analyze_loop_free(prog: &Program, f: &Function, summaries: &Summaries, opts: Options) -> FunctionSummary {
    let mut eng = Engine::new(prog, summaries, opts);
    let init = initial_state(f, &mut eng.fresh);
    let region = Region::whole(f);
    let world = World::new(0, SymHeap::emp(), region.start, init);
    let run = eng.run(f, &region, vec![world], RunMode::ANALYSIS);
    let mut s = FunctionSummary::new(f);
    s.trace = run.trace;
    s.diagnostics.extend(run.notes);
    s.diagnostics.extend(run.failed.iter().cloned());
    if let Some(msg) = run.aborted {
        return s.fail(None, msg);
    }
    let outputs: BTreeSet<Var> = match f.kind {
        FnKind::Surface => [pv(RETURN)].into(),
        FnKind::Loop => f.outputs.iter().map(|o| Var::Prog(o.clone())).collect(),
    };
    let contracts = world_contracts(&run.worlds, region.end, &outputs);
    if contracts.is_empty() {
        let why = run.failed.first().cloned().unwrap_or_else(|| "no world reaches the exit".into());
        return s.fail(None, why);
    }
    s.status = Status::Analyzed;
    s.call_contracts = contracts.clone();
    s.contracts = contracts;
    s
}

/// Summaries of every function plus the iterated blocks their contracts use.
pub struct Analysis {
    pub summaries: Summaries,
    pub blocks: BlockTable,
}

/// Analyze every function, callees first.
pub fn analyze_program(prog: &Program, opts: Options) -> Analysis {
    let mut summaries = Summaries::new();
    let mut blocks = BlockTable::new();
    for fname in &prog.order {
        let f = &prog.functions[fname];
        let failed_callee = f
            .cfg
            .edges
            .iter()
            .filter_map(|e| e.stmt.callee())
            .find(|c| summaries.get(*c).is_none_or(|s: &FunctionSummary| s.status != Status::Analyzed));
        let s = if let Some(c) = failed_callee {
            FunctionSummary::new(f).fail(None, format!("callee {c} could not be analyzed"))
        } else if f.kind == FnKind::Loop {
            crate::extrapolation::analyze_loop(prog, f, &summaries, &mut blocks, opts)
        } else {
            analyze_loop_free(prog, f, &summaries, opts)
        };
        summaries.insert(fname.clone(), s);
    }
    Analysis { summaries, blocks }
}
