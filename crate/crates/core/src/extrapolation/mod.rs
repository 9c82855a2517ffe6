//! Single-pass analysis of loop functions: one symbolic iteration of the
//! body, a segment predicate guessed from its footprint, side-condition
//! proofs and a learning-free re-run of the body to confirm the invariant.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::biabduction::{binding, project, simplify_contract, Contract};
use crate::engine::{
    initial_state, Certificate, Engine, Fault, FunctionSummary, Options, Region, RunMode, Stage, Status, Summaries,
    World,
};
use crate::frontend::{changed_vars, Function, Operand, Program, Stmt};
use crate::seplogic::{
    abstract_alpha_blocks, entails_with, heap_sat, normalize, reach_set, restrict, Block, BlockTable, Cmp, Expr, Fresh,
    HeapCtx, Name, Pure, Spatial, SymHeap, Var, Verdict,
};

/// One conjunct `var != target` of the loop condition, oriented so that
/// `var` is written by the body and `target` is not.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExitConjunct {
    pub var: Name,
    pub target: Operand,
}

impl ExitConjunct {
    /// The target as a formula over entry values.
    pub fn target_expr(&self) -> Expr {
        match &self.target {
            Operand::Var(y) => Expr::Var(Var::Anchor(y.clone())),
            other => other.expr(),
        }
    }
}

type Fail = (Stage, String);

/// The entering assume chain at the loop header.
pub fn exit_condition(f: &Function) -> Result<Vec<ExitConjunct>, Fail> {
    let written = changed_vars(&f.cfg.edges);
    let mut out = Vec::new();
    let mut loc = f.cfg.entry;
    let mut seen = BTreeSet::new();
    while seen.insert(loc) {
        let edges: Vec<_> = f.cfg.out_edges(loc).collect();
        let [a, b] = edges[..] else { break };
        let (enter, leave) = match (a.to == f.cfg.exit, b.to == f.cfg.exit) {
            (false, true) => (a, b),
            (true, false) => (b, a),
            _ => break,
        };
        let (Stmt::Assume(c), Stmt::Assume(_)) = (&enter.stmt, &leave.stmt) else { break };
        if c.op != Cmp::Ne {
            return Err((Stage::ExitForm, format!("loop condition `{c}` is not an inequality")));
        }
        let is_written = |o: &Operand| o.var().is_some_and(|v| written.contains(v));
        let conj = match (is_written(&c.lhs), is_written(&c.rhs)) {
            (true, false) => ExitConjunct { var: c.lhs.var().unwrap().clone(), target: c.rhs.clone() },
            (false, true) => ExitConjunct { var: c.rhs.var().unwrap().clone(), target: c.lhs.clone() },
            _ => {
                return Err((
                    Stage::ExitForm,
                    format!("loop condition `{c}` needs exactly one side written by the body"),
                ))
            }
        };
        out.push(conj);
        loc = enter.to;
    }
    if out.is_empty() {
        return Err((Stage::ExitForm, "loop condition is not a conjunction of inequalities".into()));
    }
    Ok(out)
}

/// Result of one symbolic pass through the body from the initial state.
#[derive(Clone, Debug)]
pub struct FirstIteration {
    pub pre: SymHeap,
    pub curr: SymHeap,
}

#[derive(Clone, Debug)]
pub struct Partition {
    pub changed: BTreeSet<Name>,
    pub unchanged: BTreeSet<Name>,
    pub constant: SymHeap,
    pub transf_pre: SymHeap,
    pub transf_curr: SymHeap,
}

fn anchor(x: &Name) -> Var {
    Var::Anchor(x.clone())
}

fn prog(x: &Name) -> Var {
    Var::Prog(x.clone())
}

/// `h` without the atoms of `sub`, counting multiplicities.
fn minus(h: &SymHeap, sub: &SymHeap) -> SymHeap {
    let mut pure = h.pure.clone();
    for p in &sub.pure {
        if let Some(k) = pure.iter().position(|q| q == p) {
            pure.remove(k);
        }
    }
    let mut spatial = h.spatial.clone();
    for a in &sub.spatial {
        if let Some(k) = spatial.iter().position(|b| b == a) {
            spatial.remove(k);
        }
    }
    SymHeap::new(pure, spatial)
}

fn without_prog(h: &SymHeap) -> SymHeap {
    SymHeap::new(h.pure.iter().filter(|p| !p.vars().iter().any(Var::is_prog)).cloned().collect(), h.spatial.clone())
}

pub fn partition(f: &Function, s1: &FirstIteration) -> Partition {
    let mut ctx = HeapCtx::of(&s1.curr);
    let mut changed = BTreeSet::new();
    let mut unchanged = BTreeSet::new();
    for x in &f.params {
        if ctx.proves_eq(&Expr::Var(prog(x)), &Expr::Var(anchor(x))) {
            unchanged.insert(x.clone());
        } else {
            changed.insert(x.clone());
        }
    }
    let seed: BTreeSet<Var> = unchanged.iter().map(anchor).collect();
    let constant = without_prog(&restrict(&s1.curr, &seed));
    let transf_pre = minus(&s1.pre, &constant);
    let transf_curr = minus(&without_prog(&s1.curr), &constant);
    Partition { changed, unchanged, constant, transf_pre, transf_curr }
}

/// The extrapolated segment shape and the variables it is read off.
#[derive(Clone, Debug)]
pub struct Shapes {
    pub block: Arc<Block>,
    pub traversal: Name,
    /// Where the traversal variable points after one iteration.
    pub step: Var,
    pub exit: Expr,
}

impl Shapes {
    pub fn seg(&self, head: Var, tail: impl Into<Expr>) -> Spatial {
        Spatial::seg(self.block.clone(), head, tail)
    }
}

pub fn shape_extrapolate(
    part: &Partition,
    s1: &FirstIteration,
    exits: &[ExitConjunct],
    blocks: &mut BlockTable,
    fresh: &mut Fresh,
) -> Result<Shapes, Fail> {
    if part.transf_pre.spatial != part.transf_curr.spatial {
        return Err((
            Stage::SpatialChange,
            format!(
                "the body changes the heap: {} becomes {}",
                part.transf_pre.render_spatial(),
                part.transf_curr.render_spatial()
            ),
        ));
    }
    let mut transf: BTreeMap<Name, Expr> = BTreeMap::new();
    for x in &part.changed {
        match binding(&s1.curr, &prog(x)) {
            Some(e) => {
                transf.insert(x.clone(), e);
            }
            None => return Err((Stage::TransfMap, format!("no value for {x} after one iteration"))),
        }
    }
    let traversal: Vec<&Name> =
        part.changed.iter().filter(|x| part.transf_pre.spatial.iter().any(|a| *a.source() == anchor(x))).collect();
    let [x] = traversal[..] else {
        let names: Vec<String> = traversal.iter().map(|n| n.to_string()).collect();
        return Err((Stage::Abstraction, format!("expected one traversal variable, found [{}]", names.join(", "))));
    };
    let Some(Expr::Var(step)) = transf.get(x).cloned().filter(|e| e.as_var().is_some_and(Var::is_plain_logical)) else {
        return Err((Stage::TransfMap, format!("{x} does not move to a fresh location")));
    };
    if let Some(c) = exits.iter().find(|c| &c.var != x) {
        return Err((Stage::Abstraction, format!("loop condition constrains {}, which is not traversed", c.var)));
    }
    let exit = exits[0].target_expr();
    let head = anchor(x);
    let reach = reach_set(&part.transf_pre, &[head.clone()].into());
    if let Some(a) = part.transf_pre.spatial.iter().find(|a| !reach.contains(a.source())) {
        return Err((Stage::Abstraction, format!("{a} is not reachable from {head}")));
    }
    if !part.transf_pre.spatial.iter().any(|a| a.mentions(&step)) {
        return Err((Stage::Abstraction, format!("{step} is not reached by the footprint")));
    }
    let map: BTreeMap<Var, Expr> = [
        (head.clone(), Expr::Var(crate::seplogic::BLOCK_HEAD)),
        (step.clone(), Expr::Var(crate::seplogic::BLOCK_TAIL)),
    ]
    .into();
    let atoms: Vec<Spatial> = part.transf_pre.spatial.iter().map(|a| a.subst(&map)).collect();
    let block = blocks.register(atoms);
    if block.depth() > 2 {
        return Err((Stage::Abstraction, "iterated blocks nest deeper than two levels".into()));
    }
    // two consecutive copies of the footprint must fold into one segment
    let t1 = fresh.var();
    let t2 = fresh.var();
    let mut next = || fresh.var();
    let (mut atoms, _) = block.instantiate(&head, &Expr::Var(t1.clone()), &mut next);
    let (latest, _) = block.instantiate(&t1, &Expr::Var(t2.clone()), &mut next);
    atoms.extend(latest);
    let theta = abstract_alpha_blocks(&SymHeap::from_spatial(atoms), std::slice::from_ref(&block), true);
    let expected = Spatial::seg(block.clone(), head.clone(), Expr::Var(t2));
    if theta.spatial != [expected] {
        return Err((
            Stage::Abstraction,
            format!("abstraction gives {} instead of a single segment", theta.render_spatial()),
        ));
    }
    Ok(Shapes { block, traversal: x.clone(), step, exit })
}

fn prove(lhs: &SymHeap, rhs: &SymHeap) -> bool {
    let e = entails_with(lhs, rhs, &BTreeSet::new());
    e.proved && e.frame.spatial.is_empty()
}

/// A segment whose ends are provably equal is empty.
fn empty_by_lemma(h: &SymHeap) -> bool {
    let mut ctx = HeapCtx::of(h);
    h.spatial.iter().all(|a| match a {
        Spatial::Seg { head, tail, .. } => ctx.proves_eq(&Expr::Var(head.clone()), tail),
        Spatial::PointsTo { .. } => false,
    })
}

fn emptiness(cond: u8, lhs: SymHeap) -> Result<Certificate, Fail> {
    let method = if prove(&lhs, &SymHeap::emp()) {
        "entailment"
    } else if empty_by_lemma(&lhs) {
        "empty-segment lemma"
    } else {
        return Err((Stage::ConditionCheck, format!("condition ({cond}) not proved: {lhs} |- emp")));
    };
    Ok(Certificate { condition: cond, lhs: lhs.to_string(), rhs: "emp".into(), method: method.into() })
}

/// Conditions (1)-(3) on the extrapolated shape, each with its proof.
pub fn check_conditions(part: &Partition, sh: &Shapes) -> Result<Vec<Certificate>, Fail> {
    let head = anchor(&sh.traversal);
    let step = sh.step.clone();
    let rest = SymHeap::from_spatial(vec![sh.seg(step.clone(), sh.exit.clone())]);
    let rhs = SymHeap::from_spatial(vec![
        sh.seg(head.clone(), Expr::Var(step.clone())),
        sh.seg(step.clone(), sh.exit.clone()),
    ]);
    let mut certs = Vec::new();
    for side in [&part.transf_pre, &part.transf_curr] {
        let lhs = side.star(&rest);
        if !prove(&lhs, &rhs) {
            return Err((Stage::ConditionCheck, format!("condition (1) not proved: {lhs} |- {rhs}")));
        }
        certs.push(Certificate {
            condition: 1,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
            method: "entailment".into(),
        });
    }
    let at_exit = SymHeap::new(
        vec![Pure::eq(Expr::Var(step.clone()), sh.exit.clone())],
        vec![sh.seg(step.clone(), sh.exit.clone())],
    );
    certs.push(emptiness(2, at_exit)?);
    let at_start = SymHeap::new(
        vec![Pure::eq(Expr::Var(head.clone()), Expr::Var(step.clone()))],
        vec![sh.seg(head, Expr::Var(step))],
    );
    certs.push(emptiness(3, at_start)?);
    Ok(certs)
}

/// The loop invariant as a (pre, curr) pair.
pub fn build_invariant(f: &Function, part: &Partition, sh: &Shapes, fresh: &mut Fresh) -> (SymHeap, SymHeap) {
    let v = fresh.var();
    let head = anchor(&sh.traversal);
    let spatial: Vec<Spatial> = part
        .constant
        .spatial
        .iter()
        .cloned()
        .chain([sh.seg(head, Expr::Var(v.clone())), sh.seg(v.clone(), sh.exit.clone())])
        .collect();
    let pre = SymHeap::new(part.constant.pure.clone(), spatial.clone());
    let mut pure = part.constant.pure.clone();
    for x in &f.params {
        let val = if part.unchanged.contains(x) {
            Expr::Var(anchor(x))
        } else if *x == sh.traversal {
            Expr::Var(v.clone())
        } else {
            fresh.expr()
        };
        pure.push(Pure::eq(Expr::Var(prog(x)), val));
    }
    let curr = normalize(&SymHeap::new(pure, spatial), fresh).0;
    (pre, curr)
}

/// Re-run the body from the invariant without learning; every resulting
/// state must entail the invariant again.
pub fn verification_iteration(
    prog_: &Program,
    f: &Function,
    summaries: &Summaries,
    opts: Options,
    inv: &(SymHeap, SymHeap),
    fresh: &mut Fresh,
) -> Result<(), Fail> {
    let mut eng = Engine::new(prog_, summaries, opts);
    eng.fresh = fresh.clone();
    let region = Region::loop_body(f);
    let world = World::new(0, inv.0.clone(), region.start, inv.1.clone());
    let run = eng.run(f, &region, vec![world], RunMode::CHECK);
    *fresh = eng.fresh.clone();
    if let Some(msg) = run.aborted {
        return Err((Stage::Verification, msg));
    }
    if let Some(msg) = run.failed.first() {
        return Err((Stage::Verification, msg.clone()));
    }
    let keep: BTreeSet<Var> = f.params.iter().map(prog).collect();
    for w in &run.worlds {
        for p in w.posts_at(region.end) {
            let q = project(&p.curr, &keep);
            // the invariant's logicals are existential here, so keep them apart from q's
            let mut apart = Fresh::above(&q.star(&inv.1));
            let rename: BTreeMap<Var, Var> = inv.1.plain_logicals().into_iter().map(|v| (v, apart.var())).collect();
            let target = inv.1.rename(&rename);
            let ex: BTreeSet<Var> = rename.values().cloned().collect();
            let e = entails_with(&q, &target, &ex);
            if !(e.proved && e.frame.spatial.is_empty()) {
                return Err((Stage::Verification, format!("{q} does not re-establish the invariant {}", inv.1)));
            }
        }
    }
    Ok(())
}

fn stage_fail(s: FunctionSummary, (stage, msg): Fail) -> FunctionSummary {
    s.fail(Some(stage), msg)
}

/// Full analysis of one loop function.
pub fn analyze_loop(
    prog_: &Program,
    f: &Function,
    summaries: &Summaries,
    blocks: &mut BlockTable,
    opts: Options,
) -> FunctionSummary {
    let mut s = FunctionSummary::new(f);
    let exits = match exit_condition(f) {
        Ok(e) => e,
        Err(e) => return stage_fail(s, e),
    };
    // first iteration
    let mut eng = Engine::new(prog_, summaries, opts);
    let init = initial_state(f, &mut eng.fresh);
    let region = Region::loop_body(f);
    let run = eng.run(f, &region, vec![World::new(0, SymHeap::emp(), region.start, init)], RunMode::ANALYSIS);
    let mut fresh = eng.fresh.clone();
    s.trace = run.trace.clone();
    s.diagnostics.extend(run.notes.iter().cloned());
    s.diagnostics.extend(run.failed.iter().cloned());
    let mut iterations = 1;
    if let Some(msg) = run.aborted {
        return s.fail(Some(Stage::FirstIteration), msg);
    }
    let ends: Vec<(&World, Vec<&SymHeap>)> = run
        .worlds
        .iter()
        .map(|w| (w, w.posts_at(region.end).map(|p| &p.curr).collect::<Vec<_>>()))
        .filter(|(_, ps)| !ps.is_empty())
        .collect();
    let s1 = match &ends[..] {
        [(w, ps)] if ps.len() == 1 => {
            let keep: BTreeSet<Var> = f.params.iter().map(prog).collect();
            FirstIteration { pre: w.pre.clone(), curr: project(ps[0], &keep) }
        }
        [] => {
            let why = run.failed.first().cloned().unwrap_or_else(|| "the body never completes".into());
            return s.fail(Some(Stage::FirstIteration), why);
        }
        _ => {
            return s.fail(
                Some(Stage::FirstIteration),
                format!("one iteration yields {} worlds; a single path through the body is required", ends.len()),
            )
        }
    };
    let part = partition(f, &s1);
    let shapes = match shape_extrapolate(&part, &s1, &exits, blocks, &mut fresh) {
        Ok(sh) => sh,
        Err(e) => return stage_fail(s, e),
    };
    match check_conditions(&part, &shapes) {
        Ok(c) => s.certificates = c,
        Err(e) => return stage_fail(s, e),
    }
    let inv = build_invariant(f, &part, &shapes, &mut fresh);
    if opts.fault != Some(Fault::SkipVerification) {
        iterations += 1;
        if let Err(e) = verification_iteration(prog_, f, summaries, opts, &inv, &mut fresh) {
            s.iterations = Some(iterations);
            return stage_fail(s, e);
        }
    }
    s.iterations = Some(iterations);
    s.invariant = Some(Contract { pre: inv.0.clone(), posts: vec![inv.1.clone()] });

    // final states
    let head = anchor(&shapes.traversal);
    let outputs: BTreeSet<Var> = f.outputs.iter().map(prog).collect();
    let mut spatial = part.constant.spatial.clone();
    spatial.push(shapes.seg(head, shapes.exit.clone()));
    let pre = SymHeap::new(part.constant.pure.clone(), spatial.clone());
    let mut pure = part.constant.pure.clone();
    for x in &f.params {
        let val = if part.unchanged.contains(x) {
            Expr::Var(anchor(x))
        } else if *x == shapes.traversal {
            shapes.exit.clone()
        } else {
            fresh.expr()
        };
        pure.push(Pure::eq(Expr::Var(prog(x)), val));
    }
    let post = project(&normalize(&SymHeap::new(pure, spatial), &mut fresh).0, &outputs);
    let merged = Contract { pre: pre.clone(), posts: vec![post.clone()] };
    let entry: Vec<Pure> =
        exits.iter().map(|c| Pure::new(Cmp::Ne, Expr::Var(anchor(&c.var)), c.target_expr())).collect();
    let entered = Contract {
        pre: SymHeap::new(pre.pure.iter().cloned().chain(entry.iter().cloned()).collect(), pre.spatial.clone()),
        posts: vec![SymHeap::new(
            post.pure.iter().cloned().chain(entry.iter().cloned()).collect(),
            post.spatial.clone(),
        )],
    };
    let mut contracts = Vec::new();
    if heap_sat(&entered.pre) != Verdict::Unsat {
        contracts.push(simplify_contract(&entered));
    }
    // never entered: the k-th conjunct is the first to fail
    for k in 0..entry.len() {
        let mut guard: Vec<Pure> = entry[..k].to_vec();
        guard.push(entry[k].negate());
        let pre = SymHeap::from_pure(guard.clone());
        if heap_sat(&pre) == Verdict::Unsat {
            continue;
        }
        let mut post = guard;
        for o in &f.outputs {
            post.push(Pure::eq(Expr::Var(prog(o)), Expr::Var(anchor(o))));
        }
        contracts.push(simplify_contract(&Contract { pre, posts: vec![SymHeap::from_pure(post)] }));
    }
    s.call_contracts = vec![simplify_contract(&merged)];
    s.contracts = contracts;
    s.status = Status::Analyzed;
    s
}
