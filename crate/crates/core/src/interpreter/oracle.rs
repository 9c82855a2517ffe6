//! Checks inferred contracts by running functions on concrete models of
//! their preconditions.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Interpreter, Limits};
use crate::biabduction::Contract;
use crate::frontend::{FnKind, Program, RETURN};
use crate::memory::{Config, Val};
use crate::seplogic::{enumerate_models, models, name, Bounds, SymHeap, Var};

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    /// Pre models run per contract.
    pub samples: usize,
    pub max_cells: usize,
    pub value_range: i64,
    pub loop_bound: usize,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { samples: 64, max_cells: 6, value_range: 2, loop_bound: 8, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub function: String,
    pub contract: usize,
    pub model: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SoundnessReport {
    pub function: String,
    pub contracts: usize,
    pub runs: usize,
    /// Contracts whose precondition had no model within the bounds.
    pub vacuous: usize,
    /// Runs cut short by the loop or step bound.
    pub inconclusive: usize,
    pub violations: Vec<Violation>,
}

impl SoundnessReport {
    pub fn sound(&self) -> bool {
        self.violations.is_empty()
    }
}

fn show(c: &Config) -> String {
    let stack: Vec<String> = c.stack.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let heap: Vec<String> = c.heap.iter().map(|((l, f), v)| format!("#{l}.{f}={v}")).collect();
    format!("[{}] {{{}}}", stack.join(", "), heap.join(", "))
}

/// Run `fname` from sampled models of each contract's precondition and
/// check every final state against the posts.
pub fn check_contract(prog: &Program, fname: &str, contracts: &[Contract], opts: &OracleOptions) -> SoundnessReport {
    let mut rep = SoundnessReport { function: fname.to_string(), contracts: contracts.len(), ..Default::default() };
    let Some(f) = prog.get(fname) else {
        rep.violations.push(Violation {
            function: fname.to_string(),
            contract: 0,
            model: String::new(),
            reason: "unknown function".into(),
        });
        return rep;
    };
    let anchors: Vec<Var> = f.params.iter().map(|p| Var::Anchor(p.clone())).collect();
    let outputs: Vec<Var> = match f.kind {
        FnKind::Surface => vec![Var::Prog(name(RETURN))],
        FnKind::Loop => f.outputs.iter().map(|o| Var::Prog(o.clone())).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let limits = Limits { loop_bound: opts.loop_bound, ..Limits::default() };
    for (k, c) in contracts.iter().enumerate() {
        let mut ms =
            enumerate_models(&c.pre, Bounds { max_cells: opts.max_cells, value_range: opts.value_range }, &anchors);
        if ms.is_empty() {
            rep.vacuous += 1;
            continue;
        }
        ms.shuffle(&mut rng);
        ms.truncate(opts.samples);
        for m in ms {
            rep.runs += 1;
            let args: Vec<Val> = anchors.iter().map(|a| m.stack.get(a).copied().unwrap_or(Val::Null)).collect();
            let mut it = Interpreter::new(prog, limits);
            let init = Interpreter::frame(f, &args, m.heap.clone());
            let r = it.run(f, init);
            if r.bound_hit {
                rep.inconclusive += 1;
            }
            if let Some(e) = r.err {
                rep.violations.push(Violation { function: fname.to_string(), contract: k, model: show(&m), reason: e });
                continue;
            }
            for fin in &r.finals {
                let mut stack: BTreeMap<Var, Val> = BTreeMap::new();
                for o in &outputs {
                    stack.insert(o.clone(), fin.stack.get(o).copied().unwrap_or(Val::Null));
                }
                for a in &anchors {
                    if let Some(v) = m.stack.get(a) {
                        stack.insert(a.clone(), *v);
                    }
                }
                let view = Config { stack, heap: fin.heap.clone() };
                if !c.posts.iter().any(|q| models(&view, q)) {
                    rep.violations.push(Violation {
                        function: fname.to_string(),
                        contract: k,
                        model: show(&m),
                        reason: format!("final state {} satisfies no post", show(&view)),
                    });
                    break;
                }
            }
        }
    }
    rep
}

/// One report per function that has contracts, in program order.
pub fn check_program(
    prog: &Program,
    contracts: &BTreeMap<String, Vec<Contract>>,
    opts: &OracleOptions,
) -> Vec<SoundnessReport> {
    let known: BTreeSet<&String> = contracts.keys().collect();
    prog.order
        .iter()
        .filter(|f| known.contains(&f.to_string()))
        .map(|f| check_contract(prog, f, &contracts[&f.to_string()], opts))
        .collect()
}

/// Run one pass of a loop body from bounded models of its invariant and
/// check that every state reaching the head again is still a model.
/// Anchors keep their values across the pass; logicals are re-chosen.
pub fn check_inductive(prog: &Program, fname: &str, inv: &SymHeap, opts: &OracleOptions) -> SoundnessReport {
    let mut rep = SoundnessReport { function: fname.to_string(), contracts: 1, ..Default::default() };
    let Some(f) = prog.get(fname) else {
        rep.violations.push(Violation {
            function: fname.to_string(),
            contract: 0,
            model: String::new(),
            reason: "unknown function".into(),
        });
        return rep;
    };
    let anchors: Vec<Var> = f.params.iter().map(|p| Var::Anchor(p.clone())).collect();
    let vars: Vec<Var> = f.params.iter().map(|p| Var::Prog(p.clone())).collect();
    let mut ms = enumerate_models(inv, Bounds { max_cells: opts.max_cells, value_range: opts.value_range }, &anchors);
    if ms.is_empty() {
        rep.vacuous = 1;
        return rep;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    ms.shuffle(&mut rng);
    ms.truncate(opts.samples);
    let limits = Limits { loop_bound: opts.loop_bound, ..Limits::default() };
    for m in ms {
        rep.runs += 1;
        let mut init = Interpreter::frame(f, &[], m.heap.clone());
        for x in &vars {
            init.stack.insert(x.clone(), m.stack.get(x).copied().unwrap_or(Val::Null));
        }
        let pass = Interpreter::new(prog, limits).body_pass(f, init);
        if let Some(e) = pass.err {
            rep.violations.push(Violation { function: fname.to_string(), contract: 0, model: show(&m), reason: e });
            continue;
        }
        for c in &pass.repeated {
            let mut stack: BTreeMap<Var, Val> = BTreeMap::new();
            for x in &vars {
                stack.insert(x.clone(), c.stack.get(x).copied().unwrap_or(Val::Null));
            }
            for a in &anchors {
                if let Some(v) = m.stack.get(a) {
                    stack.insert(a.clone(), *v);
                }
            }
            let view = Config { stack, heap: c.heap.clone() };
            if !models(&view, inv) {
                rep.violations.push(Violation {
                    function: fname.to_string(),
                    contract: 0,
                    model: show(&m),
                    reason: format!("after one pass {} no longer satisfies the invariant", show(&view)),
                });
                break;
            }
        }
    }
    rep
}
