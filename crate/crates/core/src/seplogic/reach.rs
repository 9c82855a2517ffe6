//! Variable reachability through a formula and the restriction to a seed.

use std::collections::BTreeSet;

use super::formula::SymHeap;
use super::term::{Cmp, Var};

/// Least set containing `seed`, closed under: the source of a spatial atom
/// reaches the variables of its target; an equality whose one side is fully
/// reached (and mentions some variable) reaches the other side.
pub fn reach_set(h: &SymHeap, seed: &BTreeSet<Var>) -> BTreeSet<Var> {
    let mut out = seed.clone();
    loop {
        let before = out.len();
        for a in &h.spatial {
            if out.contains(a.source()) {
                a.target().collect_vars(&mut out);
            }
        }
        for p in &h.pure {
            if p.op != Cmp::Eq {
                continue;
            }
            let l = p.lhs.vars();
            let r = p.rhs.vars();
            if !l.is_empty() && l.is_subset(&out) {
                out.extend(r.iter().cloned());
            }
            if !r.is_empty() && r.is_subset(&out) {
                out.extend(l);
            }
        }
        if out.len() == before {
            return out;
        }
    }
}

/// The atoms of `h` all of whose variables are reachable from `seed`.
pub fn restrict(h: &SymHeap, seed: &BTreeSet<Var>) -> SymHeap {
    if seed.is_empty() {
        return SymHeap::emp();
    }
    let r = reach_set(h, seed);
    let pure = h.pure.iter().filter(|p| p.vars().is_subset(&r)).cloned().collect();
    let spatial = h.spatial.iter().filter(|a| a.vars().is_subset(&r)).cloned().collect();
    SymHeap::new(pure, spatial)
}
