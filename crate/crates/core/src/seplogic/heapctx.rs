//! Pure facts implied by the spatial part, split on segments whose emptiness
//! is not determined. A fact is provable when it holds in every case.

use std::collections::BTreeSet;

use super::formula::{Spatial, SymHeap};
use super::pure::{pure_sat_with, PureCtx, Verdict};
use super::term::{Expr, Name, Pure, Var};

/// Beyond this many undetermined segments the remaining ones are left unsplit.
pub const MAX_SPLIT: usize = 6;

#[derive(Clone, Debug)]
pub struct Alloc {
    pub src: Expr,
    pub field: Name,
    pub atom: usize,
}

#[derive(Clone, Debug)]
pub struct Case {
    pub ctx: PureCtx,
    pub facts: Vec<Pure>,
    pub allocs: Vec<Alloc>,
}

#[derive(Clone, Debug)]
pub struct HeapCtx {
    pub cases: Vec<Case>,
}

fn seg_allocs(i: usize, block_fields: &BTreeSet<Name>, head: &Var) -> Vec<Alloc> {
    block_fields.iter().map(|f| Alloc { src: Expr::Var(head.clone()), field: f.clone(), atom: i }).collect()
}

impl HeapCtx {
    pub fn of(h: &SymHeap) -> HeapCtx {
        HeapCtx::build(&h.pure, &h.spatial)
    }

    pub fn build(pure: &[Pure], spatial: &[Spatial]) -> HeapCtx {
        let mut facts: Vec<Pure> = pure.to_vec();
        let mut allocs: Vec<Alloc> = Vec::new();
        for (i, a) in spatial.iter().enumerate() {
            if let Spatial::PointsTo { src, field, .. } = a {
                allocs.push(Alloc { src: Expr::Var(src.clone()), field: field.clone(), atom: i });
            }
        }
        let mut base = PureCtx::from_atoms(&facts);
        add_alloc_facts(&mut base, &mut facts, &allocs);

        // settle segments whose emptiness follows from what we know
        let segs: Vec<(usize, Var, Expr, BTreeSet<Name>)> = spatial
            .iter()
            .enumerate()
            .filter_map(|(i, a)| match a {
                Spatial::Seg { block, head, tail } => Some((i, head.clone(), tail.clone(), block.head_fields())),
                _ => None,
            })
            .collect();
        let mut decided: Vec<Option<bool>> = vec![None; segs.len()];
        loop {
            let mut changed = false;
            for (k, (i, head, tail, fields)) in segs.iter().enumerate() {
                if decided[k].is_some() {
                    continue;
                }
                let h = Expr::Var(head.clone());
                if base.proves_eq(&h, tail) {
                    decided[k] = Some(false);
                    changed = true;
                } else if base.proves_ne(&h, tail) {
                    decided[k] = Some(true);
                    allocs.extend(seg_allocs(*i, fields, head));
                    add_alloc_facts(&mut base, &mut facts, &allocs);
                    changed = true;
                }
            }
            if !changed || base.is_unsat() {
                break;
            }
        }
        if base.is_unsat() {
            return HeapCtx { cases: vec![] };
        }
        let open: Vec<usize> = (0..segs.len()).filter(|&k| decided[k].is_none()).take(MAX_SPLIT).collect();
        let mut cases = Vec::new();
        for mask in 0u32..(1u32 << open.len()) {
            let mut ctx = base.clone();
            let mut f = facts.clone();
            let mut al = allocs.clone();
            for (bit, &k) in open.iter().enumerate() {
                let (i, head, tail, fields) = &segs[k];
                let h = Expr::Var(head.clone());
                if mask & (1 << bit) != 0 {
                    let p = Pure::ne(h.clone(), tail.clone());
                    ctx.assume(&p);
                    f.push(p);
                    al.extend(seg_allocs(*i, fields, head));
                } else {
                    let p = Pure::eq(h.clone(), tail.clone());
                    ctx.assume(&p);
                    f.push(p);
                }
            }
            add_alloc_facts(&mut ctx, &mut f, &al);
            if !ctx.is_unsat() {
                cases.push(Case { ctx, facts: f, allocs: al });
            }
        }
        HeapCtx { cases }
    }

    pub fn is_unsat(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn proves(&mut self, p: &Pure) -> bool {
        self.cases.iter_mut().all(|c| c.ctx.proves(p))
    }

    pub fn proves_eq(&mut self, a: &Expr, b: &Expr) -> bool {
        a == b || self.cases.iter_mut().all(|c| c.ctx.proves_eq(a, b))
    }

    pub fn proves_ne(&mut self, a: &Expr, b: &Expr) -> bool {
        self.cases.iter_mut().all(|c| c.ctx.proves_ne(a, b))
    }

    /// Add a fact to every case, dropping cases it refutes.
    pub fn assume(&mut self, p: &Pure) {
        for c in &mut self.cases {
            c.ctx.assume(p);
            c.facts.push(p.clone());
        }
        self.cases.retain_mut(|c| !c.ctx.is_unsat());
    }

    /// In every case, `t` is NULL or allocated on one of `fields` by an atom
    /// outside `exclude`, or the guard pair is equal (the piece is empty).
    pub fn outside_cells(
        &mut self,
        t: &Expr,
        fields: &BTreeSet<Name>,
        exclude: &[usize],
        empty_if: Option<(&Expr, &Expr)>,
    ) -> bool {
        self.cases.iter_mut().all(|c| {
            if c.ctx.proves_eq(t, &Expr::Null) {
                return true;
            }
            if let Some((h, d)) = empty_if {
                if c.ctx.proves_eq(h, d) {
                    return true;
                }
            }
            let cands: Vec<Expr> = c
                .allocs
                .iter()
                .filter(|a| !exclude.contains(&a.atom) && fields.contains(&a.field))
                .map(|a| a.src.clone())
                .collect();
            cands.iter().any(|s| c.ctx.proves_eq(s, t))
        })
    }
}

fn add_alloc_facts(ctx: &mut PureCtx, facts: &mut Vec<Pure>, allocs: &[Alloc]) {
    for (k, a) in allocs.iter().enumerate() {
        ctx.assume_alloc(&a.src);
        let nn = Pure::ne(a.src.clone(), Expr::Null);
        if !facts.contains(&nn) {
            ctx.assume(&nn);
            facts.push(nn);
        }
        for b in &allocs[k + 1..] {
            if a.field == b.field && a.atom != b.atom {
                let p = Pure::ne(a.src.clone(), b.src.clone());
                if !facts.contains(&p) {
                    ctx.assume(&p);
                    facts.push(p);
                }
            }
        }
    }
}

/// Satisfiability of a symbolic heap: some case must have a pure witness in
/// which every allocated source is a location.
pub fn heap_sat(h: &SymHeap) -> Verdict {
    let hc = HeapCtx::of(h);
    if hc.is_unsat() {
        return Verdict::Unsat;
    }
    let mut all_unsat = true;
    for c in &hc.cases {
        let allocated: Vec<Expr> = c.allocs.iter().map(|a| a.src.clone()).collect();
        match pure_sat_with(&c.facts, &allocated) {
            Verdict::Sat => return Verdict::Sat,
            Verdict::Unknown => all_unsat = false,
            Verdict::Unsat => {}
        }
    }
    if all_unsat {
        Verdict::Unsat
    } else {
        Verdict::Unknown
    }
}
