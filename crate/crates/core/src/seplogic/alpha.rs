//! Abstraction: fuse chains of block instances and segments through hidden
//! intermediate variables.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::formula::{Block, Spatial, SymHeap, BLOCK_HEAD, BLOCK_TAIL};
use super::heapctx::HeapCtx;
use super::term::{Expr, Var};

/// A piece of a chain: either an existing segment atom or a set of atoms
/// forming one block instance.
#[derive(Clone, Debug)]
struct Link {
    atoms: Vec<usize>,
    head: Var,
    tail: Expr,
    is_seg: bool,
    internals: Vec<Var>,
}

/// Sound abstraction over list segments only.
pub fn abstract_alpha(h: &SymHeap) -> SymHeap {
    abstract_alpha_blocks(h, &[Block::list()], false)
}

/// Fuse consecutive links of any of `blocks`. With `guess` set the side
/// conditions that keep the fusion sound are skipped; callers must then
/// certify the result themselves.
pub fn abstract_alpha_blocks(h: &SymHeap, blocks: &[Arc<Block>], guess: bool) -> SymHeap {
    let mut cur = h.clone();
    let mut rounds = 0;
    while rounds < 64 {
        rounds += 1;
        let mut fused = None;
        'outer: for b in blocks {
            let links = find_links(&cur, b);
            for l1 in &links {
                let Expr::Var(mid) = &l1.tail else { continue };
                if !mid.is_plain_logical() || *mid == l1.head {
                    continue;
                }
                for l2 in links.iter().filter(|l| l.head == *mid) {
                    if l1.atoms.iter().any(|a| l2.atoms.contains(a)) {
                        continue;
                    }
                    if !hidden(&cur, mid, l1, l2) {
                        continue;
                    }
                    if !guess && !side_ok(&cur, b, l1, l2) {
                        continue;
                    }
                    fused = Some(fuse(&cur, b, l1, l2));
                    break 'outer;
                }
            }
        }
        match fused {
            Some(n) => cur = n,
            None => break,
        }
    }
    cur
}

/// `mid` and the internals of both links appear nowhere else in the spatial
/// part. Pure atoms mentioning them are dropped by the fusion.
fn hidden(h: &SymHeap, mid: &Var, l1: &Link, l2: &Link) -> bool {
    let mine: BTreeSet<usize> = l1.atoms.iter().chain(&l2.atoms).copied().collect();
    let mut watch: Vec<&Var> = vec![mid];
    watch.extend(l1.internals.iter());
    watch.extend(l2.internals.iter());
    for (i, a) in h.spatial.iter().enumerate() {
        if mine.contains(&i) {
            continue;
        }
        if watch.iter().any(|v| a.mentions(v)) {
            return false;
        }
    }
    // mid must not feed the tail of the fused link
    !l2.tail.mentions(mid) && !l2.internals.iter().any(|v| l2.tail.mentions(v))
}

/// Every unfolding step of the fused segment needs its head distinct from
/// the final tail.
fn side_ok(h: &SymHeap, b: &Arc<Block>, l1: &Link, l2: &Link) -> bool {
    let mut ctx = HeapCtx::of(h);
    let t = &l2.tail;
    let fields = b.head_fields();
    let mine: Vec<usize> = l1.atoms.iter().chain(&l2.atoms).copied().collect();
    let first_ok = if l1.is_seg {
        let head = Expr::Var(l1.head.clone());
        ctx.outside_cells(t, &fields, &mine, Some((&head, &l1.tail)))
    } else {
        ctx.proves_ne(&Expr::Var(l1.head.clone()), t)
    };
    let second_ok = l2.is_seg || ctx.proves_ne(&Expr::Var(l2.head.clone()), t);
    first_ok && second_ok
}

fn fuse(h: &SymHeap, b: &Arc<Block>, l1: &Link, l2: &Link) -> SymHeap {
    let mine: BTreeSet<usize> = l1.atoms.iter().chain(&l2.atoms).copied().collect();
    let Expr::Var(mid) = &l1.tail else { unreachable!() };
    let mut gone: Vec<&Var> = vec![mid];
    gone.extend(l1.internals.iter());
    gone.extend(l2.internals.iter());
    let mut spatial: Vec<Spatial> =
        h.spatial.iter().enumerate().filter(|(i, _)| !mine.contains(i)).map(|(_, a)| a.clone()).collect();
    spatial.push(Spatial::Seg { block: b.clone(), head: l1.head.clone(), tail: l2.tail.clone() });
    let pure = h.pure.iter().filter(|p| !gone.iter().any(|v| p.mentions(v))).cloned().collect();
    SymHeap::new(pure, spatial)
}

/// All segment atoms of `b` and all syntactic instances of `b` in `h`.
fn find_links(h: &SymHeap, b: &Arc<Block>) -> Vec<Link> {
    let mut out = Vec::new();
    for (i, a) in h.spatial.iter().enumerate() {
        match a {
            Spatial::Seg { block, head, tail } if block == b => out.push(Link {
                atoms: vec![i],
                head: head.clone(),
                tail: tail.clone(),
                is_seg: true,
                internals: vec![],
            }),
            _ => {}
        }
    }
    let heads: BTreeSet<Var> = h.spatial.iter().map(|a| a.source().clone()).collect();
    for head in heads {
        let mut m = Matcher { h, block: b, found: Vec::new() };
        let mut bind = BTreeMap::new();
        bind.insert(BLOCK_HEAD, Expr::Var(head.clone()));
        m.go(0, bind, Vec::new());
        for (atoms, bind) in m.found {
            let Some(tail) = bind.get(&BLOCK_TAIL).cloned() else { continue };
            let mut internals = Vec::new();
            let mut ok = true;
            for v in b.internals() {
                match bind.get(&v) {
                    Some(Expr::Var(w)) if w.is_plain_logical() && *w != head && !internals.contains(w) => {
                        internals.push(w.clone())
                    }
                    _ => ok = false,
                }
            }
            if ok {
                out.push(Link { atoms, head: head.clone(), tail, is_seg: false, internals });
            }
        }
    }
    out
}

struct Matcher<'a> {
    h: &'a SymHeap,
    block: &'a Block,
    found: Vec<(Vec<usize>, BTreeMap<Var, Expr>)>,
}

impl Matcher<'_> {
    fn go(&mut self, k: usize, bind: BTreeMap<Var, Expr>, used: Vec<usize>) {
        if self.found.len() > 8 {
            return;
        }
        let Some(pat) = self.block.atoms.get(k) else {
            self.found.push((used, bind));
            return;
        };
        for (i, a) in self.h.spatial.iter().enumerate() {
            if used.contains(&i) {
                continue;
            }
            let mut b2 = bind.clone();
            if match_atom(pat, a, &mut b2) {
                let mut u2 = used.clone();
                u2.push(i);
                self.go(k + 1, b2, u2);
            }
        }
    }
}

fn match_atom(pat: &Spatial, a: &Spatial, bind: &mut BTreeMap<Var, Expr>) -> bool {
    match (pat, a) {
        (Spatial::PointsTo { src: ps, field: pf, val: pv }, Spatial::PointsTo { src, field, val }) => {
            pf == field && match_var(ps, &Expr::Var(src.clone()), bind) && match_expr(pv, val, bind)
        }
        (Spatial::Seg { block: pb, head: ph, tail: pt }, Spatial::Seg { block, head, tail }) => {
            pb == block && match_var(ph, &Expr::Var(head.clone()), bind) && match_expr(pt, tail, bind)
        }
        _ => false,
    }
}

fn match_var(p: &Var, e: &Expr, bind: &mut BTreeMap<Var, Expr>) -> bool {
    match bind.get(p) {
        Some(x) => x == e,
        None => {
            // distinct pattern variables bind distinct terms
            if bind.values().any(|x| x == e) {
                return false;
            }
            bind.insert(p.clone(), e.clone());
            true
        }
    }
}

fn match_expr(p: &Expr, e: &Expr, bind: &mut BTreeMap<Var, Expr>) -> bool {
    match (p, e) {
        (Expr::Var(v), _) => match_var(v, e, bind),
        (Expr::Null, Expr::Null) => true,
        (Expr::Num(a), Expr::Num(b)) => a == b,
        (Expr::Un(o1, a), Expr::Un(o2, b)) => o1 == o2 && match_expr(a, b, bind),
        (Expr::Bin(o1, a1, b1), Expr::Bin(o2, a2, b2)) => {
            o1 == o2 && match_expr(a1, a2, bind) && match_expr(b1, b2, bind)
        }
        _ => false,
    }
}
