use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use super::term::{name, Expr, Name, Pure, Var};

/// Placeholder for the head parameter inside a block definition.
pub const BLOCK_HEAD: Var = Var::Logical(u32::MAX);
/// Placeholder for the tail parameter inside a block definition.
pub const BLOCK_TAIL: Var = Var::Logical(u32::MAX - 1);

/// One repetition unit of an iterated segment. The atoms mention `BLOCK_HEAD`,
/// `BLOCK_TAIL` and internal logicals, which are existential per instance.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Block {
    pub id: u32,
    pub atoms: Vec<Spatial>,
}

impl Block {
    /// The `h.next |-> t` block. Segments over it render as `ls`.
    pub fn list() -> Arc<Block> {
        static LIST: OnceLock<Arc<Block>> = OnceLock::new();
        LIST.get_or_init(|| {
            Arc::new(Block {
                id: 0,
                atoms: vec![Spatial::PointsTo { src: BLOCK_HEAD, field: name("next"), val: Expr::Var(BLOCK_TAIL) }],
            })
        })
        .clone()
    }

    pub fn is_list(&self) -> bool {
        self.id == 0
    }

    /// Fields allocated at the head location by one instance.
    pub fn head_fields(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for a in &self.atoms {
            match a {
                Spatial::PointsTo { src, field, .. } if *src == BLOCK_HEAD => {
                    out.insert(field.clone());
                }
                Spatial::Seg { block, head, .. } if *head == BLOCK_HEAD => {
                    out.extend(block.head_fields());
                }
                _ => {}
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        1 + self
            .atoms
            .iter()
            .filter_map(|a| match a {
                Spatial::Seg { block, .. } => Some(block.depth()),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn internals(&self) -> BTreeSet<Var> {
        let mut vs = BTreeSet::new();
        for a in &self.atoms {
            a.collect_vars(&mut vs);
        }
        vs.remove(&BLOCK_HEAD);
        vs.remove(&BLOCK_TAIL);
        vs
    }

    /// Atoms of one instance from `head` to `tail`, internals drawn from `fresh`.
    pub fn instantiate(&self, head: &Var, tail: &Expr, fresh: &mut dyn FnMut() -> Var) -> (Vec<Spatial>, Vec<Var>) {
        let mut map: BTreeMap<Var, Expr> = BTreeMap::new();
        map.insert(BLOCK_HEAD, Expr::Var(head.clone()));
        map.insert(BLOCK_TAIL, tail.clone());
        let mut internals = Vec::new();
        for v in self.internals() {
            let f = fresh();
            internals.push(f.clone());
            map.insert(v, Expr::Var(f));
        }
        let atoms = self.atoms.iter().map(|a| a.subst(&map)).collect();
        (atoms, internals)
    }

    pub fn render_def(&self) -> String {
        let body: Vec<String> = self
            .atoms
            .iter()
            .map(|a| {
                let mut map = BTreeMap::new();
                map.insert(BLOCK_HEAD, Expr::Var(Var::anchor("h")));
                map.insert(BLOCK_TAIL, Expr::Var(Var::anchor("t")));
                a.subst(&map).to_string()
            })
            .collect();
        format!("iter[{}](H,T) := {}", self.id, body.join(" * "))
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Spatial {
    PointsTo { src: Var, field: Name, val: Expr },
    Seg { block: Arc<Block>, head: Var, tail: Expr },
}

impl Spatial {
    pub fn pts(src: Var, field: &str, val: impl Into<Expr>) -> Spatial {
        Spatial::PointsTo { src, field: name(field), val: val.into() }
    }

    pub fn ls(head: Var, tail: impl Into<Expr>) -> Spatial {
        Spatial::Seg { block: Block::list(), head, tail: tail.into() }
    }

    pub fn seg(block: Arc<Block>, head: Var, tail: impl Into<Expr>) -> Spatial {
        Spatial::Seg { block, head, tail: tail.into() }
    }

    pub fn source(&self) -> &Var {
        match self {
            Spatial::PointsTo { src, .. } => src,
            Spatial::Seg { head, .. } => head,
        }
    }

    pub fn target(&self) -> &Expr {
        match self {
            Spatial::PointsTo { val, .. } => val,
            Spatial::Seg { tail, .. } => tail,
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        out.insert(self.source().clone());
        self.target().collect_vars(out);
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s
    }

    pub fn mentions(&self, v: &Var) -> bool {
        self.source() == v || self.target().mentions(v)
    }

    /// Substitution; a source is only replaced when its image is a variable.
    pub fn subst(&self, map: &BTreeMap<Var, Expr>) -> Spatial {
        let f = |v: &Var| map.get(v).cloned();
        let src_of = |v: &Var| match map.get(v) {
            Some(Expr::Var(w)) => w.clone(),
            _ => v.clone(),
        };
        match self {
            Spatial::PointsTo { src, field, val } => {
                Spatial::PointsTo { src: src_of(src), field: field.clone(), val: val.subst(&f) }
            }
            Spatial::Seg { block, head, tail } => {
                Spatial::Seg { block: block.clone(), head: src_of(head), tail: tail.subst(&f) }
            }
        }
    }
}

impl fmt::Display for Spatial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spatial::PointsTo { src, field, val } => write!(f, "{src}.{field} |-> {val}"),
            Spatial::Seg { block, head, tail } if block.is_list() => write!(f, "ls({head},{tail})"),
            Spatial::Seg { block, head, tail } => write!(f, "iter[{}]({head},{tail})", block.id),
        }
    }
}

/// `pure ; spatial`. Pure atoms form a set, spatial atoms a multiset.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct SymHeap {
    pub pure: Vec<Pure>,
    pub spatial: Vec<Spatial>,
}

impl SymHeap {
    pub fn emp() -> SymHeap {
        SymHeap::default()
    }

    pub fn new(pure: Vec<Pure>, spatial: Vec<Spatial>) -> SymHeap {
        let mut h = SymHeap { pure, spatial };
        h.canon();
        h
    }

    pub fn from_spatial(spatial: Vec<Spatial>) -> SymHeap {
        SymHeap::new(vec![], spatial)
    }

    pub fn from_pure(pure: Vec<Pure>) -> SymHeap {
        SymHeap::new(pure, vec![])
    }

    pub fn canon(&mut self) {
        self.pure.retain(|p| !p.is_trivial());
        self.pure.sort();
        self.pure.dedup();
        self.spatial.sort();
    }

    pub fn with_pure(mut self, p: Pure) -> SymHeap {
        self.pure.push(p);
        self.canon();
        self
    }

    pub fn with_spatial(mut self, s: Spatial) -> SymHeap {
        self.spatial.push(s);
        self.canon();
        self
    }

    pub fn star(&self, other: &SymHeap) -> SymHeap {
        let mut h = self.clone();
        h.pure.extend(other.pure.iter().cloned());
        h.spatial.extend(other.spatial.iter().cloned());
        h.canon();
        h
    }

    pub fn is_emp_spatial(&self) -> bool {
        self.spatial.is_empty()
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        for p in &self.pure {
            p.lhs.collect_vars(&mut s);
            p.rhs.collect_vars(&mut s);
        }
        for a in &self.spatial {
            a.collect_vars(&mut s);
        }
        s
    }

    pub fn logicals(&self) -> BTreeSet<Var> {
        self.vars().into_iter().filter(|v| v.is_logical()).collect()
    }

    pub fn plain_logicals(&self) -> BTreeSet<Var> {
        self.vars().into_iter().filter(|v| v.is_plain_logical()).collect()
    }

    pub fn prog_vars(&self) -> BTreeSet<Var> {
        self.vars().into_iter().filter(|v| v.is_prog()).collect()
    }

    pub fn max_logical(&self) -> u32 {
        self.vars()
            .iter()
            .filter_map(|v| match v {
                Var::Logical(k) if *k < BLOCK_TAIL_ID => Some(*k),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn mentions(&self, v: &Var) -> bool {
        self.pure.iter().any(|p| p.mentions(v)) || self.spatial.iter().any(|a| a.mentions(v))
    }

    pub fn subst(&self, map: &BTreeMap<Var, Expr>) -> SymHeap {
        let f = |v: &Var| map.get(v).cloned();
        SymHeap::new(
            self.pure.iter().map(|p| p.subst(&f)).collect(),
            self.spatial.iter().map(|a| a.subst(map)).collect(),
        )
    }

    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> SymHeap {
        let m: BTreeMap<Var, Expr> = map.iter().map(|(k, v)| (k.clone(), Expr::Var(v.clone()))).collect();
        self.subst(&m)
    }

    /// Replace `y` by `x`; when `y` is a program variable, conjoin `y = x` instead.
    pub fn subst_var(&self, x: &Var, y: &Var) -> SymHeap {
        if y.is_prog() {
            return self.clone().with_pure(Pure::eq(Expr::Var(y.clone()), Expr::Var(x.clone())));
        }
        let mut m = BTreeMap::new();
        m.insert(y.clone(), Expr::Var(x.clone()));
        self.subst(&m)
    }

    pub fn render_pure(&self) -> String {
        if self.pure.is_empty() {
            "true".to_string()
        } else {
            self.pure.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" /\\ ")
        }
    }

    pub fn render_spatial(&self) -> String {
        if self.spatial.is_empty() {
            "emp".to_string()
        } else {
            self.spatial.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" * ")
        }
    }
}

const BLOCK_TAIL_ID: u32 = u32::MAX - 1;

impl fmt::Display for SymHeap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ; {}", self.render_pure(), self.render_spatial())
    }
}

/// Fresh logical variables for one analysis run.
#[derive(Clone, Debug)]
pub struct Fresh {
    next: u32,
}

impl Fresh {
    pub fn new() -> Fresh {
        Fresh { next: 1 }
    }

    pub fn above(h: &SymHeap) -> Fresh {
        Fresh { next: h.max_logical() + 1 }
    }

    pub fn bump_past(&mut self, h: &SymHeap) {
        self.next = self.next.max(h.max_logical() + 1);
    }

    pub fn var(&mut self) -> Var {
        let v = Var::Logical(self.next);
        self.next += 1;
        v
    }

    pub fn expr(&mut self) -> Expr {
        Expr::Var(self.var())
    }

    pub fn peek(&self) -> u32 {
        self.next
    }
}

impl Default for Fresh {
    fn default() -> Self {
        Fresh::new()
    }
}

/// Blocks registered during one analysis run. Ids are assigned in
/// registration order so output is deterministic per run.
#[derive(Debug, Default)]
pub struct BlockTable {
    blocks: Vec<Arc<Block>>,
}

impl BlockTable {
    pub fn new() -> BlockTable {
        BlockTable { blocks: vec![] }
    }

    /// Returns the canonical block for these atoms, registering it if new.
    pub fn register(&mut self, atoms: Vec<Spatial>) -> Arc<Block> {
        let atoms = canonical_block_atoms(atoms);
        let list = Block::list();
        if atoms == list.atoms {
            return list;
        }
        if let Some(b) = self.blocks.iter().find(|b| b.atoms == atoms) {
            return b.clone();
        }
        let b = Arc::new(Block { id: self.blocks.len() as u32 + 1, atoms });
        self.blocks.push(b.clone());
        b
    }

    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }
}

/// Rename internals by order of first occurrence so structurally equal
/// blocks compare equal.
fn canonical_block_atoms(mut atoms: Vec<Spatial>) -> Vec<Spatial> {
    // Two passes: sort with internals masked, then number internals by appearance.
    let mask = |a: &Spatial| -> Spatial {
        let mut m = BTreeMap::new();
        for v in a.vars() {
            if v != BLOCK_HEAD && v != BLOCK_TAIL {
                m.insert(v, Expr::Var(Var::Logical(0)));
            }
        }
        a.subst(&m)
    };
    atoms.sort_by_key(|a| mask(a));
    let mut order: BTreeMap<Var, Expr> = BTreeMap::new();
    let mut next = 1;
    for a in &atoms {
        let mut vs = vec![a.source().clone()];
        let mut tv = BTreeSet::new();
        a.target().collect_vars(&mut tv);
        vs.extend(tv);
        for v in vs {
            if v != BLOCK_HEAD && v != BLOCK_TAIL && !order.contains_key(&v) {
                order.insert(v, Expr::Var(Var::Logical(next)));
                next += 1;
            }
        }
    }
    let mut out: Vec<Spatial> = atoms.iter().map(|a| a.subst(&order)).collect();
    out.sort();
    out
}
