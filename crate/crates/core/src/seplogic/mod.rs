//! Symbolic heaps: syntax, decision procedures, abstraction and concrete semantics.

pub mod alpha;
pub mod formula;
pub mod heapctx;
pub mod models;
pub mod parse;
pub mod prover;
pub mod pure;
pub mod reach;
pub mod term;

pub use alpha::{abstract_alpha, abstract_alpha_blocks};
pub use formula::{Block, BlockTable, Fresh, Spatial, SymHeap, BLOCK_HEAD, BLOCK_TAIL};
pub use heapctx::{heap_sat, HeapCtx};
pub use models::{enumerate_models, eval, models, Bounds};
pub use parse::{parse_expr, parse_heap, parse_heap_with, FormulaError};
pub use prover::{
    abduce, default_exists, entails, entails_exact, entails_exact_with, entails_with, normalize, Abduction, Entailment,
};
pub use pure::{pure_sat, pure_sat_with, PureCtx, Verdict};
pub use reach::{reach_set, restrict};
pub use term::{name, BinOp, Cmp, Expr, Name, Pure, UnOp, Var};
