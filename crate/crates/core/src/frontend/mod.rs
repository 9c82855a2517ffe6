//! Surface language: parsing, lowering to control-flow graphs, loop
//! extraction and call order.

pub mod ast;
pub mod cfg;
pub mod cfg_text;
pub mod lower;
pub mod parser;

use thiserror::Error;

pub use cfg::{changed_vars, Cfg, Cond, Edge, FnKind, Function, Loc, Operand, Program, Rhs, Stmt, RETURN};
pub use cfg_text::parse_program_text;
pub use lower::{call_order, lower_module};
pub use parser::{parse_module, ParseError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("{func}: {msg}")]
    Lower { func: String, msg: String },
}

/// Parse and lower a `.tl` source.
pub fn compile(src: &str) -> Result<Program, FrontendError> {
    lower_module(&parse_module(src)?)
}
