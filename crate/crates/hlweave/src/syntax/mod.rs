//! HL front end: AST definition, lexer, parser, canonical printer, and
//! structural equality.

mod lexer;
mod node;
mod parser;
mod printer;

pub use node::{node_equal, Atom, Node, NodeKind, Param, SourceLoc};
pub use parser::{normalize_interp, parse, parse_fragment};
pub use printer::{print_expr, print_source, print_source_opts};

use thiserror::Error;

#[derive(Debug, Clone, Error)]
#[error("{file}:{line}: syntax error: {message}")]
pub struct SyntaxError {
    pub file: String,
    pub line: u32,
    pub message: String,
}

#[derive(Debug, Clone, Error)]
pub enum PrintError {
    #[error("cannot print tree containing an aj node (near {loc}); run emit first")]
    AjNode { loc: SourceLoc },
}
