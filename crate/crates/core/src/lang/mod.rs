//! The MMP language: a small Erlang-flavoured actor language with
//! `spawn`, `!` and selective `receive`.

mod ast;
mod lexer;
mod parser;
mod printer;
mod validate;
mod value;

pub use ast::{BinOp, Clause, Expr, FunDef, FunKey, Module, Pattern};
pub use parser::{parse_expr, parse_module};
pub use printer::{print_expr_string, print_module, print_pattern_string};
pub use validate::{validate_module, Diagnostic};
pub use value::{Pid, Value};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}
