//! The policy language: parsing `minimize(e)` rank expressions and
//! evaluating them over concrete path attributes.

mod ast;
mod eval;
mod lexer;
mod parser;
mod print;

pub use ast::{AttrName, BinOp, BoolTest, PolicyAst, Regex};
pub use ast::RankExpr;
pub use eval::{eval_expr, evaluate_rank, EvalError, EvalFlags, PathAttributes};
pub use parser::{parse_policy, ParseError};
pub use print::pretty_print;
