//! Model description language: arithmetic expressions and the model file format.

pub mod expr;
pub mod model_file;
pub mod parser;

pub use expr::{BinOp, Builtin, CompiledExpr, Expr, ExprError, Symbol, Symbols, FUNCTIONS};
pub use model_file::{parse_model, parse_model_unchecked, serialize, ModelFileError};
pub use parser::{parse_expr, parse_expr_at, ParseError};
