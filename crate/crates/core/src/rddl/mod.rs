//! RDDL front-end: lexer, parser, printer and domain/instance validation.

mod ast;
mod error;
mod lexer;
mod parser;
mod printer;
mod validate;

pub use ast::*;
pub use error::{ParseError, ValidationError};
pub use parser::{parse_domain, parse_instance, ParseResult};
pub use printer::{print_domain, print_expr, print_instance};
pub use validate::{validate, TypedModel};
