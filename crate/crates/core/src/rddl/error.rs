use thiserror::Error;

use super::ast::Span;

/// A single parse diagnostic. Every rejected input yields exactly one.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("lexical error at {span}: {message}")]
    Lexical { message: String, span: Span },

    #[error("syntax error at {span}: expected {expected}, found {found}")]
    Syntax {
        expected: String,
        found: String,
        span: Span,
    },

    #[error("unsupported construct at {span}: {construct}")]
    Unsupported { construct: String, span: Span },

    #[error("duplicate assignment at {span}: {symbol}({})", args.join(", "))]
    DuplicateAssignment {
        symbol: String,
        args: Vec<String>,
        span: Span,
    },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Lexical { span, .. }
            | ParseError::Syntax { span, .. }
            | ParseError::Unsupported { span, .. }
            | ParseError::DuplicateAssignment { span, .. } => *span,
        }
    }
}

/// Cross-checking failure between a domain and an instance.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("unknown symbol `{symbol}` at {span}")]
    UnknownSymbol { symbol: String, span: Span },

    #[error("arity mismatch for `{symbol}` at {span}: expected {expected}, found {found}")]
    ArityMismatch {
        symbol: String,
        expected: usize,
        found: usize,
        span: Span,
    },

    #[error("type mismatch for `{symbol}` at {span}: {detail}")]
    TypeMismatch {
        symbol: String,
        detail: String,
        span: Span,
    },

    #[error("domain mismatch at {span}: instance expects `{expected}`, domain is `{found}`")]
    DomainMismatch {
        expected: String,
        found: String,
        span: Span,
    },

    #[error("invalid declaration of `{symbol}` at {span}: {detail}")]
    InvalidDeclaration {
        symbol: String,
        detail: String,
        span: Span,
    },
}

impl ValidationError {
    pub fn span(&self) -> Span {
        match self {
            ValidationError::UnknownSymbol { span, .. }
            | ValidationError::ArityMismatch { span, .. }
            | ValidationError::TypeMismatch { span, .. }
            | ValidationError::DomainMismatch { span, .. }
            | ValidationError::InvalidDeclaration { span, .. } => *span,
        }
    }

    pub fn symbol(&self) -> &str {
        match self {
            ValidationError::UnknownSymbol { symbol, .. }
            | ValidationError::ArityMismatch { symbol, .. }
            | ValidationError::TypeMismatch { symbol, .. }
            | ValidationError::InvalidDeclaration { symbol, .. } => symbol,
            ValidationError::DomainMismatch { expected, .. } => expected,
        }
    }
}
