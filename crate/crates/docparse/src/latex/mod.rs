//! Lossless LaTeX lexing and rule-based standardization.
//!
//! The lexer never fails and concatenating its token texts reproduces the
//! input byte for byte. Normalization parses the token stream into a brace
//! tree, applies the enabled rewrite rules in a fixed order, and
//! serializes back.

mod lexer;
mod node;
mod normalize;

pub use lexer::{tokenize, LatexToken, TokenKind};
pub use node::{parse_nodes, serialize_nodes, Node};
pub use normalize::{measure_reduction, normalize, RuleSet};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatexError {
    #[error("unmatched '{{' at byte {0}")]
    UnbalancedOpen(usize),
    #[error("unmatched '}}' at byte {0}")]
    UnbalancedClose(usize),
    #[error("second \\over in one group at byte {0}")]
    DoubleOver(usize),
    #[error("empty original text")]
    EmptyInput,
    #[error("unknown rule name {0:?}")]
    UnknownRule(String),
}
