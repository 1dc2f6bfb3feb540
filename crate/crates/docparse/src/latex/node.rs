//! Brace-group tree over the flat token stream.

use super::lexer::{LatexToken, TokenKind};
use super::LatexError;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Tok(LatexToken),
    /// A `{ ... }` group; the braces themselves are implicit.
    Group(Vec<Node>),
}

impl Node {
    pub fn is_whitespace(&self) -> bool {
        matches!(self, Node::Tok(t) if t.kind == TokenKind::Whitespace)
    }

    pub fn command_name(&self) -> Option<&str> {
        match self {
            Node::Tok(t) if t.kind == TokenKind::Command => Some(&t.text),
            _ => None,
        }
    }

    pub fn position(&self) -> usize {
        match self {
            Node::Tok(t) => t.position,
            Node::Group(children) => children.first().map(Node::position).unwrap_or(0),
        }
    }
}

/// Builds the group tree; unmatched braces are errors with byte positions.
pub fn parse_nodes(tokens: Vec<LatexToken>) -> Result<Vec<Node>, LatexError> {
    let mut current = Vec::new();
    let mut stack: Vec<(Vec<Node>, usize)> = Vec::new();
    for tok in tokens {
        match tok.kind {
            TokenKind::GroupOpen => {
                stack.push((std::mem::take(&mut current), tok.position));
            }
            TokenKind::GroupClose => {
                let Some((mut parent, _)) = stack.pop() else {
                    return Err(LatexError::UnbalancedClose(tok.position));
                };
                parent.push(Node::Group(std::mem::take(&mut current)));
                current = parent;
            }
            _ => current.push(Node::Tok(tok)),
        }
    }
    if let Some(&(_, open_pos)) = stack.last() {
        return Err(LatexError::UnbalancedOpen(open_pos));
    }
    Ok(current)
}

#[derive(Default)]
struct WriteState {
    /// Last emitted content was a letter command with nothing after it;
    /// a following letter needs a delimiting blank.
    guard_letter: bool,
    /// Last emitted content was a comment without a trailing newline;
    /// anything following must start on a new line or it would be
    /// swallowed by the comment.
    open_comment: bool,
}

fn write_text(out: &mut String, state: &mut WriteState, text: &str, letter_cmd: bool, comment: bool) {
    if state.open_comment {
        out.push('\n');
    } else if state.guard_letter && text.starts_with(|c: char| c.is_ascii_alphabetic()) {
        out.push(' ');
    }
    out.push_str(text);
    state.open_comment = comment && !text.ends_with('\n');
    state.guard_letter = letter_cmd;
}

fn write_nodes(nodes: &[Node], out: &mut String, state: &mut WriteState) {
    for node in nodes {
        match node {
            Node::Tok(t) => write_text(
                out,
                state,
                &t.text,
                t.is_letter_command(),
                t.kind == TokenKind::Comment,
            ),
            Node::Group(children) => {
                write_text(out, state, "{", false, false);
                write_nodes(children, out, state);
                write_text(out, state, "}", false, false);
            }
        }
    }
}

/// Renders the tree back to text.
///
/// Two lexical guards keep rewritten trees valid: a blank is inserted
/// between a letter command and an immediately following letter, and a
/// newline after a comment that lost its terminator.
pub fn serialize_nodes(nodes: &[Node]) -> String {
    let mut out = String::new();
    let mut state = WriteState::default();
    write_nodes(nodes, &mut out, &mut state);
    out
}
