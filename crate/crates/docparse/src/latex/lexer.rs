//! Lossless lexer. Unknown bytes become character tokens; nothing errors.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    /// Backslash + letter run, or backslash + one non-letter char.
    Command,
    GroupOpen,
    GroupClose,
    Superscript,
    Subscript,
    Character,
    Whitespace,
    /// `%` through end of line, newline included when present.
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LatexToken {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offset in the original source; synthesized tokens inherit the
    /// position of the token they replace.
    pub position: usize,
}

impl LatexToken {
    pub fn new(kind: TokenKind, text: impl Into<String>, position: usize) -> Self {
        Self { kind, text: text.into(), position }
    }

    /// True for commands named by a letter run (`\frac`, not `\{`).
    pub fn is_letter_command(&self) -> bool {
        self.kind == TokenKind::Command
            && self.text.len() >= 2
            && self.text[1..].chars().all(|c| c.is_ascii_alphabetic())
    }
}

fn is_blank(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\r' | '\n')
}

/// Splits `source` into tokens. Concatenating the token texts reproduces
/// `source` exactly.
pub fn tokenize(source: &str) -> Vec<LatexToken> {
    let mut tokens = Vec::new();
    let bytes = source.as_bytes();
    let mut i = 0;
    while i < source.len() {
        let start = i;
        let c = source[i..].chars().next().expect("i is a char boundary");
        match c {
            '\\' => {
                let rest = &source[i + 1..];
                let letters = rest.chars().take_while(|c| c.is_ascii_alphabetic()).count();
                if letters > 0 {
                    let end = i + 1 + letters;
                    tokens.push(LatexToken::new(TokenKind::Command, &source[i..end], start));
                    i = end;
                } else if let Some(next) = rest.chars().next() {
                    let end = i + 1 + next.len_utf8();
                    tokens.push(LatexToken::new(TokenKind::Command, &source[i..end], start));
                    i = end;
                } else {
                    // Lone trailing backslash.
                    tokens.push(LatexToken::new(TokenKind::Character, "\\", start));
                    i += 1;
                }
            }
            '{' => {
                tokens.push(LatexToken::new(TokenKind::GroupOpen, "{", start));
                i += 1;
            }
            '}' => {
                tokens.push(LatexToken::new(TokenKind::GroupClose, "}", start));
                i += 1;
            }
            '^' => {
                tokens.push(LatexToken::new(TokenKind::Superscript, "^", start));
                i += 1;
            }
            '_' => {
                tokens.push(LatexToken::new(TokenKind::Subscript, "_", start));
                i += 1;
            }
            '%' => {
                let mut end = i + 1;
                while end < source.len() && bytes[end] != b'\n' {
                    end += 1;
                }
                if end < source.len() {
                    end += 1;
                }
                tokens.push(LatexToken::new(TokenKind::Comment, &source[i..end], start));
                i = end;
            }
            c if is_blank(c) => {
                let mut end = i;
                while end < source.len() {
                    let n = source[end..].chars().next().expect("char boundary");
                    if !is_blank(n) {
                        break;
                    }
                    end += n.len_utf8();
                }
                tokens.push(LatexToken::new(TokenKind::Whitespace, &source[i..end], start));
                i = end;
            }
            c => {
                let end = i + c.len_utf8();
                tokens.push(LatexToken::new(TokenKind::Character, &source[i..end], start));
                i = end;
            }
        }
    }
    tokens
}
