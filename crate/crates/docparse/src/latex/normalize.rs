//! Canonicalization passes over the node tree.
//!
//! Five rewrites run in a fixed order: BRACKET, FRACTION, SUBSUP, PRIME,
//! SPACE. Structural rewrites come before whitespace collapsing so that
//! SPACE sees the final token arrangement. Every pass is idempotent and
//! purely local: a span no enabled rule matches is emitted byte-for-byte.
//!
//! Script handling works on "clusters": a maximal run of prime characters
//! and `^`/`_` script units attached to one base, with blanks between the
//! parts ignored the way math mode ignores them. A cluster that does not
//! match a rule's shape exactly (for instance two superscripts, or a
//! dangling `^` with no operand) is left untouched as a whole.

use serde::Serialize;

use super::lexer::{tokenize, LatexToken, TokenKind};
use super::node::{parse_nodes, serialize_nodes, Node};
use super::LatexError;

/// Which rewrites [`normalize`] applies. Fields mirror the rule names
/// accepted by [`RuleSet::from_names`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RuleSet {
    pub bracket: bool,
    pub fraction: bool,
    pub subsup: bool,
    pub prime: bool,
    pub space: bool,
}

impl RuleSet {
    pub fn all() -> Self {
        Self { bracket: true, fraction: true, subsup: true, prime: true, space: true }
    }

    pub fn none() -> Self {
        Self { bracket: false, fraction: false, subsup: false, prime: false, space: false }
    }

    /// Enables exactly the named rules; names are case-insensitive.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, LatexError> {
        let mut rules = Self::none();
        for name in names {
            match name.as_ref().to_ascii_lowercase().as_str() {
                "bracket" => rules.bracket = true,
                "fraction" => rules.fraction = true,
                "subsup" => rules.subsup = true,
                "prime" => rules.prime = true,
                "space" => rules.space = true,
                other => return Err(LatexError::UnknownRule(other.to_string())),
            }
        }
        Ok(rules)
    }
}

/// Applies the enabled rules and re-serializes.
pub fn normalize(source: &str, rules: &RuleSet) -> Result<String, LatexError> {
    let mut nodes = parse_nodes(tokenize(source))?;
    if rules.bracket {
        nodes = bracket_pass(nodes);
    }
    if rules.fraction {
        nodes = fraction_pass(nodes)?;
    }
    if rules.subsup {
        nodes = cluster_pass(nodes, ClusterMode::Subsup);
    }
    if rules.prime {
        nodes = cluster_pass(nodes, ClusterMode::Prime);
    }
    if rules.space {
        nodes = space_pass(nodes, SpaceContext::Document);
    }
    Ok(serialize_nodes(&nodes))
}

/// Length-reduction ratio `1 − len(normalized)/len(original)`, in bytes.
pub fn measure_reduction(original: &str, normalized: &str) -> Result<f64, LatexError> {
    if original.is_empty() {
        return Err(LatexError::EmptyInput);
    }
    Ok(1.0 - normalized.len() as f64 / original.len() as f64)
}

// ---------------------------------------------------------------- BRACKET

fn bracket_pass(nodes: Vec<Node>) -> Vec<Node> {
    nodes
        .into_iter()
        .map(|node| match node {
            Node::Group(children) => Node::Group(bracket_pass(children)),
            Node::Tok(t) if t.kind == TokenKind::Command && t.text == "\\{" => {
                Node::Tok(LatexToken::new(TokenKind::Command, "\\lbrace", t.position))
            }
            Node::Tok(t) if t.kind == TokenKind::Command && t.text == "\\}" => {
                Node::Tok(LatexToken::new(TokenKind::Command, "\\rbrace", t.position))
            }
            other => other,
        })
        .collect()
}

// --------------------------------------------------------------- FRACTION

/// A node list after fraction resolution: either plain content, or content
/// that was split around a single `\over` into two operands.
enum Level {
    Plain(Vec<Node>),
    Frac { left: Vec<Node>, right: Vec<Node>, position: usize },
}

fn trim_ws(mut nodes: Vec<Node>) -> Vec<Node> {
    while nodes.last().is_some_and(Node::is_whitespace) {
        nodes.pop();
    }
    let keep_from = nodes.iter().take_while(|n| n.is_whitespace()).count();
    nodes.drain(..keep_from);
    nodes
}

fn frac_nodes(left: Vec<Node>, right: Vec<Node>, position: usize) -> [Node; 3] {
    [
        Node::Tok(LatexToken::new(TokenKind::Command, "\\frac", position)),
        Node::Group(left),
        Node::Group(right),
    ]
}

/// Splits one level at its `\over`, if any. Two at the same level leave no
/// well-defined operand structure.
fn split_over(nodes: Vec<Node>) -> Result<Level, LatexError> {
    let overs: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter_map(|(i, n)| (n.command_name() == Some("\\over")).then_some(i))
        .collect();
    match overs.as_slice() {
        [] => Ok(Level::Plain(nodes)),
        [at] => {
            let position = nodes[*at].position();
            let mut left = nodes;
            let right = left.split_off(at + 1);
            left.pop();
            Ok(Level::Frac { left: trim_ws(left), right: trim_ws(right), position })
        }
        [_, second, ..] => Err(LatexError::DoubleOver(nodes[*second].position())),
    }
}

/// Rewrites every group bottom-up, splicing `\frac{X}{Y}` triples into the
/// parent level, then reports this level's own split if it has one.
fn resolve_fractions(nodes: Vec<Node>) -> Result<Level, LatexError> {
    let mut flat = Vec::with_capacity(nodes.len());
    for node in nodes {
        match node {
            Node::Group(children) => match resolve_fractions(children)? {
                Level::Plain(children) => flat.push(Node::Group(children)),
                Level::Frac { left, right, position } => {
                    flat.extend(frac_nodes(left, right, position));
                }
            },
            other => flat.push(other),
        }
    }
    split_over(flat)
}

fn fraction_pass(nodes: Vec<Node>) -> Result<Vec<Node>, LatexError> {
    Ok(match resolve_fractions(nodes)? {
        Level::Plain(nodes) => nodes,
        // A top-level \over takes the whole expression as its operands.
        Level::Frac { left, right, position } => frac_nodes(left, right, position).into(),
    })
}

// ---------------------------------------------------------- SUBSUP, PRIME

#[derive(Clone, Copy, PartialEq)]
enum ClusterMode {
    Subsup,
    Prime,
}

enum Piece {
    /// `count` adjacent `'` characters; blanks split runs.
    Primes { count: usize, position: usize },
    Script { marker: LatexToken, operand: Node },
}

struct Cluster {
    pieces: Vec<Piece>,
    /// Nodes consumed from the input, including interior blanks.
    consumed: usize,
    /// A script marker had a missing or malformed operand.
    poisoned: bool,
}

fn is_prime_char(node: &Node) -> bool {
    matches!(node, Node::Tok(t) if t.kind == TokenKind::Character && t.text == "'")
}

/// Operands and bases are single tokens or groups; markers, blanks,
/// comments and primes do not qualify.
fn operand_like(node: &Node) -> bool {
    match node {
        Node::Group(_) => true,
        Node::Tok(t) => match t.kind {
            TokenKind::Command => true,
            TokenKind::Character => t.text != "'",
            _ => false,
        },
    }
}

/// Parses the cluster starting at `start`, which may open with a blank gap.
/// Returns None when no piece follows.
fn scan_cluster(nodes: &[Node], start: usize) -> Option<Cluster> {
    let mut pieces = Vec::new();
    let mut poisoned = false;
    let mut i = start;
    // End of the last committed piece; trailing blanks stay outside.
    let mut end = start;
    loop {
        let mut j = i;
        while j < nodes.len() && nodes[j].is_whitespace() {
            j += 1;
        }
        if j >= nodes.len() {
            break;
        }
        if is_prime_char(&nodes[j]) {
            let position = nodes[j].position();
            let mut count = 0;
            while j < nodes.len() && is_prime_char(&nodes[j]) {
                count += 1;
                j += 1;
            }
            pieces.push(Piece::Primes { count, position });
            i = j;
            end = j;
        } else if let Node::Tok(t) = &nodes[j] {
            if !matches!(t.kind, TokenKind::Superscript | TokenKind::Subscript) {
                break;
            }
            let marker = t.clone();
            let mut m = j + 1;
            while m < nodes.len() && nodes[m].is_whitespace() {
                m += 1;
            }
            if m < nodes.len() && operand_like(&nodes[m]) {
                pieces.push(Piece::Script { marker, operand: nodes[m].clone() });
                i = m + 1;
                end = i;
            } else {
                // Consume the marker; the offending node is rescanned.
                poisoned = true;
                end = j + 1;
                break;
            }
        } else {
            break;
        }
    }
    if pieces.is_empty() && !poisoned {
        return None;
    }
    Some(Cluster { pieces, consumed: end - start, poisoned })
}

fn piece_counts(pieces: &[Piece]) -> (usize, usize, usize) {
    let mut runs = 0;
    let mut sups = 0;
    let mut subs = 0;
    for piece in pieces {
        match piece {
            Piece::Primes { .. } => runs += 1,
            Piece::Script { marker, .. } if marker.kind == TokenKind::Superscript => sups += 1,
            Piece::Script { .. } => subs += 1,
        }
    }
    (runs, sups, subs)
}

fn sub_unit(pieces: &[Piece]) -> Option<(&LatexToken, &Node)> {
    pieces.iter().find_map(|p| match p {
        Piece::Script { marker, operand } if marker.kind == TokenKind::Subscript => {
            Some((marker, operand))
        }
        _ => None,
    })
}

/// Emits the canonical form of a fired cluster, or None to leave it alone.
fn plan_rewrite(cluster: &Cluster, mode: ClusterMode, prev: Option<&Node>) -> Option<Vec<Node>> {
    if cluster.poisoned {
        return None;
    }
    let (runs, sups, subs) = piece_counts(&cluster.pieces);
    match mode {
        ClusterMode::Subsup => {
            // Exactly one of each script, superscript written first: swap.
            if runs != 0 || sups != 1 || subs != 1 {
                return None;
            }
            let sup_first = matches!(
                &cluster.pieces[0],
                Piece::Script { marker, .. } if marker.kind == TokenKind::Superscript
            );
            if !sup_first {
                return None;
            }
            let mut out = Vec::with_capacity(4);
            for piece in cluster.pieces.iter().rev() {
                let Piece::Script { marker, operand } = piece else { unreachable!() };
                out.push(Node::Tok(marker.clone()));
                out.push(operand.clone());
            }
            Some(out)
        }
        ClusterMode::Prime => {
            // One prime run, at most one script each way, and a base to
            // attach the synthesized superscript to.
            if runs != 1 || sups > 1 || subs > 1 || !prev.is_some_and(operand_like) {
                return None;
            }
            let mut sup_marker: Option<LatexToken> = None;
            let mut content = Vec::new();
            for piece in &cluster.pieces {
                match piece {
                    Piece::Primes { count, position } => {
                        sup_marker.get_or_insert_with(|| {
                            LatexToken::new(TokenKind::Superscript, "^", *position)
                        });
                        for _ in 0..*count {
                            content.push(Node::Tok(LatexToken::new(
                                TokenKind::Command,
                                "\\prime",
                                *position,
                            )));
                        }
                    }
                    Piece::Script { marker, operand }
                        if marker.kind == TokenKind::Superscript =>
                    {
                        sup_marker = Some(marker.clone());
                        // Merge the existing superscript in source order.
                        match operand {
                            Node::Group(children) => content.extend(children.iter().cloned()),
                            other => content.push(other.clone()),
                        }
                    }
                    Piece::Script { .. } => {}
                }
            }
            let mut out = Vec::with_capacity(4);
            if let Some((marker, operand)) = sub_unit(&cluster.pieces) {
                out.push(Node::Tok(marker.clone()));
                out.push(operand.clone());
            }
            out.push(Node::Tok(sup_marker.expect("runs == 1 sets a marker")));
            out.push(Node::Group(content));
            Some(out)
        }
    }
}

fn cluster_pass(nodes: Vec<Node>, mode: ClusterMode) -> Vec<Node> {
    let nodes: Vec<Node> = nodes
        .into_iter()
        .map(|node| match node {
            Node::Group(children) => Node::Group(cluster_pass(children, mode)),
            other => other,
        })
        .collect();
    let mut out: Vec<Node> = Vec::with_capacity(nodes.len());
    let mut i = 0;
    while i < nodes.len() {
        let Some(cluster) = scan_cluster(&nodes, i) else {
            out.push(nodes[i].clone());
            i += 1;
            continue;
        };
        let consumed = cluster.consumed.max(1);
        let prev = out.iter().rev().find(|n| !n.is_whitespace());
        if let Some(rewrite) = plan_rewrite(&cluster, mode, prev) {
            out.extend(rewrite);
        } else {
            // Emit untouched and never rescan inside: a cluster either
            // rewrites as a whole or not at all.
            out.extend_from_slice(&nodes[i..i + consumed]);
        }
        i += consumed;
    }
    out
}

// ------------------------------------------------------------------ SPACE

#[derive(Clone, Copy, PartialEq)]
enum SpaceContext {
    /// Top level: edge runs vanish entirely.
    Document,
    Group,
    /// Tabular-family column spec: every run vanishes.
    ColumnSpec,
}

const COLSPEC_ENVS: [&str; 4] = ["tabular", "tabular*", "array", "longtable"];

fn is_char(node: &Node, text: &str) -> bool {
    matches!(node, Node::Tok(t) if t.kind == TokenKind::Character && t.text == text)
}

/// Indices of groups at this level that are column specs: the argument
/// group after `\begin{<env>}` (plus optional `[..]`) or after `\tabular`.
fn colspec_group_indices(nodes: &[Node]) -> Vec<usize> {
    let mut indices = Vec::new();
    let skip_ws = |mut j: usize| {
        while j < nodes.len() && nodes[j].is_whitespace() {
            j += 1;
        }
        j
    };
    for (i, node) in nodes.iter().enumerate() {
        let mut j = match node.command_name() {
            Some("\\begin") => {
                let j = skip_ws(i + 1);
                let Some(Node::Group(children)) = nodes.get(j) else { continue };
                let env = serialize_nodes(children);
                if !COLSPEC_ENVS.contains(&env.trim()) {
                    continue;
                }
                j + 1
            }
            Some("\\tabular") => i + 1,
            _ => continue,
        };
        j = skip_ws(j);
        if nodes.get(j).is_some_and(|n| is_char(n, "[")) {
            match (j..nodes.len()).find(|&k| is_char(&nodes[k], "]")) {
                Some(close) => j = skip_ws(close + 1),
                None => continue,
            }
        }
        if matches!(nodes.get(j), Some(Node::Group(_))) {
            indices.push(j);
        }
    }
    indices
}

/// True when the node serializes starting with an ASCII letter, which
/// would fuse with a preceding letter command.
fn begins_with_letter(node: Option<&Node>) -> bool {
    match node {
        Some(Node::Tok(t)) => t.text.starts_with(|c: char| c.is_ascii_alphabetic()),
        Some(Node::Group(_)) | None => false,
    }
}

fn space_pass(nodes: Vec<Node>, ctx: SpaceContext) -> Vec<Node> {
    let colspec = colspec_group_indices(&nodes);
    let nodes: Vec<Node> = nodes
        .into_iter()
        .enumerate()
        .map(|(i, node)| match node {
            Node::Group(children) => {
                let inner = if colspec.contains(&i) {
                    SpaceContext::ColumnSpec
                } else {
                    SpaceContext::Group
                };
                Node::Group(space_pass(children, inner))
            }
            other => other,
        })
        .collect();
    let mut out: Vec<Node> = Vec::with_capacity(nodes.len());
    let mut i = 0;
    while i < nodes.len() {
        if !nodes[i].is_whitespace() {
            out.push(nodes[i].clone());
            i += 1;
            continue;
        }
        let position = nodes[i].position();
        while i < nodes.len() && nodes[i].is_whitespace() {
            i += 1;
        }
        let next = nodes.get(i);
        let drop = match ctx {
            SpaceContext::ColumnSpec => true,
            _ => {
                let at_edge = out.is_empty() || next.is_none();
                let after_letter_command =
                    matches!(out.last(), Some(Node::Tok(t)) if t.is_letter_command());
                if ctx == SpaceContext::Document && at_edge {
                    true
                } else {
                    // A blank is syntactically required only to stop a
                    // letter command from swallowing a following letter.
                    after_letter_command && !begins_with_letter(next)
                }
            }
        };
        if !drop {
            out.push(Node::Tok(LatexToken::new(TokenKind::Whitespace, " ", position)));
        }
    }
    out
}
