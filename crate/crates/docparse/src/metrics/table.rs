//! Table-cell extraction and multiset F1.

use std::collections::BTreeMap;

use serde::Serialize;

use super::detection::prf1;
use super::MetricsError;
use crate::latex::{parse_nodes, serialize_nodes, tokenize, Node, TokenKind};

/// Environments treated as tables.
const TABLE_ENVS: [&str; 4] = ["tabular", "tabular*", "array", "longtable"];

/// Decorations dropped outright.
const DECOR: [&str; 19] = [
    "\\hline", "\\toprule", "\\midrule", "\\bottomrule", "\\centering", "\\raggedright",
    "\\raggedleft", "\\arraybackslash", "\\relax", "\\small", "\\footnotesize", "\\scriptsize",
    "\\normalsize", "\\large", "\\Large", "\\bf", "\\it", "\\rm", "\\tt",
];

/// Commands dropped together with their brace arguments.
const ARG_DROPPERS: [(&str, usize); 4] =
    [("\\cline", 1), ("\\hspace", 1), ("\\vspace", 1), ("\\rule", 2)];

/// Wrappers whose single brace argument is kept, unwrapped.
const WRAPPERS: [&str; 13] = [
    "\\textbf", "\\textit", "\\texttt", "\\textrm", "\\textsf", "\\textsc", "\\emph", "\\mathbf",
    "\\mathrm", "\\mathit", "\\mathcal", "\\mbox", "\\text",
];

fn group_text(children: &[Node]) -> String {
    serialize_nodes(children).trim().to_string()
}

fn skip_ws(nodes: &[Node], mut i: usize) -> usize {
    while i < nodes.len() && nodes[i].is_whitespace() {
        i += 1;
    }
    i
}

/// Body of the first table environment, in source order; nested
/// environments inside cells stay intact. Searches groups recursively.
fn find_env_body(nodes: &[Node]) -> Option<Vec<Node>> {
    for (i, node) in nodes.iter().enumerate() {
        if node.command_name() == Some("\\begin") {
            let j = skip_ws(nodes, i + 1);
            let Some(Node::Group(name)) = nodes.get(j) else { continue };
            if !TABLE_ENVS.contains(&group_text(name).as_str()) {
                continue;
            }
            let mut k = skip_ws(nodes, j + 1);
            // Optional [..] argument, bracket characters at this level.
            if matches!(nodes.get(k), Some(Node::Tok(t)) if t.text == "[") {
                if let Some(close) =
                    (k..nodes.len()).find(|&m| matches!(&nodes[m], Node::Tok(t) if t.text == "]"))
                {
                    k = skip_ws(nodes, close + 1);
                }
            }
            // Column spec group.
            if matches!(nodes.get(k), Some(Node::Group(_))) {
                k += 1;
            }
            // Everything up to the matching \end is the body; an
            // unterminated environment keeps what it has.
            let mut depth = 0usize;
            let mut body = Vec::new();
            for node in &nodes[k..] {
                match node.command_name() {
                    Some("\\begin") => depth += 1,
                    Some("\\end") if depth == 0 => return Some(body),
                    Some("\\end") => depth -= 1,
                    _ => {}
                }
                body.push(node.clone());
            }
            return Some(body);
        }
        if let Node::Group(children) = node {
            if let Some(found) = find_env_body(children) {
                return Some(found);
            }
        }
    }
    None
}

/// Splits on separator nodes, ignoring any inside nested environments.
fn split_level<F: Fn(&Node) -> bool>(nodes: &[Node], is_sep: F) -> Vec<Vec<Node>> {
    let mut parts = vec![Vec::new()];
    let mut depth = 0usize;
    for node in nodes {
        match node.command_name() {
            Some("\\begin") => depth += 1,
            Some("\\end") => depth = depth.saturating_sub(1),
            _ => {}
        }
        if depth == 0 && is_sep(node) {
            parts.push(Vec::new());
        } else {
            parts.last_mut().expect("starts nonempty").push(node.clone());
        }
    }
    parts
}

/// Applies the strip-list: decorations vanish, wrapper commands keep
/// their content, `\multicolumn{n}{spec}{content}` keeps only `content`,
/// comments vanish, everything else stays.
fn strip_nodes(nodes: &[Node]) -> Vec<Node> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        match &nodes[i] {
            Node::Group(children) => {
                out.push(Node::Group(strip_nodes(children)));
                i += 1;
            }
            Node::Tok(t) if t.kind == TokenKind::Comment => i += 1,
            Node::Tok(t) if t.kind == TokenKind::Command => {
                let name = t.text.as_str();
                if DECOR.contains(&name) {
                    i += 1;
                } else if let Some(&(_, args)) = ARG_DROPPERS.iter().find(|(n, _)| *n == name) {
                    i += 1;
                    for _ in 0..args {
                        let j = skip_ws(nodes, i);
                        if matches!(nodes.get(j), Some(Node::Group(_))) {
                            i = j + 1;
                        }
                    }
                } else if WRAPPERS.contains(&name) {
                    i += 1;
                    let j = skip_ws(nodes, i);
                    if let Some(Node::Group(children)) = nodes.get(j) {
                        out.extend(strip_nodes(children));
                        i = j + 1;
                    }
                } else if name == "\\multicolumn" {
                    let first = skip_ws(nodes, i + 1);
                    let second = skip_ws(nodes, first + 1);
                    let third = skip_ws(nodes, second + 1);
                    match (nodes.get(first), nodes.get(second), nodes.get(third)) {
                        (Some(Node::Group(_)), Some(Node::Group(_)), Some(Node::Group(content))) => {
                            out.extend(strip_nodes(content));
                            i = third + 1;
                        }
                        _ => {
                            // Malformed: keep literal.
                            out.push(nodes[i].clone());
                            i += 1;
                        }
                    }
                } else {
                    out.push(nodes[i].clone());
                    i += 1;
                }
            }
            other => {
                out.push(other.clone());
                i += 1;
            }
        }
    }
    out
}

fn cell_text(nodes: &[Node]) -> String {
    let rendered = serialize_nodes(&strip_nodes(nodes));
    rendered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ordered multiset of cell strings from the first table environment:
/// rows split on `\\`, cells on unescaped `&`, content stripped of
/// formatting and whitespace-collapsed. Rows that reduce to one empty
/// cell (rule-only rows) are dropped; empty cells inside real rows stay.
pub fn extract_table_cells(source: &str) -> Result<Vec<String>, MetricsError> {
    let nodes = parse_nodes(tokenize(source)).map_err(|_| MetricsError::NoTableEnvironment)?;
    let body = find_env_body(&nodes).ok_or(MetricsError::NoTableEnvironment)?;
    let is_row_sep = |n: &Node| n.command_name() == Some("\\\\");
    let is_cell_sep =
        |n: &Node| matches!(n, Node::Tok(t) if t.kind == TokenKind::Character && t.text == "&");
    let mut cells = Vec::new();
    for row in split_level(&body, is_row_sep) {
        let row_cells: Vec<String> =
            split_level(&row, is_cell_sep).iter().map(|c| cell_text(c)).collect();
        if row_cells.len() == 1 && row_cells[0].is_empty() {
            continue;
        }
        cells.extend(row_cells);
    }
    Ok(cells)
}

#[derive(Debug, Clone, Serialize)]
pub struct TableCellScore {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub matched: usize,
    pub pred_cells: usize,
    pub gt_cells: usize,
    /// Extraction failed on that side; the score is 0, not silently absent.
    pub pred_error: bool,
    pub gt_error: bool,
}

/// Multiset precision/recall/F1 over extracted cells.
pub fn table_cell_f1(pred_latex: &str, gt_latex: &str) -> TableCellScore {
    let pred = extract_table_cells(pred_latex);
    let gt = extract_table_cells(gt_latex);
    let (pred_error, gt_error) = (pred.is_err(), gt.is_err());
    let pred = pred.unwrap_or_default();
    let gt = gt.unwrap_or_default();
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for cell in &pred {
        counts.entry(cell).or_default().0 += 1;
    }
    for cell in &gt {
        counts.entry(cell).or_default().1 += 1;
    }
    let matched: usize = counts.values().map(|&(p, g)| p.min(g)).sum();
    let scores = prf1(matched, pred.len(), gt.len());
    TableCellScore {
        f1: if pred_error || gt_error { 0.0 } else { scores.f1 },
        precision: scores.precision,
        recall: scores.recall,
        matched,
        pred_cells: pred.len(),
        gt_cells: gt.len(),
        pred_error,
        gt_error,
    }
}
