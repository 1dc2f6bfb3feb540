//! Coordinate-token codec.
//!
//! Continuous normalized coordinates are quantized onto `bins` levels and
//! represented by a contiguous slice `[start_index, end_index]` of the
//! vocabulary. Layout output sequences are flat token lists
//! `[label, x0, y0, x1, y1]*` terminated by an end-of-sequence token.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CoordError {
    #[error("coordinate {0} outside [0,1]")]
    CoordOutOfRange(f64),
    #[error("bin {bin} outside [0, {bins})")]
    BinOutOfRange { bin: usize, bins: usize },
    #[error("token {token} is not a coordinate token (range [{start}, {end}])")]
    NotACoordToken { token: u32, start: u32, end: u32 },
    #[error("invalid coordinate spec: bins={bins}, start_index={start}, end_index={end}")]
    BadSpec { bins: usize, start: u32, end: u32 },
    #[error("degenerate box: ({x0}, {y0}, {x1}, {y1})")]
    BadBox { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("label {0:?} not in label map")]
    UnknownLabel(String),
    #[error("duplicate label map entry for id {0}")]
    DuplicateId(u32),
    #[error("duplicate label map entry for name {0:?}")]
    DuplicateName(String),
    #[error("bad token text at byte {position}: {text:?}")]
    BadTokenText { position: usize, text: String },
}

/// Vocabulary layout of the coordinate tokens.
///
/// `end_index - start_index + 1 == bins` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordSpec {
    pub bins: usize,
    pub start_index: u32,
    pub end_index: u32,
}

impl CoordSpec {
    pub fn new(bins: usize, start_index: u32, end_index: u32) -> Result<Self, CoordError> {
        let ok = bins >= 1
            && start_index <= end_index
            && (end_index - start_index) as usize == bins - 1;
        if !ok {
            return Err(CoordError::BadSpec { bins, start: start_index, end: end_index });
        }
        Ok(Self { bins, start_index, end_index })
    }

    /// Spec covering `bins` tokens starting at `start_index`.
    pub fn with_bins_at(bins: usize, start_index: u32) -> Result<Self, CoordError> {
        if bins == 0 {
            return Err(CoordError::BadSpec { bins, start: start_index, end: start_index });
        }
        Self::new(bins, start_index, start_index + (bins - 1) as u32)
    }

    /// True when `token` lies inside the coordinate slice.
    pub fn contains(&self, token: u32) -> bool {
        (self.start_index..=self.end_index).contains(&token)
    }
}

/// Maps a normalized coordinate to its bin: `round(c * (bins-1))`.
///
/// Inputs outside `[0,1]` are rejected, not clamped; the clamp after
/// rounding only guards float edge cases at the boundaries.
pub fn quantize_coord(c: f64, spec: &CoordSpec) -> Result<usize, CoordError> {
    if !(0.0..=1.0).contains(&c) {
        return Err(CoordError::CoordOutOfRange(c));
    }
    let scaled = (c * (spec.bins - 1) as f64).round();
    Ok((scaled as usize).min(spec.bins - 1))
}

/// Maps a bin back to the center coordinate `b / (bins-1)`.
pub fn dequantize_coord(b: usize, spec: &CoordSpec) -> Result<f64, CoordError> {
    if b >= spec.bins {
        return Err(CoordError::BinOutOfRange { bin: b, bins: spec.bins });
    }
    if spec.bins == 1 {
        return Ok(0.0);
    }
    Ok(b as f64 / (spec.bins - 1) as f64)
}

/// Vocabulary index of the coordinate token for `c`.
pub fn coord_token(c: f64, spec: &CoordSpec) -> Result<u32, CoordError> {
    Ok(spec.start_index + quantize_coord(c, spec)? as u32)
}

/// Bin index of a coordinate token, or an error for non-coordinate tokens.
pub fn token_bin(token: u32, spec: &CoordSpec) -> Result<usize, CoordError> {
    if !spec.contains(token) {
        return Err(CoordError::NotACoordToken {
            token,
            start: spec.start_index,
            end: spec.end_index,
        });
    }
    Ok((token - spec.start_index) as usize)
}

/// Printable name of a coordinate bin. Bins are 0-based internally but
/// print 1-based, so bin 0 of a 1000-bin spec is `<loc_1>`.
pub fn loc_token_name(bin: usize) -> String {
    format!("<loc_{}>", bin + 1)
}

/// Axis-aligned box in normalized page coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, CoordError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(in_unit(x0) && in_unit(y0) && in_unit(x1) && in_unit(y1) && x0 <= x1 && y0 <= y1) {
            return Err(CoordError::BadBox { x0, y0, x1, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = CoordError;
    fn try_from(v: [f64; 4]) -> Result<Self, CoordError> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// A labeled layout element.
///
/// Serializes flat, one object per line: `{"label", "x0", "y0", "x1", "y1"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ElementRecord", into = "ElementRecord")]
pub struct LayoutElement {
    pub label: String,
    pub bbox: BBox,
}

impl LayoutElement {
    pub fn new(label: impl Into<String>, bbox: BBox) -> Self {
        Self { label: label.into(), bbox }
    }
}

#[derive(Serialize, Deserialize)]
struct ElementRecord {
    label: String,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl TryFrom<ElementRecord> for LayoutElement {
    type Error = CoordError;
    fn try_from(r: ElementRecord) -> Result<Self, CoordError> {
        Ok(LayoutElement { label: r.label, bbox: BBox::new(r.x0, r.y0, r.x1, r.y1)? })
    }
}

impl From<LayoutElement> for ElementRecord {
    fn from(e: LayoutElement) -> Self {
        ElementRecord { label: e.label, x0: e.bbox.x0, y0: e.bbox.y0, x1: e.bbox.x1, y1: e.bbox.y1 }
    }
}

/// Bidirectional label name <-> token id map, plus the end-of-sequence id.
#[derive(Debug, Clone)]
pub struct LabelMap {
    eos: u32,
    by_name: BTreeMap<String, u32>,
    by_id: BTreeMap<u32, String>,
}

impl LabelMap {
    pub fn new(
        eos: u32,
        entries: impl IntoIterator<Item = (String, u32)>,
    ) -> Result<Self, CoordError> {
        let mut by_name = BTreeMap::new();
        let mut by_id = BTreeMap::new();
        for (name, id) in entries {
            if id == eos {
                return Err(CoordError::DuplicateId(id));
            }
            if by_id.contains_key(&id) {
                return Err(CoordError::DuplicateId(id));
            }
            if by_name.contains_key(&name) {
                return Err(CoordError::DuplicateName(name));
            }
            by_id.insert(id, name.clone());
            by_name.insert(name, id);
        }
        Ok(Self { eos, by_name, by_id })
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        self.by_id.get(&id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// A flat list of vocabulary indices.
///
/// The text form is whitespace-separated decimal indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self { tokens }
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for TokenSequence {
    type Err = CoordError;

    fn from_str(s: &str) -> Result<Self, CoordError> {
        let mut tokens = Vec::new();
        let mut rest = s;
        let mut offset = 0;
        loop {
            let trimmed = rest.trim_start();
            offset += rest.len() - trimmed.len();
            if trimmed.is_empty() {
                break;
            }
            let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
            let word = &trimmed[..end];
            let token = word.parse::<u32>().map_err(|_| CoordError::BadTokenText {
                position: offset,
                text: word.to_string(),
            })?;
            tokens.push(token);
            offset += end;
            rest = &trimmed[end..];
        }
        Ok(Self { tokens })
    }
}

/// One anomaly observed while parsing a layout sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseDiagnostic {
    /// Sequence ended (or hit EOS) inside a label+4-coordinate group.
    TruncatedGroup { at: usize },
    /// A coordinate slot held a token outside the coordinate range.
    BadCoordinate { at: usize, token: u32 },
    /// A token that is neither a label, a coordinate, nor EOS where a
    /// label was expected.
    UnexpectedToken { at: usize, token: u32 },
    /// Box corners arrived in descending order and were sorted.
    SwappedCorners { element_index: usize },
    /// Tokens after the first EOS were ignored.
    TrailingTokens { count: usize },
    /// The sequence did not end with EOS.
    MissingEos,
}

/// Serializes elements as `[label, x0, y0, x1, y1]*` + EOS, in reading
/// order (ascending y0, then x0).
pub fn encode_layout(
    elements: &[LayoutElement],
    spec: &CoordSpec,
    labels: &LabelMap,
) -> Result<TokenSequence, CoordError> {
    let mut order: Vec<&LayoutElement> = elements.iter().collect();
    order.sort_by(|a, b| {
        a.bbox
            .y0
            .total_cmp(&b.bbox.y0)
            .then(a.bbox.x0.total_cmp(&b.bbox.x0))
    });
    let mut tokens = Vec::with_capacity(elements.len() * 5 + 1);
    for el in order {
        let id = labels
            .id_of(&el.label)
            .ok_or_else(|| CoordError::UnknownLabel(el.label.clone()))?;
        tokens.push(id);
        for c in [el.bbox.x0, el.bbox.y0, el.bbox.x1, el.bbox.y1] {
            tokens.push(coord_token(c, spec)?);
        }
    }
    tokens.push(labels.eos());
    Ok(TokenSequence::new(tokens))
}

/// Greedy inverse of [`encode_layout`], tolerant of malformed model output.
///
/// Never fails: every anomaly is reported as a [`ParseDiagnostic`] and
/// parsing continues past it.
pub fn parse_layout(
    seq: &TokenSequence,
    spec: &CoordSpec,
    labels: &LabelMap,
) -> (Vec<LayoutElement>, Vec<ParseDiagnostic>) {
    let toks = &seq.tokens;
    let mut elements = Vec::new();
    let mut diags = Vec::new();
    let mut i = 0;
    let mut saw_eos = false;
    while i < toks.len() {
        let t = toks[i];
        if t == labels.eos() {
            saw_eos = true;
            let trailing = toks.len() - i - 1;
            if trailing > 0 {
                diags.push(ParseDiagnostic::TrailingTokens { count: trailing });
            }
            break;
        }
        let Some(label) = labels.name_of(t) else {
            diags.push(ParseDiagnostic::UnexpectedToken { at: i, token: t });
            i += 1;
            continue;
        };
        let group = &toks[i + 1..toks.len().min(i + 5)];
        if group.len() < 4 || group.iter().any(|&g| g == labels.eos()) {
            diags.push(ParseDiagnostic::TruncatedGroup { at: i });
            // Skip to the EOS (if it cut the group short) or the end.
            match group.iter().position(|&g| g == labels.eos()) {
                Some(p) => {
                    i += 1 + p;
                    continue;
                }
                None => break,
            }
        }
        if let Some(off) = group.iter().position(|&g| !spec.contains(g)) {
            diags.push(ParseDiagnostic::BadCoordinate { at: i + 1 + off, token: group[off] });
            i += 5;
            continue;
        }
        let c: Vec<f64> = group
            .iter()
            .map(|&g| {
                dequantize_coord(token_bin(g, spec).expect("checked in range"), spec)
                    .expect("bin below bins")
            })
            .collect();
        let (mut x0, mut y0, mut x1, mut y1) = (c[0], c[1], c[2], c[3]);
        let mut swapped = false;
        if x1 < x0 {
            std::mem::swap(&mut x0, &mut x1);
            swapped = true;
        }
        if y1 < y0 {
            std::mem::swap(&mut y0, &mut y1);
            swapped = true;
        }
        if swapped {
            diags.push(ParseDiagnostic::SwappedCorners { element_index: elements.len() });
        }
        let bbox = BBox::new(x0, y0, x1, y1).expect("corner-sorted bin centers are valid");
        elements.push(LayoutElement::new(label.to_string(), bbox));
        i += 5;
    }
    if !saw_eos {
        diags.push(ParseDiagnostic::MissingEos);
    }
    (elements, diags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec1000() -> CoordSpec {
        CoordSpec::with_bins_at(1000, 100).unwrap()
    }

    fn map() -> LabelMap {
        LabelMap::new(
            0,
            [("title".to_string(), 7), ("figure".to_string(), 8), ("table".to_string(), 9)],
        )
        .unwrap()
    }

    #[test]
    fn quantize_hits_frozen_values() {
        let spec = spec1000();
        assert_eq!(quantize_coord(0.0, &spec).unwrap(), 0);
        assert_eq!(quantize_coord(1.0, &spec).unwrap(), 999);
        // round(0.5004 * 999) = round(499.8996) = 500
        assert_eq!(quantize_coord(0.5004, &spec).unwrap(), 500);
    }

    #[test]
    fn quantize_rejects_out_of_range() {
        let spec = spec1000();
        assert_eq!(quantize_coord(-0.01, &spec), Err(CoordError::CoordOutOfRange(-0.01)));
        assert_eq!(quantize_coord(1.01, &spec), Err(CoordError::CoordOutOfRange(1.01)));
    }

    #[test]
    fn dequantize_hits_frozen_values() {
        let spec = spec1000();
        assert_eq!(dequantize_coord(0, &spec).unwrap(), 0.0);
        assert_eq!(dequantize_coord(999, &spec).unwrap(), 1.0);
        let mid = dequantize_coord(500, &spec).unwrap();
        assert!((mid - 500.0 / 999.0).abs() < 1e-15, "got {mid}");
    }

    #[test]
    fn dequantize_rejects_bad_bin() {
        let spec = spec1000();
        assert_eq!(
            dequantize_coord(1000, &spec),
            Err(CoordError::BinOutOfRange { bin: 1000, bins: 1000 })
        );
    }

    #[test]
    fn spec_invariant_enforced() {
        assert!(CoordSpec::new(1000, 100, 1099).is_ok());
        assert!(CoordSpec::new(1000, 100, 1098).is_err());
        assert!(CoordSpec::new(0, 0, 0).is_err());
    }

    #[test]
    fn loc_names_are_one_based() {
        assert_eq!(loc_token_name(0), "<loc_1>");
        assert_eq!(loc_token_name(999), "<loc_1000>");
    }

    #[test]
    fn encode_empty_is_just_eos() {
        let seq = encode_layout(&[], &spec1000(), &map()).unwrap();
        assert_eq!(seq.tokens, vec![0]);
    }

    #[test]
    fn encode_full_page_element() {
        let el = LayoutElement::new("title", BBox::new(0.0, 0.0, 1.0, 1.0).unwrap());
        let seq = encode_layout(&[el], &spec1000(), &map()).unwrap();
        assert_eq!(seq.tokens, vec![7, 100, 100, 1099, 1099, 0]);
    }

    #[test]
    fn encode_sorts_reading_order() {
        let low = LayoutElement::new("title", BBox::new(0.2, 0.9, 0.4, 1.0).unwrap());
        let high = LayoutElement::new("figure", BBox::new(0.2, 0.1, 0.4, 0.2).unwrap());
        let seq = encode_layout(&[low.clone(), high.clone()], &spec1000(), &map()).unwrap();
        // The y0=0.1 element comes first.
        assert_eq!(seq.tokens[0], 8);
        let (parsed, diags) = parse_layout(&seq, &spec1000(), &map());
        assert!(diags.is_empty());
        assert_eq!(parsed[0].label, "figure");
        assert_eq!(parsed[1].label, "title");
    }

    #[test]
    fn encode_unknown_label_errors() {
        let el = LayoutElement::new("caption", BBox::new(0.0, 0.0, 1.0, 1.0).unwrap());
        assert_eq!(
            encode_layout(&[el], &spec1000(), &map()),
            Err(CoordError::UnknownLabel("caption".to_string()))
        );
    }

    #[test]
    fn parse_truncated_group_drops_and_diagnoses() {
        let seq = TokenSequence::new(vec![7, 100, 100, 0]);
        let (els, diags) = parse_layout(&seq, &spec1000(), &map());
        assert!(els.is_empty());
        assert_eq!(diags, vec![ParseDiagnostic::TruncatedGroup { at: 0 }]);
    }

    #[test]
    fn parse_corner_sorts_swapped_boxes() {
        let seq = TokenSequence::new(vec![7, 100, 1099, 1099, 100, 0]);
        let (els, diags) = parse_layout(&seq, &spec1000(), &map());
        assert_eq!(els.len(), 1);
        assert_eq!(els[0].bbox, BBox::new(0.0, 0.0, 1.0, 1.0).unwrap());
        assert_eq!(diags, vec![ParseDiagnostic::SwappedCorners { element_index: 0 }]);
    }

    #[test]
    fn parse_bad_coordinate_drops_group() {
        // Second coordinate slot holds a label token.
        let seq = TokenSequence::new(vec![7, 100, 8, 1099, 100, 7, 100, 100, 1099, 1099, 0]);
        let (els, diags) = parse_layout(&seq, &spec1000(), &map());
        assert_eq!(els.len(), 1, "second group survives");
        assert_eq!(diags, vec![ParseDiagnostic::BadCoordinate { at: 2, token: 8 }]);
    }

    #[test]
    fn parse_skips_unexpected_tokens() {
        let seq = TokenSequence::new(vec![5000, 7, 100, 100, 1099, 1099, 0]);
        let (els, diags) = parse_layout(&seq, &spec1000(), &map());
        assert_eq!(els.len(), 1);
        assert_eq!(diags, vec![ParseDiagnostic::UnexpectedToken { at: 0, token: 5000 }]);
    }

    #[test]
    fn parse_reports_trailing_and_missing_eos() {
        let (_, diags) = parse_layout(&TokenSequence::new(vec![0, 7]), &spec1000(), &map());
        assert_eq!(diags, vec![ParseDiagnostic::TrailingTokens { count: 1 }]);
        let (_, diags) = parse_layout(&TokenSequence::new(vec![7, 100, 100, 1099, 1099]), &spec1000(), &map());
        assert_eq!(diags, vec![ParseDiagnostic::MissingEos]);
    }

    #[test]
    fn token_sequence_text_round_trip() {
        let seq = TokenSequence::new(vec![7, 100, 100, 1099, 1099, 0]);
        let text = seq.to_string();
        assert_eq!(text, "7 100 100 1099 1099 0");
        assert_eq!(text.parse::<TokenSequence>().unwrap(), seq);
    }

    #[test]
    fn token_sequence_parse_reports_position() {
        let err = "12 x34".parse::<TokenSequence>().unwrap_err();
        assert_eq!(err, CoordError::BadTokenText { position: 3, text: "x34".to_string() });
    }

    #[test]
    fn element_jsonl_round_trip() {
        let el = LayoutElement::new("title", BBox::new(0.25, 0.0, 0.5, 0.125).unwrap());
        let line = serde_json::to_string(&el).unwrap();
        assert_eq!(line, r#"{"label":"title","x0":0.25,"y0":0.0,"x1":0.5,"y1":0.125}"#);
        let back: LayoutElement = serde_json::from_str(&line).unwrap();
        assert_eq!(back, el);
    }

    #[test]
    fn element_jsonl_rejects_degenerate_boxes() {
        let bad = r#"{"label":"title","x0":0.5,"y0":0.0,"x1":0.25,"y1":0.125}"#;
        assert!(serde_json::from_str::<LayoutElement>(bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_error_is_at_most_half_bin(c in 0.0f64..=1.0, bins in 2usize..2000) {
            let spec = CoordSpec::with_bins_at(bins, 10).unwrap();
            let b = quantize_coord(c, &spec).unwrap();
            let back = dequantize_coord(b, &spec).unwrap();
            let half_bin = 0.5 / (bins - 1) as f64;
            prop_assert!((back - c).abs() <= half_bin + 1e-12);
        }

        #[test]
        fn quantize_is_identity_on_bin_centers(b in 0usize..2000, extra in 2usize..2000) {
            let bins = extra.max(b + 1);
            let spec = CoordSpec::with_bins_at(bins, 0).unwrap();
            let c = dequantize_coord(b.min(bins - 1), &spec).unwrap();
            prop_assert_eq!(quantize_coord(c, &spec).unwrap(), b.min(bins - 1));
        }

        #[test]
        fn encode_parse_round_trips_on_bin_centers(
            raw in proptest::collection::vec((0u8..3, 0usize..50, 0usize..50, 0usize..50, 0usize..50), 0..6)
        ) {
            let spec = CoordSpec::with_bins_at(50, 100).unwrap();
            let labels = map();
            let names = ["title", "figure", "table"];
            let elements: Vec<LayoutElement> = raw
                .iter()
                .map(|&(l, a, b, c, d)| {
                    let (x0, x1) = (a.min(c), a.max(c));
                    let (y0, y1) = (b.min(d), b.max(d));
                    LayoutElement::new(
                        names[l as usize],
                        BBox::new(
                            dequantize_coord(x0, &spec).unwrap(),
                            dequantize_coord(y0, &spec).unwrap(),
                            dequantize_coord(x1, &spec).unwrap(),
                            dequantize_coord(y1, &spec).unwrap(),
                        )
                        .unwrap(),
                    )
                })
                .collect();
            let seq = encode_layout(&elements, &spec, &labels).unwrap();
            let (parsed, diags) = parse_layout(&seq, &spec, &labels);
            prop_assert!(diags.is_empty(), "diags: {diags:?}");
            // encode_layout sorts, so compare against the sorted originals.
            let mut sorted = elements.clone();
            sorted.sort_by(|a, b| {
                a.bbox.y0.total_cmp(&b.bbox.y0).then(a.bbox.x0.total_cmp(&b.bbox.x0))
            });
            prop_assert_eq!(parsed, sorted);
        }

        #[test]
        fn parse_never_panics(tokens in proptest::collection::vec(0u32..6000, 0..64)) {
            let _ = parse_layout(&TokenSequence::new(tokens), &spec1000(), &map());
        }
    }
}
