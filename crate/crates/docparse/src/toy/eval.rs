//! Evaluation against clean scenes.
//!
//! Coordinate error is measured teacher-forced: the model sees the
//! clean detection sequence and the argmax is taken over the
//! coordinate slice only, so the number is a pure localization error
//! in bins, insulated from EOS or class mistakes. Detection F1 and
//! text exact-match come from free greedy decoding; the detection
//! decode is constrained to the layout grammar (see
//! [`decode_layout_constrained`]).

use serde::Serialize;

use crate::coord::{encode_layout, parse_layout, token_bin, CoordSpec, LabelMap, LayoutElement, TokenSequence};
use crate::metrics::{match_detections, prf1, Prf1, ScoredDetection};

use super::decoder::argmax;
use super::scene::text_sequence;
use super::{vocab, SyntheticScene, TinyDecoder, ToyError};

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    /// Teacher-forced mean absolute error in bins, against clean labels.
    pub coordinate_mae: f64,
    /// Micro-averaged detection scores from free decoding at IoU 0.5.
    pub detection: Prf1,
    /// True when free decoding produced no element on any scene, which
    /// is also the only way precision 0 can be vacuous.
    pub no_predictions: bool,
    /// Share of scenes whose decoded text matches exactly.
    pub text_exact_match: f64,
    /// Layout-parse diagnostics summed over decoded sequences.
    pub decode_diagnostics: usize,
}

const EVAL_IOU: f64 = 0.5;

pub fn evaluate_toy(
    model: &TinyDecoder,
    scenes: &[SyntheticScene],
    spec: &CoordSpec,
    labels: &LabelMap,
) -> Result<EvalSummary, ToyError> {
    if scenes.is_empty() {
        return Err(ToyError::EmptyDataset);
    }
    let mut abs_err = 0.0;
    let mut coords = 0usize;
    let mut matched = 0usize;
    let mut preds = 0usize;
    let mut gts = 0usize;
    let mut diagnostics = 0usize;
    let mut text_hits = 0usize;
    for scene in scenes {
        let cells = scene.cells_f64();
        let clean: Vec<u32> = std::iter::once(vocab::TASK_DET)
            .chain(encode_layout(&scene.elements, spec, labels)?.tokens)
            .collect();
        let (logits, _) = model.forward(&cells, &clean[..clean.len() - 1])?;
        let (s, e) = (spec.start_index as usize, spec.end_index as usize);
        for (j, &target) in clean.iter().enumerate().skip(1) {
            if !spec.contains(target) {
                continue;
            }
            let pred_bin = argmax(&logits.row(0, j)[s..=e]);
            let true_bin = token_bin(target, spec)?;
            abs_err += (pred_bin as f64 - true_bin as f64).abs();
            coords += 1;
        }

        let decoded = decode_layout_constrained(model, &cells, spec, labels)?;
        let (m, p, g, d) = score_detection(decoded, &scene.elements, spec, labels);
        matched += m;
        preds += p;
        gts += g;
        diagnostics += d;

        let text = model.greedy_decode(&cells, vocab::TASK_TEXT, vocab::EOS)?;
        text_hits += usize::from(text.as_slice() == &text_sequence(scene)[1..]);
    }
    Ok(EvalSummary {
        coordinate_mae: if coords == 0 { 0.0 } else { abs_err / coords as f64 },
        detection: prf1(matched, preds, gts),
        no_predictions: preds == 0,
        text_exact_match: text_hits as f64 / scenes.len() as f64,
        decode_diagnostics: diagnostics,
    })
}

/// Greedy decode restricted to the layout grammar.
///
/// The serialization is `(label x0 y0 x1 y1)* EOS`, so the legal set at
/// every step is known without lookahead: group boundaries pick among
/// the label tokens or EOS, the four slots after a label pick among the
/// coordinate range. The argmax runs over that set only. The grammar is
/// a property of the serialization, not of a training objective, so
/// every model is decoded the same way.
pub fn decode_layout_constrained(
    model: &TinyDecoder,
    cells: &[f64],
    spec: &CoordSpec,
    labels: &LabelMap,
) -> Result<Vec<u32>, ToyError> {
    let mut toks = vec![vocab::TASK_DET];
    while toks.len() + 1 < model.cfg().max_len {
        let (logits, _) = model.forward(cells, &toks)?;
        let row = logits.row(0, toks.len());
        let next = if (toks.len() - 1) % 5 == 0 {
            let candidates = (0..row.len() as u32)
                .filter(|&t| t == labels.eos() || labels.name_of(t).is_some());
            best_token(row, candidates)
        } else {
            best_token(row, spec.start_index..=spec.end_index)
        };
        toks.push(next);
        if next == labels.eos() {
            break;
        }
    }
    Ok(toks.split_off(1))
}

/// Argmax over a restricted candidate set, lowest id on ties like
/// [`argmax`]. The set is never empty: labels and coordinate ranges
/// are non-empty by construction.
fn best_token(row: &[f64], candidates: impl IntoIterator<Item = u32>) -> u32 {
    let mut best: Option<(u32, f64)> = None;
    for t in candidates {
        let v = row[t as usize];
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((t, v));
        }
    }
    best.expect("empty candidate set").0
}

/// Parses a decoded detection sequence and matches it against ground
/// truth. Returns (matched, predictions, ground truths, diagnostics).
fn score_detection(
    decoded: Vec<u32>,
    truth: &[LayoutElement],
    spec: &CoordSpec,
    labels: &LabelMap,
) -> (usize, usize, usize, usize) {
    let (elements, diags) = parse_layout(&TokenSequence::new(decoded), spec, labels);
    let scored: Vec<ScoredDetection> = elements.into_iter().map(ScoredDetection::unscored).collect();
    let result = match_detections(&scored, truth, EVAL_IOU);
    (result.pairs.len(), scored.len(), truth.len(), diags.len())
}

#[cfg(test)]
mod tests {
    use super::super::{
        coord_spec, generate_scene, label_map, TinyDecoderConfig, ToySceneConfig,
    };
    use super::*;

    #[test]
    fn replayed_ground_truth_scores_perfectly() {
        let cfg = ToySceneConfig::default();
        let spec = coord_spec(cfg.grid);
        let labels = label_map();
        for seed in 0..20 {
            let scene = generate_scene(seed, &cfg).unwrap();
            let clean = encode_layout(&scene.elements, &spec, &labels).unwrap().tokens;
            let (m, p, g, d) = score_detection(clean, &scene.elements, &spec, &labels);
            assert_eq!(m, scene.elements.len(), "seed {seed}");
            assert_eq!(p, g);
            assert_eq!(d, 0);
        }
    }

    #[test]
    fn garbage_sequence_scores_zero_with_diagnostics() {
        let cfg = ToySceneConfig::default();
        let spec = coord_spec(cfg.grid);
        let labels = label_map();
        let scene = generate_scene(1, &cfg).unwrap();
        let (m, p, g, d) = score_detection(vec![13, 13, 9, 9], &scene.elements, &spec, &labels);
        assert_eq!(m, 0);
        assert_eq!(p, 0);
        assert_eq!(g, scene.elements.len());
        assert!(d > 0, "malformed tokens must surface as diagnostics");
    }

    #[test]
    fn constrained_decode_emits_only_grammatical_sequences() {
        use crate::coord::ParseDiagnostic;
        let scene_cfg = ToySceneConfig::default();
        let spec = coord_spec(scene_cfg.grid);
        let labels = label_map();
        for seed in 0..6 {
            let dec_cfg = TinyDecoderConfig { seed, ..Default::default() };
            let model = TinyDecoder::new(dec_cfg).unwrap();
            let scene = generate_scene(seed, &scene_cfg).unwrap();
            let toks = decode_layout_constrained(&model, &scene.cells_f64(), &spec, &labels).unwrap();
            let (_, diags) = parse_layout(&TokenSequence::new(toks), &spec, &labels);
            for d in diags {
                // Budget truncation and corner order are reachable even
                // under the grammar; structural violations are not.
                assert!(
                    matches!(
                        d,
                        ParseDiagnostic::TruncatedGroup { .. }
                            | ParseDiagnostic::SwappedCorners { .. }
                            | ParseDiagnostic::MissingEos
                    ),
                    "seed {seed}: ungrammatical decode: {d:?}"
                );
            }
        }
    }

    #[test]
    fn untrained_model_evaluates_but_scores_poorly() {
        let scene_cfg = ToySceneConfig { grid: 8, min_side: 2, max_elements: 2 };
        let scenes: Vec<_> = (0..8).map(|s| generate_scene(s, &scene_cfg).unwrap()).collect();
        let spec = coord_spec(8);
        let labels = label_map();
        let dec_cfg = TinyDecoderConfig {
            embed_dim: 16,
            num_heads: 2,
            vocab: super::super::vocab_size(8),
            input_cells: 64,
            ..Default::default()
        };
        let model = TinyDecoder::new(dec_cfg).unwrap();
        let summary = evaluate_toy(&model, &scenes, &spec, &labels).unwrap();
        assert!(summary.coordinate_mae.is_finite() && summary.coordinate_mae >= 0.0);
        assert!(summary.detection.f1 < 0.5, "an untrained model should not detect well");
        assert!(summary.text_exact_match < 0.5);
        assert!((0.0..=1.0).contains(&summary.detection.precision));
    }

    #[test]
    fn no_scenes_is_an_error() {
        let dec_cfg = TinyDecoderConfig {
            embed_dim: 16,
            num_heads: 2,
            vocab: super::super::vocab_size(8),
            input_cells: 64,
            ..Default::default()
        };
        let model = TinyDecoder::new(dec_cfg).unwrap();
        let spec = coord_spec(8);
        let labels = label_map();
        assert!(matches!(
            evaluate_toy(&model, &[], &spec, &labels),
            Err(ToyError::EmptyDataset)
        ));
    }
}
