//! Edit distance, BLEU, and exact-match rate.

use std::collections::BTreeMap;

use serde::Serialize;

use super::MetricsError;
use crate::latex::{normalize, RuleSet};

/// Levenshtein distance between two slices, by rolling-row dynamic
/// programming.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, ai) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, bj) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ai != bj);
            curr[j + 1] = substitute.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Character-level distance (unicode scalar values, not bytes).
pub fn edit_distance_chars(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance(&a, &b)
}

/// Distance divided by the longer length; two empty sequences → 0.
pub fn normalized_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        0.0
    } else {
        edit_distance(a, b) as f64 / longest as f64
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BleuScore {
    pub score: f64,
    /// The score is zero outside the smoothed formula: empty candidate,
    /// no references, or zero unigram overlap.
    pub floored: bool,
}

fn ngram_counts<T: Ord + Clone>(tokens: &[T], n: usize) -> BTreeMap<Vec<T>, usize> {
    let mut counts = BTreeMap::new();
    for window in tokens.windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    counts
}

/// Geometric mean of clipped n-gram precisions up to `max_n`, with a
/// brevity penalty. Orders ≥ 2 get add-one smoothing; a zero unigram
/// precision floors the whole score to 0, so disjoint texts score 0.
pub fn bleu<T: Ord + Clone>(candidate: &[T], references: &[Vec<T>], max_n: usize) -> BleuScore {
    assert!(max_n >= 1, "max_n must be at least 1");
    if candidate.is_empty() || references.is_empty() {
        return BleuScore { score: 0.0, floored: true };
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand_counts = ngram_counts(candidate, n);
        let total: usize = cand_counts.values().sum();
        let mut clipped = 0usize;
        for (gram, &count) in &cand_counts {
            let best_ref = references
                .iter()
                .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(best_ref);
        }
        let precision = if n == 1 {
            if clipped == 0 {
                return BleuScore { score: 0.0, floored: true };
            }
            clipped as f64 / total as f64
        } else {
            // Add-one smoothing; a candidate shorter than n contributes a
            // neutral 1/1.
            (clipped + 1) as f64 / (total + 1) as f64
        };
        log_sum += precision.ln();
    }
    // Effective reference length: closest to the candidate, shorter wins ties.
    let c = candidate.len();
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("nonempty references");
    let brevity = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    BleuScore { score: brevity * (log_sum / max_n as f64).exp(), floored: false }
}

/// Fraction of exactly matching pairs. With `normalize_first`, both sides
/// are canonicalized first so formatting variance does not count as error;
/// a pair whose normalization fails is compared raw.
pub fn exp_rate(preds: &[String], refs: &[String], normalize_first: bool) -> Result<f64, MetricsError> {
    if preds.len() != refs.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), refs: refs.len() });
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let rules = RuleSet::all();
    let canon = |s: &str| {
        if normalize_first {
            normalize(s, &rules).unwrap_or_else(|_| s.to_string())
        } else {
            s.to_string()
        }
    };
    let matches = preds.iter().zip(refs).filter(|(p, r)| canon(p) == canon(r)).count();
    Ok(matches as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_sequences_have_zero_distance() {
        assert_eq!(edit_distance_chars("abc", "abc"), 0);
    }

    #[test]
    fn kitten_to_sitting_is_three() {
        assert_eq!(edit_distance_chars("kitten", "sitting"), 3);
    }

    #[test]
    fn empty_to_abc_is_pure_insertions() {
        assert_eq!(edit_distance_chars("", "abc"), 3);
        assert_eq!(edit_distance_chars("abc", ""), 3);
    }

    #[test]
    fn normalized_distance_handles_empty_pair() {
        assert_eq!(normalized_edit_distance::<char>(&[], &[]), 0.0);
        let a: Vec<char> = "ab".chars().collect();
        let b: Vec<char> = "abcd".chars().collect();
        assert_eq!(normalized_edit_distance(&a, &b), 0.5);
    }

    /// The textbook recurrence, memoized: an independent check of the
    /// rolling-row implementation.
    fn reference_distance(a: &[char], b: &[char]) -> usize {
        fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if i == 0 {
                return j;
            }
            if j == 0 {
                return i;
            }
            if let Some(d) = memo[i][j] {
                return d;
            }
            let sub = go(a, b, i - 1, j - 1, memo) + usize::from(a[i - 1] != b[j - 1]);
            let del = go(a, b, i - 1, j, memo) + 1;
            let ins = go(a, b, i, j - 1, memo) + 1;
            let d = sub.min(del).min(ins);
            memo[i][j] = Some(d);
            d
        }
        let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
        go(a, b, a.len(), b.len(), &mut memo)
    }

    proptest! {
        #[test]
        fn matches_textbook_recurrence(a in "[ab]{0,8}", b in "[ab]{0,8}") {
            let av: Vec<char> = a.chars().collect();
            let bv: Vec<char> = b.chars().collect();
            prop_assert_eq!(edit_distance(&av, &bv), reference_distance(&av, &bv));
        }

        #[test]
        fn distance_is_a_metric(a in "[abc]{0,6}", b in "[abc]{0,6}", c in "[abc]{0,6}") {
            let av: Vec<char> = a.chars().collect();
            let bv: Vec<char> = b.chars().collect();
            let cv: Vec<char> = c.chars().collect();
            prop_assert_eq!(edit_distance(&av, &av), 0);
            prop_assert_eq!(edit_distance(&av, &bv), edit_distance(&bv, &av));
            prop_assert!(edit_distance(&av, &cv) <= edit_distance(&av, &bv) + edit_distance(&bv, &cv));
        }

        #[test]
        fn bleu_stays_in_unit_interval(c in "[abcd ]{0,20}", r in "[abcd ]{0,20}") {
            let cand: Vec<&str> = c.split_whitespace().collect();
            let refr: Vec<Vec<&str>> = vec![r.split_whitespace().collect()];
            let s = bleu(&cand, &refr, 4);
            prop_assert!((0.0..=1.0).contains(&s.score), "score {}", s.score);
        }
    }

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn bleu_of_identical_text_is_one() {
        let c = toks("a b c d e");
        let s = bleu(&c, &[c.clone()], 4);
        assert!((s.score - 1.0).abs() < 1e-12, "got {}", s.score);
        assert!(!s.floored);
    }

    #[test]
    fn bleu_of_disjoint_text_is_floored_zero() {
        let s = bleu(&toks("a b"), &[toks("c d")], 4);
        assert_eq!(s.score, 0.0);
        assert!(s.floored);
    }

    #[test]
    fn bleu_of_empty_candidate_is_flagged() {
        let s = bleu(&Vec::<&str>::new(), &[toks("a")], 4);
        assert_eq!(s.score, 0.0);
        assert!(s.floored);
    }

    #[test]
    fn bleu_matches_hand_computed_example() {
        // 5-token candidate against a 6-token reference, worked from raw
        // n-gram counts: p1=4/5, p2=(1+1)/(4+1), p3=(0+1)/(3+1),
        // p4=(0+1)/(2+1), brevity exp(1-6/5).
        let c = toks("the cat sat on mat");
        let r = toks("the cat is on the mat");
        let expected = (1.0f64 - 6.0 / 5.0).exp()
            * ((0.8f64.ln() + 0.4f64.ln() + 0.25f64.ln() + (1.0f64 / 3.0).ln()) / 4.0).exp();
        let s = bleu(&c, &[r], 4);
        assert!((s.score - expected).abs() < 1e-12, "got {} want {expected}", s.score);
    }

    #[test]
    fn brevity_penalty_only_punishes_short_candidates() {
        let long = toks("a b c d e f");
        let short = toks("a b c");
        // Candidate longer than reference: no penalty applied.
        let s = bleu(&long, &[toks("a b c")], 1);
        assert!((s.score - 0.5).abs() < 1e-12, "got {}", s.score);
        // Candidate half the reference length: exp(1-2) on a perfect p1.
        let s = bleu(&short, &[toks("a b c d e f")], 1);
        assert!((s.score - (-1.0f64).exp()).abs() < 1e-12, "got {}", s.score);
    }

    #[test]
    fn exp_rate_counts_exact_matches() {
        let preds = vec!["x".to_string(), "y".to_string()];
        let refs = vec!["x".to_string(), "z".to_string()];
        assert_eq!(exp_rate(&preds, &refs, false).unwrap(), 0.5);
    }

    #[test]
    fn exp_rate_normalization_forgives_formatting() {
        let preds = vec!["a^1_2".to_string()];
        let refs = vec!["a_2^1".to_string()];
        assert_eq!(exp_rate(&preds, &refs, false).unwrap(), 0.0);
        assert_eq!(exp_rate(&preds, &refs, true).unwrap(), 1.0);
    }

    #[test]
    fn exp_rate_rejects_mismatched_lengths() {
        let one = vec!["x".to_string()];
        assert_eq!(
            exp_rate(&one, &[], false).unwrap_err(),
            MetricsError::LengthMismatch { preds: 1, refs: 0 }
        );
    }
}
