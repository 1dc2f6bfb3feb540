//! Synthetic scenes: axis-aligned patterned rectangles on a small grid.
//!
//! Rectangles snap to cell boundaries, so box coordinates k/grid hit
//! quantizer bins exactly and clean labels carry no rounding error.
//! Label noise then perturbs coordinate tokens only, which is the
//! regime the smoothed losses are meant to absorb.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coord::{BBox, CoordSpec, LayoutElement};

use super::{vocab, ToyError, CLASS_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ToySceneConfig {
    /// Cells per side.
    pub grid: usize,
    /// Minimum rectangle side, in cells.
    pub min_side: usize,
    /// Elements per scene are drawn uniformly from 1..=max_elements.
    pub max_elements: usize,
}

impl Default for ToySceneConfig {
    fn default() -> Self {
        Self { grid: 32, min_side: 3, max_elements: 3 }
    }
}

impl ToySceneConfig {
    fn validate(&self) -> Result<(), ToyError> {
        if self.grid == 0 || self.min_side == 0 || self.max_elements == 0 {
            return Err(ToyError::BadSceneConfig("grid, min_side, max_elements must be positive".into()));
        }
        if self.min_side > self.grid {
            return Err(ToyError::BadSceneConfig(format!(
                "min_side {} exceeds grid {}",
                self.min_side, self.grid
            )));
        }
        Ok(())
    }
}

/// One rendered scene with its ground truth.
///
/// `texts[i]` belongs to `elements[i]`; both are in generation order.
/// Sequence builders sort by reading order (y0, then x0) themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub grid: usize,
    /// Row-major grid*grid occupancy raster, values 0 or 1.
    pub cells: Vec<u8>,
    pub elements: Vec<LayoutElement>,
    /// Two characters per element: class letter and size letter.
    pub texts: Vec<[u32; 2]>,
}

impl SyntheticScene {
    /// Raster as f64 for the decoder's conditioning slot.
    pub fn cells_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| c as f64).collect()
    }
}

pub fn generate_scene(seed: u64, config: &ToySceneConfig) -> Result<SyntheticScene, ToyError> {
    config.validate()?;
    let g = config.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(1..=config.max_elements);
    let mut cells = vec![0u8; g * g];
    let mut elements = Vec::with_capacity(count);
    let mut texts = Vec::with_capacity(count);
    for _ in 0..count {
        let class = rng.gen_range(0..CLASS_NAMES.len());
        let cx = rng.gen_range(0..=g - config.min_side);
        let cy = rng.gen_range(0..=g - config.min_side);
        let w = rng.gen_range(config.min_side..=g - cx);
        let h = rng.gen_range(config.min_side..=g - cy);
        paint(&mut cells, g, class, cx, cy, w, h);
        let bbox = BBox::new(
            cx as f64 / g as f64,
            cy as f64 / g as f64,
            (cx + w) as f64 / g as f64,
            (cy + h) as f64 / g as f64,
        )?;
        elements.push(LayoutElement::new(CLASS_NAMES[class], bbox));
        texts.push([vocab::CHAR_BASE + class as u32, size_char(w * h)]);
    }
    Ok(SyntheticScene { grid: g, cells, elements, texts })
}

/// Size letter by cell area: s < 25, m < 64, l otherwise.
fn size_char(area: usize) -> u32 {
    let idx = if area < 25 {
        0
    } else if area < 64 {
        1
    } else {
        2
    };
    vocab::CHAR_BASE + 3 + idx
}

fn paint(cells: &mut [u8], grid: usize, class: usize, cx: usize, cy: usize, w: usize, h: usize) {
    for y in cy..cy + h {
        for x in cx..cx + w {
            let on = match class {
                0 => true,
                1 => (x + y) % 2 == 0,
                _ => y == cy || y == cy + h - 1 || x == cx || x == cx + w - 1,
            };
            if on {
                cells[y * grid + x] = 1;
            }
        }
    }
}

/// Indices of `elements` in reading order: y0 ascending, then x0.
/// Matches the order the layout encoder emits.
pub(super) fn reading_order(elements: &[LayoutElement]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..elements.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&elements[a].bbox, &elements[b].bbox);
        ea.y0.total_cmp(&eb.y0).then(ea.x0.total_cmp(&eb.x0))
    });
    order
}

/// Text task target: task token, two characters per element in reading
/// order, end of sequence.
pub(super) fn text_sequence(scene: &SyntheticScene) -> Vec<u32> {
    let mut seq = vec![vocab::TASK_TEXT];
    for i in reading_order(&scene.elements) {
        seq.extend_from_slice(&scene.texts[i]);
    }
    seq.push(vocab::EOS);
    seq
}

/// Coordinate label noise: each coordinate token independently shifts
/// with the given probability, uniformly by up to `max_shift` bins
/// (zero included), clamped to the bin range. Non-coordinate tokens
/// never move.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NoiseSpec {
    pub max_shift: usize,
    pub probability: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { max_shift: 2, probability: 0.5 }
    }
}

impl NoiseSpec {
    fn validate(&self) -> Result<(), ToyError> {
        if !(0.0..=1.0).contains(&self.probability) || !self.probability.is_finite() {
            return Err(ToyError::BadSceneConfig(format!(
                "noise probability {} outside [0, 1]",
                self.probability
            )));
        }
        Ok(())
    }
}

pub fn perturb_labels(
    tokens: &[u32],
    spec: &CoordSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<u32>, ToyError> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = noise.max_shift as i64;
    let out = tokens
        .iter()
        .map(|&t| {
            if !spec.contains(t) || max == 0 || !rng.gen_bool(noise.probability) {
                return t;
            }
            let bin = (t - spec.start_index) as i64 + rng.gen_range(-max..=max);
            spec.start_index + bin.clamp(0, spec.bins as i64 - 1) as u32
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{coord_spec, vocab};
    use super::*;
    use crate::coord::{coord_token, dequantize_coord, token_bin};

    fn coord_tokens_of(scene: &SyntheticScene, spec: &CoordSpec) -> Vec<u32> {
        scene
            .elements
            .iter()
            .flat_map(|e| [e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1])
            .map(|c| coord_token(c, spec).unwrap())
            .collect()
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = ToySceneConfig::default();
        let a = generate_scene(7, &cfg).unwrap();
        let b = generate_scene(7, &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(8, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn max_elements_one_gives_one() {
        let cfg = ToySceneConfig { max_elements: 1, ..Default::default() };
        for seed in 0..20 {
            assert_eq!(generate_scene(seed, &cfg).unwrap().elements.len(), 1);
        }
    }

    #[test]
    fn element_count_is_roughly_uniform() {
        let cfg = ToySceneConfig::default();
        let mut counts = [0usize; 3];
        let n = 1000;
        for seed in 0..n {
            counts[generate_scene(seed, &cfg).unwrap().elements.len() - 1] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.05, "count frequency {freq} off uniform");
        }
    }

    #[test]
    fn boxes_sit_on_cell_boundaries() {
        let cfg = ToySceneConfig::default();
        let spec = coord_spec(cfg.grid);
        for seed in 0..50 {
            let scene = generate_scene(seed, &cfg).unwrap();
            for e in &scene.elements {
                for c in [e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1] {
                    let tok = coord_token(c, &spec).unwrap();
                    let back = dequantize_coord(token_bin(tok, &spec).unwrap(), &spec).unwrap();
                    assert_eq!(back, c, "quantization must be lossless on boundaries");
                }
                assert!((e.bbox.x1 - e.bbox.x0) * cfg.grid as f64 >= cfg.min_side as f64);
                assert!((e.bbox.y1 - e.bbox.y0) * cfg.grid as f64 >= cfg.min_side as f64);
            }
        }
    }

    #[test]
    fn patterns_match_their_class() {
        let g = 8;
        let rect = (1usize, 2usize, 4usize, 3usize);
        let mut solid = vec![0u8; g * g];
        paint(&mut solid, g, 0, rect.0, rect.1, rect.2, rect.3);
        let mut checker = vec![0u8; g * g];
        paint(&mut checker, g, 1, rect.0, rect.1, rect.2, rect.3);
        let mut hollow = vec![0u8; g * g];
        paint(&mut hollow, g, 2, rect.0, rect.1, rect.2, rect.3);
        for y in rect.1..rect.1 + rect.3 {
            for x in rect.0..rect.0 + rect.2 {
                assert_eq!(solid[y * g + x], 1);
                assert_eq!(checker[y * g + x], u8::from((x + y) % 2 == 0));
                let border =
                    y == rect.1 || y == rect.1 + rect.3 - 1 || x == rect.0 || x == rect.0 + rect.2 - 1;
                assert_eq!(hollow[y * g + x], u8::from(border));
            }
        }
        assert_eq!(solid[0], 0, "outside the rect stays empty");
    }

    #[test]
    fn text_sequence_reads_top_to_bottom() {
        let scene = SyntheticScene {
            grid: 32,
            cells: vec![0; 32 * 32],
            elements: vec![
                LayoutElement::new("solid", BBox::new(0.5, 0.5, 0.7, 0.7).unwrap()),
                LayoutElement::new("hollow", BBox::new(0.0, 0.0, 0.9, 0.2).unwrap()),
            ],
            texts: vec![[vocab::CHAR_BASE, vocab::CHAR_BASE + 3], [vocab::CHAR_BASE + 2, vocab::CHAR_BASE + 5]],
        };
        let seq = text_sequence(&scene);
        // hollow element is higher on the page, so its chars come first
        assert_eq!(
            seq,
            vec![
                vocab::TASK_TEXT,
                vocab::CHAR_BASE + 2,
                vocab::CHAR_BASE + 5,
                vocab::CHAR_BASE,
                vocab::CHAR_BASE + 3,
                vocab::EOS
            ]
        );
    }

    #[test]
    fn size_char_thresholds() {
        assert_eq!(size_char(9), vocab::CHAR_BASE + 3);
        assert_eq!(size_char(24), vocab::CHAR_BASE + 3);
        assert_eq!(size_char(25), vocab::CHAR_BASE + 4);
        assert_eq!(size_char(63), vocab::CHAR_BASE + 4);
        assert_eq!(size_char(64), vocab::CHAR_BASE + 5);
        assert_eq!(size_char(1024), vocab::CHAR_BASE + 5);
    }

    #[test]
    fn zero_probability_noise_is_identity() {
        let spec = coord_spec(32);
        let scene = generate_scene(3, &ToySceneConfig::default()).unwrap();
        let toks = coord_tokens_of(&scene, &spec);
        let noise = NoiseSpec { max_shift: 2, probability: 0.0 };
        assert_eq!(perturb_labels(&toks, &spec, &noise, 99).unwrap(), toks);
        let zero_shift = NoiseSpec { max_shift: 0, probability: 1.0 };
        assert_eq!(perturb_labels(&toks, &spec, &zero_shift, 99).unwrap(), toks);
    }

    #[test]
    fn noise_moves_only_coordinates_and_stays_bounded() {
        let spec = coord_spec(32);
        let mut toks = vec![vocab::TASK_DET, vocab::CLASS_BASE, vocab::EOS];
        toks.extend((0..200).map(|i| spec.start_index + (i % spec.bins) as u32));
        let noise = NoiseSpec { max_shift: 1, probability: 1.0 };
        let out = perturb_labels(&toks, &spec, &noise, 5).unwrap();
        assert_eq!(&out[..3], &toks[..3], "non-coordinate tokens untouched");
        let mut moved = 0;
        for (a, b) in toks[3..].iter().zip(&out[3..]) {
            assert!(spec.contains(*b));
            let d = (*a as i64 - *b as i64).abs();
            assert!(d <= 1, "shift {d} exceeds max_shift");
            moved += usize::from(d != 0);
        }
        assert!(moved > 0, "probability 1 with shift 1 should move some tokens");
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let spec = coord_spec(32);
        let toks: Vec<u32> = (0..50).map(|i| spec.start_index + (i % spec.bins) as u32).collect();
        let noise = NoiseSpec::default();
        let a = perturb_labels(&toks, &spec, &noise, 11).unwrap();
        let b = perturb_labels(&toks, &spec, &noise, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cfg = ToySceneConfig { min_side: 40, grid: 32, max_elements: 2 };
        assert!(matches!(generate_scene(0, &cfg), Err(ToyError::BadSceneConfig(_))));
        let noise = NoiseSpec { max_shift: 1, probability: 1.5 };
        let spec = coord_spec(32);
        assert!(perturb_labels(&[12], &spec, &noise, 0).is_err());
    }
}
