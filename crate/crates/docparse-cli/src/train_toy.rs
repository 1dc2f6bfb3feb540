//! `docparse train-toy`: paired training runs on identical scenes,
//! seeds, and init, differing only in the loss. The report embeds the
//! fully resolved configuration, per-epoch curves, and held-in eval;
//! an optional SVG plots the curves together.
//!
//! When both `ce` and `gk-cel` run, the report also carries the step-0
//! off-range check: both losses evaluated at init on the positions
//! whose target lies outside the coordinate range, where they must
//! agree to rounding.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use docparse::loss::{cross_entropy_with_epsilon, gk_cel, build_kernel, LossConfig};
use docparse::toy::{
    build_dataset, generate_scene, train, vocab_size, NoiseSpec, Objective, OptimizerConfig,
    TinyDecoder, TinyDecoderConfig, ToyDataset, ToyError, ToySceneConfig, TrainReport,
};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    scenes: usize,
    /// Independently noised copies of each scene
    #[arg(long, default_value_t = 3)]
    replicas: usize,
    #[arg(long, default_value_t = 32)]
    grid: usize,
    #[arg(long, default_value_t = 3)]
    min_side: usize,
    #[arg(long, default_value_t = 3)]
    max_elements: usize,
    #[arg(long, default_value_t = 2)]
    noise_max_shift: usize,
    #[arg(long, default_value_t = 0.5)]
    noise_probability: f64,
    /// Objectives to run, comma separated: ce, gk-cel, soft-argmax
    #[arg(long, value_delimiter = ',', default_value = "ce,gk-cel")]
    objectives: Vec<Objective>,
    #[arg(long, default_value_t = 600)]
    epochs: usize,
    #[arg(long, default_value_t = 0.02)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Multiplicative learning-rate decay per epoch
    #[arg(long, default_value_t = 1.0)]
    lr_decay: f64,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 1)]
    num_layers: usize,
    #[arg(long, default_value_t = 2)]
    num_heads: usize,
    /// Token budget per sequence; grows with --max-elements when omitted
    #[arg(long)]
    max_len: Option<usize>,
    /// key=value loss settings file; individual flags override it
    #[arg(long)]
    loss_config: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    weight_detection: Option<f64>,
    #[arg(long)]
    weight_text: Option<f64>,
    /// Comparison report path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss-curve plot path
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(serde::Serialize)]
struct Report {
    config: Config,
    #[serde(skip_serializing_if = "Option::is_none")]
    step0_off_range: Option<OffRange>,
    runs: Vec<TrainReport>,
}

#[derive(serde::Serialize)]
struct Config {
    seed: u64,
    scenes: usize,
    replicas: usize,
    scene: ToySceneConfig,
    noise: NoiseSpec,
    decoder: TinyDecoderConfig,
    optimizer: OptimizerConfig,
    loss: LossConfig,
    objectives: Vec<String>,
}

/// Both losses at init, averaged over every off-range target position.
#[derive(serde::Serialize)]
struct OffRange {
    ce: f64,
    gk_cel: f64,
    max_abs_diff: f64,
}

pub fn run(args: Args) -> anyhow::Result<u8> {
    let scene_cfg = ToySceneConfig {
        grid: args.grid,
        min_side: args.min_side,
        max_elements: args.max_elements,
    };
    let noise = NoiseSpec { max_shift: args.noise_max_shift, probability: args.noise_probability };
    let decoder_cfg = TinyDecoderConfig {
        embed_dim: args.embed_dim,
        num_layers: args.num_layers,
        num_heads: args.num_heads,
        vocab: vocab_size(args.grid),
        max_len: args.max_len.unwrap_or_else(|| 24.max(2 + 5 * args.max_elements)),
        input_cells: args.grid * args.grid,
        seed: args.seed,
    };
    let optimizer = OptimizerConfig {
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        epochs: args.epochs,
        lr_decay: args.lr_decay,
    };
    let mut loss_cfg = match &args.loss_config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            LossConfig::parse(&text)?
        }
        None => LossConfig::default(),
    };
    if let Some(sigma) = args.sigma {
        loss_cfg.sigma = sigma;
    }
    if let Some(kernel_size) = args.kernel_size {
        loss_cfg.kernel_size = kernel_size;
    }
    if let Some(w) = args.weight_detection {
        loss_cfg.weight_detection = w;
    }
    if let Some(w) = args.weight_text {
        loss_cfg.weight_text = w;
    }

    let scenes = (0..args.scenes)
        .map(|i| generate_scene(args.seed * 1000 + i as u64, &scene_cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let dataset = build_dataset(scenes, &noise, args.replicas, args.seed)?;

    let wants = |o: Objective| args.objectives.contains(&o);
    let step0_off_range = if wants(Objective::CrossEntropy) && wants(Objective::GkCel) {
        Some(step0_off_range(&dataset, &decoder_cfg, &loss_cfg)?)
    } else {
        None
    };

    let mut runs = Vec::new();
    for &objective in &args.objectives {
        match train(&dataset, objective, &decoder_cfg, &optimizer, &loss_cfg) {
            Ok((_, report)) => {
                eprintln!(
                    "{}: final loss {}, mae {:.3}, det f1 {:.3}, text match {:.2} [{:.1}s]",
                    report.objective,
                    report.loss_curve.last().map_or("-".into(), |l| format!("{l:.4}")),
                    report.eval.coordinate_mae,
                    report.eval.detection.f1,
                    report.eval.text_exact_match,
                    report.wall_clock_seconds
                );
                runs.push(report);
            }
            Err(ToyError::Diverged { step, loss }) => {
                eprintln!("{}: diverged at step {step} (loss {loss:.3e})", objective.name());
                return Ok(1);
            }
            Err(err) => return Err(err.into()),
        }
    }

    if let Some(path) = &args.svg {
        let series: Vec<(&str, &[f64])> = runs
            .iter()
            .map(|r| (r.objective.as_str(), r.loss_curve.as_slice()))
            .collect();
        std::fs::write(path, crate::plot::loss_curves(&series))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }

    let report = Report {
        config: Config {
            seed: args.seed,
            scenes: args.scenes,
            replicas: args.replicas,
            scene: scene_cfg,
            noise,
            decoder: decoder_cfg,
            optimizer,
            loss: loss_cfg,
            objectives: args.objectives.iter().map(|o| o.name().to_string()).collect(),
        },
        step0_off_range,
        runs,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    crate::jsonl::write_out(args.out.as_deref(), &json)?;
    Ok(0)
}

/// Evaluates CE and GK-CEL at init with the mask narrowed to targets
/// outside the coordinate range. Identical treatment there is a
/// structural property, so any visible gap means a wiring bug.
fn step0_off_range(
    dataset: &ToyDataset,
    decoder_cfg: &TinyDecoderConfig,
    loss_cfg: &LossConfig,
) -> anyhow::Result<OffRange> {
    let model = TinyDecoder::new(decoder_cfg.clone())?;
    let kernel = build_kernel(loss_cfg.kernel_size, loss_cfg.sigma, loss_cfg.normalized)?;
    let started = Instant::now();
    let mut ce_total = 0.0;
    let mut gk_total = 0.0;
    let mut positions = 0usize;
    let mut max_abs_diff = 0.0f64;
    for example in &dataset.examples {
        let (logits, _) = model.forward(&example.cells, &example.input_tokens)?;
        let mut targets = example.targets.clone();
        for (label, keep) in targets.labels.iter().zip(targets.mask.iter_mut()) {
            *keep = *keep && !dataset.spec.contains(*label);
        }
        let n = targets.masked_count();
        if n == 0 {
            continue;
        }
        let ce = cross_entropy_with_epsilon(&logits, &targets, loss_cfg.epsilon)?;
        let gk = gk_cel(&logits, &targets, &dataset.spec, &kernel, loss_cfg.epsilon)?;
        ce_total += ce.loss * n as f64;
        gk_total += gk.loss * n as f64;
        positions += n;
        max_abs_diff = max_abs_diff.max((ce.loss - gk.loss).abs());
    }
    anyhow::ensure!(positions > 0, "no off-range target positions in dataset");
    eprintln!(
        "step-0 off-range: ce {:.6} vs gk-cel {:.6} over {positions} positions [{:.1}s]",
        ce_total / positions as f64,
        gk_total / positions as f64,
        started.elapsed().as_secs_f64()
    );
    Ok(OffRange {
        ce: ce_total / positions as f64,
        gk_cel: gk_total / positions as f64,
        max_abs_diff,
    })
}
