//! Throughput accounting with warmup exclusion.

use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct FpsReport {
    /// Mean samples per second over the timed repeats.
    pub mean_fps: f64,
    /// Population standard deviation over the repeats.
    pub std_fps: f64,
    pub samples_per_repeat: usize,
    pub repeats: usize,
    pub warmup: usize,
}

/// Runs `process` once per sample: `warmup` untimed calls first, then
/// `repeats` timed full passes of `samples` calls each.
pub fn fps_measure<F: FnMut()>(
    mut process: F,
    samples: usize,
    warmup: usize,
    repeats: usize,
) -> FpsReport {
    assert!(samples >= 1, "need at least one sample per repeat");
    assert!(repeats >= 1, "need at least one timed repeat");
    for _ in 0..warmup {
        process();
    }
    let mut rates = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for _ in 0..samples {
            process();
        }
        // Clamp so a sub-resolution pass still reports finite throughput.
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        rates.push(samples as f64 / secs);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rates.len() as f64;
    FpsReport {
        mean_fps: mean,
        std_fps: var.sqrt(),
        samples_per_repeat: samples,
        repeats,
        warmup,
    }
}
