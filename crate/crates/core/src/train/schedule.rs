use std::f64::consts::PI;

/// Number of warm-up steps for a run of `total_steps`.
pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    (warmup_fraction * total_steps as f64).floor() as usize
}

/// Linear warm-up from `lr_max/100` to `lr_max`, then cosine decay to zero.
///
/// `step` is 0-based and must be below `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, lr_max: f64, warmup_fraction: f64) -> f64 {
    let w = warmup_steps(total_steps, warmup_fraction);
    if step < w {
        let start = lr_max / 100.0;
        start + (lr_max - start) * step as f64 / w as f64
    } else {
        let span = (total_steps - w) as f64;
        let progress = (step - w) as f64 / span;
        0.5 * lr_max * (1.0 + (PI * progress).cos())
    }
}
