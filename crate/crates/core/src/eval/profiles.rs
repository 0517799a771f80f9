//! Motion programs used by the experiments.

use crate::rotmath::Vec3;
use crate::synth::{RateProgram, RateTerm};

/// Mean angular speed of the slow reference motion, rad/s.
pub const SLOW_MEAN_RATE: f64 = 0.72;
/// Mean angular speed of the fast reference motion, rad/s.
pub const FAST_MEAN_RATE: f64 = 2.13;
/// Mean angular speed of the "moving" correction-accuracy scenario, rad/s.
pub const MOVING_MEAN_RATE: f64 = 1.0;

/// Irregular boom-like swinging, mostly about the two axes perpendicular to
/// the limb. `variant` shifts the phases so parent and child do not move in
/// lockstep.
pub fn swing(variant: u32) -> RateProgram {
    let p = variant as f64 * 1.3;
    RateProgram::new(vec![
        RateTerm::sine(Vec3::new(1.0, 0.0, 0.0), 0.31, 0.4 + p),
        RateTerm::sine(Vec3::new(0.0, 0.0, 0.9), 0.23, 1.1 + 0.7 * p),
        RateTerm::sine(Vec3::new(0.35, 0.0, -0.3), 0.67, 2.0 + 1.9 * p),
        RateTerm::sine(Vec3::new(0.0, 0.2, 0.0), 0.41, 0.3 + p),
    ])
}

/// Mean and peak of `‖ω(t)‖` sampled over `[0, duration]`.
pub fn rate_stats(program: &RateProgram, duration: f64, sample_rate: f64) -> (f64, f64) {
    let n = (duration * sample_rate).floor() as usize + 1;
    let (mut sum, mut peak) = (0.0, 0.0f64);
    for k in 0..n {
        let w = program.eval(k as f64 / sample_rate).0.norm();
        sum += w;
        peak = peak.max(w);
    }
    (sum / n as f64, peak)
}

/// `program` rescaled so its mean angular speed over `duration` is
/// `target`.
pub fn scaled_to_mean_rate(
    program: &RateProgram,
    target: f64,
    duration: f64,
    sample_rate: f64,
) -> RateProgram {
    let (m, _) = rate_stats(program, duration, sample_rate);
    if m == 0.0 {
        program.clone()
    } else {
        program.scaled(target / m)
    }
}
