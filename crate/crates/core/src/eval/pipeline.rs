//! Chain estimation with an ideal bus: corrections on a fixed cadence with
//! the parent's reading taken at the same instant and no quantization.

use crate::chain::ChainSpec;
use crate::estimator::{CorrectionResult, FilterParams, PredictionMode, SensorEstimator};
use crate::rotmath::UnitQuaternion;
use crate::synth::SensorStream;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub params: FilterParams,
    pub mode: PredictionMode,
    /// Correction rounds per second; 0 disables correction.
    pub correction_hz: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            params: FilterParams::default(),
            mode: PredictionMode::Weighted,
            correction_hz: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionEvent {
    /// Sample index the correction followed.
    pub k: usize,
    pub t: f64,
    pub sensor: usize,
    pub result: CorrectionResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrace {
    /// Estimated orientation per limb per sample, after any correction at
    /// that sample.
    pub q: Vec<Vec<UnitQuaternion>>,
    pub corrections: Vec<CorrectionEvent>,
}

impl PipelineTrace {
    pub fn corrections_for(&self, sensor: usize) -> impl Iterator<Item = &CorrectionEvent> {
        self.corrections.iter().filter(move |c| c.sensor == sensor)
    }
}

/// Runs every sensor over its stream. Streams must share timestamps.
pub fn run_ideal(
    chain: &ChainSpec,
    streams: &[SensorStream],
    initial: &[UnitQuaternion],
    cfg: &PipelineConfig,
) -> Result<PipelineTrace, EvalError> {
    let n = chain.len();
    if streams.len() != n || initial.len() != n {
        return Err(EvalError::Config(format!(
            "need {n} streams and initial orientations, got {} and {}",
            streams.len(),
            initial.len()
        )));
    }
    let len = streams[0].samples.len();
    if streams.iter().any(|s| s.samples.len() != len) {
        return Err(EvalError::Config("streams differ in length".into()));
    }
    let mut est = chain
        .limbs()
        .iter()
        .map(|l| {
            SensorEstimator::new(initial[l.id], l.length, cfg.params).map(|e| e.with_mode(cfg.mode))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let by_id: Vec<&SensorStream> = {
        let mut v = vec![&streams[0]; n];
        for s in streams {
            if s.sensor_id >= n {
                return Err(EvalError::Config(format!("stream for unknown sensor {}", s.sensor_id)));
            }
            v[s.sensor_id] = s;
        }
        v
    };

    let mut q = vec![Vec::with_capacity(len); n];
    let mut corrections = Vec::new();
    let period = if cfg.correction_hz > 0.0 {
        1.0 / cfg.correction_hz
    } else {
        f64::INFINITY
    };
    let t0 = by_id[0].samples.first().map_or(0.0, |s| s.t);
    let mut next = t0 + period;
    for k in 0..len {
        for (id, e) in est.iter_mut().enumerate() {
            e.update(&by_id[id].samples[k]);
        }
        let t = by_id[0].samples[k].t;
        if t + 1e-9 >= next {
            next += period;
            for &id in chain.traversal_order() {
                if let Some(p) = chain.limbs()[id].parent {
                    let parent_world = est[p].tip_accel_world();
                    let result = est[id].correct(parent_world);
                    corrections.push(CorrectionEvent {
                        k,
                        t,
                        sensor: id,
                        result,
                    });
                }
            }
        }
        for (id, e) in est.iter().enumerate() {
            q[id].push(e.orientation());
        }
    }
    Ok(PipelineTrace { q, corrections })
}
