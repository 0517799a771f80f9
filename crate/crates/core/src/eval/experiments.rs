//! Simulation experiments: yaw recovery, acceleration prediction, drift
//! characterization, correction accuracy, unobservable-axis behavior and
//! ideal-vs-bus comparison.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::chain::ChainSpec;
use crate::estimator::{FilterParams, PredictionMode, SensorEstimator};
use crate::netsim::{BusOptions, Network, QuantSpec, ScheduleModel};
use crate::rotmath::{rotation_angle_between, UnitQuaternion, Vec3};
use crate::synth::{
    integrate_truth, synthesize_imu, AccelTerm, GroundTruth, LimbMotion, NoiseSpec, RateProgram,
    RootMotion, SensorStream, TrajectorySpec, Window, CALIBRATED_GYRO_BIAS,
};

use super::profiles::{self, scaled_to_mean_rate, swing};
use super::{
    config_hash, mean, run_ideal, ErrorSeries, EvalError, ExperimentReport, PipelineConfig,
};

const EARTH_FIELD: Vec3 = Vec3::new(0.0, 0.0, 9.81);

fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

fn simulate(
    chain: &ChainSpec,
    traj: &TrajectorySpec,
    noise: &NoiseSpec,
) -> Result<(GroundTruth, Vec<SensorStream>), EvalError> {
    let truth = integrate_truth(chain, traj)?;
    let streams = synthesize_imu(&truth, chain, noise)?;
    Ok((truth, streams))
}

/// Orientation error `q_est · q_true⁻¹` expressed in the world frame.
fn world_error(q_est: &UnitQuaternion, q_true: &UnitQuaternion) -> UnitQuaternion {
    q_est.compose(&q_true.inverse())
}

fn two_limb_chain(lengths: &[f64]) -> Result<ChainSpec, EvalError> {
    if lengths.len() != 2 {
        return Err(EvalError::Config(format!(
            "expected a 2-limb chain, got {} lengths",
            lengths.len()
        )));
    }
    Ok(ChainSpec::serial(lengths)?)
}

fn child_start() -> UnitQuaternion {
    UnitQuaternion::from_axis_angle(-0.5, Vec3::X).expect("axis")
}

// ---------------------------------------------------------------------------
// Yaw recovery

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YawRecoveryConfig {
    pub limb_lengths: Vec<f64>,
    pub sample_rate: f64,
    /// Correction rounds per second; 0 disables correction.
    pub correction_hz: f64,
    pub initial_yaw_deg: f64,
    /// Magnitude of the lateral joint acceleration, m/s².
    pub lateral_accel: f64,
    /// Rotation rate of the lateral acceleration direction, Hz.
    pub lateral_freq_hz: f64,
    /// Quiet time before the excitation starts, s.
    pub settle_s: f64,
    /// Length of the excitation, ramps included, s.
    pub excitation_s: f64,
    /// The lateral motion fades in and out over this long. Short ramps
    /// produce large transient accelerations.
    pub ramp_s: f64,
    /// Mean angular speed of the limbs' own motion, rad/s. Any motion also
    /// corrects yaw, so the default holds the limbs still to isolate the
    /// lateral push.
    pub limb_rate: f64,
    pub ambient_field: Vec3,
    pub noise: NoiseSpec,
    pub filter: FilterParams,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for YawRecoveryConfig {
    fn default() -> Self {
        YawRecoveryConfig {
            limb_lengths: vec![0.5, 0.5],
            sample_rate: 200.0,
            correction_hz: 30.0,
            initial_yaw_deg: 90.0,
            lateral_accel: 7.0,
            lateral_freq_hz: 1.0,
            settle_s: 1.0,
            excitation_s: 4.0,
            ramp_s: 0.5,
            limb_rate: 0.0,
            ambient_field: Vec3::ZERO,
            noise: NoiseSpec::reference(0),
            filter: FilterParams::default(),
            repetitions: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YawRecoveryOutcome {
    pub report: ExperimentReport,
    /// Signed yaw error at the end of the excitation, degrees, per repetition.
    pub final_yaw_deg: Vec<f64>,
    /// Seconds from the start of excitation until |yaw| first drops below 5°.
    pub time_to_5deg: Vec<Option<f64>>,
    /// Yaw error (degrees) at each correction of the first repetition.
    pub yaw_trace: ErrorSeries,
    /// Lateral joint acceleration magnitude at each correction of the first
    /// repetition.
    pub lateral_trace: Vec<f64>,
}

impl YawRecoveryOutcome {
    /// `update, yaw_deg, lateral_accel` rows for plotting.
    pub fn plot_data(&self) -> String {
        let mut s = String::from("# update yaw_deg lateral_accel\n");
        for (i, (y, a)) in self
            .yaw_trace
            .values
            .iter()
            .zip(&self.lateral_trace)
            .enumerate()
        {
            s += &format!("{i} {y} {a}\n");
        }
        s
    }
}

pub fn yaw_recovery_trajectory(cfg: &YawRecoveryConfig) -> TrajectorySpec {
    let start = cfg.settle_s;
    let end = cfg.settle_s + cfg.excitation_s;
    let window = Window::new(start, end, cfg.ramp_s);
    let a = cfg.lateral_accel;
    let root = if a > 0.0 {
        RootMotion {
            terms: vec![
                AccelTerm {
                    amplitude: Vec3::new(a, 0.0, 0.0),
                    freq_hz: cfg.lateral_freq_hz,
                    phase: FRAC_PI_2,
                },
                AccelTerm {
                    amplitude: Vec3::new(0.0, a, 0.0),
                    freq_hz: cfg.lateral_freq_hz,
                    phase: 0.0,
                },
            ],
            window: Some(window),
        }
    } else {
        RootMotion::fixed()
    };
    let duration = end + 0.5;
    let motion = |variant| {
        if cfg.limb_rate > 0.0 {
            scaled_to_mean_rate(&swing(variant), cfg.limb_rate, duration, cfg.sample_rate)
        } else {
            RateProgram::still()
        }
    };
    TrajectorySpec {
        duration,
        sample_rate: cfg.sample_rate,
        ambient_field: cfg.ambient_field,
        root,
        limbs: vec![
            LimbMotion {
                initial: UnitQuaternion::IDENTITY,
                rate: motion(0),
            },
            LimbMotion {
                initial: child_start(),
                rate: motion(1),
            },
        ],
        oversample: 10,
    }
}

/// Child starts with a large error about the world vertical; lateral joint
/// accelerations in the horizontal plane pull it back.
pub fn experiment_yaw_recovery(cfg: &YawRecoveryConfig) -> Result<YawRecoveryOutcome, EvalError> {
    let chain = two_limb_chain(&cfg.limb_lengths)?;
    if cfg.repetitions == 0 {
        return Err(EvalError::Config("repetitions must be positive".into()));
    }
    let traj = yaw_recovery_trajectory(cfg);
    let truth = integrate_truth(&chain, &traj)?;
    let up = Vec3::Z;
    let yaw0 = UnitQuaternion::from_axis_angle(cfg.initial_yaw_deg.to_radians(), up)
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let t_start = cfg.settle_s;
    let t_end = cfg.settle_s + cfg.excitation_s;
    let pipe = PipelineConfig {
        params: cfg.filter,
        mode: PredictionMode::Weighted,
        correction_hz: cfg.correction_hz,
    };

    let mut final_yaw = Vec::with_capacity(cfg.repetitions);
    let mut time_to_5 = Vec::with_capacity(cfg.repetitions);
    let mut yaw_trace = ErrorSeries::new("yaw_recovery", "yaw_deg");
    let mut lateral_trace = Vec::new();
    let mut lateral_sum = (0.0, 0usize);

    for rep in 0..cfg.repetitions {
        let noise = cfg.noise.clone().with_seed(cfg.seed.wrapping_add(rep as u64));
        let streams = synthesize_imu(&truth, &chain, &noise)?;
        let initial = [truth.limbs[0].q[0], yaw0.compose(&truth.limbs[1].q[0])];
        let run = run_ideal(&chain, &streams, &initial, &pipe)?;

        let yaw_at = |k: usize| deg(world_error(&run.q[1][k], &truth.limbs[1].q[k]).twist_angle(up));
        let k_end = truth
            .times
            .iter()
            .rposition(|&t| t <= t_end + 1e-9)
            .unwrap_or(truth.len() - 1);
        final_yaw.push(yaw_at(k_end));
        time_to_5.push(
            truth
                .times
                .iter()
                .enumerate()
                .skip_while(|(_, &t)| t < t_start)
                .find(|&(k, _)| yaw_at(k).abs() < 5.0)
                .map(|(_, &t)| t - t_start),
        );

        for c in run.corrections_for(1) {
            let a = truth.limbs[1].a_base[c.k] - cfg.ambient_field;
            let lateral = (a - up * a.dot(up)).norm();
            if c.t >= t_start && c.t <= t_end {
                lateral_sum.0 += lateral;
                lateral_sum.1 += 1;
            }
            if rep == 0 {
                yaw_trace.push(yaw_at(c.k));
                lateral_trace.push(lateral);
            }
        }
    }

    let hash = config_hash(cfg);
    let mut report = ExperimentReport::new("yaw_recovery", cfg.seed, hash.clone());
    let mut finals = ErrorSeries::new("yaw_recovery", "final_yaw_deg");
    finals.values = final_yaw.clone();
    report.scenarios.push(finals.report(&hash, cfg.seed)?);
    let n = cfg.repetitions;
    let max_abs = final_yaw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    report.metric("yaw_recovery", "max_abs_final_yaw_deg", max_abs, n);
    if lateral_sum.1 > 0 {
        report.metric(
            "yaw_recovery",
            "mean_lateral_accel",
            lateral_sum.0 / lateral_sum.1 as f64,
            lateral_sum.1,
        );
    }
    let reached: Vec<f64> = time_to_5.iter().flatten().copied().collect();
    report.metric("yaw_recovery", "recovered_runs", reached.len() as f64, n);
    if let Some(m) = mean(&reached) {
        report.metric("yaw_recovery", "mean_time_to_5deg", m, reached.len());
        report.metric(
            "yaw_recovery",
            "max_time_to_5deg",
            reached.iter().fold(0.0f64, |a, &b| a.max(b)),
            reached.len(),
        );
    }
    Ok(YawRecoveryOutcome {
        report,
        final_yaw_deg: final_yaw,
        time_to_5deg: time_to_5,
        yaw_trace,
        lateral_trace,
    })
}

// ---------------------------------------------------------------------------
// Acceleration prediction

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelPredictionConfig {
    pub limb_length: f64,
    pub sample_rate: f64,
    pub duration: f64,
    pub ambient_field: Vec3,
    pub slow_rate: f64,
    pub fast_rate: f64,
    pub noise: NoiseSpec,
    pub filter: FilterParams,
    pub seed: u64,
}

impl Default for AccelPredictionConfig {
    fn default() -> Self {
        AccelPredictionConfig {
            limb_length: 0.5,
            sample_rate: 200.0,
            duration: 20.0,
            ambient_field: EARTH_FIELD,
            slow_rate: profiles::SLOW_MEAN_RATE,
            fast_rate: profiles::FAST_MEAN_RATE,
            noise: NoiseSpec::reference(0),
            filter: FilterParams::default(),
            seed: 0,
        }
    }
}

const MODES: [(PredictionMode, &str); 3] = [
    (PredictionMode::Off, "none"),
    (PredictionMode::Full, "full"),
    (PredictionMode::Weighted, "weighted"),
];

/// World-frame base acceleration of a single limb with a fixed base, with
/// and without removing the rotational terms. Scenario names are
/// `{stationary,slow,fast}/{none,full,weighted}`; errors are per axis.
pub fn experiment_accel_prediction(cfg: &AccelPredictionConfig) -> Result<ExperimentReport, EvalError> {
    let chain = ChainSpec::serial(&[cfg.limb_length])?;
    let hash = config_hash(cfg);
    let mut report = ExperimentReport::new("accel_prediction", cfg.seed, hash.clone());
    let scenarios = [
        ("stationary", 0.0),
        ("slow", cfg.slow_rate),
        ("fast", cfg.fast_rate),
    ];
    for (name, rate) in scenarios {
        let program = if rate > 0.0 {
            scaled_to_mean_rate(&swing(0), rate, cfg.duration, cfg.sample_rate)
        } else {
            RateProgram::still()
        };
        let (mean_rate, peak) = profiles::rate_stats(&program, cfg.duration, cfg.sample_rate);
        report.metric(name, "mean_rate", mean_rate, 0);
        report.metric(name, "peak_rate", peak, 0);
        let traj = TrajectorySpec {
            duration: cfg.duration,
            sample_rate: cfg.sample_rate,
            ambient_field: cfg.ambient_field,
            root: RootMotion::fixed(),
            limbs: vec![LimbMotion {
                initial: UnitQuaternion::IDENTITY,
                rate: program,
            }],
            oversample: 10,
        };
        let (truth, streams) = simulate(&chain, &traj, &cfg.noise.clone().with_seed(cfg.seed))?;
        let limb = &truth.limbs[0];
        for (mode, label) in MODES {
            let mut est = SensorEstimator::new(limb.q[0], cfg.limb_length, cfg.filter)?.with_mode(mode);
            let mut errors = ErrorSeries::new(name, label);
            let mut local = [
                ErrorSeries::new(name, "local_x"),
                ErrorSeries::new(name, "local_y"),
                ErrorSeries::new(name, "local_z"),
            ];
            for (k, s) in streams[0].samples.iter().enumerate() {
                est.update(s);
                if k == 0 {
                    continue;
                }
                let e = est.base_accel_world() - limb.a_base[k];
                errors.values.extend(e.to_array());
                if mode == PredictionMode::Full {
                    let predicted = est.tip_accel() - est.base_accel();
                    let true_rot = limb.q[k].inverse_rotate_vector(limb.a_tip[k] - limb.a_base[k]);
                    for (series, v) in local.iter_mut().zip((predicted - true_rot).to_array()) {
                        series.push(v);
                    }
                }
            }
            report.scenarios.push(errors.report(&hash, cfg.seed)?);
            if mode == PredictionMode::Full && name == "stationary" {
                for series in &local {
                    report.scenarios.push(series.report(&hash, cfg.seed)?);
                }
            }
        }
        let none = report.scenario(&format!("{name}/none")).map(|s| s.rmse);
        let full = report.scenario(&format!("{name}/full")).map(|s| s.rmse);
        if let (Some(a), Some(b)) = (none, full) {
            report.metric(name, "none_over_full_rmse", a / b, 0);
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Drift characterization

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub sample_rate: f64,
    /// Length of each run, s. Thresholds not reached by then are censored.
    pub duration: f64,
    pub runs: usize,
    pub thresholds_deg: Vec<f64>,
    pub checkpoints_s: Vec<f64>,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            sample_rate: 200.0,
            duration: 60.0,
            runs: 56,
            thresholds_deg: vec![0.25, 0.5, 1.0],
            checkpoints_s: vec![5.0, 20.0, 60.0],
            noise: NoiseSpec::reference(0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftOutcome {
    pub report: ExperimentReport,
    /// `[threshold][run]` first time the error reached the threshold.
    pub times: Vec<Vec<Option<f64>>>,
    /// `[checkpoint][run]` error in degrees at the checkpoint.
    pub angles: Vec<Vec<f64>>,
}

impl DriftOutcome {
    pub fn mean_time(&self, threshold_index: usize) -> Option<f64> {
        let v: Vec<f64> = self.times[threshold_index].iter().flatten().copied().collect();
        mean(&v)
    }
}

fn summarize(report: &mut ExperimentReport, scenario: &str, name: &str, values: &[f64]) {
    if let Some(m) = mean(values) {
        let n = values.len();
        report.metric(scenario, &format!("mean_{name}"), m, n);
        report.metric(scenario, &format!("min_{name}"), values.iter().copied().fold(f64::INFINITY, f64::min), n);
        report.metric(scenario, &format!("max_{name}"), values.iter().copied().fold(f64::NEG_INFINITY, f64::max), n);
    }
}

/// Dead reckoning of a resting sensor: time to drift past each threshold and
/// drift at each checkpoint.
pub fn experiment_drift_characterization(cfg: &DriftConfig) -> Result<DriftOutcome, EvalError> {
    if cfg.runs == 0 {
        return Err(EvalError::Config("runs must be positive".into()));
    }
    let chain = ChainSpec::serial(&[0.5])?;
    let mut traj = TrajectorySpec::still(1, cfg.duration, cfg.sample_rate);
    traj.oversample = 1;
    let truth = integrate_truth(&chain, &traj)?;
    let q_true = &truth.limbs[0].q;
    let mut times = vec![Vec::with_capacity(cfg.runs); cfg.thresholds_deg.len()];
    let mut angles = vec![Vec::with_capacity(cfg.runs); cfg.checkpoints_s.len()];
    for run in 0..cfg.runs {
        let noise = cfg.noise.clone().with_seed(cfg.seed.wrapping_add(run as u64));
        let streams = synthesize_imu(&truth, &chain, &noise)?;
        let mut est = SensorEstimator::new(q_true[0], 0.5, FilterParams::default())?;
        let mut hit = vec![None; cfg.thresholds_deg.len()];
        let mut at = vec![f64::NAN; cfg.checkpoints_s.len()];
        for (k, s) in streams[0].samples.iter().enumerate() {
            est.update(s);
            let err = deg(rotation_angle_between(&est.orientation(), &q_true[k]));
            for (i, &th) in cfg.thresholds_deg.iter().enumerate() {
                if hit[i].is_none() && err >= th {
                    hit[i] = Some(s.t);
                }
            }
            for (i, &cp) in cfg.checkpoints_s.iter().enumerate() {
                if at[i].is_nan() && s.t + 1e-9 >= cp {
                    at[i] = err;
                }
            }
        }
        for (i, h) in hit.into_iter().enumerate() {
            times[i].push(h);
        }
        for (i, a) in at.into_iter().enumerate() {
            angles[i].push(a);
        }
    }

    let mut report = ExperimentReport::new("drift", cfg.seed, config_hash(cfg));
    for (i, th) in cfg.thresholds_deg.iter().enumerate() {
        let reached: Vec<f64> = times[i].iter().flatten().copied().collect();
        let name = format!("time_to_{th}deg");
        summarize(&mut report, "drift", &name, &reached);
        report.metric("drift", &format!("censored_{name}"), (cfg.runs - reached.len()) as f64, cfg.runs);
    }
    for (i, cp) in cfg.checkpoints_s.iter().enumerate() {
        let v: Vec<f64> = angles[i].iter().copied().filter(|a| !a.is_nan()).collect();
        summarize(&mut report, "drift", &format!("drift_after_{cp}s"), &v);
    }
    Ok(DriftOutcome {
        report,
        times,
        angles,
    })
}

/// Finds the gyro bias magnitude whose mean dead-reckoning time to 1° equals
/// `target_s`, by sweeping the bias until the simulated mean matches to
/// 0.1%. Drift time scales like `1 / bias`, so each step rescales the bias
/// by the ratio of measured to target time.
pub fn calibrate_bias_magnitude(
    target_s: f64,
    runs: usize,
    sample_rate: f64,
    seed: u64,
) -> Result<f64, EvalError> {
    let mut b = 1f64.to_radians() / target_s;
    for _ in 0..12 {
        let cfg = DriftConfig {
            sample_rate,
            duration: 2.0 * target_s,
            runs,
            thresholds_deg: vec![1.0],
            checkpoints_s: vec![],
            noise: NoiseSpec {
                gyro_bias_sigma: 0.0,
                ..NoiseSpec::reference_with_bias(seed, b)
            },
            seed,
        };
        let out = experiment_drift_characterization(&cfg)?;
        let t = out
            .mean_time(0)
            .ok_or_else(|| EvalError::Config("no run reached 1 degree".into()))?;
        if (t / target_s - 1.0).abs() < 1e-3 {
            break;
        }
        b *= t / target_s;
    }
    Ok(b)
}

/// Bias currently frozen into [`NoiseSpec::reference`].
pub fn reference_bias() -> f64 {
    CALIBRATED_GYRO_BIAS
}

// ---------------------------------------------------------------------------
// Correction accuracy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionAccuracyConfig {
    pub limb_lengths: Vec<f64>,
    pub sample_rate: f64,
    pub duration: f64,
    pub correction_hz: f64,
    pub ambient_field: Vec3,
    pub moving_rate: f64,
    pub noise: NoiseSpec,
    pub filter: FilterParams,
    pub seed: u64,
}

impl Default for CorrectionAccuracyConfig {
    fn default() -> Self {
        CorrectionAccuracyConfig {
            limb_lengths: vec![0.5, 0.5],
            sample_rate: 200.0,
            duration: 30.0,
            correction_hz: 30.0,
            ambient_field: EARTH_FIELD,
            moving_rate: profiles::MOVING_MEAN_RATE,
            noise: NoiseSpec::reference(0),
            filter: FilterParams::default(),
            seed: 0,
        }
    }
}

fn two_limb_motion(
    duration: f64,
    sample_rate: f64,
    rate: f64,
    field: Vec3,
) -> TrajectorySpec {
    let motion = |variant| {
        if rate > 0.0 {
            scaled_to_mean_rate(&swing(variant), rate, duration, sample_rate)
        } else {
            RateProgram::still()
        }
    };
    TrajectorySpec {
        duration,
        sample_rate,
        ambient_field: field,
        root: RootMotion::fixed(),
        limbs: vec![
            LimbMotion {
                initial: UnitQuaternion::IDENTITY,
                rate: motion(0),
            },
            LimbMotion {
                initial: child_start(),
                rate: motion(1),
            },
        ],
        oversample: 10,
    }
}

/// Drift-free start; the raw angle θ and the applied angle φ at each child
/// correction are errors against zero. Scenarios
/// `{stationary,moving}/{theta,phi}` in degrees.
pub fn experiment_correction_accuracy(
    cfg: &CorrectionAccuracyConfig,
) -> Result<ExperimentReport, EvalError> {
    let chain = two_limb_chain(&cfg.limb_lengths)?;
    let hash = config_hash(cfg);
    let mut report = ExperimentReport::new("correction_accuracy", cfg.seed, hash.clone());
    let pipe = PipelineConfig {
        params: cfg.filter,
        mode: PredictionMode::Weighted,
        correction_hz: cfg.correction_hz,
    };
    for (name, rate) in [("stationary", 0.0), ("moving", cfg.moving_rate)] {
        let traj = two_limb_motion(cfg.duration, cfg.sample_rate, rate, cfg.ambient_field);
        let (truth, streams) = simulate(&chain, &traj, &cfg.noise.clone().with_seed(cfg.seed))?;
        let initial = [truth.limbs[0].q[0], truth.limbs[1].q[0]];
        let run = run_ideal(&chain, &streams, &initial, &pipe)?;
        let mut theta = ErrorSeries::new(name, "theta");
        let mut phi = ErrorSeries::new(name, "phi");
        let mut orient = ErrorSeries::new(name, "child_error");
        for c in run.corrections_for(1) {
            theta.push(deg(c.result.theta_raw));
            phi.push(deg(c.result.phi));
            orient.push(deg(rotation_angle_between(&run.q[1][c.k], &truth.limbs[1].q[c.k])));
        }
        report.scenarios.push(theta.report(&hash, cfg.seed)?);
        report.scenarios.push(phi.report(&hash, cfg.seed)?);
        report.scenarios.push(orient.report(&hash, cfg.seed)?);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Unobservable axis

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnobservabilityConfig {
    pub limb_lengths: Vec<f64>,
    pub sample_rate: f64,
    pub correction_hz: f64,
    pub duration: f64,
    /// Peak excitation along the world x axis, m/s².
    pub excitation_accel: f64,
    /// Excitation is `a·cos(2π f t)`. The default frequency is low enough
    /// that the push never reverses or fades into the noise during the run.
    pub excitation_freq_hz: f64,
    pub drift_deg: f64,
    pub noise: NoiseSpec,
    pub filter: FilterParams,
    pub seed: u64,
}

impl Default for UnobservabilityConfig {
    fn default() -> Self {
        UnobservabilityConfig {
            limb_lengths: vec![0.5, 0.5],
            sample_rate: 200.0,
            correction_hz: 30.0,
            duration: 6.0,
            excitation_accel: 7.0,
            excitation_freq_hz: 0.02,
            drift_deg: 20.0,
            noise: NoiseSpec::reference(0),
            filter: FilterParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisDrift {
    pub axis: Vec3,
    /// Child error twist about `axis` at each correction, degrees.
    pub twist_deg: Vec<f64>,
    /// The same twist with corrections disabled (dead reckoning only).
    pub uncorrected_deg: Vec<f64>,
}

impl AxisDrift {
    /// Largest difference the corrections made to the twist.
    pub fn correction_effect_deg(&self) -> f64 {
        self.twist_deg
            .iter()
            .zip(&self.uncorrected_deg)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnobservabilityOutcome {
    pub report: ExperimentReport,
    pub excitation_axis: Vec3,
    /// Drift injected about x (the excitation axis), then y, then z.
    pub runs: Vec<AxisDrift>,
}

/// Excitation along a single world axis with the limbs held still. Drift
/// about that axis should survive; drift about the other two should decay.
pub fn experiment_unobservability(
    cfg: &UnobservabilityConfig,
) -> Result<UnobservabilityOutcome, EvalError> {
    let chain = two_limb_chain(&cfg.limb_lengths)?;
    let axis = Vec3::X;
    let mut traj = two_limb_motion(cfg.duration, cfg.sample_rate, 0.0, Vec3::ZERO);
    traj.root = RootMotion {
        terms: vec![AccelTerm {
            amplitude: axis * cfg.excitation_accel,
            freq_hz: cfg.excitation_freq_hz,
            phase: FRAC_PI_2,
        }],
        window: None,
    };
    let (truth, streams) = simulate(&chain, &traj, &cfg.noise.clone().with_seed(cfg.seed))?;
    let pipe = PipelineConfig {
        params: cfg.filter,
        mode: PredictionMode::Weighted,
        correction_hz: cfg.correction_hz,
    };
    let hash = config_hash(cfg);
    let mut report = ExperimentReport::new("unobservability", cfg.seed, hash);
    let mut runs = Vec::new();
    for (label, drift_axis) in [("x", Vec3::X), ("y", Vec3::Y), ("z", Vec3::Z)] {
        let drift = UnitQuaternion::from_axis_angle(cfg.drift_deg.to_radians(), drift_axis)
            .map_err(|e| EvalError::Config(e.to_string()))?;
        let initial = [truth.limbs[0].q[0], drift.compose(&truth.limbs[1].q[0])];
        let run = run_ideal(&chain, &streams, &initial, &pipe)?;
        let free = run_ideal(
            &chain,
            &streams,
            &initial,
            &PipelineConfig {
                correction_hz: 0.0,
                ..pipe
            },
        )?;
        let twist_at = |q: &[UnitQuaternion], k: usize| {
            deg(world_error(&q[k], &truth.limbs[1].q[k]).twist_angle(drift_axis))
        };
        let ks: Vec<usize> = run.corrections_for(1).map(|c| c.k).collect();
        let d = AxisDrift {
            axis: drift_axis,
            twist_deg: ks.iter().map(|&k| twist_at(&run.q[1], k)).collect(),
            uncorrected_deg: ks.iter().map(|&k| twist_at(&free.q[1], k)).collect(),
        };
        let n = ks.len();
        if let Some(last) = d.twist_deg.last() {
            report.metric(label, "initial_twist_deg", cfg.drift_deg, n);
            report.metric(label, "final_twist_deg", *last, n);
            report.metric(label, "change_deg", (cfg.drift_deg - last).abs(), n);
            report.metric(label, "correction_effect_deg", d.correction_effect_deg(), n);
        }
        runs.push(d);
    }
    Ok(UnobservabilityOutcome {
        report,
        excitation_axis: axis,
        runs,
    })
}

/// Means of `|v|` over consecutive windows of `size` (a trailing partial
/// window is dropped).
pub fn window_means(values: &[f64], size: usize) -> Vec<f64> {
    values
        .chunks_exact(size.max(1))
        .map(|w| w.iter().map(|v| v.abs()).sum::<f64>() / w.len() as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// Ideal pipeline versus simulated bus

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusComparisonConfig {
    pub limb_lengths: Vec<f64>,
    pub sample_rate: f64,
    pub duration: f64,
    pub correction_hz: f64,
    pub moving_rate: f64,
    pub ambient_field: Vec3,
    /// Errors before this time are excluded, s.
    pub settle_s: f64,
    pub schedule: ScheduleModel,
    pub quant: QuantSpec,
    pub noise: NoiseSpec,
    pub filter: FilterParams,
    pub seed: u64,
}

impl Default for BusComparisonConfig {
    fn default() -> Self {
        BusComparisonConfig {
            limb_lengths: vec![0.5, 0.5],
            sample_rate: 200.0,
            duration: 20.0,
            correction_hz: 30.0,
            moving_rate: profiles::MOVING_MEAN_RATE,
            ambient_field: EARTH_FIELD,
            settle_s: 2.0,
            schedule: ScheduleModel::default(),
            quant: QuantSpec::default(),
            noise: NoiseSpec::reference(0),
            filter: FilterParams::default(),
            seed: 0,
        }
    }
}

/// Child orientation error with an ideal bus versus the quantized,
/// scheduled bus at the same correction cadence. Scenarios
/// `moving/{ideal,bus}` in degrees.
pub fn experiment_bus_comparison(cfg: &BusComparisonConfig) -> Result<ExperimentReport, EvalError> {
    let chain = two_limb_chain(&cfg.limb_lengths)?;
    let traj = two_limb_motion(cfg.duration, cfg.sample_rate, cfg.moving_rate, cfg.ambient_field);
    let (truth, streams) = simulate(&chain, &traj, &cfg.noise.clone().with_seed(cfg.seed))?;
    let initial = [truth.limbs[0].q[0], truth.limbs[1].q[0]];
    let hash = config_hash(cfg);
    let mut report = ExperimentReport::new("bus_comparison", cfg.seed, hash.clone());

    let pipe = PipelineConfig {
        params: cfg.filter,
        mode: PredictionMode::Weighted,
        correction_hz: cfg.correction_hz,
    };
    let run = run_ideal(&chain, &streams, &initial, &pipe)?;
    let mut ideal = ErrorSeries::new("moving", "ideal");
    for c in run.corrections_for(1) {
        if c.t >= cfg.settle_s {
            ideal.push(deg(rotation_angle_between(&run.q[1][c.k], &truth.limbs[1].q[c.k])));
        }
    }

    let estimators = chain
        .limbs()
        .iter()
        .map(|l| SensorEstimator::new(initial[l.id], l.length, cfg.filter))
        .collect::<Result<Vec<_>, _>>()?;
    let mut schedule = cfg.schedule;
    if cfg.correction_hz > 0.0 {
        schedule.cycle_period_us = Some((1e6 / cfg.correction_hz).round() as u64);
    }
    let mut net = Network::new(
        chain.clone(),
        estimators,
        streams,
        schedule,
        cfg.quant,
        BusOptions::default(),
        cfg.seed,
    )?;
    let mut bus = ErrorSeries::new("moving", "bus");
    let mut staleness = Vec::new();
    while net.has_room_for_cycle() {
        let r = net.run_cycle()?;
        if let Some(k) = net.sample_index(1) {
            if truth.times[k] >= cfg.settle_s {
                let q = net.estimator(1).orientation();
                bus.push(deg(rotation_angle_between(&q, &truth.limbs[1].q[k])));
            }
        }
        staleness.extend(r.services.iter().filter_map(|s| s.staleness_us).map(|s| s as f64));
    }
    report.scenarios.push(ideal.report(&hash, cfg.seed)?);
    report.scenarios.push(bus.report(&hash, cfg.seed)?);
    if let Some(m) = mean(&staleness) {
        report.metric("moving", "mean_staleness_us", m, staleness.len());
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Dispatch by name

pub const EXPERIMENTS: [&str; 6] = [
    "yaw_recovery",
    "accel_prediction",
    "drift",
    "correction_accuracy",
    "unobservability",
    "bus_comparison",
];

/// Run-level settings applied on top of an experiment's defaults.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub noise: Option<NoiseSpec>,
    pub filter: Option<FilterParams>,
    pub sample_rate: Option<f64>,
    pub correction_hz: Option<f64>,
    pub limb_lengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedOutcome {
    pub report: ExperimentReport,
    /// Whitespace-separated columns for plotting, when the experiment has
    /// a natural time series.
    pub plot: Option<String>,
}

macro_rules! apply {
    ($cfg:ident, $o:ident; $($field:ident),*) => {
        $(if let Some(v) = &$o.$field {
            $cfg.$field = v.clone();
        })*
    };
}

pub fn run_named(name: &str, o: &Overrides) -> Result<NamedOutcome, EvalError> {
    let plain = |report| NamedOutcome { report, plot: None };
    match name {
        "yaw_recovery" => {
            let mut c = YawRecoveryConfig::default();
            apply!(c, o; seed, noise, filter, sample_rate, correction_hz, limb_lengths);
            let out = experiment_yaw_recovery(&c)?;
            let plot = Some(out.plot_data());
            Ok(NamedOutcome {
                report: out.report,
                plot,
            })
        }
        "accel_prediction" => {
            let mut c = AccelPredictionConfig::default();
            apply!(c, o; seed, noise, filter, sample_rate);
            if let Some(l) = o.limb_lengths.as_ref().and_then(|l| l.first()) {
                c.limb_length = *l;
            }
            experiment_accel_prediction(&c).map(plain)
        }
        "drift" => {
            let mut c = DriftConfig::default();
            apply!(c, o; seed, noise, sample_rate);
            experiment_drift_characterization(&c).map(|d| plain(d.report))
        }
        "correction_accuracy" => {
            let mut c = CorrectionAccuracyConfig::default();
            apply!(c, o; seed, noise, filter, sample_rate, correction_hz, limb_lengths);
            experiment_correction_accuracy(&c).map(plain)
        }
        "unobservability" => {
            let mut c = UnobservabilityConfig::default();
            apply!(c, o; seed, noise, filter, sample_rate, correction_hz, limb_lengths);
            let out = experiment_unobservability(&c)?;
            let mut plot = String::from("# update twist_x twist_y twist_z\n");
            let n = out.runs.iter().map(|r| r.twist_deg.len()).min().unwrap_or(0);
            for i in 0..n {
                plot += &format!(
                    "{i} {} {} {}\n",
                    out.runs[0].twist_deg[i], out.runs[1].twist_deg[i], out.runs[2].twist_deg[i]
                );
            }
            Ok(NamedOutcome {
                report: out.report,
                plot: Some(plot),
            })
        }
        "bus_comparison" => {
            let mut c = BusComparisonConfig::default();
            apply!(c, o; seed, noise, filter, sample_rate, correction_hz, limb_lengths);
            experiment_bus_comparison(&c).map(plain)
        }
        other => Err(EvalError::Config(format!(
            "unknown experiment `{other}` (expected one of {})",
            EXPERIMENTS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_means_drop_the_partial_tail() {
        assert_eq!(window_means(&[1.0, -3.0, 2.0, 2.0, 9.0], 2), vec![2.0, 2.0]);
        assert!(window_means(&[1.0], 4).is_empty());
    }

    #[test]
    fn unknown_names_are_rejected() {
        let err = run_named("nope", &Overrides::default()).err().unwrap();
        assert!(err.to_string().contains("yaw_recovery"));
    }

    #[test]
    fn yaw_starts_near_its_initial_offset() {
        let out = experiment_yaw_recovery(&YawRecoveryConfig {
            repetitions: 1,
            ..Default::default()
        })
        .unwrap();
        assert!((out.yaw_trace.values[0] - 90.0).abs() < 1.0);
    }
}
