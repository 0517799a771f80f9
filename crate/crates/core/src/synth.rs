//! Ground-truth chain motion and synthetic IMU readings.
//!
//! Each limb follows its own body-frame angular-rate program; the joints
//! are ball joints, so any set of limb orientations is a valid chain pose.
//! Orientations are integrated with RK4 on a grid finer than the sensor
//! rate, and joint accelerations come from the analytic rigid-body formula
//! `a_tip = a_base + α × p + ω × (ω × p)`, not from the circular-motion
//! model used by the estimator.
//!
//! Accelerometers report specific force: the kinematic acceleration plus
//! the ambient field term. For a resting chain on Earth the field is
//! `(0, 0, 9.81)`; in free fall it is zero.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainSpec;
use crate::rotmath::{UnitQuaternion, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("sample rate must be positive and finite, got {0}")]
    BadSampleRate(f64),
    #[error("duration must be positive and finite, got {0}")]
    BadDuration(f64),
    #[error("trajectory has {got} limb programs but chain has {want} limbs")]
    LimbCount { got: usize, want: usize },
    #[error("oscillation frequency must be positive, got {0}")]
    BadFrequency(f64),
    #[error("invalid motion window: {0}")]
    BadWindow(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("noise sigmas must be non-negative and finite")]
    BadNoise,
}

/// Smooth on/off envelope: 0 before `start`, quintic ramp up over `ramp`
/// seconds, 1 until `end - ramp`, ramp down to 0 at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub ramp: f64,
}

impl Window {
    pub fn new(start: f64, end: f64, ramp: f64) -> Self {
        Window { start, end, ramp }
    }

    fn check(&self) -> Result<(), SynthError> {
        if !(self.start.is_finite() && self.end.is_finite() && self.ramp.is_finite()) {
            return Err(SynthError::NonFinite("window"));
        }
        if self.ramp < 0.0 || self.end < self.start || 2.0 * self.ramp > self.end - self.start {
            return Err(SynthError::BadWindow(format!(
                "start {} end {} ramp {}",
                self.start, self.end, self.ramp
            )));
        }
        Ok(())
    }

    /// Envelope value and its first two time derivatives.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t <= self.start || t >= self.end {
            return (0.0, 0.0, 0.0);
        }
        if self.ramp == 0.0 {
            return (1.0, 0.0, 0.0);
        }
        let (u, sign) = if t < self.start + self.ramp {
            ((t - self.start) / self.ramp, 1.0)
        } else if t > self.end - self.ramp {
            ((self.end - t) / self.ramp, -1.0)
        } else {
            return (1.0, 0.0, 0.0);
        };
        // smootherstep 6u^5 - 15u^4 + 10u^3
        let s = u * u * u * (u * (6.0 * u - 15.0) + 10.0);
        let ds = 30.0 * u * u * (u - 1.0) * (u - 1.0);
        let dds = 60.0 * u * (u - 1.0) * (2.0 * u - 1.0);
        let k = 1.0 / self.ramp;
        (s, sign * ds * k, dds * k * k)
    }
}

fn envelope(w: &Option<Window>, t: f64) -> (f64, f64, f64) {
    w.as_ref().map_or((1.0, 0.0, 0.0), |w| w.eval(t))
}

/// `offset + amplitude * sin(2π f t + phase)`, per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTerm {
    #[serde(default)]
    pub offset: Vec3,
    #[serde(default)]
    pub amplitude: Vec3,
    #[serde(default)]
    pub freq_hz: f64,
    #[serde(default)]
    pub phase: f64,
}

impl RateTerm {
    pub fn constant(omega: Vec3) -> Self {
        RateTerm {
            offset: omega,
            amplitude: Vec3::ZERO,
            freq_hz: 0.0,
            phase: 0.0,
        }
    }

    pub fn sine(amplitude: Vec3, freq_hz: f64, phase: f64) -> Self {
        RateTerm {
            offset: Vec3::ZERO,
            amplitude,
            freq_hz,
            phase,
        }
    }
}

/// Body-frame angular velocity of one limb as a sum of sinusoids, optionally
/// gated by a smooth window.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RateProgram {
    #[serde(default)]
    pub terms: Vec<RateTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

impl RateProgram {
    pub fn still() -> Self {
        RateProgram::default()
    }

    pub fn new(terms: Vec<RateTerm>) -> Self {
        RateProgram {
            terms,
            window: None,
        }
    }

    pub fn windowed(mut self, window: Window) -> Self {
        self.window = Some(window);
        self
    }

    /// Multiplies every term by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        RateProgram {
            terms: self
                .terms
                .iter()
                .map(|t| RateTerm {
                    offset: t.offset * k,
                    amplitude: t.amplitude * k,
                    ..*t
                })
                .collect(),
            window: self.window,
        }
    }

    /// Angular rate and its time derivative at `t`, body frame.
    pub fn eval(&self, t: f64) -> (Vec3, Vec3) {
        let mut s = Vec3::ZERO;
        let mut ds = Vec3::ZERO;
        for term in &self.terms {
            let w = TAU * term.freq_hz;
            let (sin, cos) = (w * t + term.phase).sin_cos();
            s += term.offset + term.amplitude * sin;
            ds += term.amplitude * (w * cos);
        }
        let (e, de, _) = envelope(&self.window, t);
        (s * e, ds * e + s * de)
    }

    fn check(&self) -> Result<(), SynthError> {
        for t in &self.terms {
            if !(t.offset.is_finite()
                && t.amplitude.is_finite()
                && t.freq_hz.is_finite()
                && t.phase.is_finite())
            {
                return Err(SynthError::NonFinite("rate term"));
            }
            if t.freq_hz < 0.0 {
                return Err(SynthError::BadFrequency(t.freq_hz));
            }
        }
        self.window.as_ref().map_or(Ok(()), Window::check)
    }
}

/// One sinusoidal component of the root's linear acceleration,
/// `amplitude * sin(2π f t + phase)` in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelTerm {
    pub amplitude: Vec3,
    pub freq_hz: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Translation of the root limb's base. The position is the closed-form
/// double integral of the acceleration terms, so positions and
/// accelerations are exactly consistent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RootMotion {
    #[serde(default)]
    pub terms: Vec<AccelTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

impl RootMotion {
    pub fn fixed() -> Self {
        RootMotion::default()
    }

    /// World position and acceleration of the root joint at `t`.
    pub fn eval(&self, t: f64) -> (Vec3, Vec3) {
        let (mut s, mut ds, mut dds) = (Vec3::ZERO, Vec3::ZERO, Vec3::ZERO);
        for term in &self.terms {
            let w = TAU * term.freq_hz;
            let (sin, cos) = (w * t + term.phase).sin_cos();
            s += term.amplitude * (-sin / (w * w));
            ds += term.amplitude * (-cos / w);
            dds += term.amplitude * sin;
        }
        let (e, de, dde) = envelope(&self.window, t);
        (s * e, dds * e + ds * (2.0 * de) + s * dde)
    }

    fn check(&self) -> Result<(), SynthError> {
        for t in &self.terms {
            if !(t.amplitude.is_finite() && t.phase.is_finite() && t.freq_hz.is_finite()) {
                return Err(SynthError::NonFinite("root acceleration term"));
            }
            if t.freq_hz <= 0.0 {
                return Err(SynthError::BadFrequency(t.freq_hz));
            }
        }
        self.window.as_ref().map_or(Ok(()), Window::check)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimbMotion {
    /// Orientation at `t = 0`, body to world.
    #[serde(default)]
    pub initial: UnitQuaternion,
    #[serde(default)]
    pub rate: RateProgram,
}

impl LimbMotion {
    pub fn still(initial: UnitQuaternion) -> Self {
        LimbMotion {
            initial,
            rate: RateProgram::still(),
        }
    }
}

fn default_oversample() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// Seconds.
    pub duration: f64,
    /// Sensor sample rate in Hz.
    pub sample_rate: f64,
    /// Uniform specific-force field added to every acceleration (m/s²).
    #[serde(default)]
    pub ambient_field: Vec3,
    #[serde(default)]
    pub root: RootMotion,
    /// One program per limb, indexed by limb id.
    pub limbs: Vec<LimbMotion>,
    /// Integration substeps per sensor sample.
    #[serde(default = "default_oversample")]
    pub oversample: u32,
}

impl TrajectorySpec {
    /// Every limb at rest at the identity orientation.
    pub fn still(n_limbs: usize, duration: f64, sample_rate: f64) -> Self {
        TrajectorySpec {
            duration,
            sample_rate,
            ambient_field: Vec3::ZERO,
            root: RootMotion::fixed(),
            limbs: vec![LimbMotion::still(UnitQuaternion::IDENTITY); n_limbs],
            oversample: default_oversample(),
        }
    }

    pub fn validate(&self, chain: &ChainSpec) -> Result<(), SynthError> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(SynthError::BadSampleRate(self.sample_rate));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SynthError::BadDuration(self.duration));
        }
        if self.limbs.len() != chain.len() {
            return Err(SynthError::LimbCount {
                got: self.limbs.len(),
                want: chain.len(),
            });
        }
        if !self.ambient_field.is_finite() {
            return Err(SynthError::NonFinite("ambient field"));
        }
        self.root.check()?;
        for l in &self.limbs {
            l.rate.check()?;
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.sample_rate + 1e-9).floor() as usize + 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Per-axis white noise on the accelerometer, m/s².
    pub accel_sigma: f64,
    /// Per-axis white noise on the gyroscope, rad/s.
    pub gyro_sigma: f64,
    /// Constant gyroscope bias shared by every sensor, rad/s.
    #[serde(default)]
    pub gyro_bias: Vec3,
    /// Per-axis standard deviation of an extra per-sensor, per-run bias
    /// drawn once from the seed (turn-on bias), rad/s.
    #[serde(default)]
    pub gyro_bias_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

/// ‖a‖ RMSE of a resting accelerometer on the reference hardware, m/s².
pub const REFERENCE_ACCEL_NORM_RMSE: f64 = 0.043;
/// ‖ω‖ RMSE of a resting gyroscope on the reference hardware, rad/s.
pub const REFERENCE_GYRO_NORM_RMSE: f64 = 0.0027;
/// Bias magnitude giving a mean dead-reckoning time-to-1° of 29.7 s.
/// Frozen output of `eval::calibrate_bias_magnitude`.
pub const CALIBRATED_GYRO_BIAS: f64 = 5.876e-4;
/// Per-axis turn-on bias spread reproducing the 26.6–34.2 s range of
/// time-to-1° over repeated runs.
pub const CALIBRATED_GYRO_BIAS_SIGMA: f64 = 3.5e-5;

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            accel_sigma: 0.0,
            gyro_sigma: 0.0,
            gyro_bias: Vec3::ZERO,
            gyro_bias_sigma: 0.0,
            seed: 0,
        }
    }

    /// Noise calibrated to the reference sensors.
    ///
    /// For isotropic Gaussian noise the magnitude RMSE is `√3·σ`, so the
    /// per-axis sigmas are recovered from the reported magnitude RMSE. The
    /// gyroscope figure includes the bias, which is removed first.
    pub fn reference(seed: u64) -> Self {
        Self::reference_with_bias(seed, CALIBRATED_GYRO_BIAS)
    }

    /// [`NoiseSpec::reference`] with a different bias magnitude `b`.
    pub fn reference_with_bias(seed: u64, b: f64) -> Self {
        let gyro_sigma =
            ((REFERENCE_GYRO_NORM_RMSE * REFERENCE_GYRO_NORM_RMSE - b * b) / 3.0).sqrt();
        NoiseSpec {
            accel_sigma: REFERENCE_ACCEL_NORM_RMSE / 3f64.sqrt(),
            gyro_sigma,
            gyro_bias: Vec3::new(1.0, -1.0, 1.0) * (b / 3f64.sqrt()),
            gyro_bias_sigma: CALIBRATED_GYRO_BIAS_SIGMA,
            seed,
        }
    }

    pub fn bias_magnitude(&self) -> f64 {
        self.gyro_bias.norm()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check(&self) -> Result<(), SynthError> {
        let ok = |s: f64| s >= 0.0 && s.is_finite();
        if ok(self.accel_sigma)
            && ok(self.gyro_sigma)
            && ok(self.gyro_bias_sigma)
            && self.gyro_bias.is_finite()
        {
            Ok(())
        } else {
            Err(SynthError::BadNoise)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds.
    pub t: f64,
    /// Body-frame angular rate, rad/s.
    pub gyro: Vec3,
    /// Body-frame specific force, m/s².
    pub accel: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub sensor_id: usize,
    pub samples: Vec<ImuSample>,
    /// Total constant bias applied to this stream's gyro (not part of any
    /// file format; kept for diagnostics).
    pub gyro_bias: Vec3,
}

/// True state of one limb at every sensor sample time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LimbTruth {
    pub q: Vec<UnitQuaternion>,
    pub omega_body: Vec<Vec3>,
    pub p_base: Vec<Vec3>,
    pub p_tip: Vec<Vec3>,
    /// World-frame specific force at the joint with the parent.
    pub a_base: Vec<Vec3>,
    /// World-frame specific force at the sensor.
    pub a_tip: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    pub limbs: Vec<LimbTruth>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

type Q4 = [f64; 4];

fn qdot(q: &Q4, w: Vec3) -> Q4 {
    // 0.5 * q ⊗ (0, w)
    [
        0.5 * (-q[1] * w.x - q[2] * w.y - q[3] * w.z),
        0.5 * (q[0] * w.x + q[2] * w.z - q[3] * w.y),
        0.5 * (q[0] * w.y - q[1] * w.z + q[3] * w.x),
        0.5 * (q[0] * w.z + q[1] * w.y - q[2] * w.x),
    ]
}

fn axpy(q: &Q4, k: &Q4, h: f64) -> Q4 {
    [
        q[0] + h * k[0],
        q[1] + h * k[1],
        q[2] + h * k[2],
        q[3] + h * k[3],
    ]
}

fn normalize(q: Q4) -> Q4 {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

fn integrate_orientation(motion: &LimbMotion, times: &[f64], substeps: u32) -> Vec<UnitQuaternion> {
    let mut out = Vec::with_capacity(times.len());
    let mut q: Q4 = motion.initial.to_array();
    let mut t = times.first().copied().unwrap_or(0.0);
    out.push(motion.initial);
    let rate = |t: f64| motion.rate.eval(t).0;
    for &t_next in times.iter().skip(1) {
        let h = (t_next - t) / substeps as f64;
        for i in 0..substeps {
            let t0 = t + i as f64 * h;
            let k1 = qdot(&q, rate(t0));
            let k2 = qdot(&axpy(&q, &k1, 0.5 * h), rate(t0 + 0.5 * h));
            let k3 = qdot(&axpy(&q, &k2, 0.5 * h), rate(t0 + 0.5 * h));
            let k4 = qdot(&axpy(&q, &k3, h), rate(t0 + h));
            q = normalize([
                q[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                q[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                q[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
                q[3] + h / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
            ]);
        }
        t = t_next;
        out.push(UnitQuaternion::from_components(q[0], q[1], q[2], q[3]).expect("unit"));
    }
    out
}

/// Forward-simulates the chain and returns the true state at every sensor
/// sample time `k / sample_rate`.
pub fn integrate_truth(chain: &ChainSpec, traj: &TrajectorySpec) -> Result<GroundTruth, SynthError> {
    traj.validate(chain)?;
    let n = traj.sample_count();
    let times: Vec<f64> = (0..n).map(|k| k as f64 / traj.sample_rate).collect();
    let substeps = traj.oversample.max(1);

    let mut limbs = vec![LimbTruth::default(); chain.len()];
    for (id, motion) in traj.limbs.iter().enumerate() {
        limbs[id].q = integrate_orientation(motion, &times, substeps);
        limbs[id].omega_body = times.iter().map(|&t| motion.rate.eval(t).0).collect();
    }

    for &id in chain.traversal_order() {
        let limb = chain.limbs()[id];
        let offset = limb.tip_offset();
        let rate = &traj.limbs[id].rate;
        let (p_base, a_base_kin): (Vec<Vec3>, Vec<Vec3>) = match limb.parent {
            None => times.iter().map(|&t| traj.root.eval(t)).unzip(),
            Some(p) => {
                let parent = &limbs[p];
                let a = parent.a_tip.iter().map(|&a| a - traj.ambient_field).collect();
                (parent.p_tip.clone(), a)
            }
        };
        let mut p_tip = Vec::with_capacity(n);
        let mut a_tip = Vec::with_capacity(n);
        for k in 0..n {
            let q = limbs[id].q[k];
            let (w_b, dw_b) = rate.eval(times[k]);
            let r = q.rotate_vector(offset);
            let w = q.rotate_vector(w_b);
            // d/dt (R ω_b) = R (ω_b × ω_b + ω̇_b) = R ω̇_b
            let alpha = q.rotate_vector(dw_b);
            p_tip.push(p_base[k] + r);
            a_tip.push(a_base_kin[k] + alpha.cross(r) + w.cross(w.cross(r)) + traj.ambient_field);
        }
        let lt = &mut limbs[id];
        lt.a_base = a_base_kin.into_iter().map(|a| a + traj.ambient_field).collect();
        lt.p_base = p_base;
        lt.p_tip = p_tip;
        lt.a_tip = a_tip;
    }

    Ok(GroundTruth { times, limbs })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of one sensor's noise stream, derived from the master seed.
pub fn sensor_seed(master: u64, sensor_id: usize) -> u64 {
    splitmix64(master ^ splitmix64(sensor_id as u64 + 1))
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::ZERO;
    }
    let d = Normal::new(0.0, sigma).expect("sigma checked");
    Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng))
}

/// What each tip-mounted sensor would report for the given true motion.
///
/// `accel = R⁻¹ a_tip + n_a`, `gyro = ω_body + bias + n_g`. Each sensor draws
/// from its own deterministic stream, so the output depends only on the
/// inputs.
pub fn synthesize_imu(
    truth: &GroundTruth,
    chain: &ChainSpec,
    noise: &NoiseSpec,
) -> Result<Vec<SensorStream>, SynthError> {
    noise.check()?;
    if truth.limbs.len() != chain.len() {
        return Err(SynthError::LimbCount {
            got: truth.limbs.len(),
            want: chain.len(),
        });
    }
    let streams = truth
        .limbs
        .iter()
        .enumerate()
        .map(|(id, limb)| {
            let mut rng = ChaCha8Rng::seed_from_u64(sensor_seed(noise.seed, id));
            let bias = noise.gyro_bias + gaussian3(&mut rng, noise.gyro_bias_sigma);
            let samples = truth
                .times
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let q = limb.q[k];
                    let accel = q.inverse_rotate_vector(limb.a_tip[k])
                        + gaussian3(&mut rng, noise.accel_sigma);
                    let gyro = limb.omega_body[k] + bias + gaussian3(&mut rng, noise.gyro_sigma);
                    ImuSample { t, gyro, accel }
                })
                .collect();
            SensorStream {
                sensor_id: id,
                samples,
                gyro_bias: bias,
            }
        })
        .collect();
    Ok(streams)
}
