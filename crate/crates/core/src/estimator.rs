//! Per-sensor orientation estimation with joint-acceleration drift
//! correction.
//!
//! Each sensor integrates its gyroscope (dead reckoning). A child sensor
//! also predicts the acceleration at its base joint by removing the
//! centripetal and tangential terms caused by its own rotation. The parent
//! measures that same point at its tip, so once both vectors are in the
//! world frame any angle between them is orientation error in the child.
//! The child rotates towards agreement by a fraction of that angle chosen
//! from the signal-to-noise ratio of the two readings.
//!
//! Rotation about the shared acceleration direction leaves both vectors
//! unchanged and cannot be observed; it is only corrected once the
//! acceleration direction changes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rotmath::{slerp, UnitQuaternion, Vec3};
use crate::synth::ImuSample;

/// Vectors shorter than this carry no direction.
const MIN_VECTOR_NORM: f64 = 1e-12;
/// Correction axes shorter than this are treated as parallel vectors.
const MIN_AXIS_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("invalid filter parameter {name} = {value}")]
    BadParam { name: &'static str, value: f64 },
    #[error("limb length must be positive, got {0}")]
    BadLength(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Mean magnitude of accelerometer noise, m/s².
    pub noise_floor_mu: f64,
    /// SNR at which the correction gain reaches `gamma_max`.
    pub snr_saturation: f64,
    /// Largest fraction of the measured error removed in one correction.
    pub gamma_max: f64,
    /// Angular rate giving full prediction weight on its own, rad/s.
    pub beta_omega_ref: f64,
    /// Angular acceleration giving full prediction weight on its own, rad/s².
    pub beta_alpha_ref: f64,
}

impl Default for FilterParams {
    /// Tuned on simulation for corrections at 30 Hz.
    fn default() -> Self {
        FilterParams {
            noise_floor_mu: 0.035,
            snr_saturation: 25.0,
            gamma_max: 0.1,
            beta_omega_ref: 0.5,
            beta_alpha_ref: 5.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let positive = |name, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(EstimatorError::BadParam { name, value })
            }
        };
        positive("noise_floor_mu", self.noise_floor_mu)?;
        positive("snr_saturation", self.snr_saturation)?;
        positive("beta_omega_ref", self.beta_omega_ref)?;
        positive("beta_alpha_ref", self.beta_alpha_ref)?;
        if !(self.gamma_max > 0.0 && self.gamma_max <= 1.0) {
            return Err(EstimatorError::BadParam {
                name: "gamma_max",
                value: self.gamma_max,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    /// Current orientation estimate, body to world.
    pub q: UnitQuaternion,
    /// Orientation at the previous sample.
    pub q_prev: UnitQuaternion,
    /// Gyro reading belonging to `q_prev`.
    pub omega_prev: Vec3,
    /// Limb length, meters.
    pub limb_length: f64,
}

impl EstimatorState {
    pub fn new(q: UnitQuaternion, limb_length: f64) -> Self {
        EstimatorState {
            q,
            q_prev: q,
            omega_prev: Vec3::ZERO,
            limb_length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    /// Angle between parent and child joint accelerations, radians.
    pub theta_raw: f64,
    /// Angle actually applied after the SNR weighting, radians.
    pub phi: f64,
    /// Unit world-frame axis that rotates the child vector onto the parent's.
    pub axis_world: Vec3,
    pub snr: f64,
    pub applied: bool,
}

impl CorrectionResult {
    pub fn none() -> Self {
        CorrectionResult {
            theta_raw: 0.0,
            phi: 0.0,
            axis_world: Vec3::ZERO,
            snr: 0.0,
            applied: false,
        }
    }
}

/// Advances the orientation by one gyro reading.
///
/// The rotation `‖ω‖·dt` about `ω` is expressed in the body frame, so it is
/// composed on the right: `q' = q ⊗ r`. `q_prev` takes the old orientation;
/// `omega_prev` is left for the caller to commit once the prediction for
/// this sample is done.
pub fn dead_reckon_step(state: &EstimatorState, gyro: Vec3, dt: f64) -> EstimatorState {
    let r = UnitQuaternion::from_rotation_vector(gyro * dt);
    EstimatorState {
        q: state.q.compose(&r),
        q_prev: state.q,
        ..*state
    }
}

/// Body-frame velocity of the tip relative to the base: `ω × (0, r, 0)`.
///
/// Evaluates to `(-r ω_z, 0, r ω_x)`. Rotation about the limb axis (`ω_y`)
/// does not move the tip.
pub fn predict_tip_velocity(gyro: Vec3, r: f64) -> Vec3 {
    gyro.cross(Vec3::new(0.0, r, 0.0))
}

/// Weight of the rotational prediction, in `[0, 1]`. Zero when still,
/// saturating at 1 for fast or sharply accelerating rotation.
pub fn beta(omega: Vec3, omega_prev: Vec3, dt: f64, params: &FilterParams) -> f64 {
    let rate = omega.norm() / params.beta_omega_ref;
    let accel = (omega - omega_prev).norm() / (dt * params.beta_alpha_ref);
    (rate + accel).min(1.0)
}

/// Body-frame acceleration of the tip relative to the base, from the change
/// in world-frame tip velocity between the previous and current samples.
/// Expressed in the frame halfway between the two orientations.
pub fn rotational_accel(state: &EstimatorState, gyro: Vec3, dt: f64) -> Vec3 {
    let r = state.limb_length;
    let v = state.q.rotate_vector(predict_tip_velocity(gyro, r));
    let v_prev = state
        .q_prev
        .rotate_vector(predict_tip_velocity(state.omega_prev, r));
    let a_world = (v - v_prev) / dt;
    let q_mid = slerp(&state.q_prev, &state.q, 0.5);
    q_mid.inverse_rotate_vector(a_world)
}

/// Acceleration at the limb base in body frame, `accel − β·a_rot`, with β
/// from [`beta`].
///
/// `state` must already hold the orientation for this sample (see
/// [`dead_reckon_step`]) and the previous gyro reading.
pub fn predict_base_accel(
    state: &EstimatorState,
    gyro: Vec3,
    accel: Vec3,
    dt: f64,
    params: &FilterParams,
) -> Vec3 {
    let weight = beta(gyro, state.omega_prev, dt, params);
    predict_base_accel_weighted(state, gyro, accel, dt, weight)
}

/// [`predict_base_accel`] with an explicit weight instead of β.
pub fn predict_base_accel_weighted(
    state: &EstimatorState,
    gyro: Vec3,
    accel: Vec3,
    dt: f64,
    weight: f64,
) -> Vec3 {
    if weight == 0.0 {
        return accel;
    }
    accel - rotational_accel(state, gyro, dt) * weight
}

/// Correction gain, linear in SNR up to `gamma_max`.
pub fn gamma(snr: f64, params: &FilterParams) -> f64 {
    (params.gamma_max * snr / params.snr_saturation).clamp(0.0, params.gamma_max)
}

/// Compares the child's base acceleration with the parent's tip
/// acceleration in the world frame.
pub fn compute_correction(
    q_child: &UnitQuaternion,
    a_base_child: Vec3,
    q_parent: &UnitQuaternion,
    a_tip_parent: Vec3,
    params: &FilterParams,
) -> CorrectionResult {
    correction_from_world(
        q_parent.rotate_vector(a_tip_parent),
        q_child.rotate_vector(a_base_child),
        params,
    )
}

/// Same as [`compute_correction`] with both vectors already in the world
/// frame. This is the form used when the parent's reading arrives over the
/// bus.
pub fn correction_from_world(
    parent_world: Vec3,
    child_world: Vec3,
    params: &FilterParams,
) -> CorrectionResult {
    let np = parent_world.norm();
    let nc = child_world.norm();
    if !(np > MIN_VECTOR_NORM && nc > MIN_VECTOR_NORM) || !(np.is_finite() && nc.is_finite()) {
        return CorrectionResult::none();
    }
    let cos = (parent_world.dot(child_world) / (np * nc)).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let snr = np * nc / (params.noise_floor_mu * params.noise_floor_mu);
    // child × parent: rotating the child vector about this axis by θ lands
    // it on the parent vector
    let cross = child_world.cross(parent_world);
    let Some(axis) = cross.normalized().filter(|_| cross.norm() > MIN_AXIS_NORM) else {
        return CorrectionResult {
            theta_raw: theta,
            snr,
            ..CorrectionResult::none()
        };
    };
    CorrectionResult {
        theta_raw: theta,
        phi: theta * gamma(snr, params),
        axis_world: axis,
        snr,
        applied: true,
    }
}

/// Rotates the orientation estimate in the world frame by `phi` about the
/// correction axis.
pub fn apply_correction(state: &EstimatorState, corr: &CorrectionResult) -> EstimatorState {
    if !corr.applied || corr.phi == 0.0 {
        return *state;
    }
    let q_gamma = UnitQuaternion::from_rotation_vector(corr.axis_world * corr.phi);
    EstimatorState {
        q: q_gamma.compose(&state.q),
        ..*state
    }
}

/// How the rotational acceleration is removed before comparing joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Raw tip acceleration is used as the base acceleration.
    Off,
    /// Full prediction, weight 1.
    Full,
    /// Prediction weighted by β.
    #[default]
    Weighted,
}

/// One sensor's estimator as a sample-driven state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorEstimator {
    pub state: EstimatorState,
    pub params: FilterParams,
    pub mode: PredictionMode,
    last_t: Option<f64>,
    last_accel: Vec3,
    base_accel: Vec3,
}

impl SensorEstimator {
    pub fn new(
        initial: UnitQuaternion,
        limb_length: f64,
        params: FilterParams,
    ) -> Result<Self, EstimatorError> {
        params.validate()?;
        if !(limb_length > 0.0 && limb_length.is_finite()) {
            return Err(EstimatorError::BadLength(limb_length));
        }
        Ok(SensorEstimator {
            state: EstimatorState::new(initial, limb_length),
            params,
            mode: PredictionMode::Weighted,
            last_t: None,
            last_accel: Vec3::ZERO,
            base_accel: Vec3::ZERO,
        })
    }

    pub fn with_mode(mut self, mode: PredictionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn orientation(&self) -> UnitQuaternion {
        self.state.q
    }

    /// Time of the last processed sample.
    pub fn last_time(&self) -> Option<f64> {
        self.last_t
    }

    /// Latest raw accelerometer reading, body frame.
    pub fn tip_accel(&self) -> Vec3 {
        self.last_accel
    }

    /// Latest tip acceleration rotated into the world frame.
    pub fn tip_accel_world(&self) -> Vec3 {
        self.state.q.rotate_vector(self.last_accel)
    }

    /// Latest base-acceleration prediction, body frame.
    pub fn base_accel(&self) -> Vec3 {
        self.base_accel
    }

    pub fn base_accel_world(&self) -> Vec3 {
        self.state.q.rotate_vector(self.base_accel)
    }

    /// Consumes one sample. The first sample only initializes the rate
    /// memory; the orientation given at construction is taken to hold at
    /// that sample's time.
    pub fn update(&mut self, sample: &ImuSample) {
        let Some(t_prev) = self.last_t else {
            self.last_t = Some(sample.t);
            self.state.omega_prev = sample.gyro;
            self.last_accel = sample.accel;
            self.base_accel = sample.accel;
            return;
        };
        let dt = sample.t - t_prev;
        if dt <= 0.0 {
            return;
        }
        self.state = dead_reckon_step(&self.state, sample.gyro, dt);
        self.base_accel = match self.mode {
            PredictionMode::Off => sample.accel,
            PredictionMode::Full => {
                predict_base_accel_weighted(&self.state, sample.gyro, sample.accel, dt, 1.0)
            }
            PredictionMode::Weighted => {
                predict_base_accel(&self.state, sample.gyro, sample.accel, dt, &self.params)
            }
        };
        self.state.omega_prev = sample.gyro;
        self.last_accel = sample.accel;
        self.last_t = Some(sample.t);
    }

    /// Pulls this sensor towards the parent's world-frame tip acceleration.
    pub fn correct(&mut self, parent_tip_world: Vec3) -> CorrectionResult {
        let corr = correction_from_world(parent_tip_world, self.base_accel_world(), &self.params);
        self.state = apply_correction(&self.state, &corr);
        corr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotmath::rotation_angle_between;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn params() -> FilterParams {
        FilterParams::default()
    }

    #[test]
    fn zero_rate_keeps_orientation() {
        let q = UnitQuaternion::from_axis_angle(0.3, Vec3::new(1.0, 2.0, 0.0)).unwrap();
        let s = dead_reckon_step(&EstimatorState::new(q, 0.5), Vec3::ZERO, 0.01);
        assert_eq!(s.q, q);
        assert_eq!(s.q_prev, q);
    }

    #[test]
    fn quarter_turn_in_one_second() {
        let s = EstimatorState::new(UnitQuaternion::IDENTITY, 0.5);
        let s = dead_reckon_step(&s, Vec3::new(0.0, 0.0, FRAC_PI_2), 1.0);
        let want = UnitQuaternion::from_axis_angle(FRAC_PI_2, Vec3::Z).unwrap();
        assert!(rotation_angle_between(&s.q, &want) < 1e-9);
    }

    #[test]
    fn body_frame_composition() {
        // limb tipped 90° about x; a body z rate must turn it about its own z
        let q0 = UnitQuaternion::from_axis_angle(FRAC_PI_2, Vec3::X).unwrap();
        let s = dead_reckon_step(&EstimatorState::new(q0, 0.5), Vec3::new(0.0, 0.0, 0.4), 1.0);
        let want = q0 * UnitQuaternion::from_axis_angle(0.4, Vec3::Z).unwrap();
        assert!(rotation_angle_between(&s.q, &want) < 1e-12);
    }

    #[test]
    fn tip_velocity_examples() {
        assert_eq!(predict_tip_velocity(Vec3::ZERO, 0.5), Vec3::ZERO);
        assert_eq!(predict_tip_velocity(Vec3::new(0.0, 5.0, 0.0), 0.5), Vec3::ZERO);
        let v = predict_tip_velocity(Vec3::new(2.0, 0.0, 3.0), 0.5);
        assert_eq!(v, Vec3::new(-1.5, 0.0, 1.0));
    }

    #[test]
    fn static_sensor_prediction_is_identity() {
        let s = EstimatorState::new(UnitQuaternion::IDENTITY, 0.5);
        let a = Vec3::new(0.1, 9.8, -0.2);
        assert_eq!(predict_base_accel(&s, Vec3::ZERO, a, 0.01, &params()), a);
    }

    #[test]
    fn gamma_examples() {
        let p = params();
        assert_eq!(gamma(0.0, &p), 0.0);
        assert_eq!(gamma(p.snr_saturation, &p), p.gamma_max);
        assert_eq!(gamma(10.0 * p.snr_saturation, &p), p.gamma_max);
        assert_abs_diff_eq!(gamma(p.snr_saturation / 2.0, &p), p.gamma_max / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn beta_examples() {
        let p = params();
        assert_eq!(beta(Vec3::ZERO, Vec3::ZERO, 0.01, &p), 0.0);
        assert_eq!(beta(Vec3::new(0.0, 0.0, 20.0), Vec3::ZERO, 0.01, &p), 1.0);
        let mut last = 0.0;
        for i in 0..100 {
            let w = Vec3::new(0.01 * i as f64, 0.0, 0.0);
            let b = beta(w, w, 0.01, &p);
            assert!(b >= last);
            last = b;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn identical_vectors_need_no_correction() {
        let q = UnitQuaternion::from_axis_angle(0.7, Vec3::Y).unwrap();
        let a = Vec3::new(1.0, 2.0, 3.0);
        let c = compute_correction(&q, a, &q, a, &params());
        assert!(c.theta_raw < 1e-7);
        assert!(c.phi <= c.theta_raw);
    }

    #[test]
    fn yaw_drift_is_measured_about_vertical() {
        let q_true = UnitQuaternion::from_axis_angle(0.4, Vec3::new(1.0, 0.0, 1.0)).unwrap();
        let drift = UnitQuaternion::from_axis_angle(FRAC_PI_2, Vec3::Z).unwrap();
        let q_child = drift * q_true;
        let a_world = Vec3::new(7.0, 0.0, 0.0);
        let a_body = q_true.inverse_rotate_vector(a_world);
        let mut p = params();
        p.gamma_max = 1.0;
        let c = compute_correction(&q_child, a_body, &UnitQuaternion::IDENTITY, a_world, &p);
        assert!(c.applied);
        assert_abs_diff_eq!(c.theta_raw, FRAC_PI_2, epsilon = 1e-9);
        assert!(c.axis_world.max_abs_diff(-Vec3::Z) < 1e-9);
        // applying the full correction realigns the child
        let s = apply_correction(&EstimatorState::new(q_child, 0.5), &c);
        assert!(rotation_angle_between(&s.q, &q_true) < 1e-9);
        assert!(s.q.rotate_vector(a_body).max_abs_diff(a_world) < 1e-9);
    }

    #[test]
    fn weak_signal_suppresses_correction() {
        let p = params();
        let a = Vec3::new(1e-4, 0.0, 0.0);
        let b = Vec3::new(0.0, 1e-4, 0.0);
        let c = correction_from_world(a, b, &p);
        assert!(c.snr < 1e-4);
        assert!(c.phi < 1e-5 * c.theta_raw);
        assert_eq!(correction_from_world(Vec3::ZERO, b, &p), CorrectionResult::none());
    }

    #[test]
    fn antiparallel_vectors_have_no_axis() {
        let c = correction_from_world(Vec3::X, -Vec3::X, &params());
        assert!(!c.applied);
        assert_eq!(c.phi, 0.0);
        assert_abs_diff_eq!(c.theta_raw, PI, epsilon = 1e-12);
    }

    #[test]
    fn zero_phi_is_a_no_op() {
        let s = EstimatorState::new(UnitQuaternion::from_axis_angle(1.0, Vec3::X).unwrap(), 0.5);
        let c = CorrectionResult {
            phi: 0.0,
            applied: true,
            axis_world: Vec3::Z,
            theta_raw: 0.3,
            snr: 100.0,
        };
        assert_eq!(apply_correction(&s, &c), s);
    }

    #[test]
    fn partial_corrections_decay_geometrically() {
        let q_true = UnitQuaternion::IDENTITY;
        let theta0 = 0.8;
        let mut s = EstimatorState::new(UnitQuaternion::from_axis_angle(theta0, Vec3::Z).unwrap(), 0.5);
        let a = Vec3::new(0.0, 5.0, 0.0);
        let p = params();
        let g = p.gamma_max;
        for n in 1..=40 {
            let a_body = q_true.inverse_rotate_vector(a);
            let c = compute_correction(&s.q, a_body, &q_true, a, &p);
            s = apply_correction(&s, &c);
            let err = rotation_angle_between(&s.q, &q_true);
            assert_abs_diff_eq!(err, theta0 * (1.0 - g).powi(n), epsilon = 1e-9);
        }
    }

    #[test]
    fn param_validation() {
        assert!(FilterParams::default().validate().is_ok());
        let p = FilterParams {
            gamma_max: 1.5,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(EstimatorError::BadParam { name: "gamma_max", .. })));
        let p = FilterParams {
            noise_floor_mu: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(SensorEstimator::new(UnitQuaternion::IDENTITY, -1.0, FilterParams::default()).is_err());
    }

    #[test]
    fn sensor_estimator_primes_on_first_sample() {
        let mut e = SensorEstimator::new(UnitQuaternion::IDENTITY, 0.5, params()).unwrap();
        let s0 = ImuSample {
            t: 0.0,
            gyro: Vec3::new(0.0, 0.0, 1.0),
            accel: Vec3::new(0.0, -0.5, 0.0),
        };
        e.update(&s0);
        assert_eq!(e.orientation(), UnitQuaternion::IDENTITY);
        assert_eq!(e.state.omega_prev, s0.gyro);
        let s1 = ImuSample { t: 0.01, ..s0 };
        e.update(&s1);
        let want = UnitQuaternion::from_axis_angle(0.01, Vec3::Z).unwrap();
        assert!(rotation_angle_between(&e.orientation(), &want) < 1e-12);
        // constant spin: centripetal reading removed almost exactly
        assert!(e.base_accel().norm() < 1e-4);
    }
}
