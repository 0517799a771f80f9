//! Discrete-event model of the hub/sensor bus.
//!
//! The hub serves sensors one at a time in depth-first order. For each
//! sensor it sends the parent's latest world-frame acceleration (6 bytes,
//! zeros for the root), waits while the sensor corrects itself, and reads
//! back the sensor's orientation and world-frame tip acceleration
//! (14 bytes). Between service slots every sensor keeps dead-reckoning at
//! its own sample rate.
//!
//! All payload values are signed 16-bit fixed point, little endian.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainSpec;
use crate::estimator::{CorrectionResult, SensorEstimator};
use crate::rotmath::{UnitQuaternion, Vec3};
use crate::synth::{ImuSample, SensorStream};

const QMAX: f64 = 32767.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("sensor {sensor} stream ends at {last_us} us, needed {needed_us} us")]
    StreamUnderrun {
        sensor: usize,
        last_us: u64,
        needed_us: u64,
    },
    #[error("expected {want} sensor streams/estimators, got {got}")]
    SensorCount { want: usize, got: usize },
    #[error("bad payload length {0}")]
    PayloadLength(usize),
}

/// Full-scale ranges of the 16-bit channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub quat_scale: f64,
    /// m/s²; the default is the ±16 g accelerometer range.
    pub accel_scale: f64,
}

impl Default for QuantSpec {
    fn default() -> Self {
        QuantSpec {
            quat_scale: 1.0,
            accel_scale: 156.9,
        }
    }
}

/// `round(v / full_scale · 32767)`, saturating at ±32767.
pub fn encode(v: f64, full_scale: f64) -> i16 {
    let k = (v / full_scale * QMAX).round();
    if k.is_nan() {
        return 0;
    }
    k.clamp(-QMAX, QMAX) as i16
}

pub fn decode(k: i16, full_scale: f64) -> f64 {
    k as f64 * full_scale / QMAX
}

pub fn quantize_roundtrip(v: f64, full_scale: f64) -> f64 {
    decode(encode(v, full_scale), full_scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HubToSensor,
    SensorToHub,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::HubToSensor => "H>S",
            Direction::SensorToHub => "S>H",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    /// Parent world-frame acceleration, 3 × i16.
    ParentAccel([u8; 6]),
    /// Orientation (4 × i16) then world-frame tip acceleration (3 × i16).
    Report([u8; 14]),
}

impl Payload {
    pub fn bytes(&self) -> &[u8] {
        match self {
            Payload::ParentAccel(b) => b,
            Payload::Report(b) => b,
        }
    }
}

fn put(buf: &mut [u8], i: usize, k: i16) {
    buf[2 * i..2 * i + 2].copy_from_slice(&k.to_le_bytes());
}

fn get(buf: &[u8], i: usize) -> i16 {
    i16::from_le_bytes([buf[2 * i], buf[2 * i + 1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusMessage {
    pub direction: Direction,
    pub sensor: usize,
    pub timestamp_us: u64,
    pub payload: Payload,
}

impl BusMessage {
    pub fn parent_accel(sensor: usize, timestamp_us: u64, accel: Vec3, spec: &QuantSpec) -> Self {
        let mut b = [0u8; 6];
        for (i, v) in accel.to_array().into_iter().enumerate() {
            put(&mut b, i, encode(v, spec.accel_scale));
        }
        BusMessage {
            direction: Direction::HubToSensor,
            sensor,
            timestamp_us,
            payload: Payload::ParentAccel(b),
        }
    }

    pub fn report(
        sensor: usize,
        timestamp_us: u64,
        q: &UnitQuaternion,
        accel_world: Vec3,
        spec: &QuantSpec,
    ) -> Self {
        let mut b = [0u8; 14];
        for (i, v) in q.to_array().into_iter().enumerate() {
            put(&mut b, i, encode(v, spec.quat_scale));
        }
        for (i, v) in accel_world.to_array().into_iter().enumerate() {
            put(&mut b, 4 + i, encode(v, spec.accel_scale));
        }
        BusMessage {
            direction: Direction::SensorToHub,
            sensor,
            timestamp_us,
            payload: Payload::Report(b),
        }
    }

    /// Rebuilds a message from a raw payload; the direction follows from the
    /// length.
    pub fn from_bytes(sensor: usize, timestamp_us: u64, bytes: &[u8]) -> Result<Self, NetError> {
        let (direction, payload) = match bytes.len() {
            6 => (
                Direction::HubToSensor,
                Payload::ParentAccel(bytes.try_into().expect("len 6")),
            ),
            14 => (
                Direction::SensorToHub,
                Payload::Report(bytes.try_into().expect("len 14")),
            ),
            n => return Err(NetError::PayloadLength(n)),
        };
        Ok(BusMessage {
            direction,
            sensor,
            timestamp_us,
            payload,
        })
    }

    /// Decoded acceleration (parent accel, or the report's tip accel).
    pub fn accel(&self, spec: &QuantSpec) -> Vec3 {
        let (b, off) = match &self.payload {
            Payload::ParentAccel(b) => (&b[..], 0),
            Payload::Report(b) => (&b[..], 4),
        };
        Vec3::new(
            decode(get(b, off), spec.accel_scale),
            decode(get(b, off + 1), spec.accel_scale),
            decode(get(b, off + 2), spec.accel_scale),
        )
    }

    /// Decoded orientation components, not renormalized. `None` for
    /// hub-to-sensor messages.
    pub fn quaternion(&self, spec: &QuantSpec) -> Option<[f64; 4]> {
        match &self.payload {
            Payload::Report(b) => Some([0, 1, 2, 3].map(|i| decode(get(b, i), spec.quat_scale))),
            Payload::ParentAccel(_) => None,
        }
    }

    /// One trace line: `timestamp_us direction sensor hex`.
    pub fn trace_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.timestamp_us,
            self.direction,
            self.sensor,
            hex::encode(self.payload.bytes())
        )
    }

    pub fn parse_trace_line(line: &str) -> Result<Self, NetError> {
        let bad = || NetError::PayloadLength(0);
        let mut it = line.split_whitespace();
        let t: u64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let _dir = it.next().ok_or_else(bad)?;
        let sensor: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let bytes = it.next().and_then(|s| hex::decode(s).ok()).ok_or_else(bad)?;
        BusMessage::from_bytes(sensor, t, &bytes)
    }
}

/// Service times of the bus, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleModel {
    pub root_min_us: u64,
    pub root_max_us: u64,
    pub child_min_us: u64,
    pub child_max_us: u64,
    /// Fixed cycle start period. `None` starts each cycle as soon as the
    /// previous one ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_period_us: Option<u64>,
}

impl Default for ScheduleModel {
    /// Measured response times of the reference bus: the root answers in
    /// 0–2300 µs, other sensors in 4100–6400 µs.
    fn default() -> Self {
        ScheduleModel {
            root_min_us: 0,
            root_max_us: 2300,
            child_min_us: 4100,
            child_max_us: 6400,
            cycle_period_us: None,
        }
    }
}

impl ScheduleModel {
    pub fn root_mean_us(&self) -> f64 {
        0.5 * (self.root_min_us + self.root_max_us) as f64
    }

    pub fn child_mean_us(&self) -> f64 {
        0.5 * (self.child_min_us + self.child_max_us) as f64
    }

    /// Nominal cycle length: one root slot plus `n − 1` child slots at their
    /// mean service times.
    pub fn cycle_duration_us(&self, n_sensors: usize) -> u64 {
        if n_sensors == 0 {
            return 0;
        }
        (self.root_mean_us() + (n_sensors - 1) as f64 * self.child_mean_us()).round() as u64
    }

    /// Whole cycles per second at the nominal cycle length.
    pub fn operating_rate_hz(&self, n_sensors: usize) -> u64 {
        match self.cycle_duration_us(n_sensors) {
            0 => 0,
            d => 1_000_000 / d,
        }
    }

    fn sample_service<R: Rng>(&self, rng: &mut R, root: bool) -> u64 {
        let (lo, hi) = if root {
            (self.root_min_us, self.root_max_us)
        } else {
            (self.child_min_us, self.child_max_us)
        };
        if hi <= lo {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    }
}

/// Mean time between a parent's reply and its child's correction, over
/// `cycles` simulated cycles with randomly drawn service times.
///
/// `None` when the chain has no children (nothing is ever corrected).
pub fn staleness_of_parent_accel(
    model: &ScheduleModel,
    chain: &ChainSpec,
    cycles: usize,
    seed: u64,
) -> Option<f64> {
    if chain.len() < 2 || cycles == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reply_at = vec![0u64; chain.len()];
    let (mut sum, mut count) = (0.0, 0usize);
    let mut t = 0u64;
    for _ in 0..cycles {
        for &id in chain.traversal_order() {
            let parent = chain.limbs()[id].parent;
            t += model.sample_service(&mut rng, parent.is_none());
            if let Some(p) = parent {
                sum += (t - reply_at[p]) as f64;
                count += 1;
            }
            reply_at[id] = t;
        }
    }
    Some(sum / count as f64)
}

/// Staleness when every slot takes its mean time.
pub fn nominal_staleness(model: &ScheduleModel, chain: &ChainSpec) -> Option<f64> {
    if chain.len() < 2 {
        return None;
    }
    let mut reply_at = vec![0.0; chain.len()];
    let mut t = 0.0;
    let (mut sum, mut count) = (0.0, 0usize);
    for &id in chain.traversal_order() {
        let parent = chain.limbs()[id].parent;
        t += if parent.is_none() {
            model.root_mean_us()
        } else {
            model.child_mean_us()
        };
        if let Some(p) = parent {
            sum += t - reply_at[p];
            count += 1;
        }
        reply_at[id] = t;
    }
    Some(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub id: usize,
    /// `[w, x, y, z]` as decoded by the hub.
    pub q: [f64; 4],
    pub t_us: u64,
}

/// Latest orientation of every sensor as held by the hub.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseSnapshot {
    pub sensors: Vec<SensorPose>,
}

impl PoseSnapshot {
    pub fn identity(n: usize) -> Self {
        PoseSnapshot {
            sensors: (0..n)
                .map(|id| SensorPose {
                    id,
                    q: [1.0, 0.0, 0.0, 0.0],
                    t_us: 0,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRecord {
    pub sensor: usize,
    /// `None` for the root, which receives dummy data.
    pub correction: Option<CorrectionResult>,
    /// Time since the parent's reply, µs.
    pub staleness_us: Option<u64>,
    pub corrected_at_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub start_us: u64,
    pub end_us: u64,
    pub services: Vec<ServiceRecord>,
}

struct Node {
    estimator: SensorEstimator,
    samples: Vec<ImuSample>,
    cursor: usize,
}

fn to_us(t: f64) -> u64 {
    (t * 1e6).round().max(0.0) as u64
}

impl Node {
    /// Processes every sample taken at or before `t_us`.
    fn advance_to(&mut self, sensor: usize, t_us: u64) -> Result<(), NetError> {
        let last = self.samples.last().map_or(0, |s| to_us(s.t));
        if last < t_us {
            return Err(NetError::StreamUnderrun {
                sensor,
                last_us: last,
                needed_us: t_us,
            });
        }
        while self.cursor < self.samples.len() && to_us(self.samples[self.cursor].t) <= t_us {
            self.estimator.update(&self.samples[self.cursor]);
            self.cursor += 1;
        }
        Ok(())
    }
}

/// Bus behavior switches, mainly for comparing against an ideal bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusOptions {
    pub quantize: bool,
    pub record_trace: bool,
}

impl Default for BusOptions {
    fn default() -> Self {
        BusOptions {
            quantize: true,
            record_trace: false,
        }
    }
}

/// Hub plus sensors, stepped one bus cycle at a time.
pub struct Network {
    chain: ChainSpec,
    nodes: Vec<Node>,
    model: ScheduleModel,
    quant: QuantSpec,
    options: BusOptions,
    rng: ChaCha8Rng,
    clock_us: u64,
    next_start_us: u64,
    /// Latest accel reported to the hub by each sensor, with reply time.
    hub_accel: Vec<Option<(Vec3, u64)>>,
    snapshot: PoseSnapshot,
    trace: Vec<BusMessage>,
}

impl Network {
    pub fn new(
        chain: ChainSpec,
        estimators: Vec<SensorEstimator>,
        streams: Vec<SensorStream>,
        model: ScheduleModel,
        quant: QuantSpec,
        options: BusOptions,
        seed: u64,
    ) -> Result<Self, NetError> {
        let n = chain.len();
        if estimators.len() != n {
            return Err(NetError::SensorCount {
                want: n,
                got: estimators.len(),
            });
        }
        if streams.len() != n {
            return Err(NetError::SensorCount {
                want: n,
                got: streams.len(),
            });
        }
        let mut samples: Vec<Option<Vec<ImuSample>>> = vec![None; n];
        for s in streams {
            if s.sensor_id >= n {
                return Err(NetError::SensorCount { want: n, got: s.sensor_id + 1 });
            }
            samples[s.sensor_id] = Some(s.samples);
        }
        let nodes = estimators
            .into_iter()
            .zip(samples)
            .map(|(estimator, s)| Node {
                estimator,
                samples: s.unwrap_or_default(),
                cursor: 0,
            })
            .collect::<Vec<_>>();
        let start = nodes
            .iter()
            .filter_map(|n| n.samples.first().map(|s| to_us(s.t)))
            .max()
            .unwrap_or(0);
        Ok(Network {
            snapshot: PoseSnapshot::identity(n),
            hub_accel: vec![None; n],
            chain,
            nodes,
            model,
            quant,
            options,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock_us: start,
            next_start_us: start,
            trace: Vec::new(),
        })
    }

    pub fn clock_us(&self) -> u64 {
        self.clock_us
    }

    pub fn snapshot(&self) -> &PoseSnapshot {
        &self.snapshot
    }

    pub fn trace(&self) -> &[BusMessage] {
        &self.trace
    }

    pub fn estimator(&self, sensor: usize) -> &SensorEstimator {
        &self.nodes[sensor].estimator
    }

    /// Index of the last sample the sensor has consumed.
    pub fn sample_index(&self, sensor: usize) -> Option<usize> {
        self.nodes[sensor].cursor.checked_sub(1)
    }

    /// Time of the last sample available to every sensor.
    pub fn end_of_data_us(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| n.samples.last().map_or(0, |s| to_us(s.t)))
            .min()
            .unwrap_or(0)
    }

    /// Whether a cycle with worst-case service times still fits in the data.
    pub fn has_room_for_cycle(&self) -> bool {
        let worst = self.model.root_max_us
            + self.chain.len().saturating_sub(1) as u64 * self.model.child_max_us;
        self.clock_us.max(self.next_start_us) + worst <= self.end_of_data_us()
    }

    fn log(&mut self, m: BusMessage) {
        if self.options.record_trace {
            self.trace.push(m);
        }
    }

    /// Runs one full depth-first pass over the sensors.
    pub fn run_cycle(&mut self) -> Result<CycleReport, NetError> {
        let start = self.clock_us.max(self.next_start_us);
        let mut t = start;
        let order = self.chain.traversal_order().to_vec();
        let mut services = Vec::with_capacity(order.len());
        let zero = Vec3::ZERO;
        for id in order {
            let parent = self.chain.limbs()[id].parent;
            let (parent_accel, parent_reply) = match parent.and_then(|p| self.hub_accel[p]) {
                Some((a, at)) => (a, Some(at)),
                None => (zero, None),
            };
            let sent = BusMessage::parent_accel(id, t, parent_accel, &self.quant);
            let received = if self.options.quantize {
                sent.accel(&self.quant)
            } else {
                parent_accel
            };
            self.log(sent);

            t += self.model.sample_service(&mut self.rng, parent.is_none());
            let node = &mut self.nodes[id];
            node.advance_to(id, t)?;
            let correction = match (parent, parent_reply) {
                (Some(_), Some(_)) => Some(node.estimator.correct(received)),
                _ => None,
            };
            let q = node.estimator.orientation();
            let a_world = node.estimator.tip_accel_world();

            let reply = BusMessage::report(id, t, &q, a_world, &self.quant);
            let stored_accel = if self.options.quantize {
                reply.accel(&self.quant)
            } else {
                a_world
            };
            let stored_q = if self.options.quantize {
                reply.quaternion(&self.quant).expect("report")
            } else {
                q.to_array()
            };
            self.log(reply);
            self.hub_accel[id] = Some((stored_accel, t));
            self.snapshot.sensors[id] = SensorPose {
                id,
                q: stored_q,
                t_us: t,
            };
            services.push(ServiceRecord {
                sensor: id,
                correction,
                staleness_us: parent_reply.filter(|_| parent.is_some()).map(|at| t - at),
                corrected_at_us: t,
            });
        }
        self.clock_us = t;
        if let Some(p) = self.model.cycle_period_us {
            self.next_start_us = start + p;
        }
        Ok(CycleReport {
            start_us: start,
            end_us: t,
            services,
        })
    }

    /// Runs cycles until the data would run out. Returns the completed
    /// cycles; a cycle that would underrun is not started.
    pub fn run_to_end(&mut self) -> Result<Vec<CycleReport>, NetError> {
        let end = self.end_of_data_us();
        let mut out = Vec::new();
        while self.has_room_for_cycle() {
            out.push(self.run_cycle()?);
        }
        for (id, node) in self.nodes.iter_mut().enumerate() {
            node.advance_to(id, end)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::FilterParams;
    use crate::synth::{integrate_truth, synthesize_imu, NoiseSpec, TrajectorySpec};

    #[test]
    fn quantization_examples() {
        assert_eq!(quantize_roundtrip(0.0, 1.0), 0.0);
        assert!((quantize_roundtrip(1.0, 1.0) - 1.0).abs() <= 1.0 / QMAX);
        assert_eq!(encode(1.0, 1.0), 32767);
        assert_eq!(encode(-1.0, 1.0), -32767);
        // saturation, not an error
        assert_eq!(encode(500.0, 156.9), 32767);
        assert_eq!(encode(f64::NAN, 1.0), 0);
    }

    #[test]
    fn message_sizes() {
        let q = QuantSpec::default();
        let m = BusMessage::parent_accel(1, 10, Vec3::new(1.0, -2.0, 9.81), &q);
        assert_eq!(m.payload.bytes().len(), 6);
        let r = BusMessage::report(1, 10, &UnitQuaternion::IDENTITY, Vec3::ZERO, &q);
        assert_eq!(r.payload.bytes().len(), 14);
        assert!(m.accel(&q).max_abs_diff(Vec3::new(1.0, -2.0, 9.81)) <= 156.9 / QMAX);
        assert_eq!(m.quaternion(&q), None);
        assert_eq!(r.quaternion(&q), Some([1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn trace_lines_round_trip() {
        let q = QuantSpec::default();
        let quat = UnitQuaternion::from_axis_angle(0.3, Vec3::new(1.0, 1.0, 0.0)).unwrap();
        let r = BusMessage::report(3, 123_456, &quat, Vec3::new(0.5, -9.0, 2.0), &q);
        let line = r.trace_line();
        assert!(line.starts_with("123456 S>H 3 "));
        assert_eq!(BusMessage::parse_trace_line(&line).unwrap(), r);
        assert!(BusMessage::from_bytes(0, 0, &[0u8; 5]).is_err());
    }

    #[test]
    fn table_cycle_durations() {
        let m = ScheduleModel::default();
        assert_eq!(m.cycle_duration_us(2), 6400);
        assert_eq!(m.operating_rate_hz(2), 156);
        assert_eq!(m.cycle_duration_us(15), 74650);
        assert_eq!(m.operating_rate_hz(15), 13);
    }

    #[test]
    fn single_sensor_has_no_staleness() {
        let m = ScheduleModel::default();
        let c = ChainSpec::serial(&[0.5]).unwrap();
        assert_eq!(staleness_of_parent_accel(&m, &c, 100, 1), None);
        assert_eq!(nominal_staleness(&m, &c), None);
    }

    fn still_network(n: usize, seconds: f64) -> Network {
        let chain = ChainSpec::serial(&vec![0.5; n]).unwrap();
        let traj = TrajectorySpec::still(n, seconds, 200.0);
        let truth = integrate_truth(&chain, &traj).unwrap();
        let streams = synthesize_imu(&truth, &chain, &NoiseSpec::noiseless()).unwrap();
        let est = (0..n)
            .map(|_| SensorEstimator::new(UnitQuaternion::IDENTITY, 0.5, FilterParams::default()).unwrap())
            .collect();
        Network::new(
            chain,
            est,
            streams,
            ScheduleModel::default(),
            QuantSpec::default(),
            BusOptions {
                record_trace: true,
                ..Default::default()
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_static_cycle_changes_nothing() {
        let mut net = still_network(2, 1.0);
        let reports = net.run_to_end().unwrap();
        assert!(reports.len() > 100);
        for r in &reports {
            assert!(r.services[0].correction.is_none());
            let c = r.services[1].correction.unwrap();
            assert_eq!(c.theta_raw, 0.0);
            assert!(!c.applied);
        }
        for s in &net.snapshot().sensors {
            assert_eq!(s.q, [1.0, 0.0, 0.0, 0.0]);
        }
        // 2 messages per sensor per cycle, root gets zeros
        assert_eq!(net.trace().len(), reports.len() * 4);
        assert_eq!(net.trace()[0].payload, Payload::ParentAccel([0; 6]));
    }

    #[test]
    fn underrun_is_reported() {
        let mut net = still_network(2, 0.01);
        let mut last = Ok(());
        for _ in 0..10 {
            if let Err(e) = net.run_cycle() {
                last = Err(e);
                break;
            }
        }
        assert!(matches!(last, Err(NetError::StreamUnderrun { .. })));
    }

    #[test]
    fn paced_cycles_start_on_period() {
        let mut net = still_network(2, 1.0);
        net.model.cycle_period_us = Some(33_333);
        let r = net.run_to_end().unwrap();
        assert_eq!(r[1].start_us - r[0].start_us, 33_333);
        assert!(r.len() >= 28 && r.len() <= 30);
    }
}
