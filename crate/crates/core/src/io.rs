//! Run configuration files and trace formats.
//!
//! IMU traces come in two encodings carrying the same data: a CSV with a
//! versioned comment line followed by the header `t,gx,gy,gz,ax,ay,az`, and
//! a little-endian binary form (`IMUT` magic). Both preserve every `f64`
//! exactly.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainSpec;
use crate::estimator::{FilterParams, PredictionMode};
use crate::eval::{Overrides, PipelineTrace};
use crate::netsim::{BusMessage, PoseSnapshot, QuantSpec, ScheduleModel};
use crate::rotmath::Vec3;
use crate::synth::{GroundTruth, ImuSample, NoiseSpec, SensorStream, TrajectorySpec};

pub const IMU_CSV_VERSION: u32 = 1;
pub const IMU_CSV_HEADER: [&str; 7] = ["t", "gx", "gy", "gz", "ax", "ay", "az"];
pub const IMU_BIN_MAGIC: &[u8; 4] = b"IMUT";
pub const IMU_BIN_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("bad trace: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn field(field: &str, message: impl ToString) -> IoError {
    IoError::Field {
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<fs::File, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::File::create(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn open(path: &Path) -> Result<fs::File, IoError> {
    fs::File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Run configuration

/// Where a run writes its files. Relative names are resolved against `dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub truth: String,
    /// IMU traces are named `{imu_prefix}{id}.csv`.
    pub imu_prefix: String,
    pub pose_log: String,
    pub report: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            dir: PathBuf::from("out"),
            truth: "truth.csv".into(),
            imu_prefix: "imu_".into(),
            pose_log: "poses.csv".into(),
            report: "report".into(),
        }
    }
}

impl OutputPaths {
    pub fn truth_path(&self) -> PathBuf {
        self.dir.join(&self.truth)
    }

    pub fn imu_path(&self, sensor: usize) -> PathBuf {
        self.dir.join(format!("{}{sensor}.csv", self.imu_prefix))
    }

    pub fn pose_log_path(&self) -> PathBuf {
        self.dir.join(&self.pose_log)
    }

    /// Report path without extension; `.csv` and `.json` are appended.
    pub fn report_stem(&self) -> PathBuf {
        self.dir.join(&self.report)
    }
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::noiseless()
}

fn default_correction_hz() -> f64 {
    30.0
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Correction rounds per second for the ideal pipeline; 0 disables.
    #[serde(default = "default_correction_hz")]
    pub correction_hz: f64,
    #[serde(default)]
    pub prediction: PredictionMode,
    pub chain: ChainSpec,
    pub trajectory: TrajectorySpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub filter: FilterParams,
    #[serde(default)]
    pub schedule: ScheduleModel,
    #[serde(default)]
    pub quant: QuantSpec,
    #[serde(default)]
    pub output: OutputPaths,
}

impl RunConfig {
    /// Still chain of `lengths`, noiseless.
    pub fn still(lengths: &[f64], duration: f64, sample_rate: f64) -> Result<Self, IoError> {
        let chain = ChainSpec::serial(lengths).map_err(|e| field("chain", e))?;
        Ok(RunConfig {
            seed: 0,
            correction_hz: default_correction_hz(),
            prediction: PredictionMode::default(),
            trajectory: TrajectorySpec::still(chain.len(), duration, sample_rate),
            chain,
            noise: NoiseSpec::noiseless(),
            filter: FilterParams::default(),
            schedule: ScheduleModel::default(),
            quant: QuantSpec::default(),
            output: OutputPaths::default(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| IoError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_toml(&read_file(path)?).map_err(|e| match e {
            IoError::Parse { message, .. } => IoError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        create(path)?.write_all(self.to_toml().as_bytes())?;
        Ok(())
    }

    /// Semantic checks that the file syntax cannot express.
    pub fn validate(&self) -> Result<(), IoError> {
        if !(self.correction_hz >= 0.0 && self.correction_hz.is_finite()) {
            return Err(field("correction_hz", "must be finite and non-negative"));
        }
        self.trajectory
            .validate(&self.chain)
            .map_err(|e| field("trajectory", e))?;
        self.filter.validate().map_err(|e| field("filter", e))?;
        for (name, v) in [
            ("noise.accel_sigma", self.noise.accel_sigma),
            ("noise.gyro_sigma", self.noise.gyro_sigma),
            ("noise.gyro_bias_sigma", self.noise.gyro_bias_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(field(name, "must be finite and non-negative"));
            }
        }
        let s = &self.schedule;
        if s.root_min_us > s.root_max_us {
            return Err(field("schedule.root_min_us", "exceeds root_max_us"));
        }
        if s.child_min_us > s.child_max_us {
            return Err(field("schedule.child_min_us", "exceeds child_max_us"));
        }
        for (name, v) in [
            ("quant.quat_scale", self.quant.quat_scale),
            ("quant.accel_scale", self.quant.accel_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, "must be positive"));
            }
        }
        Ok(())
    }

    /// Settings an experiment should take from this file.
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: Some(self.seed),
            noise: Some(self.noise.clone()),
            filter: Some(self.filter),
            sample_rate: Some(self.trajectory.sample_rate),
            correction_hz: Some(self.correction_hz),
            limb_lengths: Some(self.chain.limbs().iter().map(|l| l.length).collect()),
        }
    }
}

// ---------------------------------------------------------------------------
// IMU traces

fn csv_version_line(sensor: usize) -> String {
    format!("# kinetrack imu v{IMU_CSV_VERSION} sensor={sensor}\n")
}

pub fn write_imu_csv<W: Write>(mut w: W, stream: &SensorStream) -> Result<(), IoError> {
    w.write_all(csv_version_line(stream.sensor_id).as_bytes())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(IMU_CSV_HEADER)?;
    for s in &stream.samples {
        // `{}` on f64 prints the shortest representation that parses back
        // to the same value.
        out.write_record(
            [s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z]
                .map(|v| v.to_string()),
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_imu_csv<R: Read>(r: R) -> Result<SensorStream, IoError> {
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let sensor_id = parse_version_line(first.trim())?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(IMU_CSV_HEADER) {
        return Err(IoError::Format(format!(
            "expected header {}, got {}",
            IMU_CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut v = [0.0; 7];
        for (j, cell) in rec.iter().enumerate().take(7) {
            v[j] = cell.trim().parse().map_err(|_| {
                IoError::Format(format!("row {}: `{cell}` is not a number", i + 1))
            })?;
        }
        if rec.len() != 7 {
            return Err(IoError::Format(format!("row {}: expected 7 columns", i + 1)));
        }
        samples.push(ImuSample {
            t: v[0],
            gyro: Vec3::new(v[1], v[2], v[3]),
            accel: Vec3::new(v[4], v[5], v[6]),
        });
    }
    Ok(SensorStream {
        sensor_id,
        samples,
        gyro_bias: Vec3::ZERO,
    })
}

fn parse_version_line(line: &str) -> Result<usize, IoError> {
    let bad = || IoError::Format(format!("bad version line `{line}`"));
    let rest = line.strip_prefix("# kinetrack imu v").ok_or_else(bad)?;
    let (ver, sensor) = rest.split_once(" sensor=").ok_or_else(bad)?;
    let ver: u32 = ver.parse().map_err(|_| bad())?;
    if ver != IMU_CSV_VERSION {
        return Err(IoError::Format(format!("unsupported trace version {ver}")));
    }
    sensor.parse().map_err(|_| bad())
}

pub fn save_imu_csv(path: &Path, stream: &SensorStream) -> Result<(), IoError> {
    write_imu_csv(std::io::BufWriter::new(create(path)?), stream)
}

pub fn load_imu_csv(path: &Path) -> Result<SensorStream, IoError> {
    read_imu_csv(open(path)?)
}

/// `IMUT`, version u32, sensor id u32, sample count u64, then seven f64 per
/// sample; all little-endian.
pub fn write_imu_binary<W: Write>(mut w: W, stream: &SensorStream) -> Result<(), IoError> {
    w.write_all(IMU_BIN_MAGIC)?;
    w.write_all(&IMU_BIN_VERSION.to_le_bytes())?;
    w.write_all(&(stream.sensor_id as u32).to_le_bytes())?;
    w.write_all(&(stream.samples.len() as u64).to_le_bytes())?;
    for s in &stream.samples {
        for v in [s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_imu_binary<R: Read>(mut r: R) -> Result<SensorStream, IoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != IMU_BIN_MAGIC {
        return Err(IoError::Format("missing IMUT magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let ver = u32::from_le_bytes(b4);
    if ver != IMU_BIN_VERSION {
        return Err(IoError::Format(format!("unsupported trace version {ver}")));
    }
    r.read_exact(&mut b4)?;
    let sensor_id = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut samples = Vec::with_capacity(n.min(1 << 24));
    let mut row = [0u8; 56];
    for _ in 0..n {
        r.read_exact(&mut row)?;
        let f = |i: usize| f64::from_le_bytes(row[i * 8..i * 8 + 8].try_into().unwrap());
        samples.push(ImuSample {
            t: f(0),
            gyro: Vec3::new(f(1), f(2), f(3)),
            accel: Vec3::new(f(4), f(5), f(6)),
        });
    }
    Ok(SensorStream {
        sensor_id,
        samples,
        gyro_bias: Vec3::ZERO,
    })
}

pub fn save_imu_binary(path: &Path, stream: &SensorStream) -> Result<(), IoError> {
    write_imu_binary(std::io::BufWriter::new(create(path)?), stream)
}

pub fn load_imu_binary(path: &Path) -> Result<SensorStream, IoError> {
    read_imu_binary(BufReader::new(open(path)?))
}

/// Loads either encoding, by content.
pub fn load_imu(path: &Path) -> Result<SensorStream, IoError> {
    let mut head = [0u8; 4];
    let n = open(path)?.read(&mut head)?;
    if n == 4 && &head == IMU_BIN_MAGIC {
        load_imu_binary(path)
    } else {
        load_imu_csv(path)
    }
}

// ---------------------------------------------------------------------------
// Truth, pose logs, bus traces

/// One row per sample per limb:
/// `t,limb,qw,qx,qy,qz,wx,wy,wz,px,py,pz,abx,aby,abz,atx,aty,atz`.
pub fn write_truth_csv<W: Write>(w: W, truth: &GroundTruth) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "t", "limb", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "px", "py", "pz", "abx", "aby",
        "abz", "atx", "aty", "atz",
    ])?;
    for (k, t) in truth.times.iter().enumerate() {
        for (id, l) in truth.limbs.iter().enumerate() {
            let mut row = vec![t.to_string(), id.to_string()];
            row.extend(l.q[k].to_array().map(|v| v.to_string()));
            for v in [l.omega_body[k], l.p_tip[k], l.a_base[k], l.a_tip[k]] {
                row.extend(v.to_array().map(|c| c.to_string()));
            }
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_truth_csv(path: &Path, truth: &GroundTruth) -> Result<(), IoError> {
    write_truth_csv(std::io::BufWriter::new(create(path)?), truth)
}

/// `t,sensor,qw,qx,qy,qz` for every sample of every sensor.
pub fn write_pose_log<W: Write>(w: W, times: &[f64], trace: &PipelineTrace) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "sensor", "qw", "qx", "qy", "qz"])?;
    for (k, t) in times.iter().enumerate() {
        for (id, qs) in trace.q.iter().enumerate() {
            let Some(q) = qs.get(k) else { continue };
            let mut row = vec![t.to_string(), id.to_string()];
            row.extend(q.to_array().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_pose_log(path: &Path, times: &[f64], trace: &PipelineTrace) -> Result<(), IoError> {
    write_pose_log(std::io::BufWriter::new(create(path)?), times, trace)
}

pub fn write_bus_trace<W: Write>(mut w: W, messages: &[BusMessage]) -> Result<(), IoError> {
    for m in messages {
        writeln!(w, "{}", m.trace_line())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bus_trace<R: Read>(r: R) -> Result<Vec<BusMessage>, IoError> {
    BufReader::new(r)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l?;
            BusMessage::parse_trace_line(&l).map_err(|e| IoError::Format(e.to_string()))
        })
        .collect()
}

pub fn snapshot_to_json(s: &PoseSnapshot) -> String {
    serde_json::to_string(s).expect("snapshot serializes")
}

pub fn snapshot_from_json(text: &str) -> Result<PoseSnapshot, IoError> {
    Ok(serde_json::from_str(text)?)
}
