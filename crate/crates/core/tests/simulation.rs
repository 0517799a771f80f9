use std::f64::consts::PI;

use kinetrack::chain::{validate, LimbNode};
use kinetrack::estimator::{FilterParams, PredictionMode, SensorEstimator};
use kinetrack::eval::{mae, rmse};
use kinetrack::netsim::{
    decode, encode, nominal_staleness, quantize_roundtrip, staleness_of_parent_accel, BusMessage,
    QuantSpec, ScheduleModel,
};
use kinetrack::rotmath::{rotation_angle_between, UnitQuaternion, Vec3};
use kinetrack::synth::{
    integrate_truth, synthesize_imu, AccelTerm, LimbMotion, NoiseSpec, RateProgram, RateTerm,
    RootMotion, TrajectorySpec,
};
use kinetrack::ChainSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn swinging(duration: f64, sample_rate: f64, root: RootMotion) -> TrajectorySpec {
    TrajectorySpec {
        duration,
        sample_rate,
        ambient_field: Vec3::ZERO,
        root,
        limbs: vec![
            LimbMotion {
                initial: UnitQuaternion::IDENTITY,
                rate: RateProgram::new(vec![
                    RateTerm::sine(Vec3::new(1.2, 0.0, 0.4), 0.5, 0.3),
                    RateTerm::sine(Vec3::new(0.0, 0.3, 0.9), 0.8, 1.0),
                ]),
            },
            LimbMotion {
                initial: UnitQuaternion::from_axis_angle(0.7, Vec3::new(1.0, 0.0, 1.0)).unwrap(),
                rate: RateProgram::new(vec![
                    RateTerm::constant(Vec3::new(0.0, 0.2, 0.0)),
                    RateTerm::sine(Vec3::new(-0.8, 0.0, 1.1), 0.6, 2.0),
                ]),
            },
        ],
        oversample: 10,
    }
}

#[test]
fn tip_acceleration_matches_finite_differences() {
    let chain = ChainSpec::serial(&[0.5, 0.5]).unwrap();
    let root = RootMotion {
        terms: vec![AccelTerm {
            amplitude: Vec3::new(2.0, -1.0, 0.5),
            freq_hz: 1.0,
            phase: 0.2,
        }],
        window: None,
    };
    let fs = 10_000.0;
    let truth = integrate_truth(&chain, &swinging(0.5, fs, root)).unwrap();
    let h = 1.0 / fs;
    let mut worst = 0.0f64;
    for limb in &truth.limbs {
        for k in 1..truth.len() - 1 {
            let fd = (limb.p_tip[k + 1] - limb.p_tip[k] * 2.0 + limb.p_tip[k - 1]) / (h * h);
            worst = worst.max(fd.max_abs_diff(limb.a_tip[k]));
        }
    }
    assert!(worst <= 1e-6, "max deviation {worst}");
}

/// Hand-built upper body: torso, head, and two two-segment arms.
fn upper_body() -> ChainSpec {
    validate(vec![
        LimbNode::root(0, 0.5),
        LimbNode::child(1, 0, 0.25),
        LimbNode::child(2, 0, 0.3),
        LimbNode::child(3, 2, 0.28),
        LimbNode::child(4, 0, 0.3),
        LimbNode::child(5, 4, 0.28),
        LimbNode::child(6, 5, 0.1),
    ])
    .unwrap()
}

#[test]
fn upper_body_adjacency() {
    let c = upper_body();
    let want: [&[usize]; 7] = [&[1, 2, 4], &[], &[3], &[], &[5], &[6], &[]];
    for (id, w) in want.iter().enumerate() {
        assert_eq!(c.children_of(id).unwrap(), *w, "children of {id}");
    }
    assert_eq!(c.traversal_order(), &[0, 1, 2, 3, 4, 5, 6]);
    for &id in c.traversal_order() {
        if let Some(p) = c.parent_of(id).unwrap() {
            let pos = |x| c.traversal_order().iter().position(|&y| y == x).unwrap();
            assert!(pos(p) < pos(id));
        }
    }
}

#[test]
fn joints_agree_across_a_moving_tree() {
    let chain = upper_body();
    let mut traj = TrajectorySpec::still(7, 2.0, 200.0);
    for (i, l) in traj.limbs.iter_mut().enumerate() {
        let f = 0.3 + 0.1 * i as f64;
        l.rate = RateProgram::new(vec![RateTerm::sine(Vec3::new(1.0, 0.5, -0.7), f, i as f64)]);
        l.initial = UnitQuaternion::from_axis_angle(0.2 * i as f64, Vec3::Z).unwrap();
    }
    traj.root = RootMotion {
        terms: vec![AccelTerm {
            amplitude: Vec3::new(0.0, 3.0, 1.0),
            freq_hz: 0.7,
            phase: 0.0,
        }],
        window: None,
    };
    let truth = integrate_truth(&chain, &traj).unwrap();
    let streams = synthesize_imu(&truth, &chain, &NoiseSpec::noiseless()).unwrap();
    for l in chain.limbs() {
        let Some(p) = l.parent else { continue };
        for k in 0..truth.len() {
            let parent_tip = truth.limbs[p].a_tip[k];
            assert!(truth.limbs[l.id].a_base[k].max_abs_diff(parent_tip) <= 1e-9);
            assert!(truth.limbs[l.id].p_base[k].max_abs_diff(truth.limbs[p].p_tip[k]) <= 1e-12);
            // the parent's sensor reading, taken to the world frame
            let measured = truth.limbs[p].q[k].rotate_vector(streams[p].samples[k].accel);
            assert!(measured.max_abs_diff(parent_tip) <= 1e-9);
        }
    }
}

/// Coaxial spin at constant rates: the velocity-differencing prediction is
/// exact up to the chord error `r ω² (ω dt)² / 24`.
#[test]
fn noiseless_closure_under_coaxial_spin() {
    let chain = ChainSpec::serial(&[0.5, 0.5]).unwrap();
    let mut traj = TrajectorySpec::still(2, 2.0, 1000.0);
    traj.limbs[0].rate = RateProgram::new(vec![RateTerm::constant(Vec3::new(0.0, 0.0, 1.0))]);
    traj.limbs[1].rate = RateProgram::new(vec![RateTerm::constant(Vec3::new(0.0, 0.0, 2.0))]);
    let truth = integrate_truth(&chain, &traj).unwrap();
    let streams = synthesize_imu(&truth, &chain, &NoiseSpec::noiseless()).unwrap();
    let params = FilterParams::default();
    let mut parent = SensorEstimator::new(truth.limbs[0].q[0], 0.5, params).unwrap();
    let mut child = SensorEstimator::new(truth.limbs[1].q[0], 0.5, params)
        .unwrap()
        .with_mode(PredictionMode::Weighted);
    let mut worst = 0.0f64;
    for k in 0..truth.len() {
        parent.update(&streams[0].samples[k]);
        child.update(&streams[1].samples[k]);
        if k > 0 {
            worst = worst.max(child.base_accel_world().max_abs_diff(parent.tip_accel_world()));
        }
    }
    assert!(worst <= 1e-6, "closure error {worst}");
}

fn closure_error(sample_rate: f64) -> f64 {
    let chain = ChainSpec::serial(&[0.5, 0.5]).unwrap();
    let truth = integrate_truth(&chain, &swinging(3.0, sample_rate, RootMotion::fixed())).unwrap();
    let streams = synthesize_imu(&truth, &chain, &NoiseSpec::noiseless()).unwrap();
    let mut child = SensorEstimator::new(truth.limbs[1].q[0], 0.5, FilterParams::default())
        .unwrap()
        .with_mode(PredictionMode::Full);
    let mut worst = 0.0f64;
    for (k, s) in streams[1].samples.iter().enumerate() {
        child.update(s);
        if k > 0 {
            let world = truth.limbs[1].q[k].rotate_vector(child.base_accel());
            worst = worst.max(world.max_abs_diff(truth.limbs[1].a_base[k]));
        }
    }
    worst
}

#[test]
fn closure_error_shrinks_with_sample_period() {
    let errs: Vec<f64> = [250.0, 500.0, 1000.0, 2000.0].map(closure_error).to_vec();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.7 && ratio < 2.5, "errors {errs:?}");
    }
    assert!(errs[3] < 0.01, "errors {errs:?}");
}

#[test]
fn reference_noise_matches_sensor_table() {
    // magnitude RMSE / MAE of still readings: 0.043 / 0.035 m/s² and
    // 0.0027 / 0.0025 rad/s
    let chain = ChainSpec::serial(&[0.5]).unwrap();
    let truth = integrate_truth(&chain, &TrajectorySpec::still(1, 300.0, 200.0)).unwrap();
    let mut acc = Vec::new();
    let mut gyr = Vec::new();
    for seed in 0..4 {
        let s = synthesize_imu(&truth, &chain, &NoiseSpec::reference(seed)).unwrap();
        acc.extend(s[0].samples.iter().map(|x| x.accel.norm()));
        gyr.extend(s[0].samples.iter().map(|x| x.gyro.norm()));
    }
    let within = |got: f64, want: f64| (got / want - 1.0).abs() <= 0.15;
    let (ar, am, gr, gm) = (rmse(&acc).unwrap(), mae(&acc).unwrap(), rmse(&gyr).unwrap(), mae(&gyr).unwrap());
    assert!(within(ar, 0.043), "accel rmse {ar}");
    assert!(within(am, 0.035), "accel mae {am}");
    assert!(within(gr, 0.0027), "gyro rmse {gr}");
    assert!(within(gm, 0.0025), "gyro mae {gm}");
}

#[test]
fn gaussian_error_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sigma = 0.7;
    let d = Normal::new(0.0, sigma).unwrap();
    let v: Vec<f64> = (0..200_000).map(|_| d.sample(&mut rng)).collect();
    assert!((rmse(&v).unwrap() / sigma - 1.0).abs() < 0.02);
    assert!((mae(&v).unwrap() / (sigma * (2.0 / PI).sqrt()) - 1.0).abs() < 0.02);
}

#[test]
fn quantization_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for fs in [1.0, 156.9] {
        let mut worst = 0.0f64;
        for _ in 0..100_000 {
            let v = rng.random_range(-fs..=fs);
            worst = worst.max((quantize_roundtrip(v, fs) - v).abs());
        }
        assert!(worst <= fs / 32767.0, "fs {fs}: {worst}");
    }
    assert_eq!(encode(1e9, 1.0), 32767);
    assert_eq!(decode(encode(-1e9, 1.0), 1.0), -1.0);
}

#[test]
fn quantized_quaternions_barely_rotate() {
    let bound = (1.0 - 8.0 / (32767.0f64 * 32767.0)).acos();
    let spec = QuantSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let Ok(q) = UnitQuaternion::from_axis_angle(rng.random_range(-PI..PI), axis) else {
            continue;
        };
        let m = BusMessage::report(1, 0, &q, Vec3::ZERO, &spec);
        let [w, x, y, z] = m.quaternion(&spec).unwrap();
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        assert!((norm - 1.0).abs() <= 2e-4);
        let back = UnitQuaternion::from_components(w, x, y, z).unwrap();
        worst = worst.max(rotation_angle_between(&q, &back));
    }
    assert!(worst <= bound, "{worst} > {bound}");
}

#[test]
fn staleness_of_serial_and_branching_chains() {
    let m = ScheduleModel::default();
    let two = ChainSpec::serial(&[0.5, 0.5]).unwrap();
    let s2 = staleness_of_parent_accel(&m, &two, 20_000, 1).unwrap();
    assert!((s2 - 5250.0).abs() < 500.0, "{s2}");
    assert_eq!(nominal_staleness(&m, &two), Some(5250.0));

    let serial7 = ChainSpec::serial(&[0.3; 7]).unwrap();
    assert_eq!(nominal_staleness(&m, &serial7), Some(5250.0));

    // upper body, slot ends at 1150 + k·5250: children of the torso wait for
    // one, two and four slots, the others for one
    let tree = upper_body();
    let want = (4.0 * 5250.0 + 10500.0 + 21000.0) / 6.0;
    assert_eq!(nominal_staleness(&m, &tree), Some(want));
    let sim = staleness_of_parent_accel(&m, &tree, 20_000, 2).unwrap();
    assert!((sim - want).abs() < 50.0, "{sim} vs {want}");

    let one = ChainSpec::serial(&[0.5]).unwrap();
    assert_eq!(staleness_of_parent_accel(&m, &one, 10, 0), None);
}

#[test]
fn long_rest_in_zero_g_reads_nothing() {
    let chain = upper_body();
    let truth = integrate_truth(&chain, &TrajectorySpec::still(7, 5.0, 100.0)).unwrap();
    let streams = synthesize_imu(&truth, &chain, &NoiseSpec::noiseless()).unwrap();
    for s in &streams {
        for x in &s.samples {
            assert_eq!(x.accel, Vec3::ZERO);
            assert_eq!(x.gyro, Vec3::ZERO);
        }
    }
}
