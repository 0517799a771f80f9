use kinetrack::estimator::FilterParams;
use kinetrack::eval::{experiment_correction_accuracy, run_ideal, CorrectionAccuracyConfig, PipelineConfig};
use kinetrack::io::{read_imu_binary, read_imu_csv, write_imu_binary, write_imu_csv, RunConfig};
use kinetrack::netsim::{BusOptions, Network, QuantSpec, ScheduleModel};
use kinetrack::synth::{integrate_truth, synthesize_imu, NoiseSpec, SensorStream};
use kinetrack::{ChainSpec, SensorEstimator};

fn boom_config() -> RunConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/boom.toml");
    RunConfig::load(std::path::Path::new(path)).unwrap()
}

fn streams(cfg: &RunConfig, seed: u64) -> Vec<SensorStream> {
    let truth = integrate_truth(&cfg.chain, &cfg.trajectory).unwrap();
    synthesize_imu(&truth, &cfg.chain, &cfg.noise.clone().with_seed(seed)).unwrap()
}

fn csv_bytes(s: &SensorStream) -> Vec<u8> {
    let mut buf = Vec::new();
    write_imu_csv(&mut buf, s).unwrap();
    buf
}

#[test]
fn identical_seeds_give_identical_traces() {
    let cfg = boom_config();
    let a = streams(&cfg, 3);
    let b = streams(&cfg, 3);
    let c = streams(&cfg, 4);
    for i in 0..a.len() {
        assert_eq!(csv_bytes(&a[i]), csv_bytes(&b[i]));
        assert_ne!(csv_bytes(&a[i]), csv_bytes(&c[i]));
    }
}

#[test]
fn identical_seeds_give_identical_reports() {
    let cfg = CorrectionAccuracyConfig {
        duration: 5.0,
        seed: 12,
        ..Default::default()
    };
    let a = experiment_correction_accuracy(&cfg).unwrap();
    let b = experiment_correction_accuracy(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());
    let other = experiment_correction_accuracy(&CorrectionAccuracyConfig { seed: 13, ..cfg }).unwrap();
    assert_ne!(a.to_csv(), other.to_csv());
    assert_ne!(a.config_hash, other.config_hash);
}

#[test]
fn estimates_from_files_match_in_memory() {
    let cfg = boom_config();
    let live = streams(&cfg, cfg.seed);
    let via_csv: Vec<_> = live
        .iter()
        .map(|s| read_imu_csv(&csv_bytes(s)[..]).unwrap())
        .collect();
    let via_bin: Vec<_> = live
        .iter()
        .map(|s| {
            let mut buf = Vec::new();
            write_imu_binary(&mut buf, s).unwrap();
            read_imu_binary(&buf[..]).unwrap()
        })
        .collect();
    let initial: Vec<_> = cfg.trajectory.limbs.iter().map(|l| l.initial).collect();
    let pipe = PipelineConfig::default();
    let a = run_ideal(&cfg.chain, &live, &initial, &pipe).unwrap();
    let b = run_ideal(&cfg.chain, &via_csv, &initial, &pipe).unwrap();
    let c = run_ideal(&cfg.chain, &via_bin, &initial, &pipe).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn bus_runs_are_reproducible() {
    let cfg = boom_config();
    let run = |seed| {
        let est = cfg
            .chain
            .limbs()
            .iter()
            .map(|l| SensorEstimator::new(cfg.trajectory.limbs[l.id].initial, l.length, FilterParams::default()).unwrap())
            .collect();
        let options = BusOptions {
            record_trace: true,
            ..Default::default()
        };
        let mut net = Network::new(
            cfg.chain.clone(),
            est,
            streams(&cfg, 1),
            ScheduleModel::default(),
            QuantSpec::default(),
            options,
            seed,
        )
        .unwrap();
        net.run_to_end().unwrap();
        net.trace().iter().map(|m| m.trace_line()).collect::<Vec<_>>()
    };
    let a = run(5);
    assert!(a.len() > 1000);
    assert_eq!(a, run(5));
    assert_ne!(a, run(6));
}

#[test]
fn noiseless_config_round_trips_through_toml() {
    let cfg = RunConfig::still(&[0.5, 0.4], 1.0, 50.0).unwrap();
    let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.noise, NoiseSpec::noiseless());
    assert_eq!(back.chain, ChainSpec::serial(&[0.5, 0.4]).unwrap());
}
