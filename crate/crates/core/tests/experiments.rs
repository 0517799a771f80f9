use kinetrack::eval::*;
use kinetrack::synth::CALIBRATED_GYRO_BIAS;

#[test]
fn bus_costs_less_than_half_a_degree() {
    let r = experiment_bus_comparison(&BusComparisonConfig::default()).unwrap();
    let ideal = r.scenario("moving/ideal").unwrap().rmse;
    let bus = r.scenario("moving/bus").unwrap().rmse;
    assert!(bus - ideal < 0.5, "ideal {ideal}, bus {bus}");
    let stale = r.get("moving", "mean_staleness_us").unwrap();
    assert!((stale - 5250.0).abs() < 500.0, "{stale}");
}

#[test]
fn without_corrections_the_yaw_error_stays() {
    let cfg = YawRecoveryConfig {
        correction_hz: 0.0,
        repetitions: 3,
        ..Default::default()
    };
    let out = experiment_yaw_recovery(&cfg).unwrap();
    for y in &out.final_yaw_deg {
        assert!(y.abs() > 60.0, "{y}");
    }
    assert!(out.time_to_5deg.iter().all(Option::is_none));
}

#[test]
fn without_lateral_push_the_yaw_error_stays() {
    let cfg = YawRecoveryConfig {
        lateral_accel: 0.0,
        repetitions: 2,
        ..Default::default()
    };
    let out = experiment_yaw_recovery(&cfg).unwrap();
    for y in &out.final_yaw_deg {
        assert!(y.abs() > 60.0, "{y}");
    }
}

#[test]
fn limb_swing_alone_also_corrects_yaw() {
    let cfg = YawRecoveryConfig {
        lateral_accel: 0.0,
        limb_rate: 0.5,
        repetitions: 2,
        ..Default::default()
    };
    let out = experiment_yaw_recovery(&cfg).unwrap();
    for y in &out.final_yaw_deg {
        assert!(y.abs() < 45.0, "{y}");
    }
}

#[test]
fn yaw_trace_reaches_zero() {
    let out = experiment_yaw_recovery(&YawRecoveryConfig {
        repetitions: 1,
        ..Default::default()
    })
    .unwrap();
    let first = out.yaw_trace.values[0];
    let last = *out.yaw_trace.values.last().unwrap();
    assert!((first - 90.0).abs() < 1.0, "{first}");
    assert!(last.abs() < 5.0, "{last}");
    assert_eq!(out.yaw_trace.values.len(), out.lateral_trace.len());
    assert!(out.plot_data().lines().count() == out.lateral_trace.len() + 1);
}

#[test]
fn bias_calibration_reproduces_the_frozen_value() {
    let b = calibrate_bias_magnitude(29.7, 56, 100.0, 0).unwrap();
    assert!((b / CALIBRATED_GYRO_BIAS - 1.0).abs() < 0.05, "{b}");
}

#[test]
fn drift_grows_with_time() {
    let out = experiment_drift_characterization(&DriftConfig {
        runs: 8,
        ..Default::default()
    })
    .unwrap();
    let m = |i: usize| out.angles[i].iter().sum::<f64>() / 8.0;
    assert!(m(0) < m(1) && m(1) < m(2));
    let t = |i| out.mean_time(i).unwrap();
    assert!(t(0) < t(1) && t(1) < t(2));
}

#[test]
fn slow_motion_still_benefits_from_prediction() {
    let r = experiment_accel_prediction(&AccelPredictionConfig::default()).unwrap();
    let ratio = r.get("slow", "none_over_full_rmse").unwrap();
    assert!(ratio > 1.5, "{ratio}");
    // stationary prediction noise is concentrated off the limb axis
    let y = r.scenario("stationary/local_y").unwrap().rmse;
    let x = r.scenario("stationary/local_x").unwrap().rmse;
    assert!(y < 1e-3 * x, "x {x}, y {y}");
}

#[test]
fn dispatch_by_name() {
    for name in EXPERIMENTS {
        if name == "drift" {
            continue;
        }
        let o = Overrides {
            seed: Some(3),
            ..Default::default()
        };
        let out = run_named(name, &o).unwrap();
        assert_eq!(out.report.seed, 3);
        assert!(!out.report.to_csv().is_empty());
    }
    assert!(matches!(
        run_named("nope", &Overrides::default()),
        Err(EvalError::Config(_))
    ));
}
