//! Live bus simulation behind a polling HTTP endpoint.
//!
//! The simulation thread swaps in a fresh snapshot after every bus cycle.
//! Readers load whatever snapshot is current, so they never block the
//! simulation and never see a half-written one.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use arc_swap::ArcSwap;
use axum::extract::State;
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use tokio::sync::oneshot;

use kinetrack::estimator::SensorEstimator;
use kinetrack::io::{snapshot_to_json, RunConfig};
use kinetrack::netsim::{BusOptions, Network, PoseSnapshot};
use kinetrack::synth::{integrate_truth, synthesize_imu};

type Shared = Arc<ArcSwap<PoseSnapshot>>;

async fn pose(State(snap): State<Shared>) -> impl IntoResponse {
    let current = snap.load_full();
    ([(header::CONTENT_TYPE, "application/json")], snapshot_to_json(&current))
}

pub fn router(snap: Shared) -> Router {
    Router::new().route("/pose", get(pose)).with_state(snap)
}

fn build_network(cfg: &RunConfig) -> Result<Network> {
    let truth = integrate_truth(&cfg.chain, &cfg.trajectory)?;
    let streams = synthesize_imu(&truth, &cfg.chain, &cfg.noise.clone().with_seed(cfg.seed))?;
    let estimators = cfg
        .chain
        .limbs()
        .iter()
        .map(|l| {
            SensorEstimator::new(cfg.trajectory.limbs[l.id].initial, l.length, cfg.filter)
                .map(|e| e.with_mode(cfg.prediction))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Network::new(
        cfg.chain.clone(),
        estimators,
        streams,
        cfg.schedule,
        cfg.quant,
        BusOptions::default(),
        cfg.seed,
    )?)
}

fn simulate(mut net: Network, snap: Shared, speed: f64) -> Result<usize> {
    let wall = Instant::now();
    let t0 = net.clock_us();
    let mut cycles = 0;
    while net.has_room_for_cycle() {
        let report = net.run_cycle()?;
        snap.store(Arc::new(net.snapshot().clone()));
        cycles += 1;
        if speed > 0.0 {
            let due = Duration::from_secs_f64((report.end_us - t0) as f64 / 1e6 / speed);
            if let Some(wait) = due.checked_sub(wall.elapsed()) {
                std::thread::sleep(wait);
            }
        }
    }
    Ok(cycles)
}

pub fn run(cfg: RunConfig, host: &str, port: u16, speed: f64, linger: Option<f64>) -> Result<()> {
    let net = build_network(&cfg)?;
    let snap: Shared = Arc::new(ArcSwap::from_pointee(net.snapshot().clone()));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        println!("listening on http://{}/pose", listener.local_addr()?);
        std::io::stdout().flush()?;

        let (done_tx, done_rx) = oneshot::channel();
        let sim_snap = snap.clone();
        std::thread::spawn(move || {
            let result = simulate(net, sim_snap, speed);
            match &result {
                Ok(n) => eprintln!("simulation finished after {n} cycles"),
                Err(e) => eprintln!("simulation stopped: {e:#}"),
            }
            let _ = done_tx.send(());
        });

        let shutdown = async move {
            match linger {
                Some(s) => {
                    tokio::select! {
                        _ = async {
                            let _ = done_rx.await;
                            tokio::time::sleep(Duration::from_secs_f64(s.max(0.0))).await;
                        } => {}
                        _ = tokio::signal::ctrl_c() => {}
                    }
                }
                None => {
                    let _ = tokio::signal::ctrl_c().await;
                }
            }
        };
        axum::serve(listener, router(snap))
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    })
}
