//! `run` and `batch`: simulate a scenario and write its artifacts.
//!
//! A run directory holds `trace.csv`, `metrics.json`, `run_manifest.json` and,
//! on request, `trace.jsonl`. The manifest carries the resolved config, so
//! passing it back as `--config` reproduces the run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;
use log::info;
use odor_consensus::config::SimConfig;
use odor_consensus::metrics::{attractivity, consensus_metrics, AttractivityReport, ConsensusMetrics};
use odor_consensus::sim::{realized_mu_bound, run_world, World};
use odor_consensus::smc::{gain_check, GainReport};
use odor_consensus::trace::Trace;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::scenario::SCHEMA_VERSION;
use crate::CliError;

pub const TRACE_FILE: &str = "trace.csv";
pub const TRACE_JSONL_FILE: &str = "trace.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: i64,
    pub seed: u64,
    /// SHA-256 of the compact JSON form of `config`.
    pub config_hash: String,
    pub config: &'a SimConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub steps: usize,
    pub metrics: ConsensusMetrics,
    pub gain: GainReport,
    /// Finite-difference sign check outside one step of the reaching law.
    pub attractivity: AttractivityReport,
}

pub fn config_hash(cfg: &SimConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Band below which finite differences of `s` are dominated by the
/// discretization: one step of the reaching law at the disturbance bound.
pub fn numerical_band(cfg: &SimConfig, empirical_bound: f64) -> f64 {
    cfg.time.dt * (cfg.smc.mu * cfg.smc.m_offset.asinh() + empirical_bound)
}

/// Simulates `cfg` and summarizes the trace.
pub fn simulate(cfg: &SimConfig) -> Result<(Trace, RunReport), CliError> {
    let world = World::new(cfg.clone())?;
    let coupling = world.coupling().clone();
    let started = Instant::now();
    let trace = run_world(world)?;
    info!(
        "{}: {} steps in {:.3?}",
        cfg.name,
        trace.records.len(),
        started.elapsed()
    );

    let empirical = realized_mu_bound(cfg, &coupling);
    let gain =
        gain_check(&cfg.smc, &coupling, cfg.dynamics.disturbance.bound(), 0.0).with_empirical(empirical, &cfg.smc);
    let report = RunReport {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        steps: trace.records.len(),
        metrics: consensus_metrics(&trace, cfg.time.consensus_tolerance, cfg.time.theta),
        gain,
        attractivity: attractivity(&trace, numerical_band(cfg, empirical)),
    };
    Ok((trace, report))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_jsonl(trace: &Trace, path: &Path) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in &trace.records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `cfg` and writes the run directory `out`.
pub fn run_to_dir(cfg: &SimConfig, out: &Path, jsonl: bool) -> Result<RunReport, CliError> {
    let (trace, report) = simulate(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let trace_path = out.join(TRACE_FILE);
    let file = File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    let mut w = BufWriter::new(file);
    trace.write_csv(&mut w).map_err(anyhow::Error::from)?;
    w.flush().map_err(anyhow::Error::from)?;
    if jsonl {
        write_jsonl(&trace, &out.join(TRACE_JSONL_FILE))?;
    }
    write_json(&out.join(METRICS_FILE), &report)?;
    let manifest = Manifest {
        tool: "odorsim",
        version: env!("CARGO_PKG_VERSION"),
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        config_hash: config_hash(cfg),
        config: cfg,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(report)
}

/// Output directory of one batch entry and its outcome.
pub type BatchResult = (PathBuf, Result<RunReport, CliError>);

/// Runs every config on up to `jobs` threads, each into
/// `out/<name>_seed<seed>`. Results keep the input order.
pub fn run_batch(configs: &[SimConfig], out: &Path, jobs: usize) -> Vec<BatchResult> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<BatchResult>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, configs.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(k) else { break };
                let dir = out.join(format!("{}_seed{}", cfg.name, cfg.seed));
                let res = run_to_dir(cfg, &dir, false);
                results.lock().expect("no panics while holding the lock")[k] = Some((dir, res));
            });
        }
    });
    results
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every index claimed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load;

    fn short(name: &str) -> SimConfig {
        load(name, &["time.t_end=0.5".into()]).unwrap()
    }

    #[test]
    fn writes_artifacts_and_manifest_reproduces_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = short("paper_consensus");
        run_to_dir(&cfg, dir.path(), true).unwrap();
        for f in [TRACE_FILE, TRACE_JSONL_FILE, METRICS_FILE, MANIFEST_FILE] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let manifest_path = dir.path().join(MANIFEST_FILE);
        let again = load(manifest_path.to_str().unwrap(), &[]).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(config_hash(&again), config_hash(&cfg));

        let second = tempfile::tempdir().unwrap();
        run_to_dir(&again, second.path(), false).unwrap();
        assert_eq!(
            fs::read(dir.path().join(TRACE_FILE)).unwrap(),
            fs::read(second.path().join(TRACE_FILE)).unwrap()
        );
    }

    #[test]
    fn csv_round_trips() {
        let (trace, _) = simulate(&short("paper_formation")).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let back = Trace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn jsonl_has_one_line_per_record() {
        let dir = tempfile::tempdir().unwrap();
        let (trace, _) = simulate(&short("no_disturbance")).unwrap();
        let path = dir.path().join("t.jsonl");
        write_jsonl(&trace, &path).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), trace.records.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["t"], 0.0);
    }

    #[test]
    fn batch_keeps_order_and_isolates_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfgs: Vec<SimConfig> = [1, 2, 3]
            .iter()
            .map(|&s| {
                let mut c = short("paper_consensus");
                c.seed = s;
                c
            })
            .collect();
        let res = run_batch(&cfgs, dir.path(), 2);
        assert_eq!(res.len(), 3);
        for ((path, r), cfg) in res.iter().zip(&cfgs) {
            assert!(path.ends_with(format!("paper_consensus_seed{}", cfg.seed)));
            assert_eq!(r.as_ref().unwrap().seed, cfg.seed);
        }
        let solo = tempfile::tempdir().unwrap();
        run_to_dir(&cfgs[1], solo.path(), false).unwrap();
        assert_eq!(
            fs::read(res[1].0.join(TRACE_FILE)).unwrap(),
            fs::read(solo.path().join(TRACE_FILE)).unwrap()
        );
    }
}
