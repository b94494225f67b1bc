//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use odor_consensus::config::{ScenarioKind, SimConfig};
use odor_consensus::decision::{oscillation_center, pso_control, PsoParams};
use odor_consensus::graph::{build_matrices, determinant, h_is_nonsingular, Digraph};
use odor_consensus::metrics::attractivity;
use odor_consensus::plume::{wind_source_estimate, Filament, PlumeState, WindField};
use odor_consensus::sim::{realized_mu_bound, run_world, ReferenceReplay, World};
use odor_consensus::smc::{dominance_radius, reaching_rate, SmcParams};
use odorsim::run::{numerical_band, run_to_dir, simulate, TRACE_FILE};
use odorsim::scenario::{load, CANNED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn matrix(rows: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn criterion_1() -> Outcome {
    let g = Digraph::four_agent_reference();
    let reps = 1000;
    let started = Instant::now();
    let mut last = None;
    for _ in 0..reps {
        let m = build_matrices(&g).unwrap();
        let det = determinant(&m.coupling);
        let ok = h_is_nonsingular(&m);
        last = Some((m, det, ok));
    }
    let per_call = started.elapsed() / reps;
    let (m, det, nonsingular) = last.unwrap();
    let a = matrix(&[
        &[0., 0., 1., 0.],
        &[0., 0., 0., 0.],
        &[0., 1., 0., 0.],
        &[0., 0., 1., 0.],
    ]);
    let d = matrix(&[
        &[1., 0., 0., 0.],
        &[0., 0., 0., 0.],
        &[0., 0., 1., 0.],
        &[0., 0., 0., 1.],
    ]);
    let l = matrix(&[
        &[1., 0., -1., 0.],
        &[0., 0., 0., 0.],
        &[0., -1., 1., 0.],
        &[0., 0., -1., 1.],
    ]);
    let b = matrix(&[
        &[1., 0., 0., 0.],
        &[0., 1., 0., 0.],
        &[0., 0., 0., 0.],
        &[0., 0., 0., 0.],
    ]);
    let h = matrix(&[
        &[2., 0., -1., 0.],
        &[0., 1., 0., 0.],
        &[0., -1., 1., 0.],
        &[0., 0., -1., 1.],
    ]);
    let exact = m.adjacency == a && m.degree == d && m.laplacian == l && m.incidence == b && m.coupling == h;
    let fast = per_call.as_secs_f64() < 1e-3;
    outcome(
        exact && nonsingular && det == 2.0 && fast,
        format!("A, D, L, B, L+B exact: {exact}; nonsingular: {nonsingular}; det = {det}; {per_call:?} per call"),
    )
}

fn criterion_2(cfg: &SimConfig) -> (Outcome, odor_consensus::trace::Trace) {
    let started = Instant::now();
    let (trace, report) = simulate(cfg).unwrap();
    let elapsed = started.elapsed();
    let m = &report.metrics;
    let pass = m.time_to_consensus < cfg.time.t_end
        && m.final_max_gap < 0.01
        && m.final_second_tracking_error < 0.01
        && elapsed.as_secs_f64() < 5.0;
    (
        outcome(
            pass,
            format!(
                "gap < 0.01 from t = {:.3} s to the end; max tracking error over final second {:.5}; runtime {:.2?}",
                m.time_to_consensus, m.final_second_tracking_error, elapsed
            ),
        ),
        trace,
    )
}

fn criterion_3(cfg: &SimConfig, trace: &odor_consensus::trace::Trace) -> Outcome {
    let world = World::new(cfg.clone()).unwrap();
    let empirical = realized_mu_bound(cfg, world.coupling());
    let band = numerical_band(cfg, empirical);
    let rep = attractivity(trace, band);
    let bounded = trace
        .records
        .iter()
        .all(|r| r.agents.iter().all(|a| a.s.iter().all(|v| v.abs() <= cfg.smc.lambda1)));
    let radius = dominance_radius(empirical, &cfg.smc);
    let outside = attractivity(trace, radius);
    let pass = rep.s_sdot_fraction() >= 0.999 && rep.v_dot_fraction() >= 0.999 && bounded;
    outcome(
        pass,
        format!(
            "|s| <= lambda1 at every sample: {bounded}; outside band {band:.2e}: s*s_dot < 0 at {:.2}%, V_dot < 0 at {:.2}% \
             of {} samples (need 99.9%); outside the dominance radius {radius:.4}: {:.2}% of {}",
            100.0 * rep.s_sdot_fraction(),
            100.0 * rep.v_dot_fraction(),
            rep.samples,
            100.0 * outside.s_sdot_fraction(),
            outside.samples
        ),
    )
}

fn criterion_4(cfg: &SimConfig) -> Outcome {
    let wind = WindField {
        noise_sigma: 0.0,
        ..cfg.wind.clone()
    };
    let mut plume = PlumeState::from_config(&cfg.plume);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    plume.spin_up(&wind, cfg.time.dt, &mut rng);
    let source = plume.source_position().clone();
    let mut worst: f64 = 0.0;
    let mut checks = 0usize;
    let steps = cfg.n_steps();
    for k in 0..steps {
        let t = k as f64 * cfg.time.dt;
        plume.advance(&wind, t, t + cfg.time.dt, 1, &mut rng);
        for f in &plume.filaments {
            worst = worst.max((wind_source_estimate(f) - &source).amax());
            checks += 1;
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max |q - x_s| = {worst:.3e} over {checks} filament-steps in {steps} steps"),
    )
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(-50.0..50.0))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_pso: f64 = 0.0;
    let mut worst_drift: f64 = 0.0;
    for _ in 0..100_000 {
        let d = rng.random_range(1..=3);
        let pp = PsoParams {
            alpha1: rng.random_range(1e-3..2.0),
            alpha2: rng.random_range(1e-3..2.0),
            ..PsoParams::default()
        };
        let (x, xl, xg) = (
            random_vec(&mut rng, d),
            random_vec(&mut rng, d),
            random_vec(&mut rng, d),
        );
        let two_term = (&xl - &x) * pp.alpha1 + (&xg - &x) * pp.alpha2;
        let p = oscillation_center(&xl, &xg, &pp).unwrap();
        worst_pso = worst_pso.max((two_term - pso_control(&p, &x, &pp)).amax());

        let f = Filament {
            position: random_vec(&mut rng, d),
            release_time: 0.0,
            accumulated_mean_drift: random_vec(&mut rng, d),
        };
        let q = wind_source_estimate(&f);
        worst_drift = worst_drift.max((q + &f.accumulated_mean_drift - &f.position).amax());
    }
    outcome(
        worst_pso <= 1e-12 && worst_drift <= 1e-12,
        format!(
            "10^5 inputs: two-term vs proportional PSO max diff {worst_pso:.2e}; q + drift - x_f max {worst_drift:.2e}"
        ),
    )
}

/// Euler steps of `s_dot = law(s)` from `s0` until `|s| <= 1e-3`.
fn time_to_reach(law: impl Fn(f64) -> f64, s0: f64, dt: f64) -> f64 {
    let mut s = s0;
    let mut t = 0.0;
    while s.abs() > 1e-3 {
        s += dt * law(s);
        t += dt;
        assert!(t < 100.0, "law failed to reach the band");
    }
    t
}

fn criterion_6() -> Outcome {
    let p = SmcParams::default();
    let threshold = (1.0f64.sinh() - p.m_offset) / p.w_gain;
    let n = 1_000_000;
    let mut dominated = true;
    for k in 0..=n {
        let s = threshold + (50.0 - threshold) * k as f64 / n as f64;
        let rate = reaching_rate(&DVector::from_element(1, s), &p)[0];
        dominated &= rate.abs() >= p.mu * (1.0 - 1e-15);
    }
    let dt = 1e-5;
    let asinh_time = time_to_reach(|s| reaching_rate(&DVector::from_element(1, s), &p)[0], 1.7, dt);
    let constant_time = time_to_reach(|s| -p.mu * s.signum(), 1.7, dt);
    outcome(
        dominated && asinh_time < constant_time,
        format!(
            "|rate| >= mu for all |s| >= {threshold:.6} on a 10^6-point sweep: {dominated}; \
             time to |s| <= 1e-3 from 1.7: asinh law {asinh_time:.4} s vs constant rate {constant_time:.4} s"
        ),
    )
}

fn criterion_7() -> Outcome {
    let f_cfg = load("paper_formation", &[]).unwrap();
    let offsets = f_cfg.offsets();
    let (f_trace, _) = simulate(&f_cfg).unwrap();

    let mut c_cfg = f_cfg.clone();
    c_cfg.agents.scenario = ScenarioKind::Consensus;
    c_cfg.agents.offsets.clear();
    c_cfg.agents.initial_states = f_cfg
        .initial_states()
        .iter()
        .zip(&offsets)
        .map(|(x, d)| (x - d).as_slice().to_vec())
        .collect();
    let replay = ReferenceReplay::from_trace(&f_trace, &offsets);
    let c_trace = run_world(World::with_replay(c_cfg, replay).unwrap()).unwrap();
    let mut shift_err: f64 = 0.0;
    for (fr, cr) in f_trace.records.iter().zip(&c_trace.records) {
        for ((fa, ca), off) in fr.agents.iter().zip(&cr.agents).zip(&offsets) {
            for ((xf, xc), d) in fa.x.iter().zip(&ca.x).zip(off) {
                shift_err = shift_err.max((xf - d - xc).abs());
            }
        }
    }

    let t_end = f_trace.records.last().unwrap().t;
    let mut gap_err: f64 = 0.0;
    for r in f_trace.records.iter().filter(|r| r.t >= t_end - 1.0) {
        for i in 0..r.agents.len() {
            for j in 0..r.agents.len() {
                let want = offsets[i][0] - offsets[j][0];
                gap_err = gap_err.max((r.agents[i].x[0] - r.agents[j].x[0] - want).abs());
            }
        }
    }
    outcome(
        gap_err <= 0.01 && shift_err <= 1e-9,
        format!(
            "steady gaps vs offset differences over the final second: max deviation {gap_err:.2e}; \
             shifted consensus replay max difference {shift_err:.2e}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_odorsim");
    let root = tempfile::tempdir().unwrap();
    let mut identical = Vec::new();
    for (name, _) in CANNED {
        let mut bytes = Vec::new();
        for run in 0..2 {
            let out = root.path().join(format!("{name}_{run}"));
            let status = Command::new(bin)
                .args(["run", "--config", name, "--seed", "42", "--out"])
                .arg(&out)
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            bytes.push(std::fs::read(out.join(TRACE_FILE)).unwrap());
        }
        identical.push((name, bytes[0] == bytes[1] && !bytes[0].is_empty()));
    }
    // The library path writes the same bytes as the binary.
    let lib_dir = root.path().join("lib");
    run_to_dir(&load("paper_consensus", &[]).unwrap(), &lib_dir, false).unwrap();
    let same_as_bin = std::fs::read(lib_dir.join(TRACE_FILE)).unwrap()
        == std::fs::read(root.path().join("paper_consensus_0").join(TRACE_FILE)).unwrap();
    let all = identical.iter().all(|(_, ok)| *ok) && same_as_bin;
    let list: Vec<String> = identical.iter().map(|(n, ok)| format!("{n}: {ok}")).collect();
    outcome(
        all,
        format!(
            "byte-identical trace.csv across two runs: {}; library matches binary: {same_as_bin}",
            list.join(", ")
        ),
    )
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_odorsim");
    let out = Command::new(bin)
        .args(["check", "--config", "paper_consensus"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    let w_pass = text.contains("w-condition: PASS (w = 2 vs bound 0.3");
    let conservative = text.lines().any(|l| l.starts_with("mu-condition, conservative"));
    let empirical = text.lines().any(|l| l.starts_with("mu-condition, empirical"));
    let flagged = text.contains("discrepancy:");
    let code = out.status.code();
    let line = |prefix: &str| {
        text.lines()
            .find(|l| l.starts_with(prefix))
            .map(|l| l.trim().to_string())
            .unwrap_or_default()
    };
    outcome(
        code == Some(0) && w_pass && conservative && empirical && flagged,
        format!(
            "exit {code:?}; {}; {}; {}; discrepancy flagged: {flagged}",
            line("w-condition"),
            line("mu-condition, conservative"),
            line("mu-condition, empirical")
        ),
    )
}

fn main() -> ExitCode {
    let cfg = load("paper_consensus", &[]).unwrap();
    let mut results: Vec<(u32, Outcome)> = vec![(1, criterion_1())];
    let (c2, trace) = criterion_2(&cfg);
    results.push((2, c2));
    results.push((3, criterion_3(&cfg, &trace)));
    results.push((4, criterion_4(&cfg)));
    results.push((5, criterion_5()));
    results.push((6, criterion_6()));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));

    let mut failed = 0;
    for (k, o) in &results {
        println!("{} criterion {k}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
