//! Acceptance suite: one test per numbered criterion, each printing a
//! PASS/FAIL line. The four-oscillator and output-tracking benchmarks load
//! the scenario files shipped in `scenarios/`.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use etcsim::engine::{
    audit_event_log, run_heterogeneous, run_homogeneous, zeno_report, InitialCondition,
    SimulationConfig, SimulationTrace,
};
use etcsim::graph::{LeaderGraph, SwitchingSchedule, Topology, UGraph};
use etcsim::heterogeneous::{DegreeMode, Exosystem, HeteroAgent};
use etcsim::homogeneous::HomoParams;
use etcsim::linalg::{
    compute_k2, consensus_gain, neutral_stable_decompose, solve_regulator, RegulatorAgent,
};
use etcsim::scenario::{BuiltScenario, GainsReport, Scenario};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn pass(criterion: &str, detail: String) {
    println!("[{criterion}] PASS: {detail}");
}

// ---------------------------------------------------------------------------
// Criterion 1: consensus gain on the rotation benchmark.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gain_design() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let want = DMatrix::from_row_slice(1, 2, &[0.0, -1.0]);

    let g = consensus_gain(&a, &b).unwrap();
    let err = (&g - &want).norm();
    assert!(err < 1e-9, "criterion 1: |G - [0,-1]| = {err}");

    // E^T E = I here, so the match is exact, not merely up to basis.
    let dec = neutral_stable_decompose(&a).unwrap();
    let ete_err = (dec.e.transpose() * &dec.e - DMatrix::identity(2, 2)).norm();
    assert!(ete_err < 1e-9, "criterion 1: |E^T E - I| = {ete_err}");

    let best = (0..5)
        .map(|_| {
            let t0 = Instant::now();
            let _ = consensus_gain(&a, &b).unwrap();
            t0.elapsed()
        })
        .min()
        .unwrap();
    assert!(
        best.as_micros() < 1000,
        "criterion 1: gain synthesis took {best:?}, budget 1 ms"
    );
    pass(
        "criterion 1",
        format!("G = [0, -1] within {err:.1e}, synthesis {best:?}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: regulator equations on the four-follower benchmark.
// ---------------------------------------------------------------------------

fn bench_plants() -> Vec<RegulatorAgent> {
    (1..=4)
        .map(|i| {
            let fi = i as f64;
            RegulatorAgent {
                a: DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -fi]),
                b: DMatrix::from_row_slice(2, 1, &[0.0, fi]),
                c: DMatrix::from_row_slice(1, 2, &[fi, 0.0]),
                e: DMatrix::identity(2, 2),
                f: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            }
        })
        .collect()
}

fn rotation_s() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

#[test]
fn criterion_2a_regulator_closed_forms() {
    let plants = bench_plants();
    let s = rotation_s();
    let r_ref = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);

    let t0 = Instant::now();
    let sol = solve_regulator(&plants, &s, Some(&r_ref)).unwrap();
    let elapsed = t0.elapsed();

    let mut worst = 0.0f64;
    for (k, (pi, u)) in sol.pi.iter().zip(&sol.u).enumerate() {
        let fi = (k + 1) as f64;
        let want_pi = DMatrix::from_row_slice(2, 2, &[1.0 / fi, 1.0 / fi, -1.0, 2.0 / fi]);
        let want_u = DMatrix::from_row_slice(1, 2, &[-1.0 - 2.0 / (fi * fi), 0.0]);
        worst = worst.max((pi - &want_pi).norm()).max((u - &want_u).norm());
    }
    worst = worst.max((&sol.r - &r_ref).norm());
    assert!(worst < 1e-9, "criterion 2a: closed-form mismatch {worst}");
    assert!(sol.unique && sol.residual < 1e-9);

    // With the output map left free the equations are rank-deficient: the
    // solver must detect the two-parameter family, return an exact member,
    // and the closed forms above must lie inside that family.
    let free = solve_regulator(&plants, &s, None).unwrap();
    assert!(!free.unique, "criterion 2a: family not detected");
    assert_eq!(free.family_dim, 2);
    assert!(free.residual < 1e-9);
    let mut subst = 0.0f64;
    for (k, plant) in plants.iter().enumerate() {
        let fi = (k + 1) as f64;
        let pi = DMatrix::from_row_slice(2, 2, &[1.0 / fi, 1.0 / fi, -1.0, 2.0 / fi]);
        let u = DMatrix::from_row_slice(1, 2, &[-1.0 - 2.0 / (fi * fi), 0.0]);
        subst = subst
            .max((&pi * &s - &plant.a * &pi - &plant.b * &u - &plant.e).norm())
            .max((&plant.c * &pi + &plant.f - &r_ref).norm());
    }
    assert!(
        subst < 1e-9,
        "criterion 2a: reference member residual {subst}"
    );

    assert!(
        elapsed.as_millis() < 10,
        "criterion 2a: solve took {elapsed:?}, budget 10 ms"
    );
    pass(
        "criterion 2a",
        format!(
            "Pi, U, R match within {worst:.1e}; free-R family dim 2 detected; solve {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_2b_feedforward_gain_transcription() {
    // The transcribed feedforward gains [-2 - 1/i - 2/i^2, 3/i] are asserted
    // as stated. They are inconsistent with the identity K2 = U - K1 Pi for
    // the same transcribed Pi, U, and K1 = [-1, -1], which yields
    // [-2 + 1/i - 2/i^2, 3/i]: the reference's first component carries a sign
    // typo on the 1/i term. The identity itself is covered by
    // criterion_2_supplement_feedforward_identity.
    let plants = bench_plants();
    let s = rotation_s();
    let r_ref = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
    let sol = solve_regulator(&plants, &s, Some(&r_ref)).unwrap();
    let k1 = DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]);

    let mut worst = 0.0f64;
    for i in 0..4 {
        let fi = (i + 1) as f64;
        let transcribed =
            DMatrix::from_row_slice(1, 2, &[-2.0 - 1.0 / fi - 2.0 / (fi * fi), 3.0 / fi]);
        let k2 = compute_k2(&k1, &sol, i).unwrap();
        worst = worst.max((&k2 - &transcribed).norm());
    }
    assert!(
        worst < 1e-9,
        "criterion 2b: computed K2 differs from the transcribed reference by {worst:.3} \
         (the reference's first component -2 - 1/i - 2/i^2 is inconsistent with \
         K2 = U - K1 Pi evaluated on the same reference Pi, U, K1, which gives \
         -2 + 1/i - 2/i^2; see the decisions ledger)"
    );
    pass(
        "criterion 2b",
        format!("K2 matches transcription within {worst:.1e}"),
    );
}

#[test]
fn criterion_2_supplement_feedforward_identity() {
    // K2 = U - K1 Pi evaluated on the verified closed forms.
    let plants = bench_plants();
    let s = rotation_s();
    let r_ref = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
    let sol = solve_regulator(&plants, &s, Some(&r_ref)).unwrap();
    let k1 = DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]);
    let mut worst = 0.0f64;
    for i in 0..4 {
        let fi = (i + 1) as f64;
        let consistent =
            DMatrix::from_row_slice(1, 2, &[-2.0 + 1.0 / fi - 2.0 / (fi * fi), 3.0 / fi]);
        let k2 = compute_k2(&k1, &sol, i).unwrap();
        worst = worst.max((&k2 - &consistent).norm());
    }
    assert!(
        worst < 1e-9,
        "criterion 2 supplement: identity residual {worst}"
    );
    pass(
        "criterion 2 supplement",
        format!("K2 = U - K1 Pi reproduced within {worst:.1e}"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 3, 4, 7, 8, 9 share the five-seed rotation benchmark runs.
// ---------------------------------------------------------------------------

struct HomoRun {
    seed: u64,
    trace: SimulationTrace,
    elapsed_s: f64,
}

struct HomoBench {
    runs: Vec<HomoRun>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    params: HomoParams,
    schedule: SwitchingSchedule,
}

fn homo_bench() -> &'static HomoBench {
    static BENCH: OnceLock<HomoBench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let mut scenario = Scenario::from_path(scenario_path("rotation_consensus.toml")).unwrap();
        let mut runs = Vec::new();
        let mut pieces = None;
        for seed in 1..=5u64 {
            scenario.set_seed(seed);
            let built = scenario.build().unwrap();
            let BuiltScenario::Homogeneous {
                a,
                b,
                params,
                schedule,
                config,
                ..
            } = built
            else {
                panic!("expected a homogeneous scenario")
            };
            let t0 = Instant::now();
            let trace = run_homogeneous(&a, &b, &params, &schedule, &config).unwrap();
            let elapsed_s = t0.elapsed().as_secs_f64();
            runs.push(HomoRun {
                seed,
                trace,
                elapsed_s,
            });
            pieces = Some((a, b, params, schedule));
        }
        let (a, b, params, schedule) = pieces.unwrap();
        HomoBench {
            runs,
            a,
            b,
            params,
            schedule,
        }
    })
}

#[test]
fn criterion_3_homogeneous_convergence() {
    let bench = homo_bench();
    let mut details = Vec::new();
    for run in &bench.runs {
        let final_err = run.trace.metrics.final_error;
        assert!(
            final_err < 1e-2,
            "criterion 3: seed {} ends at ||xi(30)|| = {final_err}",
            run.seed
        );
        assert!(
            run.elapsed_s < 30.0,
            "criterion 3: seed {} took {} s, budget 30 s",
            run.seed,
            run.elapsed_s
        );
        details.push(format!(
            "seed {}: {:.2e} in {:.2} s",
            run.seed, final_err, run.elapsed_s
        ));
    }
    pass("criterion 3", details.join("; "));
}

#[test]
fn criterion_4_zeno_exclusion() {
    let bench = homo_bench();
    let mut asserted_total = 0;
    for run in &bench.runs {
        for (agent, gap) in run.trace.metrics.min_interevent_gap.iter().enumerate() {
            let gap = gap.expect("every agent triggers more than once on this benchmark");
            assert!(
                gap > 0.0,
                "criterion 4: seed {} agent {agent} min gap {gap}",
                run.seed
            );
        }
        let report = zeno_report(
            &run.trace,
            &bench.params,
            &bench.a,
            &bench.b,
            &bench.schedule,
        )
        .unwrap();
        assert!(report.asserted_windows > 0);
        assert_eq!(
            report.violations, 0,
            "criterion 4: seed {} has {} bound violations",
            run.seed, report.violations
        );
        asserted_total += report.asserted_windows;
    }
    pass(
        "criterion 4",
        format!("all gaps positive; {asserted_total} function-trigger windows satisfy the bound"),
    );
}

#[test]
fn criterion_7_event_log_soundness() {
    let bench = homo_bench();
    let mut events_total = 0;
    for run in &bench.runs {
        let audit = audit_event_log(&run.trace, &bench.params, &bench.a, &bench.schedule).unwrap();
        assert_eq!(
            audit.violations, 0,
            "criterion 7: seed {} audit violations (min f at events {:.3e}, max f elsewhere {:.3e})",
            run.seed, audit.min_f_at_events, audit.max_f_at_nonevents
        );
        assert!(audit.min_f_at_events >= -1e-12);
        assert!(audit.max_f_at_nonevents < 0.0);
        events_total += audit.function_events_checked;
    }
    pass(
        "criterion 7",
        format!("{events_total} function events and all non-event grid points consistent"),
    );
}

#[test]
fn criterion_8_determinism() {
    let mut scenario = Scenario::from_path(scenario_path("rotation_consensus.toml")).unwrap();
    scenario.set_seed(1);
    scenario.set_horizon(10.0);

    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let r1 = scenario.run_to_dir(dir1.path()).unwrap();
    let r2 = scenario.run_to_dir(dir2.path()).unwrap();
    for name in ["events.csv", "states.csv", "metrics.json", "gains.json"] {
        let b1 = std::fs::read(dir1.path().join(name)).unwrap();
        let b2 = std::fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(b1, b2, "criterion 8: {name} differs between identical runs");
    }
    assert_eq!(r1.metrics.event_count, r2.metrics.event_count);

    let t1 = scenario.run().unwrap().trace;
    let t2 = scenario.run().unwrap().trace;
    for (x1, x2) in t1
        .states
        .last()
        .unwrap()
        .iter()
        .zip(t2.states.last().unwrap())
    {
        assert_eq!(
            x1.as_slice(),
            x2.as_slice(),
            "criterion 8: final states differ"
        );
    }
    pass(
        "criterion 8",
        "identical event logs, output files, and final states across repeated runs".into(),
    );
}

#[test]
fn criterion_9_communication_reduction() {
    let bench = homo_bench();
    let mut worst_ratio = 0.0f64;
    for run in &bench.runs {
        let steps = run.trace.metrics.grid_steps;
        for (agent, &count) in run.trace.metrics.event_count.iter().enumerate() {
            let ratio = count as f64 / steps as f64;
            worst_ratio = worst_ratio.max(ratio);
            assert!(
                ratio < 0.10,
                "criterion 9: seed {} agent {agent} fired {count} times over {steps} steps",
                run.seed
            );
        }
    }
    pass(
        "criterion 9",
        format!("worst per-agent event ratio {:.3}%", 100.0 * worst_ratio),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: heterogeneous output consensus benchmark.
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_heterogeneous_convergence() {
    let scenario = Scenario::from_path(scenario_path("output_tracking.toml")).unwrap();
    let built = scenario.build().unwrap();
    let BuiltScenario::Heterogeneous {
        agents,
        exo,
        c,
        mu,
        nu,
        degree_mode,
        schedule,
        config,
        ..
    } = built
    else {
        panic!("expected a heterogeneous scenario")
    };
    let t0 = Instant::now();
    let trace =
        run_heterogeneous(&agents, &exo, c, mu, nu, degree_mode, &schedule, &config).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();

    let w0_final = trace.exo.as_ref().unwrap().last().unwrap().clone();
    let observers_final = trace.observers.as_ref().unwrap().last().unwrap();
    let worst_obs = observers_final
        .iter()
        .map(|w| (w - &w0_final).norm())
        .fold(0.0, f64::max);
    assert!(
        worst_obs < 1e-2,
        "criterion 5: max ||w_i(30) - w0(30)|| = {worst_obs}"
    );

    let worst_out = trace.metrics.final_error;
    assert!(
        worst_out < 1e-2,
        "criterion 5: max pairwise output error {worst_out}"
    );
    assert!(elapsed < 30.0, "criterion 5: run took {elapsed} s");
    pass(
        "criterion 5",
        format!(
            "observer error {worst_obs:.2e}, output spread {worst_out:.2e}, run {elapsed:.2} s"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: brute-force oracles.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6a_single_integrator_average_invariance() {
    let a = DMatrix::zeros(1, 1);
    let b = DMatrix::identity(1, 1);
    let params =
        HomoParams::new(1.0, 0.5, 0.5, 1.0, DMatrix::from_row_slice(1, 1, &[-1.0])).unwrap();
    let ring = UGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
    let schedule =
        SwitchingSchedule::cyclic(vec![Topology::Undirected(ring)], &[0], 0.5, 21.0).unwrap();
    let config = SimulationConfig {
        horizon: 20.0,
        step: 1e-3,
        seed: 2,
        init: InitialCondition::Explicit(vec![vec![0.9], vec![-0.4], vec![0.1]]),
        record_stride: 1,
        topology_triggers_only: false,
    };
    let trace = run_homogeneous(&a, &b, &params, &schedule, &config).unwrap();
    let mean0 = (0.9 - 0.4 + 0.1) / 3.0;
    let mut worst_drift = 0.0f64;
    for step in &trace.states {
        let mean = step.iter().map(|x| x[0]).sum::<f64>() / 3.0;
        worst_drift = worst_drift.max((mean - mean0).abs());
    }
    assert!(worst_drift < 1e-9, "criterion 6a: mean drift {worst_drift}");
    for x in trace.states.last().unwrap() {
        assert!((x[0] - mean0).abs() < 1e-3, "criterion 6a: no consensus");
    }
    pass(
        "criterion 6a",
        format!("mean drift {worst_drift:.2e} over 20 s"),
    );
}

#[test]
fn criterion_6b_scalar_leader_tracking() {
    let exo = Exosystem::new(DMatrix::zeros(1, 1), DVector::from_vec(vec![1.0])).unwrap();
    let agent = HeteroAgent {
        a: DMatrix::from_row_slice(1, 1, &[-1.0]),
        b: DMatrix::identity(1, 1),
        c: DMatrix::identity(1, 1),
        e: DMatrix::zeros(1, 1),
        f: DMatrix::zeros(1, 1),
        k1: DMatrix::zeros(1, 1),
        k2: DMatrix::zeros(1, 1),
    };
    let lg = LeaderGraph::new(UGraph::empty(1), &[0]).unwrap();
    let schedule = SwitchingSchedule::cyclic(vec![Topology::Leader(lg)], &[0], 0.5, 12.0).unwrap();
    let d0 = 0.01;
    let config = SimulationConfig {
        horizon: 10.0,
        step: 1e-3,
        seed: 0,
        init: InitialCondition::Explicit(vec![vec![0.0], vec![1.0 + d0]]),
        record_stride: 1,
        topology_triggers_only: false,
    };
    let trace = run_heterogeneous(
        &[agent],
        &exo,
        1.0,
        1e-12,
        1.0,
        DegreeMode::Inclusive,
        &schedule,
        &config,
    )
    .unwrap();

    let observers = trace.observers.as_ref().unwrap();
    // Piecewise closed form between events (held estimate, constant slope).
    let h = config.step;
    let mut event_idx = 0usize;
    let mut seg_t = 0.0f64;
    let mut seg_w = observers[0][0][0];
    let mut worst_piecewise = 0.0f64;
    let mut worst_exponential = 0.0f64;
    for (j, &t) in trace.times.iter().enumerate() {
        while event_idx < trace.events.len() && trace.events[event_idx].time <= t {
            seg_t = trace.events[event_idx].time;
            seg_w = observers[(seg_t / h).round() as usize][0][0];
            event_idx += 1;
        }
        let piecewise = seg_w - (seg_w - 1.0) * (t - seg_t);
        worst_piecewise = worst_piecewise.max((observers[j][0][0] - piecewise).abs());
        let exponential = 1.0 + d0 * (-t).exp();
        worst_exponential = worst_exponential.max((observers[j][0][0] - exponential).abs());
    }
    assert!(
        worst_piecewise < 2e-3,
        "criterion 6b: piecewise closed form off by {worst_piecewise}"
    );
    assert!(
        worst_exponential < 2e-3,
        "criterion 6b: exponential envelope off by {worst_exponential}"
    );
    pass(
        "criterion 6b",
        format!(
            "segment closed form within {worst_piecewise:.1e}, exponential within {worst_exponential:.1e}"
        ),
    );
}

#[test]
fn criterion_6c_regulator_substitution_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let q = 2;
        let s = rotation_s();
        let n_agents = 1 + (trial % 3);
        let mut plants = Vec::new();
        for _ in 0..n_agents {
            let ni = 2 + (rng.random_range(0..2usize));
            let mi = 1 + (rng.random_range(0..2usize));
            let p = 1;
            let a = DMatrix::from_fn(ni, ni, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(ni, mi, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::from_fn(p, ni, |_, _| rng.random_range(-1.0..1.0));
            // Feasible by construction: draw the target solution, then derive
            // the forcing matrices from it.
            let pi = DMatrix::from_fn(ni, q, |_, _| rng.random_range(-1.0..1.0));
            let u = DMatrix::from_fn(mi, q, |_, _| rng.random_range(-1.0..1.0));
            let r = DMatrix::from_fn(p, q, |_, _| rng.random_range(-1.0..1.0));
            let e = &pi * &s - &a * &pi - &b * &u;
            let f = &r - &c * &pi;
            // A common R requires consistent per-agent targets; use the first
            // agent's R for everyone by adjusting F.
            plants.push((a, b, c, e, f, r));
        }
        let common_r = plants[0].5.clone();
        let agents: Vec<RegulatorAgent> = plants
            .into_iter()
            .map(|(a, b, c, e, f, r)| RegulatorAgent {
                a,
                b,
                c,
                e,
                f: f + (&common_r - r),
            })
            .collect();
        let sol = solve_regulator(&agents, &s, None).unwrap();
        worst = worst.max(sol.residual);
        assert!(
            sol.residual < 1e-9,
            "criterion 6c: trial {trial} residual {}",
            sol.residual
        );
    }
    pass(
        "criterion 6c",
        format!("50 feasible instances, worst residual {worst:.2e}"),
    );
}

#[test]
fn criterion_6d_decomposition_reassembly_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        // blockdiag(random rotations (+ optional zero), random Hurwitz),
        // conjugated by a mildly scaled random orthogonal matrix.
        let pairs = 1 + rng.random_range(0..2usize);
        let zeros = rng.random_range(0..2usize);
        let stable = rng.random_range(0..3usize);
        let n = 2 * pairs + zeros + stable;

        let mut block = DMatrix::<f64>::zeros(n, n);
        let mut freqs: Vec<f64> = Vec::new();
        for k in 0..pairs {
            let mut w;
            loop {
                w = rng.random_range(0.3..3.0);
                if freqs.iter().all(|f: &f64| (f - w).abs() > 0.05) {
                    break;
                }
            }
            freqs.push(w);
            block[(2 * k, 2 * k + 1)] = w;
            block[(2 * k + 1, 2 * k)] = -w;
        }
        if stable > 0 {
            let off = 2 * pairs + zeros;
            let m = DMatrix::from_fn(stable, stable, |_, _| rng.random_range(-1.0..1.0));
            let shift = m
                .complex_eigenvalues()
                .iter()
                .map(|l| l.re)
                .fold(f64::NEG_INFINITY, f64::max)
                + rng.random_range(0.3..1.0);
            let hurwitz = m - DMatrix::identity(stable, stable) * shift;
            block
                .view_mut((off, off), (stable, stable))
                .copy_from(&hurwitz);
        }

        let gauss = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = gauss.qr().q();
        let scale = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.7..1.4)));
        let t = &q * scale;
        let t_inv = t.clone().try_inverse().unwrap();
        let a = &t * block * t_inv;

        let dec = neutral_stable_decompose(&a)
            .unwrap_or_else(|e| panic!("criterion 6d: trial {trial} failed: {e}"));
        assert_eq!(dec.n1, 2 * pairs + zeros, "criterion 6d: wrong center size");
        let resid = dec.reassembly_residual(&a);
        worst = worst.max(resid);
        assert!(
            resid < 1e-8,
            "criterion 6d: trial {trial} reassembly residual {resid}"
        );
    }
    pass(
        "criterion 6d",
        format!("100 random neutrally stable matrices, worst residual {worst:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// Regulator solution surfaced through the scenario path (closure of
// criterion 2 against the gains written by `run`).
// ---------------------------------------------------------------------------

#[test]
fn gains_report_matches_closed_forms() {
    let mut scenario = Scenario::from_path(scenario_path("output_tracking.toml")).unwrap();
    scenario.set_horizon(4.0);
    let result = scenario.run().unwrap();
    let GainsReport::Heterogeneous { pi, r, k2, .. } = result.gains else {
        panic!("expected heterogeneous gains")
    };
    for (k, pi_rows) in pi.iter().enumerate() {
        let fi = (k + 1) as f64;
        let want = [[1.0 / fi, 1.0 / fi], [-1.0, 2.0 / fi]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((pi_rows[i][j] - want[i][j]).abs() < 1e-9);
            }
        }
        // Installed feedforward gain obeys K2 = U - K1 Pi.
        let consistent = [-2.0 + 1.0 / fi - 2.0 / (fi * fi), 3.0 / fi];
        for j in 0..2 {
            assert!((k2[k][0][j] - consistent[j]).abs() < 1e-9);
        }
    }
    assert!((r[0][0] - 2.0).abs() < 1e-9 && (r[0][1] - 1.0).abs() < 1e-9);
}
