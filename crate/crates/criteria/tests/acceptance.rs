//! Acceptance criteria, one line per criterion. Exits nonzero if any fails.
//!
//! Runs as a plain binary (`harness = false`) so every criterion executes and
//! reports even when an earlier one fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use amod::demand::{DemandScenario, ScenarioFile};
use amod::harness::{run_setup, Controller, ExperimentConfig, RunReport, Seeds, Setup};
use amod::iarr::{iarr_feasible_fallback, iarr_residual, solve_iarr_step};
use amod::model::{build_lti, step_approx, InputVector, Layout, StateVector};
use amod::mpc::{randomized_round, solve_mpc_step, FractionalAction, MpcConfig, TerminalMode};
use amod::network::{complete, read_network, CompleteNetwork};
use amod::reference::{solve_reference, CostKind};
use amod::solver::SolveStatus;
use common::{circulation, max_abs_diff, random_network, random_rates};
use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

const MPC: [Controller; 4] = [Controller::QmpcQref, Controller::QmpcLref, Controller::LmpcQref, Controller::LmpcLref];

/// A finished long run together with its wall time.
struct LongRun {
    report: RunReport,
    seconds: f64,
}

/// The 6-zone network with the peak-block rates held constant, and a fleet
/// of `ceil(1.2 M_min)` under the larger of the two reference costs.
fn long_setup(controller: Controller) -> Setup {
    let net = complete(&read_network(&data("umn_like_network.toml")).unwrap(), 2.0).unwrap();
    let scenario = ScenarioFile::read(&data("umn_like_demand.toml")).unwrap().to_scenario(2.0, 0).unwrap();
    let rates = scenario.peak_block().rates.clone();
    let m_min = [CostKind::Linear, CostKind::Quadratic]
        .iter()
        .map(|&k| solve_reference(&net, &rates, k, 0.0).unwrap().m_min)
        .fold(0.0, f64::max);
    Setup {
        network: net,
        scenario: DemandScenario::constant(rates, 2000, 41).unwrap(),
        controller,
        step_minutes: 2.0,
        horizon: 8,
        fleet: (1.2 * m_min).ceil() as u32,
        refresh_steps: 60,
        duration_steps: None,
        perturbation: 0.0,
        terminal: TerminalMode::HardZero,
        seeds: Seeds {
            demand: 41,
            rounding: 42,
            perturbation: 43,
        },
    }
}

fn long_runs() -> Vec<(Controller, amod::Result<LongRun>)> {
    Controller::ALL
        .iter()
        .map(|&c| {
            let start = Instant::now();
            let r = run_setup(&long_setup(c)).map(|report| LongRun {
                report,
                seconds: start.elapsed().as_secs_f64(),
            });
            (c, r)
        })
        .collect()
}

fn c1_conservation(runs: &[(Controller, amod::Result<LongRun>)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, r) in runs {
        match r {
            Ok(run) => {
                let fleet = run.report.summary.fleet as u64;
                let bad = run.report.series.iter().filter(|row| row.idle + row.in_transit != fleet).count();
                let ok = bad == 0 && run.report.series.len() == 2000 && run.seconds < 60.0;
                pass &= ok;
                parts.push(format!("{c}: {bad} bad steps, {:.1}s", run.seconds));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{c}: error {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn c2_fixed_point() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = rng.random_range(2..=6);
        let net = random_network(n, 5, &mut rng);
        let lambda = random_rates(net.link_count(), 1.5, &mut rng);
        let kind = if i % 2 == 0 { CostKind::Linear } else { CostKind::Quadratic };
        let r0 = solve_reference(&net, &lambda, kind, 0.0).unwrap();
        let fleet = r0.m_min + rng.random_range(0.0..20.0);
        let r = solve_reference(&net, &lambda, kind, fleet).unwrap();
        let model = build_lti(&net);
        let lay = *model.layout();
        let x_bar = r.state(&lay);
        let next = step_approx(&model, &x_bar, &r.input(&lay), &lambda).unwrap();
        worst = worst.max(max_abs_diff(&next.0, &x_bar.0));
    }
    outcome(worst <= 1e-9, format!("max |x' - x̄| = {worst:.2e} over 50 instances"))
}

fn c3_zero_rebalance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let net = random_network(n, 5, &mut rng);
        let lambda = circulation(&net, &mut rng);
        for kind in [CostKind::Linear, CostKind::Quadratic] {
            let r = solve_reference(&net, &lambda, kind, 0.0).unwrap();
            worst = worst.max(r.r_bar.iter().map(|x| x.abs()).sum());
        }
    }
    outcome(worst <= 1e-8, format!("max ||R̄||_1 = {worst:.2e} over 20 instances x 2 costs"))
}

/// Node-by-link `E` for three zones, rows 0 and 1 only (row 2 is their negated sum).
fn incidence3() -> [[f64; 6]; 2] {
    let mut e = [[0.0; 6]; 2];
    let mut k = 0;
    for r in 0..3 {
        for s in 0..3 {
            if r == s {
                continue;
            }
            if s < 2 {
                e[s][k] += 1.0;
            }
            if r < 2 {
                e[r][k] -= 1.0;
            }
            k += 1;
        }
    }
    e
}

fn apply3(e: &[[f64; 6]; 2], x: &[f64]) -> [f64; 2] {
    [0, 1].map(|i| (0..6).map(|k| e[i][k] * x[k]).sum())
}

/// Minimum of `Tᵀ R` over basic feasible solutions of `E R = b, R >= 0`.
fn vertex_min(t: &[f64], b: [f64; 2]) -> f64 {
    let e = incidence3();
    let mut best = f64::INFINITY;
    for i in 0..6 {
        for j in (i + 1)..6 {
            let a = Matrix2::new(e[0][i], e[0][j], e[1][i], e[1][j]);
            let Some(inv) = a.try_inverse() else { continue };
            let z = inv * Vector2::new(b[0], b[1]);
            if z[0] >= -1e-12 && z[1] >= -1e-12 {
                best = best.min(t[i] * z[0].max(0.0) + t[j] * z[1].max(0.0));
            }
        }
    }
    best
}

/// Euclidean projection onto `{R >= 0, E R = b}` by Dykstra's alternating projections.
fn project(e: &[[f64; 6]; 2], b: [f64; 2], y: &[f64; 6]) -> [f64; 6] {
    let a = DMatrix::from_fn(2, 6, |i, k| e[i][k]);
    let gram_inv = (&a * a.transpose()).try_inverse().unwrap();
    let affine = |z: &[f64; 6]| -> [f64; 6] {
        let r = apply3(e, z);
        let mu = &gram_inv * nalgebra::DVector::from_vec(vec![r[0] - b[0], r[1] - b[1]]);
        let mut out = *z;
        for k in 0..6 {
            out[k] -= e[0][k] * mu[0] + e[1][k] * mu[1];
        }
        out
    };
    let mut x = *y;
    let mut p = [0.0; 6];
    let mut q = [0.0; 6];
    for _ in 0..200_000 {
        let mut xp = x;
        for k in 0..6 {
            xp[k] += p[k];
        }
        let ya = affine(&xp);
        for k in 0..6 {
            p[k] = xp[k] - ya[k];
        }
        let mut next = [0.0; 6];
        for k in 0..6 {
            next[k] = (ya[k] + q[k]).max(0.0);
            q[k] = ya[k] + q[k] - next[k];
        }
        let change = (0..6).map(|k| (next[k] - x[k]).abs()).fold(0.0, f64::max);
        x = next;
        if change < 1e-15 {
            break;
        }
    }
    x
}

/// Projected gradient on `sum T R^2`.
fn projected_gradient_min(t: &[f64], b: [f64; 2]) -> f64 {
    let e = incidence3();
    let step = 1.0 / (2.0 * t.iter().cloned().fold(0.0, f64::max));
    let mut x = project(&e, b, &[0.0; 6]);
    for _ in 0..5000 {
        let mut y = x;
        for k in 0..6 {
            y[k] -= step * 2.0 * t[k] * x[k];
        }
        let next = project(&e, b, &y);
        let change = (0..6).map(|k| (next[k] - x[k]).abs()).fold(0.0, f64::max);
        x = next;
        if change < 1e-13 {
            break;
        }
    }
    (0..6).map(|k| t[k] * x[k] * x[k]).sum()
}

fn c4_reference_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = incidence3();
    let (mut lp_gap, mut qp_gap): (f64, f64) = (0.0, 0.0);
    for _ in 0..30 {
        let steps: Vec<u32> = (0..6).map(|_| rng.random_range(1..=5)).collect();
        let net = CompleteNetwork::from_links(3, steps.clone(), vec![1.0; 6]).unwrap();
        let t: Vec<f64> = steps.iter().map(|&s| s as f64).collect();
        let lambda: Vec<f64> = (0..6).map(|_| rng.random_range(0..=8) as f64 / 8.0).collect();
        let el = apply3(&e, &lambda);
        let b = [-el[0], -el[1]];
        let lp = solve_reference(&net, &lambda, CostKind::Linear, 0.0).unwrap();
        lp_gap = lp_gap.max((CostKind::Linear.evaluate(&t, &lp.r_bar) - vertex_min(&t, b)).abs());
        let qp = solve_reference(&net, &lambda, CostKind::Quadratic, 0.0).unwrap();
        qp_gap = qp_gap.max((CostKind::Quadratic.evaluate(&t, &qp.r_bar) - projected_gradient_min(&t, b)).abs());
    }
    outcome(
        lp_gap <= 1e-6 && qp_gap <= 1e-5,
        format!("LP vs vertices {lp_gap:.2e} (tol 1e-6), QP vs projected gradient {qp_gap:.2e} (tol 1e-5), 30 instances"),
    )
}

fn c5_matrix_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatched = 0;
    let mut recursion: f64 = 0.0;
    for n in 2..=8 {
        let net = random_network(n, 6, &mut rng);
        let model = build_lti(&net);
        let m = n * (n - 1);
        let mut pairs = Vec::new();
        for r in 0..n {
            for s in 0..n {
                if r != s {
                    pairs.push((r, s));
                }
            }
        }
        let t: Vec<f64> = net.travel_steps().iter().map(|&x| x as f64).collect();
        let sd = 2 * m + n;
        let (w0, p0, f0) = (0, m, m + n);
        let mut a = DMatrix::<f64>::zeros(sd, sd);
        let mut b = DMatrix::<f64>::zeros(sd, 2 * m);
        let mut l = DMatrix::<f64>::zeros(sd, m);
        for i in 0..m {
            a[(w0 + i, w0 + i)] = 1.0;
            a[(f0 + i, f0 + i)] = 1.0 - 1.0 / t[i];
            b[(w0 + i, i)] = -1.0;
            b[(f0 + i, i)] = 1.0;
            b[(f0 + i, m + i)] = 1.0;
            l[(w0 + i, i)] = 1.0;
        }
        for z in 0..n {
            a[(p0 + z, p0 + z)] = 1.0;
        }
        for (k, &(r, s)) in pairs.iter().enumerate() {
            a[(p0 + s, f0 + k)] = 1.0 / t[k];
            b[(p0 + r, k)] = -1.0;
            b[(p0 + r, m + k)] = -1.0;
        }
        mismatched += usize::from(model.a() != &a) + usize::from(model.b() != &b) + usize::from(model.l() != &l);

        for _ in 0..20 {
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..10.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let f: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..10.0)).collect();
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..5.0)).collect();
            let rb: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..5.0)).collect();
            let d: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..3.0)).collect();
            let x = StateVector([w.clone(), p.clone(), f.clone()].concat());
            let got = step_approx(&model, &x, &InputVector([v.clone(), rb.clone()].concat()), &d).unwrap();
            let mut want = Vec::with_capacity(sd);
            want.extend((0..m).map(|k| w[k] - v[k] + d[k]));
            for z in 0..n {
                let mut pz = p[z];
                for (k, &(r, s)) in pairs.iter().enumerate() {
                    if r == z {
                        pz -= v[k] + rb[k];
                    }
                    if s == z {
                        pz += f[k] / t[k];
                    }
                }
                want.push(pz);
            }
            want.extend((0..m).map(|k| f[k] - f[k] / t[k] + v[k] + rb[k]));
            recursion = recursion.max(max_abs_diff(&got.0, &want));
        }
    }
    outcome(
        mismatched == 0 && recursion <= 1e-12,
        format!("{mismatched} matrix mismatches for n in 2..=8, recursion gap {recursion:.2e}"),
    )
}

fn visible(lay: &Layout, x: &StateVector, d: &[f64]) -> StateVector {
    let mut v = x.clone();
    for (w, a) in v.0[lay.waiting()].iter_mut().zip(d) {
        *w += a;
    }
    v
}

fn c6_equilibrium() -> Outcome {
    let steps = vec![2, 3, 2, 2, 3, 2, 1, 2, 3, 2, 2, 1];
    let net = CompleteNetwork::from_links(4, steps, vec![1.0; 12]).unwrap();
    // Unbalanced rates in eighths, so the reference rebalances.
    let lambda: Vec<f64> = [3, 1, 0, 2, 4, 1, 1, 0, 2, 5, 1, 3].iter().map(|&k| k as f64 / 8.0).collect();
    let model = build_lti(&net);
    let lay = *model.layout();
    let (mut dv, mut dq): (f64, f64) = (0.0, 0.0);
    let mut parts = Vec::new();
    for c in MPC {
        let (cost, kind) = c.mpc_kinds().unwrap();
        let m_min = solve_reference(&net, &lambda, kind, 0.0).unwrap().m_min;
        let reference = solve_reference(&net, &lambda, kind, m_min + 8.0).unwrap();
        let v_bar = reference.input(&lay);
        let cfg = MpcConfig::new(8, cost, kind);
        let mut x = reference.state(&lay);
        let (mut cv, mut cq): (f64, f64) = (0.0, 0.0);
        for _ in 0..50 {
            let (a, _) = solve_mpc_step(&model, &net, &reference, &visible(&lay, &x, &lambda), &cfg).unwrap();
            let v = InputVector([a.dispatch, a.rebalance].concat());
            cv = cv.max(max_abs_diff(&v.0, &v_bar.0));
            x = step_approx(&model, &x, &v, &lambda).unwrap();
            cq = cq.max(x.waiting(&lay).iter().map(|w| w.abs()).fold(0.0, f64::max));
        }
        parts.push(format!("{c} |v-v̄| {cv:.1e} |W| {cq:.1e}"));
        dv = dv.max(cv);
        dq = dq.max(cq);
    }
    outcome(dv <= 1e-4 && dq <= 1e-4, format!("tol 1e-4; {}", parts.join(", ")))
}

fn c7_stability(runs: &[(Controller, amod::Result<LongRun>)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, r) in runs.iter().filter(|(c, _)| MPC.contains(c)) {
        let Ok(run) = r else {
            pass = false;
            parts.push(format!("{c}: no run"));
            continue;
        };
        let mean = |lo: usize, hi: usize| {
            let rows = &run.report.series[lo..hi];
            rows.iter().map(|s| s.total_waiting as f64).sum::<f64>() / rows.len() as f64
        };
        let (early, late) = (mean(500, 1000), mean(1000, 2000));
        let ok = late <= 1.1 * early;
        pass &= ok;
        parts.push(format!("{c}: {early:.3} -> {late:.3}"));
    }
    let fleet = runs.iter().find_map(|(_, r)| r.as_ref().ok()).map_or(0, |r| r.report.summary.fleet);
    outcome(pass, format!("fleet {fleet}, mean queue 500-1000 -> 1000-2000: {}", parts.join("; ")))
}

fn c8_rounding(runs: &[(Controller, amod::Result<LongRun>)]) -> Outcome {
    let net = CompleteNetwork::from_links(2, vec![1, 1], vec![1.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 100_000;
    let mut worst_sigma: f64 = 0.0;
    for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let action = FractionalAction {
            dispatch: vec![p, 0.0],
            rebalance: vec![0.0, p],
        };
        let (mut up_v, mut up_r) = (0u32, 0u32);
        for _ in 0..draws {
            let a = randomized_round(&net, &action, &[10, 10], &[10, 10], &mut rng);
            up_v += a.dispatch[0];
            up_r += a.rebalance[1];
        }
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        for up in [up_v, up_r] {
            worst_sigma = worst_sigma.max((up as f64 / draws as f64 - p).abs() / sigma);
        }
    }
    let completed = runs.iter().filter(|(_, r)| r.is_ok()).count();
    let repaired: usize = runs.iter().filter_map(|(_, r)| r.as_ref().ok()).map(|r| r.report.summary.repaired_steps).sum();
    outcome(
        worst_sigma <= 3.0 && completed == runs.len(),
        format!(
            "worst deviation {worst_sigma:.2} sigma; {completed}/{} 2000-step runs without InfeasibleAction, {repaired} repaired steps",
            runs.len()
        ),
    )
}

fn c9_ordering() -> Outcome {
    let base = ExperimentConfig::read(&data("experiment.toml")).unwrap();
    let seeds = 1..=5u64;
    let mut pass = true;
    let mut slowest: f64 = 0.0;
    let mut parts = Vec::new();
    for step in [2.0, 3.0] {
        // [controller][seed] of (wait, empty miles).
        let mut table = vec![Vec::new(); Controller::ALL.len()];
        for seed in seeds.clone() {
            let mut hashes = Vec::new();
            for (ci, &c) in Controller::ALL.iter().enumerate() {
                let mut cfg = base.clone().with_seed(seed);
                cfg.step_minutes = step;
                cfg.controller = c;
                let start = Instant::now();
                let report = run_setup(&cfg.load().unwrap()).unwrap();
                slowest = slowest.max(start.elapsed().as_secs_f64());
                hashes.push(report.summary.arrival_hash.clone());
                table[ci].push((report.summary.avg_wait_minutes, report.summary.total_empty_miles));
            }
            assert!(hashes.windows(2).all(|w| w[0] == w[1]), "arrival streams differ for seed {seed}");
        }
        let mean = |ci: usize, f: fn(&(f64, f64)) -> f64| table[ci].iter().map(f).sum::<f64>() / table[ci].len() as f64;
        let wait = |ci| mean(ci, |p| p.0);
        let miles = |ci| mean(ci, |p| p.1);
        let iarr = Controller::ALL.iter().position(|&c| c == Controller::Iarr).unwrap();
        let idx = |c: Controller| Controller::ALL.iter().position(|&x| x == c).unwrap();
        let waits_ok = MPC.iter().all(|&c| wait(idx(c)) < wait(iarr));
        let lref = miles(idx(Controller::LmpcLref));
        let miles_ok = lref < miles(idx(Controller::QmpcQref)) && lref < miles(idx(Controller::LmpcQref));
        pass &= waits_ok && miles_ok;
        let waits: Vec<String> = Controller::ALL.iter().enumerate().map(|(i, c)| format!("{c} {:.4}", wait(i))).collect();
        let mi: Vec<String> = Controller::ALL.iter().enumerate().map(|(i, c)| format!("{c} {:.0}", miles(i))).collect();
        parts.push(format!(
            "{step}-min: (a) {} [wait min: {}] (b) {} [empty mi: {}]",
            if waits_ok { "ok" } else { "fails" },
            waits.join(", "),
            if miles_ok { "ok" } else { "fails" },
            mi.join(", ")
        ));
    }
    pass &= slowest < 300.0;
    parts.push(format!("slowest run {slowest:.1}s"));
    outcome(pass, parts.join("; "))
}

fn c10_iarr() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut optimal, mut worst): (usize, f64) = (0, 0.0);
    for _ in 0..1000 {
        let n = rng.random_range(2..=6);
        let net = random_network(n, 5, &mut rng);
        let m = net.link_count();
        let lay = Layout::new(n);
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0..6) as f64).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        let f: Vec<f64> = (0..m).map(|_| rng.random_range(0..4) as f64).collect();
        let x = lay.state(&w, &p, &f);
        let lambda = random_rates(m, 2.0, &mut rng);
        let a = solve_iarr_step(&net, &x, &lambda).unwrap();
        optimal += usize::from(a.status == SolveStatus::Optimal);
        let fb = iarr_feasible_fallback(&net, &x, &lambda).unwrap();
        worst = worst.max(iarr_residual(&net, &x, &lambda, &fb.point).unwrap());
    }
    outcome(optimal == 1000 && worst <= 1e-9, format!("{optimal}/1000 optimal, fallback residual {worst:.2e}"))
}

fn c11_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut points = Vec::new();
    for n in [3usize, 4, 5, 6, 8] {
        let net = random_network(n, 4, &mut rng);
        let m = net.link_count();
        let lambda = random_rates(m, 0.4, &mut rng);
        let model = build_lti(&net);
        let lay = *model.layout();
        let m_min = solve_reference(&net, &lambda, CostKind::Quadratic, 0.0).unwrap().m_min;
        let reference = solve_reference(&net, &lambda, CostKind::Quadratic, 1.5 * m_min + n as f64).unwrap();
        let cfg = MpcConfig::new(8, CostKind::Quadratic, CostKind::Quadratic);
        let mut times = Vec::new();
        for _ in 0..7 {
            let mut x = visible(&lay, &reference.state(&lay), &lambda);
            for w in &mut x.0[lay.waiting()] {
                *w += rng.random_range(0..3) as f64;
            }
            let (from, to) = (rng.random_range(0..n), rng.random_range(0..n));
            let moved = x.0[lay.idle().start + from].min(2.0);
            x.0[lay.idle().start + from] -= moved;
            x.0[lay.idle().start + to] += moved;
            let start = Instant::now();
            solve_mpc_step(&model, &net, &reference, &x, &cfg).unwrap();
            times.push(start.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        points.push((n as f64, times[times.len() / 2]));
    }
    let k = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(n, t)| (n.ln(), t.ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let medians: Vec<String> = points.iter().map(|(n, t)| format!("n={n} {:.1}ms", t * 1e3)).collect();
    outcome(slope <= 7.0, format!("log-log slope {slope:.2} (envelope 7); {}", medians.join(", ")))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failures += usize::from(!pass);
        println!(
            "criterion {n} ({name}): {} {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };

    let runs = long_runs();
    report(1, "fleet conservation over 2000 steps", &mut || c1_conservation(&runs));
    report(2, "equilibrium fixed point", &mut c2_fixed_point);
    report(3, "zero rebalancing for balanced rates", &mut c3_zero_rebalance);
    report(4, "reference optimality oracles", &mut c4_reference_oracles);
    report(5, "lag model matrices and recursions", &mut c5_matrix_structure);
    report(6, "MPC holds the equilibrium", &mut c6_equilibrium);
    report(7, "queue stability", &mut || c7_stability(&runs));
    report(8, "rounding unbiasedness and feasibility", &mut || c8_rounding(&runs));
    report(9, "comparative ordering", &mut c9_ordering);
    report(10, "IARR optimality and fallback feasibility", &mut c10_iarr);
    report(11, "MPC solve time scaling", &mut c11_scaling);

    println!("{failures} criteria failed");
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
