//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The exit status is zero
//! unless `ACCEPTANCE_STRICT=1` is set, in which case any FAIL line makes
//! the run fail.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use smaspl::executor::Workers;
use smaspl::run::{self, window_input};
use smaspl::scenario::{load_scenario, GridSection, Scenario};
use smaspl::verify::{run_audit, AuditOptions};
use smaspl_core::constraints::{ConstraintKind, Sense};
use smaspl_core::exec::Sequential;
use smaspl_core::grid::{Branch, Bus, GridModel};
use smaspl_core::linalg::{symmetric_eigenvalues, Matrix};
use smaspl_core::networks::feeder98;
use smaspl_core::policy::{FisherFactor, GaussianPolicy, PolicyOutput};
use smaspl_core::powerflow::{solve_power_flow, solve_power_flow_pu, PowerFlowOptions};
use smaspl_core::trainer::PfeVerdict;

struct Outcome {
    pass: bool,
    detail: String,
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scenario(name: &str) -> Scenario {
    load_scenario(&scenario_path(name)).expect("shipped scenario loads")
}

fn rebuild(sc: &Scenario, edit: impl FnOnce(&mut smaspl::scenario::ScenarioFile)) -> Scenario {
    let mut file = sc.file.clone();
    edit(&mut file);
    Scenario::build(file, &scenario_path("")).expect("edited scenario builds")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn derivative_audit() -> Outcome {
    let report = run_audit(&AuditOptions::default());
    let worst = report
        .families
        .iter()
        .map(|f| format!("{} {:.1e}", f.family, f.max_rel_error))
        .collect::<Vec<_>>()
        .join(", ");
    let trials = report.families.iter().map(|f| f.trials).min().unwrap_or(0);
    Outcome {
        pass: report.passed() && report.families.len() >= 6 && trials >= 50,
        detail: format!("{} families, {trials} trials each: {worst}", report.families.len()),
    }
}

/// High-voltage root of `v⁴ + (2(PR + QX) - 1) v² + |z|²|S|² = 0` for the
/// receiving end of a two-bus line, rotated so the sending end is `1∠0`.
fn two_bus_voltage(r: f64, x: f64, p: f64, q: f64) -> (f64, f64) {
    let b = 2.0 * (p * r + q * x) - 1.0;
    let c = (r * r + x * x) * (p * p + q * q);
    let u = (-b + (b * b - 4.0 * c).sqrt()) / 2.0;
    let vm = u.sqrt();
    let (ir, ii) = (p / vm, -q / vm);
    let (v1r, v1i) = (vm + r * ir - x * ii, r * ii + x * ir);
    let ang = -v1i.atan2(v1r);
    (vm * ang.cos(), vm * ang.sin())
}

fn power_flow_fidelity() -> Outcome {
    let opts = PowerFlowOptions::default();
    let sys = feeder98((0.01, 0.02)).expect("98-bus system");
    let p: Vec<f64> = sys.grid.buses().iter().map(|b| b.p_load_kw).collect();
    let q: Vec<f64> = sys.grid.buses().iter().map(|b| b.q_load_kvar).collect();
    let big = match solve_power_flow(&sys.grid, &p, &q, &opts) {
        Ok(s) => s,
        Err(e) => return Outcome { pass: false, detail: format!("98-bus solve failed: {e}") },
    };
    let (r, x, pl, ql) = (0.02, 0.04, 0.6, 0.25);
    let g = GridModel::new(vec![Bus::slack(0), Bus::load(1)], vec![Branch::from_impedance(0, 1, r, x, 10.0)], 100.0, vec![12.66])
        .expect("two-bus grid");
    let small = solve_power_flow_pu(&g, vec![0.0, pl], vec![0.0, ql], &opts).expect("two-bus solve");
    let (vr, vi) = two_bus_voltage(r, x, pl, ql);
    let err = (small.v_re[1] - vr).abs().max((small.v_im[1] - vi).abs());
    Outcome {
        pass: big.mismatch <= 1e-8 && err <= 1e-8,
        detail: format!(
            "{} buses, mismatch {:.2e} after {} iterations; two-bus error {err:.2e}",
            big.n_bus(),
            big.mismatch,
            big.iterations
        ),
    }
}

/// Monte-Carlo `E[s sᵀ]` of the score of a diagonal Gaussian whose mean and
/// variance depend on the parameters through fixed Jacobians.
fn monte_carlo_fisher(out: &PolicyOutput, samples: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pm, pc) = (out.jac_mean.cols(), out.jac_var.cols());
    let mut f = Matrix::zeros(pm + pc, pm + pc);
    let mut s = vec![0.0; pm + pc];
    for _ in 0..samples {
        s.iter_mut().for_each(|v| *v = 0.0);
        for (d, &var) in out.var.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let e = z * var.sqrt();
            let dmu = e / var;
            let dvar = (e * e / var - 1.0) / (2.0 * var);
            for j in 0..pm {
                s[j] += out.jac_mean[(d, j)] * dmu;
            }
            for j in 0..pc {
                s[pm + j] += out.jac_var[(d, j)] * dvar;
            }
        }
        for i in 0..pm + pc {
            for j in 0..pm + pc {
                f[(i, j)] += s[i] * s[j];
            }
        }
    }
    f.scale(1.0 / samples as f64);
    f
}

/// Entrywise error of `h` against `mc`; entries that are zero in theory are
/// measured against the geometric mean of the two diagonals.
fn entrywise_error(h: &Matrix, mc: &Matrix) -> f64 {
    let n = h.rows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let scale = if h[(i, j)].abs() > 1e-12 { h[(i, j)].abs() } else { (h[(i, i)] * h[(j, j)]).sqrt() };
            worst = worst.max((h[(i, j)] - mc[(i, j)]).abs() / scale);
        }
    }
    worst
}

fn fisher_correctness() -> Outcome {
    // Toy A: one action, θ = (θ_μ, θ_Σ). Toy B: two actions, two mean
    // parameters, so the mean block has off-diagonal structure.
    let toy_a = PolicyOutput {
        mean: vec![0.3],
        var: vec![0.5],
        jac_mean: Matrix::from_rows(&[&[1.7]]),
        jac_var: Matrix::from_rows(&[&[0.8]]),
    };
    let toy_b = PolicyOutput {
        mean: vec![0.1, -0.4],
        var: vec![0.3, 0.9],
        jac_mean: Matrix::from_rows(&[&[1.0, 0.5], &[-0.7, 1.2]]),
        jac_var: Matrix::zeros(2, 0),
    };
    let mut detail = Vec::new();
    let mut literal_ok = true;
    let mut uniform_ok = true;
    let mut psd_ok = true;
    for (name, toy, seed) in [("A", &toy_a, 1u64), ("B", &toy_b, 2)] {
        let h = FisherFactor::new(toy, 0.0).to_dense();
        psd_ok &= h.is_symmetric(1e-12) && symmetric_eigenvalues(&h).iter().all(|e| *e >= -1e-8);
        let mc = monte_carlo_fisher(toy, 100_000, seed);
        let pm = toy.jac_mean.cols();
        // The mean block carries a leading 2; scale it back before comparing.
        let literal = Matrix::from_fn(h.rows(), h.cols(), |i, j| if i < pm && j < pm { h[(i, j)] / 2.0 } else { h[(i, j)] });
        let mut uniform = h.clone();
        uniform.scale(0.5);
        let (el, eu) = (entrywise_error(&literal, &mc), entrywise_error(&uniform, &mc));
        literal_ok &= el <= 0.05;
        uniform_ok &= eu <= 0.05;
        detail.push(format!("toy {name}: mean-block/2 err {el:.3}, H/2 err {eu:.3}"));
        if pm < h.rows() {
            detail.push(format!("toy {name}: covariance entry H {:.4} vs MC {:.4}", h[(pm, pm)], mc[(pm, pm)]));
        }
    }
    detail.push(format!("symmetric PSD {psd_ok}; whole H is 2x the sampled FIM: {uniform_ok}"));
    Outcome { pass: literal_ok && psd_ok, detail: detail.join("; ") }
}

fn dg_row(sc: &Scenario, mg: usize) -> (usize, f64) {
    let env = sc.environment().expect("environment");
    let r = env.table.find(ConstraintKind::DgP, Sense::Upper, mg).expect("dg-p row");
    (r.id, r.bound)
}

fn constraint_safety() -> Outcome {
    let sc = scenario("two-mg.toml");
    let upl = rebuild(&sc, |f| {
        f.training.mode = smaspl::scenario::ModeEntry::UPl;
    });
    let (id, bound) = dg_row(&sc, 0);
    let safe = run::train(&sc, None, &Sequential).expect("SMAS-PL run");
    let loose = run::train(&upl, None, &Sequential).expect("U-PL run");
    let (js, ju) = (safe.logs.last().unwrap().returns[id], loose.logs.last().unwrap().returns[id]);
    Outcome {
        pass: js <= bound + 1e-3 && ju >= 1.05 * bound,
        detail: format!("bound {bound:.3}; SMAS-PL {js:.3}; U-PL {ju:.3} ({:+.1}%)", 100.0 * (ju / bound - 1.0)),
    }
}

fn lambda_dynamics() -> Outcome {
    let binding = scenario("five-mg-line.toml");
    let feasible = rebuild(&binding, |f| {
        if let GridSection::Chain { trunk_i_max_a, .. } = &mut f.grid {
            *trunk_i_max_a = 45.6;
        }
    });
    let first = |sc: &Scenario| {
        let sc = rebuild(sc, |f| f.training.episodes = 1);
        run::train(&sc, None, &Sequential).expect("training").logs.remove(0)
    };

    let log = first(&feasible);
    let settle = log.lambda_trace.iter().position(|k| k.iter().flatten().all(|v| *v < 1e-4));
    let feasible_ok = settle.is_some();

    let log = first(&binding);
    let env = binding.environment().expect("environment");
    let row = env.table.find(ConstraintKind::BranchCurrent, Sense::Upper, 0).expect("trunk row");
    let g = env.table.global().iter().position(|&id| id == row.id).expect("global row");
    let lam: Vec<f64> = log.lambda.iter().map(|l| l[g]).collect();
    let (lo, hi) = lam.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let mean = lam.iter().sum::<f64>() / lam.len() as f64;
    let spread = (hi - lo) / mean;
    let binding_ok = log.converged && spread <= 0.01 && lo > 1e-3;
    Outcome {
        pass: feasible_ok && binding_ok,
        detail: format!(
            "feasible: all λ < 1e-4 from iteration {}; binding ({} agents): λ in [{lo:.4}, {hi:.4}], spread {:.3}%, stop after {} iterations, stop test met: {}",
            settle.map_or("never".into(), |k| (k + 1).to_string()),
            lam.len(),
            100.0 * spread,
            log.iterations,
            log.converged
        ),
    }
}

fn backtracking_efficacy() -> Outcome {
    // Unconstrained training drifts just past the DG cap; dispatch the
    // resulting policies with the full constraint set.
    let base = scenario("two-mg.toml");
    let drift = rebuild(&base, |f| {
        f.training.mode = smaspl::scenario::ModeEntry::UPl;
        f.training.episodes = 11;
    });
    let policies = run::train(&drift, None, &Sequential).expect("drift run").trainer.policies().to_vec();
    let gate = rebuild(&base, |f| f.training.delta = 0.2);
    let strict = rebuild(&gate, |f| f.training.backtracking = false);
    let mut ok = true;
    let mut rows = Vec::new();
    for start in [40, 44, 48, 52, 56] {
        let with = run::dispatch(&gate, policies.clone(), start, None, &Sequential).expect("dispatch");
        let without = run::dispatch(&strict, policies.clone(), start, None, &Sequential).expect("dispatch");
        let repaired = matches!(with.dispatch.verdict, PfeVerdict::Repaired { rounds } if rounds <= 2);
        let left = matches!(without.dispatch.verdict, PfeVerdict::Violated { .. });
        ok &= repaired && left;
        rows.push(format!("step {start}: τ=0.9 {} / τ=1 {}", run::verdict_label(&with.dispatch.verdict), run::verdict_label(&without.dispatch.verdict)));
    }
    Outcome { pass: ok, detail: rows.join("; ") }
}

fn near_oracle() -> Outcome {
    let sc = scenario("tiny-oracle.toml");
    let start = sc.training().start_step;
    let oracle = match run::oracle(&sc, start, [9, 3, 3, 3, 3, 3], &Sequential) {
        Ok(o) => o,
        Err(e) => return Outcome { pass: false, detail: format!("oracle failed: {e}") },
    };
    let trained = run::train(&sc, None, &Sequential).expect("training");
    let d = run::dispatch(&sc, trained.trainer.policies().to_vec(), start, None, &Sequential).expect("dispatch");
    let env = sc.environment().expect("environment");
    let prev = vec![sc.training().initial_dg_kw; sc.specs.len()];
    let ev = env.evaluate(&d.dispatch.actions, &sc.profiles.window(start, 1), &prev, false).expect("evaluation");
    let cost = -ev.rewards.iter().sum::<f64>();
    let gap = (cost - oracle.cost) / oracle.cost.abs();
    let feasible = !matches!(d.dispatch.verdict, PfeVerdict::Violated { .. });
    Outcome {
        pass: gap <= 0.10 && feasible,
        detail: format!(
            "oracle {:.4} over {} points; SMAS-PL {cost:.4} ({}), gap {:+.2}%",
            oracle.cost,
            oracle.evaluated,
            run::verdict_label(&d.dispatch.verdict),
            100.0 * gap
        ),
    }
}

/// Total reward of the final mean policies on the exact network, on the
/// fixture's training window.
fn clean_reward(sc: &Scenario, policies: &[GaussianPolicy]) -> f64 {
    let trainer = run::build_trainer(sc, Some(policies.to_vec())).expect("trainer");
    let start = run::episode_start(sc, 0);
    let input = window_input(sc, start, vec![sc.training().initial_dg_kw; sc.specs.len()], &[0x20]);
    let actions = trainer.mean_actions(&input.states).expect("mean actions");
    let env = sc.environment().expect("environment");
    env.evaluate(&actions, &input.window, &input.prev_dg, false).expect("evaluation").rewards.iter().sum()
}

fn bad_data() -> Outcome {
    let clean = scenario("two-mg.toml");
    let noisy = rebuild(&clean, |f| f.training.network_noise = 0.1);
    let a = run::train(&clean, None, &Sequential).expect("clean run");
    let b = run::train(&noisy, None, &Sequential).expect("noisy run");
    let (ra, rb) = (clean_reward(&clean, a.trainer.policies()), clean_reward(&clean, b.trainer.policies()));
    let converged = b.logs.iter().filter(|l| l.converged).count();
    let last = b.logs.last().unwrap().converged;
    Outcome {
        pass: last && rel(rb, ra) <= 0.15,
        detail: format!(
            "final reward clean {ra:.6}, noisy {rb:.6} ({:+.4}%); noisy inner loops converged {converged}/{}",
            100.0 * (rb - ra) / ra.abs(),
            b.logs.len()
        ),
    }
}

fn determinism() -> Outcome {
    let sc = scenario("two-mg.toml");
    let dir = tempfile::tempdir().expect("temp dir");
    let read = |sub: &str, workers: &Workers| {
        let out = dir.path().join(sub);
        run::train(&sc, Some(&out), workers).expect("training");
        std::fs::read(out.join(smaspl::log::LOG_FILE)).expect("log")
    };
    let seq = Workers::with_threads(0);
    let a = read("a", &seq);
    let b = read("b", &seq);
    let c = read("c", &Workers::with_threads(4));
    Outcome {
        pass: a == b && a == c,
        detail: format!("{} bytes; sequential reruns identical {}; 4 threads identical {}", a.len(), a == b, a == c),
    }
}

type Check = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Check; 9] = [
        ("derivative audit", derivative_audit, Duration::from_secs(120)),
        ("power-flow fidelity", power_flow_fidelity, Duration::from_secs(10)),
        ("FIM correctness", fisher_correctness, Duration::from_secs(60)),
        ("constraint-safety separation", constraint_safety, Duration::from_secs(300)),
        ("λ dynamics", lambda_dynamics, Duration::from_secs(300)),
        ("backtracking efficacy", backtracking_efficacy, Duration::from_secs(120)),
        ("near-oracle optimality", near_oracle, Duration::from_secs(600)),
        ("bad-data robustness", bad_data, Duration::from_secs(600)),
        ("determinism", determinism, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let clock = Instant::now();
        let out = check();
        let took = clock.elapsed();
        let pass = out.pass && took <= limit;
        failed += usize::from(!pass);
        println!(
            "{} criterion {} ({name}): {} [{:.1}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
