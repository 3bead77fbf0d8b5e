//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use secgame::best_response::best_response_solve;
use secgame::pc::{self, SolverConfig};
use secgame::scenarios::{
    experiment1, experiment2, experiment3, experiment4, experiment5, reconcile, reference, run_sweep, Series, Solved,
    SweepResult,
};
use secgame::verify::verify_equilibrium;
use secgame::vi::{fd_check, random_interior_points, AffineVi, ViProblem};

// Criterion 1
const EXP1_U: [f64; 2] = [0.96, 0.95];
const EXP1_U_TOL: f64 = 0.02;
const EXP1_RUNTIME: Duration = Duration::from_secs(10);
const LEVEL_ORACLE_TOL: f64 = 1e-6;
// Criteria 2 and 6
const RESIDUAL_TOL: f64 = 1e-7;
const COMPLEMENTARITY_TOL: f64 = 1e-6;
const FEASIBILITY_TOL: f64 = 1e-8;
const VERIFY_GRID: usize = 50;
const VERIFY_TOL: f64 = 1e-3;
// Criterion 3
const EXP3_U1_AT_120: f64 = 0.951;
const EXP3_U1_AT_200: f64 = 0.962;
const EXP3_U_TOL: f64 = 0.01;
const EXP3_CROSSING: f64 = 137.0;
const EXP3_CROSSING_TOL: f64 = 5.0;
const EXP3_RUNTIME: Duration = Duration::from_secs(60);
// Criterion 4
const TREND_SLACK: f64 = 1e-4;
const EXP2_CROSSING: f64 = 3.06;
const EXP2_CROSSING_TOL: f64 = 0.15;
const BUDGET_TRACK_TOL: f64 = 0.01;
// Criterion 7
const FD_POINTS: usize = 100;
const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-6;
const FD_LITERAL_FAIL: f64 = 1e-5;
// Criterion 8
const AFFINE_DIM: usize = 10;
const AFFINE_TOL: f64 = 1e-6;
const AFFINE_MAX_ITER: usize = 5000;
const FEJER_SLACK: f64 = 1e-10;
// Criterion 9
const CROSS_SOLVER_TOL: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = Result<Outcome, String>;
type Run = (&'static str, Vec<String>, Vec<String>);
type Criterion = (&'static str, fn() -> Check);

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `1/(1-u_x) = D_x mu_x [(1 - u_bar) + (1 - u_x)/m] + sum_k gamma_k/m Q_xk`,
/// evaluated directly from the parameters.
fn level_oracle_residual(s: &Solved) -> f64 {
    let model = s.problem.model();
    let (m, n) = (model.m(), model.n());
    let u = &s.decision.u;
    let ubar = u.iter().sum::<f64>() / m as f64;
    (0..m)
        .map(|x| {
            let r = &model.retailers[x];
            let lhs = 1.0 / (1.0 - u[x]);
            let loss = r.base_loss * r.attack_multiplier * ((1.0 - ubar) + (1.0 - u[x]) / m as f64);
            let price: f64 = (0..n)
                .map(|y| model.markets[y].gamma / m as f64 * s.decision.q[x * n + y])
                .sum();
            (lhs - loss - price).abs()
        })
        .fold(0.0, f64::max)
}

fn equilibrium_checks(s: &Solved, label: &str) -> Check {
    let v = verify_equilibrium(s.problem.model(), &s.decision, VERIFY_GRID).map_err(err)?;
    let residual = s.report.final_residual;
    let slack = s.max_complementarity();
    let gap = s.max_budget_gap();
    let pass = s.report.converged
        && residual <= RESIDUAL_TOL
        && slack <= COMPLEMENTARITY_TOL
        && gap <= FEASIBILITY_TOL
        && v.max_improvement <= VERIFY_TOL;
    Ok(outcome(
        pass,
        format!(
            "{label}: residual {residual:.2e}, max lambda|G| {slack:.2e}, max G {gap:.3}, grid-{VERIFY_GRID} improvement {:.2e}",
            v.max_improvement
        ),
    ))
}

fn criterion1() -> Check {
    let start = Instant::now();
    let s = experiment1().solve().map_err(err)?;
    let elapsed = start.elapsed();
    let u = &s.decision.u;
    let levels_ok = u.iter().zip(EXP1_U).all(|(a, b)| (a - b).abs() <= EXP1_U_TOL);
    let oracle = level_oracle_residual(&s);
    let multipliers_zero = s.decision.lambda.iter().all(|&l| l <= COMPLEMENTARITY_TOL);
    let pass =
        s.report.converged && levels_ok && oracle <= LEVEL_ORACLE_TOL && multipliers_zero && elapsed < EXP1_RUNTIME;
    Ok(outcome(
        pass,
        format!(
            "exp1 u = ({:.4}, {:.4}) vs ({}, {}) +- {EXP1_U_TOL}; level oracle residual {oracle:.2e}; {:.1} ms",
            u[0],
            u[1],
            EXP1_U[0],
            EXP1_U[1],
            elapsed.as_secs_f64() * 1e3
        ),
    ))
}

fn criterion2() -> Check {
    let s = experiment1().solve().map_err(err)?;
    let mut out = equilibrium_checks(&s, "exp1")?;
    let reference = reference("exp1").ok_or("no exp1 reference")?;
    let text = reconcile(reference, &s).map_err(err)?.to_string();
    let reports_both = reference.q.unwrap().iter().all(|q| text.contains(&format!("{q:.4}")))
        && s.decision.q.iter().all(|q| text.contains(&format!("{q:.4}")));
    out.pass &= reports_both;
    out.detail.push_str(if reports_both {
        "; reconciliation lists reference and computed quantities"
    } else {
        "; reconciliation output incomplete"
    });
    Ok(out)
}

fn level_at(result: &SweepResult, param: f64, x: usize) -> Option<f64> {
    result
        .rows
        .iter()
        .find(|r| (r.param - param).abs() < 1e-9 && r.converged)
        .map(|r| r.u[x])
}

fn criterion3() -> Check {
    let start = Instant::now();
    let result = run_sweep(&experiment3()).map_err(err)?;
    let elapsed = start.elapsed();
    let lo = level_at(&result, 120.0, 0).ok_or("D1 = 120 row missing or unconverged")?;
    let hi = level_at(&result, 200.0, 0).ok_or("D1 = 200 row missing or unconverged")?;
    let crossing = result.crossing(Series::Level(0), Series::Level(1)).map_err(err)?;
    let ends_ok = (lo - EXP3_U1_AT_120).abs() <= EXP3_U_TOL && (hi - EXP3_U1_AT_200).abs() <= EXP3_U_TOL;
    let crossing_ok = crossing.is_some_and(|c| (c - EXP3_CROSSING).abs() <= EXP3_CROSSING_TOL);
    let diff: Vec<f64> = result.rows.iter().map(|r| r.u[0] - r.u[1]).collect();
    let crossing_text = match crossing {
        Some(c) => format!("u1=u2 at D1 {c:.2}"),
        None => format!(
            "no u1=u2 crossing on [120, 200] (u1 - u2 from {:.5} to {:.5})",
            diff.iter().cloned().fold(f64::INFINITY, f64::min),
            diff.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        ),
    };
    Ok(outcome(
        ends_ok && crossing_ok && elapsed < EXP3_RUNTIME,
        format!(
            "u1(120) = {lo:.4}, u1(200) = {hi:.4} (targets {EXP3_U1_AT_120}, {EXP3_U1_AT_200} +- {EXP3_U_TOL}); \
             {crossing_text}, target {EXP3_CROSSING} +- {EXP3_CROSSING_TOL}; {} points in {:.2} s",
            result.rows.len(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn nondecreasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] - slack)
}

fn nonincreasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + slack)
}

fn criterion4() -> Check {
    let result = run_sweep(&experiment2()).map_err(err)?;
    let all_converged = result.rows.iter().all(|r| r.converged);
    let u1 = result.series(Series::Level(0));
    let u2 = result.series(Series::Level(1));
    let crossing = result.crossing(Series::Level(0), Series::Level(1)).map_err(err)?;
    let crossing_ok = crossing.is_some_and(|c| (c - EXP2_CROSSING).abs() <= EXP2_CROSSING_TOL);
    let binding: Vec<_> = result
        .rows
        .iter()
        .filter(|r| r.lambda[0] > 0.0 || r.budget_gaps[0].abs() <= 1e-6)
        .collect();
    let tracking = binding
        .iter()
        .map(|r| (r.u[0] - (1.0 - (-r.param).exp())).abs())
        .fold(0.0, f64::max);
    let pass = all_converged
        && result.rows.len() == 31
        && nondecreasing(&u1, TREND_SLACK)
        && nonincreasing(&u2, TREND_SLACK)
        && crossing_ok
        && !binding.is_empty()
        && tracking <= BUDGET_TRACK_TOL;
    Ok(outcome(
        pass,
        format!(
            "u1 nondecreasing {}, u2 nonincreasing {}; crossing {} (target {EXP2_CROSSING} +- {EXP2_CROSSING_TOL}); \
             {} budget-binding rows track 1 - exp(-B1) within {tracking:.2e}",
            nondecreasing(&u1, TREND_SLACK),
            nonincreasing(&u2, TREND_SLACK),
            crossing.map_or("none".into(), |c| format!("B1 = {c:.4}")),
            binding.len()
        ),
    ))
}

fn criterion5() -> Check {
    let result = run_sweep(&experiment4()).map_err(err)?;
    let u1 = result.series(Series::Level(0));
    let u2 = result.series(Series::Level(1));
    let strictly_up = u1.windows(2).all(|w| w[1] > w[0]);
    let down = nonincreasing(&u2, TREND_SLACK);
    let shares_ok = result.rows.iter().all(|r| r.converged);
    Ok(outcome(
        strictly_up && down && shares_ok,
        format!(
            "t1 0.55..0.89 with t2 = 1 - t1: u1 {:.4} -> {:.4} strictly increasing {strictly_up}; u2 {:.4} -> {:.4} nonincreasing {down}",
            u1[0],
            u1[u1.len() - 1],
            u2[0],
            u2[u2.len() - 1]
        ),
    ))
}

fn criterion6() -> Check {
    let s = experiment5().solve().map_err(err)?;
    let mut out = equilibrium_checks(&s, "exp5")?;
    let r = reference("exp5").ok_or("no exp5 reference")?;
    out.detail.push_str(&format!(
        "; unreconciled reference levels ({}) u_bar {} vs computed ({}) u_bar {:.4}",
        r.u.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(", "),
        r.mean_level,
        s.decision
            .u
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
        s.mean_level
    ));
    Ok(out)
}

fn fd_worst(problem: &ViProblem) -> Result<(f64, usize), String> {
    let mut worst = (0.0, 0);
    for x in random_interior_points(problem, FD_POINTS, 1e-3, 0) {
        let r = fd_check(problem, &x, FD_STEP).map_err(err)?;
        if r.max_rel_error > worst.0 {
            worst = (r.max_rel_error, r.worst_index);
        }
    }
    Ok(worst)
}

fn criterion7() -> Check {
    let mut parts = Vec::new();
    let mut pass = true;
    for s in [experiment1(), experiment5()] {
        let p = ViProblem::new(s.model.clone()).map_err(err)?;
        let (e, _) = fd_worst(&p)?;
        pass &= e < FD_TOL;
        parts.push(format!("{} max rel err {e:.2e}", s.name));
    }
    let mut literal = experiment1().model;
    literal.loss_gradient_includes_multiplier = false;
    let p = ViProblem::new(literal).map_err(err)?;
    let (e, idx) = fd_worst(&p)?;
    let on_level = idx >= p.m() * p.n();
    pass &= e > FD_LITERAL_FAIL && on_level;
    parts.push(format!(
        "literal variant {e:.2e} at {} (must exceed {FD_LITERAL_FAIL:e})",
        secgame::vi::component_name(p.m(), p.n(), idx)
    ));
    Ok(outcome(
        pass,
        format!("{} points, step {FD_STEP:e}: {}", FD_POINTS, parts.join("; ")),
    ))
}

fn criterion8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = AFFINE_DIM;
    let b: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = (0..d).map(|k| b[k * d + i] * b[k * d + j]).sum();
        }
        a[i * d + i] += 0.5;
    }
    // Planted solution: interior, lower and upper components with matching
    // operator signs.
    let x_star: Vec<f64> = (0..d).map(|i| [0.0, 10.0, 2.5, 6.0, 9.0][i % 5]).collect();
    let slack: Vec<f64> = (0..d).map(|i| [1.5, -2.0, 0.0, 0.0, 0.0][i % 5]).collect();
    let offset: Vec<f64> = (0..d)
        .map(|i| slack[i] - (0..d).map(|j| a[i * d + j] * x_star[j]).sum::<f64>())
        .collect();
    let vi = AffineVi::new(a, offset, vec![0.0; d], vec![10.0; d]).map_err(err)?;
    let mut distances = Vec::new();
    let report = pc::solve_observed(&vi, &SolverConfig::default(), &vec![5.0; d], |_, x| {
        distances.push(x.iter().zip(&x_star).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt());
    })
    .map_err(err)?;
    let error = max_abs_diff(&report.solution, &x_star);
    let worst_rise = distances
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let pass =
        report.converged && error <= AFFINE_TOL && report.iterations < AFFINE_MAX_ITER && worst_rise <= FEJER_SLACK;
    Ok(outcome(
        pass,
        format!(
            "10-D affine VI: |X - X*|inf = {error:.2e} after {} iterations; largest distance increase {worst_rise:.2e}",
            report.iterations
        ),
    ))
}

fn criterion9() -> Check {
    let s = experiment1();
    let joint = s.solve().map_err(err)?;
    let problem = s.problem().map_err(err)?;
    let br = best_response_solve(&problem, &s.solver, &s.initial.to_flat()).map_err(err)?;
    let k = problem.m() * problem.n() + problem.m();
    let diff = max_abs_diff(&br.solution[..k], &joint.report.solution[..k]);
    Ok(outcome(
        br.converged && diff <= CROSS_SOLVER_TOL,
        format!(
            "best response ({} sweeps) vs joint solve on (Q, u): max difference {diff:.2e}",
            br.iterations
        ),
    ))
}

fn run_cli(args: &[&str]) -> Result<(i32, Vec<u8>), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_secgame"))
        .args(args)
        .env_remove("SECGAME_THREADS")
        .output()
        .map_err(err)?;
    Ok((o.status.code().unwrap_or(-1), o.stdout))
}

fn criterion10() -> Check {
    let dir = tempfile::TempDir::new().map_err(err)?;
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let runs: Vec<Run> = vec![
        (
            "solve exp1",
            vec![
                "solve".into(),
                "exp1".into(),
                "--out".into(),
                path("s1.csv"),
                "--trace".into(),
                path("t1.csv"),
            ],
            vec![path("s1.csv"), path("t1.csv")],
        ),
        (
            "solve exp5",
            vec!["solve".into(), "exp5".into(), "--out".into(), path("s5.csv")],
            vec![path("s5.csv")],
        ),
        (
            "sweep exp2",
            vec!["sweep".into(), "exp2".into(), "--out".into(), path("e2.csv")],
            vec![path("e2.csv")],
        ),
        (
            "sweep exp3",
            vec!["sweep".into(), "exp3".into(), "--out".into(), path("e3.csv")],
            vec![path("e3.csv")],
        ),
        (
            "sweep exp4",
            vec!["sweep".into(), "exp4".into(), "--out".into(), path("e4.csv")],
            vec![path("e4.csv")],
        ),
        (
            "sweep exp4 --cold",
            vec![
                "sweep".into(),
                "exp4".into(),
                "--cold".into(),
                "--out".into(),
                path("c4.csv"),
            ],
            vec![path("c4.csv")],
        ),
        (
            "verify exp1",
            vec!["verify".into(), "exp1".into(), "--grid".into(), "20".into()],
            vec![],
        ),
        (
            "gradcheck exp1",
            vec!["gradcheck".into(), "exp1".into(), "--points".into(), "20".into()],
            vec![],
        ),
    ];
    let mut mismatched = Vec::new();
    for (label, args, files) in &runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let mut snapshots = Vec::new();
        for _ in 0..2 {
            let (code, stdout) = run_cli(&args)?;
            let mut bytes = vec![stdout];
            for f in files {
                bytes.push(fs::read(f).map_err(|e| format!("{label}: {f}: {e}"))?);
            }
            snapshots.push((code, bytes));
        }
        if snapshots[0] != snapshots[1] {
            mismatched.push(*label);
        }
    }
    Ok(outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} commands repeated twice, outputs byte-identical", runs.len())
        } else {
            format!("outputs differ for: {}", mismatched.join(", "))
        },
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("security levels (exp1)", criterion1),
        ("equilibrium quality and reconciliation (exp1)", criterion2),
        ("attack-loss sweep (exp3)", criterion3),
        ("budget sweep (exp2)", criterion4),
        ("market-share sweep (exp4)", criterion5),
        ("three retailers (exp5)", criterion6),
        ("operator against finite differences", criterion7),
        ("solver on a verifiable affine instance", criterion8),
        ("cross-solver agreement", criterion9),
        ("determinism", criterion10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail}",
            if pass { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
