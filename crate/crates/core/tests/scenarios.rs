use proptest::prelude::*;

use secgame::config::{parse_scenario, to_json};
use secgame::scenarios::{
    builtin, builtin_sweep, experiment1, experiment4, experiment5, find_crossing, reconcile, reference, run_sweep,
    Series, ShareCoupling, SweepParam, SweepSpec, BUILTIN_SCENARIOS, BUILTIN_SWEEPS,
};
use secgame::vi::{BUDGET_FEASIBILITY_TOL, COMPLEMENTARITY_TOL};

#[test]
fn builtin_parameters() {
    let e1 = experiment1();
    let r = &e1.model.retailers;
    assert!((r[0].budget - 5.28).abs() < 1e-12 && (r[1].budget - 3.72).abs() < 1e-12);
    assert!((r[0].base_loss - 176.0).abs() < 1e-12 && (r[1].base_loss - 124.0).abs() < 1e-12);
    assert!((r[0].handling_cost - 17.6).abs() < 1e-12);

    let e5 = experiment5();
    let r3 = &e5.model.retailers[2];
    assert!((r3.budget - 3.27).abs() < 1e-12);
    assert!((r3.base_loss - 109.0).abs() < 1e-12);
    let shares: f64 = e5.model.retailers.iter().map(|r| r.market_share).sum();
    assert!((shares - 1.0).abs() < 1e-12);
}

#[test]
fn every_builtin_round_trips_through_json() {
    for name in BUILTIN_SCENARIOS {
        let s = builtin(name).unwrap();
        let text = to_json(&s);
        let back = parse_scenario(&text, name).unwrap();
        assert_eq!(back, s);
        assert_eq!(to_json(&back), text);
    }
    for name in BUILTIN_SWEEPS {
        let base = builtin_sweep(name).unwrap().base;
        assert_eq!(parse_scenario(&to_json(&base), &base.name).unwrap(), base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbed_models_round_trip_bit_exactly(
        scale in prop::collection::vec(0.5..2.0f64, 6),
        tol in 1e-12..1e-3f64,
        flag in any::<bool>(),
    ) {
        let mut s = experiment5();
        for (r, k) in s.model.retailers.iter_mut().zip(&scale) {
            r.budget *= k;
            r.base_loss *= k;
            r.costs[0].a *= k;
        }
        s.model.markets[0].gamma *= scale[3];
        s.model.markets[1].kappa *= scale[4];
        s.initial.u = vec![0.1 * scale[5]; 3];
        s.solver.tol = tol;
        s.model.loss_gradient_includes_multiplier = flag;
        let back = parse_scenario(&to_json(&s), &s.name).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn reconciliation_reports_both_value_sets() {
    let solved = experiment1().solve().unwrap();
    let rec = reconcile(reference("exp1").unwrap(), &solved).unwrap();
    let text = rec.to_string();
    assert!(text.contains("10.9400") && text.contains("31.7300"));
    assert!(text.contains(&format!("{:.4}", solved.decision.u[0])));
    // The reference quantities are far from stationary.
    let op = rec.reference_operator.unwrap();
    assert!(op[..4].iter().any(|v| v.abs() > 10.0));
    // Level component for retailer 1 at the reference point.
    assert!((op[4] - (-2.28)).abs() < 0.01, "{}", op[4]);

    let solved5 = experiment5().solve().unwrap();
    let rec5 = reconcile(reference("exp5").unwrap(), &solved5).unwrap();
    assert!(rec5.reference_operator.is_none());
    assert!(rec5.to_string().contains("0.5730"));
}

#[test]
fn share_sweep_trends_and_row_invariants() {
    let result = run_sweep(&experiment4()).unwrap();
    assert_eq!(result.rows.len(), 18);
    let u1 = result.series(Series::Level(0));
    let u2 = result.series(Series::Level(1));
    assert!(result.rows.iter().all(|r| r.converged));
    for i in 1..u1.len() {
        assert!(u1[i] > u1[i - 1]);
        assert!(u2[i] <= u2[i - 1] + 1e-4);
    }
    for r in &result.rows {
        assert!(r.residual <= 1e-7);
        assert!(r.budget_gaps.iter().all(|&g| g <= BUDGET_FEASIBILITY_TOL));
        let slack = r
            .lambda
            .iter()
            .zip(&r.budget_gaps)
            .map(|(l, g)| l * g.abs())
            .fold(0.0, f64::max);
        assert!(slack <= COMPLEMENTARITY_TOL);
    }
    let params = result.params();
    assert!(params.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn complement_coupling_keeps_duopoly_shares_summing_to_one() {
    let base = experiment1().model;
    let p: SweepParam = "t1".parse().unwrap();
    let m = p.apply(&base, 0.6, ShareCoupling::Complement).unwrap();
    assert!((m.retailers[1].market_share - 0.4).abs() < 1e-15);
    assert!((m.retailers[0].budget - 3.0 * 1.6).abs() < 1e-12);
    assert!((m.retailers[1].base_loss - 140.0).abs() < 1e-12);
    let m = p.apply(&base, 0.6, ShareCoupling::None).unwrap();
    assert_eq!(m.retailers[1], base.retailers[1]);
}

#[test]
fn warm_and_cold_sweeps_agree() {
    let mut spec = SweepSpec::new(experiment1(), "D1".parse().unwrap(), 120.0, 200.0, 9);
    let warm = run_sweep(&spec).unwrap();
    spec.warm_start = false;
    spec.threads = Some(2);
    let cold = run_sweep(&spec).unwrap();
    assert_eq!(warm.params(), cold.params());
    for (a, b) in warm.rows.iter().zip(&cold.rows) {
        assert!(a.converged && b.converged);
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }
    // Parallel results do not depend on scheduling.
    assert_eq!(run_sweep(&spec).unwrap(), cold);
}

#[test]
fn degenerate_sweep_rows_match() {
    let spec = SweepSpec::new(experiment1(), "B1".parse().unwrap(), 5.28, 5.28 + 1e-12, 2);
    let r = run_sweep(&spec).unwrap();
    assert_eq!(r.rows.len(), 2);
    for (a, b) in r.rows[0].u.iter().zip(&r.rows[1].u) {
        assert!((a - b).abs() <= 1e-7);
    }
}

#[test]
fn invalid_sweeps_are_rejected() {
    let p: SweepParam = "B1".parse().unwrap();
    assert!(run_sweep(&SweepSpec::new(experiment1(), p, 3.0, 2.0, 5)).is_err());
    assert!(run_sweep(&SweepSpec::new(experiment1(), p, 2.0, 3.0, 1)).is_err());
    let p3: SweepParam = "B3".parse().unwrap();
    assert!(run_sweep(&SweepSpec::new(experiment1(), p3, 2.0, 3.0, 2)).is_err());
    for bad in ["", "B", "X1", "B0", "mu"] {
        assert!(bad.parse::<SweepParam>().is_err(), "{bad}");
    }
    assert_eq!("mu2".parse::<SweepParam>().unwrap().to_string(), "mu2");
}

#[test]
fn crossing_edge_cases() {
    let p = [0.0, 1.0, 2.0];
    assert_eq!(find_crossing(&p, &[1.0; 3], &[1.0; 3], &[true; 3]).unwrap(), None);
    assert_eq!(
        find_crossing(&p, &[0.0, 1.0, 2.0], &[1.5; 3], &[true; 3]).unwrap(),
        Some(1.5)
    );
    assert_eq!(
        find_crossing(&p, &[0.0, 1.0, 2.0], &[1.5; 3], &[false; 3]).unwrap(),
        None
    );
    assert!(find_crossing(&p, &[0.0; 2], &[0.0; 3], &[true; 3]).is_err());
}

#[test]
fn sweep_csv_layout() {
    let spec = SweepSpec::new(experiment1(), "B1".parse().unwrap(), 4.0, 5.0, 2);
    let r = run_sweep(&spec).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "param,u_1,u_2,Q_1_1,Q_1_2,Q_2_1,Q_2_2,lambda_1,lambda_2,EU_1,EU_2,residual,iters,converged"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 14);
    assert_eq!(first[0], "4");
    assert_eq!(first[13], "true");
    assert_eq!(first[1].parse::<f64>().unwrap(), r.rows[0].u[0]);
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
}
