use g2soliton::analysis::{
    check_preserved_regions, check_scaling_symmetry, classification_config, classify_end, classify_steady,
    classify_steady_params, cone_linearization, conservation_report, find_boundary, fit_rate, integrate,
    integrate_closure, poly_fixed_points, IntegratorConfig,
};
use g2soliton::closure::{build_series, seed_point, series_residual};
use g2soliton::domain::{rescale, to_poly, ClosureParams, EndClassification, EventKind, Termination};
use g2soliton::oracles::{explicit_shrinker, explicit_steady};
use g2soliton::precise::{integrate_closure_extended, TaylorSettings};
use g2soliton::systems::rhs_mixed_order_residual;
use g2soliton::Error;

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn dense(t_max: f64, dt: f64) -> IntegratorConfig {
    IntegratorConfig { t_max, output_dt: Some(dt), stop_on_exponential_end: false, ..IntegratorConfig::default() }
}

#[test]
fn steady_closure_seed_reproduces_explicit_solution_at_t10() {
    let params = ClosureParams::su3(0.0, SQRT2, 3.0).unwrap();
    let traj = integrate_closure(&params, 20, Some(0.1), &dense(10.0, 0.5)).unwrap();
    let last = traj.last().unwrap();
    assert_eq!(last.t, 10.0);
    let exact = explicit_steady(10.0).unwrap();
    for i in 0..3 {
        assert!(rel(last.point.f()[i], exact.f[i]) < 1e-6, "f{} {}", i + 1, last.point.f()[i]);
    }
}

#[test]
fn shrinker_reproduced_to_t20_with_extended_arithmetic() {
    let params = ClosureParams::su3(-2.25, 1.0, 0.0).unwrap();
    let times = [5.0, 10.0, 15.0, 20.0];
    let out = integrate_closure_extended(&params, 0.1, &times, &TaylorSettings::extended()).unwrap();
    for (t, p) in out {
        let (q, _, _) = explicit_shrinker(1.0, t).unwrap();
        assert!(rel(p.f()[0], q.f1()) < 1e-6, "t = {t}: f1 {}", p.f()[0]);
        assert!(rel(p.f()[1], q.f2()) < 1e-6, "t = {t}: f2 {}", p.f()[1]);
        assert!(rel(p.f()[2], q.f2()) < 1e-6, "t = {t}: f3 {}", p.f()[2]);
    }
}

#[test]
fn truncated_seed_is_rejected() {
    let params = ClosureParams::su3(-2.25, 1.0, 0.0).unwrap();
    let err = integrate_closure_extended(&params, 0.42, &[1.0], &TaylorSettings::extended()).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)), "{err:?}");
}

#[test]
fn supercritical_steady_blows_up_in_finite_time() {
    let params = ClosureParams::su3(0.0, 1.0, 3.0).unwrap();
    let traj = integrate_closure(&params, 20, None, &classification_config()).unwrap();
    let Termination::BlowUp { t } = traj.termination else {
        panic!("expected blow-up, got {:?}", traj.termination);
    };
    assert!(t.is_finite() && t > 0.0);
    let last = traj.last().unwrap();
    assert!(last.point.f()[2] <= 1e-6, "f3 = {}", last.point.f()[2]);
    assert_eq!(traj.event_times(EventKind::BlowUp), vec![t]);
    assert!(matches!(classify_end(&traj), EndClassification::Incomplete { t_blowup } if t_blowup == t));
}

#[test]
fn end_classification_examples() {
    let cfg = classification_config();
    let (v, traj) = classify_steady(2.0, 3.0, &cfg).unwrap();
    let EndClassification::CompleteAcTorsionFree { rate: Some(r) } = v else { panic!("{v:?}") };
    assert!((r + 1.0).abs() < 0.1, "{r}");
    assert!((fit_rate(&traj).unwrap() - r).abs() < 1e-12);

    let (v, traj) = classify_steady(SQRT2, 3.0, &cfg).unwrap();
    assert_eq!(v, EndClassification::CompleteExponentialEnd);
    let q = to_poly(&traj.last().unwrap().point).big_f;
    assert!((q[0] - 1.0).abs() + (q[1] - 1.0).abs() + q[2].abs() < 0.05, "{q:?}");

    let (v, _) = classify_steady(1.0, 0.0, &cfg).unwrap();
    let EndClassification::CompleteAcTorsionFree { rate: Some(r) } = v else { panic!("{v:?}") };
    assert!((r + 4.0).abs() < 0.4, "{r}");
}

#[test]
fn analytic_threshold_verdicts() {
    assert!(matches!(classify_steady_params(1.0, 2.0).unwrap(), EndClassification::CompleteAcTorsionFree { .. }));
    assert_eq!(classify_steady_params(SQRT2, 3.0).unwrap(), EndClassification::CompleteExponentialEnd);
    assert!(matches!(classify_steady_params(1.0, 3.0).unwrap(), EndClassification::Incomplete { .. }));
    assert!(matches!(classify_steady_params(1.0, -3.0).unwrap(), EndClassification::Incomplete { .. }));
    assert!(classify_steady_params(0.0, 1.0).is_err());
}

#[test]
fn boundary_rejects_non_bracketing_intervals() {
    assert!(matches!(find_boundary(3.0, 1.6, 2.0, 1e-3), Err(Error::NotBracketing(_))));
    assert!(matches!(find_boundary(3.0, 1.6, 1.2, 1e-3), Err(Error::NotBracketing(_))));
}

#[test]
fn boundary_bisection_finds_critical_b() {
    let rep = find_boundary(3.0, 1.2, 1.6, 1e-3).unwrap();
    assert!((rep.estimate - SQRT2).abs() < 1e-3, "{rep:?}");
    assert!(rep.bracket.1 - rep.bracket.0 <= 1e-3);
}

#[test]
fn polynomial_fixed_points_at_c3() {
    let fps = poly_fixed_points(3.0).unwrap();
    assert_eq!(fps.len(), 2);
    assert_eq!(fps[0].location, vec![0.0, 0.0, 0.0]);
    assert!(fps[0].eigenvalues.iter().all(|e| e.0 == 0.0 && e.1 == 0.0));
    assert_eq!(fps[1].location, vec![1.0, 1.0, 0.0]);
    let ev: Vec<f64> = fps[1].eigenvalues.iter().map(|e| e.0).collect();
    assert_eq!(ev.iter().filter(|x| **x < 0.0).count(), 2);
    assert_eq!(ev.iter().filter(|x| **x > 0.0).count(), 1);
    for fp in &fps {
        assert!(fp.rhs_residual <= 1e-12);
    }
    assert!(poly_fixed_points(0.0).is_err());
}

#[test]
fn cone_fast_eigenspace_leaves_torsion_unchanged() {
    let rep = cone_linearization();
    assert!(rep.rhs_residual <= 1e-14);
    let fast: Vec<&Vec<f64>> = rep
        .eigenvalues
        .iter()
        .zip(&rep.eigenvectors)
        .filter(|(e, _)| (e.0 + 2.0).abs() < 1e-9)
        .map(|(_, v)| v)
        .collect();
    assert_eq!(fast.len(), 2);
    for v in fast {
        let eta = v[3].abs() + v[4].abs() + v[5].abs();
        let zeta = v[0].abs() + v[1].abs() + v[2].abs();
        assert!(eta < 1e-12 && zeta > 0.1, "{v:?}");
    }
}

#[test]
fn unit_scale_gives_zero_deviation() {
    let params = ClosureParams::su3(0.0, 1.0, 1.0).unwrap();
    let seed = seed_point(&build_series(&params, 20).unwrap(), 0.1).unwrap();
    let dev = check_scaling_symmetry(&seed, 0.1, 0.0, 1.0, 10.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(dev, 0.0);
    let dev = check_scaling_symmetry(&seed, 0.1, 0.0, 2.0, 10.0, &IntegratorConfig::default()).unwrap();
    assert!(dev <= 1e-6, "{dev}");
}

#[test]
fn scaling_holds_up_to_blow_up() {
    let params = ClosureParams::su3(0.0, 0.5, 1.6140386559932047).unwrap();
    let seed = seed_point(&build_series(&params, 20).unwrap(), 0.025).unwrap();
    let dev = check_scaling_symmetry(&seed, 0.025, 0.0, 0.3, 4.0, &IntegratorConfig::default()).unwrap();
    assert!(dev <= 1e-6, "{dev}");
}

#[test]
fn blow_up_just_past_the_threshold_keeps_the_conservation_laws() {
    let params = ClosureParams::su3(0.0, 1.516918678205766, 3.217969565617874).unwrap();
    let cfg = IntegratorConfig { t_max: 50.0, ..IntegratorConfig::default() };
    let traj = integrate_closure(&params, 20, None, &cfg).unwrap();
    assert!(matches!(traj.termination, Termination::BlowUp { .. }), "{:?}", traj.termination);
    let rep = conservation_report(&traj, 50.0).unwrap();
    assert!(rep.steady_drift <= 1e-8 && rep.constraint_drift <= 1e-8, "{rep:?}");
}

#[test]
fn rescaled_shrinker_is_the_b3_shrinker() {
    let s1 = build_series(&ClosureParams::su3(-2.25, 1.0, 0.0).unwrap(), 20).unwrap();
    let seed = seed_point(&s1, 0.1).unwrap();
    let (scaled, lambda) = rescale(&seed, -2.25, 3.0).unwrap();
    assert!(rel(lambda, -0.25) < 1e-15);
    let s3 = build_series(&ClosureParams::su3(-0.25, 3.0, 0.0).unwrap(), 20).unwrap();
    let direct = seed_point(&s3, 0.3).unwrap();
    let (a, b) = (scaled.to_array(), direct.to_array());
    for i in 0..6 {
        assert!((a[i] - b[i]).abs() <= 1e-12 * a[i].abs().max(1.0), "{a:?} {b:?}");
    }
    let dev = check_scaling_symmetry(&seed, 0.1, -2.25, 3.0, 6.0, &IntegratorConfig::default()).unwrap();
    assert!(dev <= 1e-6, "{dev}");
    let traj = integrate(&scaled, 0.3, lambda, &dense(18.0, 0.3)).unwrap();
    let last = traj.last().unwrap();
    let (q, _, _) = explicit_shrinker(3.0, last.t).unwrap();
    assert!(rel(last.point.f()[0], q.f1()) < 1e-6 && rel(last.point.f()[1], q.f2()) < 1e-6);
}

#[test]
fn preserved_regions_hold_on_both_sides_of_the_threshold() {
    let cfg = IntegratorConfig { t_max: 60.0, ..IntegratorConfig::default() };

    let inc = integrate_closure(&ClosureParams::su3(0.0, 1.0, 3.0).unwrap(), 20, None, &cfg).unwrap();
    let rep = check_preserved_regions(&inc).unwrap();
    assert_eq!(rep.violation, None);
    let from = rep.lambda_above_d_above_one_from.expect("enters Lambda > D > 1");
    assert!(from < 0.25, "{from}");
    assert!(rep.min_growth_ratio.unwrap() > 1.0, "{rep:?}");
    assert!(rep.min_tanh_margin.unwrap() > 0.0, "{rep:?}");

    let ac = integrate_closure(&ClosureParams::su3(0.0, 2.0, 3.0).unwrap(), 20, None, &cfg).unwrap();
    let rep = check_preserved_regions(&ac).unwrap();
    assert_eq!(rep.violation, None);
    assert!(rep.lambda_below_one_from.is_some());
    assert!(rep.final_lambda < 0.05, "{}", rep.final_lambda);

    let crit =
        integrate_closure(&ClosureParams::su3(0.0, SQRT2, 3.0).unwrap(), 20, Some(0.1), &dense(10.0, 0.1)).unwrap();
    let rep = check_preserved_regions(&crit).unwrap();
    assert!(rep.max_critical_deviation < 1e-6, "{}", rep.max_critical_deviation);
}

#[test]
fn torsion_matches_metric_derivatives_from_dense_output() {
    let h = 1e-3;
    for (lambda, b, c) in [(0.0, 1.0, 1.0), (-1.0, 1.5, 0.5), (0.5, 1.0, -2.0)] {
        let params = ClosureParams::su3(lambda, b, c).unwrap();
        let traj = integrate_closure(&params, 20, Some(0.1), &dense(3.0, h)).unwrap();
        let s = &traj.samples;
        let mut worst = 0.0f64;
        for k in 2..s.len() - 3 {
            let fs = |j: usize, i: usize| s[j].point.f_sq()[i];
            let p = &s[k].point;
            let (fsq, tau, fbar, vol) = (p.f_sq(), p.tau(), p.f_sq_sum(), p.volume());
            for i in 0..3 {
                let d = (fs(k - 2, i) - 8.0 * fs(k - 1, i) + 8.0 * fs(k + 1, i) - fs(k + 2, i)) / (12.0 * h);
                let expect = d + fsq[i] * (2.0 * fsq[i] - fbar) / vol;
                let scale = tau[i].abs().max(fsq[i] * (2.0 * fsq[i] - fbar).abs() / vol).max(1e-3);
                worst = worst.max((expect - tau[i]).abs() / scale);
            }
        }
        assert!(worst <= 1e-6, "({lambda}, {b}, {c}): {worst}");
    }
}

#[test]
fn integrated_steady_satisfies_mixed_order_system() {
    let params = ClosureParams::su3(0.0, 1.2, 1.5).unwrap();
    let traj = integrate_closure(&params, 20, Some(0.1), &dense(5.0, 1e-3)).unwrap();
    let ts: Vec<f64> = traj.samples[1..].iter().map(|s| s.t).collect();
    let pts: Vec<_> = traj.samples[1..].iter().map(|s| s.point).collect();
    let us: Vec<f64> = traj.samples[1..].iter().map(|s| s.obs.u).collect();
    let r = rhs_mixed_order_residual(&ts, &pts, &us, 0.0).unwrap();
    assert!(r.max() <= 1e-6, "{r:?}");
}

#[test]
fn series_residual_orders() {
    let ts = [0.2, 0.1, 0.05];
    for params in [ClosureParams::su3(0.3, 1.1, 0.7).unwrap(), ClosureParams::su3(0.0, SQRT2, 3.0).unwrap()] {
        let r8 = series_residual(&build_series(&params, 8).unwrap(), &ts).unwrap();
        assert!(r8.fitted_order >= 6.5, "{r8:?}");
        let r3 = series_residual(&build_series(&params, 3).unwrap(), &ts).unwrap();
        assert!(r3.fitted_order >= 1.5, "{r3:?}");
    }
}

#[test]
fn seed_points_match_closed_forms() {
    let steady = seed_point(&build_series(&ClosureParams::su3(0.0, SQRT2, 3.0).unwrap(), 12).unwrap(), 0.1).unwrap();
    let exact = explicit_steady(0.1).unwrap();
    for i in 0..3 {
        assert!((steady.f()[i] - exact.f[i]).abs() <= 1e-10);
        assert!((steady.tau()[i] - exact.tau[i]).abs() <= 1e-10);
    }
    let shrink = seed_point(&build_series(&ClosureParams::su3(-2.25, 1.0, 0.0).unwrap(), 12).unwrap(), 0.1).unwrap();
    let (q, _, _) = explicit_shrinker(1.0, 0.1).unwrap();
    let e = q.embed();
    for i in 0..3 {
        assert!((shrink.f()[i] - e.f()[i]).abs() <= 1e-10);
        assert!((shrink.tau()[i] - e.tau()[i]).abs() <= 1e-10);
    }
    let series = build_series(&ClosureParams::su3(0.0, 1.0, 0.0).unwrap(), 12).unwrap();
    assert!(seed_point(&series, 0.0).is_err());
}

#[test]
fn integration_rejects_bad_configuration() {
    let params = ClosureParams::su3(0.0, 1.0, 1.0).unwrap();
    let seed = seed_point(&build_series(&params, 20).unwrap(), 0.1).unwrap();
    assert!(integrate(&seed, 0.0, 0.0, &IntegratorConfig::default()).is_err());
    assert!(integrate(&seed, 0.1, 0.0, &IntegratorConfig { t_max: 0.05, ..IntegratorConfig::default() }).is_err());
    assert!(integrate(&seed, 0.1, 0.0, &IntegratorConfig { rtol: 0.0, ..IntegratorConfig::default() }).is_err());
}

#[test]
fn blow_up_is_diagnosed_with_uniform_output() {
    let params = ClosureParams::su3(0.0, 1.4142135, 3.0).unwrap();
    let cfg = IntegratorConfig { rtol: 1e-14, atol: 1e-16, ..dense(20.0, 5.0) };
    let traj = integrate_closure(&params, 20, None, &cfg).unwrap();
    assert!(matches!(traj.termination, Termination::BlowUp { .. }), "{:?}", traj.termination);
    let last = traj.last().unwrap();
    assert!(last.point.f()[2] <= 1e-6 * 1.4142135 * (1.0 + 1e-12), "{}", last.point.f()[2]);
}
