use cbc_core::continuation::{
    cbc_washout_branch, cbc_zie_branch, run_sweep, tag_branch, washout_point, BranchStart, Stability,
    SweepSchedule, WashoutBranchSettings, ZieBranchSettings,
};
use cbc_core::dynsys::{run_until_stationary, ClosedLoop, ControlLaw, RunOutcome, StationaritySettings};
use cbc_core::feedback::{
    is_hurwitz_2x2, washout_gains_admissible, washout_slow_jacobian, zie_gains_admissible, zie_slow_jacobian,
    SlowDirectionInfo, WashoutGains, ZieGains,
};
use cbc_core::normalforms::{fold_branch_oracle, FoldSystem, PitchforkSymSystem, SlowFastSystem};

fn tight(tol: f64, max_time: f64) -> StationaritySettings {
    StationaritySettings {
        tol_std: tol,
        tol_mu_std: tol,
        max_time,
        ..Default::default()
    }
}

/// Perpendicular secant gains on the fold, where the branch tangent is
/// `(d mu, d y) ∝ (2y, 1)`.
fn fold_zie_gains(y: f64, a: f64, k_y: f64) -> ZieGains {
    ZieGains::new(a, k_y, k_y * 2.0 * y)
}

#[test]
fn zie_point_on_unstable_fold_branch() {
    let mut lp = ClosedLoop::new(FoldSystem::new(), vec![-0.45], 0.25);
    lp.law = ControlLaw::Zie(fold_zie_gains(-0.5, 50.0, -0.2).with_reference(0.25, -0.5));
    let out = run_until_stationary(&mut lp, &tight(1e-10, 3000.0), None);
    let s = out.settled().expect("ZIE converges");
    assert!((s.y + 0.5).abs() < 1e-6, "y = {}", s.y);
    assert!(s.u_mean.abs() < 1e-6);
}

#[test]
fn zie_reaches_oracle_on_both_sub_branches() {
    for k in 2..=10 {
        let mu = (k as f64 / 10.0).powi(2);
        let oracle = fold_branch_oracle(mu).unwrap();
        for x in [oracle.x_stable, oracle.x_unstable] {
            let mut lp = ClosedLoop::new(FoldSystem::new(), vec![x + 0.05], mu + 0.02);
            lp.law = ControlLaw::Zie(fold_zie_gains(x, 50.0, -0.2).with_reference(mu, x));
            let out = run_until_stationary(&mut lp, &tight(1e-10, 5000.0), None);
            let s = out.settled().unwrap_or_else(|| panic!("mu {mu} x {x}: {out:?}"));
            assert!((s.y - x).abs() <= 1e-6, "mu {mu}: y {} vs {x}", s.y);
            assert!((s.mu - mu).abs() <= 1e-6);
        }
    }
}

#[test]
fn washout_at_fold_point_does_not_settle() {
    let mut lp = ClosedLoop::new(FoldSystem::new(), vec![0.05], 0.0);
    let out = washout_point(&mut lp, 0.0, 0.05, -5.0, 0.1, &tight(1e-6, 2000.0)).unwrap();
    assert!(!matches!(out, RunOutcome::Settled(_)), "{out:?}");
    let info = SlowDirectionInfo::new(0.0, 1.0, 1.0);
    assert!(!washout_gains_admissible(&info, &WashoutGains::new(-5.0, 0.1)));
}

#[test]
fn washout_sign_rule_on_fold() {
    for k in 2..=10 {
        let mu = (k as f64 / 10.0).powi(2);
        let o = fold_branch_oracle(mu).unwrap();
        let unstable = SlowDirectionInfo::new(o.lambda_unstable, 1.0, 1.0);
        assert!(o.lambda_unstable >= 0.2);
        assert!(is_hurwitz_2x2(&washout_slow_jacobian(&unstable, &WashoutGains::new(-5.0, 0.1))));

        let mut lp = ClosedLoop::new(FoldSystem::new(), vec![o.x_unstable - 0.05], mu);
        let out = washout_point(&mut lp, mu, o.x_unstable, -5.0, 0.1, &tight(1e-9, 5000.0)).unwrap();
        let s = out.settled().expect("unstable branch held with K_wo > 0");
        assert!((s.y - o.x_unstable).abs() < 1e-4);

        let stable = SlowDirectionInfo::new(o.lambda_stable, 1.0, 1.0);
        assert!(!washout_gains_admissible(&stable, &WashoutGains::new(-5.0, 0.1)));
        assert!(washout_gains_admissible(&stable, &WashoutGains::new(-5.0, -0.1)));
        let mut lp = ClosedLoop::new(FoldSystem::new(), vec![o.x_stable + 0.05], mu);
        let out = washout_point(&mut lp, mu, o.x_stable, -5.0, -0.1, &tight(1e-9, 5000.0)).unwrap();
        assert!((out.settled().expect("stable branch").y - o.x_stable).abs() < 1e-4);
    }
    // K_wo > 0 on the stable sub-branch makes the slow plane a saddle; the
    // loop leaves the target and at best lands on the other sub-branch
    let mut lp = ClosedLoop::new(FoldSystem::new(), vec![0.55], 0.25);
    let out = washout_point(&mut lp, 0.25, 0.5, -5.0, 0.1, &tight(1e-9, 3000.0)).unwrap();
    if let Some(s) = out.settled() {
        assert!((s.y - 0.5).abs() > 0.5, "held at {}", s.y);
    }
}

#[test]
fn fold_sweep_from_above_ends_in_divergence() {
    let mut lp = ClosedLoop::new(FoldSystem::new(), vec![1.0], 1.0);
    let schedule = SweepSchedule {
        mu_start: 1.0,
        mu_end: -0.5,
        step: 0.1,
        hold_time: 300.0,
    };
    let recs = run_sweep(&mut lp, &schedule, 200, 1e6);
    let last = recs.last().unwrap();
    assert!(last.diverged);
    assert!(last.mu < 0.0);
    for r in recs.iter().filter(|r| r.mu > 0.05) {
        assert!((r.y_end - r.mu.sqrt()).abs() < 1e-3, "mu {} y {}", r.mu, r.y_end);
    }
}

fn fold_zie_settings() -> ZieBranchSettings {
    ZieBranchSettings {
        mu_bounds: (-1.0, 1.0),
        stationarity: tight(1e-6, 3000.0),
        ..Default::default()
    }
}

#[test]
fn zie_branch_through_fold_matches_oracle() {
    let settings = fold_zie_settings();
    let mut lp = ClosedLoop::new(FoldSystem::new(), vec![1.0], 1.0);
    let start = BranchStart::Seeds {
        prev: (1.1, 1.1f64.sqrt()),
        curr: (1.0, 1.0),
    };
    let mut branch = cbc_zie_branch(&mut lp, start, &settings).unwrap();
    let last = branch.points.last().unwrap();
    assert!(last.mu >= 1.0 && last.y < 0.0, "{}", branch.termination);
    let mut prev = (1.0, 1.0);
    for p in &branch.points {
        assert!((p.y * p.y - p.mu).abs() <= 10.0 * 1e-4);
        let lhs = p.gains.k_st_y * (p.y - p.y_ref) + p.gains.k_st_mu * (p.mu - p.mu_ref);
        let rhs = settings.stationarity.tol_std * (p.gains.k_st_y.abs() + p.gains.k_st_mu.abs());
        assert!(lhs.abs() <= rhs, "u = {lhs} at mu {}", p.mu);
        let step = (p.mu - prev.0).hypot(p.y - prev.1);
        assert!(step <= 2.0 * settings.h);
        prev = (p.mu, p.y);
    }
    tag_branch(&mut branch, Some(0), 0.0);
    for p in &branch.points {
        let expect = if p.y > 0.0 { Stability::Stable } else { Stability::Unstable };
        if p.y.abs() > 0.05 {
            assert_eq!(p.stability, expect, "mu {} y {}", p.mu, p.y);
        }
    }
}

#[test]
fn washout_branch_stops_before_fold() {
    let settings = WashoutBranchSettings {
        stationarity: tight(1e-7, 1500.0),
        ..Default::default()
    };
    let mut lp = ClosedLoop::new(FoldSystem::new(), vec![-1.0], 1.0);
    let start = BranchStart::Seeds {
        prev: (1.1, -(1.1f64.sqrt())),
        curr: (1.0, -1.0),
    };
    let branch = cbc_washout_branch(&mut lp, start, &settings).unwrap();
    assert!(branch.termination.contains("consecutive failures"));
    for p in &branch.points {
        assert!((p.y + p.mu.sqrt()).abs() <= 1e-3);
        assert!(p.mu > 0.01);
    }
    assert!(branch.points.iter().any(|p| p.mu <= 0.05));
    for f in &branch.failures {
        assert!(f.mu_pred < 0.04);
    }
    assert!(branch.failures.iter().any(|f| f.mu_pred.abs() <= 0.01));
}

#[test]
fn pitchfork_without_symmetry_control_is_refused() {
    let mut lp = ClosedLoop::new(PitchforkSymSystem::new(0.0), vec![0.0, 0.0], 0.0);
    let start = BranchStart::Direction {
        curr: (0.0, 0.0),
        direction: (1.0, 0.0),
    };
    let branch = cbc_zie_branch(&mut lp, start, &ZieBranchSettings::default()).unwrap();
    assert!(branch.points.is_empty());
    assert!(branch.termination.starts_with("refused"));

    let mut lp = ClosedLoop::new(PitchforkSymSystem::new(1.0), vec![0.0, 0.0], 0.0);
    let settings = ZieBranchSettings {
        max_points: 1,
        stationarity: tight(1e-6, 200.0),
        ..Default::default()
    };
    let branch = cbc_zie_branch(&mut lp, start, &settings).unwrap();
    assert!(!branch.termination.starts_with("refused"));
}

fn slow_fast_settings() -> StationaritySettings {
    StationaritySettings {
        n_min: 20_000,
        tol_std: 1e-7,
        tol_mu_std: 1e-7,
        max_time: 150.0,
        divergence_bound: 50.0,
    }
}

fn slow_fast_converges(k_y: f64, k_mu: f64) -> bool {
    let sys = SlowFastSystem::default();
    let mut lp = ClosedLoop::new(sys, vec![-0.45, -0.45], 0.27);
    lp.law = ControlLaw::Zie(ZieGains::new(0.0, k_y, k_mu).with_reference(0.25, -0.5));
    match run_until_stationary(&mut lp, &slow_fast_settings(), None) {
        RunOutcome::Settled(s) => (s.y + 0.5).abs() < 1e-3 && (s.mu - 0.25).abs() < 1e-3,
        _ => false,
    }
}

#[test]
fn parameter_control_on_slow_fast_matches_slow_jacobian() {
    // at mu = 0.25, x = -0.5 the slow eigenvalue is 1 with w = (1, 0)
    let info = SlowDirectionInfo::new(1.0, 1.0, 1.0);
    for k_mu in [-3.0, -2.0, -1.5, -0.5, 0.5] {
        for k_y in [-4.5, -3.5, -2.5, -1.0, 1.0] {
            let g = ZieGains::new(0.0, k_y, k_mu);
            let predicted = zie_gains_admissible(&info, &g);
            assert_eq!(predicted, is_hurwitz_2x2(&zie_slow_jacobian(&info, &g)));
            assert_eq!(slow_fast_converges(k_y, k_mu), predicted, "K_y {k_y} K_mu {k_mu}");
        }
    }
}

#[test]
fn zero_weight_zie_with_large_gain_is_parameter_control() {
    let info = SlowDirectionInfo::new(1.0, 1.0, 1.0);
    let g = ZieGains::new(0.0, -300.0, -2.0);
    assert!(zie_gains_admissible(&info, &g));
    assert!(slow_fast_converges(-300.0, -2.0));
    assert!(!slow_fast_converges(-0.5, -2.0));
}

#[test]
fn noisy_runs_are_reproducible() {
    let run = || {
        let mut lp = ClosedLoop::new(FoldSystem::with_noise(0.02, 11), vec![0.9], 1.0);
        lp.record_trajectory(true);
        lp.law = ControlLaw::Zie(fold_zie_gains(1.0, 5.0, -2.0).with_reference(1.0, 1.0));
        lp.advance(30.0).unwrap();
        lp.trajectory.unwrap()
    };
    assert_eq!(run(), run());
}
