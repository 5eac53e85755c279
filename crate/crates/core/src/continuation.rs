//! Parameter sweeps and control-based continuation of equilibrium branches.

use serde::{Deserialize, Serialize};

use crate::dynsys::{
    run_until_stationary, ClosedLoop, ControlLaw, ControlledSystem, RunOutcome, RunawayRule,
    StationarityDetector, StationaritySettings,
};
use crate::error::{Error, Result};
use crate::feedback::{zie_gains_from_secant_capped, GainSign, SecantGainRule, WashoutGains, ZieGains};
use crate::linalg::{zie_controllable, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    #[default]
    Unknown,
}

impl Stability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Unknown => "unknown",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Stability::Stable => Stability::Unstable,
            Stability::Unstable => Stability::Stable,
            Stability::Unknown => Stability::Unknown,
        }
    }
}

/// Gains in force when a point was accepted. Washout gains are stored as
/// `k_st_y = K_st`, `k_st_mu = K_wo`, `a = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GainRecord {
    pub k_st_y: f64,
    pub k_st_mu: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub mu: f64,
    pub y: f64,
    pub stability: Stability,
    pub residual_std: f64,
    pub gains: GainRecord,
    /// Simulated seconds until the point was accepted.
    pub time_to_converge: f64,
    /// Reference the controller was given.
    pub mu_ref: f64,
    pub y_ref: f64,
}

/// A continuation step that did not converge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedStep {
    pub mu_pred: f64,
    pub y_pred: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub failures: Vec<FailedStep>,
    pub termination: String,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// Quasi-stationary parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSchedule {
    pub mu_start: f64,
    pub mu_end: f64,
    pub step: f64,
    pub hold_time: f64,
}

impl Default for SweepSchedule {
    fn default() -> Self {
        Self {
            mu_start: -1.2,
            mu_end: 1.2,
            step: 0.1,
            hold_time: 300.0,
        }
    }
}

impl SweepSchedule {
    pub fn reversed(&self) -> Self {
        Self {
            mu_start: self.mu_end,
            mu_end: self.mu_start,
            ..*self
        }
    }

    pub fn direction(&self) -> Direction {
        if self.mu_end >= self.mu_start {
            Direction::Up
        } else {
            Direction::Down
        }
    }

    pub fn validate(&self, window_time: f64) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::InvalidInput(format!("sweep step {} must be positive", self.step)));
        }
        if !(self.hold_time >= window_time) {
            return Err(Error::InvalidInput(format!(
                "hold time {} shorter than the stationarity window {window_time}",
                self.hold_time
            )));
        }
        if !self.mu_start.is_finite() || !self.mu_end.is_finite() {
            return Err(Error::InvalidInput("non-finite sweep bounds".into()));
        }
        Ok(())
    }

    /// Parameter values visited, both ends included.
    pub fn mu_values(&self) -> Vec<f64> {
        let span = self.mu_end - self.mu_start;
        let n = (span.abs() / self.step).round() as usize;
        let dir = span.signum();
        (0..=n).map(|i| self.mu_start + dir * self.step * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub mu: f64,
    /// Output at the end of the hold.
    pub y_end: f64,
    /// Mean and sample std of the output over the final window of the hold.
    pub y_mean: f64,
    pub y_std: f64,
    pub aux_end: Option<f64>,
    pub diverged: bool,
}

/// Holds `mu` at each schedule value for `hold_time` with the control off,
/// carrying the state from one hold to the next. Stops after the first
/// divergent hold, which is recorded with `diverged = true`.
pub fn run_sweep<S: ControlledSystem>(
    lp: &mut ClosedLoop<S>,
    schedule: &SweepSchedule,
    window: usize,
    divergence_bound: f64,
) -> Vec<SweepRecord> {
    lp.law = ControlLaw::Open;
    let steps = (schedule.hold_time / lp.dt).round() as usize;
    let mut records = Vec::new();
    for mu in schedule.mu_values() {
        lp.mu = mu;
        let mut win = StationarityDetector::new(window, f64::INFINITY);
        let mut y_end = f64::NAN;
        let mut diverged = false;
        for _ in 0..steps {
            match lp.step() {
                Ok((y, _)) if y.is_finite() && y.abs() <= divergence_bound => {
                    win.push(y);
                    y_end = y;
                }
                _ => {
                    diverged = true;
                    break;
                }
            }
        }
        if diverged {
            log::info!("sweep diverged at mu = {mu}");
            records.push(SweepRecord {
                mu,
                y_end: f64::NAN,
                y_mean: f64::NAN,
                y_std: f64::NAN,
                aux_end: None,
                diverged: true,
            });
            break;
        }
        records.push(SweepRecord {
            mu,
            y_end,
            y_mean: win.mean(),
            y_std: win.std(),
            aux_end: lp.system.aux_output(),
            diverged: false,
        });
    }
    records
}

/// Predicted reference and unit direction `(d_mu, d_y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mu_ref: f64,
    pub y_ref: f64,
    pub direction: (f64, f64),
}

/// `curr + h * (curr - prev) / |curr - prev|` in the `(mu, y)` plane.
pub fn secant_predict(prev: (f64, f64), curr: (f64, f64), h: f64) -> Result<Prediction> {
    let d = (curr.0 - prev.0, curr.1 - prev.1);
    let norm = d.0.hypot(d.1);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateSecant);
    }
    direction_predict(curr, (d.0 / norm, d.1 / norm), h)
}

/// Prediction along a user-supplied direction, for the first step.
pub fn direction_predict(curr: (f64, f64), direction: (f64, f64), h: f64) -> Result<Prediction> {
    let norm = direction.0.hypot(direction.1);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateSecant);
    }
    let dir = (direction.0 / norm, direction.1 / norm);
    Ok(Prediction {
        mu_ref: curr.0 + h * dir.0,
        y_ref: curr.1 + h * dir.1,
        direction: dir,
    })
}

/// How the branch starts: two accepted points, or one point and a direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BranchStart {
    Seeds { prev: (f64, f64), curr: (f64, f64) },
    Direction { curr: (f64, f64), direction: (f64, f64) },
}

impl BranchStart {
    fn current(&self) -> (f64, f64) {
        match self {
            BranchStart::Seeds { curr, .. } | BranchStart::Direction { curr, .. } => *curr,
        }
    }
}

fn predict(prev: Option<(f64, f64)>, curr: (f64, f64), start: &BranchStart, h: f64) -> Result<Prediction> {
    match (prev, start) {
        (Some(p), _) => secant_predict(p, curr, h),
        (None, BranchStart::Seeds { prev, .. }) => secant_predict(*prev, curr, h),
        (None, BranchStart::Direction { direction, .. }) => direction_predict(curr, *direction, h),
    }
}

fn in_bounds(mu: f64, bounds: (f64, f64)) -> bool {
    mu >= bounds.0 && mu <= bounds.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WashoutBranchSettings {
    pub k_st: f64,
    pub k_wo: f64,
    pub h: f64,
    pub max_points: usize,
    /// The branch ends once a prediction leaves `[lo, hi]`.
    pub mu_bounds: (f64, f64),
    pub max_consecutive_failures: usize,
    pub stationarity: StationaritySettings,
}

impl Default for WashoutBranchSettings {
    fn default() -> Self {
        Self {
            k_st: -5.0,
            k_wo: 0.1,
            h: 0.1,
            max_points: 100,
            mu_bounds: (f64::NEG_INFINITY, f64::INFINITY),
            max_consecutive_failures: 3,
            stationarity: StationaritySettings {
                max_time: 300.0,
                ..Default::default()
            },
        }
    }
}

/// Outcome of a single washout-stabilized point at fixed `mu`.
pub fn washout_point<S: ControlledSystem>(
    lp: &mut ClosedLoop<S>,
    mu_pred: f64,
    y_pred: f64,
    k_st: f64,
    k_wo: f64,
    stationarity: &StationaritySettings,
) -> Result<RunOutcome> {
    let mut gains = WashoutGains::new(k_st, k_wo);
    gains.reset_for_prediction(y_pred)?;
    lp.mu = mu_pred;
    lp.law = ControlLaw::Washout(gains);
    Ok(run_until_stationary(lp, stationarity, None))
}

/// Tracks a branch with the washout law at fixed `mu`. After a failed step
/// the state is restored to the last accepted one and the next prediction
/// moves one further step along the same secant.
pub fn cbc_washout_branch<S: ControlledSystem>(
    lp: &mut ClosedLoop<S>,
    start: BranchStart,
    settings: &WashoutBranchSettings,
) -> Result<Branch> {
    if settings.k_wo == 0.0 {
        return Err(Error::InvalidInput("K_wo must be nonzero".into()));
    }
    let mut branch = Branch::default();
    let mut prev: Option<(f64, f64)> = None;
    let mut curr = start.current();
    let mut saved = lp.state.clone();
    let mut failures = 0usize;

    while branch.points.len() < settings.max_points {
        let reach = settings.h * (failures + 1) as f64;
        let pred = predict(prev, curr, &start, reach)?;
        if !in_bounds(pred.mu_ref, settings.mu_bounds) {
            branch.termination = format!("prediction mu = {:.4} outside bounds", pred.mu_ref);
            return Ok(branch);
        }
        let t0 = lp.t;
        let outcome = washout_point(lp, pred.mu_ref, pred.y_ref, settings.k_st, settings.k_wo, &settings.stationarity)?;
        match outcome {
            RunOutcome::Settled(s) => {
                failures = 0;
                branch.points.push(BranchPoint {
                    mu: pred.mu_ref,
                    y: s.y,
                    stability: Stability::Unknown,
                    residual_std: s.residual_std,
                    gains: GainRecord {
                        k_st_y: settings.k_st,
                        k_st_mu: settings.k_wo,
                        a: 1.0,
                    },
                    time_to_converge: lp.t - t0,
                    mu_ref: pred.mu_ref,
                    y_ref: pred.y_ref,
                });
                prev = Some(curr);
                curr = (pred.mu_ref, s.y);
                saved.clone_from(&lp.state);
            }
            other => {
                let reason = match other {
                    RunOutcome::Timeout { last_std, .. } => format!("no convergence, window std {last_std:.3e}"),
                    RunOutcome::Diverged { reason, .. } => reason,
                    RunOutcome::Settled(_) => unreachable!(),
                };
                log::info!("washout step at mu = {:.4} failed: {reason}", pred.mu_ref);
                branch.failures.push(FailedStep {
                    mu_pred: pred.mu_ref,
                    y_pred: pred.y_ref,
                    reason,
                });
                lp.state.clone_from(&saved);
                failures += 1;
                if failures >= settings.max_consecutive_failures {
                    branch.termination = format!("{failures} consecutive failures");
                    return Ok(branch);
                }
            }
        }
    }
    branch.termination = "point budget exhausted".into();
    Ok(branch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZieBranchSettings {
    pub a: f64,
    /// Input orientation, sign of `K_st_y`.
    pub sigma: i8,
    pub rule: SecantGainRule,
    pub h: f64,
    pub max_points: usize,
    /// The branch ends once an accepted point leaves `[lo, hi]`.
    pub mu_bounds: (f64, f64),
    pub max_halvings: usize,
    pub runaway: Option<RunawayRule>,
    pub stationarity: StationaritySettings,
    /// Refuse steps at which the analytic linearization is not
    /// ZIE-controllable, when the system offers one.
    pub check_controllability: bool,
}

impl Default for ZieBranchSettings {
    fn default() -> Self {
        Self {
            a: 50.0,
            sigma: -1,
            rule: SecantGainRule::default(),
            h: 0.1,
            max_points: 200,
            mu_bounds: (f64::NEG_INFINITY, f64::INFINITY),
            max_halvings: 3,
            runaway: Some(RunawayRule::default()),
            stationarity: StationaritySettings::default(),
            check_controllability: true,
        }
    }
}

/// Tracks a branch with the zero-in-equilibrium law: secant prediction,
/// gains from the secant, `mu' = u`. Failed steps are retried from the last
/// accepted state with half the step, up to `max_halvings` times.
pub fn cbc_zie_branch<S: ControlledSystem>(
    lp: &mut ClosedLoop<S>,
    start: BranchStart,
    settings: &ZieBranchSettings,
) -> Result<Branch> {
    let mut branch = Branch::default();
    let mut prev: Option<(f64, f64)> = None;
    let mut curr = start.current();
    let mut saved = (lp.state.clone(), lp.mu);

    if settings.check_controllability {
        if let Some(lin) = lp.system.linearization(&lp.state, curr.0) {
            if !zie_controllable(&lin.f_x, &lin.f_mu, &lin.f_u, settings.a, DEFAULT_RANK_TOL)? {
                branch.termination = format!(
                    "refused: linearization at mu = {:.4} is not controllable by the ZIE law",
                    curr.0
                );
                log::warn!("{}", branch.termination);
                return Ok(branch);
            }
        }
    }

    while branch.points.len() < settings.max_points {
        let mut h = settings.h;
        let mut accepted = None;
        for attempt in 0..=settings.max_halvings {
            let pred = predict(prev, curr, &start, h)?;
            let sg = zie_gains_from_secant_capped(pred.direction, settings.sigma, GainSign::Perpendicular, &settings.rule);
            let gains = ZieGains::new(settings.a, sg.k_st_y, sg.k_st_mu).with_reference(pred.mu_ref, pred.y_ref);
            lp.law = ControlLaw::Zie(gains);
            let t0 = lp.t;
            match run_until_stationary(lp, &settings.stationarity, settings.runaway) {
                RunOutcome::Settled(s) => {
                    let used = match lp.law {
                        ControlLaw::Zie(g) => g,
                        _ => gains,
                    };
                    accepted = Some(BranchPoint {
                        mu: s.mu,
                        y: s.y,
                        stability: Stability::Unknown,
                        residual_std: s.residual_std,
                        gains: GainRecord {
                            k_st_y: used.k_st_y,
                            k_st_mu: used.k_st_mu,
                            a: used.a,
                        },
                        time_to_converge: lp.t - t0,
                        mu_ref: pred.mu_ref,
                        y_ref: pred.y_ref,
                    });
                    break;
                }
                other => {
                    let reason = match other {
                        RunOutcome::Timeout { last_std, .. } => format!("no convergence, window std {last_std:.3e}"),
                        RunOutcome::Diverged { reason, .. } => reason,
                        RunOutcome::Settled(_) => unreachable!(),
                    };
                    log::info!("ZIE step {attempt} with h = {h} failed: {reason}");
                    branch.failures.push(FailedStep {
                        mu_pred: pred.mu_ref,
                        y_pred: pred.y_ref,
                        reason,
                    });
                    lp.state.clone_from(&saved.0);
                    lp.mu = saved.1;
                    h *= 0.5;
                }
            }
        }
        let Some(point) = accepted else {
            branch.termination = format!("no convergence after {} halvings", settings.max_halvings);
            return Ok(branch);
        };
        prev = Some(curr);
        curr = (point.mu, point.y);
        saved = (lp.state.clone(), lp.mu);
        branch.points.push(point);
        if !in_bounds(point.mu, settings.mu_bounds) {
            branch.termination = format!("mu = {:.4} left bounds", point.mu);
            return Ok(branch);
        }
    }
    branch.termination = "point budget exhausted".into();
    Ok(branch)
}

/// Indices `i` at which the branch turns, i.e. the mu-increment changes sign
/// between `i - 1 -> i` and `i -> i + 1`. Increments smaller than `min_step`
/// inherit the previous sign.
pub fn fold_indices(mus: &[f64], min_step: f64) -> Vec<usize> {
    let mut folds = Vec::new();
    let mut last_sign = 0.0;
    for i in 1..mus.len() {
        let d = mus[i] - mus[i - 1];
        if d.abs() <= min_step {
            continue;
        }
        let s = d.signum();
        if last_sign != 0.0 && s != last_sign {
            folds.push(i - 1);
        }
        last_sign = s;
    }
    folds
}

/// Stability tags from the branch topology: segments between folds
/// alternate, and the segment containing `anchor` is stable.
pub fn classify_stability(points: &[BranchPoint], anchor: Option<usize>, min_step: f64) -> Vec<Stability> {
    let n = points.len();
    let Some(anchor) = anchor.filter(|&a| a < n && n >= 3) else {
        return vec![Stability::Unknown; n];
    };
    let mus: Vec<f64> = points.iter().map(|p| p.mu).collect();
    let folds = fold_indices(&mus, min_step);
    let segment = |i: usize| folds.iter().filter(|&&f| f < i).count();
    let anchor_seg = segment(anchor);
    (0..n)
        .map(|i| {
            if (segment(i) + anchor_seg) % 2 == 0 {
                Stability::Stable
            } else {
                Stability::Stable.opposite()
            }
        })
        .collect()
}

/// Applies [`classify_stability`] in place.
pub fn tag_branch(branch: &mut Branch, anchor: Option<usize>, min_step: f64) {
    let tags = classify_stability(&branch.points, anchor, min_step);
    for (p, t) in branch.points.iter_mut().zip(tags) {
        p.stability = t;
    }
}
