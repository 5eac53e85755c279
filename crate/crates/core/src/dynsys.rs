//! Black-box controlled systems, fixed-step integration and the
//! stationarity rule used to accept steady states.

use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{washout_u, zie_u, WashoutGains, ZieGains};
use crate::linalg::Matrix;

/// Default integrator step in seconds.
pub const DEFAULT_DT: f64 = 0.1;
/// Default stationarity window length (20 s at 10 Hz).
pub const DEFAULT_N_MIN: usize = 200;
/// Default tolerance on the output's window standard deviation.
pub const DEFAULT_TOL_STD: f64 = 0.05;
/// Default tolerance on the parameter's window standard deviation.
pub const DEFAULT_TOL_MU_STD: f64 = 0.02;

/// Partial derivatives at a point, for controllability checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub f_x: Matrix,
    pub f_mu: Matrix,
    pub f_u: Matrix,
}

/// A system `x' = f(x, mu, u)` with scalar output `y = g(x)`.
///
/// `u` is the input as it enters the right-hand side, after any scaling by
/// the feedback law.
pub trait ControlledSystem {
    fn state_dim(&self) -> usize;

    fn rhs(&self, state: &[f64], mu: f64, u: f64, dxdt: &mut [f64]);

    /// Measured output. Takes `&mut self` so that measurement noise can draw
    /// from the system's own generator.
    fn output(&mut self, state: &[f64]) -> f64;

    /// Event handling after each completed step.
    fn post_step(&mut self, _state: &mut [f64], _mu: f64) {}

    /// A second, slower macroscopic measure, if the system has one.
    fn aux_output(&self) -> Option<f64> {
        None
    }

    fn recommended_dt(&self) -> f64 {
        DEFAULT_DT
    }

    /// Analytic linearization, when the system is not truly black-box.
    fn linearization(&self, _state: &[f64], _mu: f64) -> Option<Linearization> {
        None
    }
}

/// Scratch space for [`rk4_step`].
#[derive(Debug, Clone, Default)]
pub struct Rk4Workspace {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.tmp.len() != n {
            *self = Self::new(n);
        }
    }
}

/// One classical Runge-Kutta step with `mu` and `u` held over the step.
pub fn rk4_step<S: ControlledSystem + ?Sized>(
    sys: &S,
    state: &mut [f64],
    mu: f64,
    u: f64,
    dt: f64,
    ws: &mut Rk4Workspace,
) -> Result<()> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt = {dt}")));
    }
    let n = state.len();
    ws.ensure(n);
    let Rk4Workspace { k, tmp } = ws;
    let weights = [0.5 * dt, 0.5 * dt, dt];

    sys.rhs(state, mu, u, &mut k[0]);
    for stage in 0..3 {
        let (done, rest) = k.split_at_mut(stage + 1);
        let prev = &done[stage];
        for i in 0..n {
            tmp[i] = state[i] + weights[stage] * prev[i];
        }
        sys.rhs(tmp, mu, u, &mut rest[0]);
    }
    for i in 0..n {
        let incr = (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]) / 6.0;
        if !incr.is_finite() {
            return Err(Error::NonFinite { t: f64::NAN });
        }
        state[i] += dt * incr;
    }
    Ok(())
}

/// Rolling window of the last `n_min` samples.
///
/// Mean and variance come from running sums of `sample - shift`; the shift
/// is moved to the window mean and the sums rebuilt once per window length,
/// which keeps cancellation error far below any useful tolerance.
#[derive(Debug, Clone)]
pub struct StationarityDetector {
    n_min: usize,
    tol_std: f64,
    buffer: VecDeque<f64>,
    shift: f64,
    sum: f64,
    sum_sq: f64,
    since_rebuild: usize,
}

impl StationarityDetector {
    pub fn new(n_min: usize, tol_std: f64) -> Self {
        let n_min = n_min.max(2);
        Self {
            n_min,
            tol_std,
            buffer: VecDeque::with_capacity(n_min + 1),
            shift: 0.0,
            sum: 0.0,
            sum_sq: 0.0,
            since_rebuild: 0,
        }
    }

    pub fn push(&mut self, sample: f64) {
        if self.buffer.is_empty() {
            self.shift = sample;
        }
        if self.buffer.len() == self.n_min {
            let old = self.buffer.pop_front().expect("window is full") - self.shift;
            self.sum -= old;
            self.sum_sq -= old * old;
        }
        self.buffer.push_back(sample);
        let d = sample - self.shift;
        self.sum += d;
        self.sum_sq += d * d;
        self.since_rebuild += 1;
        if self.since_rebuild >= self.n_min {
            self.rebuild();
        }
    }

    fn rebuild(&mut self) {
        let n = self.buffer.len() as f64;
        self.shift = self.buffer.iter().sum::<f64>() / n;
        self.sum = 0.0;
        self.sum_sq = 0.0;
        for v in &self.buffer {
            let d = v - self.shift;
            self.sum += d;
            self.sum_sq += d * d;
        }
        self.since_rebuild = 0;
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
        self.sum = 0.0;
        self.sum_sq = 0.0;
        self.since_rebuild = 0;
    }

    pub fn is_ready(&self) -> bool {
        self.buffer.len() >= self.n_min
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.buffer.is_empty() {
            return f64::NAN;
        }
        self.shift + self.sum / self.buffer.len() as f64
    }

    /// Sample standard deviation of the window.
    pub fn std(&self) -> f64 {
        let n = self.buffer.len();
        if n < 2 {
            return f64::NAN;
        }
        let nf = n as f64;
        let ss = self.sum_sq - self.sum * self.sum / nf;
        (ss.max(0.0) / (nf - 1.0)).sqrt()
    }

    pub fn is_stationary(&self) -> bool {
        self.is_ready() && self.std() <= self.tol_std
    }
}

/// Sampled closed-loop history.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub u: Vec<f64>,
}

impl Trajectory {
    pub fn push(&mut self, t: f64, y: f64, mu: f64, u: f64) {
        self.t.push(t);
        self.y.push(y);
        self.mu.push(mu);
        self.u.push(u);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,y,mu,u")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{},{}", self.t[i], self.y[i], self.mu[i], self.u[i])?;
        }
        Ok(())
    }
}

/// The feedback law closing the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlLaw {
    /// `mu` fixed, `u = 0`.
    Open,
    /// `mu` fixed, plant input `u`, washout state integrates `u`.
    Washout(WashoutGains),
    /// `mu' = u`, plant input `a u`. Parameter control is `a = 0`.
    Zie(ZieGains),
}

impl ControlLaw {
    pub fn moves_mu(&self) -> bool {
        matches!(self, ControlLaw::Zie(_))
    }

    pub fn input(&self, y: f64, mu: f64) -> f64 {
        match self {
            ControlLaw::Open => 0.0,
            ControlLaw::Washout(g) => washout_u(y, g),
            ControlLaw::Zie(g) => zie_u(y, mu, g),
        }
    }

    fn plant_coupling(&self) -> f64 {
        match self {
            ControlLaw::Open => 0.0,
            ControlLaw::Washout(_) => 1.0,
            ControlLaw::Zie(g) => g.a,
        }
    }
}

/// Plant plus feedback law, advanced with a zero-order hold on `u`.
#[derive(Debug, Clone)]
pub struct ClosedLoop<S> {
    pub system: S,
    pub state: Vec<f64>,
    pub mu: f64,
    pub law: ControlLaw,
    pub t: f64,
    pub dt: f64,
    pub trajectory: Option<Trajectory>,
    last_y: f64,
    last_u: f64,
    ws: Rk4Workspace,
}

impl<S: ControlledSystem> ClosedLoop<S> {
    pub fn new(system: S, state: Vec<f64>, mu: f64) -> Self {
        let dt = system.recommended_dt();
        let n = state.len();
        Self {
            system,
            state,
            mu,
            law: ControlLaw::Open,
            t: 0.0,
            dt,
            trajectory: None,
            last_y: f64::NAN,
            last_u: 0.0,
            ws: Rk4Workspace::new(n),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn record_trajectory(&mut self, on: bool) {
        self.trajectory = if on { Some(Trajectory::default()) } else { None };
    }

    /// Output measured at the start of the most recent step.
    pub fn last_output(&self) -> f64 {
        self.last_y
    }

    pub fn last_input(&self) -> f64 {
        self.last_u
    }

    /// One sampled-control step. Returns the measured output and the input
    /// applied over the step.
    pub fn step(&mut self) -> Result<(f64, f64)> {
        let y = self.system.output(&self.state);
        let u = self.law.input(y, self.mu);
        let plant_u = self.law.plant_coupling() * u;
        rk4_step(&self.system, &mut self.state, self.mu, plant_u, self.dt, &mut self.ws)
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite { t: self.t },
                other => other,
            })?;
        match &mut self.law {
            ControlLaw::Open => {}
            ControlLaw::Washout(g) => g.y_wo += self.dt * u,
            ControlLaw::Zie(_) => self.mu += self.dt * u,
        }
        if let Some(tr) = self.trajectory.as_mut() {
            tr.push(self.t, y, self.mu, u);
        }
        self.system.post_step(&mut self.state, self.mu);
        self.t += self.dt;
        self.last_y = y;
        self.last_u = u;
        Ok((y, u))
    }

    /// Advances for `duration` seconds.
    pub fn advance(&mut self, duration: f64) -> Result<()> {
        let steps = (duration / self.dt).round() as usize;
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}

/// Settings for [`run_until_stationary`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaritySettings {
    pub n_min: usize,
    pub tol_std: f64,
    /// Window tolerance on `mu`, checked only when the law moves `mu`.
    pub tol_mu_std: f64,
    pub max_time: f64,
    /// `|y|` or `|mu|` beyond this counts as divergence.
    pub divergence_bound: f64,
}

impl Default for StationaritySettings {
    fn default() -> Self {
        Self {
            n_min: DEFAULT_N_MIN,
            tol_std: DEFAULT_TOL_STD,
            tol_mu_std: DEFAULT_TOL_MU_STD,
            max_time: 600.0,
            divergence_bound: 1e6,
        }
    }
}

/// Runaway monitor: flips the sign of `K_st_mu` once when the smoothed
/// `(mu, y)` position is farther than `radius` from the reference and still
/// moving away from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunawayRule {
    pub radius: f64,
    /// Samples in the running mean of the position; the distance is also
    /// compared against its value this many samples earlier.
    pub smoothing: usize,
    /// Seconds after a reference change during which the rule is inactive.
    pub grace: f64,
}

impl Default for RunawayRule {
    fn default() -> Self {
        Self {
            radius: 0.2,
            smoothing: 20,
            grace: 10.0,
        }
    }
}

/// Steady state accepted by the stationarity rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settled {
    pub y: f64,
    pub mu: f64,
    pub residual_std: f64,
    pub mu_std: f64,
    /// Mean input over the acceptance window.
    pub u_mean: f64,
    pub elapsed: f64,
    pub sign_flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunOutcome {
    Settled(Settled),
    Timeout { elapsed: f64, last_std: f64 },
    Diverged { elapsed: f64, reason: String },
}

impl RunOutcome {
    pub fn settled(&self) -> Option<&Settled> {
        match self {
            RunOutcome::Settled(s) => Some(s),
            _ => None,
        }
    }
}

/// Steps the loop until the output (and `mu`, when it is dynamic) is
/// stationary, the time budget runs out, or the run diverges.
pub fn run_until_stationary<S: ControlledSystem>(
    lp: &mut ClosedLoop<S>,
    settings: &StationaritySettings,
    runaway: Option<RunawayRule>,
) -> RunOutcome {
    if settings.max_time <= 0.0 {
        return RunOutcome::Timeout {
            elapsed: 0.0,
            last_std: f64::NAN,
        };
    }
    let mut y_win = StationarityDetector::new(settings.n_min, settings.tol_std);
    let mut mu_win = StationarityDetector::new(settings.n_min, settings.tol_mu_std);
    let mut u_win = StationarityDetector::new(settings.n_min, f64::INFINITY);
    let smoothing = runaway.map_or(1, |r| r.smoothing.max(1));
    let mut recent: VecDeque<(f64, f64)> = VecDeque::with_capacity(smoothing);
    let mut distances: VecDeque<f64> = VecDeque::with_capacity(smoothing + 1);
    let mut flipped = false;
    let start = lp.t;
    let max_steps = (settings.max_time / lp.dt).ceil() as usize;

    for _ in 0..max_steps {
        let (y, u) = match lp.step() {
            Ok(v) => v,
            Err(e) => {
                return RunOutcome::Diverged {
                    elapsed: lp.t - start,
                    reason: e.to_string(),
                }
            }
        };
        if !y.is_finite() || y.abs() > settings.divergence_bound || lp.mu.abs() > settings.divergence_bound {
            return RunOutcome::Diverged {
                elapsed: lp.t - start,
                reason: format!("left bounds: y = {y}, mu = {}", lp.mu),
            };
        }
        y_win.push(y);
        mu_win.push(lp.mu);
        u_win.push(u);

        if let (Some(rule), ControlLaw::Zie(g)) = (runaway, &mut lp.law) {
            if recent.len() == smoothing {
                recent.pop_front();
            }
            recent.push_back((lp.mu, y));
            if recent.len() == smoothing {
                let k = smoothing as f64;
                let (sm, sy) = recent.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
                let dist = ((sm / k - g.mu_ref).powi(2) + (sy / k - g.y_ref).powi(2)).sqrt();
                if distances.len() > smoothing {
                    distances.pop_front();
                }
                distances.push_back(dist);
                let receding = distances.len() > smoothing && dist > distances[0];
                if !flipped && lp.t - start >= rule.grace && dist > rule.radius && receding {
                    g.k_st_mu = -g.k_st_mu;
                    flipped = true;
                    log::info!(
                        "runaway {dist:.3} > {} from reference; K_st_mu -> {:.4}",
                        rule.radius,
                        g.k_st_mu
                    );
                }
            }
        }

        let mu_ok = !lp.law.moves_mu() || mu_win.is_stationary();
        if y_win.is_stationary() && mu_ok {
            return RunOutcome::Settled(Settled {
                y: y_win.mean(),
                mu: mu_win.mean(),
                residual_std: y_win.std(),
                mu_std: mu_win.std(),
                u_mean: u_win.mean(),
                elapsed: lp.t - start,
                sign_flipped: flipped,
            });
        }
    }
    RunOutcome::Timeout {
        elapsed: lp.t - start,
        last_std: y_win.std(),
    }
}
