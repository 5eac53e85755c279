//! Subcommands. Each writes its files into the configured output directory
//! and returns their names.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use cbc_core::continuation::{
    cbc_washout_branch, cbc_zie_branch, run_sweep, tag_branch, washout_point, Branch, BranchStart, SweepRecord,
    WashoutBranchSettings, ZieBranchSettings,
};
use cbc_core::dynsys::{run_until_stationary, ClosedLoop, ControlLaw, RunOutcome, StationaritySettings};
use cbc_core::export::{config_hash, write_branch_csv, write_hash_comment, write_sweep_csv, RunManifest};
use cbc_core::feedback::{SecantGainRule, ZieGains};
use cbc_core::linalg::{
    controllability_matrix, param_controllable, pencil_regular, washout_controllable, zie_controllable, PencilReport,
};

use crate::config::{LawKind, RunConfig, SystemKind};
use crate::fd::fd_linearization;
use crate::plant::Plant;

const DEFAULT_WINDOW_TIME: f64 = 20.0;

/// Stationarity settings with the per-system defaults filled in.
pub fn stationarity(cfg: &RunConfig, dt: f64) -> StationaritySettings {
    let (tol, tol_mu, max_time) = match cfg.system {
        SystemKind::Fold if cfg.fold.noise > 0.0 => (0.05, 0.05, 3000.0),
        SystemKind::Fold if cfg.law == LawKind::Washout => (1e-7, 1e-7, 1500.0),
        SystemKind::Fold => (1e-6, 1e-6, 3000.0),
        SystemKind::Slowfast if cfg.slowfast.noise > 0.0 => (0.05, 0.05, 600.0),
        SystemKind::Slowfast => (1e-7, 1e-7, 600.0),
        SystemKind::Pitchfork => (1e-6, 1e-6, 600.0),
        SystemKind::Crowd => (0.05, 0.02, 600.0),
    };
    let s = &cfg.stationarity;
    let window = s.window_time.unwrap_or(DEFAULT_WINDOW_TIME);
    StationaritySettings {
        n_min: ((window / dt).round() as usize).max(2),
        tol_std: s.tol_std.unwrap_or(tol),
        tol_mu_std: s.tol_mu_std.unwrap_or(tol_mu),
        max_time: s.max_time.unwrap_or(max_time),
        divergence_bound: s.divergence_bound.unwrap_or(1e6),
    }
}

fn window_time(cfg: &RunConfig) -> f64 {
    cfg.stationarity.window_time.unwrap_or(DEFAULT_WINDOW_TIME)
}

/// Output directory plus the bookkeeping shared by all writers.
struct Output<'a> {
    dir: &'a Path,
    hash: String,
    manifest: RunManifest,
}

impl<'a> Output<'a> {
    fn new(cfg: &'a RunConfig, command: &str) -> anyhow::Result<Self> {
        fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
        let hash = config_hash(&cfg.canonical());
        let manifest = RunManifest::new(command, cfg.system.name(), &hash, cfg.seed);
        Ok(Self {
            dir: &cfg.out,
            hash,
            manifest,
        })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>, &str) -> std::io::Result<()>) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        body(&mut w, &self.hash).and_then(|_| w.flush())
            .with_context(|| format!("writing {}", path.display()))?;
        self.manifest.files.push(name.to_string());
        Ok(())
    }

    fn trajectory(&mut self, lp: &ClosedLoop<Plant>) -> anyhow::Result<()> {
        if let Some(traj) = &lp.trajectory {
            self.write("trajectory.csv", |w, hash| {
                write_hash_comment(w, hash)?;
                traj.write_csv(w)
            })?;
        }
        Ok(())
    }

    fn finish(mut self) -> anyhow::Result<Vec<String>> {
        self.manifest.files.push("manifest.json".into());
        let path = self.dir.join("manifest.json");
        fs::write(&path, self.manifest.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest.files)
    }
}

fn closed_loop(cfg: &RunConfig, plant: Plant, state: Vec<f64>, mu: f64) -> ClosedLoop<Plant> {
    let mut lp = ClosedLoop::new(plant, state, mu);
    lp.record_trajectory(cfg.log_trajectory);
    lp
}

/// Up- and down-sweep with the control off. The second leg continues from
/// the state the first one ended in, unless the first diverged.
pub fn cmd_sweep(cfg: &RunConfig) -> anyhow::Result<Vec<String>> {
    let schedule = cfg.sweep.schedule();
    schedule.validate(window_time(cfg))?;
    let mut plant = Plant::build(cfg)?;
    let state = plant.rest_state(schedule.mu_start)?;
    let mut lp = closed_loop(cfg, plant, state, schedule.mu_start);
    let st = stationarity(cfg, lp.dt);
    let first = run_sweep(&mut lp, &schedule, st.n_min, st.divergence_bound);
    let back = schedule.reversed();
    if first.last().is_some_and(|r| r.diverged) {
        log::warn!("first sweep leg diverged; restarting from rest at mu = {}", back.mu_start);
        lp.state = lp.system.rest_state(back.mu_start)?;
    }
    let second = run_sweep(&mut lp, &back, st.n_min, st.divergence_bound);
    let (up, down): (&[SweepRecord], &[SweepRecord]) = match schedule.direction() {
        cbc_core::continuation::Direction::Up => (&first, &second),
        cbc_core::continuation::Direction::Down => (&second, &first),
    };
    let mut out = Output::new(cfg, "sweep")?;
    out.write("sweep_up.csv", |w, h| write_sweep_csv(w, up, h))?;
    out.write("sweep_down.csv", |w, h| write_sweep_csv(w, down, h))?;
    out.trajectory(&lp)?;
    out.finish()
}

/// Starting point of a branch, the plant state to begin from, and whether
/// the start lies on a stable segment.
struct Start {
    start: BranchStart,
    state: Vec<f64>,
    stable: bool,
}

fn state_near(plant: &mut Plant, mu: f64, y: f64) -> anyhow::Result<Vec<f64>> {
    Ok(match plant {
        Plant::Fold(_) => vec![y],
        Plant::SlowFast(_) => vec![y, y],
        Plant::Pitchfork(_) => vec![y, 0.0],
        Plant::Crowd(_) => plant.rest_state(mu)?,
    })
}

fn resolve_start(cfg: &RunConfig, plant: &mut Plant) -> anyhow::Result<Start> {
    let b = &cfg.branch;
    let washout = cfg.law == LawKind::Washout;
    let explicit = match (b.prev, b.curr, b.direction) {
        (Some(p), Some(c), None) => Some(BranchStart::Seeds {
            prev: (p[0], p[1]),
            curr: (c[0], c[1]),
        }),
        (None, Some(c), Some(d)) => Some(BranchStart::Direction {
            curr: (c[0], c[1]),
            direction: (d[0], d[1]),
        }),
        (None, None, None) => None,
        _ => bail!("branch start needs either prev and curr, or curr and direction"),
    };
    if let Some(start) = explicit {
        let curr = match start {
            BranchStart::Seeds { curr, .. } | BranchStart::Direction { curr, .. } => curr,
        };
        let state = state_near(plant, curr.0, curr.1)?;
        return Ok(Start {
            start,
            state,
            stable: b.start_stable.unwrap_or(!washout),
        });
    }
    let upper = |mu: f64| mu.sqrt();
    let start = match cfg.system {
        SystemKind::Fold | SystemKind::Slowfast => {
            let s = if washout { -1.0 } else { 1.0 };
            BranchStart::Seeds {
                prev: (1.1, s * upper(1.1)),
                curr: (1.0, s),
            }
        }
        SystemKind::Pitchfork => BranchStart::Direction {
            curr: (-0.5, 0.0),
            direction: (1.0, 0.0),
        },
        SystemKind::Crowd => return crowd_anchor(cfg, plant),
    };
    let curr = match start {
        BranchStart::Seeds { curr, .. } | BranchStart::Direction { curr, .. } => curr,
    };
    Ok(Start {
        start,
        state: state_near(plant, curr.0, curr.1)?,
        stable: b.start_stable.unwrap_or(!washout),
    })
}

/// Anchors a crowd branch on the last two holds of an up-sweep that ends
/// at `branch.anchor_mu`.
fn crowd_anchor(cfg: &RunConfig, plant: &mut Plant) -> anyhow::Result<Start> {
    let mut schedule = cfg.sweep.schedule();
    schedule.mu_end = cfg.branch.anchor_mu.unwrap_or(-0.3);
    schedule.validate(window_time(cfg))?;
    let state = plant.rest_state(schedule.mu_start)?;
    let mut lp = ClosedLoop::new(plant.clone(), state, schedule.mu_start);
    let st = stationarity(cfg, lp.dt);
    let recs = run_sweep(&mut lp, &schedule, st.n_min, st.divergence_bound);
    if recs.len() < 2 || recs.iter().any(|r| r.diverged) {
        bail!("anchoring sweep produced no usable pair of points");
    }
    let (p, c) = (&recs[recs.len() - 2], &recs[recs.len() - 1]);
    log::info!("anchored at ({}, {}) and ({}, {})", p.mu, p.y_mean, c.mu, c.y_mean);
    *plant = lp.system;
    Ok(Start {
        start: BranchStart::Seeds {
            prev: (p.mu, p.y_mean),
            curr: (c.mu, c.y_mean),
        },
        state: lp.state,
        stable: cfg.branch.start_stable.unwrap_or(true),
    })
}

fn mu_bounds(cfg: &RunConfig) -> (f64, f64) {
    let (lo, hi) = match cfg.system {
        SystemKind::Crowd => (-1.2, 1.2),
        _ => (-1.0, 1.0),
    };
    (cfg.branch.mu_min.unwrap_or(lo), cfg.branch.mu_max.unwrap_or(hi))
}

pub fn zie_settings(cfg: &RunConfig, st: StationaritySettings) -> ZieBranchSettings {
    let z = &cfg.zie;
    ZieBranchSettings {
        a: if cfg.law == LawKind::Param { 0.0 } else { z.a },
        sigma: z.sigma,
        rule: SecantGainRule {
            k_y_magnitude: z.k_y.abs(),
            k_mu_cap: z.k_mu_cap,
        },
        h: z.h,
        max_points: z.max_points,
        mu_bounds: mu_bounds(cfg),
        max_halvings: z.max_halvings,
        runaway: Some(z.runaway(cfg.system)),
        stationarity: st,
        check_controllability: z.check_controllability,
    }
}

/// Continuation of one branch with the configured law.
pub fn cmd_cbc(cfg: &RunConfig) -> anyhow::Result<Vec<String>> {
    let (branch, lp) = run_branch(cfg)?;
    log::info!("branch ended: {} ({} points)", branch.termination, branch.points.len());
    let mut out = Output::new(cfg, "cbc")?;
    out.write("branch.csv", |w, h| write_branch_csv(w, &branch, h))?;
    out.trajectory(&lp)?;
    out.finish()
}

/// Runs the continuation and tags stability; exposed for tests.
pub fn run_branch(cfg: &RunConfig) -> anyhow::Result<(Branch, ClosedLoop<Plant>)> {
    let mut plant = Plant::build(cfg)?;
    let start = resolve_start(cfg, &mut plant)?;
    let curr = match start.start {
        BranchStart::Seeds { curr, .. } | BranchStart::Direction { curr, .. } => curr,
    };
    let mut lp = closed_loop(cfg, plant, start.state, curr.0);
    let st = stationarity(cfg, lp.dt);
    let mut branch = match cfg.law {
        LawKind::Washout => {
            let w = &cfg.washout;
            let settings = WashoutBranchSettings {
                k_st: w.k_st,
                k_wo: w.k_wo,
                h: w.h,
                max_points: w.max_points,
                mu_bounds: mu_bounds(cfg),
                max_consecutive_failures: w.max_consecutive_failures,
                stationarity: st,
            };
            cbc_washout_branch(&mut lp, start.start, &settings)?
        }
        LawKind::Zie | LawKind::Param => cbc_zie_branch(&mut lp, start.start, &zie_settings(cfg, st))?,
    };
    tag_branch(&mut branch, Some(0), 0.0);
    if !start.stable {
        for p in &mut branch.points {
            p.stability = p.stability.opposite();
        }
    }
    Ok((branch, lp))
}

/// Single-point stabilization at the configured reference.
pub fn cmd_stabilize(cfg: &RunConfig) -> anyhow::Result<Vec<String>> {
    let s = &cfg.stabilize;
    let mut plant = Plant::build(cfg)?;
    let state = state_near(&mut plant, s.mu_ref, s.y_ref + s.offset)?;
    let mut lp = closed_loop(cfg, plant, state, s.mu_ref);
    let st = stationarity(cfg, lp.dt);
    let outcome = match cfg.law {
        LawKind::Washout => washout_point(&mut lp, s.mu_ref, s.y_ref, cfg.washout.k_st, cfg.washout.k_wo, &st)?,
        LawKind::Zie | LawKind::Param => {
            let a = if cfg.law == LawKind::Param { 0.0 } else { cfg.zie.a };
            let (k_y, k_mu) = s.gains(cfg.law);
            lp.law = ControlLaw::Zie(ZieGains::new(a, k_y, k_mu).with_reference(s.mu_ref, s.y_ref));
            run_until_stationary(&mut lp, &st, None)
        }
    };
    let law = match cfg.law {
        LawKind::Washout => "washout",
        LawKind::Param => "param",
        LawKind::Zie => "zie",
    };
    let mut out = Output::new(cfg, "stabilize")?;
    out.write("point.csv", |w, h| {
        write_hash_comment(w, h)?;
        writeln!(w, "law,outcome,mu,y,residual_std,mu_std,u_mean,elapsed")?;
        match &outcome {
            RunOutcome::Settled(p) => writeln!(
                w,
                "{law},settled,{},{},{},{},{},{}",
                p.mu, p.y, p.residual_std, p.mu_std, p.u_mean, p.elapsed
            ),
            RunOutcome::Timeout { elapsed, last_std } => {
                writeln!(w, "{law},timeout,{},{},{last_std},,,{elapsed}", lp.mu, lp.last_output())
            }
            RunOutcome::Diverged { elapsed, .. } => writeln!(w, "{law},diverged,,,,,,{elapsed}"),
        }
    })?;
    out.trajectory(&lp)?;
    out.finish()
}

/// Controllability verdicts of a finite-difference linearization.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub mu: f64,
    pub x: Vec<f64>,
    pub a: f64,
    pub washout: bool,
    pub param: bool,
    pub zie: bool,
    /// Pencil `R_mu + a f_x R_u` in the input weight `a`.
    pub pencil: PencilReport,
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "controllable"
    } else {
        "NOT controllable"
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "linearization at mu = {}, x = {:?}", self.mu, self.x)?;
        writeln!(f, "washout: {}", verdict(self.washout))?;
        writeln!(f, "parameter: {}", verdict(self.param))?;
        writeln!(f, "ZIE: {} (a = {})", verdict(self.zie), self.a)?;
        let p = &self.pencil;
        write!(f, "pencil: {}", if p.regular { "regular" } else { "singular" })?;
        writeln!(f, ", best sample a = {}", p.sample_a)?;
        for (lambda, det) in &p.probe_dets {
            writeln!(f, "  det at a = {lambda}: {det:e}")?;
        }
        Ok(())
    }
}

pub fn cmd_check(cfg: &RunConfig) -> anyhow::Result<CheckReport> {
    if cfg.system == SystemKind::Crowd {
        bail!("check needs a low-dimensional system; the crowd has no usable finite-difference linearization");
    }
    let c = &cfg.check;
    let mut plant = Plant::build(cfg)?;
    let x = if c.x.is_empty() { plant.rest_state(c.mu)? } else { c.x.clone() };
    let dim = cbc_core::dynsys::ControlledSystem::state_dim(&plant);
    if x.len() != dim {
        bail!("check.x has {} entries, the {} system has {dim} states", x.len(), cfg.system.name());
    }
    let lin = fd_linearization(&plant, &x, c.mu, c.fd_step)?;
    let a = cfg.zie.a;
    let r_u = controllability_matrix(&lin.f_x, &lin.f_u)?;
    let r_mu = controllability_matrix(&lin.f_x, &lin.f_mu)?;
    let pencil = pencil_regular(&r_mu, &lin.f_x.try_mul(&r_u)?, c.rank_tol)?;
    Ok(CheckReport {
        mu: c.mu,
        x,
        a,
        washout: washout_controllable(&lin.f_x, &lin.f_u, c.rank_tol)?,
        param: param_controllable(&lin.f_x, &lin.f_mu, c.rank_tol)?,
        zie: zie_controllable(&lin.f_x, &lin.f_mu, &lin.f_u, a, c.rank_tol)?,
        pencil,
    })
}
