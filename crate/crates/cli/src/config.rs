//! Run configuration. Every key has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cbc_core::continuation::SweepSchedule;
use cbc_core::dynsys::RunawayRule;
use cbc_pedsim::{FluxParams, InputBox, PedParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Fold,
    Pitchfork,
    Slowfast,
    Crowd,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Fold => "fold",
            SystemKind::Pitchfork => "pitchfork",
            SystemKind::Slowfast => "slowfast",
            SystemKind::Crowd => "crowd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    Washout,
    Param,
    Zie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemKind,
    pub law: LawKind,
    pub seed: u64,
    pub out: PathBuf,
    pub log_trajectory: bool,
    pub crowd: PedParams,
    pub flux: FluxParams,
    pub input: InputBox,
    pub fold: FoldConfig,
    pub pitchfork: PitchforkConfig,
    pub slowfast: SlowFastConfig,
    pub sweep: SweepConfig,
    pub stationarity: StationarityConfig,
    pub washout: WashoutConfig,
    pub zie: ZieConfig,
    pub branch: BranchConfig,
    pub stabilize: StabilizeConfig,
    pub check: CheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Crowd,
            law: LawKind::Zie,
            seed: 1,
            out: PathBuf::from("out"),
            log_trajectory: false,
            crowd: PedParams::default(),
            flux: FluxParams::default(),
            input: InputBox::default(),
            fold: FoldConfig::default(),
            pitchfork: PitchforkConfig::default(),
            slowfast: SlowFastConfig::default(),
            sweep: SweepConfig::default(),
            stationarity: StationarityConfig::default(),
            washout: WashoutConfig::default(),
            zie: ZieConfig::default(),
            branch: BranchConfig::default(),
            stabilize: StabilizeConfig::default(),
            check: CheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldConfig {
    /// Standard deviation of additive output noise.
    pub noise: f64,
}

impl Default for FoldConfig {
    fn default() -> Self {
        Self { noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PitchforkConfig {
    /// Coupling of the symmetry-enforcing integral state.
    pub a_wo: f64,
}

impl Default for PitchforkConfig {
    fn default() -> Self {
        Self { a_wo: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlowFastConfig {
    pub eps: f64,
    pub noise: f64,
}

impl Default for SlowFastConfig {
    fn default() -> Self {
        Self { eps: 0.01, noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mu_start: f64,
    pub mu_end: f64,
    pub step: f64,
    pub hold_time: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let s = SweepSchedule::default();
        Self {
            mu_start: s.mu_start,
            mu_end: s.mu_end,
            step: s.step,
            hold_time: s.hold_time,
        }
    }
}

impl SweepConfig {
    pub fn schedule(&self) -> SweepSchedule {
        SweepSchedule {
            mu_start: self.mu_start,
            mu_end: self.mu_end,
            step: self.step,
            hold_time: self.hold_time,
        }
    }
}

/// Unset entries take system-specific defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarityConfig {
    /// Length of the acceptance window in seconds.
    pub window_time: Option<f64>,
    pub tol_std: Option<f64>,
    pub tol_mu_std: Option<f64>,
    pub max_time: Option<f64>,
    pub divergence_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WashoutConfig {
    pub k_st: f64,
    pub k_wo: f64,
    pub h: f64,
    pub max_points: usize,
    pub max_consecutive_failures: usize,
}

impl Default for WashoutConfig {
    fn default() -> Self {
        Self {
            k_st: -5.0,
            k_wo: 0.1,
            h: 0.1,
            max_points: 100,
            max_consecutive_failures: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZieConfig {
    /// Weight of the direct input; the `param` law forces it to zero.
    pub a: f64,
    pub sigma: i8,
    pub k_y: f64,
    pub k_mu_cap: f64,
    pub h: f64,
    pub max_points: usize,
    pub max_halvings: usize,
    pub runaway_radius: f64,
    /// Unset values take system-specific defaults.
    pub runaway_smoothing: Option<usize>,
    pub runaway_grace: Option<f64>,
    pub check_controllability: bool,
}

impl Default for ZieConfig {
    fn default() -> Self {
        Self {
            a: 50.0,
            sigma: -1,
            k_y: 0.2,
            k_mu_cap: 10.0,
            h: 0.1,
            max_points: 200,
            max_halvings: 3,
            runaway_radius: 0.2,
            runaway_smoothing: None,
            runaway_grace: None,
            check_controllability: true,
        }
    }
}

impl ZieConfig {
    pub fn runaway(&self, system: SystemKind) -> RunawayRule {
        let base = RunawayRule::default();
        let (smoothing, grace) = match system {
            // The crowd reacts to a wrong gain sign within a second or two.
            SystemKind::Crowd => (5, 1.0),
            _ => (base.smoothing, base.grace),
        };
        RunawayRule {
            radius: self.runaway_radius,
            smoothing: self.runaway_smoothing.unwrap_or(smoothing),
            grace: self.runaway_grace.unwrap_or(grace),
        }
    }
}

/// Where a branch starts. Without explicit points the system default is
/// used; for the crowd that is a short up-sweep ending at `anchor_mu`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchConfig {
    pub prev: Option<[f64; 2]>,
    pub curr: Option<[f64; 2]>,
    pub direction: Option<[f64; 2]>,
    pub anchor_mu: Option<f64>,
    /// Whether the starting point lies on a stable segment; used to tag
    /// the stability of the accepted points.
    pub start_stable: Option<bool>,
    pub mu_min: Option<f64>,
    pub mu_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizeConfig {
    pub mu_ref: f64,
    pub y_ref: f64,
    /// Feedback gains of the ZIE and parameter laws. Unset gains take
    /// values that stabilize the default reference under the chosen law.
    pub k_st_y: Option<f64>,
    pub k_st_mu: Option<f64>,
    /// Initial displacement of the output from `y_ref`.
    pub offset: f64,
}

impl Default for StabilizeConfig {
    fn default() -> Self {
        Self {
            mu_ref: 0.25,
            y_ref: -0.5,
            k_st_y: None,
            k_st_mu: None,
            offset: 0.05,
        }
    }
}

impl StabilizeConfig {
    pub fn gains(&self, law: LawKind) -> (f64, f64) {
        let (k_y, k_mu) = match law {
            LawKind::Param => (-3.5, -2.0),
            _ => (-0.2, 0.2),
        };
        (self.k_st_y.unwrap_or(k_y), self.k_st_mu.unwrap_or(k_mu))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub mu: f64,
    /// State at which to linearize; empty means the system's rest state.
    pub x: Vec<f64>,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Relative rank tolerance; must exceed the finite-difference error.
    pub rank_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            mu: 0.0,
            x: Vec::new(),
            fd_step: 1e-4,
            rank_tol: 1e-6,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {}", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.crowd.validate().map_err(anyhow::Error::msg)?;
        if self.fold.noise < 0.0 || self.slowfast.noise < 0.0 {
            bail!("noise amplitudes must be non-negative");
        }
        if !(self.slowfast.eps > 0.0) {
            bail!("slowfast.eps must be positive");
        }
        if self.washout.k_wo == 0.0 {
            bail!("washout.k_wo must be nonzero");
        }
        if !(self.zie.h > 0.0 && self.washout.h > 0.0) {
            bail!("continuation step h must be positive");
        }
        if self.zie.sigma != 1 && self.zie.sigma != -1 {
            bail!("zie.sigma must be 1 or -1");
        }
        if !(self.check.fd_step > 0.0) {
            bail!("check.fd_step must be positive");
        }
        Ok(())
    }

    /// Canonical text used for the config hash. The output directory is
    /// left out so that a rerun elsewhere produces identical files.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        toml::to_string(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml("[sweep]\nhold_tme = 3\n").unwrap_err();
        assert!(format!("{err:#}").contains("hold_tme"), "{err:#}");
        let err = RunConfig::from_toml("sead = 3\n").unwrap_err();
        assert!(format!("{err:#}").contains("sead"));
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::from_toml("system = \"fold\"\nseed = 9\n[crowd]\nlemming = 0.5\n[zie]\na = 5.0\n").unwrap();
        assert_eq!(cfg.system, SystemKind::Fold);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.crowd.lemming, 0.5);
        assert_eq!(cfg.crowd.n_pedestrians, 100);
        assert_eq!(cfg.zie.a, 5.0);
        assert!(RunConfig::from_toml("[crowd]\nlemming = 2.0\n").is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = RunConfig {
            out: PathBuf::new(),
            ..Default::default()
        };
        assert_eq!(RunConfig::from_toml(&cfg.canonical()).unwrap(), cfg);
    }
}
