//! One type for every simulated system the front-end can drive.

use anyhow::Context;
use cbc_core::dynsys::{ControlledSystem, Linearization};
use cbc_core::normalforms::{FoldSystem, OutputNoise, PitchforkSymSystem, SlowFastSystem};
use cbc_pedsim::CrowdSystem;

use crate::config::{RunConfig, SystemKind};

#[derive(Debug, Clone)]
pub enum Plant {
    Fold(FoldSystem),
    Pitchfork(PitchforkSymSystem),
    SlowFast(SlowFastSystem),
    Crowd(Box<CrowdSystem>),
}

impl Plant {
    pub fn build(cfg: &RunConfig) -> anyhow::Result<Self> {
        Ok(match cfg.system {
            SystemKind::Fold => Plant::Fold(FoldSystem::with_noise(cfg.fold.noise, cfg.seed)),
            SystemKind::Pitchfork => Plant::Pitchfork(PitchforkSymSystem::new(cfg.pitchfork.a_wo)),
            SystemKind::Slowfast => {
                let mut sys = SlowFastSystem::new(cfg.slowfast.eps);
                sys.noise = OutputNoise::new(cfg.slowfast.noise, cfg.seed);
                Plant::SlowFast(sys)
            }
            SystemKind::Crowd => {
                let sys = CrowdSystem::new(cfg.crowd.clone(), cfg.flux.clone(), cfg.input.clone(), cfg.seed)
                    .context("crowd parameters")?;
                Plant::Crowd(Box::new(sys))
            }
        })
    }

    /// A starting state near the system's resting configuration at `mu`.
    /// For the fold and slow-fast systems that is the stable equilibrium
    /// when one exists.
    pub fn rest_state(&mut self, mu: f64) -> anyhow::Result<Vec<f64>> {
        let upper = mu.max(0.0).sqrt();
        Ok(match self {
            Plant::Fold(_) => vec![upper],
            Plant::Pitchfork(_) => vec![0.0, 0.0],
            Plant::SlowFast(_) => vec![upper, upper],
            Plant::Crowd(c) => c.initial_state(mu).context("placing pedestrians")?,
        })
    }

    pub fn crowd(&self) -> Option<&CrowdSystem> {
        match self {
            Plant::Crowd(c) => Some(c),
            _ => None,
        }
    }
}

macro_rules! dispatch {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            Plant::Fold($s) => $body,
            Plant::Pitchfork($s) => $body,
            Plant::SlowFast($s) => $body,
            Plant::Crowd($s) => $body,
        }
    };
}

impl ControlledSystem for Plant {
    fn state_dim(&self) -> usize {
        dispatch!(self, s => s.state_dim())
    }

    fn rhs(&self, state: &[f64], mu: f64, u: f64, dxdt: &mut [f64]) {
        dispatch!(self, s => s.rhs(state, mu, u, dxdt))
    }

    fn output(&mut self, state: &[f64]) -> f64 {
        dispatch!(self, s => s.output(state))
    }

    fn post_step(&mut self, state: &mut [f64], mu: f64) {
        dispatch!(self, s => s.post_step(state, mu))
    }

    fn aux_output(&self) -> Option<f64> {
        dispatch!(self, s => s.aux_output())
    }

    fn recommended_dt(&self) -> f64 {
        dispatch!(self, s => s.recommended_dt())
    }

    fn linearization(&self, state: &[f64], mu: f64) -> Option<Linearization> {
        dispatch!(self, s => s.linearization(state, mu))
    }
}
