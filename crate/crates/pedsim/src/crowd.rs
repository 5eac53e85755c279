//! The crowd as a controlled dynamical system.

use std::io::Write;

use cbc_core::dynsys::ControlledSystem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flux::{box_counts, flux_phi, CountAverage};
use crate::forces::accelerations;
use crate::geometry::{Obstacle, Vec2};
use crate::params::{FluxParams, InputBox, PedParams};
use crate::PedError;

/// Coordinates stored per pedestrian: `x, y, vx, vy`.
pub const STRIDE: usize = 4;

/// Minimum spacing used when scattering the initial crowd.
const PLACEMENT_SPACING: f64 = 0.6;
const PLACEMENT_MARGIN: f64 = 0.5;
/// Entry spacing as a fraction of the pedestrian repulsion range.
const ENTRY_CLEARANCE: f64 = 0.5;
const ENTRY_DRAWS: usize = 50;

pub fn unpack(state: &[f64]) -> (Vec<Vec2>, Vec<Vec2>) {
    state
        .chunks_exact(STRIDE)
        .map(|c| (Vec2::new(c[0], c[1]), Vec2::new(c[2], c[3])))
        .unzip()
}

/// Reflect a crowd state across the corridor center line.
pub fn mirror_state(state: &[f64]) -> Vec<f64> {
    let mut out = state.to_vec();
    for c in out.chunks_exact_mut(STRIDE) {
        c[0] = -c[0];
        c[2] = -c[2];
    }
    out
}

#[derive(Debug, Clone)]
pub struct CrowdSystem {
    pub params: PedParams,
    pub flux: FluxParams,
    pub input: InputBox,
    rng: ChaCha8Rng,
    counts: CountAverage,
    dt: f64,
    reinjected: u64,
}

impl CrowdSystem {
    pub fn new(params: PedParams, flux: FluxParams, input: InputBox, seed: u64) -> Result<Self, PedError> {
        params.validate().map_err(PedError::InvalidInput)?;
        if !(flux.d > 0.0) {
            return Err(PedError::InvalidInput("flux length scale d must be positive".into()));
        }
        let dt = cbc_core::dynsys::DEFAULT_DT;
        Ok(Self {
            counts: CountAverage::new(flux.tau_max, dt),
            params,
            flux,
            input,
            rng: ChaCha8Rng::seed_from_u64(seed),
            dt,
            reinjected: 0,
        })
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self::new(PedParams::default(), FluxParams::default(), InputBox::default(), seed)
            .expect("default parameters are valid")
    }

    /// Match the count window to a non-default integration step.
    pub fn set_dt(&mut self, dt: f64) {
        self.dt = dt;
        self.counts = CountAverage::new(self.flux.tau_max, dt);
    }

    pub fn n(&self) -> usize {
        self.params.n_pedestrians
    }

    pub fn reinjected(&self) -> u64 {
        self.reinjected
    }

    /// Scatter the crowd over the corridor, keeping clear of the walls,
    /// the obstacle and each other. Everyone starts walking downstream.
    pub fn initial_state(&mut self, mu: f64) -> Result<Vec<f64>, PedError> {
        let p = &self.params;
        let obstacle = Obstacle::new(mu, p);
        let half_w = p.corridor_width / 2.0 - PLACEMENT_MARGIN;
        let half_l = p.corridor_length / 2.0;
        let mut placed: Vec<Vec2> = Vec::with_capacity(p.n_pedestrians);
        let mut attempts = 0usize;
        while placed.len() < p.n_pedestrians {
            attempts += 1;
            if attempts > 1_000_000 {
                return Err(PedError::InvalidInput("corridor too crowded to place pedestrians".into()));
            }
            let q = Vec2::new(
                self.rng.gen_range(-half_w..=half_w),
                self.rng.gen_range(-half_l..=half_l),
            );
            let (c, inside) = obstacle.closest_point(q);
            if inside || (q - c).norm() < PLACEMENT_MARGIN {
                continue;
            }
            if placed.iter().any(|o| (*o - q).norm() < PLACEMENT_SPACING) {
                continue;
            }
            placed.push(q);
        }
        let v = p.target_speed;
        Ok(placed.iter().flat_map(|q| [q.x, q.y, 0.0, v]).collect())
    }

    /// Trailing average of the count difference.
    pub fn delta_phi(&self) -> f64 {
        self.counts.value()
    }

    pub fn phi(&self, state: &[f64]) -> f64 {
        let (pos, vel) = unpack(state);
        flux_phi(&pos, &vel, &self.flux)
    }

    pub fn write_snapshot<W: Write>(&self, state: &[f64], mut w: W) -> std::io::Result<()> {
        writeln!(w, "id,x,y,vx,vy")?;
        for (id, c) in state.chunks_exact(STRIDE).enumerate() {
            writeln!(w, "{id},{},{},{},{}", c[0], c[1], c[2], c[3])?;
        }
        Ok(())
    }

    fn reinject(&mut self, state: &mut [f64]) {
        let exit = self.params.corridor_length / 2.0;
        for i in 0..state.len() / STRIDE {
            if state[i * STRIDE + 1] <= exit {
                continue;
            }
            let x = self.entry_position(state, i);
            let c = &mut state[i * STRIDE..(i + 1) * STRIDE];
            c[0] = x;
            c[1] = -exit;
            c[2] = 0.0;
            c[3] = self.params.target_speed;
            self.reinjected += 1;
        }
    }

    /// Uniform draw on the entry strip, redrawn while it lands on top of
    /// someone already there. Falls back to the roomiest candidate.
    fn entry_position(&mut self, state: &[f64], skip: usize) -> f64 {
        let entry = Vec2::new(0.0, -self.params.corridor_length / 2.0);
        let spread = self.params.entry_half_width;
        let clearance = ENTRY_CLEARANCE * self.params.ped_range;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for _ in 0..ENTRY_DRAWS {
            let x = self.rng.gen_range(-spread..=spread);
            let q = Vec2::new(x, entry.y);
            let gap = state
                .chunks_exact(STRIDE)
                .enumerate()
                .filter(|(j, _)| *j != skip)
                .map(|(_, c)| (Vec2::new(c[0], c[1]) - q).norm())
                .fold(f64::INFINITY, f64::min);
            if gap >= clearance {
                return x;
            }
            if gap > best.0 {
                best = (gap, x);
            }
        }
        log::debug!("crowded entry, nearest neighbor at {:.3} m", best.0);
        best.1
    }
}

impl ControlledSystem for CrowdSystem {
    fn state_dim(&self) -> usize {
        STRIDE * self.params.n_pedestrians
    }

    fn rhs(&self, state: &[f64], mu: f64, u: f64, dxdt: &mut [f64]) {
        let (pos, vel) = unpack(state);
        let mut acc = vec![Vec2::ZERO; pos.len()];
        if accelerations(&pos, &vel, mu, u, &self.params, &self.input, &mut acc).is_err() {
            dxdt.fill(f64::NAN);
            return;
        }
        for ((d, v), a) in dxdt.chunks_exact_mut(STRIDE).zip(&vel).zip(&acc) {
            d[0] = v.x;
            d[1] = v.y;
            d[2] = a.x;
            d[3] = a.y;
        }
    }

    fn output(&mut self, state: &[f64]) -> f64 {
        self.phi(state)
    }

    fn post_step(&mut self, state: &mut [f64], mu: f64) {
        self.reinject(state);
        let (pos, _) = unpack(state);
        let (plus, minus) = box_counts(&pos, mu, &self.flux, &self.params);
        self.counts.push(plus, minus);
    }

    fn aux_output(&self) -> Option<f64> {
        Some(self.delta_phi())
    }

    fn recommended_dt(&self) -> f64 {
        self.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cbc_core::dynsys::{rk4_step, Rk4Workspace};

    #[test]
    fn exit_is_reinjected_near_center_line() {
        let mut sys = CrowdSystem::with_defaults(3);
        let mut state = sys.initial_state(0.0).unwrap();
        state[1] = 10.01;
        state[0] = 2.0;
        sys.post_step(&mut state, 0.0);
        assert_eq!(state[1], -10.0);
        assert!(state[0].abs() <= 0.5);
        assert_eq!(&state[2..4], &[0.0, 1.34]);
        assert_eq!(state.len(), 400);
        assert_eq!(sys.reinjected(), 1);
    }

    #[test]
    fn no_exit_means_plain_step() {
        let mut sys = CrowdSystem::with_defaults(5);
        let mut state = sys.initial_state(0.0).unwrap();
        let mut ws = Rk4Workspace::new(state.len());
        rk4_step(&sys, &mut state, 0.0, 0.0, 0.1, &mut ws).unwrap();
        let before = state.clone();
        if state.chunks_exact(STRIDE).all(|c| c[1] <= 10.0) {
            sys.post_step(&mut state, 0.0);
            assert_eq!(state, before);
        }
    }

    #[test]
    fn initial_crowd_is_spread_out() {
        let mut sys = CrowdSystem::with_defaults(11);
        let state = sys.initial_state(-1.2).unwrap();
        let (pos, _) = unpack(&state);
        let obs = Obstacle::new(-1.2, &sys.params);
        for (i, p) in pos.iter().enumerate() {
            assert!(p.x.abs() <= 4.5 && p.y.abs() <= 10.0);
            assert!(!obs.contains(*p));
            for q in &pos[i + 1..] {
                assert!((*p - *q).norm() >= PLACEMENT_SPACING);
            }
        }
    }

    #[test]
    fn snapshot_format() {
        let mut sys = CrowdSystem::with_defaults(1);
        let state = sys.initial_state(0.0).unwrap();
        let mut buf = Vec::new();
        sys.write_snapshot(&state, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("id,x,y,vx,vy"));
        assert_eq!(lines.count(), 100);
    }
}
